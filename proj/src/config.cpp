#include "hiersfl/config.hpp"

#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

#include "hiersfl/errors.hpp"

namespace hiersfl {

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& value) {
    double out = 0.0;
    const char* first = value.data();
    const char* last = value.data() + value.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    if (ec != std::errc() || ptr != last) {
        throw ConfigError(key + ": expected a number, got '" + value + "'");
    }
    return out;
}

template <typename UInt>
UInt parse_uint(const std::string& key, const std::string& value) {
    UInt out = 0;
    const char* first = value.data();
    const char* last = value.data() + value.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    if (ec != std::errc() || ptr != last) {
        throw ConfigError(key + ": expected a non-negative integer, got '" + value + "'");
    }
    return out;
}

std::vector<size_t> parse_dims(const std::string& key, const std::string& value) {
    std::vector<size_t> dims;
    size_t pos = 0;
    while (pos <= value.size()) {
        size_t comma = value.find(',', pos);
        std::string part =
            trim(value.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
        if (part.empty()) throw ConfigError(key + ": empty entry in '" + value + "'");
        dims.push_back(parse_uint<size_t>(key, part));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return dims;
}

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

std::string format_dims(const std::vector<size_t>& dims) {
    std::string out;
    for (size_t i = 0; i < dims.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(dims[i]);
    }
    return out;
}

struct Field {
    std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

const std::vector<std::pair<std::string, Field>>& field_table() {
    auto str = [](std::string ExperimentConfig::* m) {
        return Field{[m](ExperimentConfig& c, const std::string&, const std::string& v) { c.*m = v; },
                     [m](const ExperimentConfig& c) { return c.*m; }};
    };
    auto num = [](double ExperimentConfig::* m) {
        return Field{[m](ExperimentConfig& c, const std::string& k, const std::string& v) {
                         c.*m = parse_double(k, v);
                     },
                     [m](const ExperimentConfig& c) { return format_double(c.*m); }};
    };
    auto count = [](size_t ExperimentConfig::* m) {
        return Field{[m](ExperimentConfig& c, const std::string& k, const std::string& v) {
                         c.*m = parse_uint<size_t>(k, v);
                     },
                     [m](const ExperimentConfig& c) { return std::to_string(c.*m); }};
    };
    static const std::vector<std::pair<std::string, Field>> table = {
        {"protocol", str(&ExperimentConfig::protocol)},
        {"dataset", str(&ExperimentConfig::dataset)},
        {"idx-images", str(&ExperimentConfig::idx_images)},
        {"idx-labels", str(&ExperimentConfig::idx_labels)},
        {"layer-dims",
         Field{[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                   c.layer_dims = parse_dims(k, v);
               },
               [](const ExperimentConfig& c) { return format_dims(c.layer_dims); }}},
        {"cut-index", count(&ExperimentConfig::cut_index)},
        {"num-clients", count(&ExperimentConfig::num_clients)},
        {"num-mes", count(&ExperimentConfig::num_mes)},
        {"rounds", count(&ExperimentConfig::rounds)},
        {"edge-agg-every", count(&ExperimentConfig::edge_agg_every)},
        {"cloud-agg-every", count(&ExperimentConfig::cloud_agg_every)},
        {"epochs-per-round", count(&ExperimentConfig::epochs_per_round)},
        {"batch-size", count(&ExperimentConfig::batch_size)},
        {"learning-rate", num(&ExperimentConfig::learning_rate)},
        {"lr-decay", num(&ExperimentConfig::lr_decay)},
        {"momentum", num(&ExperimentConfig::momentum)},
        {"ldp", str(&ExperimentConfig::ldp)},
        {"privacy-epsilon", num(&ExperimentConfig::privacy_epsilon)},
        {"clip-bound", num(&ExperimentConfig::clip_bound)},
        {"labels-per-client", count(&ExperimentConfig::labels_per_client)},
        {"samples-per-label", count(&ExperimentConfig::samples_per_label)},
        {"synthetic-samples", count(&ExperimentConfig::synthetic_samples)},
        {"eval-holdout", str(&ExperimentConfig::eval_holdout)},
        {"edge-latency-s", num(&ExperimentConfig::edge_latency_s)},
        {"edge-bandwidth-bps", num(&ExperimentConfig::edge_bandwidth_bps)},
        {"cloud-latency-s", num(&ExperimentConfig::cloud_latency_s)},
        {"cloud-bandwidth-bps", num(&ExperimentConfig::cloud_bandwidth_bps)},
        {"client-compute-cost", num(&ExperimentConfig::client_compute_cost)},
        {"mes-compute-cost", num(&ExperimentConfig::mes_compute_cost)},
        {"cloud-compute-cost", num(&ExperimentConfig::cloud_compute_cost)},
        {"seed",
         Field{[](ExperimentConfig& c, const std::string& k, const std::string& v) {
                   c.seed = parse_uint<uint64_t>(k, v);
               },
               [](const ExperimentConfig& c) { return std::to_string(c.seed); }}},
        {"out", str(&ExperimentConfig::out)},
    };
    return table;
}

const Field* find_field(const std::string& key) {
    for (const auto& [name, field] : field_table()) {
        if (name == key) return &field;
    }
    return nullptr;
}

}  // namespace

const std::vector<std::string>& config_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> out;
        for (const auto& [name, field] : field_table()) out.push_back(name);
        return out;
    }();
    return keys;
}

void apply_key(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    const Field* field = find_field(key);
    if (field == nullptr) throw ConfigError(key + ": unknown config key");
    field->set(cfg, key, value);
}

std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path + ": cannot open config file");
    std::vector<std::pair<std::string, std::string>> pairs;
    std::string line;
    size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        size_t hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        std::string stripped = trim(line);
        if (stripped.empty()) continue;
        size_t eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path + ":" + std::to_string(line_no) +
                              ": expected 'key = value', got '" + stripped + "'");
        }
        std::string key = trim(stripped.substr(0, eq));
        std::string value = trim(stripped.substr(eq + 1));
        if (key.empty()) {
            throw ConfigError(path + ":" + std::to_string(line_no) + ": missing key");
        }
        pairs.emplace_back(std::move(key), std::move(value));
    }
    return pairs;
}

ExperimentConfig assemble_config(
    const std::string& file_path, const std::vector<std::pair<std::string, std::string>>& flags) {
    ExperimentConfig cfg;
    std::vector<std::string> problems;
    if (!file_path.empty()) {
        for (const auto& [key, value] : read_config_file(file_path)) {
            try {
                apply_key(cfg, key, value);
            } catch (const ConfigError& e) {
                problems.emplace_back(e.what());
            }
        }
    }
    if (const char* env_seed = std::getenv("HIERSFL_SEED")) {
        try {
            cfg.seed = parse_uint<uint64_t>("HIERSFL_SEED", env_seed);
        } catch (const ConfigError& e) {
            problems.emplace_back(e.what());
        }
    }
    for (const auto& [key, value] : flags) {
        try {
            apply_key(cfg, key, value);
        } catch (const ConfigError& e) {
            problems.emplace_back(e.what());
        }
    }
    if (!problems.empty()) {
        std::string joined;
        for (size_t i = 0; i < problems.size(); ++i) {
            if (i) joined += "; ";
            joined += problems[i];
        }
        throw ConfigError(joined);
    }
    validate(cfg);
    return cfg;
}

void validate(const ExperimentConfig& cfg) {
    std::vector<std::string> problems;
    auto bad = [&](const std::string& msg) { problems.push_back(msg); };

    const bool split_protocol = cfg.protocol == "sfl" || cfg.protocol == "hiersfl";
    if (cfg.protocol != "fl" && cfg.protocol != "sfl" && cfg.protocol != "hfl" &&
        cfg.protocol != "hiersfl") {
        bad("protocol: must be one of fl, sfl, hfl, hiersfl, got '" + cfg.protocol + "'");
    }
    if (cfg.dataset != "synthetic" && cfg.dataset != "idx") {
        bad("dataset: must be synthetic or idx, got '" + cfg.dataset + "'");
    }
    if (cfg.dataset == "idx") {
        if (cfg.idx_images.empty()) bad("idx-images: required when dataset = idx");
        if (cfg.idx_labels.empty()) bad("idx-labels: required when dataset = idx");
    }

    if (cfg.layer_dims.size() < 2) {
        bad("layer-dims: need at least input and output dims");
    } else {
        for (size_t d : cfg.layer_dims) {
            if (d == 0) {
                bad("layer-dims: dims must be positive");
                break;
            }
        }
        if (cfg.layer_dims.back() < 2) bad("layer-dims: output dim must be >= 2 classes");
        size_t layers = cfg.layer_dims.size() - 1;
        if (split_protocol && (cfg.cut_index < 1 || cfg.cut_index >= layers)) {
            bad("cut-index: must lie in [1, " + std::to_string(layers - 1) + "] for " +
                cfg.protocol + ", got " + std::to_string(cfg.cut_index));
        }
    }

    if (cfg.num_clients == 0) bad("num-clients: must be >= 1");
    if (cfg.num_mes == 0) bad("num-mes: must be >= 1");
    if (cfg.num_clients > 0 && cfg.num_mes > 0 && cfg.num_clients < cfg.num_mes) {
        bad("num-clients: must be >= num-mes (got " + std::to_string(cfg.num_clients) + " < " +
            std::to_string(cfg.num_mes) + ")");
    }
    if (cfg.rounds == 0) bad("rounds: must be >= 1");
    if (cfg.edge_agg_every == 0) bad("edge-agg-every: must be >= 1");
    if (cfg.cloud_agg_every == 0) bad("cloud-agg-every: must be >= 1");
    if (cfg.epochs_per_round == 0) bad("epochs-per-round: must be >= 1");
    if (cfg.batch_size == 0) bad("batch-size: must be >= 1");

    if (!(cfg.learning_rate > 0.0)) bad("learning-rate: must be > 0");
    if (!(cfg.lr_decay > 0.0 && cfg.lr_decay <= 1.0)) bad("lr-decay: must lie in (0, 1]");
    if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) bad("momentum: must lie in [0, 1)");

    if (cfg.ldp != "off" && cfg.ldp != "on") {
        bad("ldp: must be off or on, got '" + cfg.ldp + "'");
    } else if (cfg.ldp == "on") {
        if (!(cfg.privacy_epsilon > 0.0)) bad("privacy-epsilon: must be > 0 when ldp = on");
        if (!(cfg.clip_bound > 0.0)) bad("clip-bound: must be > 0 when ldp = on");
    }

    size_t classes = cfg.layer_dims.empty() ? 0 : cfg.layer_dims.back();
    if (cfg.labels_per_client == 0 || (classes >= 2 && cfg.labels_per_client > classes)) {
        bad("labels-per-client: must lie in [1, " + std::to_string(classes) + "]");
    }
    if (cfg.samples_per_label == 0) bad("samples-per-label: must be >= 1");
    if (cfg.synthetic_samples != 0 && classes >= 2 && cfg.synthetic_samples % classes != 0) {
        bad("synthetic-samples: must be divisible by the " + std::to_string(classes) +
            " classes");
    }
    if (cfg.eval_holdout != "off" && cfg.eval_holdout != "on") {
        bad("eval-holdout: must be off or on, got '" + cfg.eval_holdout + "'");
    } else if (cfg.eval_holdout == "on" && cfg.dataset != "synthetic") {
        bad("eval-holdout: requires dataset = synthetic");
    }

    if (!(cfg.edge_latency_s >= 0.0)) bad("edge-latency-s: must be >= 0");
    if (!(cfg.edge_bandwidth_bps > 0.0)) bad("edge-bandwidth-bps: must be > 0");
    if (!(cfg.cloud_latency_s >= 0.0)) bad("cloud-latency-s: must be >= 0");
    if (!(cfg.cloud_bandwidth_bps > 0.0)) bad("cloud-bandwidth-bps: must be > 0");
    if (!(cfg.client_compute_cost >= 0.0)) bad("client-compute-cost: must be >= 0");
    if (!(cfg.mes_compute_cost >= 0.0)) bad("mes-compute-cost: must be >= 0");
    if (!(cfg.cloud_compute_cost >= 0.0)) bad("cloud-compute-cost: must be >= 0");
    if (cfg.out.empty()) bad("out: must not be empty");

    if (!problems.empty()) {
        std::string joined;
        for (size_t i = 0; i < problems.size(); ++i) {
            if (i) joined += "; ";
            joined += problems[i];
        }
        throw ConfigError(joined);
    }
}

std::string serialize_config(const ExperimentConfig& cfg) {
    std::string out;
    for (const auto& [name, field] : field_table()) {
        out += name;
        out += " = ";
        out += field.get(cfg);
        out += '\n';
    }
    return out;
}

}  // namespace hiersfl
