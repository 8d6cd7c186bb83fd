#include "hiersfl/harness.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>

#include "json.hpp"

#include "hiersfl/errors.hpp"
#include "hiersfl/rng.hpp"

namespace hiersfl {

namespace {

std::string format_double(double v) {
    char buf[64];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    (void)ec;
    return std::string(buf, ptr);
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError(path + ": cannot open for writing");
    out << content;
    if (!out) throw InputError(path + ": write failed");
}

size_t holdout_samples(const ExperimentConfig& cfg) {
    return cfg.layer_dims.back() * cfg.samples_per_label;
}

}  // namespace

LayerStack stack_from_dims(const std::vector<size_t>& dims) { return LayerStack::dense(dims); }

size_t synthetic_auto_samples(const ExperimentConfig& cfg) {
    size_t classes = cfg.layer_dims.back();
    std::vector<size_t> slots(classes, 0);
    for (size_t k = 0; k < cfg.num_clients; ++k) {
        for (size_t j = 0; j < cfg.labels_per_client; ++j) {
            ++slots[(k * cfg.labels_per_client + j) % classes];
        }
    }
    size_t busiest = *std::max_element(slots.begin(), slots.end());
    return classes * busiest * cfg.samples_per_label;
}

Dataset build_dataset(const ExperimentConfig& cfg) {
    if (cfg.dataset == "synthetic") {
        size_t n = cfg.synthetic_samples != 0 ? cfg.synthetic_samples
                                              : synthetic_auto_samples(cfg);
        return generate_synthetic(cfg.seed, n, cfg.layer_dims.front(), cfg.layer_dims.back());
    }
    Dataset ds = load_idx(cfg.idx_images, cfg.idx_labels);
    if (ds.feature_dim() != cfg.layer_dims.front()) {
        throw ConfigError("layer-dims: input dim " + std::to_string(cfg.layer_dims.front()) +
                          " does not match dataset feature dim " +
                          std::to_string(ds.feature_dim()));
    }
    if (ds.num_classes != cfg.layer_dims.back()) {
        throw ConfigError("layer-dims: output dim " + std::to_string(cfg.layer_dims.back()) +
                          " does not match dataset class count " +
                          std::to_string(ds.num_classes));
    }
    return ds;
}

ProtocolConfig to_protocol_config(const ExperimentConfig& cfg) {
    ProtocolConfig pc;
    pc.protocol = cfg.protocol;
    pc.stack = stack_from_dims(cfg.layer_dims);
    pc.cut_index = cfg.cut_index;
    pc.topology = Topology::balanced(cfg.num_clients, cfg.num_mes);
    pc.schedule = Schedule{cfg.rounds, cfg.edge_agg_every, cfg.cloud_agg_every,
                           cfg.epochs_per_round};
    pc.learning_rate = cfg.learning_rate;
    pc.lr_decay = cfg.lr_decay;
    pc.momentum = cfg.momentum;
    pc.batch_size = cfg.batch_size;
    pc.ldp = LdpConfig{cfg.ldp == "on", cfg.clip_bound, cfg.privacy_epsilon};
    pc.edge_link = LinkModel{cfg.edge_latency_s, cfg.edge_bandwidth_bps};
    pc.cloud_link = LinkModel{cfg.cloud_latency_s, cfg.cloud_bandwidth_bps};
    pc.compute = ComputeModel{cfg.client_compute_cost, cfg.mes_compute_cost,
                              cfg.cloud_compute_cost};
    pc.seed = cfg.seed;
    return pc;
}

std::string render_rounds_csv(const std::vector<RoundRecord>& rounds) {
    std::string out = "round,protocol,train_loss,accuracy,sim_time_s,bytes_client_mes,bytes_mes_cloud\n";
    for (const RoundRecord& r : rounds) {
        out += std::to_string(r.round);
        out += ',';
        out += r.protocol;
        out += ',';
        out += format_double(r.train_loss);
        out += ',';
        out += format_double(r.accuracy);
        out += ',';
        out += format_double(r.sim_time_s);
        out += ',';
        out += std::to_string(r.bytes_client_mes);
        out += ',';
        out += std::to_string(r.bytes_mes_cloud);
        out += '\n';
    }
    return out;
}

std::string render_summary_json(const ExperimentConfig& cfg, const RunResult& rr) {
    unsigned long long bytes_edge = 0;
    unsigned long long bytes_cloud = 0;
    for (const RoundRecord& r : rr.rounds) {
        bytes_edge += r.bytes_client_mes;
        bytes_cloud += r.bytes_mes_cloud;
    }
    nlohmann::ordered_json j;
    j["protocol"] = cfg.protocol;
    j["seed"] = cfg.seed;
    j["rounds"] = rr.rounds.size();
    j["final_accuracy"] = rr.rounds.empty() ? 0.0 : rr.rounds.back().accuracy;
    j["final_train_loss"] = rr.rounds.empty() ? 0.0 : rr.rounds.back().train_loss;
    j["total_sim_time_s"] = rr.elapsed_s;
    j["total_bytes_client_mes"] = bytes_edge;
    j["total_bytes_mes_cloud"] = bytes_cloud;
    j["phase_breakdown"] = {
        {"client_compute_s", rr.phases.client_compute},
        {"mes_compute_s", rr.phases.mes_compute},
        {"cloud_compute_s", rr.phases.cloud_compute},
        {"comm_client_mes_s", rr.phases.comm_client_mes},
        {"comm_mes_cloud_s", rr.phases.comm_mes_cloud},
    };
    j["edge_agg_rounds"] = rr.edge_agg_rounds;
    j["cloud_agg_rounds"] = rr.cloud_agg_rounds;
    return j.dump(2) + "\n";
}

ExperimentArtifacts run_experiment(const ExperimentConfig& cfg) {
    validate(cfg);
    Dataset ds = build_dataset(cfg);
    PartitionPlan plan = partition_noniid(ds, cfg.num_clients, cfg.labels_per_client,
                                          cfg.samples_per_label, cfg.seed);
    ProtocolConfig pc = to_protocol_config(cfg);

    EvalSet eval;
    Dataset holdout;  // keeps holdout feature storage alive for evaluation
    if (cfg.eval_holdout == "on") {
        holdout = generate_synthetic(mix_seed(cfg.seed, seed_tags::kHoldout),
                                     holdout_samples(cfg), cfg.layer_dims.front(),
                                     cfg.layer_dims.back());
        eval.features = holdout.features;
        eval.labels = holdout.labels;
    } else {
        eval = build_eval_set(ds, plan);
    }

    ExperimentArtifacts art;
    art.run = run_protocol(pc, ds, plan, eval);

    std::filesystem::create_directories(cfg.out);
    art.rounds_csv_path = (std::filesystem::path(cfg.out) / "rounds.csv").string();
    art.summary_json_path = (std::filesystem::path(cfg.out) / "summary.json").string();
    write_file(art.rounds_csv_path, render_rounds_csv(art.run.rounds));
    write_file(art.summary_json_path, render_summary_json(cfg, art.run));
    return art;
}

std::vector<ComparisonCell> compare_protocols(
    const ExperimentConfig& base, const std::vector<std::string>& protocols,
    const std::vector<std::pair<size_t, size_t>>& topologies) {
    if (protocols.empty() || topologies.empty()) {
        throw InputError("compare: need at least one protocol and one topology");
    }
    // One dataset shared by every cell, sized for the hungriest topology.
    ExperimentConfig sizing = base;
    size_t need = base.synthetic_samples;
    if (base.dataset == "synthetic" && base.synthetic_samples == 0) {
        for (const auto& [k, m] : topologies) {
            sizing.num_clients = k;
            sizing.num_mes = m;
            need = std::max(need, synthetic_auto_samples(sizing));
        }
        sizing.synthetic_samples = need;
    }
    sizing.num_clients = base.num_clients;
    sizing.num_mes = base.num_mes;
    Dataset ds = build_dataset(sizing);

    std::vector<ComparisonCell> cells;
    for (const std::string& protocol : protocols) {
        for (const auto& [k, m] : topologies) {
            ComparisonCell cell;
            cell.protocol = protocol;
            cell.num_clients = k;
            cell.num_mes = m;
            try {
                ExperimentConfig cfg = base;
                cfg.protocol = protocol;
                cfg.num_clients = k;
                cfg.num_mes = m;
                validate(cfg);
                PartitionPlan plan = partition_noniid(ds, k, cfg.labels_per_client,
                                                      cfg.samples_per_label, cfg.seed);
                EvalSet eval = build_eval_set(ds, plan);
                RunResult rr = run_protocol(to_protocol_config(cfg), ds, plan, eval);
                cell.final_accuracy = rr.rounds.back().accuracy;
                cell.total_sim_time_s = rr.elapsed_s;
                for (const RoundRecord& r : rr.rounds) {
                    cell.total_bytes_client_mes += r.bytes_client_mes;
                    cell.total_bytes_mes_cloud += r.bytes_mes_cloud;
                }
            } catch (const Error& e) {
                std::string msg = e.what();
                std::replace(msg.begin(), msg.end(), ',', ';');
                std::replace(msg.begin(), msg.end(), '\n', ' ');
                cell.status = "error: " + msg;
            }
            cells.push_back(std::move(cell));
        }
    }
    return cells;
}

std::string render_comparison_csv(const std::vector<ComparisonCell>& cells) {
    std::string out =
        "protocol,num_clients,num_mes,final_accuracy,total_sim_time_s,"
        "total_bytes_client_mes,total_bytes_mes_cloud,status\n";
    for (const ComparisonCell& c : cells) {
        out += c.protocol;
        out += ',';
        out += std::to_string(c.num_clients);
        out += ',';
        out += std::to_string(c.num_mes);
        out += ',';
        out += format_double(c.final_accuracy);
        out += ',';
        out += format_double(c.total_sim_time_s);
        out += ',';
        out += std::to_string(c.total_bytes_client_mes);
        out += ',';
        out += std::to_string(c.total_bytes_mes_cloud);
        out += ',';
        out += c.status;
        out += '\n';
    }
    return out;
}

std::string run_comparison(const ExperimentConfig& base, const std::vector<std::string>& protocols,
                           const std::vector<std::pair<size_t, size_t>>& topologies) {
    std::vector<ComparisonCell> cells = compare_protocols(base, protocols, topologies);
    std::filesystem::create_directories(base.out);
    std::string path = (std::filesystem::path(base.out) / "comparison.csv").string();
    write_file(path, render_comparison_csv(cells));
    return path;
}

}  // namespace hiersfl
