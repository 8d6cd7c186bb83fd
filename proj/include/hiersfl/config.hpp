#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace hiersfl {

/// Full experiment description. Field names map 1:1 to kebab-case config
/// keys and CLI flags (num_clients <-> num-clients).
struct ExperimentConfig {
    std::string protocol = "hiersfl";  // fl | sfl | hfl | hiersfl
    std::string dataset = "synthetic";  // synthetic | idx
    std::string idx_images;
    std::string idx_labels;
    std::vector<size_t> layer_dims = {784, 64, 32, 10};
    size_t cut_index = 1;
    size_t num_clients = 20;
    size_t num_mes = 4;
    size_t rounds = 20;
    size_t edge_agg_every = 5;    // p1
    size_t cloud_agg_every = 2;   // p2, in units of edge aggregations
    size_t epochs_per_round = 1;  // E
    size_t batch_size = 32;
    double learning_rate = 0.01;
    double lr_decay = 0.995;
    double momentum = 0.5;
    std::string ldp = "off";  // off | on
    double privacy_epsilon = 0.5;
    double clip_bound = 0.5;
    size_t labels_per_client = 2;
    size_t samples_per_label = 400;
    size_t synthetic_samples = 0;  // 0 = sized to cover the partition exactly
    std::string eval_holdout = "off";  // off | on; on needs dataset=synthetic
    double edge_latency_s = 0.005;
    double edge_bandwidth_bps = 100e6;
    double cloud_latency_s = 0.04;
    double cloud_bandwidth_bps = 20e6;
    double client_compute_cost = 4e-7;
    double mes_compute_cost = 1e-7;
    double cloud_compute_cost = 1e-7;
    uint64_t seed = 42;
    std::string out = "out";

    bool operator==(const ExperimentConfig&) const = default;
};

/// Config keys in serialization order.
const std::vector<std::string>& config_keys();

/// Sets one field from its textual value. Unknown key or unparsable value
/// throws ConfigError naming the key.
void apply_key(ExperimentConfig& cfg, const std::string& key, const std::string& value);

/// Parses a flat `key = value` file ('#' comments, blank lines allowed)
/// into pairs in file order. Syntax errors name the line.
std::vector<std::pair<std::string, std::string>> read_config_file(const std::string& path);

/// Defaults, then file keys, then HIERSFL_SEED, then explicit flag
/// overrides; validates the result. Empty file_path skips the file layer.
ExperimentConfig assemble_config(const std::string& file_path,
                                 const std::vector<std::pair<std::string, std::string>>& flags);

/// Cross-field validation; every violation is reported in one ConfigError.
void validate(const ExperimentConfig& cfg);

/// Effective config in the file format; re-parsing it reproduces cfg.
std::string serialize_config(const ExperimentConfig& cfg);

}  // namespace hiersfl
