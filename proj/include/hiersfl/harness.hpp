#pragma once

#include <string>
#include <utility>
#include <vector>

#include "hiersfl/config.hpp"
#include "hiersfl/data.hpp"
#include "hiersfl/nn.hpp"
#include "hiersfl/protocols.hpp"

namespace hiersfl {

/// Dense stack matching the configured layer dims.
LayerStack stack_from_dims(const std::vector<size_t>& dims);

/// Smallest synthetic dataset that covers the configured partition: every
/// label pool sized for its busiest slot count.
size_t synthetic_auto_samples(const ExperimentConfig& cfg);

/// Synthetic generation (auto-sized unless synthetic-samples is set) or IDX
/// load, checked against the configured layer dims.
Dataset build_dataset(const ExperimentConfig& cfg);

ProtocolConfig to_protocol_config(const ExperimentConfig& cfg);

std::string render_rounds_csv(const std::vector<RoundRecord>& rounds);
std::string render_summary_json(const ExperimentConfig& cfg, const RunResult& rr);

struct ExperimentArtifacts {
    RunResult run;
    std::string rounds_csv_path;
    std::string summary_json_path;
};

/// Full pipeline: data, partition, protocol run, then <out>/rounds.csv and
/// <out>/summary.json.
ExperimentArtifacts run_experiment(const ExperimentConfig& cfg);

struct ComparisonCell {
    std::string protocol;
    size_t num_clients = 0;
    size_t num_mes = 0;
    double final_accuracy = 0.0;
    double total_sim_time_s = 0.0;
    unsigned long long total_bytes_client_mes = 0;
    unsigned long long total_bytes_mes_cloud = 0;
    std::string status = "ok";
};

/// One cell per (protocol, topology) over a shared dataset and seed. A
/// failing cell records its error in `status`; the grid keeps going.
std::vector<ComparisonCell> compare_protocols(
    const ExperimentConfig& base, const std::vector<std::string>& protocols,
    const std::vector<std::pair<size_t, size_t>>& topologies);

std::string render_comparison_csv(const std::vector<ComparisonCell>& cells);

/// Runs the grid and writes <out>/comparison.csv; returns its path.
std::string run_comparison(const ExperimentConfig& base, const std::vector<std::string>& protocols,
                           const std::vector<std::pair<size_t, size_t>>& topologies);

}  // namespace hiersfl
