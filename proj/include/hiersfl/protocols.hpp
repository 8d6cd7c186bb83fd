#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hiersfl/data.hpp"
#include "hiersfl/ldp.hpp"
#include "hiersfl/nn.hpp"
#include "hiersfl/simnet.hpp"
#include "hiersfl/split.hpp"

namespace hiersfl {

/// Static client-to-MES assignment. Every client belongs to exactly one
/// MES and every MES serves at least one client.
struct Topology {
    size_t num_clients = 0;
    size_t num_mes = 0;
    std::vector<size_t> assignment;  // client id -> mes id

    /// Contiguous blocks with sizes differing by at most one.
    static Topology balanced(size_t num_clients, size_t num_mes);

    std::vector<std::vector<size_t>> clients_of_mes() const;
    void validate() const;
};

/// The two-tier aggregation timetable: MES aggregation every p1 rounds,
/// cloud aggregation every p1*p2 rounds.
struct Schedule {
    size_t total_rounds = 1;
    size_t p1 = 1;
    size_t p2 = 1;
    size_t epochs_per_round = 1;

    void validate() const;
};

bool edge_agg_due(size_t round, const Schedule& sched);
bool cloud_agg_due(size_t round, const Schedule& sched);

/// Everything a protocol run needs besides the data.
struct ProtocolConfig {
    std::string protocol = "hiersfl";  // fl | sfl | hfl | hiersfl
    LayerStack stack;
    size_t cut_index = 1;  // split protocols only
    Topology topology;
    Schedule schedule;
    double learning_rate = 0.01;
    double lr_decay = 0.995;
    double momentum = 0.5;
    size_t batch_size = 32;
    LdpConfig ldp;
    LinkModel edge_link;
    LinkModel cloud_link;
    ComputeModel compute;
    uint64_t seed = 42;
};

/// Per-round measurements. sim_time_s is cumulative; byte counts are this
/// round's traffic per link class.
struct RoundRecord {
    size_t round = 0;
    std::string protocol;
    double train_loss = 0.0;
    double accuracy = 0.0;
    double sim_time_s = 0.0;
    unsigned long long bytes_client_mes = 0;
    unsigned long long bytes_mes_cloud = 0;
};

/// The fixed sample pool every round is evaluated against.
struct EvalSet {
    Tensor2D features{0, 0};
    std::vector<int> labels;
};

/// All plan samples in ascending client order.
EvalSet build_eval_set(const Dataset& ds, const PartitionPlan& plan);

struct RunResult {
    std::vector<RoundRecord> rounds;
    ParamVector final_params;  // measurement snapshot after the last round
    PhaseBreakdown phases;
    double elapsed_s = 0.0;
    std::vector<size_t> edge_agg_rounds;   // rounds where an MES aggregation ran
    std::vector<size_t> cloud_agg_rounds;  // rounds where the cloud aggregation ran
};

/// Sample-count-weighted coordinate-wise average. Weights are normalized
/// internally; the reduction runs in ascending model order so results are
/// identical regardless of caller-side parallelism.
ParamVector fedavg(const std::vector<ParamVector>& models, const std::vector<double>& weights);

/// (mean cross-entropy, argmax accuracy) over the evaluation pool.
/// Measurement only: charges no simulated time.
std::pair<double, double> evaluate(const LayerStack& stack, const ParamVector& params,
                                   const EvalSet& eval);

RunResult run_fl(const ProtocolConfig& cfg, const Dataset& ds, const PartitionPlan& plan,
                 const EvalSet& eval);
RunResult run_sfl(const ProtocolConfig& cfg, const Dataset& ds, const PartitionPlan& plan,
                  const EvalSet& eval);
RunResult run_hfl(const ProtocolConfig& cfg, const Dataset& ds, const PartitionPlan& plan,
                  const EvalSet& eval);
RunResult run_hiersfl(const ProtocolConfig& cfg, const Dataset& ds, const PartitionPlan& plan,
                      const EvalSet& eval);

/// Dispatches on cfg.protocol.
RunResult run_protocol(const ProtocolConfig& cfg, const Dataset& ds, const PartitionPlan& plan,
                       const EvalSet& eval);

}  // namespace hiersfl
