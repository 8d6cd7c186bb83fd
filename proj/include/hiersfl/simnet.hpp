#pragma once

#include <cstddef>
#include <vector>

namespace hiersfl {

/// One link class (client-to-MES or MES-to-cloud): a fixed per-message
/// latency plus a bandwidth term.
struct LinkModel {
    double latency_s = 0.0;
    double bandwidth_Bps = 1.0;

    void validate() const;
};

/// Per-tier compute cost in seconds per (sample x parameter) processed.
struct ComputeModel {
    double client = 0.0;
    double mes = 0.0;
    double cloud = 0.0;

    void validate() const;
};

/// Simulated time of one round, broken down by phase. Parallel entities
/// contribute via the slowest branch; sequential phases add.
struct PhaseBreakdown {
    double client_compute = 0.0;
    double mes_compute = 0.0;
    double cloud_compute = 0.0;
    double comm_client_mes = 0.0;
    double comm_mes_cloud = 0.0;

    double total() const {
        return client_compute + mes_compute + cloud_compute + comm_client_mes + comm_mes_cloud;
    }
    PhaseBreakdown& operator+=(const PhaseBreakdown& o);
};

/// Accumulated simulated time. elapsed_s always equals the sum of the phase
/// fields up to rounding.
struct SimClock {
    double elapsed_s = 0.0;
    PhaseBreakdown phases;

    void advance(const PhaseBreakdown& round);
};

double transfer_time(double bytes, const LinkModel& link);

/// Seconds a tier spends processing `samples x params` work units.
double compute_time(double cost_per_sample_param, double samples, double params);

/// The slowest of several parallel branches (ties keep the lowest index).
const PhaseBreakdown& parallel_max(const std::vector<PhaseBreakdown>& branches);

/// Total round time: slowest parallel branch plus the sequential tail.
double round_time(const std::vector<PhaseBreakdown>& branches, const PhaseBreakdown& tail);

}  // namespace hiersfl
