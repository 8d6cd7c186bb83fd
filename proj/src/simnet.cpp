#include "hiersfl/simnet.hpp"

#include <string>

#include "hiersfl/errors.hpp"

namespace hiersfl {

void LinkModel::validate() const {
    if (!(latency_s >= 0.0)) {
        throw InputError("link: latency must be >= 0, got " + std::to_string(latency_s));
    }
    if (!(bandwidth_Bps > 0.0)) {
        throw InputError("link: bandwidth must be positive, got " +
                         std::to_string(bandwidth_Bps));
    }
}

void ComputeModel::validate() const {
    if (!(client >= 0.0) || !(mes >= 0.0) || !(cloud >= 0.0)) {
        throw InputError("compute model: all per-sample-parameter costs must be >= 0");
    }
}

PhaseBreakdown& PhaseBreakdown::operator+=(const PhaseBreakdown& o) {
    client_compute += o.client_compute;
    mes_compute += o.mes_compute;
    cloud_compute += o.cloud_compute;
    comm_client_mes += o.comm_client_mes;
    comm_mes_cloud += o.comm_mes_cloud;
    return *this;
}

void SimClock::advance(const PhaseBreakdown& round) {
    elapsed_s += round.total();
    phases += round;
}

double transfer_time(double bytes, const LinkModel& link) {
    if (!(bytes >= 0.0)) {
        throw InputError("transfer_time: bytes must be >= 0, got " + std::to_string(bytes));
    }
    return link.latency_s + bytes / link.bandwidth_Bps;
}

double compute_time(double cost_per_sample_param, double samples, double params) {
    return cost_per_sample_param * samples * params;
}

const PhaseBreakdown& parallel_max(const std::vector<PhaseBreakdown>& branches) {
    if (branches.empty()) throw ContractViolation("parallel_max: no branches");
    size_t best = 0;
    for (size_t i = 1; i < branches.size(); ++i) {
        if (branches[i].total() > branches[best].total()) best = i;
    }
    return branches[best];
}

double round_time(const std::vector<PhaseBreakdown>& branches, const PhaseBreakdown& tail) {
    PhaseBreakdown combined = parallel_max(branches);
    combined += tail;
    return combined.total();
}

}  // namespace hiersfl
