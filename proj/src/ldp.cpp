#include "hiersfl/ldp.hpp"

#include <cmath>
#include <string>

#include "hiersfl/errors.hpp"

namespace hiersfl {

void LdpConfig::validate() const {
    if (!enabled) return;
    if (!(clip_bound > 0.0)) {
        throw InputError("ldp: clip bound must be positive, got " + std::to_string(clip_bound));
    }
    if (!(epsilon > 0.0)) {
        throw InputError("ldp: epsilon must be positive, got " + std::to_string(epsilon));
    }
}

double clip_value(double x, double bound) {
    if (!(bound > 0.0)) {
        throw InputError("clip_value: bound must be positive, got " + std::to_string(bound));
    }
    if (x > bound) return bound;
    if (x < -bound) return -bound;
    return x;
}

double sensitivity(double clip_bound) {
    if (!(clip_bound > 0.0)) {
        throw InputError("sensitivity: clip bound must be positive, got " +
                         std::to_string(clip_bound));
    }
    return 2.0 * clip_bound;
}

double laplace_scale(double sensitivity, double epsilon) {
    if (!(sensitivity > 0.0) || !(epsilon > 0.0)) {
        throw InputError("laplace_scale: sensitivity and epsilon must be positive");
    }
    return sensitivity / epsilon;
}

double laplace_from_uniform(double u, double scale) {
    double sign = u < 0.0 ? -1.0 : 1.0;
    return -scale * sign * std::log(1.0 - 2.0 * std::fabs(u));
}

double sample_laplace(Rng& rng, double scale) {
    if (!(scale > 0.0)) {
        throw InputError("sample_laplace: scale must be positive, got " + std::to_string(scale));
    }
    return laplace_from_uniform(rng.next_centered(), scale);
}

std::vector<double> sample_laplace(Rng& rng, double scale, size_t n) {
    if (!(scale > 0.0)) {
        throw InputError("sample_laplace: scale must be positive, got " + std::to_string(scale));
    }
    std::vector<double> draws(n);
    for (double& d : draws) d = laplace_from_uniform(rng.next_centered(), scale);
    return draws;
}

void perturb_params(ParamVector& params, const LdpConfig& cfg, Rng& rng) {
    cfg.validate();
    if (!cfg.enabled) return;
    double scale = laplace_scale(sensitivity(cfg.clip_bound), cfg.epsilon);
    for (double& v : params.values) {
        v = clip_value(v, cfg.clip_bound) + sample_laplace(rng, scale);
    }
}

}  // namespace hiersfl
