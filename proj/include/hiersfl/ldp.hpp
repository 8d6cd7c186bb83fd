#pragma once

#include "hiersfl/params.hpp"
#include "hiersfl/rng.hpp"

namespace hiersfl {

/// Laplace-mechanism local differential privacy applied to model weights.
/// Clipping to [-clip_bound, clip_bound] bounds the sensitivity of each
/// coordinate at 2*clip_bound; the noise scale is sensitivity / epsilon.
struct LdpConfig {
    bool enabled = false;
    double clip_bound = 0.5;
    double epsilon = 1.0;

    void validate() const;
};

double clip_value(double x, double bound);
double sensitivity(double clip_bound);
double laplace_scale(double sensitivity, double epsilon);

/// Inverse CDF of Laplace(0, scale) at u + 1/2, for u in (-1/2, 1/2):
/// x = -scale * sgn(u) * ln(1 - 2|u|). Maps u = 0 to the median 0.
double laplace_from_uniform(double u, double scale);

/// One Laplace(0, scale) draw from the stream's open-interval uniform.
double sample_laplace(Rng& rng, double scale);

/// n independent draws, in stream order.
std::vector<double> sample_laplace(Rng& rng, double scale, size_t n);

/// Clips every coordinate, then adds independent Laplace noise to each.
/// Runs once per local epoch on the client-held parameters; identity when
/// the config is disabled.
void perturb_params(ParamVector& params, const LdpConfig& cfg, Rng& rng);

}  // namespace hiersfl
