#pragma once

#include <cstdint>
#include <vector>

namespace hiersfl {

// Deterministic counter-based RNG used everywhere randomness is needed.
// mt19937_64 would also do, but a hand-rolled splitmix chain keeps every
// draw pinned down independent of the standard library implementation.
class Rng {
  public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ULL;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // Uniform double in [0, 1).
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform double in the open interval (-0.5, 0.5). Never hits the ends.
    double next_centered() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53 - 0.5;
    }

    // Uniform integer in [0, n). Rejection sampling, no modulo bias.
    uint64_t next_below(uint64_t n) {
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x;
        do {
            x = next_u64();
        } while (x >= limit);
        return x % n;
    }

    // Approximate standard normal (sum of 12 uniforms, recentered). Plenty
    // for synthetic blob generation; not used by the privacy mechanism.
    double next_gaussian() {
        double s = 0.0;
        for (int i = 0; i < 12; ++i) s += next_double();
        return s - 6.0;
    }

  private:
    uint64_t state_;
};

// Stream roles for mix_seed, one per distinct consumer of randomness.
namespace seed_tags {
inline constexpr uint64_t kInit = 1;
inline constexpr uint64_t kData = 2;
inline constexpr uint64_t kCentroid = 3;
inline constexpr uint64_t kPartition = 4;
inline constexpr uint64_t kBatch = 5;
inline constexpr uint64_t kEpoch = 6;
inline constexpr uint64_t kNoise = 7;
inline constexpr uint64_t kHoldout = 8;
}  // namespace seed_tags

// Derives an independent stream from a base seed and a role/id pair, so
// clients, epochs and modules never share draws.
inline uint64_t mix_seed(uint64_t seed, uint64_t tag, uint64_t id = 0) {
    Rng r(seed ^ (tag * 0xd6e8feb86659fd93ULL) ^ (id * 0xa3b195354a39b70dULL));
    return r.next_u64();
}

// In-place Fisher-Yates shuffle with a caller-owned stream.
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (size_t i = v.size(); i > 1; --i) {
        size_t j = static_cast<size_t>(rng.next_below(i));
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace hiersfl
