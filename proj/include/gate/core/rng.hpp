#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

#include "gate/core/tensor.hpp"

namespace gate::core {

// Deterministic PRNG (splitmix64 + Box-Muller). The standard library's
// distributions are implementation-defined, so seeded runs would not be
// reproducible across toolchains; this one is bit-stable everywhere.
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

    // Uniform in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform integer in [0, n).
    uint64_t uniform_index(uint64_t n) { return n ? next_u64() % n : 0; }

    // Standard normal via Box-Muller; second value cached.
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 2.0 * 3.14159265358979323846 * u2;
        cached_ = r * std::sin(theta);
        has_cached_ = true;
        return r * std::cos(theta);
    }

    float normalf() { return static_cast<float>(normal()); }

private:
    uint64_t state_;
    bool has_cached_ = false;
    double cached_ = 0.0;
};

inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

// Stable seed for a named parameter of a model: independent of construction order.
inline uint64_t derive_seed(uint64_t base, std::string_view name) {
    return base ^ fnv1a64(name);
}

inline Tensor randn(std::vector<int64_t> shape, Rng& rng, float stddev = 1.0f) {
    Tensor t(std::move(shape));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normalf() * stddev;
    return t;
}

}  // namespace gate::core
