#pragma once

#include <cstdint>
#include <vector>

#include "gate/core/tensor.hpp"

namespace gate::backend {

struct ScheduleConfig {
    int train_timesteps = 1000;
    double beta_start = 0.00085;
    double beta_end = 0.012;  // sqrt-space linear ramp, the v1-family convention
};

// Forward-diffusion coefficients plus deterministic (eta = 0) reverse steps.
// t = 0 is the clean signal: signal_coeff(0) == 1, noise_coeff(0) == 0.
class NoiseSchedule {
public:
    explicit NoiseSchedule(ScheduleConfig cfg = {});

    int max_timestep() const { return cfg_.train_timesteps; }
    const ScheduleConfig& config() const { return cfg_; }

    double signal_coeff(int t) const;  // sqrt(alpha_bar_t), non-increasing
    double noise_coeff(int t) const;   // sqrt(1 - alpha_bar_t)

    // x_t = signal_coeff(t) * x0 + noise_coeff(t) * eps,  eps ~ N(0, I) from seed.
    core::Tensor add_noise(const core::Tensor& x0, int t, uint64_t seed) const;

    // Deterministic reverse step from t_from to t_to (< t_from) given the
    // predicted noise at t_from.
    core::Tensor reverse_step(const core::Tensor& x_t, const core::Tensor& eps, int t_from,
                              int t_to) const;

    // Predicted clean signal implied by (x_t, eps) at t.
    core::Tensor predict_clean(const core::Tensor& x_t, const core::Tensor& eps, int t) const;

    // Evenly spaced descending timesteps from `from` to `to`, `steps` transitions
    // (returns steps + 1 values, endpoints included).
    std::vector<int> window_timesteps(int from, int to, int steps) const;

private:
    ScheduleConfig cfg_;
    std::vector<double> alpha_bar_;  // index 0..T, alpha_bar_[0] == 1
};

}  // namespace gate::backend
