#include "gate/backend/schedule.hpp"

#include <cmath>
#include <stdexcept>

#include "gate/core/rng.hpp"

namespace gate::backend {

using core::Tensor;

NoiseSchedule::NoiseSchedule(ScheduleConfig cfg) : cfg_(cfg) {
    const int T = cfg_.train_timesteps;
    if (T < 1) throw std::invalid_argument("train_timesteps must be >= 1");
    alpha_bar_.assign(static_cast<size_t>(T) + 1, 1.0);
    const double s0 = std::sqrt(cfg_.beta_start);
    const double s1 = std::sqrt(cfg_.beta_end);
    double acc = 1.0;
    for (int i = 1; i <= T; ++i) {
        const double u = T > 1 ? static_cast<double>(i - 1) / static_cast<double>(T - 1) : 0.0;
        const double sqrt_beta = s0 + (s1 - s0) * u;
        const double beta = sqrt_beta * sqrt_beta;
        acc *= 1.0 - beta;
        alpha_bar_[static_cast<size_t>(i)] = acc;
    }
}

double NoiseSchedule::signal_coeff(int t) const {
    if (t < 0 || t > max_timestep()) {
        throw std::out_of_range("timestep " + std::to_string(t) + " outside [0, " +
                                std::to_string(max_timestep()) + "]");
    }
    return std::sqrt(alpha_bar_[static_cast<size_t>(t)]);
}

double NoiseSchedule::noise_coeff(int t) const {
    if (t < 0 || t > max_timestep()) {
        throw std::out_of_range("timestep " + std::to_string(t) + " outside [0, " +
                                std::to_string(max_timestep()) + "]");
    }
    return std::sqrt(1.0 - alpha_bar_[static_cast<size_t>(t)]);
}

Tensor NoiseSchedule::add_noise(const Tensor& x0, int t, uint64_t seed) const {
    const float a = static_cast<float>(signal_coeff(t));
    const float b = static_cast<float>(noise_coeff(t));
    if (t == 0) return x0;  // exact identity, no rng draw
    core::Rng rng(seed);
    Tensor out(x0.shape());
    for (int64_t i = 0; i < x0.numel(); ++i) out[i] = a * x0[i] + b * rng.normalf();
    return out;
}

Tensor NoiseSchedule::predict_clean(const Tensor& x_t, const Tensor& eps, int t) const {
    const float a = static_cast<float>(signal_coeff(t));
    const float b = static_cast<float>(noise_coeff(t));
    Tensor x0(x_t.shape());
    for (int64_t i = 0; i < x_t.numel(); ++i) x0[i] = (x_t[i] - b * eps[i]) / a;
    return x0;
}

Tensor NoiseSchedule::reverse_step(const Tensor& x_t, const Tensor& eps, int t_from, int t_to) const {
    if (t_to >= t_from) throw std::invalid_argument("reverse_step requires t_to < t_from");
    if (!core::same_shape(x_t, eps)) throw std::invalid_argument("reverse_step shape mismatch");
    const float a_from = static_cast<float>(signal_coeff(t_from));
    const float b_from = static_cast<float>(noise_coeff(t_from));
    const float a_to = static_cast<float>(signal_coeff(t_to));
    const float b_to = static_cast<float>(noise_coeff(t_to));
    Tensor out(x_t.shape());
    for (int64_t i = 0; i < x_t.numel(); ++i) {
        const float x0 = (x_t[i] - b_from * eps[i]) / a_from;
        out[i] = a_to * x0 + b_to * eps[i];
    }
    return out;
}

std::vector<int> NoiseSchedule::window_timesteps(int from, int to, int steps) const {
    if (from <= to) throw std::invalid_argument("window requires from > to");
    if (steps < 1) throw std::invalid_argument("window requires steps >= 1");
    std::vector<int> ts;
    ts.reserve(static_cast<size_t>(steps) + 1);
    for (int k = 0; k <= steps; ++k) {
        const double v = from + (static_cast<double>(to - from) * k) / steps;
        int t = static_cast<int>(std::llround(v));
        if (!ts.empty() && t >= ts.back()) t = ts.back() - 1;  // strictly descending
        ts.push_back(std::max(t, to));
    }
    ts.back() = to;
    return ts;
}

}  // namespace gate::backend
