#include "gate/harness/ssim.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace gate::harness {

using core::Tensor;

namespace {

std::vector<double> gaussian_kernel(int radius, double sigma) {
    std::vector<double> k(static_cast<size_t>(2 * radius + 1));
    double sum = 0.0;
    for (int i = -radius; i <= radius; ++i) {
        const double v = std::exp(-(i * i) / (2.0 * sigma * sigma));
        k[static_cast<size_t>(i + radius)] = v;
        sum += v;
    }
    for (double& v : k) v /= sum;
    return k;
}

// Separable Gaussian blur with replicate borders on an (h, w) map.
Tensor blur(const Tensor& x, const std::vector<double>& k) {
    const int64_t h = x.dim(0), w = x.dim(1);
    const int radius = static_cast<int>(k.size() / 2);
    Tensor tmp({h, w}), out({h, w});
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t xx = 0; xx < w; ++xx) {
            double s = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int64_t c = std::clamp<int64_t>(xx + i, 0, w - 1);
                s += k[static_cast<size_t>(i + radius)] * x.at(y, c);
            }
            tmp.at(y, xx) = static_cast<float>(s);
        }
    }
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t xx = 0; xx < w; ++xx) {
            double s = 0.0;
            for (int i = -radius; i <= radius; ++i) {
                const int64_t r = std::clamp<int64_t>(y + i, 0, h - 1);
                s += k[static_cast<size_t>(i + radius)] * tmp.at(r, xx);
            }
            out.at(y, xx) = static_cast<float>(s);
        }
    }
    return out;
}

}  // namespace

double ssim_luminance(const core::Image& a, const core::Image& b) {
    if (!core::same_shape(a, b)) throw std::invalid_argument("ssim inputs must share shape");
    const Tensor la = core::luminance(a);
    const Tensor lb = core::luminance(b);
    const auto k = gaussian_kernel(5, 1.5);

    const Tensor mu_a = blur(la, k);
    const Tensor mu_b = blur(lb, k);
    const Tensor aa = blur(core::mul(la, la), k);
    const Tensor bb = blur(core::mul(lb, lb), k);
    const Tensor ab = blur(core::mul(la, lb), k);

    constexpr double c1 = 0.01 * 0.01;
    constexpr double c2 = 0.03 * 0.03;
    double acc = 0.0;
    for (int64_t i = 0; i < la.numel(); ++i) {
        const double ma = mu_a[i], mb = mu_b[i];
        const double va = aa[i] - ma * ma;
        const double vb = bb[i] - mb * mb;
        const double cab = ab[i] - ma * mb;
        const double num = (2.0 * ma * mb + c1) * (2.0 * cab + c2);
        const double den = (ma * ma + mb * mb + c1) * (va + vb + c2);
        acc += num / den;
    }
    return acc / static_cast<double>(la.numel());
}

}  // namespace gate::harness
