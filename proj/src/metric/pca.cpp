#include "gate/metric/pca.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>
#include <stdexcept>

namespace gate::metric {

using core::Tensor;

core::Image visualize_pca_rgb(const Tensor& feat) {
    if (feat.rank() != 3) throw std::invalid_argument("visualize_pca_rgb expects (c, h, w)");
    const int64_t c = feat.dim(0), h = feat.dim(1), w = feat.dim(2);
    if (c < 3) throw std::invalid_argument("visualize_pca_rgb needs at least 3 channels");
    const int64_t n = h * w;

    Eigen::VectorXd mean = Eigen::VectorXd::Zero(c);
    for (int64_t ch = 0; ch < c; ++ch) {
        double s = 0.0;
        for (int64_t i = 0; i < n; ++i) s += feat.data()[ch * n + i];
        mean(ch) = s / static_cast<double>(n);
    }
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(c, c);
    for (int64_t i = 0; i < n; ++i) {
        Eigen::VectorXd x(c);
        for (int64_t ch = 0; ch < c; ++ch) x(ch) = feat.data()[ch * n + i] - mean(ch);
        cov.noalias() += x * x.transpose();
    }
    cov /= static_cast<double>(n);
    if (cov.trace() <= 1e-20) throw std::domain_error("zero-variance feature; principal axes undefined");

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success) throw std::runtime_error("eigendecomposition failed");
    // Eigenvalues ascend; take the last three, largest first.
    core::Image out({3, h, w});
    for (int comp = 0; comp < 3; ++comp) {
        Eigen::VectorXd v = solver.eigenvectors().col(c - 1 - comp);
        // Sign convention: the largest-magnitude loading is positive.
        int64_t arg = 0;
        for (int64_t ch = 1; ch < c; ++ch)
            if (std::fabs(v(ch)) > std::fabs(v(arg))) arg = ch;
        if (v(arg) < 0.0) v = -v;

        double lo = std::numeric_limits<double>::infinity();
        double hi = -std::numeric_limits<double>::infinity();
        std::vector<double> proj(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) {
            double p = 0.0;
            for (int64_t ch = 0; ch < c; ++ch) p += v(ch) * (feat.data()[ch * n + i] - mean(ch));
            proj[static_cast<size_t>(i)] = p;
            lo = std::min(lo, p);
            hi = std::max(hi, p);
        }
        const double range = hi - lo;
        for (int64_t i = 0; i < n; ++i) {
            const double val = range > 0.0 ? (proj[static_cast<size_t>(i)] - lo) / range : 0.5;
            out.data()[comp * n + i] = static_cast<float>(val);
        }
    }
    return out;
}

}  // namespace gate::metric
