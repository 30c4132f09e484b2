#include "gate/metric/shift.hpp"

#include <cmath>
#include <stdexcept>

namespace gate::metric {

using core::Tensor;

Tensor laplacian_magnitude(const Tensor& feat) {
    if (feat.rank() != 3) throw std::invalid_argument("laplacian_magnitude expects (c, h, w)");
    const int64_t c = feat.dim(0), h = feat.dim(1), w = feat.dim(2);
    if (h < 3 || w < 3) {
        throw std::invalid_argument("laplacian_magnitude needs h, w >= 3, got " + feat.shape_str());
    }
    Tensor out({h, w});
    for (int64_t y = 0; y < h; ++y) {
        const int64_t yu = std::max<int64_t>(y - 1, 0);
        const int64_t yd = std::min<int64_t>(y + 1, h - 1);
        for (int64_t x = 0; x < w; ++x) {
            const int64_t xl = std::max<int64_t>(x - 1, 0);
            const int64_t xr = std::min<int64_t>(x + 1, w - 1);
            double sq = 0.0;
            for (int64_t ch = 0; ch < c; ++ch) {
                const double lap = feat.at(ch, yu, x) + feat.at(ch, yd, x) + feat.at(ch, y, xl) +
                                   feat.at(ch, y, xr) - 4.0 * feat.at(ch, y, x);
                sq += lap * lap;
            }
            out.at(y, x) = static_cast<float>(std::sqrt(sq));
        }
    }
    return out;
}

double contour_diff(const Tensor& feat, const Tensor& ref) {
    if (!core::same_shape(feat, ref)) {
        throw std::invalid_argument("contour_diff shape mismatch: " + feat.shape_str() + " vs " +
                                    ref.shape_str());
    }
    const Tensor a = laplacian_magnitude(ref);
    const Tensor b = laplacian_magnitude(feat);
    double sum = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) sum += std::fabs(static_cast<double>(a[i]) - b[i]);
    return sum;
}

ShiftScoreReport shift_score(const Tensor& feat, const Tensor& ref, const Tensor& anchor_feat,
                             const std::string& ref_id, const std::string& anchor_id) {
    ShiftScoreReport r;
    r.ref_id = ref_id;
    r.anchor_id = anchor_id;
    r.diff_anchor = contour_diff(anchor_feat, ref);
    if (r.diff_anchor <= 0.0) {
        throw std::domain_error("anchor has zero contour difference to the reference; score undefined");
    }
    r.diff = contour_diff(feat, ref);
    r.score = (r.diff_anchor - r.diff) / r.diff_anchor;
    return r;
}

}  // namespace gate::metric
