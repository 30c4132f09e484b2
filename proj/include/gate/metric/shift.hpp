#pragma once

#include <string>

#include "gate/core/tensor.hpp"

namespace gate::metric {

// Contour-based content-shift scoring. A feature's contour map is the
// per-pixel l2 norm (over channels) of its Laplacian response; the distance
// between two features is the summed absolute difference of their contour
// maps; the score anchors that distance against a deliberately shift-heavy
// feature so that 1 means an exact contour match and 0 matches the anchor.
struct ShiftScoreReport {
    double diff = 0.0;         // >= 0
    double diff_anchor = 0.0;  // > 0
    double score = 0.0;        // (diff_anchor - diff) / diff_anchor, <= 1
    std::string ref_id;
    std::string anchor_id;
};

// 4-neighbor Laplacian per channel (replicate-padded borders), then the
// channelwise l2 norm at each pixel. Input (c, h, w) with h, w >= 3; output (h, w).
core::Tensor laplacian_magnitude(const core::Tensor& feat);

double contour_diff(const core::Tensor& feat, const core::Tensor& ref);

ShiftScoreReport shift_score(const core::Tensor& feat, const core::Tensor& ref,
                             const core::Tensor& anchor_feat, const std::string& ref_id = "ref",
                             const std::string& anchor_id = "anchor");

}  // namespace gate::metric
