#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "gate/core/tensor.hpp"

namespace gate::downstream {

inline constexpr int kIgnoreLabel = 255;

struct SegScores {
    double miou = 0.0;
    double aacc = 0.0;
    double macc = 0.0;
    std::vector<double> per_class_iou;  // NaN for classes absent from pred and gt
};

// Dataset-aggregated segmentation scores: intersections and unions accumulate
// over all images before the per-class division. Pixels labeled kIgnoreLabel
// in the ground truth are excluded everywhere; classes absent from both
// prediction and ground truth drop out of the means.
SegScores miou(const std::vector<core::Tensor>& pred_maps, const std::vector<core::Tensor>& gt_maps,
               int classes);

struct Keypoint {
    std::string name;
    double x = 0.0;
    double y = 0.0;
};

struct KeypointSet {
    std::vector<Keypoint> points;
    int64_t height = 0;
    int64_t width = 0;
    // optional object box (x, y, w, h)
    std::optional<std::array<double, 4>> bbox;
};

// Fraction of predictions within alpha * max(h, w) of the ground truth
// (<= is inclusive). With use_bbox the radius comes from the box sides.
double pck(const std::vector<Keypoint>& pred, const KeypointSet& gt, double alpha = 0.1,
           bool use_bbox = false);

}  // namespace gate::downstream
