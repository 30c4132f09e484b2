#include "gate/downstream/metrics.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace gate::downstream {

using core::Tensor;

SegScores miou(const std::vector<Tensor>& pred_maps, const std::vector<Tensor>& gt_maps, int classes) {
    if (pred_maps.size() != gt_maps.size() || pred_maps.empty()) {
        throw std::invalid_argument("miou: prediction/ground-truth counts differ or are empty");
    }
    std::vector<int64_t> inter(static_cast<size_t>(classes), 0);
    std::vector<int64_t> uni(static_cast<size_t>(classes), 0);
    std::vector<int64_t> gt_count(static_cast<size_t>(classes), 0);
    std::vector<int64_t> correct_per_class(static_cast<size_t>(classes), 0);
    int64_t correct = 0, total = 0;

    for (size_t m = 0; m < pred_maps.size(); ++m) {
        const Tensor& p = pred_maps[m];
        const Tensor& g = gt_maps[m];
        if (!core::same_shape(p, g) || p.rank() != 2) {
            throw std::invalid_argument("miou: maps must be matching (h, w)");
        }
        for (int64_t i = 0; i < p.numel(); ++i) {
            const int gv = static_cast<int>(g[i]);
            if (gv == kIgnoreLabel) continue;
            const int pv = static_cast<int>(p[i]);
            if (gv < 0 || gv >= classes) {
                throw std::out_of_range("miou: ground-truth label " + std::to_string(gv) +
                                        " outside [0, " + std::to_string(classes) + ")");
            }
            if (pv < 0 || pv >= classes) {
                throw std::out_of_range("miou: predicted label " + std::to_string(pv) +
                                        " outside [0, " + std::to_string(classes) + ")");
            }
            ++total;
            ++gt_count[static_cast<size_t>(gv)];
            if (pv == gv) {
                ++correct;
                ++correct_per_class[static_cast<size_t>(gv)];
                ++inter[static_cast<size_t>(gv)];
                ++uni[static_cast<size_t>(gv)];
            } else {
                ++uni[static_cast<size_t>(gv)];
                ++uni[static_cast<size_t>(pv)];
            }
        }
    }

    SegScores s;
    s.per_class_iou.assign(static_cast<size_t>(classes), std::numeric_limits<double>::quiet_NaN());
    double iou_sum = 0.0;
    int iou_n = 0;
    double acc_sum = 0.0;
    int acc_n = 0;
    for (int c = 0; c < classes; ++c) {
        if (uni[static_cast<size_t>(c)] > 0) {  // class present in pred or gt
            const double iou = static_cast<double>(inter[static_cast<size_t>(c)]) /
                               static_cast<double>(uni[static_cast<size_t>(c)]);
            s.per_class_iou[static_cast<size_t>(c)] = iou;
            iou_sum += iou;
            ++iou_n;
        }
        if (gt_count[static_cast<size_t>(c)] > 0) {
            acc_sum += static_cast<double>(correct_per_class[static_cast<size_t>(c)]) /
                       static_cast<double>(gt_count[static_cast<size_t>(c)]);
            ++acc_n;
        }
    }
    s.miou = iou_n ? iou_sum / iou_n : 0.0;
    s.aacc = total ? static_cast<double>(correct) / static_cast<double>(total) : 0.0;
    s.macc = acc_n ? acc_sum / acc_n : 0.0;
    return s;
}

double pck(const std::vector<Keypoint>& pred, const KeypointSet& gt, double alpha, bool use_bbox) {
    if (gt.points.empty()) throw std::invalid_argument("pck: empty keypoint list");
    if (pred.size() != gt.points.size()) {
        throw std::invalid_argument("pck: prediction count does not match ground truth");
    }
    double side;
    if (use_bbox) {
        if (!gt.bbox) throw std::invalid_argument("pck: bbox variant requested without a bbox");
        side = std::max((*gt.bbox)[2], (*gt.bbox)[3]);
    } else {
        side = static_cast<double>(std::max(gt.height, gt.width));
    }
    const double radius = alpha * side;
    int64_t hit = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        const double dx = pred[i].x - gt.points[i].x;
        const double dy = pred[i].y - gt.points[i].y;
        if (std::sqrt(dx * dx + dy * dy) <= radius) ++hit;
    }
    return static_cast<double>(hit) / static_cast<double>(pred.size());
}

}  // namespace gate::downstream
