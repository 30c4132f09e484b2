#pragma once

#include <filesystem>
#include <optional>
#include <vector>

#include "gate/amalgam/train.hpp"
#include "gate/downstream/metrics.hpp"

namespace gate::downstream {

struct PixelClassifierConfig {
    int64_t input_dim = 0;  // amalgamated channel count
    int classes = 2;
    int ensemble_size = 3;
    int hidden = 64;
    uint64_t init_seed = 7;
};

// Per-pixel MLP heads; prediction is the argmax of the member-mean logits.
struct PixelClassifier {
    PixelClassifierConfig cfg;
    struct Member {
        amalgam::Value w1, b1, w2, b2;
    };
    std::vector<Member> members;

    static PixelClassifier create(const PixelClassifierConfig& cfg);
    std::vector<amalgam::Value*> parameters();

    // Mean logits over members for a (input_dim, h, w) feature -> (classes, h, w).
    core::Tensor mean_logits(const core::Tensor& feature) const;

    void save(const std::filesystem::path& path) const;
    static PixelClassifier load(const std::filesystem::path& path);
};

struct SegSample {
    std::vector<core::Tensor> features;        // b maps, matching (c, h, w)
    std::optional<core::Tensor> attention;     // appended unweighted
    core::Tensor labels;                       // (h, w) class ids at feature resolution
};

struct SegmenterModel {
    amalgam::AssignerEnsemble ensemble;
    PixelClassifier head;

    core::Tensor amalgamated(const std::vector<core::Tensor>& features,
                             const core::Tensor* attention) const;
    void save(const std::filesystem::path& dir) const;
    static SegmenterModel load(const std::filesystem::path& dir);
};

struct SegTrainResult {
    SegmenterModel model;
    std::vector<amalgam::EpochRecord> history;
};

// Joint training of assigners and pixel heads on the regularized loss; the
// task loss is the member-mean cross entropy at feature resolution.
SegTrainResult train_segmenter(const std::vector<SegSample>& samples,
                               amalgam::EnsembleConfig ensemble_cfg, PixelClassifierConfig head_cfg,
                               const amalgam::TrainConfig& train_cfg);

// Argmax label map at feature resolution, or at (out_h, out_w) via bilinear
// logit upsampling when given.
core::Tensor predict_segmentation(const SegmenterModel& model,
                                  const std::vector<core::Tensor>& features,
                                  const core::Tensor* attention = nullptr, int64_t out_h = 0,
                                  int64_t out_w = 0);

// Nearest-neighbor downsample of a label map to feature resolution.
core::Tensor labels_to_feature_res(const core::Tensor& labels, int64_t h, int64_t w);

}  // namespace gate::downstream
