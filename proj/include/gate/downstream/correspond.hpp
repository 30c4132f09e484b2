#pragma once

#include <filesystem>
#include <vector>

#include "gate/amalgam/train.hpp"
#include "gate/downstream/metrics.hpp"

namespace gate::downstream {

// For each source keypoint (pixel coords), bilinearly sample the source
// feature, then return the pixel location of the cosine-similarity argmax in
// the target feature map. Ties break to the smallest row-major cell index.
std::vector<Keypoint> correspond_nn(const core::Tensor& src_feat, const core::Tensor& tgt_feat,
                                    const std::vector<Keypoint>& src_points,
                                    std::pair<int64_t, int64_t> src_image_dims,
                                    std::pair<int64_t, int64_t> tgt_image_dims);

// The trained-matching variant: one 3x3 convolution after each assigner
// output, trained with a keypoint-contrastive loss over target grid cells.
struct ConvCorrHead {
    int n = 0;
    int64_t channels = 0;
    struct Block {
        amalgam::Value kernel, bias;
    };
    std::vector<Block> blocks;

    static ConvCorrHead create(int n, int64_t channels, uint64_t seed);
    std::vector<amalgam::Value*> parameters();
    void save(const std::filesystem::path& path) const;
    static ConvCorrHead load(const std::filesystem::path& path);
};

struct CorrSample {
    std::vector<core::Tensor> src_features, tgt_features;
    std::vector<Keypoint> src_points, tgt_points;  // pixel coords, matching order
    std::pair<int64_t, int64_t> src_image_dims, tgt_image_dims;
};

struct CorrModel {
    amalgam::AssignerEnsemble ensemble;
    ConvCorrHead head;

    // Per-assigner conv over the weighted sums, concatenated (n*c, h, w).
    core::Tensor refined_feature(const std::vector<core::Tensor>& features) const;
    void save(const std::filesystem::path& dir) const;
    static CorrModel load(const std::filesystem::path& dir);
};

struct CorrTrainResult {
    CorrModel model;
    std::vector<amalgam::EpochRecord> history;
};

CorrTrainResult train_correspondence(const std::vector<CorrSample>& samples,
                                     amalgam::EnsembleConfig ensemble_cfg,
                                     const amalgam::TrainConfig& train_cfg,
                                     double temperature = 0.1);

}  // namespace gate::downstream
