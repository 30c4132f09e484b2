#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gate/downstream/metrics.hpp"

namespace gate::downstream {

struct SegmentationItem {
    std::string image_id;
    std::filesystem::path image_path;
    std::filesystem::path mask_path;
};

struct SegmentationDataset {
    std::string dataset_id;
    int classes = 0;
    std::vector<SegmentationItem> items;
};

// Directory-of-images plus directory-of-masks; masks are grayscale class-id
// images paired by file stem. Covers the label-scarce layouts.
SegmentationDataset load_folder_masks(const std::filesystem::path& images_dir,
                                      const std::filesystem::path& masks_dir, int classes,
                                      const std::string& dataset_id);

struct CorrespondencePair {
    std::string pair_id;
    std::filesystem::path src_image, tgt_image;
    KeypointSet src, tgt;
};

// One JSON record per line: src_image, tgt_image, src_kps, tgt_kps (arrays of
// {name, x, y}), src_size/tgt_size ([h, w]), optional src_bbox/tgt_bbox.
std::vector<CorrespondencePair> load_pairs_jsonl(const std::filesystem::path& path);

// The standard pair-annotation layout of the correspondence benchmark:
// <root>/PairAnnotation/<split>/*.json with JPEGImages/<category>/ images.
std::vector<CorrespondencePair> load_spair(const std::filesystem::path& root,
                                           const std::string& split);

}  // namespace gate::downstream
