#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gate/core/tensor.hpp"

namespace gate::core {

// Images are (3, h, w) float tensors in [0, 1], RGB channel order.
using Image = Tensor;

Image load_image(const std::filesystem::path& path);
void save_image(const Image& rgb, const std::filesystem::path& path);

// Single-channel label map loader (class indices). Supports PNG/PGM masks.
Tensor load_label_map(const std::filesystem::path& path);

Image resize_image(const Image& rgb, int64_t out_h, int64_t out_w);

// Rec.601 luminance, (h, w) in [0, 1].
Tensor luminance(const Image& rgb);

struct ResizePolicy {
    int64_t short_side = 512;
    int64_t multiple = 8;  // crop both dims to a multiple of this
};

// Shorter side to `short_side`, then center-crop so both dims are a multiple
// of `multiple`. Images already conforming pass through unchanged.
Image prepare_image(const Image& rgb, const ResizePolicy& policy);

// Horizontal side-by-side montage with a thin separator; panels must share height.
Image hstack_images(const std::vector<Image>& panels);

}  // namespace gate::core
