#pragma once

#include "gate/core/image.hpp"

namespace gate::metric {

// Projects a (c, h, w) feature (c >= 3) onto its top-3 principal components
// over the pixel population and min-max normalizes each to an RGB channel.
// Component signs follow the largest-magnitude-loading-positive convention,
// so the output is deterministic. Throws on zero-variance input.
core::Image visualize_pca_rgb(const core::Tensor& feat);

}  // namespace gate::metric
