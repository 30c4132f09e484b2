#pragma once

#include "gate/core/image.hpp"

namespace gate::harness {

// Structural-similarity index on luminance, 11x11 Gaussian window (sigma 1.5),
// the standard K1=0.01 / K2=0.03 constants on unit dynamic range.
double ssim_luminance(const core::Image& a, const core::Image& b);

}  // namespace gate::harness
