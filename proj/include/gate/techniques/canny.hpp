#pragma once

#include "gate/core/image.hpp"

namespace gate::techniques {

// Binary edge map (1, h, w) with values in {0, 1}. Thresholds are on 8-bit
// intensity; defaults follow the usual (100, 200) convention.
core::Tensor compute_canny(const core::Image& rgb, double low_threshold = 100.0,
                           double high_threshold = 200.0);

}  // namespace gate::techniques
