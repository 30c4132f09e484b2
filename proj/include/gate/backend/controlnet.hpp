#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gate/backend/unet.hpp"

namespace gate::backend {

// Conditioning side-network: a copy of the denoiser's downsampling half plus
// a hint encoder. Produces one additive residual per skip tensor and one for
// the mid block, steering reconstruction toward the control image.
class ControlNet {
public:
    // hint_channels: channel ramp of the hint encoder; one stride-2 step per
    // adjacent pair, so its length fixes the pixel-to-latent reduction.
    ControlNet(ParamStore& ps, const UNetConfig& cfg, std::vector<int64_t> hint_channels);

    // hint: (1, hp, wp) or (3, hp, wp) control image at pixel resolution;
    // x: (in_channels, h, w) latent.
    ControlResiduals forward(const Tensor& x, int timestep, const Tensor& context,
                             const Tensor& hint) const;

private:
    struct Stage {
        std::vector<ResnetBlock> resnets;
        std::vector<SpatialTransformer> attentions;
        std::optional<Conv2d> down;
    };

    UNetConfig cfg_;
    Conv2d conv_in_;
    Linear time_lin1_, time_lin2_;
    Conv2d hint_conv_in_, hint_conv_out_;
    std::vector<Conv2d> hint_blocks_;
    std::vector<Stage> stages_;
    ResnetBlock mid_res1_, mid_res2_;
    SpatialTransformer mid_attn_;
    std::vector<Conv2d> zero_convs_;  // one per skip
    Conv2d mid_zero_conv_;
};

}  // namespace gate::backend
