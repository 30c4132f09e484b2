#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gate/backend/nn.hpp"

namespace gate::backend {

struct UNetConfig {
    int64_t in_channels = 4;
    int64_t out_channels = 4;
    int64_t base_channels = 320;
    std::vector<int> channel_mult = {1, 2, 4, 4};
    std::vector<bool> stage_attention = {true, true, true, false};
    int res_blocks = 2;  // per down stage; up stages use res_blocks + 1
    int heads = 8;
    int64_t context_dim = 768;
    int norm_groups = 32;
};

// Sinks for activations captured during a forward pass. Conv stage outputs
// and cross-attention maps come from the upsampling path only; the block
// trace covers the whole pass.
struct CaptureSink {
    bool want_stage_outputs = false;
    bool want_cross_attention = false;
    bool want_block_trace = false;

    struct Named {
        std::string name;
        Tensor value;
    };
    struct AttnMap {
        std::string name;
        Tensor probs;  // (h*w, tokens), head-averaged post-softmax
        int64_t h = 0, w = 0;
    };
    std::vector<Named> stage_outputs;  // one per upsampling resolution
    std::vector<AttnMap> cross_attention;
    std::vector<Named> block_trace;
};

// Per-skip additive residuals produced by the control module; applied to the
// skip tensors and the mid-block output.
struct ControlResiduals {
    std::vector<Tensor> skips;  // index 0 = first pushed (conv_in output)
    Tensor mid;
};

class UNet {
public:
    UNet(ParamStore& ps, const UNetConfig& cfg);

    // x: (in_channels, h, w); context: (tokens, context_dim).
    Tensor forward(const Tensor& x, int timestep, const Tensor& context,
                   const ControlResiduals* control = nullptr, CaptureSink* sink = nullptr) const;

    const UNetConfig& config() const { return cfg_; }
    int upsampling_stage_count() const { return static_cast<int>(cfg_.channel_mult.size()); }
    // Blocks a full trace visits: conv_in + down stages + mid + up stages.
    int interior_block_count() const { return 2 * static_cast<int>(cfg_.channel_mult.size()) + 2; }
    int skip_count() const { return static_cast<int>(skip_channels_.size()); }
    const std::vector<int64_t>& skip_channels() const { return skip_channels_; }

private:
    struct Stage {
        std::vector<ResnetBlock> resnets;
        std::vector<SpatialTransformer> attentions;  // empty when the stage has none
        std::optional<Conv2d> resample;              // down or up conv
    };

    UNetConfig cfg_;
    Conv2d conv_in_;
    Linear time_lin1_, time_lin2_;
    std::vector<Stage> down_;
    ResnetBlock mid_res1_, mid_res2_;
    SpatialTransformer mid_attn_;
    std::vector<Stage> up_;
    GroupNorm out_norm_;
    Conv2d out_conv_;
    std::vector<int64_t> skip_channels_;
};

}  // namespace gate::backend
