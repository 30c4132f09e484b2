#pragma once

#include <optional>
#include <string>
#include <vector>

#include "gate/backend/nn.hpp"

namespace gate::backend {

struct VaeConfig {
    int64_t base_channels = 128;
    std::vector<int> channel_mult = {1, 2, 4, 4};
    int res_blocks = 2;
    int64_t latent_channels = 4;
    int norm_groups = 32;
    double scaling_factor = 0.18215;
};

// Autoencoder of the v1 family: 8x spatial reduction, diagonal-Gaussian
// moments. Encoding takes the distribution mode (the mean), which keeps the
// whole pipeline deterministic.
class Vae {
public:
    Vae(ParamStore& ps, const VaeConfig& cfg);

    int latent_scale() const { return 1 << (static_cast<int>(cfg_.channel_mult.size()) - 1); }
    const VaeConfig& config() const { return cfg_; }

    // rgb in [0, 1], dims divisible by latent_scale -> (latent_channels, h/8, w/8), scaled.
    Tensor encode_mode(const Tensor& rgb) const;
    // latent -> rgb in [0, 1].
    Tensor decode(const Tensor& latent) const;

private:
    struct ResBlock {
        GroupNorm norm1, norm2;
        Conv2d conv1, conv2;
        std::optional<Conv2d> shortcut;
        Tensor forward(const Tensor& x) const;
    };
    struct SelfAttention {
        GroupNorm norm;
        Linear to_q, to_k, to_v, to_out;
        Tensor forward(const Tensor& x) const;
    };
    ResBlock make_resblock(ParamStore& ps, const std::string& prefix, int64_t in, int64_t out) const;
    SelfAttention make_attention(ParamStore& ps, const std::string& prefix, int64_t ch) const;

    VaeConfig cfg_;
    // encoder
    Conv2d enc_conv_in_;
    struct EncStage {
        std::vector<ResBlock> resnets;
        std::optional<Conv2d> down;
    };
    std::vector<EncStage> enc_stages_;
    ResBlock enc_mid_res1_, enc_mid_res2_;
    SelfAttention enc_mid_attn_;
    GroupNorm enc_norm_out_;
    Conv2d enc_conv_out_;  // -> 2 * latent_channels moments
    Conv2d quant_conv_;
    // decoder
    Conv2d post_quant_conv_;
    Conv2d dec_conv_in_;
    ResBlock dec_mid_res1_, dec_mid_res2_;
    SelfAttention dec_mid_attn_;
    struct DecStage {
        std::vector<ResBlock> resnets;
        std::optional<Conv2d> up;
    };
    std::vector<DecStage> dec_stages_;
    GroupNorm dec_norm_out_;
    Conv2d dec_conv_out_;
};

}  // namespace gate::backend
