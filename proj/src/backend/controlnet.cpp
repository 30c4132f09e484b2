#include "gate/backend/controlnet.hpp"

#include <stdexcept>

namespace gate::backend {

ControlNet::ControlNet(ParamStore& ps, const UNetConfig& cfg, std::vector<int64_t> hint_channels)
    : cfg_(cfg) {
    const int stages = static_cast<int>(cfg_.channel_mult.size());
    const int64_t temb_dim = cfg_.base_channels * 4;
    if (hint_channels.size() < 2) throw std::invalid_argument("hint_channels needs >= 2 entries");

    conv_in_ = Conv2d::make(ps, "conv_in", cfg_.in_channels, cfg_.base_channels, 3, 1, 1);
    time_lin1_ = Linear::make(ps, "time_embedding.linear_1", cfg_.base_channels, temb_dim, true);
    time_lin2_ = Linear::make(ps, "time_embedding.linear_2", temb_dim, temb_dim, true);

    const std::string ce = "controlnet_cond_embedding";
    hint_conv_in_ = Conv2d::make(ps, ce + ".conv_in", 3, hint_channels.front(), 3, 1, 1);
    int blk = 0;
    for (size_t i = 0; i + 1 < hint_channels.size(); ++i) {
        hint_blocks_.push_back(Conv2d::make(ps, ce + ".blocks." + std::to_string(blk++), hint_channels[i],
                                            hint_channels[i], 3, 1, 1));
        hint_blocks_.push_back(Conv2d::make(ps, ce + ".blocks." + std::to_string(blk++), hint_channels[i],
                                            hint_channels[i + 1], 3, 2, 1));
    }
    hint_conv_out_ = Conv2d::make(ps, ce + ".conv_out", hint_channels.back(), cfg_.base_channels, 3, 1, 1);

    int64_t ch = cfg_.base_channels;
    int zc = 0;
    auto add_zero_conv = [&](int64_t c) {
        zero_convs_.push_back(Conv2d::make(ps, "controlnet_down_blocks." + std::to_string(zc++), c, c, 1, 1, 0));
    };
    add_zero_conv(ch);
    for (int i = 0; i < stages; ++i) {
        const std::string p = "down_blocks." + std::to_string(i);
        const int64_t out_ch = cfg_.base_channels * cfg_.channel_mult[static_cast<size_t>(i)];
        Stage st;
        for (int j = 0; j < cfg_.res_blocks; ++j) {
            st.resnets.push_back(
                ResnetBlock::make(ps, p + ".resnets." + std::to_string(j), ch, out_ch, cfg_.norm_groups, temb_dim));
            ch = out_ch;
            if (cfg_.stage_attention[static_cast<size_t>(i)]) {
                st.attentions.push_back(SpatialTransformer::make(
                    ps, p + ".attentions." + std::to_string(j), ch, cfg_.heads, cfg_.context_dim, cfg_.norm_groups));
            }
            add_zero_conv(ch);
        }
        if (i + 1 < stages) {
            st.down = Conv2d::make(ps, p + ".downsamplers.0.conv", ch, ch, 3, 2, 1);
            add_zero_conv(ch);
        }
        stages_.push_back(std::move(st));
    }

    mid_res1_ = ResnetBlock::make(ps, "mid_block.resnets.0", ch, ch, cfg_.norm_groups, temb_dim);
    mid_attn_ = SpatialTransformer::make(ps, "mid_block.attentions.0", ch, cfg_.heads, cfg_.context_dim,
                                         cfg_.norm_groups);
    mid_res2_ = ResnetBlock::make(ps, "mid_block.resnets.1", ch, ch, cfg_.norm_groups, temb_dim);
    mid_zero_conv_ = Conv2d::make(ps, "controlnet_mid_block", ch, ch, 1, 1, 0);
}

ControlResiduals ControlNet::forward(const Tensor& x, int timestep, const Tensor& context,
                                     const Tensor& hint) const {
    if (hint.rank() != 3 || (hint.dim(0) != 1 && hint.dim(0) != 3)) {
        throw std::invalid_argument("control hint must be (1|3, h, w), got " + hint.shape_str());
    }
    // Replicate a single-channel hint; the embedder consumes three channels.
    Tensor hint3 = hint;
    if (hint.dim(0) == 1) {
        hint3 = Tensor({3, hint.dim(1), hint.dim(2)});
        for (int64_t c = 0; c < 3; ++c)
            for (int64_t i = 0; i < hint.dim(1) * hint.dim(2); ++i) hint3.data()[c * hint.dim(1) * hint.dim(2) + i] = hint.data()[i];
    }

    Tensor cond = silu(hint_conv_in_.forward(hint3));
    for (const Conv2d& c : hint_blocks_) cond = silu(c.forward(cond));
    cond = hint_conv_out_.forward(cond);
    if (cond.dim(1) != x.dim(1) || cond.dim(2) != x.dim(2)) {
        throw std::invalid_argument("control hint resolution " + hint.shape_str() +
                                    " does not reduce to latent dims " + x.shape_str());
    }

    Tensor temb = time_lin2_.forward(
        silu(time_lin1_.forward(timestep_embedding(timestep, static_cast<int>(cfg_.base_channels)))));

    Tensor h = conv_in_.forward(x);
    add_inplace(h, cond);

    ControlResiduals out;
    size_t zi = 0;
    out.skips.push_back(zero_convs_[zi++].forward(h));
    for (const Stage& st : stages_) {
        for (size_t j = 0; j < st.resnets.size(); ++j) {
            h = st.resnets[j].forward(h, &temb);
            if (!st.attentions.empty()) h = st.attentions[j].forward(h, context);
            out.skips.push_back(zero_convs_[zi++].forward(h));
        }
        if (st.down) {
            h = st.down->forward(h);
            out.skips.push_back(zero_convs_[zi++].forward(h));
        }
    }
    h = mid_res1_.forward(h, &temb);
    h = mid_attn_.forward(h, context);
    h = mid_res2_.forward(h, &temb);
    out.mid = mid_zero_conv_.forward(h);
    return out;
}

}  // namespace gate::backend
