#include "gate/backend/unet.hpp"

#include <stdexcept>

namespace gate::backend {

UNet::UNet(ParamStore& ps, const UNetConfig& cfg) : cfg_(cfg) {
    const int stages = static_cast<int>(cfg_.channel_mult.size());
    if (cfg_.stage_attention.size() != cfg_.channel_mult.size()) {
        throw std::invalid_argument("stage_attention size must match channel_mult");
    }
    const int64_t temb_dim = cfg_.base_channels * 4;

    conv_in_ = Conv2d::make(ps, "conv_in", cfg_.in_channels, cfg_.base_channels, 3, 1, 1);
    time_lin1_ = Linear::make(ps, "time_embedding.linear_1", cfg_.base_channels, temb_dim, true);
    time_lin2_ = Linear::make(ps, "time_embedding.linear_2", temb_dim, temb_dim, true);

    int64_t ch = cfg_.base_channels;
    skip_channels_.push_back(ch);
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
            skip_channels_.push_back(ch);
        }
        if (i + 1 < stages) {
            st.resample = Conv2d::make(ps, p + ".downsamplers.0.conv", ch, ch, 3, 2, 1);
            skip_channels_.push_back(ch);
        }
        down_.push_back(std::move(st));
    }

    mid_res1_ = ResnetBlock::make(ps, "mid_block.resnets.0", ch, ch, cfg_.norm_groups, temb_dim);
    mid_attn_ = SpatialTransformer::make(ps, "mid_block.attentions.0", ch, cfg_.heads, cfg_.context_dim,
                                         cfg_.norm_groups);
    mid_res2_ = ResnetBlock::make(ps, "mid_block.resnets.1", ch, ch, cfg_.norm_groups, temb_dim);

    std::vector<int64_t> skips = skip_channels_;
    for (int i = 0; i < stages; ++i) {
        const std::string p = "up_blocks." + std::to_string(i);
        const int rev = stages - 1 - i;
        const int64_t out_ch = cfg_.base_channels * cfg_.channel_mult[static_cast<size_t>(rev)];
        const bool attn = cfg_.stage_attention[static_cast<size_t>(rev)];
        Stage st;
        for (int j = 0; j <= cfg_.res_blocks; ++j) {
            const int64_t skip_ch = skips.back();
            skips.pop_back();
            st.resnets.push_back(ResnetBlock::make(ps, p + ".resnets." + std::to_string(j), ch + skip_ch,
                                                   out_ch, cfg_.norm_groups, temb_dim));
            ch = out_ch;
            if (attn) {
                st.attentions.push_back(SpatialTransformer::make(
                    ps, p + ".attentions." + std::to_string(j), ch, cfg_.heads, cfg_.context_dim, cfg_.norm_groups));
            }
        }
        if (i + 1 < stages) {
            st.resample = Conv2d::make(ps, p + ".upsamplers.0.conv", ch, ch, 3, 1, 1);
        }
        up_.push_back(std::move(st));
    }

    out_norm_ = GroupNorm::make(ps, "conv_norm_out", ch, cfg_.norm_groups);
    out_conv_ = Conv2d::make(ps, "conv_out", ch, cfg_.out_channels, 3, 1, 1);
}

Tensor UNet::forward(const Tensor& x, int timestep, const Tensor& context,
                     const ControlResiduals* control, CaptureSink* sink) const {
    if (x.rank() != 3 || x.dim(0) != cfg_.in_channels) {
        throw std::invalid_argument("unet input must be (" + std::to_string(cfg_.in_channels) +
                                    ", h, w), got " + x.shape_str());
    }
    if (context.rank() != 2 || context.dim(1) != cfg_.context_dim) {
        throw std::invalid_argument("unet context must be (tokens, " +
                                    std::to_string(cfg_.context_dim) + "), got " + context.shape_str());
    }

    Tensor temb = time_lin2_.forward(
        silu(time_lin1_.forward(timestep_embedding(timestep, static_cast<int>(cfg_.base_channels)))));

    Tensor h = conv_in_.forward(x);
    if (sink && sink->want_block_trace) sink->block_trace.push_back({"conv_in", h});

    std::vector<Tensor> skips;
    skips.push_back(h);
    const int stages = static_cast<int>(down_.size());
    for (int i = 0; i < stages; ++i) {
        const Stage& st = down_[static_cast<size_t>(i)];
        for (size_t j = 0; j < st.resnets.size(); ++j) {
            h = st.resnets[j].forward(h, &temb);
            if (!st.attentions.empty()) h = st.attentions[j].forward(h, context);
            skips.push_back(h);
        }
        if (st.resample) {
            h = st.resample->forward(h);
            skips.push_back(h);
        }
        if (sink && sink->want_block_trace) {
            sink->block_trace.push_back({"down_" + std::to_string(i), h});
        }
    }

    h = mid_res1_.forward(h, &temb);
    h = mid_attn_.forward(h, context);
    h = mid_res2_.forward(h, &temb);

    if (control) {
        if (control->skips.size() != skips.size()) {
            throw std::invalid_argument("control residual count mismatch: " +
                                        std::to_string(control->skips.size()) + " vs " +
                                        std::to_string(skips.size()));
        }
        for (size_t i = 0; i < skips.size(); ++i) add_inplace(skips[i], control->skips[i]);
        add_inplace(h, control->mid);
    }
    if (sink && sink->want_block_trace) sink->block_trace.push_back({"mid", h});

    for (int i = 0; i < stages; ++i) {
        const Stage& st = up_[static_cast<size_t>(i)];
        for (size_t j = 0; j < st.resnets.size(); ++j) {
            Tensor skip = std::move(skips.back());
            skips.pop_back();
            Tensor cat = core::concat_channels({h, skip});
            h = st.resnets[j].forward(cat, &temb);
            if (!st.attentions.empty()) {
                Tensor probs;
                const bool want_attn = sink && sink->want_cross_attention;
                h = st.attentions[j].forward(h, context, want_attn ? &probs : nullptr);
                if (want_attn) {
                    sink->cross_attention.push_back({"up_" + std::to_string(i) + ".attn." + std::to_string(j),
                                                     std::move(probs), h.dim(1), h.dim(2)});
                }
            }
        }
        if (sink && (sink->want_stage_outputs || sink->want_block_trace)) {
            CaptureSink::Named named{"up_" + std::to_string(i), h};
            if (sink->want_stage_outputs) sink->stage_outputs.push_back(named);
            if (sink->want_block_trace) sink->block_trace.push_back(std::move(named));
        }
        if (st.resample) h = st.resample->forward(upsample_nearest2x(h));
    }

    return out_conv_.forward(silu(out_norm_.forward(h)));
}

}  // namespace gate::backend
