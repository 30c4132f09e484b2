#include "gate/backend/vae.hpp"

#include <cmath>
#include <stdexcept>

namespace gate::backend {

namespace {

Tensor to_tokens(const Tensor& chw) {
    const int64_t c = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
    Tensor out({h * w, c});
    for (int64_t ci = 0; ci < c; ++ci)
        for (int64_t i = 0; i < h * w; ++i) out.at(i, ci) = chw.data()[ci * h * w + i];
    return out;
}

Tensor to_map(const Tensor& tokens, int64_t h, int64_t w) {
    const int64_t c = tokens.dim(1);
    Tensor out({c, h, w});
    for (int64_t ci = 0; ci < c; ++ci)
        for (int64_t i = 0; i < h * w; ++i) out.data()[ci * h * w + i] = tokens.at(i, ci);
    return out;
}

// Zero-pad one row at the bottom and one column at the right; the family's
// encoder downsampling convolution pads asymmetrically.
Tensor pad_bottom_right(const Tensor& x) {
    const int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    Tensor out({c, h + 1, w + 1});
    for (int64_t ci = 0; ci < c; ++ci)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t xx = 0; xx < w; ++xx) out.at(ci, y, xx) = x.at(ci, y, xx);
    return out;
}

}  // namespace

Vae::ResBlock Vae::make_resblock(ParamStore& ps, const std::string& prefix, int64_t in,
                                 int64_t out) const {
    ResBlock r;
    r.norm1 = GroupNorm::make(ps, prefix + ".norm1", in, cfg_.norm_groups);
    r.conv1 = Conv2d::make(ps, prefix + ".conv1", in, out, 3, 1, 1);
    r.norm2 = GroupNorm::make(ps, prefix + ".norm2", out, cfg_.norm_groups);
    r.conv2 = Conv2d::make(ps, prefix + ".conv2", out, out, 3, 1, 1);
    if (in != out) r.shortcut = Conv2d::make(ps, prefix + ".conv_shortcut", in, out, 1, 1, 0);
    return r;
}

Tensor Vae::ResBlock::forward(const Tensor& x) const {
    Tensor h = conv1.forward(silu(norm1.forward(x)));
    h = conv2.forward(silu(norm2.forward(h)));
    Tensor skip = shortcut ? shortcut->forward(x) : x;
    add_inplace(h, skip);
    return h;
}

Vae::SelfAttention Vae::make_attention(ParamStore& ps, const std::string& prefix, int64_t ch) const {
    SelfAttention a;
    a.norm = GroupNorm::make(ps, prefix + ".group_norm", ch, cfg_.norm_groups);
    a.to_q = Linear::make(ps, prefix + ".to_q", ch, ch, true);
    a.to_k = Linear::make(ps, prefix + ".to_k", ch, ch, true);
    a.to_v = Linear::make(ps, prefix + ".to_v", ch, ch, true);
    a.to_out = Linear::make(ps, prefix + ".to_out.0", ch, ch, true);
    return a;
}

Tensor Vae::SelfAttention::forward(const Tensor& x) const {
    const int64_t h = x.dim(1), w = x.dim(2);
    Tensor tokens = to_tokens(norm.forward(x));
    Tensor q = to_q.forward(tokens);
    Tensor k = to_k.forward(tokens);
    Tensor v = to_v.forward(tokens);
    const int64_t n = q.dim(0), d = q.dim(1);
    const float scale = 1.0f / std::sqrt(static_cast<float>(d));
    Tensor scores({n, n});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < n; ++j) {
            double s = 0.0;
            for (int64_t dd = 0; dd < d; ++dd) s += q.at(i, dd) * k.at(j, dd);
            scores.at(i, j) = static_cast<float>(s) * scale;
        }
    Tensor probs = softmax_rows(scores);
    Tensor merged({n, d});
    for (int64_t i = 0; i < n; ++i)
        for (int64_t dd = 0; dd < d; ++dd) {
            double s = 0.0;
            for (int64_t j = 0; j < n; ++j) s += probs.at(i, j) * v.at(j, dd);
            merged.at(i, dd) = static_cast<float>(s);
        }
    Tensor out = to_map(to_out.forward(merged), h, w);
    add_inplace(out, x);
    return out;
}

Vae::Vae(ParamStore& ps, const VaeConfig& cfg) : cfg_(cfg) {
    const int stages = static_cast<int>(cfg_.channel_mult.size());

    enc_conv_in_ = Conv2d::make(ps, "encoder.conv_in", 3, cfg_.base_channels, 3, 1, 1);
    int64_t ch = cfg_.base_channels;
    for (int i = 0; i < stages; ++i) {
        const std::string p = "encoder.down_blocks." + std::to_string(i);
        const int64_t out_ch = cfg_.base_channels * cfg_.channel_mult[static_cast<size_t>(i)];
        EncStage st;
        for (int j = 0; j < cfg_.res_blocks; ++j) {
            st.resnets.push_back(make_resblock(ps, p + ".resnets." + std::to_string(j), ch, out_ch));
            ch = out_ch;
        }
        if (i + 1 < stages) st.down = Conv2d::make(ps, p + ".downsamplers.0.conv", ch, ch, 3, 2, 0);
        enc_stages_.push_back(std::move(st));
    }
    enc_mid_res1_ = make_resblock(ps, "encoder.mid_block.resnets.0", ch, ch);
    enc_mid_attn_ = make_attention(ps, "encoder.mid_block.attentions.0", ch);
    enc_mid_res2_ = make_resblock(ps, "encoder.mid_block.resnets.1", ch, ch);
    enc_norm_out_ = GroupNorm::make(ps, "encoder.conv_norm_out", ch, cfg_.norm_groups);
    enc_conv_out_ = Conv2d::make(ps, "encoder.conv_out", ch, cfg_.latent_channels * 2, 3, 1, 1);
    quant_conv_ = Conv2d::make(ps, "quant_conv", cfg_.latent_channels * 2, cfg_.latent_channels * 2, 1, 1, 0);

    post_quant_conv_ =
        Conv2d::make(ps, "post_quant_conv", cfg_.latent_channels, cfg_.latent_channels, 1, 1, 0);
    dec_conv_in_ = Conv2d::make(ps, "decoder.conv_in", cfg_.latent_channels, ch, 3, 1, 1);
    dec_mid_res1_ = make_resblock(ps, "decoder.mid_block.resnets.0", ch, ch);
    dec_mid_attn_ = make_attention(ps, "decoder.mid_block.attentions.0", ch);
    dec_mid_res2_ = make_resblock(ps, "decoder.mid_block.resnets.1", ch, ch);
    for (int i = 0; i < stages; ++i) {
        const std::string p = "decoder.up_blocks." + std::to_string(i);
        const int rev = stages - 1 - i;
        const int64_t out_ch = cfg_.base_channels * cfg_.channel_mult[static_cast<size_t>(rev)];
        DecStage st;
        for (int j = 0; j < cfg_.res_blocks + 1; ++j) {
            st.resnets.push_back(make_resblock(ps, p + ".resnets." + std::to_string(j), ch, out_ch));
            ch = out_ch;
        }
        if (i + 1 < stages) st.up = Conv2d::make(ps, p + ".upsamplers.0.conv", ch, ch, 3, 1, 1);
        dec_stages_.push_back(std::move(st));
    }
    dec_norm_out_ = GroupNorm::make(ps, "decoder.conv_norm_out", ch, cfg_.norm_groups);
    dec_conv_out_ = Conv2d::make(ps, "decoder.conv_out", ch, 3, 3, 1, 1);
}

Tensor Vae::encode_mode(const Tensor& rgb) const {
    if (rgb.rank() != 3 || rgb.dim(0) != 3) {
        throw std::invalid_argument("vae encode expects (3, h, w), got " + rgb.shape_str());
    }
    const int64_t scale = latent_scale();
    if (rgb.dim(1) < scale || rgb.dim(2) < scale || rgb.dim(1) % scale || rgb.dim(2) % scale) {
        throw std::invalid_argument("image dims " + rgb.shape_str() + " must be multiples of " +
                                    std::to_string(scale));
    }
    Tensor x(rgb.shape());
    for (int64_t i = 0; i < rgb.numel(); ++i) x[i] = rgb[i] * 2.0f - 1.0f;

    Tensor h = enc_conv_in_.forward(x);
    for (const EncStage& st : enc_stages_) {
        for (const ResBlock& r : st.resnets) h = r.forward(h);
        if (st.down) h = st.down->forward(pad_bottom_right(h));
    }
    h = enc_mid_res1_.forward(h);
    h = enc_mid_attn_.forward(h);
    h = enc_mid_res2_.forward(h);
    h = enc_conv_out_.forward(silu(enc_norm_out_.forward(h)));
    h = quant_conv_.forward(h);

    // mode of the diagonal Gaussian: the mean half of the moments
    Tensor latent({cfg_.latent_channels, h.dim(1), h.dim(2)});
    const int64_t plane = h.dim(1) * h.dim(2);
    for (int64_t c = 0; c < cfg_.latent_channels; ++c)
        for (int64_t i = 0; i < plane; ++i)
            latent.data()[c * plane + i] = h.data()[c * plane + i] * static_cast<float>(cfg_.scaling_factor);
    return latent;
}

Tensor Vae::decode(const Tensor& latent) const {
    if (latent.rank() != 3 || latent.dim(0) != cfg_.latent_channels) {
        throw std::invalid_argument("vae decode expects (" + std::to_string(cfg_.latent_channels) +
                                    ", h, w), got " + latent.shape_str());
    }
    Tensor z = scale(latent, static_cast<float>(1.0 / cfg_.scaling_factor));
    Tensor h = dec_conv_in_.forward(post_quant_conv_.forward(z));
    h = dec_mid_res1_.forward(h);
    h = dec_mid_attn_.forward(h);
    h = dec_mid_res2_.forward(h);
    for (const DecStage& st : dec_stages_) {
        for (const ResBlock& r : st.resnets) h = r.forward(h);
        if (st.up) h = st.up->forward(upsample_nearest2x(h));
    }
    h = dec_conv_out_.forward(silu(dec_norm_out_.forward(h)));
    Tensor rgb(h.shape());
    for (int64_t i = 0; i < h.numel(); ++i) {
        rgb[i] = std::min(1.0f, std::max(0.0f, (h[i] + 1.0f) * 0.5f));
    }
    return rgb;
}

}  // namespace gate::backend
