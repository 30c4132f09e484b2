#include "gate/backend/nn.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

#include "gate/core/rng.hpp"

namespace gate::backend {

using MatrixRM = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatrixRM>;
using ConstMapRM = Eigen::Map<const MatrixRM>;

Tensor& ParamStore::create(const std::string& name, std::vector<int64_t> shape) {
    auto [it, inserted] = params_.emplace(name, Tensor(std::move(shape)));
    if (!inserted) throw std::logic_error("duplicate parameter: " + name);
    return it->second;
}

Tensor* ParamStore::find(const std::string& name) {
    auto it = params_.find(name);
    return it == params_.end() ? nullptr : &it->second;
}

const Tensor* ParamStore::find(const std::string& name) const {
    auto it = params_.find(name);
    return it == params_.end() ? nullptr : &it->second;
}

void ParamStore::set_hint(const std::string& name, int64_t fan_in) { hints_[name] = {fan_in}; }

void ParamStore::seed_init(uint64_t base_seed) {
    for (auto& [name, t] : params_) {
        auto hint = hints_.find(name);
        const int64_t fan_in = hint == hints_.end() ? 1 : hint->second.fan_in;
        if (fan_in == 0) {
            std::fill(t.storage().begin(), t.storage().end(), 0.0f);
        } else if (fan_in == -1) {
            std::fill(t.storage().begin(), t.storage().end(), 1.0f);
        } else {
            core::Rng rng(core::derive_seed(base_seed, name));
            const float std = 1.0f / std::sqrt(static_cast<float>(fan_in));
            for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.normalf() * std;
        }
    }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
        throw std::invalid_argument("matmul shape mismatch: " + a.shape_str() + " x " + b.shape_str());
    }
    Tensor out({a.dim(0), b.dim(1)});
    ConstMapRM ma(a.data(), a.dim(0), a.dim(1));
    ConstMapRM mb(b.data(), b.dim(0), b.dim(1));
    MapRM mo(out.data(), out.dim(0), out.dim(1));
    mo.noalias() = ma * mb;
    return out;
}

Tensor silu(const Tensor& x) {
    Tensor out(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) {
        const float v = x[i];
        out[i] = v / (1.0f + std::exp(-v));
    }
    return out;
}

Tensor gelu_quick(const Tensor& x) {
    Tensor out(x.shape());
    for (int64_t i = 0; i < x.numel(); ++i) {
        const float v = x[i];
        out[i] = v / (1.0f + std::exp(-1.702f * v));
    }
    return out;
}

Tensor gelu_erf(const Tensor& x) {
    Tensor out(x.shape());
    constexpr float inv_sqrt2 = 0.7071067811865476f;
    for (int64_t i = 0; i < x.numel(); ++i) {
        const float v = x[i];
        out[i] = 0.5f * v * (1.0f + std::erf(v * inv_sqrt2));
    }
    return out;
}

Tensor softmax_rows(const Tensor& x) {
    if (x.rank() != 2) throw std::invalid_argument("softmax_rows expects 2-D");
    Tensor out(x.shape());
    const int64_t n = x.dim(0), d = x.dim(1);
    for (int64_t i = 0; i < n; ++i) {
        float mx = x.at(i, 0);
        for (int64_t j = 1; j < d; ++j) mx = std::max(mx, x.at(i, j));
        double sum = 0.0;
        for (int64_t j = 0; j < d; ++j) {
            const float e = std::exp(x.at(i, j) - mx);
            out.at(i, j) = e;
            sum += e;
        }
        const float inv = static_cast<float>(1.0 / sum);
        for (int64_t j = 0; j < d; ++j) out.at(i, j) *= inv;
    }
    return out;
}

Tensor timestep_embedding(int t, int dim) {
    const int half = dim / 2;
    Tensor out({1, dim});
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * static_cast<double>(i) / half);
        const double arg = static_cast<double>(t) * freq;
        out.at(0, i) = static_cast<float>(std::cos(arg));
        out.at(0, half + i) = static_cast<float>(std::sin(arg));
    }
    return out;
}

Linear Linear::make(ParamStore& ps, const std::string& prefix, int64_t in, int64_t out, bool bias) {
    Linear l;
    l.w = &ps.create(prefix + ".weight", {out, in});
    ps.set_hint(prefix + ".weight", in);
    if (bias) {
        l.b = &ps.create(prefix + ".bias", {out});
        ps.set_hint(prefix + ".bias", 0);
    }
    return l;
}

Tensor Linear::forward(const Tensor& x) const {
    if (x.rank() != 2 || x.dim(1) != w->dim(1)) {
        throw std::invalid_argument("linear input mismatch: " + x.shape_str() + " vs weight " +
                                    w->shape_str());
    }
    const int64_t n = x.dim(0), in = w->dim(1), out_dim = w->dim(0);
    Tensor out({n, out_dim});
    ConstMapRM mx(x.data(), n, in);
    ConstMapRM mw(w->data(), out_dim, in);
    MapRM mo(out.data(), n, out_dim);
    mo.noalias() = mx * mw.transpose();
    if (b) {
        for (int64_t i = 0; i < n; ++i)
            for (int64_t j = 0; j < out_dim; ++j) out.at(i, j) += (*b)[j];
    }
    return out;
}

Conv2d Conv2d::make(ParamStore& ps, const std::string& prefix, int64_t in, int64_t out, int k,
                    int stride, int pad) {
    Conv2d c;
    c.w = &ps.create(prefix + ".weight", {out, in, k, k});
    ps.set_hint(prefix + ".weight", in * k * k);
    c.b = &ps.create(prefix + ".bias", {out});
    ps.set_hint(prefix + ".bias", 0);
    c.stride = stride;
    c.pad = pad;
    return c;
}

Tensor Conv2d::forward(const Tensor& x) const {
    if (x.rank() != 3 || x.dim(0) != w->dim(1)) {
        throw std::invalid_argument("conv input mismatch: " + x.shape_str() + " vs weight " +
                                    w->shape_str());
    }
    const int64_t cin = x.dim(0), h = x.dim(1), wd = x.dim(2);
    const int64_t cout = w->dim(0);
    const int64_t k = w->dim(2);
    const int64_t oh = (h + 2 * pad - k) / stride + 1;
    const int64_t ow = (wd + 2 * pad - k) / stride + 1;
    if (oh <= 0 || ow <= 0) {
        throw std::invalid_argument("conv output would be empty for input " + x.shape_str());
    }

    // im2col + GEMM
    Tensor cols({cin * k * k, oh * ow});
    for (int64_t c = 0; c < cin; ++c) {
        for (int64_t ky = 0; ky < k; ++ky) {
            for (int64_t kx = 0; kx < k; ++kx) {
                const int64_t row = (c * k + ky) * k + kx;
                float* dst = cols.data() + row * oh * ow;
                for (int64_t oy = 0; oy < oh; ++oy) {
                    const int64_t iy = oy * stride + ky - pad;
                    for (int64_t ox = 0; ox < ow; ++ox) {
                        const int64_t ix = ox * stride + kx - pad;
                        dst[oy * ow + ox] = (iy >= 0 && iy < h && ix >= 0 && ix < wd) ? x.at(c, iy, ix) : 0.0f;
                    }
                }
            }
        }
    }
    Tensor out({cout, oh, ow});
    ConstMapRM mw(w->data(), cout, cin * k * k);
    ConstMapRM mc(cols.data(), cin * k * k, oh * ow);
    MapRM mo(out.data(), cout, oh * ow);
    mo.noalias() = mw * mc;
    for (int64_t c = 0; c < cout; ++c) {
        float* dst = out.data() + c * oh * ow;
        const float bias = (*b)[c];
        for (int64_t i = 0; i < oh * ow; ++i) dst[i] += bias;
    }
    return out;
}

GroupNorm GroupNorm::make(ParamStore& ps, const std::string& prefix, int64_t channels, int groups) {
    if (channels % groups != 0) {
        throw std::invalid_argument("group norm channels " + std::to_string(channels) +
                                    " not divisible by groups " + std::to_string(groups));
    }
    GroupNorm g;
    g.w = &ps.create(prefix + ".weight", {channels});
    ps.set_hint(prefix + ".weight", -1);
    g.b = &ps.create(prefix + ".bias", {channels});
    ps.set_hint(prefix + ".bias", 0);
    g.groups = groups;
    return g;
}

Tensor GroupNorm::forward(const Tensor& x) const {
    if (x.rank() != 3 || x.dim(0) != w->numel()) {
        throw std::invalid_argument("group norm input mismatch: " + x.shape_str());
    }
    const int64_t c = x.dim(0), h = x.dim(1), wd = x.dim(2);
    const int64_t per = c / groups;
    Tensor out(x.shape());
    for (int g = 0; g < groups; ++g) {
        const int64_t c0 = g * per;
        double mean = 0.0;
        for (int64_t ci = c0; ci < c0 + per; ++ci)
            for (int64_t i = 0; i < h * wd; ++i) mean += x.data()[ci * h * wd + i];
        mean /= static_cast<double>(per * h * wd);
        double var = 0.0;
        for (int64_t ci = c0; ci < c0 + per; ++ci)
            for (int64_t i = 0; i < h * wd; ++i) {
                const double d = x.data()[ci * h * wd + i] - mean;
                var += d * d;
            }
        var /= static_cast<double>(per * h * wd);
        const float inv = static_cast<float>(1.0 / std::sqrt(var + eps));
        const float m = static_cast<float>(mean);
        for (int64_t ci = c0; ci < c0 + per; ++ci) {
            const float scale = (*w)[ci] * inv;
            const float shift = (*b)[ci];
            const float* src = x.data() + ci * h * wd;
            float* dst = out.data() + ci * h * wd;
            for (int64_t i = 0; i < h * wd; ++i) dst[i] = (src[i] - m) * scale + shift;
        }
    }
    return out;
}

LayerNorm LayerNorm::make(ParamStore& ps, const std::string& prefix, int64_t dim) {
    LayerNorm l;
    l.w = &ps.create(prefix + ".weight", {dim});
    ps.set_hint(prefix + ".weight", -1);
    l.b = &ps.create(prefix + ".bias", {dim});
    ps.set_hint(prefix + ".bias", 0);
    return l;
}

Tensor LayerNorm::forward(const Tensor& x) const {
    if (x.rank() != 2 || x.dim(1) != w->numel()) {
        throw std::invalid_argument("layer norm input mismatch: " + x.shape_str());
    }
    const int64_t n = x.dim(0), d = x.dim(1);
    Tensor out(x.shape());
    for (int64_t i = 0; i < n; ++i) {
        double mean = 0.0;
        for (int64_t j = 0; j < d; ++j) mean += x.at(i, j);
        mean /= static_cast<double>(d);
        double var = 0.0;
        for (int64_t j = 0; j < d; ++j) {
            const double diff = x.at(i, j) - mean;
            var += diff * diff;
        }
        var /= static_cast<double>(d);
        const float inv = static_cast<float>(1.0 / std::sqrt(var + eps));
        for (int64_t j = 0; j < d; ++j) {
            out.at(i, j) = (x.at(i, j) - static_cast<float>(mean)) * inv * (*w)[j] + (*b)[j];
        }
    }
    return out;
}

MultiHeadAttention MultiHeadAttention::make(ParamStore& ps, const std::string& prefix,
                                            int64_t query_dim, int64_t context_dim, int heads) {
    if (query_dim % heads != 0) throw std::invalid_argument("attention dim not divisible by heads");
    MultiHeadAttention a;
    a.to_q = Linear::make(ps, prefix + ".to_q", query_dim, query_dim, false);
    a.to_k = Linear::make(ps, prefix + ".to_k", context_dim, query_dim, false);
    a.to_v = Linear::make(ps, prefix + ".to_v", context_dim, query_dim, false);
    a.to_out = Linear::make(ps, prefix + ".to_out.0", query_dim, query_dim, true);
    a.heads = heads;
    return a;
}

Tensor MultiHeadAttention::forward(const Tensor& x, const Tensor& context, Tensor* attn_out,
                                   bool causal) const {
    const int64_t q_len = x.dim(0);
    const int64_t kv_len = context.dim(0);
    const int64_t dim = to_q.w->dim(0);
    const int64_t dh = dim / heads;
    const float scale = 1.0f / std::sqrt(static_cast<float>(dh));

    Tensor q = to_q.forward(x);        // (q_len, dim)
    Tensor k = to_k.forward(context);  // (kv_len, dim)
    Tensor v = to_v.forward(context);

    Tensor merged({q_len, dim});
    Tensor probs_mean;
    if (attn_out) probs_mean = Tensor::zeros({q_len, kv_len});

    for (int hd = 0; hd < heads; ++hd) {
        // scores = q_h k_h^T * scale
        Tensor scores({q_len, kv_len});
        for (int64_t i = 0; i < q_len; ++i) {
            for (int64_t j = 0; j < kv_len; ++j) {
                double s = 0.0;
                for (int64_t d = 0; d < dh; ++d) s += q.at(i, hd * dh + d) * k.at(j, hd * dh + d);
                scores.at(i, j) = static_cast<float>(s) * scale;
            }
        }
        if (causal) {
            for (int64_t i = 0; i < q_len; ++i)
                for (int64_t j = i + 1; j < kv_len; ++j) scores.at(i, j) = -1e9f;
        }
        Tensor probs = softmax_rows(scores);
        if (attn_out) add_inplace(probs_mean, probs);
        for (int64_t i = 0; i < q_len; ++i) {
            for (int64_t d = 0; d < dh; ++d) {
                double s = 0.0;
                for (int64_t j = 0; j < kv_len; ++j) s += probs.at(i, j) * v.at(j, hd * dh + d);
                merged.at(i, hd * dh + d) = static_cast<float>(s);
            }
        }
    }
    if (attn_out) {
        scale_inplace(probs_mean, 1.0f / static_cast<float>(heads));
        *attn_out = std::move(probs_mean);
    }
    return to_out.forward(merged);
}

Tensor upsample_nearest2x(const Tensor& x) {
    const int64_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
    Tensor out({c, h * 2, w * 2});
    for (int64_t ci = 0; ci < c; ++ci)
        for (int64_t y = 0; y < h * 2; ++y)
            for (int64_t xx = 0; xx < w * 2; ++xx) out.at(ci, y, xx) = x.at(ci, y / 2, xx / 2);
    return out;
}

Tensor spatial_to_tokens(const Tensor& chw) {
    const int64_t c = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
    Tensor out({h * w, c});
    for (int64_t ci = 0; ci < c; ++ci)
        for (int64_t i = 0; i < h * w; ++i) out.at(i, ci) = chw.data()[ci * h * w + i];
    return out;
}

Tensor tokens_to_spatial(const Tensor& tokens, int64_t h, int64_t w) {
    const int64_t c = tokens.dim(1);
    Tensor out({c, h, w});
    for (int64_t ci = 0; ci < c; ++ci)
        for (int64_t i = 0; i < h * w; ++i) out.data()[ci * h * w + i] = tokens.at(i, ci);
    return out;
}

ResnetBlock ResnetBlock::make(ParamStore& ps, const std::string& prefix, int64_t in, int64_t out,
                              int norm_groups, int64_t temb_dim) {
    ResnetBlock r;
    r.norm1 = GroupNorm::make(ps, prefix + ".norm1", in, norm_groups);
    r.conv1 = Conv2d::make(ps, prefix + ".conv1", in, out, 3, 1, 1);
    if (temb_dim > 0) {
        r.time_emb_proj = Linear::make(ps, prefix + ".time_emb_proj", temb_dim, out, true);
        r.has_temb = true;
    }
    r.norm2 = GroupNorm::make(ps, prefix + ".norm2", out, norm_groups);
    r.conv2 = Conv2d::make(ps, prefix + ".conv2", out, out, 3, 1, 1);
    if (in != out) r.shortcut = Conv2d::make(ps, prefix + ".conv_shortcut", in, out, 1, 1, 0);
    return r;
}

Tensor ResnetBlock::forward(const Tensor& x, const Tensor* temb) const {
    Tensor h = conv1.forward(silu(norm1.forward(x)));
    if (has_temb) {
        if (!temb) throw std::invalid_argument("resnet block requires a timestep embedding");
        Tensor row = time_emb_proj.forward(silu(*temb));
        const int64_t c = h.dim(0), hw = h.dim(1) * h.dim(2);
        for (int64_t ci = 0; ci < c; ++ci) {
            float* dst = h.data() + ci * hw;
            const float v = row.at(0, ci);
            for (int64_t i = 0; i < hw; ++i) dst[i] += v;
        }
    }
    h = conv2.forward(silu(norm2.forward(h)));
    Tensor skip = shortcut ? shortcut->forward(x) : x;
    add_inplace(h, skip);
    return h;
}

SpatialTransformer SpatialTransformer::make(ParamStore& ps, const std::string& prefix, int64_t ch,
                                            int heads, int64_t context_dim, int norm_groups) {
    SpatialTransformer t;
    t.norm = GroupNorm::make(ps, prefix + ".norm", ch, norm_groups);
    t.proj_in = Conv2d::make(ps, prefix + ".proj_in", ch, ch, 1, 1, 0);
    const std::string tb = prefix + ".transformer_blocks.0";
    t.norm1 = LayerNorm::make(ps, tb + ".norm1", ch);
    t.attn1 = MultiHeadAttention::make(ps, tb + ".attn1", ch, ch, heads);
    t.norm2 = LayerNorm::make(ps, tb + ".norm2", ch);
    t.attn2 = MultiHeadAttention::make(ps, tb + ".attn2", ch, context_dim, heads);
    t.norm3 = LayerNorm::make(ps, tb + ".norm3", ch);
    t.ff_in = Linear::make(ps, tb + ".ff.net.0.proj", ch, ch * 8, true);
    t.ff_out = Linear::make(ps, tb + ".ff.net.2", ch * 4, ch, true);
    t.proj_out = Conv2d::make(ps, prefix + ".proj_out", ch, ch, 1, 1, 0);
    return t;
}

Tensor SpatialTransformer::forward(const Tensor& x, const Tensor& context, Tensor* cross_probs) const {
    const int64_t h = x.dim(1), w = x.dim(2);
    Tensor tokens = spatial_to_tokens(proj_in.forward(norm.forward(x)));

    Tensor n1 = norm1.forward(tokens);
    add_inplace(tokens, attn1.forward(n1, n1));
    add_inplace(tokens, attn2.forward(norm2.forward(tokens), context, cross_probs));

    Tensor ff = ff_in.forward(norm3.forward(tokens));
    const int64_t inner = ff.dim(1) / 2;
    Tensor val({ff.dim(0), inner});
    Tensor gate_half({ff.dim(0), inner});
    for (int64_t i = 0; i < ff.dim(0); ++i) {
        for (int64_t j = 0; j < inner; ++j) {
            val.at(i, j) = ff.at(i, j);
            gate_half.at(i, j) = ff.at(i, inner + j);
        }
    }
    add_inplace(tokens, ff_out.forward(mul(val, gelu_erf(gate_half))));

    Tensor out = proj_out.forward(tokens_to_spatial(tokens, h, w));
    add_inplace(out, x);
    return out;
}

}  // namespace gate::backend
