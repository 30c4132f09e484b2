#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "gate/core/tensor.hpp"

namespace gate::backend {

using core::Tensor;

// Registry of named parameters. Modules hold pointers into it; loaders, the
// LoRA patcher and serialization address parameters by path. Paths follow
// the naming convention of the v1.5 family's common distribution layout so
// checkpoints map one-to-one.
class ParamStore {
public:
    Tensor& create(const std::string& name, std::vector<int64_t> shape);
    Tensor* find(const std::string& name);
    const Tensor* find(const std::string& name) const;
    std::map<std::string, Tensor>& all() { return params_; }
    const std::map<std::string, Tensor>& all() const { return params_; }

    // Deterministic init: every parameter seeded from (base_seed, its name),
    // independent of creation order. Weights ~ N(0, 1/sqrt(fan_in)); biases 0;
    // norm scales 1.
    void seed_init(uint64_t base_seed);

private:
    struct InitHint {
        int64_t fan_in = 0;   // 0 -> zeros (bias), -1 -> ones (norm scale)
    };
    std::map<std::string, Tensor> params_;
    std::map<std::string, InitHint> hints_;
    friend struct InitAccess;

public:
    void set_hint(const std::string& name, int64_t fan_in);
};

// ---- functional ops ----

// (m, k) x (k, n) -> (m, n)
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor silu(const Tensor& x);
Tensor gelu_quick(const Tensor& x);  // x * sigmoid(1.702 x), the text-encoder activation
Tensor gelu_erf(const Tensor& x);
// Softmax along the last axis of a 2-D tensor.
Tensor softmax_rows(const Tensor& x);
// Sinusoidal timestep embedding, [cos | sin] halves.
Tensor timestep_embedding(int t, int dim);

// ---- layers ----

struct Linear {
    Tensor* w = nullptr;  // (out, in)
    Tensor* b = nullptr;  // (out) or null
    static Linear make(ParamStore& ps, const std::string& prefix, int64_t in, int64_t out,
                       bool bias = true);
    Tensor forward(const Tensor& x) const;  // (n, in) -> (n, out)
};

struct Conv2d {
    Tensor* w = nullptr;  // (out, in, k, k)
    Tensor* b = nullptr;  // (out)
    int stride = 1;
    int pad = 0;
    static Conv2d make(ParamStore& ps, const std::string& prefix, int64_t in, int64_t out, int k,
                       int stride = 1, int pad = 0);
    Tensor forward(const Tensor& x) const;  // (in, h, w) -> (out, h', w')
};

struct GroupNorm {
    Tensor* w = nullptr;
    Tensor* b = nullptr;
    int groups = 32;
    double eps = 1e-5;
    static GroupNorm make(ParamStore& ps, const std::string& prefix, int64_t channels, int groups);
    Tensor forward(const Tensor& x) const;  // (c, h, w)
};

struct LayerNorm {
    Tensor* w = nullptr;
    Tensor* b = nullptr;
    double eps = 1e-5;
    static LayerNorm make(ParamStore& ps, const std::string& prefix, int64_t dim);
    Tensor forward(const Tensor& x) const;  // (n, dim)
};

// Multi-head attention over row-major sequences. When `attn_out` is non-null
// it receives the post-softmax probabilities averaged over heads,
// shape (q_len, kv_len).
struct MultiHeadAttention {
    Linear to_q, to_k, to_v, to_out;
    int heads = 1;
    static MultiHeadAttention make(ParamStore& ps, const std::string& prefix, int64_t query_dim,
                                   int64_t context_dim, int heads);
    Tensor forward(const Tensor& x, const Tensor& context, Tensor* attn_out = nullptr,
                   bool causal = false) const;
};

Tensor upsample_nearest2x(const Tensor& x);

// (c, h, w) <-> (h*w, c)
Tensor spatial_to_tokens(const Tensor& chw);
Tensor tokens_to_spatial(const Tensor& tokens, int64_t h, int64_t w);

// Residual block of the denoiser family; `temb_dim` 0 drops the timestep
// projection (the autoencoder flavor).
struct ResnetBlock {
    GroupNorm norm1, norm2;
    Conv2d conv1, conv2;
    Linear time_emb_proj;  // unused when temb_dim == 0
    bool has_temb = false;
    std::optional<Conv2d> shortcut;
    static ResnetBlock make(ParamStore& ps, const std::string& prefix, int64_t in, int64_t out,
                            int norm_groups, int64_t temb_dim);
    Tensor forward(const Tensor& x, const Tensor* temb = nullptr) const;
};

// Spatial transformer: group norm, 1x1 projection, one basic block
// (self-attention, cross-attention, geglu feed-forward), 1x1 projection,
// residual. `cross_probs`, when requested, receives the head-averaged
// post-softmax cross-attention map of shape (h*w, tokens).
struct SpatialTransformer {
    GroupNorm norm;
    Conv2d proj_in, proj_out;
    LayerNorm norm1, norm2, norm3;
    MultiHeadAttention attn1, attn2;
    Linear ff_in, ff_out;
    static SpatialTransformer make(ParamStore& ps, const std::string& prefix, int64_t ch, int heads,
                                   int64_t context_dim, int norm_groups);
    Tensor forward(const Tensor& x, const Tensor& context, Tensor* cross_probs = nullptr) const;
};

}  // namespace gate::backend
