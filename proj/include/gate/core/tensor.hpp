#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace gate::core {

// Dense row-major float32 tensor. Everything flowing through the pipeline
// (latents, activations, feature maps, images) uses this type; the training
// side keeps its own double-precision buffers.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int64_t> shape);
    Tensor(std::vector<int64_t> shape, std::vector<float> data);

    static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int64_t> shape, float value);

    int rank() const { return static_cast<int>(shape_.size()); }
    int64_t dim(int i) const;
    const std::vector<int64_t>& shape() const { return shape_; }
    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    std::vector<float>& storage() { return data_; }
    const std::vector<float>& storage() const { return data_; }

    float& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    float operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    float& at(int64_t i, int64_t j);
    float at(int64_t i, int64_t j) const;
    float& at(int64_t i, int64_t j, int64_t k);
    float at(int64_t i, int64_t j, int64_t k) const;
    float& at(int64_t i, int64_t j, int64_t k, int64_t l);
    float at(int64_t i, int64_t j, int64_t k, int64_t l) const;

    Tensor reshaped(std::vector<int64_t> new_shape) const;

    std::string shape_str() const;

private:
    std::vector<int64_t> shape_;
    std::vector<float> data_;
};

std::string shape_to_string(const std::vector<int64_t>& shape);

// ---- elementwise / reduction helpers ----

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float s);
void add_inplace(Tensor& a, const Tensor& b);
void scale_inplace(Tensor& a, float s);

float min_value(const Tensor& a);
float max_value(const Tensor& a);
double sum_value(const Tensor& a);
double mean_value(const Tensor& a);

bool same_shape(const Tensor& a, const Tensor& b);
bool bitwise_equal(const Tensor& a, const Tensor& b);
bool allclose(const Tensor& a, const Tensor& b, float atol = 1e-6f, float rtol = 1e-5f);

// ---- spatial ops on (c, h, w) maps ----

// Bilinear resize with half-pixel centers (align_corners = false).
Tensor bilinear_resize(const Tensor& chw, int64_t out_h, int64_t out_w);
// Nearest-neighbor resize; used for label maps.
Tensor nearest_resize(const Tensor& chw, int64_t out_h, int64_t out_w);

// Concatenate (c_i, h, w) maps along the channel axis. Spatial dims must agree.
Tensor concat_channels(const std::vector<Tensor>& maps);

// Mean over channels -> (h, w).
Tensor channel_mean(const Tensor& chw);

}  // namespace gate::core
