#include "gate/core/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace gate::core {

namespace {

int64_t checked_numel(const std::vector<int64_t>& shape) {
    int64_t n = 1;
    for (int64_t d : shape) {
        if (d < 0) throw std::invalid_argument("tensor dim must be non-negative");
        n *= d;
    }
    return n;
}

}  // namespace

Tensor::Tensor(std::vector<int64_t> shape)
    : shape_(std::move(shape)), data_(static_cast<size_t>(checked_numel(shape_)), 0.0f) {}

Tensor::Tensor(std::vector<int64_t> shape, std::vector<float> data) : shape_(std::move(shape)) {
    if (checked_numel(shape_) != static_cast<int64_t>(data.size())) {
        throw std::invalid_argument("tensor data size does not match shape " + shape_to_string(shape_));
    }
    data_ = std::move(data);
}

Tensor Tensor::full(std::vector<int64_t> shape, float value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
}

int64_t Tensor::dim(int i) const {
    if (i < 0 || i >= rank()) throw std::out_of_range("tensor dim index");
    return shape_[static_cast<size_t>(i)];
}

float& Tensor::at(int64_t i, int64_t j) { return data_[static_cast<size_t>(i * shape_[1] + j)]; }
float Tensor::at(int64_t i, int64_t j) const { return data_[static_cast<size_t>(i * shape_[1] + j)]; }

float& Tensor::at(int64_t i, int64_t j, int64_t k) {
    return data_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
}
float Tensor::at(int64_t i, int64_t j, int64_t k) const {
    return data_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
}

float& Tensor::at(int64_t i, int64_t j, int64_t k, int64_t l) {
    return data_[static_cast<size_t>(((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
}
float Tensor::at(int64_t i, int64_t j, int64_t k, int64_t l) const {
    return data_[static_cast<size_t>(((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
}

Tensor Tensor::reshaped(std::vector<int64_t> new_shape) const {
    if (checked_numel(new_shape) != numel()) {
        throw std::invalid_argument("reshape element count mismatch: " + shape_to_string(shape_) +
                                    " -> " + shape_to_string(new_shape));
    }
    return Tensor(std::move(new_shape), data_);
}

std::string Tensor::shape_str() const { return shape_to_string(shape_); }

std::string shape_to_string(const std::vector<int64_t>& shape) {
    std::ostringstream os;
    os << "(";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

static void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!same_shape(a, b)) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                                    b.shape_str());
    }
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] + b[i];
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor out(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] - b[i];
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    Tensor out(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] * b[i];
    return out;
}

Tensor scale(const Tensor& a, float s) {
    Tensor out(a.shape());
    for (int64_t i = 0; i < a.numel(); ++i) out[i] = a[i] * s;
    return out;
}

void add_inplace(Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add_inplace");
    for (int64_t i = 0; i < a.numel(); ++i) a[i] += b[i];
}

void scale_inplace(Tensor& a, float s) {
    for (int64_t i = 0; i < a.numel(); ++i) a[i] *= s;
}

float min_value(const Tensor& a) {
    if (a.empty()) throw std::invalid_argument("min_value of empty tensor");
    return *std::min_element(a.data(), a.data() + a.numel());
}

float max_value(const Tensor& a) {
    if (a.empty()) throw std::invalid_argument("max_value of empty tensor");
    return *std::max_element(a.data(), a.data() + a.numel());
}

double sum_value(const Tensor& a) {
    double s = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) s += a[i];
    return s;
}

double mean_value(const Tensor& a) {
    if (a.empty()) throw std::invalid_argument("mean_value of empty tensor");
    return sum_value(a) / static_cast<double>(a.numel());
}

bool same_shape(const Tensor& a, const Tensor& b) { return a.shape() == b.shape(); }

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    if (!same_shape(a, b)) return false;
    return std::memcmp(a.data(), b.data(), sizeof(float) * static_cast<size_t>(a.numel())) == 0;
}

bool allclose(const Tensor& a, const Tensor& b, float atol, float rtol) {
    if (!same_shape(a, b)) return false;
    for (int64_t i = 0; i < a.numel(); ++i) {
        float diff = std::fabs(a[i] - b[i]);
        if (diff > atol + rtol * std::fabs(b[i])) return false;
    }
    return true;
}

Tensor bilinear_resize(const Tensor& chw, int64_t out_h, int64_t out_w) {
    if (chw.rank() != 3) throw std::invalid_argument("bilinear_resize expects (c, h, w)");
    const int64_t c = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
    if (out_h <= 0 || out_w <= 0) throw std::invalid_argument("bilinear_resize: bad output size");
    Tensor out({c, out_h, out_w});
    const double sy = static_cast<double>(h) / static_cast<double>(out_h);
    const double sx = static_cast<double>(w) / static_cast<double>(out_w);
    for (int64_t oy = 0; oy < out_h; ++oy) {
        double fy = (static_cast<double>(oy) + 0.5) * sy - 0.5;
        int64_t y0 = static_cast<int64_t>(std::floor(fy));
        double wy = fy - static_cast<double>(y0);
        int64_t y1 = std::clamp<int64_t>(y0 + 1, 0, h - 1);
        y0 = std::clamp<int64_t>(y0, 0, h - 1);
        for (int64_t ox = 0; ox < out_w; ++ox) {
            double fx = (static_cast<double>(ox) + 0.5) * sx - 0.5;
            int64_t x0 = static_cast<int64_t>(std::floor(fx));
            double wx = fx - static_cast<double>(x0);
            int64_t x1 = std::clamp<int64_t>(x0 + 1, 0, w - 1);
            x0 = std::clamp<int64_t>(x0, 0, w - 1);
            for (int64_t ch = 0; ch < c; ++ch) {
                double top = (1.0 - wx) * chw.at(ch, y0, x0) + wx * chw.at(ch, y0, x1);
                double bot = (1.0 - wx) * chw.at(ch, y1, x0) + wx * chw.at(ch, y1, x1);
                out.at(ch, oy, ox) = static_cast<float>((1.0 - wy) * top + wy * bot);
            }
        }
    }
    return out;
}

Tensor nearest_resize(const Tensor& chw, int64_t out_h, int64_t out_w) {
    if (chw.rank() != 3) throw std::invalid_argument("nearest_resize expects (c, h, w)");
    const int64_t c = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
    Tensor out({c, out_h, out_w});
    for (int64_t oy = 0; oy < out_h; ++oy) {
        int64_t y = std::min<int64_t>(h - 1, static_cast<int64_t>((static_cast<double>(oy) + 0.5) *
                                                                  static_cast<double>(h) / static_cast<double>(out_h)));
        for (int64_t ox = 0; ox < out_w; ++ox) {
            int64_t x = std::min<int64_t>(w - 1, static_cast<int64_t>((static_cast<double>(ox) + 0.5) *
                                                                      static_cast<double>(w) / static_cast<double>(out_w)));
            for (int64_t ch = 0; ch < c; ++ch) out.at(ch, oy, ox) = chw.at(ch, y, x);
        }
    }
    return out;
}

Tensor concat_channels(const std::vector<Tensor>& maps) {
    if (maps.empty()) throw std::invalid_argument("concat_channels: no inputs");
    const int64_t h = maps[0].dim(1), w = maps[0].dim(2);
    int64_t c_total = 0;
    for (const Tensor& m : maps) {
        if (m.rank() != 3 || m.dim(1) != h || m.dim(2) != w) {
            throw std::invalid_argument("concat_channels: spatial dims disagree");
        }
        c_total += m.dim(0);
    }
    Tensor out({c_total, h, w});
    float* dst = out.data();
    for (const Tensor& m : maps) {
        std::memcpy(dst, m.data(), sizeof(float) * static_cast<size_t>(m.numel()));
        dst += m.numel();
    }
    return out;
}

Tensor channel_mean(const Tensor& chw) {
    if (chw.rank() != 3) throw std::invalid_argument("channel_mean expects (c, h, w)");
    const int64_t c = chw.dim(0), h = chw.dim(1), w = chw.dim(2);
    Tensor out({h, w});
    for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
            double s = 0.0;
            for (int64_t ch = 0; ch < c; ++ch) s += chw.at(ch, y, x);
            out.at(y, x) = static_cast<float>(s / static_cast<double>(c));
        }
    }
    return out;
}

}  // namespace gate::core
