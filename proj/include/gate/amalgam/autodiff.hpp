#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace gate::amalgam {

// Dense row-major double buffer. Training-side math runs in double so
// analytic gradients can be checked against central differences tightly.
struct Value {
    std::vector<int64_t> shape;
    std::vector<double> data;

    Value() = default;
    explicit Value(std::vector<int64_t> s);
    Value(std::vector<int64_t> s, std::vector<double> d);
    static Value zeros(std::vector<int64_t> s) { return Value(std::move(s)); }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int64_t dim(int i) const { return shape[static_cast<size_t>(i)]; }
    int rank() const { return static_cast<int>(shape.size()); }
    double& at(int64_t i, int64_t j) { return data[static_cast<size_t>(i * shape[1] + j)]; }
    double at(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * shape[1] + j)]; }
    double& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }
};

// Reverse-mode tape over Values. Node handles are indices; constants carry no
// gradient. One tape per training step.
class Tape {
public:
    int constant(Value v);
    int leaf(Value v);  // gradient-carrying input (parameter copy)

    int add(int a, int b);
    int sub(int a, int b);
    int scale(int a, double s);
    int matmul(int a, int b);
    int transpose(int a);
    int add_rowvec(int a, int row);  // (m, n) + (1, n) broadcast over rows
    int add_colvec(int a, int col);  // (m, n) + (1, m) broadcast over columns
    int relu(int a);
    int softmax_row(int a);  // (1, n)
    int reshape(int a, std::vector<int64_t> shape);
    int concat_rows(int a, int b);
    int slice_rows(int a, int64_t start, int64_t count);
    int global_avg_pool(int a);  // (c, h, w) -> (1, c)
    int normalize_rows(int a, double eps = 1e-12);

    // sum_j ||row_j||_2 -> (1, 1); gradient at a zero row is 0
    int row_l2norm_sum(int a);
    // sum_j sum_{k != j} ||row_j - row_k||_2 -> (1, 1); both orders counted
    int pairwise_row_distance_sum(int a);

    // Mean cross-entropy over columns of (classes, n) logits; labels.size() == n.
    // Pixels labeled ignore_label are excluded; at least one must remain.
    int cross_entropy_mean(int logits, const std::vector<int>& labels, int ignore_label = -1);

    // 3x3 same-padding convolution: x (ci, h, w), kernel (co, ci, 3, 3), bias (1, co).
    int conv3x3(int x, int kernel, int bias);

    // Bilinear samples at (y, x) positions (feature coordinates) -> (k, c).
    int bilinear_sample(int x, const std::vector<std::pair<double, double>>& points);

    const Value& value(int node) const { return nodes_[static_cast<size_t>(node)].val; }
    double scalar(int node) const;
    void backward(int loss_node);
    const Value& grad(int node) const { return nodes_[static_cast<size_t>(node)].grad; }

private:
    struct Node {
        Value val;
        Value grad;
        bool requires_grad = false;
        std::vector<int> parents;
        std::function<void(Tape&, int)> backprop;  // self index passed in
    };
    int push(Value val, std::vector<int> parents, std::function<void(Tape&, int)> backprop);
    bool any_requires_grad(const std::vector<int>& parents) const;
    std::vector<Node> nodes_;
    friend struct TapeAccess;

public:
    Value& mutable_grad(int node) { return nodes_[static_cast<size_t>(node)].grad; }
    bool requires_grad(int node) const { return nodes_[static_cast<size_t>(node)].requires_grad; }
};

}  // namespace gate::amalgam
