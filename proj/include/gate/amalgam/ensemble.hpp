#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "gate/amalgam/autodiff.hpp"
#include "gate/core/tensor.hpp"

namespace gate::amalgam {

enum class AssignerArch { mlp_on_pooled, small_cnn };

std::string arch_to_string(AssignerArch a);
AssignerArch arch_from_string(const std::string& s);

struct EnsembleConfig {
    int n = 2;               // assigner count
    int b = 1;               // feature count per sample
    int64_t channels = 0;    // channels of each feature map
    AssignerArch arch = AssignerArch::mlp_on_pooled;
    int hidden = 128;
    int cnn_channels = 8;    // small_cnn intermediate width
    double gamma1 = 0.1;     // sparsity weight
    double gamma2 = 0.1;     // diversity weight
    uint64_t init_seed = 1;
};

// n weight assigners; each scores every feature independently and couples
// the b scores through a softmax, so per-assigner weights are non-negative
// and sum to one by construction.
struct AssignerEnsemble {
    EnsembleConfig cfg;
    struct Assigner {
        Value w1, b1, w2, b2;              // mlp_on_pooled
        Value conv_k, conv_b, lin_w, lin_b;  // small_cnn
    };
    std::vector<Assigner> assigners;

    static AssignerEnsemble create(const EnsembleConfig& cfg);

    std::vector<Value*> parameters();

    // One gradient-carrying node per parameter on a tape; node order matches
    // parameters(). Create once per tape and reuse across features so
    // gradients accumulate in one place.
    std::vector<int> bind_params(Tape& tape) const;

    // Logit of assigner j for one feature node, using bound parameter nodes.
    // Returns a (1, 1) node.
    int build_logit(Tape& tape, const std::vector<int>& param_nodes, int assigner,
                    int feature_node_chw) const;
    // Full (n, b) weight matrix node over b feature nodes (softmax rows).
    int build_weights(Tape& tape, const std::vector<int>& param_nodes,
                      const std::vector<int>& feature_nodes) const;

    void save(const std::filesystem::path& path) const;
    static AssignerEnsemble load(const std::filesystem::path& path);
};

// Feature map as a constant (c, h, w) node.
int feature_node(Tape& tape, const core::Tensor& feat);

// W (n, b): row j = softmax over the b per-feature logits of assigner j.
Value assign_weights(const AssignerEnsemble& ensemble, const std::vector<core::Tensor>& features);

// Concat(sum_i W[0,i] r_i, ..., sum_i W[n-1,i] r_i), optionally followed by
// the attention feature, unweighted. Zero weights contribute no term, so
// one-hot rows reproduce the selected feature exactly.
core::Tensor amalgamate(const Value& weights, const std::vector<core::Tensor>& features,
                        const core::Tensor* attention = nullptr);

// L_fin = task_loss - gamma1 * sum_j ||w_j|| - (gamma2/2) * sum_j sum_{k!=j} ||w_j - w_k||
double regularized_loss(double task_loss, const Value& weights, double gamma1, double gamma2);

struct WeightStats {
    double mean_top1 = 0.0;
    double mean_top2 = 0.0;
    double mean_all = 0.0;
    std::optional<double> overlap_top1_rate;  // needs n >= 2
    std::optional<double> overlap_top2_rate;
    std::optional<double> no_overlap_rate;
};

// Aggregates per-sample weight matrices. Overlap categories are mutually
// exclusive per sample: top-1 overlap wins; otherwise shared membership in
// the top-2 sets counts as top-2 overlap; zero weights never enter a top-2
// set. Ties break to the smallest index.
WeightStats weight_stats(const std::vector<Value>& weight_samples);

}  // namespace gate::amalgam
