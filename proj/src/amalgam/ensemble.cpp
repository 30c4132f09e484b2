#include "gate/amalgam/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <stdexcept>

#include "gate/backend/safetensors.hpp"
#include "gate/core/rng.hpp"

namespace gate::amalgam {

using core::Tensor;

std::string arch_to_string(AssignerArch a) {
    return a == AssignerArch::mlp_on_pooled ? "mlp_on_pooled" : "small_cnn";
}

AssignerArch arch_from_string(const std::string& s) {
    if (s == "mlp_on_pooled") return AssignerArch::mlp_on_pooled;
    if (s == "small_cnn") return AssignerArch::small_cnn;
    throw std::invalid_argument("unknown assigner arch: " + s);
}

namespace {

Value randn_value(std::vector<int64_t> shape, core::Rng& rng, double stddev) {
    Value v(std::move(shape));
    for (int64_t i = 0; i < v.numel(); ++i) v[i] = rng.normal() * stddev;
    return v;
}

Value to_value_chw(const Tensor& t) {
    Value v(t.shape());
    for (int64_t i = 0; i < t.numel(); ++i) v[i] = t[i];
    return v;
}

}  // namespace

AssignerEnsemble AssignerEnsemble::create(const EnsembleConfig& cfg) {
    if (cfg.n < 1 || cfg.b < 1 || cfg.channels < 1) {
        throw std::invalid_argument("ensemble needs n >= 1, b >= 1 and a positive channel count");
    }
    if (cfg.gamma1 < 0.0 || cfg.gamma2 < 0.0) {
        throw std::invalid_argument("regularizer weights must be non-negative");
    }
    AssignerEnsemble e;
    e.cfg = cfg;
    for (int j = 0; j < cfg.n; ++j) {
        core::Rng rng(core::derive_seed(cfg.init_seed, "assigner" + std::to_string(j)));
        Assigner a;
        if (cfg.arch == AssignerArch::mlp_on_pooled) {
            a.w1 = randn_value({cfg.hidden, cfg.channels}, rng, 1.0 / std::sqrt(double(cfg.channels)));
            a.b1 = Value::zeros({1, cfg.hidden});
            a.w2 = randn_value({1, cfg.hidden}, rng, 1.0 / std::sqrt(double(cfg.hidden)));
            a.b2 = Value::zeros({1, 1});
        } else {
            a.conv_k = randn_value({cfg.cnn_channels, cfg.channels, 3, 3}, rng,
                                   1.0 / std::sqrt(double(cfg.channels * 9)));
            a.conv_b = Value::zeros({1, cfg.cnn_channels});
            a.lin_w = randn_value({1, cfg.cnn_channels}, rng, 1.0 / std::sqrt(double(cfg.cnn_channels)));
            a.lin_b = Value::zeros({1, 1});
        }
        e.assigners.push_back(std::move(a));
    }
    return e;
}

std::vector<Value*> AssignerEnsemble::parameters() {
    std::vector<Value*> out;
    for (Assigner& a : assigners) {
        if (cfg.arch == AssignerArch::mlp_on_pooled) {
            out.push_back(&a.w1);
            out.push_back(&a.b1);
            out.push_back(&a.w2);
            out.push_back(&a.b2);
        } else {
            out.push_back(&a.conv_k);
            out.push_back(&a.conv_b);
            out.push_back(&a.lin_w);
            out.push_back(&a.lin_b);
        }
    }
    return out;
}

std::vector<int> AssignerEnsemble::bind_params(Tape& tape) const {
    std::vector<int> nodes;
    for (const Assigner& a : assigners) {
        if (cfg.arch == AssignerArch::mlp_on_pooled) {
            nodes.push_back(tape.leaf(a.w1));
            nodes.push_back(tape.leaf(a.b1));
            nodes.push_back(tape.leaf(a.w2));
            nodes.push_back(tape.leaf(a.b2));
        } else {
            nodes.push_back(tape.leaf(a.conv_k));
            nodes.push_back(tape.leaf(a.conv_b));
            nodes.push_back(tape.leaf(a.lin_w));
            nodes.push_back(tape.leaf(a.lin_b));
        }
    }
    return nodes;
}

int AssignerEnsemble::build_logit(Tape& tape, const std::vector<int>& param_nodes, int assigner,
                                  int feature_node_chw) const {
    const int base = assigner * 4;
    if (cfg.arch == AssignerArch::mlp_on_pooled) {
        int pooled = tape.global_avg_pool(feature_node_chw);  // (1, c)
        int h = tape.add_rowvec(tape.matmul(pooled, tape.transpose(param_nodes[base])),
                                param_nodes[base + 1]);
        h = tape.relu(h);  // (1, hidden)
        return tape.add(tape.matmul(h, tape.transpose(param_nodes[base + 2])), param_nodes[base + 3]);
    }
    int conv = tape.relu(tape.conv3x3(feature_node_chw, param_nodes[base], param_nodes[base + 1]));
    int pooled = tape.global_avg_pool(conv);  // (1, cnn_channels)
    return tape.add(tape.matmul(pooled, tape.transpose(param_nodes[base + 2])), param_nodes[base + 3]);
}

int AssignerEnsemble::build_weights(Tape& tape, const std::vector<int>& param_nodes,
                                    const std::vector<int>& feature_nodes) const {
    if (static_cast<int>(feature_nodes.size()) != cfg.b) {
        throw std::invalid_argument("expected " + std::to_string(cfg.b) + " feature nodes");
    }
    int W = -1;
    for (int j = 0; j < cfg.n; ++j) {
        int row = -1;  // (1, b) logits assembled by concatenation, then transposed
        for (int i = 0; i < cfg.b; ++i) {
            int logit = build_logit(tape, param_nodes, j, feature_nodes[static_cast<size_t>(i)]);
            row = (row < 0) ? logit : tape.concat_rows(row, logit);
        }
        int soft = tape.softmax_row(tape.transpose(row));  // (b,1) -> (1,b)
        W = (W < 0) ? soft : tape.concat_rows(W, soft);
    }
    return W;
}

int feature_node(Tape& tape, const Tensor& feat) { return tape.constant(to_value_chw(feat)); }

Value assign_weights(const AssignerEnsemble& ensemble, const std::vector<Tensor>& features) {
    const EnsembleConfig& cfg = ensemble.cfg;
    if (static_cast<int>(features.size()) != cfg.b) {
        throw std::invalid_argument("expected " + std::to_string(cfg.b) + " features, got " +
                                    std::to_string(features.size()));
    }
    for (const Tensor& f : features) {
        if (f.rank() != 3 || !core::same_shape(f, features[0]) || f.dim(0) != cfg.channels) {
            throw std::invalid_argument("features must all be (c, h, w) with matching shapes");
        }
    }
    Tape tape;
    std::vector<int> params = ensemble.bind_params(tape);
    std::vector<int> feature_nodes;
    feature_nodes.reserve(features.size());
    for (const Tensor& f : features) feature_nodes.push_back(feature_node(tape, f));
    const int W = ensemble.build_weights(tape, params, feature_nodes);
    return tape.value(W);
}

Tensor amalgamate(const Value& weights, const std::vector<Tensor>& features, const Tensor* attention) {
    if (weights.rank() != 2) throw std::invalid_argument("weights must be (n, b)");
    const int64_t n = weights.dim(0), b = weights.dim(1);
    if (static_cast<int64_t>(features.size()) != b) {
        throw std::invalid_argument("weight columns do not match feature count");
    }
    for (const Tensor& f : features) {
        if (f.rank() != 3 || !core::same_shape(f, features[0])) {
            throw std::invalid_argument("features must share (c, h, w)");
        }
    }
    for (int64_t j = 0; j < n; ++j) {
        double sum = 0.0;
        for (int64_t i = 0; i < b; ++i) {
            if (weights.at(j, i) < 0.0) throw std::invalid_argument("weights must be non-negative");
            sum += weights.at(j, i);
        }
        if (std::fabs(sum - 1.0) > 1e-5) {
            throw std::invalid_argument("weight row " + std::to_string(j) + " sums to " +
                                        std::to_string(sum) + ", not 1");
        }
    }
    const int64_t c = features[0].dim(0), h = features[0].dim(1), w = features[0].dim(2);
    const int64_t plane = c * h * w;
    const int64_t attn_rows = attention ? attention->dim(0) : 0;
    if (attention && (attention->rank() != 3 || attention->dim(1) != h || attention->dim(2) != w)) {
        throw std::invalid_argument("attention feature spatial dims must match the conv features");
    }

    Tensor out({n * c + attn_rows, h, w});
    for (int64_t j = 0; j < n; ++j) {
        float* dst = out.data() + j * plane;
        for (int64_t i = 0; i < b; ++i) {
            const double wj = weights.at(j, i);
            if (wj == 0.0) continue;  // keeps one-hot rows exact
            const float* src = features[static_cast<size_t>(i)].data();
            const float wf = static_cast<float>(wj);
            for (int64_t p = 0; p < plane; ++p) dst[p] += wf * src[p];
        }
    }
    if (attention) {
        std::copy(attention->data(), attention->data() + attention->numel(), out.data() + n * plane);
    }
    return out;
}

double regularized_loss(double task_loss, const Value& weights, double gamma1, double gamma2) {
    if (weights.rank() != 2) throw std::invalid_argument("weights must be (n, b)");
    const int64_t n = weights.dim(0), b = weights.dim(1);
    for (int64_t j = 0; j < n; ++j) {
        double sum = 0.0;
        for (int64_t i = 0; i < b; ++i) sum += weights.at(j, i);
        if (std::fabs(sum - 1.0) > 1e-5) {
            throw std::invalid_argument("regularized_loss: weight rows must be normalized");
        }
    }
    double sparsity = 0.0;
    for (int64_t j = 0; j < n; ++j) {
        double sq = 0.0;
        for (int64_t i = 0; i < b; ++i) sq += weights.at(j, i) * weights.at(j, i);
        sparsity += std::sqrt(sq);
    }
    double diversity = 0.0;
    for (int64_t j = 0; j < n; ++j)
        for (int64_t k = 0; k < n; ++k) {
            if (j == k) continue;
            double sq = 0.0;
            for (int64_t i = 0; i < b; ++i) {
                const double d = weights.at(j, i) - weights.at(k, i);
                sq += d * d;
            }
            diversity += std::sqrt(sq);
        }
    return task_loss - gamma1 * sparsity - 0.5 * gamma2 * diversity;
}

namespace {

// Indices of the two largest entries of a row; zero entries never qualify.
std::pair<int64_t, int64_t> top2_of_row(const Value& W, int64_t j) {
    const int64_t b = W.dim(1);
    int64_t first = -1, second = -1;
    for (int64_t i = 0; i < b; ++i) {
        const double v = W.at(j, i);
        if (first < 0 || v > W.at(j, first)) {
            second = first;
            first = i;
        } else if (second < 0 || v > W.at(j, second)) {
            second = i;
        }
    }
    if (second >= 0 && W.at(j, second) == 0.0) second = -1;
    return {first, second};
}

}  // namespace

WeightStats weight_stats(const std::vector<Value>& weight_samples) {
    if (weight_samples.empty()) throw std::invalid_argument("weight_stats: no samples");
    const int64_t n = weight_samples[0].dim(0);
    WeightStats s;
    double top1 = 0.0, top2 = 0.0, all = 0.0;
    int64_t top1_count = 0, top2_count = 0, all_count = 0;
    int64_t overlap1 = 0, overlap2 = 0, no_overlap = 0;

    for (const Value& W : weight_samples) {
        if (W.dim(0) != n) throw std::invalid_argument("weight_stats: inconsistent assigner count");
        std::vector<std::pair<int64_t, int64_t>> tops;
        for (int64_t j = 0; j < n; ++j) {
            auto [first, second] = top2_of_row(W, j);
            tops.emplace_back(first, second);
            top1 += W.at(j, first);
            ++top1_count;
            if (second >= 0) {
                top2 += W.at(j, second);
                ++top2_count;
            }
            for (int64_t i = 0; i < W.dim(1); ++i) {
                all += W.at(j, i);
                ++all_count;
            }
        }
        if (n >= 2) {
            bool t1 = false, t2 = false;
            for (int64_t j = 0; j < n && !t1; ++j)
                for (int64_t k = j + 1; k < n && !t1; ++k) {
                    if (tops[j].first == tops[k].first) t1 = true;
                }
            if (!t1) {
                for (int64_t j = 0; j < n && !t2; ++j)
                    for (int64_t k = j + 1; k < n && !t2; ++k) {
                        std::set<int64_t> a{tops[j].first}, c{tops[k].first};
                        if (tops[j].second >= 0) a.insert(tops[j].second);
                        if (tops[k].second >= 0) c.insert(tops[k].second);
                        for (int64_t v : a)
                            if (c.count(v)) t2 = true;
                    }
            }
            if (t1) {
                ++overlap1;
            } else if (t2) {
                ++overlap2;
            } else {
                ++no_overlap;
            }
        }
    }
    s.mean_top1 = top1 / static_cast<double>(top1_count);
    s.mean_top2 = top2_count ? top2 / static_cast<double>(top2_count) : 0.0;
    s.mean_all = all / static_cast<double>(all_count);
    if (n >= 2) {
        const double total = static_cast<double>(weight_samples.size());
        s.overlap_top1_rate = overlap1 / total;
        s.overlap_top2_rate = overlap2 / total;
        s.no_overlap_rate = no_overlap / total;
    }
    return s;
}

void AssignerEnsemble::save(const std::filesystem::path& path) const {
    std::map<std::string, Tensor> tensors;
    auto put = [&](const std::string& name, const Value& v) {
        std::vector<float> data(v.data.begin(), v.data.end());
        tensors.emplace(name, Tensor(v.shape, std::move(data)));
    };
    Value meta({1, 7});
    meta[0] = cfg.n;
    meta[1] = cfg.b;
    meta[2] = static_cast<double>(cfg.channels);
    meta[3] = cfg.arch == AssignerArch::mlp_on_pooled ? 0.0 : 1.0;
    meta[4] = cfg.hidden;
    meta[5] = cfg.gamma1;
    meta[6] = cfg.gamma2;
    put("config", meta);
    for (size_t j = 0; j < assigners.size(); ++j) {
        const std::string p = "assigner." + std::to_string(j) + ".";
        const Assigner& a = assigners[j];
        if (cfg.arch == AssignerArch::mlp_on_pooled) {
            put(p + "w1", a.w1);
            put(p + "b1", a.b1);
            put(p + "w2", a.w2);
            put(p + "b2", a.b2);
        } else {
            put(p + "conv_k", a.conv_k);
            put(p + "conv_b", a.conv_b);
            put(p + "lin_w", a.lin_w);
            put(p + "lin_b", a.lin_b);
        }
    }
    backend::save_safetensors(tensors, path);
}

AssignerEnsemble AssignerEnsemble::load(const std::filesystem::path& path) {
    auto tensors = backend::load_safetensors(path);
    auto meta_it = tensors.find("config");
    if (meta_it == tensors.end()) throw std::runtime_error("ensemble file lacks config: " + path.string());
    const Tensor& meta = meta_it->second;
    EnsembleConfig cfg;
    cfg.n = static_cast<int>(meta[0]);
    cfg.b = static_cast<int>(meta[1]);
    cfg.channels = static_cast<int64_t>(meta[2]);
    cfg.arch = meta[3] == 0.0f ? AssignerArch::mlp_on_pooled : AssignerArch::small_cnn;
    cfg.hidden = static_cast<int>(meta[4]);
    cfg.gamma1 = meta[5];
    cfg.gamma2 = meta[6];

    AssignerEnsemble e = AssignerEnsemble::create(cfg);
    auto get = [&](const std::string& name, Value& dst) {
        auto it = tensors.find(name);
        if (it == tensors.end()) throw std::runtime_error("ensemble file missing tensor: " + name);
        if (it->second.shape() != dst.shape) throw std::runtime_error("ensemble tensor shape mismatch: " + name);
        for (int64_t i = 0; i < dst.numel(); ++i) dst[i] = it->second[i];
    };
    for (size_t j = 0; j < e.assigners.size(); ++j) {
        const std::string p = "assigner." + std::to_string(j) + ".";
        Assigner& a = e.assigners[j];
        if (cfg.arch == AssignerArch::mlp_on_pooled) {
            get(p + "w1", a.w1);
            get(p + "b1", a.b1);
            get(p + "w2", a.w2);
            get(p + "b2", a.b2);
        } else {
            get(p + "conv_k", a.conv_k);
            get(p + "conv_b", a.conv_b);
            get(p + "lin_w", a.lin_w);
            get(p + "lin_b", a.lin_b);
        }
    }
    return e;
}

}  // namespace gate::amalgam
