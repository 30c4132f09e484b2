#include "gate/downstream/segmenter.hpp"

#include <cmath>
#include <stdexcept>

#include "gate/backend/safetensors.hpp"
#include "gate/core/rng.hpp"

namespace gate::downstream {

using amalgam::Tape;
using amalgam::Value;
using core::Tensor;

PixelClassifier PixelClassifier::create(const PixelClassifierConfig& cfg) {
    if (cfg.input_dim < 1 || cfg.classes < 2 || cfg.ensemble_size < 1) {
        throw std::invalid_argument("pixel classifier needs input_dim >= 1, classes >= 2, members >= 1");
    }
    PixelClassifier pc;
    pc.cfg = cfg;
    for (int m = 0; m < cfg.ensemble_size; ++m) {
        core::Rng rng(core::derive_seed(cfg.init_seed, "member" + std::to_string(m)));
        Member mem;
        mem.w1 = Value({cfg.hidden, cfg.input_dim});
        for (int64_t i = 0; i < mem.w1.numel(); ++i) {
            mem.w1[i] = rng.normal() / std::sqrt(static_cast<double>(cfg.input_dim));
        }
        mem.b1 = Value::zeros({1, cfg.hidden});
        mem.w2 = Value({cfg.classes, cfg.hidden});
        for (int64_t i = 0; i < mem.w2.numel(); ++i) {
            mem.w2[i] = rng.normal() / std::sqrt(static_cast<double>(cfg.hidden));
        }
        mem.b2 = Value::zeros({1, cfg.classes});
        pc.members.push_back(std::move(mem));
    }
    return pc;
}

std::vector<Value*> PixelClassifier::parameters() {
    std::vector<Value*> out;
    for (Member& m : members) {
        out.push_back(&m.w1);
        out.push_back(&m.b1);
        out.push_back(&m.w2);
        out.push_back(&m.b2);
    }
    return out;
}

Tensor PixelClassifier::mean_logits(const Tensor& feature) const {
    if (feature.rank() != 3 || feature.dim(0) != cfg.input_dim) {
        throw std::invalid_argument("classifier expects (" + std::to_string(cfg.input_dim) +
                                    ", h, w), got " + feature.shape_str());
    }
    const int64_t h = feature.dim(1), w = feature.dim(2), hw = h * w;
    Tensor out({cfg.classes, h, w});
    std::vector<double> hidden(static_cast<size_t>(cfg.hidden));
    for (int64_t p = 0; p < hw; ++p) {
        std::vector<double> acc(static_cast<size_t>(cfg.classes), 0.0);
        for (const Member& m : members) {
            for (int64_t j = 0; j < cfg.hidden; ++j) {
                double s = m.b1[j];
                for (int64_t i = 0; i < cfg.input_dim; ++i) {
                    s += m.w1.at(j, i) * feature.data()[i * hw + p];
                }
                hidden[static_cast<size_t>(j)] = std::max(0.0, s);
            }
            for (int64_t c = 0; c < cfg.classes; ++c) {
                double s = m.b2[c];
                for (int64_t j = 0; j < cfg.hidden; ++j) s += m.w2.at(c, j) * hidden[static_cast<size_t>(j)];
                acc[static_cast<size_t>(c)] += s;
            }
        }
        for (int64_t c = 0; c < cfg.classes; ++c) {
            out.data()[c * hw + p] = static_cast<float>(acc[static_cast<size_t>(c)] / members.size());
        }
    }
    return out;
}

Tensor SegmenterModel::amalgamated(const std::vector<Tensor>& features,
                                   const Tensor* attention) const {
    Value W = amalgam::assign_weights(ensemble, features);
    return amalgam::amalgamate(W, features, attention);
}

SegTrainResult train_segmenter(const std::vector<SegSample>& samples,
                               amalgam::EnsembleConfig ensemble_cfg, PixelClassifierConfig head_cfg,
                               const amalgam::TrainConfig& train_cfg) {
    if (samples.empty()) throw std::invalid_argument("train_segmenter: no samples");
    const int b = static_cast<int>(samples[0].features.size());
    const int64_t c = samples[0].features[0].dim(0);
    ensemble_cfg.b = b;
    ensemble_cfg.channels = c;
    const int64_t attn_rows = samples[0].attention ? samples[0].attention->dim(0) : 0;
    head_cfg.input_dim = static_cast<int64_t>(ensemble_cfg.n) * c + attn_rows;

    for (const SegSample& s : samples) {
        if (static_cast<int>(s.features.size()) != b) {
            throw std::invalid_argument("train_segmenter: inconsistent feature counts");
        }
        const int64_t h = s.features[0].dim(1), w = s.features[0].dim(2);
        if (s.labels.rank() != 2 || s.labels.dim(0) != h || s.labels.dim(1) != w) {
            throw std::invalid_argument("train_segmenter: labels must match feature resolution");
        }
        for (int64_t i = 0; i < s.labels.numel(); ++i) {
            const int y = static_cast<int>(s.labels[i]);
            if (y != kIgnoreLabel && (y < 0 || y >= head_cfg.classes)) {
                throw std::out_of_range("label id " + std::to_string(y) + " outside [0, " +
                                        std::to_string(head_cfg.classes) + ")");
            }
        }
        if ((s.attention ? s.attention->dim(0) : 0) != attn_rows) {
            throw std::invalid_argument("train_segmenter: inconsistent attention rows");
        }
    }

    SegTrainResult result{{amalgam::AssignerEnsemble::create(ensemble_cfg), PixelClassifier::create(head_cfg)},
                          {}};
    amalgam::AssignerEnsemble& ensemble = result.model.ensemble;
    PixelClassifier& head = result.model.head;

    auto build_sample = [&](Tape& tape, const std::vector<int>& ens_nodes,
                            const std::vector<int>& extra_nodes, size_t idx) {
        const SegSample& s = samples[idx];
        const int64_t h = s.features[0].dim(1), w = s.features[0].dim(2), hw = h * w;

        std::vector<int> feats;
        for (const Tensor& f : s.features) feats.push_back(amalgam::feature_node(tape, f));
        const int W = ensemble.build_weights(tape, ens_nodes, feats);

        int F = -1;  // (b, c*hw)
        for (int fn : feats) {
            const int flat = tape.reshape(fn, {1, c * hw});
            F = F < 0 ? flat : tape.concat_rows(F, flat);
        }
        int X = tape.reshape(tape.matmul(W, F), {static_cast<int64_t>(ensemble_cfg.n) * c, hw});
        if (s.attention) {
            Value attn(s.attention->shape());
            std::copy(s.attention->data(), s.attention->data() + s.attention->numel(), attn.data.begin());
            X = tape.concat_rows(X, tape.reshape(tape.constant(std::move(attn)), {attn_rows, hw}));
        }

        std::vector<int> labels(static_cast<size_t>(hw));
        for (int64_t i = 0; i < hw; ++i) labels[static_cast<size_t>(i)] = static_cast<int>(s.labels[i]);

        int task = -1;  // member-mean cross entropy
        for (int m = 0; m < head_cfg.ensemble_size; ++m) {
            const int base = m * 4;
            int hdd = tape.relu(tape.add_colvec(tape.matmul(extra_nodes[base], X), extra_nodes[base + 1]));
            int logits = tape.add_colvec(tape.matmul(extra_nodes[base + 2], hdd), extra_nodes[base + 3]);
            int ce = tape.cross_entropy_mean(logits, labels, kIgnoreLabel);
            task = task < 0 ? ce : tape.add(task, ce);
        }
        task = tape.scale(task, 1.0 / head_cfg.ensemble_size);

        amalgam::SampleGraph g;
        g.task_loss = task;
        g.weight_nodes = {W};
        return g;
    };

    auto weight_sampler = [&]() {
        std::vector<Value> ws;
        ws.reserve(samples.size());
        for (const SegSample& s : samples) ws.push_back(amalgam::assign_weights(ensemble, s.features));
        return ws;
    };

    result.history = amalgam::train_ensemble(ensemble, samples.size(), build_sample,
                                             head.parameters(), train_cfg, weight_sampler);
    return result;
}

Tensor predict_segmentation(const SegmenterModel& model, const std::vector<Tensor>& features,
                            const Tensor* attention, int64_t out_h, int64_t out_w) {
    Tensor logits = model.head.mean_logits(model.amalgamated(features, attention));
    if (out_h > 0 && out_w > 0 && (out_h != logits.dim(1) || out_w != logits.dim(2))) {
        logits = core::bilinear_resize(logits, out_h, out_w);
    }
    const int64_t classes = logits.dim(0), h = logits.dim(1), w = logits.dim(2), hw = h * w;
    Tensor labels({h, w});
    for (int64_t p = 0; p < hw; ++p) {
        int64_t best = 0;
        float best_v = logits.data()[p];
        for (int64_t c = 1; c < classes; ++c) {
            const float v = logits.data()[c * hw + p];
            if (v > best_v) {  // ties keep the smaller class id
                best_v = v;
                best = c;
            }
        }
        labels[p] = static_cast<float>(best);
    }
    return labels;
}

Tensor labels_to_feature_res(const Tensor& labels, int64_t h, int64_t w) {
    if (labels.rank() != 2) throw std::invalid_argument("labels must be (h, w)");
    Tensor as3d({1, labels.dim(0), labels.dim(1)}, labels.storage());
    Tensor down = core::nearest_resize(as3d, h, w);
    return Tensor({h, w}, down.storage());
}

void PixelClassifier::save(const std::filesystem::path& path) const {
    std::map<std::string, Tensor> tensors;
    Value meta({1, 5});
    meta[0] = static_cast<double>(cfg.input_dim);
    meta[1] = cfg.classes;
    meta[2] = cfg.ensemble_size;
    meta[3] = cfg.hidden;
    meta[4] = 0.0;
    auto put = [&](const std::string& name, const Value& v) {
        std::vector<float> data(v.data.begin(), v.data.end());
        tensors.emplace(name, Tensor(v.shape, std::move(data)));
    };
    put("config", meta);
    for (size_t m = 0; m < members.size(); ++m) {
        const std::string p = "member." + std::to_string(m) + ".";
        put(p + "w1", members[m].w1);
        put(p + "b1", members[m].b1);
        put(p + "w2", members[m].w2);
        put(p + "b2", members[m].b2);
    }
    backend::save_safetensors(tensors, path);
}

PixelClassifier PixelClassifier::load(const std::filesystem::path& path) {
    auto tensors = backend::load_safetensors(path);
    auto it = tensors.find("config");
    if (it == tensors.end()) throw std::runtime_error("classifier file lacks config: " + path.string());
    PixelClassifierConfig cfg;
    cfg.input_dim = static_cast<int64_t>(it->second[0]);
    cfg.classes = static_cast<int>(it->second[1]);
    cfg.ensemble_size = static_cast<int>(it->second[2]);
    cfg.hidden = static_cast<int>(it->second[3]);
    PixelClassifier pc = PixelClassifier::create(cfg);
    auto get = [&](const std::string& name, Value& dst) {
        auto t = tensors.find(name);
        if (t == tensors.end()) throw std::runtime_error("classifier file missing tensor: " + name);
        if (t->second.shape() != dst.shape) throw std::runtime_error("classifier tensor shape mismatch: " + name);
        for (int64_t i = 0; i < dst.numel(); ++i) dst[i] = t->second[i];
    };
    for (size_t m = 0; m < pc.members.size(); ++m) {
        const std::string p = "member." + std::to_string(m) + ".";
        get(p + "w1", pc.members[m].w1);
        get(p + "b1", pc.members[m].b1);
        get(p + "w2", pc.members[m].w2);
        get(p + "b2", pc.members[m].b2);
    }
    return pc;
}

void SegmenterModel::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    ensemble.save(dir / "ensemble.safetensors");
    head.save(dir / "head.safetensors");
}

SegmenterModel SegmenterModel::load(const std::filesystem::path& dir) {
    return {amalgam::AssignerEnsemble::load(dir / "ensemble.safetensors"),
            PixelClassifier::load(dir / "head.safetensors")};
}

}  // namespace gate::downstream
