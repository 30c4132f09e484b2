#include "gate/downstream/correspond.hpp"

#include <cmath>
#include <stdexcept>

#include "gate/backend/safetensors.hpp"
#include "gate/core/rng.hpp"

namespace gate::downstream {

using amalgam::Tape;
using amalgam::Value;
using core::Tensor;

namespace {

double to_feature_coord(double pixel, int64_t image_dim, int64_t feat_dim) {
    return (pixel + 0.5) * static_cast<double>(feat_dim) / static_cast<double>(image_dim) - 0.5;
}

double to_pixel_coord(double cell, int64_t image_dim, int64_t feat_dim) {
    return (cell + 0.5) * static_cast<double>(image_dim) / static_cast<double>(feat_dim) - 0.5;
}

std::vector<double> sample_bilinear(const Tensor& feat, double fy, double fx) {
    const int64_t c = feat.dim(0), h = feat.dim(1), w = feat.dim(2);
    const double y = std::clamp(fy, 0.0, static_cast<double>(h - 1));
    const double x = std::clamp(fx, 0.0, static_cast<double>(w - 1));
    const int64_t y0 = static_cast<int64_t>(std::floor(y));
    const int64_t x0 = static_cast<int64_t>(std::floor(x));
    const int64_t y1 = std::min(y0 + 1, h - 1);
    const int64_t x1 = std::min(x0 + 1, w - 1);
    const double dy = y - y0, dx = x - x0;
    std::vector<double> out(static_cast<size_t>(c));
    for (int64_t ch = 0; ch < c; ++ch) {
        const double top = (1 - dx) * feat.at(ch, y0, x0) + dx * feat.at(ch, y0, x1);
        const double bot = (1 - dx) * feat.at(ch, y1, x0) + dx * feat.at(ch, y1, x1);
        out[static_cast<size_t>(ch)] = (1 - dy) * top + dy * bot;
    }
    return out;
}

}  // namespace

std::vector<Keypoint> correspond_nn(const Tensor& src_feat, const Tensor& tgt_feat,
                                    const std::vector<Keypoint>& src_points,
                                    std::pair<int64_t, int64_t> src_image_dims,
                                    std::pair<int64_t, int64_t> tgt_image_dims) {
    if (src_feat.rank() != 3 || tgt_feat.rank() != 3 || src_feat.dim(0) != tgt_feat.dim(0)) {
        throw std::invalid_argument("correspond_nn: features must be (c, h, w) with equal channels");
    }
    const auto [src_h, src_w] = src_image_dims;
    const auto [tgt_h, tgt_w] = tgt_image_dims;
    const int64_t c = tgt_feat.dim(0), th = tgt_feat.dim(1), tw = tgt_feat.dim(2);

    // Precompute target cell norms.
    std::vector<double> tgt_norm(static_cast<size_t>(th * tw), 0.0);
    for (int64_t p = 0; p < th * tw; ++p) {
        double sq = 0.0;
        for (int64_t ch = 0; ch < c; ++ch) {
            const double v = tgt_feat.data()[ch * th * tw + p];
            sq += v * v;
        }
        tgt_norm[static_cast<size_t>(p)] = std::sqrt(sq);
    }

    std::vector<Keypoint> out;
    out.reserve(src_points.size());
    for (const Keypoint& kp : src_points) {
        if (kp.x < 0 || kp.y < 0 || kp.x >= static_cast<double>(src_w) || kp.y >= static_cast<double>(src_h)) {
            throw std::out_of_range("keypoint '" + kp.name + "' outside the source image");
        }
        const double fy = to_feature_coord(kp.y, src_h, src_feat.dim(1));
        const double fx = to_feature_coord(kp.x, src_w, src_feat.dim(2));
        const std::vector<double> q = sample_bilinear(src_feat, fy, fx);
        double qn = 0.0;
        for (double v : q) qn += v * v;
        qn = std::sqrt(qn);

        int64_t best = 0;
        double best_sim = -std::numeric_limits<double>::infinity();
        for (int64_t p = 0; p < th * tw; ++p) {
            double dot = 0.0;
            for (int64_t ch = 0; ch < c; ++ch) dot += q[static_cast<size_t>(ch)] * tgt_feat.data()[ch * th * tw + p];
            const double denom = qn * tgt_norm[static_cast<size_t>(p)];
            const double sim = denom > 0.0 ? dot / denom : 0.0;
            if (sim > best_sim) {  // strict: ties keep the smallest row-major index
                best_sim = sim;
                best = p;
            }
        }
        Keypoint pred;
        pred.name = kp.name;
        pred.y = to_pixel_coord(static_cast<double>(best / tw), tgt_h, th);
        pred.x = to_pixel_coord(static_cast<double>(best % tw), tgt_w, tw);
        out.push_back(pred);
    }
    return out;
}

ConvCorrHead ConvCorrHead::create(int n, int64_t channels, uint64_t seed) {
    if (n < 1 || channels < 1) throw std::invalid_argument("conv head needs n >= 1, channels >= 1");
    ConvCorrHead h;
    h.n = n;
    h.channels = channels;
    for (int j = 0; j < n; ++j) {
        core::Rng rng(core::derive_seed(seed, "conv" + std::to_string(j)));
        Block b;
        b.kernel = Value({channels, channels, 3, 3});
        for (int64_t i = 0; i < b.kernel.numel(); ++i) {
            b.kernel[i] = rng.normal() / std::sqrt(static_cast<double>(channels * 9));
        }
        b.bias = Value::zeros({1, channels});
        h.blocks.push_back(std::move(b));
    }
    return h;
}

std::vector<Value*> ConvCorrHead::parameters() {
    std::vector<Value*> out;
    for (Block& b : blocks) {
        out.push_back(&b.kernel);
        out.push_back(&b.bias);
    }
    return out;
}

namespace {

// Conv3x3 on a float map with double params, same padding.
Tensor conv3x3_plain(const Tensor& x, const Value& k, const Value& bias) {
    const int64_t ci = x.dim(0), h = x.dim(1), w = x.dim(2), co = k.dim(0);
    Tensor out({co, h, w});
    for (int64_t o = 0; o < co; ++o)
        for (int64_t y = 0; y < h; ++y)
            for (int64_t xx = 0; xx < w; ++xx) {
                double s = bias[o];
                for (int64_t c = 0; c < ci; ++c)
                    for (int64_t ky = 0; ky < 3; ++ky)
                        for (int64_t kx = 0; kx < 3; ++kx) {
                            const int64_t iy = y + ky - 1, ix = xx + kx - 1;
                            if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                            s += k[((o * ci + c) * 3 + ky) * 3 + kx] * x.at(c, iy, ix);
                        }
                out.at(o, y, xx) = static_cast<float>(s);
            }
    return out;
}

}  // namespace

Tensor CorrModel::refined_feature(const std::vector<Tensor>& features) const {
    Value W = amalgam::assign_weights(ensemble, features);
    Tensor amalgam_map = amalgam::amalgamate(W, features, nullptr);  // (n*c, h, w)
    const int64_t c = head.channels, h = amalgam_map.dim(1), w = amalgam_map.dim(2);
    std::vector<Tensor> refined;
    for (int j = 0; j < head.n; ++j) {
        Tensor block({c, h, w});
        std::copy(amalgam_map.data() + j * c * h * w, amalgam_map.data() + (j + 1) * c * h * w,
                  block.data());
        refined.push_back(conv3x3_plain(block, head.blocks[static_cast<size_t>(j)].kernel,
                                        head.blocks[static_cast<size_t>(j)].bias));
    }
    return core::concat_channels(refined);
}

CorrTrainResult train_correspondence(const std::vector<CorrSample>& samples,
                                     amalgam::EnsembleConfig ensemble_cfg,
                                     const amalgam::TrainConfig& train_cfg, double temperature) {
    if (samples.empty()) throw std::invalid_argument("train_correspondence: no samples");
    const int b = static_cast<int>(samples[0].src_features.size());
    const int64_t c = samples[0].src_features[0].dim(0);
    ensemble_cfg.b = b;
    ensemble_cfg.channels = c;

    CorrTrainResult result{{amalgam::AssignerEnsemble::create(ensemble_cfg),
                            ConvCorrHead::create(ensemble_cfg.n, c, train_cfg.seed ^ 0x9e37)},
                           {}};
    amalgam::AssignerEnsemble& ensemble = result.model.ensemble;
    ConvCorrHead& head = result.model.head;

    auto build_refined = [&](Tape& tape, const std::vector<int>& ens_nodes,
                             const std::vector<int>& extra_nodes, const std::vector<Tensor>& features,
                             int* weight_node) {
        const int64_t h = features[0].dim(1), w = features[0].dim(2), hw = h * w;
        std::vector<int> feats;
        for (const Tensor& f : features) feats.push_back(amalgam::feature_node(tape, f));
        const int W = ensemble.build_weights(tape, ens_nodes, feats);
        *weight_node = W;
        int F = -1;
        for (int fn : feats) {
            const int flat = tape.reshape(fn, {1, c * hw});
            F = F < 0 ? flat : tape.concat_rows(F, flat);
        }
        const int X = tape.matmul(W, F);  // (n, c*hw)
        int cat = -1;
        for (int j = 0; j < ensemble.cfg.n; ++j) {
            int block = tape.reshape(tape.slice_rows(X, j, 1), {c, h, w});
            int conv = tape.conv3x3(block, extra_nodes[static_cast<size_t>(2 * j)],
                                    extra_nodes[static_cast<size_t>(2 * j + 1)]);
            int rows = tape.reshape(conv, {c, hw});
            cat = cat < 0 ? rows : tape.concat_rows(cat, rows);
        }
        return tape.reshape(cat, {static_cast<int64_t>(ensemble.cfg.n) * c, h, w});
    };

    auto build_sample = [&](Tape& tape, const std::vector<int>& ens_nodes,
                            const std::vector<int>& extra_nodes, size_t idx) {
        const CorrSample& s = samples[idx];
        int w_src = -1, w_tgt = -1;
        const int src_map = build_refined(tape, ens_nodes, extra_nodes, s.src_features, &w_src);
        const int tgt_map = build_refined(tape, ens_nodes, extra_nodes, s.tgt_features, &w_tgt);

        const int64_t sh = s.src_features[0].dim(1), sw = s.src_features[0].dim(2);
        const int64_t th = s.tgt_features[0].dim(1), tw = s.tgt_features[0].dim(2);

        std::vector<std::pair<double, double>> query_points;
        std::vector<int> target_cells;
        for (size_t i = 0; i < s.src_points.size(); ++i) {
            const double fy = to_feature_coord(s.src_points[i].y, s.src_image_dims.first, sh);
            const double fx = to_feature_coord(s.src_points[i].x, s.src_image_dims.second, sw);
            query_points.emplace_back(fy, fx);
            const int64_t cy = std::clamp<int64_t>(
                static_cast<int64_t>(std::llround(to_feature_coord(s.tgt_points[i].y, s.tgt_image_dims.first, th))),
                0, th - 1);
            const int64_t cx = std::clamp<int64_t>(
                static_cast<int64_t>(std::llround(to_feature_coord(s.tgt_points[i].x, s.tgt_image_dims.second, tw))),
                0, tw - 1);
            target_cells.push_back(static_cast<int>(cy * tw + cx));
        }

        const int Q = tape.normalize_rows(tape.bilinear_sample(src_map, query_points));  // (k, nc)
        const int64_t nc = static_cast<int64_t>(ensemble.cfg.n) * c;
        const int T = tape.transpose(
            tape.normalize_rows(tape.transpose(tape.reshape(tgt_map, {nc, th * tw}))));  // (nc, hw)
        const int logits = tape.scale(tape.matmul(Q, T), 1.0 / temperature);             // (k, hw)
        const int task = tape.cross_entropy_mean(tape.transpose(logits), target_cells);

        amalgam::SampleGraph g;
        g.task_loss = task;
        g.weight_nodes = {w_src, w_tgt};
        return g;
    };

    auto weight_sampler = [&]() {
        std::vector<Value> ws;
        for (const CorrSample& s : samples) {
            ws.push_back(amalgam::assign_weights(ensemble, s.src_features));
            ws.push_back(amalgam::assign_weights(ensemble, s.tgt_features));
        }
        return ws;
    };

    result.history = amalgam::train_ensemble(ensemble, samples.size(), build_sample,
                                             head.parameters(), train_cfg, weight_sampler);
    return result;
}

void ConvCorrHead::save(const std::filesystem::path& path) const {
    std::map<std::string, Tensor> tensors;
    Value meta({1, 2});
    meta[0] = n;
    meta[1] = static_cast<double>(channels);
    auto put = [&](const std::string& name, const Value& v) {
        std::vector<float> data(v.data.begin(), v.data.end());
        tensors.emplace(name, Tensor(v.shape, std::move(data)));
    };
    put("config", meta);
    for (size_t j = 0; j < blocks.size(); ++j) {
        put("block." + std::to_string(j) + ".kernel", blocks[j].kernel);
        put("block." + std::to_string(j) + ".bias", blocks[j].bias);
    }
    backend::save_safetensors(tensors, path);
}

ConvCorrHead ConvCorrHead::load(const std::filesystem::path& path) {
    auto tensors = backend::load_safetensors(path);
    auto it = tensors.find("config");
    if (it == tensors.end()) throw std::runtime_error("conv head file lacks config: " + path.string());
    ConvCorrHead h = ConvCorrHead::create(static_cast<int>(it->second[0]),
                                          static_cast<int64_t>(it->second[1]), 0);
    for (size_t j = 0; j < h.blocks.size(); ++j) {
        auto k = tensors.find("block." + std::to_string(j) + ".kernel");
        auto bta = tensors.find("block." + std::to_string(j) + ".bias");
        if (k == tensors.end() || bta == tensors.end()) {
            throw std::runtime_error("conv head file incomplete: " + path.string());
        }
        for (int64_t i = 0; i < h.blocks[j].kernel.numel(); ++i) h.blocks[j].kernel[i] = k->second[i];
        for (int64_t i = 0; i < h.blocks[j].bias.numel(); ++i) h.blocks[j].bias[i] = bta->second[i];
    }
    return h;
}

void CorrModel::save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    ensemble.save(dir / "ensemble.safetensors");
    head.save(dir / "conv_head.safetensors");
}

CorrModel CorrModel::load(const std::filesystem::path& dir) {
    return {amalgam::AssignerEnsemble::load(dir / "ensemble.safetensors"),
            ConvCorrHead::load(dir / "conv_head.safetensors")};
}

}  // namespace gate::downstream
