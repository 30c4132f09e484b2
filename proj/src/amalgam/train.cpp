#include "gate/amalgam/train.hpp"

#include <algorithm>
#include <cmath>

#include "gate/core/rng.hpp"

namespace gate::amalgam {

Adam::Adam(std::vector<Value*> params, const TrainConfig& cfg) : params_(std::move(params)), cfg_(cfg) {
    for (Value* p : params_) {
        m_.emplace_back(p->shape);
        v_.emplace_back(p->shape);
    }
}

void Adam::step(const std::vector<Value>& grads) {
    ++t_;
    const double b1 = cfg_.adam_beta1, b2 = cfg_.adam_beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_));
    for (size_t p = 0; p < params_.size(); ++p) {
        Value& w = *params_[p];
        const Value& g = grads[p];
        for (int64_t i = 0; i < w.numel(); ++i) {
            m_[p][i] = b1 * m_[p][i] + (1.0 - b1) * g[i];
            v_[p][i] = b2 * v_[p][i] + (1.0 - b2) * g[i] * g[i];
            const double mhat = m_[p][i] / bc1;
            const double vhat = v_[p][i] / bc2;
            w[i] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.adam_eps);
        }
    }
}

std::vector<EpochRecord> train_ensemble(AssignerEnsemble& ensemble, size_t sample_count,
                                        const SampleLossBuilder& build_sample,
                                        std::vector<Value*> extra_params, const TrainConfig& cfg,
                                        const WeightSampler& weight_sampler) {
    std::vector<Value*> all_params = ensemble.parameters();
    const size_t ensemble_param_count = all_params.size();
    all_params.insert(all_params.end(), extra_params.begin(), extra_params.end());

    Adam opt(all_params, cfg);
    core::Rng shuffle_rng(core::derive_seed(cfg.seed, "shuffle"));

    std::vector<size_t> order(sample_count);
    for (size_t i = 0; i < sample_count; ++i) order[i] = i;

    std::vector<EpochRecord> history;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        // Fisher-Yates with the deterministic rng
        for (size_t i = sample_count; i > 1; --i) {
            const size_t j = static_cast<size_t>(shuffle_rng.uniform_index(i));
            std::swap(order[i - 1], order[j]);
        }

        double task_sum = 0.0, fin_sum = 0.0;
        for (size_t step = 0; step < sample_count; ++step) {
            const size_t sample = order[step];
            Tape tape;
            std::vector<int> ens_nodes = ensemble.bind_params(tape);
            std::vector<int> extra_nodes;
            extra_nodes.reserve(extra_params.size());
            for (Value* p : extra_params) extra_nodes.push_back(tape.leaf(*p));

            SampleGraph g = build_sample(tape, ens_nodes, extra_nodes, sample);
            int loss = g.task_loss;
            for (int W : g.weight_nodes) {
                if (ensemble.cfg.gamma1 > 0.0) {
                    loss = tape.sub(loss, tape.scale(tape.row_l2norm_sum(W), ensemble.cfg.gamma1));
                }
                if (ensemble.cfg.gamma2 > 0.0) {
                    loss = tape.sub(loss,
                                    tape.scale(tape.pairwise_row_distance_sum(W), 0.5 * ensemble.cfg.gamma2));
                }
            }

            const double task_val = tape.scalar(g.task_loss);
            const double fin_val = tape.scalar(loss);
            if (!std::isfinite(fin_val)) throw TrainingDiverged(sample);
            task_sum += task_val;
            fin_sum += fin_val;

            tape.backward(loss);
            std::vector<Value> grads;
            grads.reserve(all_params.size());
            for (size_t p = 0; p < ensemble_param_count; ++p) grads.push_back(tape.grad(ens_nodes[p]));
            for (size_t p = 0; p < extra_nodes.size(); ++p) grads.push_back(tape.grad(extra_nodes[p]));
            opt.step(grads);
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.mean_task_loss = task_sum / static_cast<double>(sample_count);
        rec.mean_final_loss = fin_sum / static_cast<double>(sample_count);
        if (weight_sampler) rec.stats = weight_stats(weight_sampler());
        history.push_back(rec);
    }
    return history;
}

}  // namespace gate::amalgam
