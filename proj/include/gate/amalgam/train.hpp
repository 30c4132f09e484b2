#pragma once

#include <functional>
#include <stdexcept>
#include <vector>

#include "gate/amalgam/ensemble.hpp"

namespace gate::amalgam {

struct TrainConfig {
    int epochs = 40;
    double lr = 1e-2;
    uint64_t seed = 0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
};

struct TrainingDiverged : std::runtime_error {
    size_t batch_id;
    explicit TrainingDiverged(size_t id)
        : std::runtime_error("training diverged (non-finite loss) at batch " + std::to_string(id)),
          batch_id(id) {}
};

struct EpochRecord {
    int epoch = 0;
    double mean_task_loss = 0.0;
    double mean_final_loss = 0.0;
    WeightStats stats;
};

// One sample's forward graph: the task loss and the weight matrices to
// regularize (typically one; correspondence pairs register two).
struct SampleGraph {
    int task_loss = -1;
    std::vector<int> weight_nodes;
};

// Builds the loss subgraph for a sample. Parameter nodes for the ensemble are
// pre-bound and passed in; heads bind their own parameters through
// `extra_param_nodes` (filled in the order of `extra_params`).
using SampleLossBuilder =
    std::function<SampleGraph(Tape&, const std::vector<int>& ensemble_param_nodes,
                              const std::vector<int>& extra_param_nodes, size_t sample_index)>;

// Per-epoch weight matrices over the dataset, for statistics.
using WeightSampler = std::function<std::vector<Value>()>;

class Adam {
public:
    Adam(std::vector<Value*> params, const TrainConfig& cfg);
    void step(const std::vector<Value>& grads);

private:
    std::vector<Value*> params_;
    std::vector<Value> m_, v_;
    TrainConfig cfg_;
    int64_t t_ = 0;
};

// Gradient descent on L_fin = L - gamma1 * sparsity - (gamma2/2) * diversity,
// one sample per step in a seeded shuffled order. Both the ensemble and the
// extra (head) parameters update jointly.
std::vector<EpochRecord> train_ensemble(AssignerEnsemble& ensemble, size_t sample_count,
                                        const SampleLossBuilder& build_sample,
                                        std::vector<Value*> extra_params, const TrainConfig& cfg,
                                        const WeightSampler& weight_sampler);

}  // namespace gate::amalgam
