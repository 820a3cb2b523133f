#pragma once

#include <cstdint>
#include <vector>

#include "ltf/dataset.hpp"
#include "ltf/mlp.hpp"
#include "ltf/tensor.hpp"

namespace ltf {

struct ClassifierConfig {
    std::size_t d_x = 2;
    std::size_t d_model = 64;
    std::size_t layers = 3;  // hidden layers in the trunk
    std::size_t C = 10;
    std::size_t K = 5;  // epistemic heads; 0 disables them (ablation)
};

struct ClassifierForward {
    Tensor base_logits;  // [b, C]
    Tensor head_logits;  // [b, K, C]; undefined when K == 0
    Tensor features;     // [b, d_model]
};

// Trunk + base head (the production model) plus K duplicated heads trained
// behind a stop-grad. Base predictions are a pure function of trunk and base
// head; head streams are seeded independently of the trunk so attaching or
// removing heads never changes base behavior under a fixed seed.
class ClassifierModel {
  public:
    ClassifierModel() = default;
    ClassifierModel(const ClassifierConfig& cfg, std::uint64_t seed);

    ClassifierForward forward(const Tensor& x) const;
    // Trunk + base head only.
    Tensor base_logits_of(const Tensor& x) const;
    // Per-head logits for one example, [K, C].
    Tensor head_logits_of(const Tensor& x) const;

    const ClassifierConfig& config() const { return cfg_; }
    std::uint64_t seed() const { return seed_; }

    std::vector<Tensor> params() const;
    std::vector<Tensor> trunk_params() const { return trunk_.params(); }
    std::vector<Tensor> base_params() const { return base_head_.params(); }
    std::vector<Tensor> head_params() const;

    // Extra parameters added by the heads: {K*d_model*C weights, K*C biases}.
    std::pair<std::size_t, std::size_t> epistemic_param_count() const;
    std::uint64_t checksum() const { return params_checksum(params()); }

    Mlp trunk_;
    Linear base_head_;
    std::vector<Linear> heads_;

  private:
    ClassifierConfig cfg_;
    std::uint64_t seed_ = 0;
};

// Cross-entropy of logits [b, C] against labels, batch mean.
Tensor cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels);

// Multiple-choice oracle loss over head logits [b, K, C]: per example only
// the minimum-loss head's cross-entropy enters the batch mean (ties to the
// lowest head index), so gradient reaches exactly the winning head.
Tensor oracle_loss(const Tensor& head_logits, const std::vector<std::size_t>& labels);

// Mean cross-entropy over every head and example; the hedging term.
Tensor all_heads_loss(const Tensor& head_logits, const std::vector<std::size_t>& labels);

struct ClassifierTrainConfig {
    std::size_t epochs = 60;
    std::size_t batch = 64;
    double lr = 0.05;
    OptimizerKind optimizer = OptimizerKind::SgdMomentum;
    double momentum = 0.9;
    bool cosine_decay = true;
    double oracle_coeff = 1.0;
    // Hedge on the winner-take-all assignment: mean per-head cross-entropy
    // mixed in at this weight. Pure argmin lets a head own whole classes at
    // this data scale, which flattens the disagreement signal; the hedge
    // keeps every head a full classifier while the winner term specializes.
    double oracle_smooth = 0.3;
};

struct TrainStats {
    std::vector<double> epoch_loss;
};

// Total loss = base cross-entropy + oracle loss on heads computed from
// detached trunk features (no gradient crosses from head loss into trunk).
TrainStats train_classifier(ClassifierModel& m, const std::vector<LabeledPoint>& points,
                            const ClassifierTrainConfig& cfg, std::uint64_t seed);
TrainStats train_classifier(ClassifierModel& m, const LongtailDataset& ds,
                            const ClassifierTrainConfig& cfg, std::uint64_t seed);

// Batch of feature rows -> tensor [n, d].
Tensor points_matrix(const std::vector<LabeledPoint>& pts);
std::vector<std::size_t> points_labels(const std::vector<LabeledPoint>& pts);

}  // namespace ltf
