#include "ltf/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ltf/error.hpp"

namespace ltf {

ClassifierModel::ClassifierModel(const ClassifierConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), seed_(seed) {
    Rng trunk_rng(derive_seed(seed, "classifier_trunk"));
    std::vector<std::size_t> dims(cfg.layers + 1, cfg.d_model);
    dims[0] = cfg.d_x;
    trunk_ = Mlp(dims, trunk_rng, /*activate_last=*/true);
    base_head_ = Linear(cfg.d_model, cfg.C, trunk_rng);

    Rng head_rng(derive_seed(seed, "classifier_heads"));
    for (std::size_t k = 0; k < cfg.K; ++k) {
        heads_.emplace_back(cfg.d_model, cfg.C, head_rng);
    }
}

ClassifierForward ClassifierModel::forward(const Tensor& x) const {
    ClassifierForward out;
    out.features = trunk_.forward(x);
    out.base_logits = base_head_.forward(out.features);
    if (!heads_.empty()) {
        const std::size_t b = out.features.shape()[0];
        // Stop-grad: heads see trunk features as constants.
        const Tensor feat = out.features.detach();
        std::vector<Tensor> per_head;
        per_head.reserve(heads_.size());
        for (const auto& h : heads_) {
            per_head.push_back(reshape(h.forward(feat), {b, 1, cfg_.C}));
        }
        out.head_logits = concat(per_head, 1);
    }
    return out;
}

Tensor ClassifierModel::base_logits_of(const Tensor& x) const {
    return base_head_.forward(trunk_.forward(x));
}

Tensor ClassifierModel::head_logits_of(const Tensor& x) const {
    if (heads_.empty()) throw ContractError("model has no epistemic heads");
    const Tensor x2 = x.rank() == 1 ? reshape(x, {1, x.size()}) : x;
    if (x2.shape()[0] != 1) throw DimensionError("head_logits_of takes one example");
    // No stop-grad here: signal gradients flow through the trunk to the
    // input. The training-time isolation lives in forward().
    const Tensor feat = trunk_.forward(x2);
    std::vector<Tensor> per_head;
    per_head.reserve(heads_.size());
    for (const auto& h : heads_) {
        per_head.push_back(reshape(h.forward(feat), {x2.shape()[0], 1, cfg_.C}));
    }
    return reshape(concat(per_head, 1), {cfg_.K, cfg_.C});
}

std::vector<Tensor> ClassifierModel::params() const {
    auto out = trunk_.params();
    auto bp = base_head_.params();
    out.insert(out.end(), bp.begin(), bp.end());
    auto hp = head_params();
    out.insert(out.end(), hp.begin(), hp.end());
    return out;
}

std::vector<Tensor> ClassifierModel::head_params() const {
    std::vector<Tensor> out;
    for (const auto& h : heads_) {
        out.push_back(h.W);
        out.push_back(h.b);
    }
    return out;
}

std::pair<std::size_t, std::size_t> ClassifierModel::epistemic_param_count() const {
    std::size_t weights = 0, biases = 0;
    for (const auto& h : heads_) {
        weights += h.W.size();
        biases += h.b.size();
    }
    return {weights, biases};
}

Tensor cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels) {
    if (logits.rank() != 2) throw DimensionError("cross_entropy: logits must be [b, C]");
    if (logits.shape()[0] != labels.size()) {
        throw DimensionError("cross_entropy: one label per row required");
    }
    return mean_all(sub(logsumexp(logits, 1.0), gather_rows(logits, labels)));
}

Tensor oracle_loss(const Tensor& head_logits, const std::vector<std::size_t>& labels) {
    if (head_logits.rank() != 3) throw DimensionError("oracle_loss: logits must be [b, K, C]");
    const std::size_t b = head_logits.shape()[0];
    const std::size_t K = head_logits.shape()[1];
    const std::size_t C = head_logits.shape()[2];
    if (labels.size() != b) throw DimensionError("oracle_loss: one label per example");

    const Tensor flat = reshape(head_logits, {b * K, C});
    std::vector<std::size_t> rep_labels(b * K);
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t k = 0; k < K; ++k) rep_labels[i * K + k] = labels[i];
    }
    const Tensor ce = reshape(sub(logsumexp(flat, 1.0), gather_rows(flat, rep_labels)), {b, K});

    // argmin per example over the forward values; ties break low.
    std::vector<std::size_t> winners(b, 0);
    const auto cev = ce.values();
    for (std::size_t i = 0; i < b; ++i) {
        double best = cev[i * K];
        for (std::size_t k = 1; k < K; ++k) {
            if (cev[i * K + k] < best) {
                best = cev[i * K + k];
                winners[i] = k;
            }
        }
    }
    return mean_all(gather_rows(ce, winners));
}

Tensor all_heads_loss(const Tensor& head_logits, const std::vector<std::size_t>& labels) {
    if (head_logits.rank() != 3) throw DimensionError("all_heads_loss: logits must be [b, K, C]");
    const std::size_t b = head_logits.shape()[0];
    const std::size_t K = head_logits.shape()[1];
    const std::size_t C = head_logits.shape()[2];
    if (labels.size() != b) throw DimensionError("all_heads_loss: one label per example");
    const Tensor flat = reshape(head_logits, {b * K, C});
    std::vector<std::size_t> rep_labels(b * K);
    for (std::size_t i = 0; i < b; ++i) {
        for (std::size_t k = 0; k < K; ++k) rep_labels[i * K + k] = labels[i];
    }
    return mean_all(sub(logsumexp(flat, 1.0), gather_rows(flat, rep_labels)));
}

Tensor points_matrix(const std::vector<LabeledPoint>& pts) {
    if (pts.empty()) throw ContractError("empty point set");
    const std::size_t d = pts[0].features.size();
    std::vector<double> data;
    data.reserve(pts.size() * d);
    for (const auto& p : pts) {
        data.insert(data.end(), p.features.begin(), p.features.end());
    }
    return Tensor::from({pts.size(), d}, std::move(data));
}

std::vector<std::size_t> points_labels(const std::vector<LabeledPoint>& pts) {
    std::vector<std::size_t> out;
    out.reserve(pts.size());
    for (const auto& p : pts) out.push_back(p.label);
    return out;
}

TrainStats train_classifier(ClassifierModel& m, const std::vector<LabeledPoint>& points,
                            const ClassifierTrainConfig& cfg, std::uint64_t seed) {
    if (points.empty()) throw ContractError("train_classifier: empty dataset");
    const std::size_t n = points.size();
    const std::size_t steps_per_epoch = (n + cfg.batch - 1) / cfg.batch;

    OptimizerConfig ocfg;
    ocfg.kind = cfg.optimizer;
    ocfg.lr = cfg.lr;
    ocfg.momentum = cfg.momentum;
    ocfg.cosine_decay = cfg.cosine_decay;
    ocfg.total_steps = cfg.epochs * steps_per_epoch;
    Optimizer opt(m.params(), ocfg);

    Rng order_rng(derive_seed(seed, "classifier_batches"));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    TrainStats stats;
    const bool use_oracle = !m.heads_.empty() && cfg.oracle_coeff != 0.0;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        order_rng.shuffle(order);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < n; start += cfg.batch) {
            const std::size_t bsz = std::min(cfg.batch, n - start);
            std::vector<LabeledPoint> batch(bsz);
            for (std::size_t i = 0; i < bsz; ++i) batch[i] = points[order[start + i]];
            const Tensor x = points_matrix(batch);
            const auto y = points_labels(batch);

            Tape tape;
            TapeScope scope(tape);
            auto fwd = m.forward(x);
            Tensor loss = cross_entropy(fwd.base_logits, y);
            if (use_oracle) {
                loss = add(loss, scale(oracle_loss(fwd.head_logits, y), cfg.oracle_coeff));
                if (cfg.oracle_smooth > 0.0) {
                    loss = add(loss, scale(all_heads_loss(fwd.head_logits, y),
                                           cfg.oracle_coeff * cfg.oracle_smooth));
                }
            }
            tape.backward(loss);
            opt.step();
            opt.zero_grad();
            epoch_loss += loss.item() * static_cast<double>(bsz);
        }
        stats.epoch_loss.push_back(epoch_loss / static_cast<double>(n));
    }
    return stats;
}

TrainStats train_classifier(ClassifierModel& m, const LongtailDataset& ds,
                            const ClassifierTrainConfig& cfg, std::uint64_t seed) {
    return train_classifier(m, ds.points, cfg, seed);
}

}  // namespace ltf
