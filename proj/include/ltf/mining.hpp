#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ltf/guidance.hpp"
#include "ltf/metrics.hpp"

namespace ltf {

enum class Allocation { ProportionalToClassFrequency, UniformPerClass };
const char* allocation_name(Allocation a);
Allocation allocation_from_name(const std::string& s);

struct MiningSchedule {
    std::size_t total_epochs = 30;
    std::vector<std::size_t> generation_epochs = {0, 6, 12, 18, 24};
    std::size_t per_round_quota = 200;
    Allocation allocation = Allocation::UniformPerClass;

    void validate() const;
};

// Sums to quota exactly. Proportional uses largest-remainder rounding;
// uniform splits evenly with the remainder going to the lowest class indices.
std::vector<std::size_t> allocate_per_class(std::size_t quota,
                                            const std::vector<std::size_t>& class_counts,
                                            Allocation policy);

struct RoundRecord {
    std::size_t epoch = 0;
    double w = 0.0;
    std::string checkpoint_id;
    std::size_t generated = 0;
    std::vector<WeightCell> selection_evidence;  // empty when w was fixed
    double mean_p = 0.0;
    double mean_signal = 0.0;
};

struct EpochMetric {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_overall = 0.0;
    double val_many = 0.0;
    double val_medium = 0.0;
    double val_few = 0.0;
    std::size_t pool_size = 0;
};

struct RunManifest {
    std::uint64_t seed = 0;
    std::vector<RoundRecord> rounds;
    std::vector<EpochMetric> epochs;
};

struct MiningConfig {
    MiningSchedule schedule;
    GuidanceConfig gcfg;
    SamplerConfig scfg;
    double finetune_lr = 0.005;  // default: base training lr / 10
    std::size_t batch = 64;
    std::size_t select_n_per_cell = 40;
    bool reselect_each_round = false;  // default: weight chosen once in round 0
    std::optional<double> fixed_w;     // skip selection entirely
    std::string out_dir;               // empty disables checkpoint/csv output
};

struct MiningResult {
    RunManifest manifest;
    SyntheticPool pool;
};

// Plain fine-tuning pass shared by the mining loop and its baselines:
// constant lr, persistent momentum across epochs, batch stream derived from
// (seed, "mining_batches"). Returns per-epoch mean loss.
std::vector<double> finetune_classifier(ClassifierModel& m,
                                        const std::vector<LabeledPoint>& points,
                                        std::size_t epochs, double lr, std::size_t batch,
                                        std::uint64_t seed);

// Fig.-3-style loop: at each generation epoch the model is frozen, a weight
// is chosen (round 0 unless reselect/fixed), per-class quotas are generated
// and merged into the pool; between generation epochs the classifier
// fine-tunes on real + pool. Real data is never discarded.
MiningResult run_mining_loop(ClassifierModel& model, const DiffusionStack& stack,
                             const MiningConfig& cfg, const LongtailDataset& train,
                             const LongtailDataset& val, std::uint64_t seed);

void save_manifest(const RunManifest& m, const std::string& json_path);
RunManifest load_manifest(const std::string& json_path);

}  // namespace ltf
