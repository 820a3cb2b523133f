#pragma once

#include <cstdint>

#include "ltf/classifier.hpp"
#include "ltf/dataset.hpp"
#include "ltf/diffusion.hpp"

namespace ltf {

// The default 2-D longtail benchmark: C = 10, counts spanning the Many /
// Medium / Few regimes (1200 down to 8 under a power law), with rare classes
// placed both far from the dense mass (epistemic geometry) and on decision
// boundaries (aleatoric geometry). Validation is a balanced independent draw
// tagged by the training regime.
struct Benchmark {
    LongtailDataset train;
    LongtailDataset val;
};

MixtureSpec default_benchmark_spec();
Benchmark make_default_benchmark(std::uint64_t seed, std::size_t val_per_class = 100);

ClassifierTrainConfig default_classifier_training();
AeTrainConfig default_ae_training();
DiffusionTrainConfig default_diffusion_training();

ClassifierModel train_benchmark_classifier(const Benchmark& b, std::uint64_t seed,
                                           std::size_t K = 5);
DiffusionStack train_benchmark_stack(const Benchmark& b, std::uint64_t seed);

// Grid units scale to desk units through this factor (see GuidanceConfig).
double default_weight_scale();

}  // namespace ltf
