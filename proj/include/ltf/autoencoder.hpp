#pragma once

#include <cstdint>
#include <vector>

#include "ltf/dataset.hpp"
#include "ltf/mlp.hpp"
#include "ltf/tensor.hpp"

namespace ltf {

struct AutoencoderConfig {
    std::size_t d_x = 2;
    std::size_t d_z = 2;
    std::size_t hidden = 32;
    std::size_t layers = 1;  // hidden layers per side; 0 gives a single linear map
};

class Autoencoder {
  public:
    Autoencoder() = default;
    Autoencoder(const AutoencoderConfig& cfg, std::uint64_t seed);

    Tensor encode(const Tensor& x) const { return encoder_.forward(x); }
    // Differentiable; guidance backpropagates through this.
    Tensor decode(const Tensor& z) const { return decoder_.forward(z); }

    // Both sides become exact identities; requires layers == 0 and d_z == d_x.
    void identity_init();

    const AutoencoderConfig& config() const { return cfg_; }
    std::uint64_t seed() const { return seed_; }
    std::vector<Tensor> params() const;
    std::uint64_t checksum() const { return params_checksum(params()); }

    Mlp encoder_;
    Mlp decoder_;

  private:
    AutoencoderConfig cfg_;
    std::uint64_t seed_ = 0;
};

struct AeTrainConfig {
    std::size_t epochs = 200;
    std::size_t batch = 64;
    double lr = 1e-3;
    OptimizerKind optimizer = OptimizerKind::Adam;
};

// Minimizes mean squared reconstruction error; returns final epoch MSE.
double train_autoencoder(Autoencoder& a, const std::vector<LabeledPoint>& data,
                         const AeTrainConfig& cfg, std::uint64_t seed);

}  // namespace ltf
