#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "ltf/mlp.hpp"
#include "ltf/tensor.hpp"

namespace ltf {

struct DenoiserConfig {
    std::size_t d_z = 2;
    std::size_t hidden = 128;
    std::size_t layers = 2;     // hidden layers
    std::size_t time_dim = 16;  // sinusoidal embedding width (even)
    std::size_t class_dim = 8;  // learned class embedding width
    std::size_t C = 10;
    int T = 100;  // step range the net is trained for
};

// epsilon-prediction MLP over (z_t, sinusoidal t embedding, learned class
// embedding). Class index C acts as the null class for classifier-free
// guidance.
class Denoiser {
  public:
    Denoiser() = default;
    Denoiser(const DenoiserConfig& cfg, std::uint64_t seed);

    // z is rank-1 [d_z]; nullopt class means the null embedding.
    Tensor forward(const Tensor& z, int t, std::optional<std::size_t> cls) const;
    // z is [b, d_z] with per-row step and class.
    Tensor forward_batch(const Tensor& z, const std::vector<int>& ts,
                         const std::vector<std::optional<std::size_t>>& cls) const;

    static std::vector<double> time_embedding(int t, std::size_t dim);

    const DenoiserConfig& config() const { return cfg_; }
    std::uint64_t seed() const { return seed_; }
    std::vector<Tensor> params() const;
    std::uint64_t checksum() const { return params_checksum(params()); }

    Tensor class_emb_;  // [C+1, class_dim]
    Mlp net_;

  private:
    Tensor input_row(const Tensor& z_row, int t, std::optional<std::size_t> cls) const;
    DenoiserConfig cfg_;
    std::uint64_t seed_ = 0;
};

}  // namespace ltf
