#pragma once

#include <cstdint>
#include <vector>

#include "ltf/rng.hpp"
#include "ltf/tensor.hpp"

namespace ltf {

struct Linear {
    Tensor W;  // [in, out]
    Tensor b;  // [out]

    Linear() = default;
    Linear(std::size_t in, std::size_t out, Rng& rng);

    // x is [batch, in] or [in].
    Tensor forward(const Tensor& x) const;
    // W = I, b = 0; requires in == out.
    void identity_init();

    std::size_t in_dim() const { return W.shape()[0]; }
    std::size_t out_dim() const { return W.shape()[1]; }
    std::vector<Tensor> params() const { return {W, b}; }
};

// Feed-forward stack over dims {in, h..., out} with tanh between layers.
// activate_last applies tanh after the final layer too (classifier trunks).
struct Mlp {
    std::vector<Linear> layers;
    bool activate_last = false;

    Mlp() = default;
    Mlp(const std::vector<std::size_t>& dims, Rng& rng, bool activate_last = false);

    Tensor forward(const Tensor& x) const;
    std::vector<Tensor> params() const;
};

// ---- optimizers --------------------------------------------------------------

enum class OptimizerKind { SgdMomentum, Adam };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::SgdMomentum;
    double lr = 0.05;
    double momentum = 0.9;
    bool cosine_decay = true;
    std::size_t total_steps = 0;  // 0 disables the decay schedule
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;
};

class Optimizer {
  public:
    Optimizer(std::vector<Tensor> params, OptimizerConfig cfg);

    void step();
    void zero_grad();
    double current_lr() const;
    std::size_t steps_taken() const { return t_; }

  private:
    std::vector<Tensor> params_;
    OptimizerConfig cfg_;
    std::size_t t_ = 0;
    std::vector<std::vector<double>> m_;  // momentum / first moment
    std::vector<std::vector<double>> v_;  // second moment (adam)
};

// FNV-1a over the raw bytes of all parameter values; frozen-model contract
// checks compare this before/after.
std::uint64_t params_checksum(const std::vector<Tensor>& params);

}  // namespace ltf
