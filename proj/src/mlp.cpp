#include "ltf/mlp.hpp"

#include <cmath>
#include <cstring>

#include "ltf/error.hpp"

namespace ltf {

Linear::Linear(std::size_t in, std::size_t out, Rng& rng) {
    // Uniform fan-in init; per-instance draws give head diversity its prior.
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::vector<double> w(in * out), bias(out);
    for (auto& v : w) v = (2.0 * rng.uniform() - 1.0) * bound;
    for (auto& v : bias) v = (2.0 * rng.uniform() - 1.0) * bound;
    W = Tensor::from({in, out}, std::move(w), true);
    b = Tensor::from({out}, std::move(bias), true);
}

Tensor Linear::forward(const Tensor& x) const {
    if (x.rank() == 1) {
        auto y = forward(reshape(x, {1, x.size()}));
        return reshape(y, {y.size()});
    }
    if (x.rank() != 2 || x.shape()[1] != in_dim()) {
        throw DimensionError("linear: input dimension mismatch");
    }
    return add(matmul(x, W), b);
}

void Linear::identity_init() {
    if (in_dim() != out_dim()) throw ContractError("identity init needs a square layer");
    const std::size_t n = in_dim();
    auto w = W.mutable_values();
    std::fill(w.begin(), w.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) w[i * n + i] = 1.0;
    auto bias = b.mutable_values();
    std::fill(bias.begin(), bias.end(), 0.0);
}

Mlp::Mlp(const std::vector<std::size_t>& dims, Rng& rng, bool activate_last)
    : activate_last(activate_last) {
    if (dims.size() < 2) throw ContractError("mlp needs at least in and out dims");
    for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
        layers.emplace_back(dims[i], dims[i + 1], rng);
    }
}

Tensor Mlp::forward(const Tensor& x) const {
    Tensor h = x;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        h = layers[i].forward(h);
        if (i + 1 < layers.size() || activate_last) h = tanh(h);
    }
    return h;
}

std::vector<Tensor> Mlp::params() const {
    std::vector<Tensor> out;
    for (const auto& l : layers) {
        out.push_back(l.W);
        out.push_back(l.b);
    }
    return out;
}

Optimizer::Optimizer(std::vector<Tensor> params, OptimizerConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i) {
        m_[i].assign(params_[i].size(), 0.0);
        if (cfg_.kind == OptimizerKind::Adam) v_[i].assign(params_[i].size(), 0.0);
    }
}

double Optimizer::current_lr() const {
    if (!cfg_.cosine_decay || cfg_.total_steps == 0) return cfg_.lr;
    const double frac =
        std::min(1.0, static_cast<double>(t_) / static_cast<double>(cfg_.total_steps));
    return cfg_.lr * 0.5 * (1.0 + std::cos(3.14159265358979323846 * frac));
}

void Optimizer::step() {
    const double lr = current_lr();
    for (std::size_t i = 0; i < params_.size(); ++i) {
        auto& p = params_[i];
        if (!p.has_grad()) continue;
        auto vals = p.mutable_values();
        const auto g = p.grad();
        if (cfg_.kind == OptimizerKind::SgdMomentum) {
            for (std::size_t j = 0; j < vals.size(); ++j) {
                m_[i][j] = cfg_.momentum * m_[i][j] + g[j];
                vals[j] -= lr * m_[i][j];
            }
        } else {
            const double b1 = cfg_.adam_beta1, b2 = cfg_.adam_beta2;
            const double bc1 = 1.0 - std::pow(b1, static_cast<double>(t_ + 1));
            const double bc2 = 1.0 - std::pow(b2, static_cast<double>(t_ + 1));
            for (std::size_t j = 0; j < vals.size(); ++j) {
                m_[i][j] = b1 * m_[i][j] + (1.0 - b1) * g[j];
                v_[i][j] = b2 * v_[i][j] + (1.0 - b2) * g[j] * g[j];
                const double mhat = m_[i][j] / bc1;
                const double vhat = v_[i][j] / bc2;
                vals[j] -= lr * mhat / (std::sqrt(vhat) + cfg_.adam_eps);
            }
        }
    }
    ++t_;
}

void Optimizer::zero_grad() {
    for (auto& p : params_) p.zero_grad();
}

std::uint64_t params_checksum(const std::vector<Tensor>& params) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](const void* data, std::size_t n) {
        const auto* b = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= b[i];
            h *= 0x100000001b3ull;
        }
    };
    for (const auto& p : params) {
        for (double v : p.values()) mix(&v, sizeof(v));
    }
    return h;
}

}  // namespace ltf
