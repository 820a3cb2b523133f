#include "ltf/denoiser.hpp"

#include <cmath>

#include "ltf/error.hpp"

namespace ltf {

Denoiser::Denoiser(const DenoiserConfig& cfg, std::uint64_t seed) : cfg_(cfg), seed_(seed) {
    if (cfg.time_dim % 2 != 0) throw ContractError("time embedding width must be even");
    Rng rng(derive_seed(seed, "denoiser"));
    std::vector<double> emb((cfg.C + 1) * cfg.class_dim);
    for (auto& v : emb) v = rng.normal() * 0.5;
    class_emb_ = Tensor::from({cfg.C + 1, cfg.class_dim}, std::move(emb), true);

    std::vector<std::size_t> dims{cfg.d_z + cfg.time_dim + cfg.class_dim};
    for (std::size_t i = 0; i < cfg.layers; ++i) dims.push_back(cfg.hidden);
    dims.push_back(cfg.d_z);
    net_ = Mlp(dims, rng);
}

std::vector<double> Denoiser::time_embedding(int t, std::size_t dim) {
    std::vector<double> out(dim);
    const std::size_t half = dim / 2;
    for (std::size_t i = 0; i < half; ++i) {
        const double freq =
            std::exp(-std::log(10000.0) * static_cast<double>(i) / static_cast<double>(half));
        out[2 * i] = std::sin(t * freq);
        out[2 * i + 1] = std::cos(t * freq);
    }
    return out;
}

Tensor Denoiser::input_row(const Tensor& z_row, int t, std::optional<std::size_t> cls) const {
    const std::size_t row = cls.value_or(cfg_.C);
    if (row > cfg_.C) throw ContractError("class index out of range");
    const Tensor temb = Tensor::from({1, cfg_.time_dim}, time_embedding(t, cfg_.time_dim));
    const Tensor cemb = slice(class_emb_, 0, row, 1);
    return concat({z_row, temb, cemb}, 1);
}

Tensor Denoiser::forward(const Tensor& z, int t, std::optional<std::size_t> cls) const {
    if (t < 1 || t > cfg_.T) {
        throw ContractError("denoiser step t=" + std::to_string(t) + " outside [1, T]");
    }
    if (z.rank() != 1 || z.size() != cfg_.d_z) {
        throw DimensionError("denoiser: latent must be rank-1 [d_z]");
    }
    const Tensor row = input_row(reshape(z, {1, cfg_.d_z}), t, cls);
    return reshape(net_.forward(row), {cfg_.d_z});
}

Tensor Denoiser::forward_batch(const Tensor& z, const std::vector<int>& ts,
                               const std::vector<std::optional<std::size_t>>& cls) const {
    if (z.rank() != 2 || z.shape()[1] != cfg_.d_z) {
        throw DimensionError("denoiser: batch must be [b, d_z]");
    }
    const std::size_t b = z.shape()[0];
    if (ts.size() != b || cls.size() != b) {
        throw DimensionError("denoiser: one step and class per row required");
    }
    std::vector<Tensor> rows;
    rows.reserve(b);
    for (std::size_t i = 0; i < b; ++i) {
        if (ts[i] < 1 || ts[i] > cfg_.T) throw ContractError("denoiser step outside [1, T]");
        rows.push_back(input_row(slice(z, 0, i, 1), ts[i], cls[i]));
    }
    return net_.forward(concat(rows, 0));
}

std::vector<Tensor> Denoiser::params() const {
    auto out = net_.params();
    out.push_back(class_emb_);
    return out;
}

}  // namespace ltf
