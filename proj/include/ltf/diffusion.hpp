#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "ltf/autoencoder.hpp"
#include "ltf/dataset.hpp"
#include "ltf/denoiser.hpp"
#include "ltf/rng.hpp"
#include "ltf/schedule.hpp"
#include "ltf/tensor.hpp"

namespace ltf {

// Per-dimension standardization of the latent space; diffusion runs on
// normalized latents so the N(0, I) prior matches the data scale.
struct LatentStats {
    std::vector<double> mean;
    std::vector<double> std;
};

LatentStats fit_latent_stats(const Autoencoder& ae, const std::vector<LabeledPoint>& data);
Tensor normalize_latent(const Tensor& z, const LatentStats& st);
Tensor denormalize_latent(const Tensor& z, const LatentStats& st);

// Autoencoder + conditional denoiser + schedule; encode/decode map between
// data space and the normalized latent space the denoiser works in.
struct DiffusionStack {
    Autoencoder ae;
    Denoiser denoiser;
    NoiseSchedule sched;
    LatentStats latent_stats;

    Tensor encode(const Tensor& x) const;  // data -> normalized latent
    Tensor decode(const Tensor& z) const;  // normalized latent -> data (differentiable)
    std::size_t latent_dim() const { return denoiser.config().d_z; }
};

// Closed-form forward marginal z_t = sqrt(ab_t) z0 + sqrt(1-ab_t) noise;
// t = 0 returns z0. Caller supplies the noise for determinism.
Tensor forward_noise(const Tensor& z0, int t, const Tensor& noise, const NoiseSchedule& sched);

// z0_hat = (z_t - sqrt(1-ab_t) eps_hat) / sqrt(ab_t); differentiable in both
// tensor arguments. Accepts t = 0 (identity, ab_0 = 1).
Tensor predict_terminal(const Tensor& z_t, const Tensor& eps_hat, int t,
                        const NoiseSchedule& sched);

// eps_uncond + s * (eps_cond - eps_uncond).
Tensor cfg_combine(const Tensor& eps_cond, const Tensor& eps_uncond, double s);

struct DdimStepOutput {
    Tensor z_prev;
    Tensor x0_hat;
    Tensor v_t;
    Tensor eps_used;
};

// One DDIM step t -> t_prev. eps_override, when given, replaces the denoiser
// output (guidance hook). Draws sigma noise only when sigma > 0, so eta = 0
// never consumes rng.
DdimStepOutput ddim_step(const Denoiser& d, const Tensor& z_t, int t, int t_prev,
                         std::optional<std::size_t> cls, const NoiseSchedule& sched, Rng& rng,
                         const std::optional<Tensor>& eps_override = std::nullopt);
inline DdimStepOutput ddim_step(const Denoiser& d, const Tensor& z_t, int t,
                                std::optional<std::size_t> cls, const NoiseSchedule& sched,
                                Rng& rng,
                                const std::optional<Tensor>& eps_override = std::nullopt) {
    return ddim_step(d, z_t, t, t - 1, cls, sched, rng, eps_override);
}

// Ancestral DDPM step with fixed (non-learned) variance. Posterior variance
// beta_tilde is the default and is the exact eta = 1 DDIM counterpart; Beta
// uses beta_t itself.
enum class DdpmVariance { Posterior, Beta };
Tensor ddpm_step(const Denoiser& d, const Tensor& z_t, int t, std::optional<std::size_t> cls,
                 const NoiseSchedule& sched, Rng& rng,
                 DdpmVariance var = DdpmVariance::Posterior,
                 const std::optional<Tensor>& eps_override = std::nullopt);

// Denoising loss with every random draw fixed by the caller: per-example step
// ts[i], noise rows, and classes (already classifier-free-dropped). Mean over
// examples of the squared noise-prediction error norm.
Tensor ddpm_loss_fixed(const Denoiser& d, const Tensor& z0, const std::vector<int>& ts,
                       const Tensor& noise, const std::vector<std::optional<std::size_t>>& cls,
                       const NoiseSchedule& sched);

// Samples t ~ U[1,T], eps ~ N(0,I), drops class to null with p_uncond.
Tensor ddpm_train_step(const Denoiser& d, const Tensor& z0,
                       const std::vector<std::size_t>& labels, const NoiseSchedule& sched,
                       double p_uncond, Rng& rng);

struct DiffusionTrainConfig {
    std::size_t steps = 6000;
    std::size_t batch = 96;
    double lr = 1e-3;
    double p_uncond = 0.1;
};

// Trains a denoiser on given latent rows; returns mean loss of the last 100
// steps. The stack form encodes the data first.
double train_denoiser_latents(Denoiser& d, const Tensor& z0_all,
                              const std::vector<std::size_t>& labels,
                              const NoiseSchedule& sched, const DiffusionTrainConfig& cfg,
                              std::uint64_t seed);
double train_denoiser(DiffusionStack& stack, const std::vector<LabeledPoint>& data,
                      const DiffusionTrainConfig& cfg, std::uint64_t seed);

// ---- sampling ----------------------------------------------------------------

// Maps (z_t values, t, t_prev, raw eps values) to a biased eps; applied after
// classifier-free combination.
using GuidanceHook = std::function<std::vector<double>(
    const std::vector<double>&, int, int, const std::vector<double>&)>;

// Per-step observer: (chain, step_index, t, z_t, eps_used, x0_hat).
using StepTrace = std::function<void(std::size_t, std::size_t, int, const std::vector<double>&,
                                     const std::vector<double>&, const std::vector<double>&)>;

struct SamplerConfig {
    int num_steps = 50;       // DDIM subsequence length
    double step_power = 1.0;  // subsequence spacing exponent (see ddim_timesteps)
    double cfg_scale = 1.0;   // 1 = conditional only; 0 = unconditional
    int threads = 1;
};

// n independent chains from z_T ~ N(0, I); chain i uses chain_seed(seed, i),
// so results are independent of thread count. Returns final latents.
std::vector<std::vector<double>> sample_latents(const Denoiser& d, const NoiseSchedule& sched,
                                                std::optional<std::size_t> cls, std::size_t n,
                                                std::uint64_t seed, const SamplerConfig& scfg,
                                                const GuidanceHook& hook = nullptr,
                                                const StepTrace& trace = nullptr);

}  // namespace ltf
