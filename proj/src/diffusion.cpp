#include "ltf/diffusion.hpp"

#include <cmath>
#include <numeric>
#include <thread>

#include "ltf/classifier.hpp"
#include "ltf/error.hpp"

namespace ltf {

LatentStats fit_latent_stats(const Autoencoder& ae, const std::vector<LabeledPoint>& data) {
    const Tensor z = ae.encode(points_matrix(data));
    const std::size_t n = z.shape()[0], d = z.shape()[1];
    LatentStats st;
    st.mean.assign(d, 0.0);
    st.std.assign(d, 0.0);
    const auto v = z.values();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) st.mean[j] += v[i * d + j];
    }
    for (auto& m : st.mean) m /= static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            const double c = v[i * d + j] - st.mean[j];
            st.std[j] += c * c;
        }
    }
    for (auto& s : st.std) {
        s = std::sqrt(s / static_cast<double>(n > 1 ? n - 1 : 1));
        if (s < 1e-12) s = 1.0;  // degenerate dimension; leave unscaled
    }
    return st;
}

namespace {
Tensor stats_row(const std::vector<double>& v) {
    return Tensor::from({v.size()}, std::vector<double>(v.begin(), v.end()));
}
}  // namespace

Tensor normalize_latent(const Tensor& z, const LatentStats& st) {
    return div(sub(z, stats_row(st.mean)), stats_row(st.std));
}

Tensor denormalize_latent(const Tensor& z, const LatentStats& st) {
    return add(mul(z, stats_row(st.std)), stats_row(st.mean));
}

Tensor DiffusionStack::encode(const Tensor& x) const {
    return normalize_latent(ae.encode(x), latent_stats);
}

Tensor DiffusionStack::decode(const Tensor& z) const {
    return ae.decode(denormalize_latent(z, latent_stats));
}

Tensor forward_noise(const Tensor& z0, int t, const Tensor& noise, const NoiseSchedule& sched) {
    if (t < 0 || t > sched.T) throw ScheduleError("forward_noise: t outside [0, T]");
    if (z0.shape() != noise.shape()) throw DimensionError("forward_noise: shape mismatch");
    const double ab = sched.alpha_bar[t];
    return add(scale(z0, std::sqrt(ab)), scale(noise, std::sqrt(1.0 - ab)));
}

Tensor predict_terminal(const Tensor& z_t, const Tensor& eps_hat, int t,
                        const NoiseSchedule& sched) {
    if (t < 0 || t > sched.T) throw ScheduleError("predict_terminal: t outside [0, T]");
    if (z_t.shape() != eps_hat.shape()) throw DimensionError("predict_terminal: shape mismatch");
    const double ab = sched.alpha_bar[t];
    return scale(sub(z_t, scale(eps_hat, std::sqrt(1.0 - ab))), 1.0 / std::sqrt(ab));
}

Tensor cfg_combine(const Tensor& eps_cond, const Tensor& eps_uncond, double s) {
    if (eps_cond.shape() != eps_uncond.shape()) {
        throw DimensionError("cfg_combine: shape mismatch");
    }
    if (s < 0.0) throw ContractError("cfg_combine: scale must be >= 0");
    return add(eps_uncond, scale(sub(eps_cond, eps_uncond), s));
}

DdimStepOutput ddim_step(const Denoiser& d, const Tensor& z_t, int t, int t_prev,
                         std::optional<std::size_t> cls, const NoiseSchedule& sched, Rng& rng,
                         const std::optional<Tensor>& eps_override) {
    if (t < 1 || t > sched.T || t_prev < 0 || t_prev >= t) {
        throw ScheduleError("ddim_step: invalid step pair");
    }
    DdimStepOutput out;
    out.eps_used = eps_override ? *eps_override : d.forward(z_t, t, cls);
    out.x0_hat = predict_terminal(z_t, out.eps_used, t, sched);

    const double ab_prev = sched.alpha_bar[t_prev];
    const double sg = sched.sigma(t, t_prev);
    const double dir_sq = 1.0 - ab_prev - sg * sg;
    if (dir_sq < -1e-12) {
        throw ScheduleError("ddim_step: sigma^2 exceeds 1 - alpha_bar_prev");
    }
    out.v_t = scale(out.eps_used, std::sqrt(std::max(0.0, dir_sq)));
    Tensor z_prev = add(scale(out.x0_hat, std::sqrt(ab_prev)), out.v_t);
    if (sg > 0.0) {
        const Tensor noise = Tensor::from(z_t.shape(), rng.normal_vec(z_t.size()));
        z_prev = add(z_prev, scale(noise, sg));
    }
    out.z_prev = std::move(z_prev);
    return out;
}

Tensor ddpm_step(const Denoiser& d, const Tensor& z_t, int t, std::optional<std::size_t> cls,
                 const NoiseSchedule& sched, Rng& rng, DdpmVariance var,
                 const std::optional<Tensor>& eps_override) {
    if (t < 1 || t > sched.T) throw ScheduleError("ddpm_step: t outside [1, T]");
    const Tensor eps = eps_override ? *eps_override : d.forward(z_t, t, cls);
    const double a = sched.alpha_step[t];
    const double ab = sched.alpha_bar[t];
    const double ab_prev = sched.alpha_bar[t - 1];
    // mean = (z_t - beta_t / sqrt(1-ab_t) * eps) / sqrt(alpha_t)
    Tensor mean = scale(sub(z_t, scale(eps, sched.beta[t] / std::sqrt(1.0 - ab))),
                        1.0 / std::sqrt(a));
    double var_t = sched.beta[t];
    if (var == DdpmVariance::Posterior) var_t *= (1.0 - ab_prev) / (1.0 - ab);
    if (t == 1) var_t = 0.0;  // final step is deterministic
    if (var_t > 0.0) {
        const Tensor noise = Tensor::from(z_t.shape(), rng.normal_vec(z_t.size()));
        mean = add(mean, scale(noise, std::sqrt(var_t)));
    }
    return mean;
}

Tensor ddpm_loss_fixed(const Denoiser& d, const Tensor& z0, const std::vector<int>& ts,
                       const Tensor& noise, const std::vector<std::optional<std::size_t>>& cls,
                       const NoiseSchedule& sched) {
    if (z0.rank() != 2) throw DimensionError("ddpm_loss_fixed: z0 must be [b, d_z]");
    const std::size_t b = z0.shape()[0], dz = z0.shape()[1];
    if (ts.size() != b || cls.size() != b || noise.shape() != z0.shape()) {
        throw DimensionError("ddpm_loss_fixed: per-example inputs disagree");
    }
    // z_t rows are constants w.r.t. the trained parameters.
    std::vector<double> zt(b * dz);
    const auto z0v = z0.values();
    const auto nv = noise.values();
    for (std::size_t i = 0; i < b; ++i) {
        const double ab = sched.alpha_bar[ts[i]];
        for (std::size_t j = 0; j < dz; ++j) {
            zt[i * dz + j] =
                std::sqrt(ab) * z0v[i * dz + j] + std::sqrt(1.0 - ab) * nv[i * dz + j];
        }
    }
    const Tensor z_t = Tensor::from({b, dz}, std::move(zt));
    const Tensor eps_hat = d.forward_batch(z_t, ts, cls);
    return mean_all(sum_lastdim(square(sub(eps_hat, noise))));
}

Tensor ddpm_train_step(const Denoiser& d, const Tensor& z0,
                       const std::vector<std::size_t>& labels, const NoiseSchedule& sched,
                       double p_uncond, Rng& rng) {
    const std::size_t b = z0.shape()[0];
    std::vector<int> ts(b);
    std::vector<std::optional<std::size_t>> cls(b);
    for (std::size_t i = 0; i < b; ++i) {
        ts[i] = static_cast<int>(rng.uniform_int(1, sched.T));
        cls[i] = (rng.uniform() < p_uncond) ? std::nullopt
                                            : std::optional<std::size_t>(labels[i]);
    }
    const Tensor noise = Tensor::from(z0.shape(), rng.normal_vec(z0.size()));
    return ddpm_loss_fixed(d, z0, ts, noise, cls, sched);
}

double train_denoiser_latents(Denoiser& d, const Tensor& z0_all,
                              const std::vector<std::size_t>& labels,
                              const NoiseSchedule& sched, const DiffusionTrainConfig& cfg,
                              std::uint64_t seed) {
    if (z0_all.rank() != 2 || z0_all.shape()[0] == 0) {
        throw ContractError("train_denoiser: empty latent set");
    }
    const std::size_t n = z0_all.shape()[0], dz = z0_all.shape()[1];

    OptimizerConfig ocfg;
    ocfg.kind = OptimizerKind::Adam;
    ocfg.lr = cfg.lr;
    ocfg.cosine_decay = true;
    ocfg.total_steps = cfg.steps;
    Optimizer opt(d.params(), ocfg);

    Rng rng(derive_seed(seed, "denoiser_train"));
    const auto zv = z0_all.values();

    double tail_loss = 0.0;
    std::size_t tail_n = 0;
    for (std::size_t step = 0; step < cfg.steps; ++step) {
        const std::size_t bsz = std::min(cfg.batch, n);
        std::vector<double> zb(bsz * dz);
        std::vector<std::size_t> yb(bsz);
        for (std::size_t i = 0; i < bsz; ++i) {
            const auto idx = static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(n) - 1));
            for (std::size_t j = 0; j < dz; ++j) zb[i * dz + j] = zv[idx * dz + j];
            yb[i] = labels[idx];
        }
        const Tensor z0 = Tensor::from({bsz, dz}, std::move(zb));

        Tape tape;
        TapeScope scope(tape);
        const Tensor loss = ddpm_train_step(d, z0, yb, sched, cfg.p_uncond, rng);
        tape.backward(loss);
        opt.step();
        opt.zero_grad();
        if (step + 100 >= cfg.steps) {
            tail_loss += loss.item();
            ++tail_n;
        }
    }
    return tail_loss / static_cast<double>(tail_n ? tail_n : 1);
}

double train_denoiser(DiffusionStack& stack, const std::vector<LabeledPoint>& data,
                      const DiffusionTrainConfig& cfg, std::uint64_t seed) {
    if (data.empty()) throw ContractError("train_denoiser: empty dataset");
    const Tensor z0_all = stack.encode(points_matrix(data)).detach();
    return train_denoiser_latents(stack.denoiser, z0_all, points_labels(data), stack.sched,
                                  cfg, seed);
}

std::vector<std::vector<double>> sample_latents(const Denoiser& d, const NoiseSchedule& sched,
                                                std::optional<std::size_t> cls, std::size_t n,
                                                std::uint64_t seed, const SamplerConfig& scfg,
                                                const GuidanceHook& hook,
                                                const StepTrace& trace) {
    const auto steps = ddim_timesteps(sched.T, scfg.num_steps, scfg.step_power);
    const std::size_t dz = d.config().d_z;
    std::vector<std::vector<double>> out(n);

    auto run_chain = [&](std::size_t chain) {
        Rng rng(chain_seed(seed, chain));
        Tensor z = Tensor::from({dz}, rng.normal_vec(dz));
        std::size_t step_index = 0;
        for (const auto& [t, t_prev] : steps) {
            Tensor eps;
            if (scfg.cfg_scale == 1.0) {
                eps = d.forward(z, t, cls);
            } else if (scfg.cfg_scale == 0.0 || !cls.has_value()) {
                eps = d.forward(z, t, std::nullopt);
            } else {
                eps = cfg_combine(d.forward(z, t, cls), d.forward(z, t, std::nullopt),
                                  scfg.cfg_scale);
            }
            if (hook) {
                const std::vector<double> zt(z.values().begin(), z.values().end());
                const std::vector<double> ev(eps.values().begin(), eps.values().end());
                eps = Tensor::from({dz}, hook(zt, t, t_prev, ev));
            }
            auto step_out = ddim_step(d, z, t, t_prev, cls, sched, rng, eps);
            if (trace) {
                trace(chain, step_index, t,
                      {z.values().begin(), z.values().end()},
                      {step_out.eps_used.values().begin(), step_out.eps_used.values().end()},
                      {step_out.x0_hat.values().begin(), step_out.x0_hat.values().end()});
            }
            z = std::move(step_out.z_prev);
            ++step_index;
        }
        out[chain] = {z.values().begin(), z.values().end()};
    };

    const int threads = std::max(1, scfg.threads);
    if (threads == 1 || n <= 1) {
        for (std::size_t i = 0; i < n; ++i) run_chain(i);
    } else {
        std::vector<std::thread> pool;
        std::size_t next = 0;
        const std::size_t stride =
            (n + static_cast<std::size_t>(threads) - 1) / static_cast<std::size_t>(threads);
        for (int w = 0; w < threads && next < n; ++w) {
            const std::size_t lo = next;
            const std::size_t hi = std::min(n, lo + stride);
            next = hi;
            pool.emplace_back([&, lo, hi]() {
                for (std::size_t i = lo; i < hi; ++i) run_chain(i);
            });
        }
        for (auto& th : pool) th.join();
    }
    return out;
}

}  // namespace ltf
