#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ltf/classifier.hpp"
#include "ltf/diffusion.hpp"
#include "ltf/metrics.hpp"
#include "ltf/signals.hpp"

namespace ltf {

enum class GuidanceMode { TerminalState, NaiveState, None };
const char* guidance_mode_name(GuidanceMode m);
GuidanceMode guidance_mode_from_name(const std::string& s);

// Scale factor multiplying the signal gradient in the denoising bias. The
// schedule sigma_t is zero under eta = 0 DDIM, which would silence guidance
// entirely, so sqrt(1 - alpha_bar_t) is the default; the literal sigma_t is
// available for comparison.
enum class SigmaMode { SqrtOneMinusAlphaBar, LiteralSigma };

struct GuidanceConfig {
    GuidanceMode mode = GuidanceMode::TerminalState;
    double w = 0.0;  // grid units; effective weight is w * weight_scale
    double weight_scale = 1.0;
    SignalConfig signal;
    double cfg_scale = 1.0;
    SigmaMode sigma_mode = SigmaMode::SqrtOneMinusAlphaBar;
    bool through_denoiser = true;  // exact gradient through eps_theta
    std::vector<double> grid = {1.0, 10.0, 50.0, 200.0};
    double floor_ratio = 1.0 / 3.0;  // in-distribution floor vs unguided P(class)
};

struct GuidanceContext {
    const ClassifierModel* model = nullptr;
    const DiffusionStack* stack = nullptr;
    std::optional<std::size_t> cls;
    GuidanceConfig gcfg;
};

struct GuidanceEval {
    std::vector<double> grad;  // d signal / d z_t
    double signal_val = 0.0;
};

// Gradient of the guided scalar w.r.t. the latent z_t:
//   terminal: signal(decode(predict_terminal(z_t, eps(z_t), t)))
//   naive:    signal(decode(z_t))
// eps_raw is used as a constant when through_denoiser is false.
GuidanceEval ltg_gradient(const GuidanceContext& ctx, const std::vector<double>& z_t, int t,
                          const std::vector<double>& eps_raw);

// eps_raw - w_eff * grad * sigma_factor(t). w = 0 returns eps_raw unchanged.
std::vector<double> ltg_bias(const GuidanceContext& ctx, const std::vector<double>& z_t,
                             int t, int t_prev, const std::vector<double>& eps_raw);

double guidance_sigma_factor(const GuidanceConfig& gcfg, const NoiseSchedule& sched, int t,
                             int t_prev);

// Hook for sample_latents; nullptr when mode is None.
GuidanceHook make_guidance_hook(const GuidanceContext& ctx);

struct GenerationRow {
    std::vector<double> x;
    std::size_t predicted = 0;
    double p_expected = 0.0;
    double signal_value = 0.0;
};

struct GenerationBatchReport {
    std::optional<std::size_t> expected_class;
    SignalKind kind = SignalKind::Epistemic;
    double w = 0.0;
    std::vector<GenerationRow> rows;
    double mean_p = 0.0;
    double accuracy = 0.0;
    double mean_signal = 0.0;
};

// Full guided generation: sampling loop with the guidance hook, decode, then
// evaluation of every sample under the frozen model.
GenerationBatchReport generate_ltg(const ClassifierModel& m, const DiffusionStack& stack,
                                   const GuidanceConfig& gcfg, std::optional<std::size_t> cls,
                                   std::size_t n, std::uint64_t seed, const SamplerConfig& scfg,
                                   std::vector<std::vector<double>>* latents_out = nullptr);

void save_generation_report(const GenerationBatchReport& r, const std::string& csv_path);

struct WeightSelection {
    double chosen_w = 0.0;
    std::vector<WeightCell> evidence;  // includes the w = 0 baseline
};

// The in-distribution weight rule: largest grid w whose generations have
// (a) mean P(class) below unguided, (b) above floor_ratio * unguided, and
// (c) mean signal above unguided. SelectionError lists every violation.
WeightSelection select_guidance_weight(const ClassifierModel& m, const DiffusionStack& stack,
                                       const GuidanceConfig& gcfg,
                                       const std::vector<std::size_t>& classes,
                                       std::size_t n_per_cell, std::uint64_t seed,
                                       const SamplerConfig& scfg);

void save_weight_selection(const WeightSelection& s, const std::string& json_path);

// Decoded samples + provenance as a CSV/JSON bundle for external analysis.
void export_for_introspection(const GenerationBatchReport& r, const std::string& dir);
GenerationBatchReport load_introspection_bundle(const std::string& dir);

// ---- trajectory analyses -------------------------------------------------------

// Per-step observation of a guided run: the decoded predicted-terminal state
// D(P(z_t)) and the decoded noisy state D(z_t) across chains, with the
// configured signal evaluated on both.
struct TrajectoryCapture {
    std::vector<int> ts;  // step times, descending
    std::vector<std::vector<std::vector<double>>> terminal_x;  // [step][chain]
    std::vector<std::vector<std::vector<double>>> noisy_x;     // [step][chain]
    std::vector<std::vector<double>> signal_terminal;          // [step][chain]
    std::vector<std::vector<double>> signal_noisy;             // [step][chain]
    std::vector<std::vector<double>> eps_norm;                 // [step][chain]
    std::vector<std::vector<double>> x0_norm;                  // [step][chain], latent
    std::vector<std::vector<double>> final_x;                  // [chain]
};

TrajectoryCapture capture_trajectories(const ClassifierModel& m, const DiffusionStack& stack,
                                       const GuidanceConfig& gcfg,
                                       std::optional<std::size_t> cls, std::size_t n,
                                       std::uint64_t seed, const SamplerConfig& scfg);

// Per-step Frechet distance of both decoded state families against real data;
// a final t = 0 row carries the identical decoded z_0 in both columns.
std::vector<TrajectoryFidRow> trajectory_fid_curve(const TrajectoryCapture& cap,
                                                   const std::vector<LabeledPoint>& real);

// First step (as a fraction of the chain) from which the guided trajectories'
// mean lift over the unguided curve stays at or above a quarter of its final
// value; 1.0 when no final lift exists. Curves are seed-averaged per-step
// means of the terminal-forecast signal, one per weight.
double separation_step_fraction(const std::vector<double>& unguided_curve,
                                const std::vector<std::vector<double>>& guided_curves);

}  // namespace ltf
