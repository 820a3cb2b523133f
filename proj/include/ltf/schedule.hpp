#pragma once

#include <vector>

namespace ltf {

// Discrete noise schedule. alpha_step is the per-step factor of the forward
// kernel; alpha_bar is its running product with alpha_bar[0] = 1. All sampler
// formulas are written in alpha_bar.
struct NoiseSchedule {
    int T = 0;
    std::vector<double> beta;        // [0..T], beta[0] unused
    std::vector<double> alpha_step;  // [0..T], 1 - beta
    std::vector<double> alpha_bar;   // [0..T]
    double eta = 0.0;                // DDIM stochasticity in [0, 1]

    static NoiseSchedule linear(int T, double beta_start, double beta_end, double eta = 0.0);

    // Cosine-shaped alpha_bar over the first T - tail_steps steps, then a
    // constant-beta geometric tail that lands exactly on alpha_bar_end. The
    // plain cosine form needs beta -> 1 to reach a near-zero endpoint, which
    // makes the last per-step amplifications explode; the tail keeps them
    // bounded while still giving z_T ~ N(0, I).
    static NoiseSchedule cosine_tail(int T, int tail_steps, double alpha_bar_end,
                                     double eta = 0.0);

    // DDIM sigma for a step from t down to t_prev; eta = 0 gives 0.
    double sigma(int t, int t_prev) const;
    double sigma(int t) const { return sigma(t, t - 1); }

    void validate() const;
};

// Descending (t, t_prev) pairs for an S-step DDIM subsequence over [1, T];
// the last pair ends at 0. power = 1 spaces the steps uniformly; power > 1
// visits the high-noise end sparsely and the formation end densely
// (t_j ~ T (j/S)^power), which buys more usable steps where the terminal
// estimates are informative.
std::vector<std::pair<int, int>> ddim_timesteps(int T, int S, double power = 1.0);

}  // namespace ltf
