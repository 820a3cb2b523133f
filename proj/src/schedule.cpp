#include "ltf/schedule.hpp"

#include <cmath>

#include "ltf/error.hpp"

namespace ltf {

NoiseSchedule NoiseSchedule::linear(int T, double beta_start, double beta_end, double eta) {
    if (T < 1) throw ScheduleError("schedule needs T >= 1");
    NoiseSchedule s;
    s.T = T;
    s.eta = eta;
    s.beta.assign(T + 1, 0.0);
    s.alpha_step.assign(T + 1, 1.0);
    s.alpha_bar.assign(T + 1, 1.0);
    for (int t = 1; t <= T; ++t) {
        const double frac = T == 1 ? 0.0 : static_cast<double>(t - 1) / (T - 1);
        s.beta[t] = beta_start + (beta_end - beta_start) * frac;
        s.alpha_step[t] = 1.0 - s.beta[t];
        s.alpha_bar[t] = s.alpha_bar[t - 1] * s.alpha_step[t];
    }
    s.validate();
    return s;
}

NoiseSchedule NoiseSchedule::cosine_tail(int T, int tail_steps, double alpha_bar_end,
                                         double eta) {
    if (T < 2 || tail_steps < 1 || tail_steps >= T) {
        throw ScheduleError("cosine_tail needs 1 <= tail_steps < T");
    }
    if (!(alpha_bar_end > 0.0 && alpha_bar_end < 1.0)) {
        throw ScheduleError("alpha_bar_end must lie in (0, 1)");
    }
    NoiseSchedule s;
    s.T = T;
    s.eta = eta;
    s.beta.assign(T + 1, 0.0);
    s.alpha_step.assign(T + 1, 1.0);
    s.alpha_bar.assign(T + 1, 1.0);

    const double offset = 0.008;
    auto f = [&](int t) {
        const double x = (static_cast<double>(t) / T + offset) / (1.0 + offset) *
                         1.5707963267948966;
        const double c = std::cos(x);
        return c * c;
    };
    const int head = T - tail_steps;
    for (int t = 1; t <= head; ++t) {
        double beta = 1.0 - f(t) / f(t - 1);
        beta = std::min(std::max(beta, 1e-9), 0.999);
        s.beta[t] = beta;
        s.alpha_step[t] = 1.0 - beta;
        s.alpha_bar[t] = s.alpha_bar[t - 1] * s.alpha_step[t];
    }
    const double ratio =
        std::pow(alpha_bar_end / s.alpha_bar[head], 1.0 / static_cast<double>(tail_steps));
    if (!(ratio > 0.0 && ratio < 1.0)) {
        throw ScheduleError("cosine_tail: endpoint not reachable from the cosine head");
    }
    for (int t = head + 1; t <= T; ++t) {
        s.beta[t] = 1.0 - ratio;
        s.alpha_step[t] = ratio;
        s.alpha_bar[t] = s.alpha_bar[t - 1] * ratio;
    }
    s.validate();
    return s;
}

double NoiseSchedule::sigma(int t, int t_prev) const {
    if (t < 1 || t > T || t_prev < 0 || t_prev >= t) {
        throw ScheduleError("sigma: invalid step pair");
    }
    if (eta == 0.0) return 0.0;
    const double ab_t = alpha_bar[t];
    const double ab_p = alpha_bar[t_prev];
    return eta * std::sqrt((1.0 - ab_p) / (1.0 - ab_t)) * std::sqrt(1.0 - ab_t / ab_p);
}

void NoiseSchedule::validate() const {
    if (eta < 0.0 || eta > 1.0) throw ScheduleError("eta must lie in [0, 1]");
    if (alpha_bar.empty() || alpha_bar[0] != 1.0) {
        throw ScheduleError("alpha_bar[0] must be 1");
    }
    for (int t = 1; t <= T; ++t) {
        if (!(beta[t] > 0.0 && beta[t] < 1.0)) {
            throw ScheduleError("beta out of (0, 1) at t=" + std::to_string(t));
        }
        if (!(alpha_bar[t] < alpha_bar[t - 1])) {
            throw ScheduleError("alpha_bar must be strictly decreasing");
        }
    }
}

std::vector<std::pair<int, int>> ddim_timesteps(int T, int S, double power) {
    if (S < 1 || S > T) throw ScheduleError("subsequence length must lie in [1, T]");
    if (!(power >= 1.0)) throw ScheduleError("step spacing power must be >= 1");
    std::vector<int> ts;
    for (int j = S; j >= 1; --j) {
        const int t = std::max<int>(
            1, static_cast<int>(std::llround(
                   static_cast<double>(T) *
                   std::pow(static_cast<double>(j) / S, power))));
        if (ts.empty() || ts.back() != t) ts.push_back(t);
    }
    std::vector<std::pair<int, int>> pairs;
    for (std::size_t i = 0; i < ts.size(); ++i) {
        const int t_prev = (i + 1 < ts.size()) ? ts[i + 1] : 0;
        pairs.emplace_back(ts[i], t_prev);
    }
    return pairs;
}

}  // namespace ltf
