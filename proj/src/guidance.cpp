#include "ltf/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "ltf/csv.hpp"
#include "ltf/error.hpp"

namespace ltf {

using nlohmann::json;

const char* guidance_mode_name(GuidanceMode m) {
    switch (m) {
        case GuidanceMode::TerminalState: return "terminal_state";
        case GuidanceMode::NaiveState: return "naive_state";
        case GuidanceMode::None: return "none";
    }
    return "?";
}

GuidanceMode guidance_mode_from_name(const std::string& s) {
    if (s == "terminal_state") return GuidanceMode::TerminalState;
    if (s == "naive_state") return GuidanceMode::NaiveState;
    if (s == "none") return GuidanceMode::None;
    throw ContractError("unknown guidance mode '" + s + "'");
}

namespace {
void check_ctx(const GuidanceContext& ctx) {
    if (ctx.model == nullptr || ctx.stack == nullptr) {
        throw ContractError("guidance context lacks model or stack");
    }
    if (ctx.stack->latent_stats.mean.empty()) {
        throw ContractError("diffusion stack has no fitted latent stats");
    }
}
}  // namespace

GuidanceEval ltg_gradient(const GuidanceContext& ctx, const std::vector<double>& z_t, int t,
                          const std::vector<double>& eps_raw) {
    check_ctx(ctx);
    const auto& gcfg = ctx.gcfg;
    const auto& stack = *ctx.stack;

    Tape tape;
    TapeScope scope(tape);
    Tensor z = Tensor::from({z_t.size()}, std::vector<double>(z_t), /*requires_grad=*/true);

    Tensor x;
    if (gcfg.mode == GuidanceMode::NaiveState) {
        x = stack.decode(z);
    } else {
        Tensor eps;
        if (!gcfg.through_denoiser) {
            eps = Tensor::from({eps_raw.size()}, std::vector<double>(eps_raw));
        } else if (gcfg.cfg_scale == 1.0 || !ctx.cls.has_value()) {
            eps = stack.denoiser.forward(z, t, ctx.cls);
        } else if (gcfg.cfg_scale == 0.0) {
            eps = stack.denoiser.forward(z, t, std::nullopt);
        } else {
            eps = cfg_combine(stack.denoiser.forward(z, t, ctx.cls),
                              stack.denoiser.forward(z, t, std::nullopt), gcfg.cfg_scale);
        }
        x = stack.decode(predict_terminal(z, eps, t, stack.sched));
    }
    const Tensor s = signal(*ctx.model, x, gcfg.signal);
    tape.backward(s);

    GuidanceEval out;
    out.signal_val = s.item();
    const auto g = z.grad();
    out.grad.assign(g.begin(), g.end());
    for (double v : out.grad) {
        if (!std::isfinite(v)) {
            throw GuidanceError("non-finite guidance gradient at step t=" + std::to_string(t));
        }
    }
    return out;
}

double guidance_sigma_factor(const GuidanceConfig& gcfg, const NoiseSchedule& sched, int t,
                             int t_prev) {
    if (gcfg.sigma_mode == SigmaMode::LiteralSigma) return sched.sigma(t, t_prev);
    return std::sqrt(1.0 - sched.alpha_bar[t]);
}

std::vector<double> ltg_bias(const GuidanceContext& ctx, const std::vector<double>& z_t,
                             int t, int t_prev, const std::vector<double>& eps_raw) {
    const auto& gcfg = ctx.gcfg;
    if (gcfg.mode == GuidanceMode::None || gcfg.w == 0.0) return eps_raw;
    const double sf = guidance_sigma_factor(gcfg, ctx.stack->sched, t, t_prev);
    if (sf == 0.0) return eps_raw;

    const GuidanceEval ev = ltg_gradient(ctx, z_t, t, eps_raw);
    const double w_eff = gcfg.w * gcfg.weight_scale;
    std::vector<double> out(eps_raw);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] -= w_eff * ev.grad[i] * sf;
    return out;
}

GuidanceHook make_guidance_hook(const GuidanceContext& ctx) {
    if (ctx.gcfg.mode == GuidanceMode::None) return nullptr;
    return [ctx](const std::vector<double>& z, int t, int t_prev,
                 const std::vector<double>& eps) {
        return ltg_bias(ctx, z, t, t_prev, eps);
    };
}

GenerationBatchReport generate_ltg(const ClassifierModel& m, const DiffusionStack& stack,
                                   const GuidanceConfig& gcfg, std::optional<std::size_t> cls,
                                   std::size_t n, std::uint64_t seed, const SamplerConfig& scfg,
                                   std::vector<std::vector<double>>* latents_out) {
    GuidanceContext ctx{&m, &stack, cls, gcfg};
    check_ctx(ctx);
    const std::uint64_t before = m.checksum();

    SamplerConfig s = scfg;
    s.cfg_scale = gcfg.cfg_scale;
    const auto latents =
        sample_latents(stack.denoiser, stack.sched, cls, n, seed, s, make_guidance_hook(ctx));
    if (latents_out) *latents_out = latents;

    GenerationBatchReport rep;
    rep.expected_class = cls;
    rep.kind = gcfg.signal.kind;
    rep.w = gcfg.w;
    double sum_p = 0.0, sum_sig = 0.0;
    std::size_t hits = 0;
    for (const auto& zv : latents) {
        const Tensor z = Tensor::from({zv.size()}, std::vector<double>(zv));
        const Tensor x = stack.decode(z);
        GenerationRow row;
        row.x.assign(x.values().begin(), x.values().end());

        const Tensor logits = m.base_logits_of(x);
        const Tensor probs = softmax(logits);
        const auto pv = probs.values();
        std::size_t argmax = 0;
        for (std::size_t j = 1; j < pv.size(); ++j) {
            if (pv[j] > pv[argmax]) argmax = j;
        }
        row.predicted = argmax;
        row.p_expected = cls ? pv[*cls] : pv[argmax];
        row.signal_value = signal_value(m, row.x, gcfg.signal);

        sum_p += row.p_expected;
        sum_sig += row.signal_value;
        if (cls && argmax == *cls) ++hits;
        rep.rows.push_back(std::move(row));
    }
    if (!rep.rows.empty()) {
        rep.mean_p = sum_p / static_cast<double>(rep.rows.size());
        rep.mean_signal = sum_sig / static_cast<double>(rep.rows.size());
        rep.accuracy = cls ? static_cast<double>(hits) / static_cast<double>(rep.rows.size())
                           : 0.0;
    }
    if (m.checksum() != before) {
        throw GuidanceError("model parameters changed during generation");
    }
    return rep;
}

void save_generation_report(const GenerationBatchReport& r, const std::string& csv_path) {
    const std::size_t d = r.rows.empty() ? 0 : r.rows[0].x.size();
    CsvWriter w(csv_path);
    std::vector<std::string> header;
    for (std::size_t i = 0; i < d; ++i) header.push_back("feature_" + std::to_string(i));
    header.insert(header.end(), {"expected_class", "predicted_class", "p_expected",
                                 "signal_kind", "signal_value"});
    w.row(header);
    for (const auto& row : r.rows) {
        std::vector<std::string> cells;
        for (double v : row.x) cells.push_back(fmt_double(v));
        cells.push_back(r.expected_class ? std::to_string(*r.expected_class) : "-1");
        cells.push_back(std::to_string(row.predicted));
        cells.push_back(fmt_double(row.p_expected));
        cells.push_back(signal_name(r.kind));
        cells.push_back(fmt_double(row.signal_value));
        w.row(cells);
    }
    w.close();
}

WeightSelection select_guidance_weight(const ClassifierModel& m, const DiffusionStack& stack,
                                       const GuidanceConfig& gcfg,
                                       const std::vector<std::size_t>& classes,
                                       std::size_t n_per_cell, std::uint64_t seed,
                                       const SamplerConfig& scfg) {
    if (classes.empty()) throw ContractError("select_guidance_weight: empty class set");

    std::vector<double> ws{0.0};
    for (double w : gcfg.grid) {
        if (w > 0.0) ws.push_back(w);
    }
    std::sort(ws.begin(), ws.end());
    ws.erase(std::unique(ws.begin(), ws.end()), ws.end());

    // Common random numbers across cells: the seed depends on the class only,
    // so weight comparisons are paired.
    std::vector<WeightCell> cells;
    for (double w : ws) {
        GuidanceConfig g = gcfg;
        g.w = w;
        if (w == 0.0) g.mode = GuidanceMode::None;
        WeightCell cell;
        cell.w = w;
        for (const auto c : classes) {
            const auto rep = generate_ltg(
                m, stack, g, c, n_per_cell,
                derive_seed(seed, "selectw_class_" + std::to_string(c)), scfg);
            cell.mean_p += rep.mean_p;
            cell.accuracy += rep.accuracy;
            cell.mean_signal += rep.mean_signal;
        }
        cell.mean_p /= static_cast<double>(classes.size());
        cell.accuracy /= static_cast<double>(classes.size());
        cell.mean_signal /= static_cast<double>(classes.size());
        cells.push_back(cell);
    }

    const WeightCell base = cells.front();  // w = 0
    WeightSelection sel;
    sel.evidence = cells;
    std::vector<std::string> violations;
    bool found = false;
    for (auto it = cells.rbegin(); it != cells.rend(); ++it) {
        if (it->w == 0.0) continue;
        std::vector<std::string> local;
        if (!(it->mean_p < base.mean_p)) {
            local.push_back("w=" + fmt_double(it->w) + ": mean P(class) not below unguided");
        }
        if (!(it->mean_p > gcfg.floor_ratio * base.mean_p)) {
            local.push_back("w=" + fmt_double(it->w) + ": mean P(class) under the floor " +
                            fmt_double(gcfg.floor_ratio) + " * unguided");
        }
        if (!(it->mean_signal > base.mean_signal)) {
            local.push_back("w=" + fmt_double(it->w) + ": mean signal not above unguided");
        }
        if (local.empty()) {
            sel.chosen_w = it->w;
            found = true;
            break;
        }
        violations.insert(violations.end(), local.begin(), local.end());
    }
    if (!found) {
        if (cells.size() <= 1) violations.push_back("candidate grid has no positive weight");
        throw SelectionError(violations);
    }
    return sel;
}

void save_weight_selection(const WeightSelection& s, const std::string& json_path) {
    json j;
    j["chosen_w"] = s.chosen_w;
    json cells = json::array();
    for (const auto& c : s.evidence) {
        cells.push_back({{"w", c.w},
                         {"mean_p_class", c.mean_p},
                         {"accuracy", c.accuracy},
                         {"mean_signal", c.mean_signal}});
    }
    j["cells"] = cells;
    std::ofstream os(json_path);
    if (!os) throw IoError("cannot open for write: " + json_path);
    os << j.dump(2) << "\n";
}

void export_for_introspection(const GenerationBatchReport& r, const std::string& dir) {
    std::filesystem::create_directories(dir);
    save_generation_report(r, dir + "/samples.csv");
    json j;
    j["expected_class"] = r.expected_class ? json(*r.expected_class) : json(nullptr);
    j["signal_kind"] = signal_name(r.kind);
    j["w"] = r.w;
    j["n"] = r.rows.size();
    j["mean_p_class"] = r.mean_p;
    j["accuracy"] = r.accuracy;
    j["mean_signal"] = r.mean_signal;
    std::ofstream os(dir + "/provenance.json");
    if (!os) throw IoError("cannot open for write: " + dir + "/provenance.json");
    os << j.dump(2) << "\n";
}

TrajectoryCapture capture_trajectories(const ClassifierModel& m, const DiffusionStack& stack,
                                       const GuidanceConfig& gcfg,
                                       std::optional<std::size_t> cls, std::size_t n,
                                       std::uint64_t seed, const SamplerConfig& scfg) {
    GuidanceContext ctx{&m, &stack, cls, gcfg};
    check_ctx(ctx);
    const auto steps = ddim_timesteps(stack.sched.T, scfg.num_steps, scfg.step_power);
    TrajectoryCapture cap;
    cap.ts.reserve(steps.size());
    for (const auto& [t, _] : steps) cap.ts.push_back(t);
    cap.terminal_x.assign(steps.size(), std::vector<std::vector<double>>(n));
    cap.noisy_x.assign(steps.size(), std::vector<std::vector<double>>(n));
    cap.signal_terminal.assign(steps.size(), std::vector<double>(n, 0.0));
    cap.signal_noisy.assign(steps.size(), std::vector<double>(n, 0.0));
    cap.eps_norm.assign(steps.size(), std::vector<double>(n, 0.0));
    cap.x0_norm.assign(steps.size(), std::vector<double>(n, 0.0));

    auto decode_values = [&](const std::vector<double>& z) {
        const Tensor x =
            stack.decode(Tensor::from({z.size()}, std::vector<double>(z)));
        return std::vector<double>(x.values().begin(), x.values().end());
    };
    auto norm_of = [](const std::vector<double>& v) {
        double s = 0.0;
        for (double x : v) s += x * x;
        return std::sqrt(s);
    };

    // The recorded terminal state is the chain's own raw-eps forecast: what
    // the run would produce from z_t without the current step's bias. A
    // guided step's instantaneous shove shows up here only if the denoising
    // dynamics retain it.
    StepTrace trace = [&](std::size_t chain, std::size_t step, int t,
                          const std::vector<double>& z_t, const std::vector<double>& eps,
                          const std::vector<double>& /*x0_hat*/) {
        const Tensor z = Tensor::from({z_t.size()}, std::vector<double>(z_t));
        Tensor eps_raw;
        if (gcfg.cfg_scale == 1.0 || !cls.has_value()) {
            eps_raw = stack.denoiser.forward(z, t, cls);
        } else if (gcfg.cfg_scale == 0.0) {
            eps_raw = stack.denoiser.forward(z, t, std::nullopt);
        } else {
            eps_raw = cfg_combine(stack.denoiser.forward(z, t, cls),
                                  stack.denoiser.forward(z, t, std::nullopt), gcfg.cfg_scale);
        }
        const Tensor x0_raw = predict_terminal(z, eps_raw, t, stack.sched);
        const std::vector<double> x0v(x0_raw.values().begin(), x0_raw.values().end());
        auto xt = decode_values(x0v);
        auto xn = decode_values(z_t);
        cap.signal_terminal[step][chain] = signal_value(m, xt, gcfg.signal);
        cap.signal_noisy[step][chain] = signal_value(m, xn, gcfg.signal);
        cap.eps_norm[step][chain] = norm_of(eps);
        cap.x0_norm[step][chain] = norm_of(x0v);
        cap.terminal_x[step][chain] = std::move(xt);
        cap.noisy_x[step][chain] = std::move(xn);
    };

    SamplerConfig s = scfg;
    s.cfg_scale = gcfg.cfg_scale;
    s.threads = 1;  // trace writes are per-(step, chain) but keep it simple
    const auto latents = sample_latents(stack.denoiser, stack.sched, cls, n, seed, s,
                                        make_guidance_hook(ctx), trace);
    for (const auto& z : latents) cap.final_x.push_back(decode_values(z));
    return cap;
}

std::vector<TrajectoryFidRow> trajectory_fid_curve(const TrajectoryCapture& cap,
                                                   const std::vector<LabeledPoint>& real) {
    std::vector<std::vector<double>> real_pts;
    real_pts.reserve(real.size());
    for (const auto& p : real) real_pts.push_back(p.features);
    const FrechetStats real_stats = frechet_stats(real_pts);

    std::vector<TrajectoryFidRow> rows;
    for (std::size_t s = 0; s < cap.ts.size(); ++s) {
        TrajectoryFidRow row;
        row.t = cap.ts[s];
        row.fd_terminal = frechet_distance(frechet_stats(cap.terminal_x[s]), real_stats);
        row.fd_noisy = frechet_distance(frechet_stats(cap.noisy_x[s]), real_stats);
        rows.push_back(row);
    }
    TrajectoryFidRow last;
    last.t = 0;
    last.fd_terminal = frechet_distance(frechet_stats(cap.final_x), real_stats);
    last.fd_noisy = last.fd_terminal;  // z_0 is terminal
    rows.push_back(last);
    return rows;
}

double separation_step_fraction(const std::vector<double>& unguided_curve,
                                const std::vector<std::vector<double>>& guided_curves) {
    if (guided_curves.empty() || unguided_curve.empty()) {
        throw ContractError("separation analysis needs an unguided and guided curve");
    }
    const std::size_t steps = unguided_curve.size();
    for (const auto& c : guided_curves) {
        if (c.size() != steps) throw DimensionError("separation curves must share length");
    }
    std::vector<double> lift(steps, 0.0);
    for (std::size_t s = 0; s < steps; ++s) {
        for (const auto& c : guided_curves) lift[s] += c[s] - unguided_curve[s];
        lift[s] /= static_cast<double>(guided_curves.size());
    }
    const double final_lift = lift.back();
    if (final_lift <= 1e-9) return 1.0;
    const double thr = 0.25 * final_lift;
    std::size_t first = steps;
    for (std::size_t s = steps; s-- > 0;) {
        if (lift[s] >= thr) {
            first = s;
        } else {
            break;
        }
    }
    if (first == steps) return 1.0;
    return static_cast<double>(first) / static_cast<double>(steps);
}

GenerationBatchReport load_introspection_bundle(const std::string& dir) {
    std::ifstream is(dir + "/provenance.json");
    if (!is) throw IoError("cannot open for read: " + dir + "/provenance.json");
    json j;
    is >> j;
    GenerationBatchReport r;
    if (!j.at("expected_class").is_null()) {
        r.expected_class = j.at("expected_class").get<std::size_t>();
    }
    r.kind = signal_from_name(j.at("signal_kind").get<std::string>());
    r.w = j.at("w").get<double>();
    r.mean_p = j.at("mean_p_class").get<double>();
    r.accuracy = j.at("accuracy").get<double>();
    r.mean_signal = j.at("mean_signal").get<double>();

    const CsvFile csv = read_csv(dir + "/samples.csv");
    const std::size_t d = csv.header.size() - 5;
    for (std::size_t i = 0; i < csv.rows.size(); ++i) {
        const auto& row = csv.rows[i];
        const std::size_t line = csv.row_lines[i];
        GenerationRow gr;
        for (std::size_t k = 0; k < d; ++k) gr.x.push_back(parse_double(row[k], line));
        gr.predicted = static_cast<std::size_t>(parse_long(row[d + 1], line));
        gr.p_expected = parse_double(row[d + 2], line);
        gr.signal_value = parse_double(row[d + 4], line);
        r.rows.push_back(std::move(gr));
    }
    return r;
}

}  // namespace ltf
