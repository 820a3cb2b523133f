#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <json.hpp>

#include "ltf/benchmark.hpp"
#include "ltf/checkpoint.hpp"
#include "ltf/config.hpp"
#include "ltf/csv.hpp"
#include "ltf/error.hpp"
#include "ltf/log.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace ltf;

namespace {

struct CliState {
    std::string config_path;
    std::optional<std::uint64_t> seed_override;
    std::string out_override;
    std::optional<int> threads_override;
    RunConfig cfg;
};

void finalize_config(CliState& st) {
    st.cfg = st.config_path.empty() ? default_run_config() : load_run_config(st.config_path);
    if (st.seed_override) st.cfg.seed = *st.seed_override;
    if (!st.out_override.empty()) st.cfg.out = st.out_override;
    if (st.threads_override) st.cfg.threads = *st.threads_override;
}

Benchmark load_data(const RunConfig& cfg) {
    if (cfg.dataset.kind == "files") {
        Benchmark b;
        b.train = load_dataset(cfg.dataset.train_csv, cfg.dataset.train_sidecar);
        b.val = load_dataset(cfg.dataset.val_csv, cfg.dataset.val_sidecar);
        // Evaluation buckets by training regime.
        b.val.split_of_class = b.train.split_of_class;
        return b;
    }
    return make_default_benchmark(cfg.seed, cfg.dataset.val_per_class);
}

void write_manifest(const RunConfig& cfg, const std::string& command,
                    const std::vector<std::string>& outputs) {
    json j;
    j["command"] = command;
    j["seed"] = cfg.seed;
    j["outputs"] = outputs;
    j["config"] = json::parse(run_config_json(cfg));
    std::ofstream os(cfg.out + "/manifest.json");
    if (!os) throw IoError("cannot write manifest under " + cfg.out);
    os << j.dump(2) << "\n";
}

std::vector<std::size_t> class_set(const RunConfig& cfg, std::size_t C) {
    if (!cfg.select_weight.classes.empty()) return cfg.select_weight.classes;
    std::vector<std::size_t> all(C);
    for (std::size_t c = 0; c < C; ++c) all[c] = c;
    return all;
}

int cmd_gen_data(const CliState& st) {
    const auto& cfg = st.cfg;
    fs::create_directories(cfg.out);
    const Benchmark b = load_data(cfg);
    save_dataset(b.train, cfg.out + "/train.csv", cfg.out + "/train.json");
    save_dataset(b.val, cfg.out + "/val.csv", cfg.out + "/val.json");
    write_manifest(cfg, "gen-data", {"train.csv", "train.json", "val.csv", "val.json"});
    log_info("wrote dataset with " + std::to_string(b.train.size()) + " train / " +
             std::to_string(b.val.size()) + " val points");
    return 0;
}

int cmd_train_classifier(const CliState& st) {
    const auto& cfg = st.cfg;
    fs::create_directories(cfg.out);
    const Benchmark b = load_data(cfg);
    ClassifierConfig mc;
    mc.d_x = b.train.dim();
    mc.d_model = cfg.d_model;
    mc.layers = cfg.trunk_layers;
    mc.C = b.train.num_classes();
    mc.K = cfg.heads;
    ClassifierModel model(mc, cfg.seed);
    const auto stats = train_classifier(model, b.train, cfg.classifier_training, cfg.seed);
    save_classifier(cfg.out + "/classifier.ckpt", model);

    CsvWriter w(cfg.out + "/train_metrics.csv");
    w.row({"epoch", "loss"});
    for (std::size_t e = 0; e < stats.epoch_loss.size(); ++e) {
        w.row({std::to_string(e), fmt_double(stats.epoch_loss[e])});
    }
    w.close();
    save_eval_report(accuracy_by_split(model, b.val), cfg.out + "/eval.csv");
    write_manifest(cfg, "train-classifier",
                   {"classifier.ckpt", "train_metrics.csv", "eval.csv"});
    return 0;
}

int cmd_train_diffusion(const CliState& st) {
    const auto& cfg = st.cfg;
    fs::create_directories(cfg.out);
    const Benchmark b = load_data(cfg);
    DiffusionStack stack;
    AutoencoderConfig ac = cfg.autoencoder;
    ac.d_x = b.train.dim();
    stack.ae = Autoencoder(ac, derive_seed(cfg.seed, "stack_ae"));
    train_autoencoder(stack.ae, b.train.points, cfg.autoencoder_training,
                      derive_seed(cfg.seed, "stack_ae_train"));
    stack.latent_stats = fit_latent_stats(stack.ae, b.train.points);
    stack.sched = NoiseSchedule::linear(cfg.schedule.T, cfg.schedule.beta_start,
                                        cfg.schedule.beta_end, cfg.schedule.eta);
    DenoiserConfig dc = cfg.denoiser;
    dc.d_z = ac.d_z;
    dc.C = b.train.num_classes();
    dc.T = cfg.schedule.T;
    stack.denoiser = Denoiser(dc, derive_seed(cfg.seed, "stack_denoiser"));
    const double loss = train_denoiser(stack, b.train.points, cfg.diffusion_training,
                                       derive_seed(cfg.seed, "stack_denoiser_train"));
    save_stack(cfg.out + "/stack.ckpt", stack);
    write_manifest(cfg, "train-diffusion", {"stack.ckpt"});
    log_info("final denoising loss " + fmt_double(loss));
    return 0;
}

struct GenerateArgs {
    std::string classifier, stack;
    std::optional<double> w;
    std::string signal, mode;
    std::optional<std::size_t> n;
    std::optional<long> cls;
};

void apply_overrides(RunConfig& cfg, const GenerateArgs& a) {
    if (a.w) cfg.guidance.w = *a.w;
    if (!a.signal.empty()) {
        cfg.signal.kind = signal_from_name(a.signal);
        cfg.guidance.signal = cfg.signal;
    }
    if (!a.mode.empty()) cfg.guidance.mode = guidance_mode_from_name(a.mode);
    if (a.n) cfg.generate.n = *a.n;
    if (a.cls) cfg.generate.cls = *a.cls;
}

int cmd_generate(CliState& st, const GenerateArgs& args) {
    auto& cfg = st.cfg;
    apply_overrides(cfg, args);
    fs::create_directories(cfg.out);
    const ClassifierModel model = load_classifier(args.classifier);
    const DiffusionStack stack = load_stack(args.stack);

    SamplerConfig scfg;
    scfg.num_steps = cfg.schedule.sample_steps;
    scfg.cfg_scale = cfg.guidance.cfg_scale;
    scfg.threads = cfg.threads;

    std::vector<long> classes;
    if (cfg.generate.cls < 0) {
        for (std::size_t c = 0; c < model.config().C; ++c) classes.push_back(static_cast<long>(c));
    } else {
        classes.push_back(cfg.generate.cls);
    }

    const std::size_t d = stack.ae.config().d_x;
    CsvWriter w(cfg.out + "/samples.csv");
    std::vector<std::string> header;
    for (std::size_t i = 0; i < d; ++i) header.push_back("feature_" + std::to_string(i));
    header.insert(header.end(), {"expected_class", "predicted_class", "p_expected",
                                 "signal_kind", "signal_value"});
    w.row(header);

    json aggregates = json::array();
    for (const long cls : classes) {
        const auto rep = generate_ltg(model, stack, cfg.guidance,
                                      static_cast<std::size_t>(cls), cfg.generate.n,
                                      derive_seed(cfg.seed, "generate_class_" +
                                                                std::to_string(cls)),
                                      scfg);
        for (const auto& row : rep.rows) {
            std::vector<std::string> cells;
            for (double v : row.x) cells.push_back(fmt_double(v));
            cells.push_back(std::to_string(cls));
            cells.push_back(std::to_string(row.predicted));
            cells.push_back(fmt_double(row.p_expected));
            cells.push_back(signal_name(rep.kind));
            cells.push_back(fmt_double(row.signal_value));
            w.row(cells);
        }
        aggregates.push_back({{"class", cls},
                              {"mean_p_class", rep.mean_p},
                              {"accuracy", rep.accuracy},
                              {"mean_signal", rep.mean_signal}});
    }
    w.close();
    std::ofstream os(cfg.out + "/report.json");
    os << json{{"w", cfg.guidance.w},
               {"mode", guidance_mode_name(cfg.guidance.mode)},
               {"signal", signal_name(cfg.guidance.signal.kind)},
               {"per_class", aggregates}}
              .dump(2)
       << "\n";
    write_manifest(cfg, "generate", {"samples.csv", "report.json"});
    return 0;
}

int cmd_select_weight(CliState& st, const GenerateArgs& args) {
    auto& cfg = st.cfg;
    apply_overrides(cfg, args);
    fs::create_directories(cfg.out);
    const ClassifierModel model = load_classifier(args.classifier);
    const DiffusionStack stack = load_stack(args.stack);
    SamplerConfig scfg;
    scfg.num_steps = cfg.schedule.sample_steps;
    scfg.cfg_scale = cfg.guidance.cfg_scale;
    scfg.threads = cfg.threads;
    const auto sel = select_guidance_weight(model, stack, cfg.guidance,
                                            class_set(cfg, model.config().C),
                                            cfg.select_weight.n_per_cell,
                                            derive_seed(cfg.seed, "select_weight"), scfg);
    save_weight_selection(sel, cfg.out + "/evidence.json");
    write_manifest(cfg, "select-weight", {"evidence.json"});
    log_info("chosen guidance weight " + fmt_double(sel.chosen_w));
    return 0;
}

int cmd_mine(CliState& st, const GenerateArgs& args) {
    auto& cfg = st.cfg;
    apply_overrides(cfg, args);
    fs::create_directories(cfg.out);
    const Benchmark b = load_data(cfg);
    ClassifierModel model = load_classifier(args.classifier);
    const DiffusionStack stack = load_stack(args.stack);

    MiningConfig mc;
    mc.schedule = cfg.mining_schedule;
    mc.gcfg = cfg.guidance;
    mc.scfg.num_steps = cfg.schedule.sample_steps;
    mc.scfg.cfg_scale = cfg.guidance.cfg_scale;
    mc.scfg.threads = cfg.threads;
    mc.finetune_lr = cfg.mining_finetune_lr;
    mc.batch = cfg.mining_batch;
    mc.select_n_per_cell = cfg.mining_select_n_per_cell;
    mc.reselect_each_round = cfg.mining_reselect_each_round;
    if (cfg.guidance.w > 0.0) mc.fixed_w = cfg.guidance.w;
    mc.out_dir = cfg.out;

    const auto result = run_mining_loop(model, stack, mc, b.train, b.val, cfg.seed);
    save_classifier(cfg.out + "/final_model.ckpt", model);
    write_manifest(cfg, "mine", {"run_manifest.json", "final_model.ckpt"});
    log_info("mining finished: " + std::to_string(result.manifest.rounds.size()) +
             " rounds, pool size " + std::to_string(result.pool.size()));
    return 0;
}

int cmd_eval(CliState& st, const GenerateArgs& args) {
    auto& cfg = st.cfg;
    fs::create_directories(cfg.out);
    const Benchmark b = load_data(cfg);
    const ClassifierModel model = load_classifier(args.classifier);
    const auto rep = accuracy_by_split(model, b.val);
    save_eval_report(rep, cfg.out + "/eval.csv");
    std::ofstream os(cfg.out + "/eval.json");
    os << json{{"overall", rep.overall},
               {"many", rep.many},
               {"medium", rep.medium},
               {"few", rep.few}}
              .dump(2)
       << "\n";
    write_manifest(cfg, "eval", {"eval.csv", "eval.json"});
    return 0;
}

int cmd_trace(CliState& st, const GenerateArgs& args) {
    auto& cfg = st.cfg;
    apply_overrides(cfg, args);
    fs::create_directories(cfg.out);
    const Benchmark b = load_data(cfg);
    const ClassifierModel model = load_classifier(args.classifier);
    const DiffusionStack stack = load_stack(args.stack);
    SamplerConfig scfg;
    scfg.num_steps = cfg.schedule.sample_steps;
    scfg.cfg_scale = cfg.guidance.cfg_scale;

    const std::size_t cls =
        cfg.generate.cls < 0 ? 0 : static_cast<std::size_t>(cfg.generate.cls);
    const auto cap = capture_trajectories(model, stack, cfg.guidance, cls, cfg.generate.n,
                                          derive_seed(cfg.seed, "trace"), scfg);

    CsvWriter w(cfg.out + "/trace.csv");
    w.row({"chain", "step", "t", "eps_norm", "x0_norm", "signal"});
    for (std::size_t s = 0; s < cap.ts.size(); ++s) {
        for (std::size_t c = 0; c < cap.eps_norm[s].size(); ++c) {
            w.row({std::to_string(c), std::to_string(s), std::to_string(cap.ts[s]),
                   fmt_double(cap.eps_norm[s][c]), fmt_double(cap.x0_norm[s][c]),
                   fmt_double(cap.signal_terminal[s][c])});
        }
    }
    w.close();
    save_trajectory_fid(trajectory_fid_curve(cap, b.train.points), cfg.out + "/fd_curve.csv");
    write_manifest(cfg, "trace", {"trace.csv", "fd_curve.csv"});
    return 0;
}

json error_json(const std::string& type, const std::string& message,
                const std::vector<std::string>& violations = {}) {
    json j;
    j["error"] = type;
    j["message"] = message;
    if (!violations.empty()) j["violations"] = violations;
    return j;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"longtail signals, guided diffusion, and mining pipeline"};
    app.require_subcommand(1);

    CliState st;
    app.add_option("--config", st.config_path, "run configuration json");
    std::uint64_t seed_opt = 0;
    auto* seed_flag = app.add_option("--seed", seed_opt, "override config seed");
    app.add_option("--out", st.out_override, "override output directory");
    int threads_opt = 0;
    auto* threads_flag = app.add_option("--threads", threads_opt, "worker cap");

    GenerateArgs gargs;
    auto add_model_flags = [&](CLI::App* cmd, bool stack) {
        cmd->add_option("--classifier", gargs.classifier, "classifier checkpoint dir");
        if (stack) cmd->add_option("--stack", gargs.stack, "diffusion stack checkpoint dir");
    };
    auto add_gen_flags = [&](CLI::App* cmd) {
        cmd->add_option_function<double>(
            "--w", [&gargs](const double& v) { gargs.w = v; }, "guidance weight override");
        cmd->add_option("--signal", gargs.signal, "signal kind override");
        cmd->add_option("--mode", gargs.mode, "guidance mode override");
        cmd->add_option_function<std::size_t>(
            "--n", [&gargs](const std::size_t& v) { gargs.n = v; }, "samples per class");
        cmd->add_option_function<long>(
            "--class", [&gargs](const long& v) { gargs.cls = v; },
            "conditioning class (-1 = all)");
    };

    auto* gen_data = app.add_subcommand("gen-data", "generate and save the dataset");
    auto* train_cls = app.add_subcommand("train-classifier", "train the predictive model");
    auto* train_diff = app.add_subcommand("train-diffusion", "train autoencoder and denoiser");
    auto* generate = app.add_subcommand("generate", "guided synthetic data generation");
    add_model_flags(generate, true);
    add_gen_flags(generate);
    auto* select = app.add_subcommand("select-weight", "in-distribution weight selection");
    add_model_flags(select, true);
    add_gen_flags(select);
    auto* mine = app.add_subcommand("mine", "iterative fine-tune and generate loop");
    add_model_flags(mine, true);
    add_gen_flags(mine);
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint by split");
    add_model_flags(eval, false);
    auto* trace = app.add_subcommand("trace", "per-step sampler trace and FD curve");
    add_model_flags(trace, true);
    add_gen_flags(trace);

    // global flags remain usable after the subcommand name
    for (auto* sub : {gen_data, train_cls, train_diff, generate, select, mine, eval, trace}) {
        sub->fallthrough();
    }

    CLI11_PARSE(app, argc, argv);
    if (*seed_flag) st.seed_override = seed_opt;
    if (*threads_flag) st.threads_override = threads_opt;

    try {
        finalize_config(st);
        if (gen_data->parsed()) return cmd_gen_data(st);
        if (train_cls->parsed()) return cmd_train_classifier(st);
        if (train_diff->parsed()) return cmd_train_diffusion(st);
        if (gargs.classifier.empty()) gargs.classifier = st.cfg.out + "/classifier.ckpt";
        if (gargs.stack.empty()) gargs.stack = st.cfg.out + "/stack.ckpt";
        if (generate->parsed()) return cmd_generate(st, gargs);
        if (select->parsed()) return cmd_select_weight(st, gargs);
        if (mine->parsed()) return cmd_mine(st, gargs);
        if (eval->parsed()) return cmd_eval(st, gargs);
        if (trace->parsed()) return cmd_trace(st, gargs);
    } catch (const ConfigError& e) {
        std::cout << error_json("config", e.what(), e.violations).dump(2) << "\n";
        return 1;
    } catch (const SelectionError& e) {
        std::cout << error_json("selection", e.what(), e.violations).dump(2) << "\n";
        return 1;
    } catch (const Error& e) {
        std::cout << error_json("runtime", e.what()).dump(2) << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cout << error_json("internal", e.what()).dump(2) << "\n";
        return 1;
    }
    return 0;
}
