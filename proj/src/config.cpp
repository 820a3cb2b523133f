#include "ltf/config.hpp"

#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "ltf/benchmark.hpp"
#include "ltf/error.hpp"

namespace ltf {

using nlohmann::json;

namespace {

class Validator {
  public:
    explicit Validator(std::vector<std::string>& out) : violations_(out) {}

    void fail(const std::string& path, const std::string& msg) {
        violations_.push_back(path + ": " + msg);
    }

    void known_keys(const json& obj, const std::string& path,
                    const std::set<std::string>& allowed) {
        for (const auto& [key, _] : obj.items()) {
            if (!allowed.count(key)) fail(path + "." + key, "unknown key");
        }
    }

    template <typename T>
    void read(const json& obj, const std::string& path, const char* key, T& dst) {
        if (!obj.contains(key)) return;
        try {
            dst = obj.at(key).get<T>();
        } catch (const std::exception&) {
            fail(path + "." + key, "wrong type");
        }
    }

  private:
    std::vector<std::string>& violations_;
};

}  // namespace

RunConfig default_run_config() {
    RunConfig cfg;
    cfg.classifier_training = default_classifier_training();
    cfg.autoencoder_training = default_ae_training();
    cfg.diffusion_training = default_diffusion_training();
    cfg.autoencoder.d_x = 2;
    cfg.autoencoder.d_z = 2;
    cfg.autoencoder.hidden = 32;
    cfg.autoencoder.layers = 1;
    cfg.denoiser.hidden = 128;
    cfg.denoiser.layers = 2;
    cfg.denoiser.time_dim = 16;
    cfg.denoiser.class_dim = 8;
    cfg.signal.kind = SignalKind::Epistemic;
    cfg.guidance.mode = GuidanceMode::TerminalState;
    cfg.guidance.w = 50.0;
    cfg.guidance.weight_scale = default_weight_scale();
    cfg.guidance.cfg_scale = 2.0;
    cfg.guidance.signal = cfg.signal;
    return cfg;
}

RunConfig parse_run_config(const std::string& json_text) {
    std::vector<std::string> violations;
    Validator v(violations);
    json j;
    try {
        j = json::parse(json_text);
    } catch (const std::exception& e) {
        throw ConfigError({std::string("invalid json: ") + e.what()});
    }
    if (!j.is_object()) throw ConfigError({"top level must be a json object"});

    RunConfig cfg = default_run_config();

    v.known_keys(j, "$",
                 {"seed", "threads", "out", "dataset", "model", "classifier_training",
                  "autoencoder", "denoiser", "diffusion_training", "schedule", "signal",
                  "guidance", "mining", "generate", "select_weight"});
    v.read(j, "$", "seed", cfg.seed);
    v.read(j, "$", "threads", cfg.threads);
    v.read(j, "$", "out", cfg.out);
    if (cfg.threads < 1) v.fail("$.threads", "must be >= 1");

    if (j.contains("dataset")) {
        const auto& d = j["dataset"];
        v.known_keys(d, "$.dataset",
                     {"kind", "val_per_class", "train_csv", "train_sidecar", "val_csv",
                      "val_sidecar"});
        v.read(d, "$.dataset", "kind", cfg.dataset.kind);
        v.read(d, "$.dataset", "val_per_class", cfg.dataset.val_per_class);
        v.read(d, "$.dataset", "train_csv", cfg.dataset.train_csv);
        v.read(d, "$.dataset", "train_sidecar", cfg.dataset.train_sidecar);
        v.read(d, "$.dataset", "val_csv", cfg.dataset.val_csv);
        v.read(d, "$.dataset", "val_sidecar", cfg.dataset.val_sidecar);
        if (cfg.dataset.kind != "default_benchmark" && cfg.dataset.kind != "files") {
            v.fail("$.dataset.kind", "must be 'default_benchmark' or 'files'");
        }
        if (cfg.dataset.kind == "files") {
            for (const auto& [name, path] :
                 {std::pair<const char*, const std::string&>{"train_csv", cfg.dataset.train_csv},
                  {"train_sidecar", cfg.dataset.train_sidecar},
                  {"val_csv", cfg.dataset.val_csv},
                  {"val_sidecar", cfg.dataset.val_sidecar}}) {
                if (path.empty() || !std::filesystem::exists(path)) {
                    v.fail(std::string("$.dataset.") + name, "referenced path does not exist");
                }
            }
        }
    }

    if (j.contains("model")) {
        const auto& m = j["model"];
        v.known_keys(m, "$.model", {"d_model", "layers", "heads"});
        v.read(m, "$.model", "d_model", cfg.d_model);
        v.read(m, "$.model", "layers", cfg.trunk_layers);
        v.read(m, "$.model", "heads", cfg.heads);
    }

    if (j.contains("classifier_training")) {
        const auto& t = j["classifier_training"];
        v.known_keys(t, "$.classifier_training",
                     {"epochs", "batch", "lr", "optimizer", "momentum", "cosine_decay",
                      "oracle_coeff"});
        v.read(t, "$.classifier_training", "epochs", cfg.classifier_training.epochs);
        v.read(t, "$.classifier_training", "batch", cfg.classifier_training.batch);
        v.read(t, "$.classifier_training", "lr", cfg.classifier_training.lr);
        v.read(t, "$.classifier_training", "momentum", cfg.classifier_training.momentum);
        v.read(t, "$.classifier_training", "cosine_decay", cfg.classifier_training.cosine_decay);
        v.read(t, "$.classifier_training", "oracle_coeff", cfg.classifier_training.oracle_coeff);
        std::string opt = "sgd_momentum";
        v.read(t, "$.classifier_training", "optimizer", opt);
        if (opt == "sgd_momentum") {
            cfg.classifier_training.optimizer = OptimizerKind::SgdMomentum;
        } else if (opt == "adam") {
            cfg.classifier_training.optimizer = OptimizerKind::Adam;
        } else {
            v.fail("$.classifier_training.optimizer", "must be 'sgd_momentum' or 'adam'");
        }
    }

    if (j.contains("autoencoder")) {
        const auto& a = j["autoencoder"];
        v.known_keys(a, "$.autoencoder", {"d_z", "hidden", "layers", "epochs", "batch", "lr"});
        v.read(a, "$.autoencoder", "d_z", cfg.autoencoder.d_z);
        v.read(a, "$.autoencoder", "hidden", cfg.autoencoder.hidden);
        v.read(a, "$.autoencoder", "layers", cfg.autoencoder.layers);
        v.read(a, "$.autoencoder", "epochs", cfg.autoencoder_training.epochs);
        v.read(a, "$.autoencoder", "batch", cfg.autoencoder_training.batch);
        v.read(a, "$.autoencoder", "lr", cfg.autoencoder_training.lr);
    }

    if (j.contains("denoiser")) {
        const auto& d = j["denoiser"];
        v.known_keys(d, "$.denoiser", {"hidden", "layers", "time_dim", "class_dim"});
        v.read(d, "$.denoiser", "hidden", cfg.denoiser.hidden);
        v.read(d, "$.denoiser", "layers", cfg.denoiser.layers);
        v.read(d, "$.denoiser", "time_dim", cfg.denoiser.time_dim);
        v.read(d, "$.denoiser", "class_dim", cfg.denoiser.class_dim);
        if (cfg.denoiser.time_dim % 2 != 0) v.fail("$.denoiser.time_dim", "must be even");
    }

    if (j.contains("diffusion_training")) {
        const auto& t = j["diffusion_training"];
        v.known_keys(t, "$.diffusion_training", {"steps", "batch", "lr", "p_uncond"});
        v.read(t, "$.diffusion_training", "steps", cfg.diffusion_training.steps);
        v.read(t, "$.diffusion_training", "batch", cfg.diffusion_training.batch);
        v.read(t, "$.diffusion_training", "lr", cfg.diffusion_training.lr);
        v.read(t, "$.diffusion_training", "p_uncond", cfg.diffusion_training.p_uncond);
        if (cfg.diffusion_training.p_uncond < 0.0 || cfg.diffusion_training.p_uncond > 1.0) {
            v.fail("$.diffusion_training.p_uncond", "must lie in [0, 1]");
        }
    }

    if (j.contains("schedule")) {
        const auto& s = j["schedule"];
        v.known_keys(s, "$.schedule", {"T", "beta_start", "beta_end", "eta", "sample_steps"});
        v.read(s, "$.schedule", "T", cfg.schedule.T);
        v.read(s, "$.schedule", "beta_start", cfg.schedule.beta_start);
        v.read(s, "$.schedule", "beta_end", cfg.schedule.beta_end);
        v.read(s, "$.schedule", "eta", cfg.schedule.eta);
        v.read(s, "$.schedule", "sample_steps", cfg.schedule.sample_steps);
        if (cfg.schedule.T < 1) v.fail("$.schedule.T", "must be >= 1");
        if (cfg.schedule.sample_steps < 1 || cfg.schedule.sample_steps > cfg.schedule.T) {
            v.fail("$.schedule.sample_steps", "must lie in [1, T]");
        }
        if (!(cfg.schedule.beta_start > 0.0 && cfg.schedule.beta_start < 1.0) ||
            !(cfg.schedule.beta_end > 0.0 && cfg.schedule.beta_end < 1.0)) {
            v.fail("$.schedule", "beta range must lie in (0, 1)");
        }
        if (cfg.schedule.eta < 0.0 || cfg.schedule.eta > 1.0) {
            v.fail("$.schedule.eta", "must lie in [0, 1]");
        }
    }

    if (j.contains("signal")) {
        const auto& s = j["signal"];
        v.known_keys(s, "$.signal", {"kind", "temperature", "head_selection"});
        std::string kind = signal_name(cfg.signal.kind);
        v.read(s, "$.signal", "kind", kind);
        try {
            cfg.signal.kind = signal_from_name(kind);
        } catch (const ContractError&) {
            v.fail("$.signal.kind", "unknown signal kind '" + kind + "'");
        }
        v.read(s, "$.signal", "temperature", cfg.signal.temperature);
        if (!(cfg.signal.temperature > 0.0)) v.fail("$.signal.temperature", "must be > 0");
        std::string hs = "base_head";
        v.read(s, "$.signal", "head_selection", hs);
        if (hs == "base_head") {
            cfg.signal.head_selection = HeadSelection::BaseHead;
        } else if (hs == "epistemic_heads") {
            cfg.signal.head_selection = HeadSelection::EpistemicHeads;
        } else {
            v.fail("$.signal.head_selection", "must be 'base_head' or 'epistemic_heads'");
        }
    }
    const bool epistemic_signal = cfg.signal.kind == SignalKind::Epistemic ||
                                  cfg.signal.kind == SignalKind::Aleatoric ||
                                  cfg.signal.kind == SignalKind::Total ||
                                  cfg.signal.head_selection == HeadSelection::EpistemicHeads;
    if (epistemic_signal && cfg.heads < 2) {
        v.fail("$.model.heads", "K >= 2 required when an epistemic signal is configured");
    }

    if (j.contains("guidance")) {
        const auto& g = j["guidance"];
        v.known_keys(g, "$.guidance",
                     {"mode", "w", "grid", "weight_scale", "cfg_scale", "sigma_mode",
                      "through_denoiser", "floor_ratio"});
        std::string mode = guidance_mode_name(cfg.guidance.mode);
        v.read(g, "$.guidance", "mode", mode);
        try {
            cfg.guidance.mode = guidance_mode_from_name(mode);
        } catch (const ContractError&) {
            v.fail("$.guidance.mode", "unknown mode '" + mode + "'");
        }
        v.read(g, "$.guidance", "w", cfg.guidance.w);
        v.read(g, "$.guidance", "grid", cfg.guidance.grid);
        v.read(g, "$.guidance", "weight_scale", cfg.guidance.weight_scale);
        v.read(g, "$.guidance", "cfg_scale", cfg.guidance.cfg_scale);
        v.read(g, "$.guidance", "through_denoiser", cfg.guidance.through_denoiser);
        v.read(g, "$.guidance", "floor_ratio", cfg.guidance.floor_ratio);
        std::string sm = "sqrt_one_minus_alpha_bar";
        v.read(g, "$.guidance", "sigma_mode", sm);
        if (sm == "sqrt_one_minus_alpha_bar") {
            cfg.guidance.sigma_mode = SigmaMode::SqrtOneMinusAlphaBar;
        } else if (sm == "literal_sigma") {
            cfg.guidance.sigma_mode = SigmaMode::LiteralSigma;
        } else {
            v.fail("$.guidance.sigma_mode",
                   "must be 'sqrt_one_minus_alpha_bar' or 'literal_sigma'");
        }
        if (cfg.guidance.w < 0.0) v.fail("$.guidance.w", "must be >= 0");
        if (cfg.guidance.cfg_scale < 0.0) v.fail("$.guidance.cfg_scale", "must be >= 0");
    }
    cfg.guidance.signal = cfg.signal;

    if (j.contains("mining")) {
        const auto& m = j["mining"];
        v.known_keys(m, "$.mining",
                     {"total_epochs", "generation_epochs", "per_round_quota", "allocation",
                      "finetune_lr", "batch", "select_n_per_cell", "reselect_each_round"});
        v.read(m, "$.mining", "total_epochs", cfg.mining_schedule.total_epochs);
        v.read(m, "$.mining", "generation_epochs", cfg.mining_schedule.generation_epochs);
        v.read(m, "$.mining", "per_round_quota", cfg.mining_schedule.per_round_quota);
        v.read(m, "$.mining", "finetune_lr", cfg.mining_finetune_lr);
        v.read(m, "$.mining", "batch", cfg.mining_batch);
        v.read(m, "$.mining", "select_n_per_cell", cfg.mining_select_n_per_cell);
        v.read(m, "$.mining", "reselect_each_round", cfg.mining_reselect_each_round);
        std::string alloc = allocation_name(cfg.mining_schedule.allocation);
        v.read(m, "$.mining", "allocation", alloc);
        try {
            cfg.mining_schedule.allocation = allocation_from_name(alloc);
        } catch (const ContractError&) {
            v.fail("$.mining.allocation", "unknown policy '" + alloc + "'");
        }
        for (auto e : cfg.mining_schedule.generation_epochs) {
            if (e >= cfg.mining_schedule.total_epochs) {
                v.fail("$.mining.generation_epochs",
                       "epoch " + std::to_string(e) + " outside [0, total_epochs)");
                break;
            }
        }
    }

    if (j.contains("generate")) {
        const auto& g = j["generate"];
        v.known_keys(g, "$.generate", {"n", "class"});
        v.read(g, "$.generate", "n", cfg.generate.n);
        v.read(g, "$.generate", "class", cfg.generate.cls);
    }

    if (j.contains("select_weight")) {
        const auto& s = j["select_weight"];
        v.known_keys(s, "$.select_weight", {"n_per_cell", "classes"});
        v.read(s, "$.select_weight", "n_per_cell", cfg.select_weight.n_per_cell);
        v.read(s, "$.select_weight", "classes", cfg.select_weight.classes);
    }

    if (!violations.empty()) throw ConfigError(violations);
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError({"cannot open config file: " + path});
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return parse_run_config(text);
}

std::string run_config_json(const RunConfig& cfg) {
    json j;
    j["seed"] = cfg.seed;
    j["threads"] = cfg.threads;
    j["out"] = cfg.out;
    j["dataset"] = {{"kind", cfg.dataset.kind}, {"val_per_class", cfg.dataset.val_per_class}};
    if (cfg.dataset.kind == "files") {
        j["dataset"]["train_csv"] = cfg.dataset.train_csv;
        j["dataset"]["train_sidecar"] = cfg.dataset.train_sidecar;
        j["dataset"]["val_csv"] = cfg.dataset.val_csv;
        j["dataset"]["val_sidecar"] = cfg.dataset.val_sidecar;
    }
    j["model"] = {{"d_model", cfg.d_model}, {"layers", cfg.trunk_layers}, {"heads", cfg.heads}};
    j["classifier_training"] = {
        {"epochs", cfg.classifier_training.epochs},
        {"batch", cfg.classifier_training.batch},
        {"lr", cfg.classifier_training.lr},
        {"optimizer",
         cfg.classifier_training.optimizer == OptimizerKind::Adam ? "adam" : "sgd_momentum"},
        {"momentum", cfg.classifier_training.momentum},
        {"cosine_decay", cfg.classifier_training.cosine_decay},
        {"oracle_coeff", cfg.classifier_training.oracle_coeff}};
    j["autoencoder"] = {{"d_z", cfg.autoencoder.d_z},
                        {"hidden", cfg.autoencoder.hidden},
                        {"layers", cfg.autoencoder.layers},
                        {"epochs", cfg.autoencoder_training.epochs},
                        {"batch", cfg.autoencoder_training.batch},
                        {"lr", cfg.autoencoder_training.lr}};
    j["denoiser"] = {{"hidden", cfg.denoiser.hidden},
                     {"layers", cfg.denoiser.layers},
                     {"time_dim", cfg.denoiser.time_dim},
                     {"class_dim", cfg.denoiser.class_dim}};
    j["diffusion_training"] = {{"steps", cfg.diffusion_training.steps},
                               {"batch", cfg.diffusion_training.batch},
                               {"lr", cfg.diffusion_training.lr},
                               {"p_uncond", cfg.diffusion_training.p_uncond}};
    j["schedule"] = {{"T", cfg.schedule.T},
                     {"beta_start", cfg.schedule.beta_start},
                     {"beta_end", cfg.schedule.beta_end},
                     {"eta", cfg.schedule.eta},
                     {"sample_steps", cfg.schedule.sample_steps}};
    j["signal"] = {{"kind", signal_name(cfg.signal.kind)},
                   {"temperature", cfg.signal.temperature},
                   {"head_selection", cfg.signal.head_selection == HeadSelection::BaseHead
                                          ? "base_head"
                                          : "epistemic_heads"}};
    j["guidance"] = {{"mode", guidance_mode_name(cfg.guidance.mode)},
                     {"w", cfg.guidance.w},
                     {"grid", cfg.guidance.grid},
                     {"weight_scale", cfg.guidance.weight_scale},
                     {"cfg_scale", cfg.guidance.cfg_scale},
                     {"sigma_mode", cfg.guidance.sigma_mode == SigmaMode::LiteralSigma
                                        ? "literal_sigma"
                                        : "sqrt_one_minus_alpha_bar"},
                     {"through_denoiser", cfg.guidance.through_denoiser},
                     {"floor_ratio", cfg.guidance.floor_ratio}};
    j["mining"] = {{"total_epochs", cfg.mining_schedule.total_epochs},
                   {"generation_epochs", cfg.mining_schedule.generation_epochs},
                   {"per_round_quota", cfg.mining_schedule.per_round_quota},
                   {"allocation", allocation_name(cfg.mining_schedule.allocation)},
                   {"finetune_lr", cfg.mining_finetune_lr},
                   {"batch", cfg.mining_batch},
                   {"select_n_per_cell", cfg.mining_select_n_per_cell},
                   {"reselect_each_round", cfg.mining_reselect_each_round}};
    j["generate"] = {{"n", cfg.generate.n}, {"class", cfg.generate.cls}};
    j["select_weight"] = {{"n_per_cell", cfg.select_weight.n_per_cell},
                          {"classes", cfg.select_weight.classes}};
    return j.dump(2) + "\n";
}

}  // namespace ltf
