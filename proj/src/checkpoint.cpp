#include "ltf/checkpoint.hpp"

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "ltf/diffusion.hpp"
#include "ltf/error.hpp"

namespace ltf {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

void save_named(const std::string& dir, const std::string& name, const Tensor& t,
                json& index) {
    save_tensor(dir + "/" + name + ".bin", t);
    index.push_back(name);
}

Tensor load_named(const std::string& dir, const std::string& name, bool requires_grad) {
    Tensor t = load_tensor(dir + "/" + name + ".bin");
    t.set_requires_grad(requires_grad);
    return t;
}

void copy_into(Tensor& dst, const Tensor& src) {
    if (dst.shape() != src.shape()) throw IoError("checkpoint tensor shape mismatch");
    auto d = dst.mutable_values();
    const auto s = src.values();
    std::copy(s.begin(), s.end(), d.begin());
}

json read_manifest(const std::string& dir, const std::string& expect_type) {
    std::ifstream is(dir + "/manifest.json");
    if (!is) throw IoError("cannot open checkpoint manifest in " + dir);
    json j;
    try {
        is >> j;
    } catch (const std::exception& e) {
        throw IoError(std::string("bad checkpoint manifest: ") + e.what());
    }
    if (j.at("type").get<std::string>() != expect_type) {
        throw IoError("checkpoint type mismatch in " + dir);
    }
    return j;
}

void save_mlp(const std::string& dir, const std::string& prefix, const Mlp& mlp,
              json& index) {
    for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
        save_named(dir, prefix + "_w" + std::to_string(i), mlp.layers[i].W, index);
        save_named(dir, prefix + "_b" + std::to_string(i), mlp.layers[i].b, index);
    }
}

void load_mlp(const std::string& dir, const std::string& prefix, Mlp& mlp) {
    for (std::size_t i = 0; i < mlp.layers.size(); ++i) {
        copy_into(mlp.layers[i].W, load_named(dir, prefix + "_w" + std::to_string(i), true));
        copy_into(mlp.layers[i].b, load_named(dir, prefix + "_b" + std::to_string(i), true));
    }
}

}  // namespace

void save_classifier(const std::string& dir, const ClassifierModel& m) {
    fs::create_directories(dir);
    const auto& cfg = m.config();
    json manifest;
    manifest["type"] = "classifier";
    manifest["d_x"] = cfg.d_x;
    manifest["d_model"] = cfg.d_model;
    manifest["layers"] = cfg.layers;
    manifest["C"] = cfg.C;
    manifest["K"] = cfg.K;
    manifest["seed"] = m.seed();
    json index = json::array();
    save_mlp(dir, "trunk", m.trunk_, index);
    save_named(dir, "base_w", m.base_head_.W, index);
    save_named(dir, "base_b", m.base_head_.b, index);
    for (std::size_t k = 0; k < m.heads_.size(); ++k) {
        save_named(dir, "head" + std::to_string(k) + "_w", m.heads_[k].W, index);
        save_named(dir, "head" + std::to_string(k) + "_b", m.heads_[k].b, index);
    }
    manifest["tensors"] = index;
    std::ofstream os(dir + "/manifest.json");
    if (!os) throw IoError("cannot write manifest in " + dir);
    os << manifest.dump(2) << "\n";
}

ClassifierModel load_classifier(const std::string& dir) {
    const json manifest = read_manifest(dir, "classifier");
    ClassifierConfig cfg;
    cfg.d_x = manifest.at("d_x").get<std::size_t>();
    cfg.d_model = manifest.at("d_model").get<std::size_t>();
    cfg.layers = manifest.at("layers").get<std::size_t>();
    cfg.C = manifest.at("C").get<std::size_t>();
    cfg.K = manifest.at("K").get<std::size_t>();
    ClassifierModel m(cfg, manifest.at("seed").get<std::uint64_t>());
    load_mlp(dir, "trunk", m.trunk_);
    copy_into(m.base_head_.W, load_named(dir, "base_w", true));
    copy_into(m.base_head_.b, load_named(dir, "base_b", true));
    for (std::size_t k = 0; k < m.heads_.size(); ++k) {
        copy_into(m.heads_[k].W, load_named(dir, "head" + std::to_string(k) + "_w", true));
        copy_into(m.heads_[k].b, load_named(dir, "head" + std::to_string(k) + "_b", true));
    }
    return m;
}

void save_stack(const std::string& dir, const DiffusionStack& stack) {
    fs::create_directories(dir);
    json manifest;
    manifest["type"] = "stack";
    const auto& acfg = stack.ae.config();
    manifest["ae"] = {{"d_x", acfg.d_x},
                      {"d_z", acfg.d_z},
                      {"hidden", acfg.hidden},
                      {"layers", acfg.layers},
                      {"seed", stack.ae.seed()}};
    const auto& dcfg = stack.denoiser.config();
    manifest["denoiser"] = {{"d_z", dcfg.d_z},     {"hidden", dcfg.hidden},
                            {"layers", dcfg.layers}, {"time_dim", dcfg.time_dim},
                            {"class_dim", dcfg.class_dim}, {"C", dcfg.C},
                            {"T", dcfg.T},          {"seed", stack.denoiser.seed()}};
    manifest["schedule"] = {{"T", stack.sched.T},
                            {"beta", stack.sched.beta},
                            {"eta", stack.sched.eta}};
    manifest["latent_stats"] = {{"mean", stack.latent_stats.mean},
                                {"std", stack.latent_stats.std}};
    json index = json::array();
    save_mlp(dir, "enc", stack.ae.encoder_, index);
    save_mlp(dir, "dec", stack.ae.decoder_, index);
    save_mlp(dir, "eps", stack.denoiser.net_, index);
    save_named(dir, "class_emb", stack.denoiser.class_emb_, index);
    manifest["tensors"] = index;
    std::ofstream os(dir + "/manifest.json");
    if (!os) throw IoError("cannot write manifest in " + dir);
    os << manifest.dump(2) << "\n";
}

DiffusionStack load_stack(const std::string& dir) {
    const json manifest = read_manifest(dir, "stack");
    DiffusionStack stack;

    const auto& ja = manifest.at("ae");
    AutoencoderConfig acfg;
    acfg.d_x = ja.at("d_x").get<std::size_t>();
    acfg.d_z = ja.at("d_z").get<std::size_t>();
    acfg.hidden = ja.at("hidden").get<std::size_t>();
    acfg.layers = ja.at("layers").get<std::size_t>();
    stack.ae = Autoencoder(acfg, ja.at("seed").get<std::uint64_t>());
    load_mlp(dir, "enc", stack.ae.encoder_);
    load_mlp(dir, "dec", stack.ae.decoder_);

    const auto& jd = manifest.at("denoiser");
    DenoiserConfig dcfg;
    dcfg.d_z = jd.at("d_z").get<std::size_t>();
    dcfg.hidden = jd.at("hidden").get<std::size_t>();
    dcfg.layers = jd.at("layers").get<std::size_t>();
    dcfg.time_dim = jd.at("time_dim").get<std::size_t>();
    dcfg.class_dim = jd.at("class_dim").get<std::size_t>();
    dcfg.C = jd.at("C").get<std::size_t>();
    dcfg.T = jd.at("T").get<int>();
    stack.denoiser = Denoiser(dcfg, jd.at("seed").get<std::uint64_t>());
    load_mlp(dir, "eps", stack.denoiser.net_);
    copy_into(stack.denoiser.class_emb_, load_named(dir, "class_emb", true));

    const auto& js = manifest.at("schedule");
    NoiseSchedule sched;
    sched.T = js.at("T").get<int>();
    sched.beta = js.at("beta").get<std::vector<double>>();
    sched.eta = js.at("eta").get<double>();
    sched.alpha_step.assign(sched.T + 1, 1.0);
    sched.alpha_bar.assign(sched.T + 1, 1.0);
    for (int t = 1; t <= sched.T; ++t) {
        sched.alpha_step[t] = 1.0 - sched.beta[t];
        sched.alpha_bar[t] = sched.alpha_bar[t - 1] * sched.alpha_step[t];
    }
    sched.validate();
    stack.sched = sched;

    stack.latent_stats.mean = manifest.at("latent_stats").at("mean").get<std::vector<double>>();
    stack.latent_stats.std = manifest.at("latent_stats").at("std").get<std::vector<double>>();
    return stack;
}

std::string checkpoint_id(const ClassifierModel& m) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(m.checksum()));
    return buf;
}

}  // namespace ltf
