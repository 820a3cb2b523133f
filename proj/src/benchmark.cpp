#include "ltf/benchmark.hpp"

#include <cmath>

namespace ltf {

namespace {
GaussianComponent iso(double x, double y, double var) {
    GaussianComponent g;
    g.mean = {x, y};
    g.cov = {var, 0.0, 0.0, var};
    return g;
}
}  // namespace

MixtureSpec default_benchmark_spec() {
    MixtureSpec spec;
    spec.C = 10;
    spec.dim = 2;
    spec.components_per_class = 1;

    // Dense ring: Many classes 0-2 and Medium classes 3-5 alternate on a
    // radius-4 circle, so Medium classes sit between Many neighbors.
    const double r = 4.0;
    auto on_ring = [&](double deg) {
        const double rad = deg * 3.14159265358979323846 / 180.0;
        return std::pair<double, double>{r * std::cos(rad), r * std::sin(rad)};
    };
    const auto [x0, y0] = on_ring(90.0);
    const auto [x1, y1] = on_ring(210.0);
    const auto [x2, y2] = on_ring(330.0);
    const auto [x3, y3] = on_ring(30.0);
    const auto [x4, y4] = on_ring(150.0);
    const auto [x5, y5] = on_ring(270.0);

    spec.components = {
        {iso(x0, y0, 0.5)},
        {iso(x1, y1, 0.5)},
        {iso(x2, y2, 0.5)},
        {iso(x3, y3, 0.5)},
        {iso(x4, y4, 0.5)},
        {iso(x5, y5, 0.5)},
        // Few, far off the dense mass: epistemic responders.
        {iso(9.0, 9.0, 0.25)},
        {iso(-9.0, 9.0, 0.25)},
        // Few, wedged between dense neighbors: aleatoric responders.
        {iso(0.5 * (x0 + x3), 0.5 * (y0 + y3), 0.16)},
        {iso(0.5 * (x0 + x4), 0.5 * (y0 + y4), 0.16)},
    };

    // Exponent pinned so class 0 has 1200 points and class 9 has 8:
    // ln(1200 / 8) / ln(10).
    spec.count_law = CountLaw::power_law(std::log(150.0) / std::log(10.0), 1200);
    return spec;
}

Benchmark make_default_benchmark(std::uint64_t seed, std::size_t val_per_class) {
    Benchmark b;
    const MixtureSpec spec = default_benchmark_spec();
    b.train = generate_longtail_mixture(spec, derive_seed(seed, "benchmark_train"));

    MixtureSpec val_spec = spec;
    val_spec.count_law = CountLaw::explicit_list(
        std::vector<std::size_t>(spec.C, val_per_class));
    b.val = generate_longtail_mixture(val_spec, derive_seed(seed, "benchmark_val"));
    // Regime tags are a property of the training frequencies.
    b.val.split_of_class = b.train.split_of_class;
    return b;
}

ClassifierTrainConfig default_classifier_training() {
    ClassifierTrainConfig cfg;
    cfg.epochs = 60;
    cfg.batch = 64;
    cfg.lr = 0.05;
    cfg.optimizer = OptimizerKind::SgdMomentum;
    cfg.momentum = 0.9;
    cfg.cosine_decay = true;
    cfg.oracle_coeff = 1.0;
    return cfg;
}

AeTrainConfig default_ae_training() {
    AeTrainConfig cfg;
    cfg.epochs = 150;
    cfg.batch = 128;
    cfg.lr = 2e-3;
    return cfg;
}

DiffusionTrainConfig default_diffusion_training() {
    DiffusionTrainConfig cfg;
    cfg.steps = 12000;
    cfg.batch = 96;
    cfg.lr = 1.5e-3;
    cfg.p_uncond = 0.1;
    return cfg;
}

ClassifierModel train_benchmark_classifier(const Benchmark& b, std::uint64_t seed,
                                           std::size_t K) {
    ClassifierConfig cfg;
    cfg.d_x = 2;
    cfg.d_model = 64;
    cfg.layers = 3;
    cfg.C = b.train.num_classes();
    cfg.K = K;
    ClassifierModel m(cfg, seed);
    train_classifier(m, b.train, default_classifier_training(), seed);
    return m;
}

DiffusionStack train_benchmark_stack(const Benchmark& b, std::uint64_t seed) {
    DiffusionStack stack;
    AutoencoderConfig acfg;
    acfg.d_x = 2;
    // Latent dimension above the data's intrinsic dimension: mid-chain noisy
    // latents then decode off the data manifold, which is what separates the
    // terminal-state estimate from the naive decoded state.
    acfg.d_z = 2;
    acfg.hidden = 32;
    acfg.layers = 1;
    stack.ae = Autoencoder(acfg, derive_seed(seed, "stack_ae"));
    train_autoencoder(stack.ae, b.train.points, default_ae_training(),
                      derive_seed(seed, "stack_ae_train"));
    stack.latent_stats = fit_latent_stats(stack.ae, b.train.points);

    stack.sched = NoiseSchedule::linear(100, 1e-4, 0.35, 0.0);

    DenoiserConfig dcfg;
    dcfg.d_z = acfg.d_z;
    dcfg.hidden = 160;
    dcfg.layers = 2;
    dcfg.time_dim = 16;
    dcfg.class_dim = 8;
    dcfg.C = b.train.num_classes();
    dcfg.T = stack.sched.T;
    stack.denoiser = Denoiser(dcfg, derive_seed(seed, "stack_denoiser"));
    train_denoiser(stack, b.train.points, default_diffusion_training(),
                   derive_seed(seed, "stack_denoiser_train"));
    return stack;
}

double default_weight_scale() { return 0.02; }

}  // namespace ltf
