#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "ltf/error.hpp"
#include "ltf/mining.hpp"

using namespace ltf;

namespace {

LongtailDataset tiny_longtail(std::uint64_t seed) {
    MixtureSpec spec;
    spec.C = 3;
    spec.dim = 2;
    spec.components_per_class = 1;
    GaussianComponent a, b, c;
    a.mean = {-2, 0};
    b.mean = {2, 0};
    c.mean = {0, 3};
    a.cov = b.cov = c.cov = {0.4, 0, 0, 0.4};
    spec.components = {{a}, {b}, {c}};
    spec.count_law = CountLaw::explicit_list({60, 25, 8});
    return generate_longtail_mixture(spec, seed);
}

LongtailDataset tiny_val(std::uint64_t seed, const LongtailDataset& train) {
    MixtureSpec spec = train.generator_spec;
    spec.count_law = CountLaw::explicit_list({20, 20, 20});
    auto val = generate_longtail_mixture(spec, seed);
    val.split_of_class = train.split_of_class;
    return val;
}

DiffusionStack tiny_stack(std::uint64_t seed) {
    DiffusionStack stack;
    AutoencoderConfig acfg;
    acfg.d_x = 2;
    acfg.d_z = 2;
    acfg.hidden = 8;
    acfg.layers = 1;
    stack.ae = Autoencoder(acfg, derive_seed(seed, "m_ae"));
    stack.latent_stats.mean = {0.0, 0.0};
    stack.latent_stats.std = {1.0, 1.0};
    stack.sched = NoiseSchedule::linear(40, 1e-4, 0.3, 0.0);
    DenoiserConfig dcfg;
    dcfg.d_z = 2;
    dcfg.hidden = 12;
    dcfg.layers = 1;
    dcfg.time_dim = 8;
    dcfg.class_dim = 4;
    dcfg.C = 3;
    dcfg.T = 40;
    stack.denoiser = Denoiser(dcfg, derive_seed(seed, "m_eps"));
    return stack;
}

ClassifierModel tiny_classifier(std::uint64_t seed) {
    ClassifierConfig cfg;
    cfg.d_x = 2;
    cfg.d_model = 12;
    cfg.layers = 2;
    cfg.C = 3;
    cfg.K = 3;
    return ClassifierModel(cfg, seed);
}

MiningConfig fast_mining(std::size_t rounds_at, std::size_t quota) {
    MiningConfig mc;
    mc.schedule.total_epochs = 4;
    mc.schedule.generation_epochs = rounds_at == 0 ? std::vector<std::size_t>{}
                                                   : std::vector<std::size_t>{0, 2};
    mc.schedule.generation_epochs.resize(std::min<std::size_t>(rounds_at, 2));
    mc.schedule.per_round_quota = quota;
    mc.schedule.allocation = Allocation::UniformPerClass;
    mc.gcfg.mode = GuidanceMode::TerminalState;
    mc.gcfg.signal = {SignalKind::Epistemic, 1.0, HeadSelection::EpistemicHeads};
    mc.gcfg.weight_scale = 0.01;
    mc.scfg.num_steps = 10;
    mc.finetune_lr = 0.01;
    mc.batch = 32;
    mc.fixed_w = 10.0;
    return mc;
}

}  // namespace

TEST_CASE("allocation policies") {
    CHECK(allocate_per_class(0, {10, 20, 30}, Allocation::UniformPerClass) ==
          std::vector<std::size_t>{0, 0, 0});
    CHECK(allocate_per_class(0, {10, 20, 30}, Allocation::ProportionalToClassFrequency) ==
          std::vector<std::size_t>{0, 0, 0});
    // remainder goes to the lowest class indices
    CHECK(allocate_per_class(10, {5, 5, 5}, Allocation::UniformPerClass) ==
          std::vector<std::size_t>{4, 3, 3});
    // largest remainder on [100, 60, 10], quota 17: exact shares 10, 6, 1
    CHECK(allocate_per_class(17, {100, 60, 10}, Allocation::ProportionalToClassFrequency) ==
          std::vector<std::size_t>{10, 6, 1});
    // allocations always sum to the quota
    for (std::size_t quota : {1u, 7u, 23u, 100u}) {
        for (auto policy :
             {Allocation::UniformPerClass, Allocation::ProportionalToClassFrequency}) {
            const auto a = allocate_per_class(quota, {37, 11, 3, 52}, policy);
            std::size_t sum = 0;
            for (auto v : a) sum += v;
            CHECK(sum == quota);
        }
    }
}

TEST_CASE("schedule validation") {
    MiningSchedule s;
    s.total_epochs = 5;
    s.generation_epochs = {0, 5};
    CHECK_THROWS_AS(s.validate(), ContractError);
    s.generation_epochs = {3, 1};
    CHECK_THROWS_AS(s.validate(), ContractError);
    s.generation_epochs = {1, 3};
    s.validate();
}

TEST_CASE("empty generation schedule equals plain fine-tuning bit-identically") {
    const auto train = tiny_longtail(5);
    const auto val = tiny_val(6, train);
    const auto stack = tiny_stack(7);

    ClassifierModel a = tiny_classifier(9);
    ClassifierModel b = tiny_classifier(9);

    MiningConfig mc = fast_mining(0, 0);
    const auto result = run_mining_loop(a, stack, mc, train, val, 33);
    CHECK(result.manifest.rounds.empty());
    CHECK(result.pool.size() == 0);

    finetune_classifier(b, train.points, mc.schedule.total_epochs, mc.finetune_lr, mc.batch,
                        33);
    const auto pa = a.params(), pb = b.params();
    for (std::size_t i = 0; i < pa.size(); ++i) {
        const auto va = pa[i].values(), vb = pb[i].values();
        for (std::size_t j = 0; j < va.size(); ++j) CHECK(va[j] == vb[j]);  // bitwise
    }
}

TEST_CASE("one round: pool size equals quota with full provenance") {
    const auto train = tiny_longtail(15);
    const auto val = tiny_val(16, train);
    const auto stack = tiny_stack(17);
    ClassifierModel m = tiny_classifier(19);

    MiningConfig mc = fast_mining(1, 12);
    const auto result = run_mining_loop(m, stack, mc, train, val, 44);
    REQUIRE(result.manifest.rounds.size() == 1);
    CHECK(result.pool.size() == 12);
    CHECK(result.manifest.rounds[0].generated == 12);
    CHECK(result.manifest.rounds[0].w == 10.0);
    for (const auto& sp : result.pool.points) {
        CHECK(sp.prov.signal_kind == "epistemic");
        CHECK(sp.prov.guidance_w == 10.0);
        CHECK(sp.prov.checkpoint_id == result.manifest.rounds[0].checkpoint_id);
        CHECK(sp.point.label < 3);
    }
    // synthetic labels are the conditioning class: uniform quota 12 over 3
    std::size_t per_class[3] = {0, 0, 0};
    for (const auto& sp : result.pool.points) per_class[sp.point.label]++;
    CHECK(per_class[0] == 4);
    CHECK(per_class[1] == 4);
    CHECK(per_class[2] == 4);
}

TEST_CASE("manifest json round trip and bit-identical reruns") {
    const auto train = tiny_longtail(25);
    const auto val = tiny_val(26, train);
    const auto stack = tiny_stack(27);

    auto run = [&](const std::string& dir) {
        ClassifierModel m = tiny_classifier(29);
        MiningConfig mc = fast_mining(2, 9);
        mc.out_dir = dir;
        std::filesystem::remove_all(dir);
        std::filesystem::create_directories(dir);
        return run_mining_loop(m, stack, mc, train, val, 55);
    };
    const auto r1 = run("/tmp/ltf_mine_a");
    const auto r2 = run("/tmp/ltf_mine_b");

    auto file_bytes = [](const std::string& p) {
        std::ifstream is(p, std::ios::binary);
        return std::string((std::istreambuf_iterator<char>(is)),
                           std::istreambuf_iterator<char>());
    };
    CHECK(file_bytes("/tmp/ltf_mine_a/run_manifest.json") ==
          file_bytes("/tmp/ltf_mine_b/run_manifest.json"));
    CHECK(file_bytes("/tmp/ltf_mine_a/round_0/pool.csv") ==
          file_bytes("/tmp/ltf_mine_b/round_0/pool.csv"));

    const auto loaded = load_manifest("/tmp/ltf_mine_a/run_manifest.json");
    CHECK(loaded.seed == r1.manifest.seed);
    REQUIRE(loaded.rounds.size() == r1.manifest.rounds.size());
    CHECK(loaded.rounds[0].checkpoint_id == r1.manifest.rounds[0].checkpoint_id);
    CHECK(loaded.epochs.size() == r1.manifest.epochs.size());

    // round directory layout
    CHECK(std::filesystem::exists("/tmp/ltf_mine_a/round_0/model.ckpt/manifest.json"));
    CHECK(std::filesystem::exists("/tmp/ltf_mine_a/round_1/report.csv"));

    // epoch metrics cover every epoch and pool growth is monotone
    std::size_t last_pool = 0;
    for (const auto& e : r1.manifest.epochs) {
        CHECK(e.pool_size >= last_pool);
        last_pool = e.pool_size;
    }
    CHECK(r1.manifest.epochs.size() == 4);
    (void)r2;
}

TEST_CASE("real data always stays in the fine-tuning mix") {
    // quota 0 with generation epochs: rounds happen, pool stays empty, and
    // training still runs on the real points alone
    const auto train = tiny_longtail(35);
    const auto val = tiny_val(36, train);
    const auto stack = tiny_stack(37);
    ClassifierModel m = tiny_classifier(39);
    MiningConfig mc = fast_mining(1, 0);
    const auto result = run_mining_loop(m, stack, mc, train, val, 66);
    CHECK(result.pool.size() == 0);
    CHECK(result.manifest.rounds.size() == 1);
    CHECK(result.manifest.epochs.back().train_loss > 0.0);
}
