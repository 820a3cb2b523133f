#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "ltf/error.hpp"
#include "ltf/rng.hpp"
#include "ltf/signals.hpp"
#include "oracles.hpp"

using namespace ltf;
using namespace ltf::test;

namespace {
Tensor vec(std::initializer_list<double> v) {
    return Tensor::from({v.size()}, std::vector<double>(v));
}
Tensor rows(std::size_t k, std::size_t c, std::vector<double> v) {
    return Tensor::from({k, c}, std::move(v));
}
}  // namespace

TEST_CASE("entropy values") {
    CHECK(entropy(vec({0.25, 0.25, 0.25, 0.25})).item() ==
          doctest::Approx(std::log(4.0)).epsilon(1e-12));
    CHECK(entropy(vec({1.0, 0.0, 0.0})).item() == doctest::Approx(0.0));
    // hand evaluation of -sum p ln p
    const double expect = -(0.5 * std::log(0.5) + 2 * 0.25 * std::log(0.25));
    CHECK(entropy(vec({0.5, 0.25, 0.25})).item() == doctest::Approx(expect).epsilon(1e-12));
    CHECK(entropy(vec({0.5, 0.25, 0.25})).item() == doctest::Approx(1.039721).epsilon(1e-6));

    CHECK_THROWS_AS(entropy(vec({0.5, 0.6})), ContractError);
    CHECK_THROWS_AS(entropy(vec({1.5, -0.5})), ContractError);
}

TEST_CASE("energy values, homogeneity, and shift rule") {
    CHECK(energy(vec({0, 0, 0, 0}), 1.0).item() ==
          doctest::Approx(-std::log(4.0)).epsilon(1e-12));
    // direct scalar oracle: -T log sum exp(f/T)
    CHECK(energy(vec({1, 0}), 1.0).item() ==
          doctest::Approx(-std::log(std::exp(1.0) + 1.0)).epsilon(1e-12));
    CHECK(energy(vec({1, 0}), 1.0).item() == doctest::Approx(-1.313262).epsilon(1e-6));

    Rng rng(derive_seed(1, "energy_props"));
    for (int trial = 0; trial < 20; ++trial) {
        const auto f = rng.normal_vec(5);
        const double T = 0.25 + 2.0 * rng.uniform();
        const double k = 0.5 + 3.0 * rng.uniform();
        const double c = rng.normal() * 3.0;
        std::vector<double> kf = f, fc = f;
        for (auto& x : kf) x *= k;
        for (auto& x : fc) x += c;
        const double e = energy(Tensor::from({5}, std::vector<double>(f)), T).item();
        // homogeneity: energy(k f, k T) = k energy(f, T)
        CHECK(energy(Tensor::from({5}, std::move(kf)), k * T).item() ==
              doctest::Approx(k * e).epsilon(1e-9));
        // shift: energy(f + c, T) = energy(f, T) - c
        CHECK(energy(Tensor::from({5}, std::move(fc)), T).item() ==
              doctest::Approx(e - c).epsilon(1e-9));
    }
}

TEST_CASE("epistemic, aleatoric, total hand cases") {
    // collapsed heads: all rows equal
    CHECK(epistemic(rows(3, 2, {0.7, 0.3, 0.7, 0.3, 0.7, 0.3})).item() ==
          doctest::Approx(0.0).epsilon(1e-12));
    // maximal disagreement: rows [1,0] and [0,1]
    const Tensor disagree = rows(2, 2, {1, 0, 0, 1});
    CHECK(epistemic(disagree).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(aleatoric(disagree).item() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(total(disagree).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    // all rows uniform
    const Tensor uniform = rows(2, 2, {0.5, 0.5, 0.5, 0.5});
    CHECK(epistemic(uniform).item() == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(aleatoric(uniform).item() == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    // mixed rows: mean of entropies
    const double expect = 0.5 * (-(0.5 * std::log(0.5)) * 2.0);
    CHECK(aleatoric(rows(2, 2, {0.5, 0.5, 1.0, 0.0})).item() ==
          doctest::Approx(expect).epsilon(1e-12));
    CHECK(aleatoric(rows(2, 2, {0.5, 0.5, 1.0, 0.0})).item() ==
          doctest::Approx(0.346574).epsilon(1e-6));
    // single head: total equals that head's entropy
    CHECK(total(rows(1, 3, {0.2, 0.3, 0.5})).item() ==
          doctest::Approx(entropy(vec({0.2, 0.3, 0.5})).item()).epsilon(1e-12));
}

TEST_CASE("decomposition identity and mutual-information bound on random draws") {
    Rng rng(derive_seed(9, "decomp"));
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t K = 2 + trial % 4;
        const std::size_t C = 2 + trial % 5;
        std::vector<double> v(K * C);
        for (std::size_t k = 0; k < K; ++k) {
            double sum = 0.0;
            for (std::size_t c = 0; c < C; ++c) {
                v[k * C + c] = -std::log(rng.uniform() + 1e-12);
                sum += v[k * C + c];
            }
            for (std::size_t c = 0; c < C; ++c) v[k * C + c] /= sum;
        }
        const Tensor hp = rows(K, C, std::move(v));
        const double e = epistemic(hp).item();
        const double a = aleatoric(hp).item();
        const double t = total(hp).item();
        CHECK(e >= -1e-12);
        CHECK(a >= -1e-12);
        CHECK(std::abs(t - (e + a)) < 1e-12);
        CHECK(e <= std::log(static_cast<double>(K)) + 1e-12);
    }
}

TEST_CASE("signal dispatch and gradients w.r.t. the input") {
    ClassifierConfig cfg;
    cfg.d_x = 2;
    cfg.d_model = 12;
    cfg.layers = 2;
    cfg.C = 4;
    cfg.K = 3;
    const ClassifierModel m(cfg, 77);

    // uniform-logit model: entropy = ln C
    ClassifierModel flat(cfg, 78);
    std::fill(flat.base_head_.W.mutable_values().begin(),
              flat.base_head_.W.mutable_values().end(), 0.0);
    std::fill(flat.base_head_.b.mutable_values().begin(),
              flat.base_head_.b.mutable_values().end(), 0.0);
    SignalConfig entropy_cfg{SignalKind::Entropy, 1.0, HeadSelection::BaseHead};
    CHECK(signal_value(flat, {0.3, -0.7}, entropy_cfg) ==
          doctest::Approx(std::log(4.0)).epsilon(1e-12));

    for (SignalKind kind : {SignalKind::Entropy, SignalKind::Energy, SignalKind::Epistemic,
                            SignalKind::Aleatoric, SignalKind::Total}) {
        SignalConfig scfg;
        scfg.kind = kind;
        scfg.temperature = 1.3;
        auto build = [&](const Tensor& x) { return signal(m, x, scfg); };
        const std::vector<double> x = {0.4, -0.9};
        const auto ad = autodiff_grad(build, x, {2});
        const auto fd = central_diff(
            [&](const std::vector<double>& v) { return eval_scalar(build, v, {2}); }, x);
        CHECK(grads_match(ad, fd, 1e-5));
    }

    ClassifierConfig headless = cfg;
    headless.K = 0;
    const ClassifierModel no_heads(headless, 5);
    SignalConfig epi{SignalKind::Epistemic, 1.0, HeadSelection::EpistemicHeads};
    CHECK_THROWS_AS(signal(no_heads, Tensor::from({2}, {0.0, 0.0}), epi), ConfigError);
}

TEST_CASE("quantile hardness") {
    SUBCASE("all correct") {
        std::vector<double> s{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
        std::vector<bool> correct(10, true);
        const auto [below, above] = quantile_hardness(s, correct, 0.9);
        CHECK(below == 1.0);
        CHECK(above == 1.0);
    }
    SUBCASE("perfect ranking: errors carry the top decile of signal") {
        std::vector<double> s;
        std::vector<bool> correct;
        for (int i = 0; i < 100; ++i) {
            s.push_back(static_cast<double>(i));
            correct.push_back(i < 90);
        }
        const auto [below, above] = quantile_hardness(s, correct, 0.9);
        CHECK(below == 1.0);
        CHECK(above == 0.0);
    }
    SUBCASE("random signals leave both sides statistically equal") {
        Rng rng(derive_seed(31, "qh_perm"));
        const std::size_t n = 4000;
        std::vector<double> s(n);
        std::vector<bool> correct(n);
        std::size_t n_correct = 0;
        for (std::size_t i = 0; i < n; ++i) {
            s[i] = rng.normal();
            correct[i] = rng.uniform() < 0.8;
            n_correct += correct[i] ? 1 : 0;
        }
        const auto [below, above] = quantile_hardness(s, correct, 0.9);
        const double p = static_cast<double>(n_correct) / static_cast<double>(n);
        const double se =
            std::sqrt(p * (1 - p) * (1.0 / (0.9 * n) + 1.0 / (0.1 * n)));
        CHECK(std::abs(below - above) < 3.0 * se);
    }
    SUBCASE("contract checks") {
        CHECK_THROWS_AS(quantile_hardness({1, 2}, {true}, 0.5), DimensionError);
        CHECK_THROWS_AS(quantile_hardness({1, 2}, {true, false}, 1.0), ContractError);
    }
}

TEST_CASE("detection auroc") {
    CHECK(detection_auroc({1, 2, 3, 4}, {false, false, true, true}) == doctest::Approx(1.0));
    CHECK(detection_auroc({5, 5, 5, 5}, {false, true, false, true}) == doctest::Approx(0.5));
    // exhaustive pair count on a hand case with one inversion
    // pairs: (3 vs 1) win, (3 vs 4) loss, (2 vs 1) win, (2 vs 4) loss -> 0.5
    CHECK(detection_auroc({1, 3, 2, 4}, {false, true, true, false}) == doctest::Approx(0.5));
    CHECK_THROWS_AS(detection_auroc({1, 2}, {true, true}), ContractError);

    // agreement with the O(P*N) definition on random data
    Rng rng(derive_seed(4, "auroc_pairs"));
    for (int trial = 0; trial < 10; ++trial) {
        std::vector<double> s(60);
        std::vector<bool> pos(60);
        for (std::size_t i = 0; i < s.size(); ++i) {
            s[i] = std::round(rng.normal() * 3.0) / 3.0;  // force ties
            pos[i] = rng.uniform() < 0.4;
        }
        if (std::find(pos.begin(), pos.end(), true) == pos.end()) pos[0] = true;
        if (std::find(pos.begin(), pos.end(), false) == pos.end()) pos[1] = false;
        double wins = 0.0;
        std::size_t np = 0, nn = 0;
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (!pos[i]) continue;
            ++np;
            for (std::size_t j = 0; j < s.size(); ++j) {
                if (pos[j]) continue;
                if (s[i] > s[j]) wins += 1.0;
                if (s[i] == s[j]) wins += 0.5;
            }
        }
        nn = s.size() - np;
        const double brute = wins / (static_cast<double>(np) * static_cast<double>(nn));
        CHECK(detection_auroc(s, pos) == doctest::Approx(brute).epsilon(1e-12));
    }
}

TEST_CASE("signal report rows and csv export") {
    ClassifierConfig cfg;
    cfg.d_x = 2;
    cfg.d_model = 8;
    cfg.layers = 1;
    cfg.C = 3;
    cfg.K = 2;
    const ClassifierModel m(cfg, 3);

    LongtailDataset ds;
    ds.class_counts = {120, 30, 6};
    ds = split_many_medium_few(std::move(ds));
    Rng rng(derive_seed(8, "report"));
    for (std::size_t i = 0; i < 30; ++i) {
        LabeledPoint p;
        p.features = {rng.normal(), rng.normal()};
        p.label = i % 3;
        ds.points.push_back(p);
    }
    const SignalConfig scfg{SignalKind::Epistemic, 1.0, HeadSelection::EpistemicHeads};
    const auto rep = compute_signal_report(m, ds, scfg);
    CHECK(rep.rows.size() == 30);
    CHECK(rep.rare_auroc.has_value());
    CHECK(rep.q10 <= rep.q50);
    CHECK(rep.q50 <= rep.q90);
    save_signal_report(rep, "/tmp/ltf_signal_report.csv");
}
