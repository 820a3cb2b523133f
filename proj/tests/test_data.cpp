#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "ltf/benchmark.hpp"
#include "ltf/dataset.hpp"
#include "ltf/error.hpp"
#include "ltf/rng.hpp"

using namespace ltf;

namespace {
MixtureSpec two_class_spec() {
    MixtureSpec spec;
    spec.C = 2;
    spec.dim = 2;
    spec.components_per_class = 1;
    GaussianComponent a, b;
    a.mean = {-2.0, 0.0};
    a.cov = {0.5, 0.0, 0.0, 0.5};
    b.mean = {2.0, 0.0};
    b.cov = {0.5, 0.0, 0.0, 0.5};
    spec.components = {{a}, {b}};
    spec.count_law = CountLaw::explicit_list({40, 40});
    return spec;
}
}  // namespace

TEST_CASE("explicit counts are hit exactly") {
    MixtureSpec spec;
    spec.C = 3;
    spec.dim = 2;
    spec.components_per_class = 1;
    GaussianComponent g;
    g.mean = {0.0, 0.0};
    g.cov = {1.0, 0.0, 0.0, 1.0};
    spec.components = {{g}, {g}, {g}};
    spec.count_law = CountLaw::explicit_list({1200, 60, 10});
    const auto ds = generate_longtail_mixture(spec, 9);
    CHECK(ds.class_counts == std::vector<std::size_t>{1200, 60, 10});
    CHECK(ds.points.size() == 1270);
    CHECK(ds.split_of_class[0] == Split::Many);
    CHECK(ds.split_of_class[1] == Split::Medium);
    CHECK(ds.split_of_class[2] == Split::Few);
}

TEST_CASE("flat power law gives equal counts") {
    MixtureSpec spec = two_class_spec();
    spec.C = 5;
    GaussianComponent g;
    g.mean = {0.0, 0.0};
    g.cov = {1.0, 0.0, 0.0, 1.0};
    spec.components = {{g}, {g}, {g}, {g}, {g}};
    spec.count_law = CountLaw::power_law(0.0, 100);
    const auto ds = generate_longtail_mixture(spec, 1);
    for (auto c : ds.class_counts) CHECK(c == 100);
}

TEST_CASE("benchmark power law reproduces the regime boundaries") {
    const auto counts = default_benchmark_spec().count_law.counts_for(10);
    CHECK(counts.front() == 1200);
    CHECK(counts.back() == 8);
    // All three regimes are populated.
    std::size_t many = 0, medium = 0, few = 0;
    for (auto c : counts) {
        switch (split_for_count(c)) {
            case Split::Many: ++many; break;
            case Split::Medium: ++medium; break;
            case Split::Few: ++few; break;
        }
    }
    CHECK(many >= 2);
    CHECK(medium >= 2);
    CHECK(few >= 2);
}

TEST_CASE("split thresholds follow the regime table") {
    CHECK(split_for_count(5) == Split::Few);
    CHECK(split_for_count(19) == Split::Few);
    CHECK(split_for_count(20) == Split::Medium);
    CHECK(split_for_count(99) == Split::Medium);
    CHECK(split_for_count(100) == Split::Many);
    CHECK(split_for_count(1200) == Split::Many);
    CHECK_THROWS_AS(split_for_count(4), SpecError);

    // idempotent tagging
    auto ds = generate_longtail_mixture(two_class_spec(), 4);
    const auto tags = ds.split_of_class;
    ds = split_many_medium_few(std::move(ds));
    CHECK(ds.split_of_class == tags);
}

TEST_CASE("generation is a pure function of spec and seed") {
    const auto a = generate_longtail_mixture(two_class_spec(), 42);
    const auto b = generate_longtail_mixture(two_class_spec(), 42);
    const auto c = generate_longtail_mixture(two_class_spec(), 43);
    REQUIRE(a.points.size() == b.points.size());
    bool identical = true;
    for (std::size_t i = 0; i < a.points.size(); ++i) {
        if (a.points[i].features != b.points[i].features) identical = false;
    }
    CHECK(identical);
    bool differs = false;
    for (std::size_t i = 0; i < a.points.size(); ++i) {
        if (a.points[i].features != c.points[i].features) differs = true;
    }
    CHECK(differs);
}

TEST_CASE("non-SPD covariance is a spec error") {
    MixtureSpec spec = two_class_spec();
    spec.components[0][0].cov = {1.0, 2.0, 2.0, 1.0};  // indefinite
    CHECK_THROWS_AS(generate_longtail_mixture(spec, 1), SpecError);
    spec.components[0][0].cov = {1.0, 0.5, 0.2, 1.0};  // asymmetric
    CHECK_THROWS_AS(generate_longtail_mixture(spec, 1), SpecError);
}

TEST_CASE("balanced holdout invariants") {
    const auto ds = generate_longtail_mixture(two_class_spec(), 17);

    SUBCASE("per_class zero returns the dataset unchanged") {
        const auto [train, val] = balanced_holdout(ds, 0, 5);
        CHECK(val.points.empty());
        REQUIRE(train.points.size() == ds.points.size());
        for (std::size_t i = 0; i < ds.points.size(); ++i) {
            CHECK(train.points[i].features == ds.points[i].features);
        }
    }

    SUBCASE("sizes and disjoint union over 100 seeds") {
        for (std::uint64_t seed = 0; seed < 100; ++seed) {
            const auto [train, val] = balanced_holdout(ds, 10, seed);
            CHECK(val.points.size() == 20);  // C=2, 10 each
            CHECK(train.points.size() + val.points.size() == ds.points.size());
            // multiset equality via sorted feature tuples
            auto key = [](const LabeledPoint& p) {
                return std::make_pair(p.label, p.features);
            };
            std::multiset<std::pair<std::size_t, std::vector<double>>> orig, got;
            for (const auto& p : ds.points) orig.insert(key(p));
            for (const auto& p : train.points) got.insert(key(p));
            for (const auto& p : val.points) got.insert(key(p));
            CHECK(orig == got);
        }
    }

    SUBCASE("insufficient points is a split error") {
        CHECK_THROWS_AS(balanced_holdout(ds, 36, 1), SplitError);
    }
}

TEST_CASE("dataset round trip is bit-identical") {
    const auto ds = generate_longtail_mixture(two_class_spec(), 99);
    const std::string dir = "/tmp/ltf_data_test";
    std::filesystem::create_directories(dir);
    save_dataset(ds, dir + "/points.csv", dir + "/side.json");
    const auto back = load_dataset(dir + "/points.csv", dir + "/side.json");
    REQUIRE(back.points.size() == ds.points.size());
    for (std::size_t i = 0; i < ds.points.size(); ++i) {
        CHECK(back.points[i].label == ds.points[i].label);
        CHECK(back.points[i].features == ds.points[i].features);  // bitwise via %.17g
    }
    CHECK(back.class_counts == ds.class_counts);
    CHECK(back.split_of_class == ds.split_of_class);
    CHECK(back.seed == ds.seed);
}

TEST_CASE("label outside sidecar class range is a parse error with line info") {
    const std::string dir = "/tmp/ltf_data_test2";
    std::filesystem::create_directories(dir);
    const auto ds = generate_longtail_mixture(two_class_spec(), 3);
    save_dataset(ds, dir + "/points.csv", dir + "/side.json");
    {
        std::ofstream os(dir + "/points.csv", std::ios::app);
        os << "0.0,0.0,7,Few\n";
    }
    try {
        load_dataset(dir + "/points.csv", dir + "/side.json");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line == ds.points.size() + 2);  // header + rows + bad line
    }
}

TEST_CASE("hand-written csv parses to the expected points") {
    const std::string dir = "/tmp/ltf_data_test3";
    std::filesystem::create_directories(dir);
    {
        std::ofstream os(dir + "/points.csv");
        os << "feature_0,feature_1,label,split\n";
        os << "0.5,-1.25,0,Many\n";
        os << "2,3.5,1,Few\n";
        os << "-4.0,0,0,Many\n";
    }
    {
        std::ofstream os(dir + "/side.json");
        os << R"({"seed": 5, "class_counts": [2, 1], "splits": ["Many", "Few"],
                  "spec": {"C": 2, "dim": 2, "components_per_class": 1,
                  "count_law": {"kind": "explicit", "counts": [2, 1]},
                  "components": [[{"mean": [0, 0], "cov": [1, 0, 0, 1]}],
                                 [{"mean": [1, 1], "cov": [1, 0, 0, 1]}]]}})";
    }
    const auto ds = load_dataset(dir + "/points.csv", dir + "/side.json");
    REQUIRE(ds.points.size() == 3);
    CHECK(ds.points[0].features == std::vector<double>{0.5, -1.25});
    CHECK(ds.points[0].label == 0);
    CHECK(ds.points[1].features == std::vector<double>{2.0, 3.5});
    CHECK(ds.points[1].label == 1);
    CHECK(ds.points[2].features == std::vector<double>{-4.0, 0.0});
}

TEST_CASE("synthetic pool merge and provenance round trip") {
    SyntheticPool pool;
    pool.merge({});
    CHECK(pool.size() == 0);

    std::vector<SyntheticPoint> batch(3);
    for (std::size_t i = 0; i < 3; ++i) {
        batch[i].point.features = {static_cast<double>(i), 0.125};
        batch[i].point.label = i % 2;
        batch[i].prov = {4, 50.0, "epistemic", 0.25 * static_cast<double>(i), "abcd1234"};
    }
    pool.merge(batch);
    pool.merge(batch);  // duplicates allowed
    CHECK(pool.size() == 6);

    const std::string path = "/tmp/ltf_pool_test.csv";
    save_pool(pool, path);
    const auto back = load_pool(path);
    REQUIRE(back.size() == pool.size());
    for (std::size_t i = 0; i < pool.size(); ++i) {
        CHECK(back.points[i].point.features == pool.points[i].point.features);
        CHECK(back.points[i].prov.gen_epoch == pool.points[i].prov.gen_epoch);
        CHECK(back.points[i].prov.guidance_w == pool.points[i].prov.guidance_w);
        CHECK(back.points[i].prov.signal_kind == pool.points[i].prov.signal_kind);
        CHECK(back.points[i].prov.signal_value == pool.points[i].prov.signal_value);
        CHECK(back.points[i].prov.checkpoint_id == pool.points[i].prov.checkpoint_id);
    }
}

TEST_CASE("default benchmark assembles with regime tags on the balanced val") {
    const Benchmark b = make_default_benchmark(1, 20);
    CHECK(b.train.num_classes() == 10);
    CHECK(b.val.points.size() == 200);
    CHECK(b.val.split_of_class == b.train.split_of_class);
    CHECK(b.train.class_counts.front() == 1200);
    CHECK(b.train.class_counts.back() == 8);
}
