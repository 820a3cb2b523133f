#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace ltf {

// Class-frequency regime of a class, by its training-set count:
// Few 5-19, Medium 20-99, Many >= 100. Counts below 5 are rejected.
enum class Split { Many, Medium, Few };

const char* split_name(Split s);
Split split_from_name(const std::string& s, std::size_t line = 0);
Split split_for_count(std::size_t count);

struct LabeledPoint {
    std::vector<double> features;
    std::size_t label = 0;
};

struct GaussianComponent {
    std::vector<double> mean;
    std::vector<double> cov;  // row-major d x d, SPD
};

struct CountLaw {
    enum class Kind { PowerLaw, Explicit };
    Kind kind = Kind::Explicit;
    // PowerLaw: count of class c = round(base_count * (c+1)^-exponent).
    double exponent = 0.0;
    std::size_t base_count = 0;
    std::vector<std::size_t> explicit_counts;

    static CountLaw power_law(double exponent, std::size_t base_count);
    static CountLaw explicit_list(std::vector<std::size_t> counts);
    std::vector<std::size_t> counts_for(std::size_t C) const;
};

struct MixtureSpec {
    std::size_t C = 0;
    std::size_t dim = 2;
    std::size_t components_per_class = 1;
    // components[c][k]
    std::vector<std::vector<GaussianComponent>> components;
    CountLaw count_law;

    void validate() const;  // SpecError on non-SPD covariance etc.
};

struct LongtailDataset {
    std::vector<LabeledPoint> points;
    std::vector<std::size_t> class_counts;
    std::vector<Split> split_of_class;
    MixtureSpec generator_spec;
    std::uint64_t seed = 0;

    std::size_t num_classes() const { return class_counts.size(); }
    std::size_t dim() const { return points.empty() ? 0 : points[0].features.size(); }
    std::size_t size() const { return points.size(); }
};

// Pure function of (spec, seed); class counts follow the law exactly.
LongtailDataset generate_longtail_mixture(const MixtureSpec& spec, std::uint64_t seed);

// Tags every class by its own count; idempotent. SpecError if any count < 5.
LongtailDataset split_many_medium_few(LongtailDataset ds);

// Exactly per_class points of every class go to val; both halves are
// re-tagged by the resulting train counts (regime is a training-frequency
// property). Deterministic in seed; train preserves source order.
std::pair<LongtailDataset, LongtailDataset> balanced_holdout(
    const LongtailDataset& ds, std::size_t per_class, std::uint64_t seed);

// CSV (feature_0..feature_{d-1},label,split) + JSON sidecar.
void save_dataset(const LongtailDataset& ds, const std::string& csv_path,
                  const std::string& sidecar_path);
LongtailDataset load_dataset(const std::string& csv_path,
                             const std::string& sidecar_path);

// Lower Cholesky factor of a d x d SPD matrix; SpecError if not SPD.
std::vector<double> cholesky_lower(const std::vector<double>& m, std::size_t d);

// Mixture density helpers (test oracles and class-region assignment).
double gaussian_pdf(const std::vector<double>& x, const GaussianComponent& g);
double class_density(const MixtureSpec& spec, std::size_t cls, const std::vector<double>& x);
std::size_t densest_class(const MixtureSpec& spec, const std::vector<double>& x);

// ---- synthetic pool ---------------------------------------------------------

struct Provenance {
    std::size_t gen_epoch = 0;
    double guidance_w = 0.0;
    std::string signal_kind;
    double signal_value = 0.0;
    std::string checkpoint_id;
};

struct SyntheticPoint {
    LabeledPoint point;
    Provenance prov;
};

struct SyntheticPool {
    std::vector<SyntheticPoint> points;

    std::size_t size() const { return points.size(); }
    // Append-only; duplicates allowed (they carry distinct provenance).
    void merge(const std::vector<SyntheticPoint>& more);
};

void save_pool(const SyntheticPool& pool, const std::string& csv_path);
SyntheticPool load_pool(const std::string& csv_path);

}  // namespace ltf
