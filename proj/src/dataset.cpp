#include "ltf/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "ltf/csv.hpp"
#include "ltf/error.hpp"
#include "ltf/rng.hpp"

namespace ltf {

using nlohmann::json;

const char* split_name(Split s) {
    switch (s) {
        case Split::Many: return "Many";
        case Split::Medium: return "Medium";
        case Split::Few: return "Few";
    }
    return "?";
}

Split split_from_name(const std::string& s, std::size_t line) {
    if (s == "Many") return Split::Many;
    if (s == "Medium") return Split::Medium;
    if (s == "Few") return Split::Few;
    throw ParseError("unknown split tag '" + s + "'", line);
}

Split split_for_count(std::size_t count) {
    if (count < 5) throw SpecError("class count " + std::to_string(count) + " below the Few regime (>= 5)");
    if (count <= 19) return Split::Few;
    if (count <= 99) return Split::Medium;
    return Split::Many;
}

CountLaw CountLaw::power_law(double exponent, std::size_t base_count) {
    CountLaw law;
    law.kind = Kind::PowerLaw;
    law.exponent = exponent;
    law.base_count = base_count;
    return law;
}

CountLaw CountLaw::explicit_list(std::vector<std::size_t> counts) {
    CountLaw law;
    law.kind = Kind::Explicit;
    law.explicit_counts = std::move(counts);
    return law;
}

std::vector<std::size_t> CountLaw::counts_for(std::size_t C) const {
    std::vector<std::size_t> counts(C);
    if (kind == Kind::Explicit) {
        if (explicit_counts.size() != C) {
            throw SpecError("explicit count list length does not match class count");
        }
        counts = explicit_counts;
    } else {
        if (base_count == 0) throw SpecError("power law base count must be positive");
        for (std::size_t c = 0; c < C; ++c) {
            const double v = static_cast<double>(base_count) *
                             std::pow(static_cast<double>(c + 1), -exponent);
            counts[c] = static_cast<std::size_t>(std::llround(v));
        }
    }
    for (auto n : counts) {
        if (n < 1) throw SpecError("count law yields an empty class");
    }
    return counts;
}

std::vector<double> cholesky_lower(const std::vector<double>& m, std::size_t d) {
    if (m.size() != d * d) throw SpecError("covariance matrix has wrong size");
    std::vector<double> L(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
            double s = m[i * d + j];
            for (std::size_t k = 0; k < j; ++k) s -= L[i * d + k] * L[j * d + k];
            if (i == j) {
                if (s <= 0.0) throw SpecError("covariance matrix is not positive-definite");
                L[i * d + i] = std::sqrt(s);
            } else {
                L[i * d + j] = s / L[j * d + j];
            }
        }
    }
    return L;
}

void MixtureSpec::validate() const {
    if (C == 0) throw SpecError("class count must be positive");
    if (dim == 0) throw SpecError("feature dimension must be positive");
    if (components_per_class == 0) throw SpecError("components_per_class must be >= 1");
    if (components.size() != C) throw SpecError("component table must have one row per class");
    for (const auto& row : components) {
        if (row.size() != components_per_class) {
            throw SpecError("component row length must equal components_per_class");
        }
        for (const auto& g : row) {
            if (g.mean.size() != dim) throw SpecError("component mean has wrong dimension");
            for (double v : g.mean) {
                if (!std::isfinite(v)) throw SpecError("component mean not finite");
            }
            // symmetry then SPD via Cholesky
            if (g.cov.size() != dim * dim) throw SpecError("covariance has wrong size");
            for (std::size_t i = 0; i < dim; ++i) {
                for (std::size_t j = 0; j < i; ++j) {
                    if (std::abs(g.cov[i * dim + j] - g.cov[j * dim + i]) > 1e-12) {
                        throw SpecError("covariance matrix is not symmetric");
                    }
                }
            }
            cholesky_lower(g.cov, dim);
        }
    }
    count_law.counts_for(C);
}

LongtailDataset generate_longtail_mixture(const MixtureSpec& spec, std::uint64_t seed) {
    spec.validate();
    const auto counts = spec.count_law.counts_for(spec.C);

    // Pre-factor covariances once.
    std::vector<std::vector<std::vector<double>>> chol(spec.C);
    for (std::size_t c = 0; c < spec.C; ++c) {
        for (const auto& g : spec.components[c]) {
            chol[c].push_back(cholesky_lower(g.cov, spec.dim));
        }
    }

    Rng rng(derive_seed(seed, "generate_longtail_mixture"));
    LongtailDataset ds;
    ds.generator_spec = spec;
    ds.seed = seed;
    ds.class_counts = counts;
    for (std::size_t c = 0; c < spec.C; ++c) {
        for (std::size_t i = 0; i < counts[c]; ++i) {
            const auto k = static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(spec.components_per_class) - 1));
            const auto& g = spec.components[c][k];
            const auto& L = chol[c][k];
            const auto z = rng.normal_vec(spec.dim);
            LabeledPoint p;
            p.label = c;
            p.features.assign(spec.dim, 0.0);
            for (std::size_t r = 0; r < spec.dim; ++r) {
                double v = g.mean[r];
                for (std::size_t s = 0; s <= r; ++s) v += L[r * spec.dim + s] * z[s];
                p.features[r] = v;
            }
            ds.points.push_back(std::move(p));
        }
    }
    return split_many_medium_few(std::move(ds));
}

LongtailDataset split_many_medium_few(LongtailDataset ds) {
    if (ds.class_counts.empty()) throw SpecError("class counts not populated");
    ds.split_of_class.resize(ds.class_counts.size());
    for (std::size_t c = 0; c < ds.class_counts.size(); ++c) {
        ds.split_of_class[c] = split_for_count(ds.class_counts[c]);
    }
    return ds;
}

std::pair<LongtailDataset, LongtailDataset> balanced_holdout(
    const LongtailDataset& ds, std::size_t per_class, std::uint64_t seed) {
    const std::size_t C = ds.num_classes();
    for (std::size_t c = 0; c < C; ++c) {
        if (ds.class_counts[c] < per_class + 5) {
            throw SplitError("class " + std::to_string(c) +
                             " cannot give " + std::to_string(per_class) +
                             " validation points and keep >= 5 in train");
        }
    }

    Rng rng(derive_seed(seed, "balanced_holdout"));
    std::vector<bool> in_val(ds.points.size(), false);
    for (std::size_t c = 0; c < C; ++c) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < ds.points.size(); ++i) {
            if (ds.points[i].label == c) idx.push_back(i);
        }
        rng.shuffle(idx);
        for (std::size_t i = 0; i < per_class; ++i) in_val[idx[i]] = true;
    }

    LongtailDataset train, val;
    train.generator_spec = val.generator_spec = ds.generator_spec;
    train.seed = val.seed = ds.seed;
    train.class_counts.assign(C, 0);
    val.class_counts.assign(C, 0);
    for (std::size_t i = 0; i < ds.points.size(); ++i) {
        auto& dst = in_val[i] ? val : train;
        dst.class_counts[ds.points[i].label]++;
        dst.points.push_back(ds.points[i]);
    }

    // Regime tags come from training frequency.
    train = split_many_medium_few(std::move(train));
    val.split_of_class = train.split_of_class;
    return {std::move(train), std::move(val)};
}

// ---- persistence -----------------------------------------------------------

namespace {

json count_law_to_json(const CountLaw& law) {
    json j;
    if (law.kind == CountLaw::Kind::PowerLaw) {
        j["kind"] = "power_law";
        j["exponent"] = law.exponent;
        j["base_count"] = law.base_count;
    } else {
        j["kind"] = "explicit";
        j["counts"] = law.explicit_counts;
    }
    return j;
}

CountLaw count_law_from_json(const json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "power_law") {
        return CountLaw::power_law(j.at("exponent").get<double>(),
                                   j.at("base_count").get<std::size_t>());
    }
    if (kind == "explicit") {
        return CountLaw::explicit_list(j.at("counts").get<std::vector<std::size_t>>());
    }
    throw IoError("unknown count law kind '" + kind + "'");
}

}  // namespace

void save_dataset(const LongtailDataset& ds, const std::string& csv_path,
                  const std::string& sidecar_path) {
    const std::size_t d = ds.dim();
    CsvWriter w(csv_path);
    std::vector<std::string> header;
    for (std::size_t i = 0; i < d; ++i) header.push_back("feature_" + std::to_string(i));
    header.push_back("label");
    header.push_back("split");
    w.row(header);
    for (const auto& p : ds.points) {
        std::vector<std::string> row;
        for (double v : p.features) row.push_back(fmt_double(v));
        row.push_back(std::to_string(p.label));
        row.push_back(split_name(ds.split_of_class[p.label]));
        w.row(row);
    }
    w.close();

    json side;
    side["seed"] = ds.seed;
    side["class_counts"] = ds.class_counts;
    std::vector<std::string> splits;
    for (auto s : ds.split_of_class) splits.emplace_back(split_name(s));
    side["splits"] = splits;
    json spec;
    spec["C"] = ds.generator_spec.C;
    spec["dim"] = ds.generator_spec.dim;
    spec["components_per_class"] = ds.generator_spec.components_per_class;
    spec["count_law"] = count_law_to_json(ds.generator_spec.count_law);
    json comps = json::array();
    for (const auto& row : ds.generator_spec.components) {
        json jr = json::array();
        for (const auto& g : row) jr.push_back({{"mean", g.mean}, {"cov", g.cov}});
        comps.push_back(jr);
    }
    spec["components"] = comps;
    side["spec"] = spec;

    std::ofstream os(sidecar_path);
    if (!os) throw IoError("cannot open for write: " + sidecar_path);
    os << side.dump(2) << "\n";
}

LongtailDataset load_dataset(const std::string& csv_path,
                             const std::string& sidecar_path) {
    std::ifstream is(sidecar_path);
    if (!is) throw IoError("cannot open for read: " + sidecar_path);
    json side;
    try {
        is >> side;
    } catch (const std::exception& e) {
        throw ParseError(std::string("sidecar json: ") + e.what(), 0);
    }

    LongtailDataset ds;
    ds.seed = side.at("seed").get<std::uint64_t>();
    ds.class_counts = side.at("class_counts").get<std::vector<std::size_t>>();
    for (const auto& s : side.at("splits").get<std::vector<std::string>>()) {
        ds.split_of_class.push_back(split_from_name(s));
    }
    const auto& spec = side.at("spec");
    ds.generator_spec.C = spec.at("C").get<std::size_t>();
    ds.generator_spec.dim = spec.at("dim").get<std::size_t>();
    ds.generator_spec.components_per_class = spec.at("components_per_class").get<std::size_t>();
    ds.generator_spec.count_law = count_law_from_json(spec.at("count_law"));
    for (const auto& jr : spec.at("components")) {
        std::vector<GaussianComponent> row;
        for (const auto& jg : jr) {
            GaussianComponent g;
            g.mean = jg.at("mean").get<std::vector<double>>();
            g.cov = jg.at("cov").get<std::vector<double>>();
            row.push_back(std::move(g));
        }
        ds.generator_spec.components.push_back(std::move(row));
    }

    const std::size_t C = ds.class_counts.size();
    const CsvFile csv = read_csv(csv_path);
    const std::size_t d = csv.header.size() - 2;
    if (csv.header.size() < 3 || csv.header[d] != "label" || csv.header[d + 1] != "split") {
        throw ParseError("unexpected point csv header", 1);
    }
    std::vector<std::size_t> seen(C, 0);
    for (std::size_t r = 0; r < csv.rows.size(); ++r) {
        const auto& row = csv.rows[r];
        const std::size_t line = csv.row_lines[r];
        if (row.size() != d + 2) throw ParseError("wrong column count", line);
        LabeledPoint p;
        for (std::size_t i = 0; i < d; ++i) {
            const double v = parse_double(row[i], line);
            if (!std::isfinite(v)) throw ParseError("non-finite feature", line);
            p.features.push_back(v);
        }
        const long label = parse_long(row[d], line);
        if (label < 0 || static_cast<std::size_t>(label) >= C) {
            throw ParseError("label " + std::to_string(label) +
                                 " outside [0, " + std::to_string(C) + ")",
                             line);
        }
        p.label = static_cast<std::size_t>(label);
        split_from_name(row[d + 1], line);  // validated, value derived from sidecar
        seen[p.label]++;
        ds.points.push_back(std::move(p));
    }
    for (std::size_t c = 0; c < C; ++c) {
        if (seen[c] != ds.class_counts[c]) {
            throw ParseError("class " + std::to_string(c) + " count mismatch with sidecar", 0);
        }
    }
    return ds;
}

// ---- densities ---------------------------------------------------------------

double gaussian_pdf(const std::vector<double>& x, const GaussianComponent& g) {
    const std::size_t d = g.mean.size();
    const auto L = cholesky_lower(g.cov, d);
    // Solve L y = (x - mean); logdet = 2 sum log diag(L).
    std::vector<double> y(d);
    double logdet = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        double s = x[i] - g.mean[i];
        for (std::size_t j = 0; j < i; ++j) s -= L[i * d + j] * y[j];
        y[i] = s / L[i * d + i];
        logdet += 2.0 * std::log(L[i * d + i]);
    }
    double q = 0.0;
    for (double v : y) q += v * v;
    const double log_pdf =
        -0.5 * (q + logdet + static_cast<double>(d) * std::log(2.0 * 3.14159265358979323846));
    return std::exp(log_pdf);
}

double class_density(const MixtureSpec& spec, std::size_t cls, const std::vector<double>& x) {
    double p = 0.0;
    for (const auto& g : spec.components[cls]) p += gaussian_pdf(x, g);
    return p / static_cast<double>(spec.components[cls].size());
}

std::size_t densest_class(const MixtureSpec& spec, const std::vector<double>& x) {
    std::size_t best = 0;
    double best_p = -1.0;
    for (std::size_t c = 0; c < spec.C; ++c) {
        const double p = class_density(spec, c, x);
        if (p > best_p) {
            best_p = p;
            best = c;
        }
    }
    return best;
}

// ---- synthetic pool ----------------------------------------------------------

void SyntheticPool::merge(const std::vector<SyntheticPoint>& more) {
    points.insert(points.end(), more.begin(), more.end());
}

void save_pool(const SyntheticPool& pool, const std::string& csv_path) {
    const std::size_t d = pool.points.empty() ? 0 : pool.points[0].point.features.size();
    CsvWriter w(csv_path);
    std::vector<std::string> header;
    for (std::size_t i = 0; i < d; ++i) header.push_back("feature_" + std::to_string(i));
    header.insert(header.end(), {"label", "gen_epoch", "guidance_w", "signal_kind",
                                 "signal_value", "checkpoint_id"});
    w.row(header);
    for (const auto& sp : pool.points) {
        std::vector<std::string> row;
        for (double v : sp.point.features) row.push_back(fmt_double(v));
        row.push_back(std::to_string(sp.point.label));
        row.push_back(std::to_string(sp.prov.gen_epoch));
        row.push_back(fmt_double(sp.prov.guidance_w));
        row.push_back(sp.prov.signal_kind);
        row.push_back(fmt_double(sp.prov.signal_value));
        row.push_back(sp.prov.checkpoint_id);
        w.row(row);
    }
    w.close();
}

SyntheticPool load_pool(const std::string& csv_path) {
    const CsvFile csv = read_csv(csv_path);
    if (csv.header.size() < 6) throw ParseError("unexpected pool csv header", 1);
    const std::size_t d = csv.header.size() - 6;
    SyntheticPool pool;
    for (std::size_t r = 0; r < csv.rows.size(); ++r) {
        const auto& row = csv.rows[r];
        const std::size_t line = csv.row_lines[r];
        if (row.size() != d + 6) throw ParseError("wrong column count", line);
        SyntheticPoint sp;
        for (std::size_t i = 0; i < d; ++i) {
            sp.point.features.push_back(parse_double(row[i], line));
        }
        sp.point.label = static_cast<std::size_t>(parse_long(row[d], line));
        sp.prov.gen_epoch = static_cast<std::size_t>(parse_long(row[d + 1], line));
        sp.prov.guidance_w = parse_double(row[d + 2], line);
        sp.prov.signal_kind = row[d + 3];
        sp.prov.signal_value = parse_double(row[d + 4], line);
        sp.prov.checkpoint_id = row[d + 5];
        pool.points.push_back(std::move(sp));
    }
    return pool;
}

}  // namespace ltf
