#include "ltf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ltf/csv.hpp"
#include "ltf/error.hpp"
#include "ltf/rng.hpp"

namespace ltf {

FrechetStats frechet_stats(const std::vector<std::vector<double>>& points) {
    if (points.size() < 2) throw ContractError("frechet_stats needs n >= 2");
    const std::size_t n = points.size(), d = points[0].size();
    FrechetStats st;
    st.n = n;
    st.dim = d;
    st.mu.assign(d, 0.0);
    for (const auto& p : points) {
        if (p.size() != d) throw DimensionError("frechet_stats: ragged points");
        for (std::size_t j = 0; j < d; ++j) st.mu[j] += p[j];
    }
    for (auto& v : st.mu) v /= static_cast<double>(n);
    st.sigma.assign(d * d, 0.0);
    for (const auto& p : points) {
        for (std::size_t i = 0; i < d; ++i) {
            const double ci = p[i] - st.mu[i];
            for (std::size_t j = 0; j < d; ++j) {
                st.sigma[i * d + j] += ci * (p[j] - st.mu[j]);
            }
        }
    }
    for (auto& v : st.sigma) v /= static_cast<double>(n - 1);
    return st;
}

std::vector<double> sym_eigenvalues(std::vector<double> m, std::size_t d) {
    // Cyclic Jacobi; destroys m.
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t j = i + 1; j < d; ++j) off += m[i * d + j] * m[i * d + j];
        }
        if (off < 1e-24) break;
        for (std::size_t p = 0; p < d; ++p) {
            for (std::size_t q = p + 1; q < d; ++q) {
                const double apq = m[p * d + q];
                if (std::abs(apq) < 1e-300) continue;
                const double app = m[p * d + p];
                const double aqq = m[q * d + q];
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < d; ++k) {
                    const double akp = m[k * d + p];
                    const double akq = m[k * d + q];
                    m[k * d + p] = c * akp - s * akq;
                    m[k * d + q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < d; ++k) {
                    const double apk = m[p * d + k];
                    const double aqk = m[q * d + k];
                    m[p * d + k] = c * apk - s * aqk;
                    m[q * d + k] = s * apk + c * aqk;
                }
            }
        }
    }
    std::vector<double> ev(d);
    for (std::size_t i = 0; i < d; ++i) ev[i] = m[i * d + i];
    std::sort(ev.begin(), ev.end());
    return ev;
}

namespace {

// Symmetric PSD square root via eigendecomposition with eigenvector recovery.
// For the Frechet trace term we only need Tr sqrt(Sa Sb) =
// Tr sqrt(sqrt(Sa) Sb sqrt(Sa)), and the inner matrix is symmetric.
std::vector<double> sym_sqrt(const std::vector<double>& m, std::size_t d) {
    // Jacobi with accumulated rotations.
    std::vector<double> a = m;
    std::vector<double> v(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) v[i * d + i] = 1.0;
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t j = i + 1; j < d; ++j) off += a[i * d + j] * a[i * d + j];
        }
        if (off < 1e-26) break;
        for (std::size_t p = 0; p < d; ++p) {
            for (std::size_t q = p + 1; q < d; ++q) {
                const double apq = a[p * d + q];
                if (std::abs(apq) < 1e-300) continue;
                const double theta = (a[q * d + q] - a[p * d + p]) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) /
                                 (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (std::size_t k = 0; k < d; ++k) {
                    const double akp = a[k * d + p];
                    const double akq = a[k * d + q];
                    a[k * d + p] = c * akp - s * akq;
                    a[k * d + q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < d; ++k) {
                    const double apk = a[p * d + k];
                    const double aqk = a[q * d + k];
                    a[p * d + k] = c * apk - s * aqk;
                    a[q * d + k] = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < d; ++k) {
                    const double vkp = v[k * d + p];
                    const double vkq = v[k * d + q];
                    v[k * d + p] = c * vkp - s * vkq;
                    v[k * d + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    std::vector<double> lam(d);
    for (std::size_t i = 0; i < d; ++i) {
        double l = a[i * d + i];
        if (l < -1e-8) throw NumericsError("matrix square root of an indefinite matrix");
        lam[i] = std::sqrt(std::max(0.0, l));
    }
    // sqrt = V diag(sqrt(lam)) V^T
    std::vector<double> out(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < d; ++k) s += v[i * d + k] * lam[k] * v[j * d + k];
            out[i * d + j] = s;
        }
    }
    return out;
}

std::vector<double> mat_mul(const std::vector<double>& a, const std::vector<double>& b,
                            std::size_t d) {
    std::vector<double> c(d * d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t k = 0; k < d; ++k) {
            const double av = a[i * d + k];
            for (std::size_t j = 0; j < d; ++j) c[i * d + j] += av * b[k * d + j];
        }
    }
    return c;
}

}  // namespace

double frechet_distance(const FrechetStats& a, const FrechetStats& b) {
    if (a.dim != b.dim) throw DimensionError("frechet_distance: dimension mismatch");
    const std::size_t d = a.dim;
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < i; ++j) {
            if (std::abs(a.sigma[i * d + j] - a.sigma[j * d + i]) > 1e-10 ||
                std::abs(b.sigma[i * d + j] - b.sigma[j * d + i]) > 1e-10) {
                throw ContractError("frechet_distance: covariance not symmetric");
            }
        }
    }
    double mean_term = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        const double diff = a.mu[i] - b.mu[i];
        mean_term += diff * diff;
    }
    double tr_a = 0.0, tr_b = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        tr_a += a.sigma[i * d + i];
        tr_b += b.sigma[i * d + i];
    }
    // Tr sqrt(Sa Sb) via the symmetrized product sqrt(Sa) Sb sqrt(Sa).
    const auto ra = sym_sqrt(a.sigma, d);
    auto inner = mat_mul(mat_mul(ra, b.sigma, d), ra, d);
    // enforce exact symmetry before eigensolving
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = i + 1; j < d; ++j) {
            const double s = 0.5 * (inner[i * d + j] + inner[j * d + i]);
            inner[i * d + j] = inner[j * d + i] = s;
        }
    }
    const auto ev = sym_eigenvalues(std::move(inner), d);
    double tr_sqrt = 0.0;
    for (double l : ev) {
        if (l < -1e-8) throw NumericsError("frechet_distance: product matrix not PSD");
        tr_sqrt += std::sqrt(std::max(0.0, l));
    }
    return mean_term + tr_a + tr_b - 2.0 * tr_sqrt;
}

std::vector<std::size_t> predict_labels(const ClassifierModel& m,
                                        const std::vector<LabeledPoint>& pts) {
    const Tensor logits = m.base_logits_of(points_matrix(pts));
    const std::size_t C = logits.shape()[1];
    const auto v = logits.values();
    std::vector<std::size_t> out(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < C; ++j) {
            if (v[i * C + j] > v[i * C + best]) best = j;
        }
        out[i] = best;
    }
    return out;
}

EvalReport accuracy_by_split(const ClassifierModel& m, const LongtailDataset& val) {
    if (val.split_of_class.empty()) throw ContractError("validation set lacks split tags");
    const auto pred = predict_labels(m, val.points);
    const std::size_t C = val.num_classes();
    EvalReport r;
    r.split_of_class = val.split_of_class;
    r.per_class.assign(C, 0.0);
    r.class_val_counts.assign(C, 0);
    std::vector<std::size_t> correct(C, 0);
    for (std::size_t i = 0; i < val.points.size(); ++i) {
        const auto y = val.points[i].label;
        r.class_val_counts[y]++;
        if (pred[i] == y) correct[y]++;
    }
    std::size_t tot = 0, tot_c = 0;
    std::size_t n_by_split[3] = {0, 0, 0}, c_by_split[3] = {0, 0, 0};
    for (std::size_t c = 0; c < C; ++c) {
        if (r.class_val_counts[c] == 0) continue;
        r.per_class[c] = static_cast<double>(correct[c]) /
                         static_cast<double>(r.class_val_counts[c]);
        tot += r.class_val_counts[c];
        tot_c += correct[c];
        const auto s = static_cast<std::size_t>(val.split_of_class[c]);
        n_by_split[s] += r.class_val_counts[c];
        c_by_split[s] += correct[c];
    }
    r.overall = tot ? static_cast<double>(tot_c) / static_cast<double>(tot) : 0.0;
    auto ratio = [](std::size_t c, std::size_t n) {
        return n ? static_cast<double>(c) / static_cast<double>(n) : 0.0;
    };
    r.many = ratio(c_by_split[static_cast<std::size_t>(Split::Many)],
                   n_by_split[static_cast<std::size_t>(Split::Many)]);
    r.medium = ratio(c_by_split[static_cast<std::size_t>(Split::Medium)],
                     n_by_split[static_cast<std::size_t>(Split::Medium)]);
    r.few = ratio(c_by_split[static_cast<std::size_t>(Split::Few)],
                  n_by_split[static_cast<std::size_t>(Split::Few)]);
    return r;
}

void save_eval_report(const EvalReport& r, const std::string& csv_path) {
    CsvWriter w(csv_path);
    w.row({"class", "val_count", "split", "accuracy"});
    for (std::size_t c = 0; c < r.per_class.size(); ++c) {
        w.row({std::to_string(c), std::to_string(r.class_val_counts[c]),
               split_name(r.split_of_class[c]), fmt_double(r.per_class[c])});
    }
    w.row({"overall", "", "", fmt_double(r.overall)});
    w.row({"many", "", "", fmt_double(r.many)});
    w.row({"medium", "", "", fmt_double(r.medium)});
    w.row({"few", "", "", fmt_double(r.few)});
    w.close();
}

// ---- rank / test statistics ---------------------------------------------------

namespace {
std::vector<double> ranks_with_ties(const std::vector<double>& x) {
    const std::size_t n = x.size();
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> r(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && x[idx[j + 1]] == x[idx[i]]) ++j;
        const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
        i = j + 1;
    }
    return r;
}
}  // namespace

double spearman_rho(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) {
        throw ContractError("spearman_rho needs two equal-length samples, n >= 2");
    }
    const auto rx = ranks_with_ties(x);
    const auto ry = ranks_with_ties(y);
    const std::size_t n = x.size();
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    if (sxx == 0.0 || syy == 0.0) return 0.0;
    return sxy / std::sqrt(sxx * syy);
}

namespace {
// Sum over all ordered pairs |x_i - x_j| / n^2 for sorted x, O(n).
double mean_abs_pairwise_sorted(const std::vector<double>& x) {
    const std::size_t n = x.size();
    double s = 0.0, prefix = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        s += x[k] * static_cast<double>(k) - prefix;
        prefix += x[k];
    }
    return 2.0 * s / (static_cast<double>(n) * static_cast<double>(n));
}

// Sum over pairs |x_i - y_j| / (n m) for sorted inputs, O(n + m).
double mean_abs_cross_sorted(const std::vector<double>& x, const std::vector<double>& y) {
    double total = 0.0;
    std::size_t j = 0;
    double prefix = 0.0;  // sum of y[0..j)
    double y_total = std::accumulate(y.begin(), y.end(), 0.0);
    for (const double xi : x) {
        while (j < y.size() && y[j] <= xi) {
            prefix += y[j];
            ++j;
        }
        const double below = xi * static_cast<double>(j) - prefix;
        const double above = (y_total - prefix) - xi * static_cast<double>(y.size() - j);
        total += below + above;
    }
    return total / (static_cast<double>(x.size()) * static_cast<double>(y.size()));
}
}  // namespace

double energy_distance_1d(std::vector<double> x, std::vector<double> y) {
    if (x.empty() || y.empty()) throw ContractError("energy distance of empty sample");
    std::sort(x.begin(), x.end());
    std::sort(y.begin(), y.end());
    return 2.0 * mean_abs_cross_sorted(x, y) - mean_abs_pairwise_sorted(x) -
           mean_abs_pairwise_sorted(y);
}

double energy_permutation_pvalue_1d(const std::vector<double>& x,
                                    const std::vector<double>& y, std::size_t B,
                                    std::uint64_t seed) {
    const double observed = energy_distance_1d(x, y);
    std::vector<double> pool(x);
    pool.insert(pool.end(), y.begin(), y.end());
    Rng rng(derive_seed(seed, "energy_permutation"));
    std::size_t ge = 0;
    for (std::size_t b = 0; b < B; ++b) {
        rng.shuffle(pool);
        std::vector<double> px(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(x.size()));
        std::vector<double> py(pool.begin() + static_cast<std::ptrdiff_t>(x.size()), pool.end());
        if (energy_distance_1d(std::move(px), std::move(py)) >= observed) ++ge;
    }
    return static_cast<double>(1 + ge) / static_cast<double>(B + 1);
}

namespace {
// Regularized incomplete beta via Lentz continued fraction.
double betacf(double a, double b, double x) {
    const double eps = 3e-14, fpmin = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0, d = 1.0 - qab * x / qap;
    if (std::abs(d) < fpmin) d = fpmin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= 300; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::abs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < fpmin) d = fpmin;
        c = 1.0 + aa / c;
        if (std::abs(c) < fpmin) c = fpmin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < eps) break;
    }
    return h;
}

double ibeta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                            a * std::log(x) + b * std::log(1.0 - x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) {
        return front * betacf(a, b, x) / a;
    }
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}
}  // namespace

double student_t_cdf(double t, double dof) {
    const double x = dof / (dof + t * t);
    const double p = 0.5 * ibeta(dof / 2.0, 0.5, x);
    return t >= 0.0 ? 1.0 - p : p;
}

double paired_t_pvalue_one_sided(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size() || a.size() < 2) {
        throw ContractError("paired t-test needs equal-length samples, n >= 2");
    }
    const std::size_t n = a.size();
    std::vector<double> d(n);
    for (std::size_t i = 0; i < n; ++i) d[i] = a[i] - b[i];
    const double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(n);
    double var = 0.0;
    for (double v : d) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n - 1);
    if (var == 0.0) return mean > 0.0 ? 0.0 : 1.0;
    const double t = mean / std::sqrt(var / static_cast<double>(n));
    return 1.0 - student_t_cdf(t, static_cast<double>(n - 1));
}

// ---- report tables -------------------------------------------------------------

WeightCurve signal_vs_weight_curve(std::vector<WeightCell> cells) {
    std::sort(cells.begin(), cells.end(),
              [](const WeightCell& a, const WeightCell& b) { return a.w < b.w; });
    WeightCurve c;
    c.cells = std::move(cells);
    if (c.cells.size() >= 2) {
        std::vector<double> w, sig, p;
        for (const auto& cell : c.cells) {
            w.push_back(cell.w);
            sig.push_back(cell.mean_signal);
            p.push_back(cell.mean_p);
        }
        c.rho_signal = spearman_rho(w, sig);
        c.rho_p = spearman_rho(w, p);
    }
    return c;
}

void save_weight_curve(const WeightCurve& c, const std::string& csv_path) {
    CsvWriter w(csv_path);
    w.row({"w", "mean_p_class", "accuracy", "mean_signal"});
    for (const auto& cell : c.cells) {
        w.row({fmt_double(cell.w), fmt_double(cell.mean_p), fmt_double(cell.accuracy),
               fmt_double(cell.mean_signal)});
    }
    w.close();
}

void save_trajectory_fid(const std::vector<TrajectoryFidRow>& rows,
                         const std::string& csv_path) {
    CsvWriter w(csv_path);
    w.row({"t", "fd_terminal", "fd_noisy"});
    for (const auto& r : rows) {
        w.row({std::to_string(r.t), fmt_double(r.fd_terminal), fmt_double(r.fd_noisy)});
    }
    w.close();
}

std::vector<DetectionTableRow> ensemble_comparison(const ClassifierModel& head_model,
                                                   const LongtailDataset& train,
                                                   const LongtailDataset& val,
                                                   const ClassifierTrainConfig& tcfg,
                                                   std::size_t ensemble_size,
                                                   std::uint64_t seed) {
    if (head_model.config().K < 2) {
        throw ContractError("ensemble_comparison needs an epistemic-head model with K >= 2");
    }
    // Independent ensemble with the head model's trunk architecture, no heads.
    ClassifierConfig mcfg = head_model.config();
    mcfg.K = 0;
    std::vector<ClassifierModel> members;
    for (std::size_t i = 0; i < ensemble_size; ++i) {
        const auto s = derive_seed(seed, "ensemble_member_" + std::to_string(i));
        members.emplace_back(mcfg, s);
        train_classifier(members.back(), train, tcfg, s);
    }

    const auto pred = predict_labels(head_model, val.points);
    std::vector<bool> rare, hard;
    std::vector<double> s_entropy, s_energy, s_epi, s_ens;
    const SignalConfig cfg_entropy{SignalKind::Entropy, 1.0, HeadSelection::BaseHead};
    const SignalConfig cfg_energy{SignalKind::Energy, 1.0, HeadSelection::BaseHead};
    const SignalConfig cfg_epi{SignalKind::Epistemic, 1.0, HeadSelection::EpistemicHeads};
    for (std::size_t i = 0; i < val.points.size(); ++i) {
        const auto& pt = val.points[i];
        rare.push_back(val.split_of_class[pt.label] == Split::Few);
        hard.push_back(pred[i] != pt.label);
        s_entropy.push_back(signal_value(head_model, pt.features, cfg_entropy));
        s_energy.push_back(signal_value(head_model, pt.features, cfg_energy));
        s_epi.push_back(signal_value(head_model, pt.features, cfg_epi));

        std::vector<std::vector<double>> rows;
        const Tensor x = Tensor::from({pt.features.size()}, std::vector<double>(pt.features));
        for (const auto& member : members) {
            const Tensor p = softmax(member.base_logits_of(x));
            rows.emplace_back(p.values().begin(), p.values().end());
        }
        s_ens.push_back(epistemic_of_rows(rows));
    }

    auto make_row = [&](const std::string& name, const std::vector<double>& s) {
        DetectionTableRow r;
        r.signal = name;
        r.rare_auroc = detection_auroc(s, rare);
        r.hard_auroc = detection_auroc(s, hard);
        return r;
    };
    return {make_row("entropy", s_entropy), make_row("energy", s_energy),
            make_row("epistemic_head", s_epi), make_row("independent_ensemble", s_ens)};
}

void save_detection_table(const std::vector<DetectionTableRow>& rows,
                          const std::string& csv_path) {
    CsvWriter w(csv_path);
    w.row({"signal", "rare_auroc", "hard_auroc"});
    for (const auto& r : rows) {
        w.row({r.signal, fmt_double(r.rare_auroc), fmt_double(r.hard_auroc)});
    }
    w.close();
}

}  // namespace ltf
