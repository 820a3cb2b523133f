#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ltf/classifier.hpp"
#include "ltf/dataset.hpp"
#include "ltf/signals.hpp"

namespace ltf {

struct FrechetStats {
    std::vector<double> mu;
    std::vector<double> sigma;  // row-major d x d, symmetric PSD
    std::size_t n = 0;
    std::size_t dim = 0;
};

// Sample mean and unbiased covariance; needs n >= 2.
FrechetStats frechet_stats(const std::vector<std::vector<double>>& points);

// |mu_a - mu_b|^2 + Tr(Sa + Sb - 2 (Sa Sb)^(1/2)), matrix square root by
// symmetric eigendecomposition; eigenvalues below -1e-8 raise, small
// negatives clamp to 0.
double frechet_distance(const FrechetStats& a, const FrechetStats& b);

// Eigenvalues of a symmetric matrix (cyclic Jacobi), ascending.
std::vector<double> sym_eigenvalues(std::vector<double> m, std::size_t d);

struct EvalReport {
    double overall = 0.0;
    double many = 0.0, medium = 0.0, few = 0.0;
    std::vector<double> per_class;
    std::vector<std::size_t> class_val_counts;
    std::vector<Split> split_of_class;
};

std::vector<std::size_t> predict_labels(const ClassifierModel& m,
                                        const std::vector<LabeledPoint>& pts);
EvalReport accuracy_by_split(const ClassifierModel& m, const LongtailDataset& val);
void save_eval_report(const EvalReport& r, const std::string& csv_path);

// ---- rank / test statistics ---------------------------------------------------

double spearman_rho(const std::vector<double>& x, const std::vector<double>& y);

// Energy distance between 1-D samples (V-statistic) and its permutation test
// p-value (B permutations; p = (1 + #perm >= observed) / (B + 1)).
double energy_distance_1d(std::vector<double> x, std::vector<double> y);
double energy_permutation_pvalue_1d(const std::vector<double>& x,
                                    const std::vector<double>& y, std::size_t B,
                                    std::uint64_t seed);

// One-sided paired t-test p-value for H1: mean(a - b) > 0.
double paired_t_pvalue_one_sided(const std::vector<double>& a, const std::vector<double>& b);
double student_t_cdf(double t, double dof);

// ---- report tables -------------------------------------------------------------

struct WeightCell {
    double w = 0.0;
    double mean_p = 0.0;
    double accuracy = 0.0;
    double mean_signal = 0.0;
};

struct WeightCurve {
    std::vector<WeightCell> cells;  // sorted by w
    double rho_signal = 0.0;        // Spearman(w, mean_signal)
    double rho_p = 0.0;             // Spearman(w, mean_p)
};

WeightCurve signal_vs_weight_curve(std::vector<WeightCell> cells);
void save_weight_curve(const WeightCurve& c, const std::string& csv_path);

struct TrajectoryFidRow {
    int t = 0;
    double fd_terminal = 0.0;
    double fd_noisy = 0.0;
};
void save_trajectory_fid(const std::vector<TrajectoryFidRow>& rows,
                         const std::string& csv_path);

struct DetectionTableRow {
    std::string signal;
    double rare_auroc = 0.0;
    double hard_auroc = 0.0;
};

// Fixed four-row comparison: entropy, energy, epistemic head, and the
// epistemic signal of a small independently trained ensemble with the same
// trunk architecture.
std::vector<DetectionTableRow> ensemble_comparison(const ClassifierModel& head_model,
                                                   const LongtailDataset& train,
                                                   const LongtailDataset& val,
                                                   const ClassifierTrainConfig& tcfg,
                                                   std::size_t ensemble_size,
                                                   std::uint64_t seed);
void save_detection_table(const std::vector<DetectionTableRow>& rows,
                          const std::string& csv_path);

}  // namespace ltf
