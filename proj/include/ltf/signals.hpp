#pragma once

#include <optional>
#include <string>
#include <vector>

#include "ltf/classifier.hpp"
#include "ltf/dataset.hpp"
#include "ltf/tensor.hpp"

namespace ltf {

enum class SignalKind { Entropy, Energy, Epistemic, Aleatoric, Total };

const char* signal_name(SignalKind k);
SignalKind signal_from_name(const std::string& s);

enum class HeadSelection { BaseHead, EpistemicHeads };

// All signals follow one sign convention: larger value = more longtail.
struct SignalConfig {
    SignalKind kind = SignalKind::Epistemic;
    double temperature = 1.0;  // energy only
    HeadSelection head_selection = HeadSelection::BaseHead;  // entropy/energy source
};

// -sum p ln p over a probability vector; validates the simplex (entries >= 0,
// sum within 1e-9 of 1). 0 ln 0 reads as 0.
Tensor entropy(const Tensor& p);

// -T logsumexp(logits / T); higher (less negative) means lower density.
Tensor energy(const Tensor& logits, double temperature);

// head_probs is [K, C], one simplex per head. epistemic = U(mean head
// distribution) - mean per-head U with U = entropy (the mutual information
// between head index and prediction); total = epistemic + aleatoric exactly.
Tensor epistemic(const Tensor& head_probs);
Tensor aleatoric(const Tensor& head_probs);
Tensor total(const Tensor& head_probs);

// Dispatch on one example x (rank-1). Differentiable w.r.t. x when recorded
// on a tape. Epistemic-family kinds need K >= 2 heads.
Tensor signal(const ClassifierModel& m, const Tensor& x, const SignalConfig& cfg);

// Convenience value-only evaluation (no tape).
double signal_value(const ClassifierModel& m, const std::vector<double>& x,
                    const SignalConfig& cfg);

// Plain-vector forms used by metrics code on externally produced rows.
double entropy_of(const std::vector<double>& p);
double epistemic_of_rows(const std::vector<std::vector<double>>& rows);
double aleatoric_of_rows(const std::vector<std::vector<double>>& rows);

// Accuracy among examples strictly below the q-quantile of the signal vs
// at-or-above it. Both sides must be non-empty.
std::pair<double, double> quantile_hardness(const std::vector<double>& signals,
                                            const std::vector<bool>& correct, double q);

// Mann-Whitney AUROC: probability a random positive outranks a random
// negative, ties counted half.
double detection_auroc(const std::vector<double>& signals,
                       const std::vector<bool>& positives);

struct SignalReportRow {
    std::size_t id = 0;
    double value = 0.0;
    std::size_t label = 0;
    bool correct = false;
};

struct SignalReport {
    SignalKind kind = SignalKind::Entropy;
    std::vector<SignalReportRow> rows;
    double q10 = 0.0, q50 = 0.0, q90 = 0.0;
    std::optional<double> rare_auroc;  // positives = Few-split classes
    std::optional<double> hard_auroc;  // positives = misclassified examples
};

SignalReport compute_signal_report(const ClassifierModel& m, const LongtailDataset& ds,
                                   const SignalConfig& cfg);
void save_signal_report(const SignalReport& r, const std::string& csv_path);

double quantile_of(std::vector<double> values, double q);

}  // namespace ltf
