#include "ltf/signals.hpp"

#include <algorithm>
#include <cmath>

#include "ltf/csv.hpp"
#include "ltf/error.hpp"

namespace ltf {

const char* signal_name(SignalKind k) {
    switch (k) {
        case SignalKind::Entropy: return "entropy";
        case SignalKind::Energy: return "energy";
        case SignalKind::Epistemic: return "epistemic";
        case SignalKind::Aleatoric: return "aleatoric";
        case SignalKind::Total: return "total";
    }
    return "?";
}

SignalKind signal_from_name(const std::string& s) {
    if (s == "entropy") return SignalKind::Entropy;
    if (s == "energy") return SignalKind::Energy;
    if (s == "epistemic") return SignalKind::Epistemic;
    if (s == "aleatoric") return SignalKind::Aleatoric;
    if (s == "total") return SignalKind::Total;
    throw ContractError("unknown signal kind '" + s + "'");
}

namespace {

void check_simplex(const Tensor& p, std::size_t row_len) {
    const auto v = p.values();
    const std::size_t rows = p.size() / row_len;
    for (std::size_t r = 0; r < rows; ++r) {
        double sum = 0.0;
        for (std::size_t j = 0; j < row_len; ++j) {
            const double x = v[r * row_len + j];
            if (x < 0.0) throw ContractError("probability entries must be >= 0");
            sum += x;
        }
        if (std::abs(sum - 1.0) > 1e-9) {
            throw ContractError("probabilities must sum to 1 within 1e-9");
        }
    }
}

}  // namespace

Tensor entropy(const Tensor& p) {
    if (p.rank() != 1 || p.size() == 0) {
        throw DimensionError("entropy: probability vector required");
    }
    check_simplex(p, p.size());
    return neg(sum_all(xlogx(p)));
}

Tensor energy(const Tensor& logits, double temperature) {
    if (!(temperature > 0.0)) throw ContractError("energy: temperature must be > 0");
    if (logits.rank() != 1 || logits.size() == 0) {
        throw DimensionError("energy: logit vector required");
    }
    // logsumexp(x, T) is already T log sum exp(x/T)
    return neg(logsumexp(logits, temperature));
}

Tensor epistemic(const Tensor& head_probs) {
    return sub(total(head_probs), aleatoric(head_probs));
}

Tensor aleatoric(const Tensor& head_probs) {
    if (head_probs.rank() != 2) throw DimensionError("head probabilities must be [K, C]");
    check_simplex(head_probs, head_probs.shape()[1]);
    return mean_all(neg(sum_lastdim(xlogx(head_probs))));
}

Tensor total(const Tensor& head_probs) {
    if (head_probs.rank() != 2) throw DimensionError("head probabilities must be [K, C]");
    check_simplex(head_probs, head_probs.shape()[1]);
    return neg(sum_all(xlogx(mean_axis0(head_probs))));
}

Tensor signal(const ClassifierModel& m, const Tensor& x, const SignalConfig& cfg) {
    if (x.rank() != 1) throw DimensionError("signal: one example (rank-1) required");
    const bool heads_kind = cfg.kind == SignalKind::Epistemic ||
                            cfg.kind == SignalKind::Aleatoric ||
                            cfg.kind == SignalKind::Total;
    const bool use_heads = heads_kind || cfg.head_selection == HeadSelection::EpistemicHeads;
    if (use_heads && m.config().K < 2) {
        throw ConfigError({std::string(signal_name(cfg.kind)) +
                           " over epistemic heads requires K >= 2"});
    }

    switch (cfg.kind) {
        case SignalKind::Entropy: {
            if (use_heads) return total(softmax(m.head_logits_of(x)));
            return entropy(softmax(m.base_logits_of(x)));
        }
        case SignalKind::Energy: {
            if (use_heads) {
                // mean per-head energy: heads as posterior samples of the logits
                const Tensor lse = logsumexp(m.head_logits_of(x), cfg.temperature);
                return neg(mean_all(lse));
            }
            return energy(m.base_logits_of(x), cfg.temperature);
        }
        case SignalKind::Epistemic: return epistemic(softmax(m.head_logits_of(x)));
        case SignalKind::Aleatoric: return aleatoric(softmax(m.head_logits_of(x)));
        case SignalKind::Total: return total(softmax(m.head_logits_of(x)));
    }
    throw ContractError("unreachable signal kind");
}

double signal_value(const ClassifierModel& m, const std::vector<double>& x,
                    const SignalConfig& cfg) {
    return signal(m, Tensor::from({x.size()}, std::vector<double>(x)), cfg).item();
}

double entropy_of(const std::vector<double>& p) {
    double h = 0.0;
    for (double v : p) {
        if (v > 0.0) h -= v * std::log(v);
    }
    return h;
}

double aleatoric_of_rows(const std::vector<std::vector<double>>& rows) {
    double s = 0.0;
    for (const auto& r : rows) s += entropy_of(r);
    return s / static_cast<double>(rows.size());
}

double epistemic_of_rows(const std::vector<std::vector<double>>& rows) {
    const std::size_t C = rows[0].size();
    std::vector<double> mean(C, 0.0);
    for (const auto& r : rows) {
        for (std::size_t j = 0; j < C; ++j) mean[j] += r[j];
    }
    for (auto& v : mean) v /= static_cast<double>(rows.size());
    return entropy_of(mean) - aleatoric_of_rows(rows);
}

double quantile_of(std::vector<double> values, double q) {
    if (values.empty()) throw ContractError("quantile of empty set");
    std::sort(values.begin(), values.end());
    const auto idx = std::min(values.size() - 1,
                              static_cast<std::size_t>(q * static_cast<double>(values.size())));
    return values[idx];
}

std::pair<double, double> quantile_hardness(const std::vector<double>& signals,
                                            const std::vector<bool>& correct, double q) {
    if (signals.size() != correct.size()) {
        throw DimensionError("quantile_hardness: length mismatch");
    }
    if (!(q > 0.0 && q < 1.0)) throw ContractError("quantile must lie in (0, 1)");
    const double thr = quantile_of(signals, q);
    std::size_t nb = 0, na = 0, cb = 0, ca = 0;
    for (std::size_t i = 0; i < signals.size(); ++i) {
        if (signals[i] < thr) {
            ++nb;
            cb += correct[i] ? 1 : 0;
        } else {
            ++na;
            ca += correct[i] ? 1 : 0;
        }
    }
    if (nb == 0 || na == 0) {
        throw ContractError("quantile split left one side empty");
    }
    return {static_cast<double>(cb) / static_cast<double>(nb),
            static_cast<double>(ca) / static_cast<double>(na)};
}

double detection_auroc(const std::vector<double>& signals,
                       const std::vector<bool>& positives) {
    if (signals.size() != positives.size()) {
        throw DimensionError("detection_auroc: length mismatch");
    }
    std::vector<double> pos, neg;
    for (std::size_t i = 0; i < signals.size(); ++i) {
        (positives[i] ? pos : neg).push_back(signals[i]);
    }
    if (pos.empty() || neg.empty()) {
        throw ContractError("detection_auroc: both classes must be present");
    }
    // O((P+N) log) rank form of Mann-Whitney with tie correction.
    std::sort(pos.begin(), pos.end());
    std::sort(neg.begin(), neg.end());
    double wins = 0.0;
    std::size_t j_less = 0, j_eq = 0;
    for (const double s : pos) {
        while (j_less < neg.size() && neg[j_less] < s) ++j_less;
        if (j_eq < j_less) j_eq = j_less;
        while (j_eq < neg.size() && neg[j_eq] <= s) ++j_eq;
        wins += static_cast<double>(j_less) + 0.5 * static_cast<double>(j_eq - j_less);
    }
    return wins / (static_cast<double>(pos.size()) * static_cast<double>(neg.size()));
}

SignalReport compute_signal_report(const ClassifierModel& m, const LongtailDataset& ds,
                                   const SignalConfig& cfg) {
    SignalReport rep;
    rep.kind = cfg.kind;
    std::vector<double> values;
    std::vector<bool> correct_v, rare_v;
    for (std::size_t i = 0; i < ds.points.size(); ++i) {
        const auto& p = ds.points[i];
        SignalReportRow row;
        row.id = i;
        row.label = p.label;
        row.value = signal_value(m, p.features, cfg);

        const Tensor logits = m.base_logits_of(
            Tensor::from({p.features.size()}, std::vector<double>(p.features)));
        const auto lv = logits.values();
        std::size_t argmax = 0;
        for (std::size_t j = 1; j < lv.size(); ++j) {
            if (lv[j] > lv[argmax]) argmax = j;
        }
        row.correct = argmax == p.label;

        values.push_back(row.value);
        correct_v.push_back(row.correct);
        rare_v.push_back(ds.split_of_class[p.label] == Split::Few);
        rep.rows.push_back(row);
    }
    rep.q10 = quantile_of(values, 0.10);
    rep.q50 = quantile_of(values, 0.50);
    rep.q90 = quantile_of(values, 0.90);
    const bool any_rare = std::find(rare_v.begin(), rare_v.end(), true) != rare_v.end();
    const bool any_common = std::find(rare_v.begin(), rare_v.end(), false) != rare_v.end();
    if (any_rare && any_common) rep.rare_auroc = detection_auroc(values, rare_v);
    std::vector<bool> hard_v;
    for (bool c : correct_v) hard_v.push_back(!c);
    const bool any_hard = std::find(hard_v.begin(), hard_v.end(), true) != hard_v.end();
    const bool any_easy = std::find(hard_v.begin(), hard_v.end(), false) != hard_v.end();
    if (any_hard && any_easy) rep.hard_auroc = detection_auroc(values, hard_v);
    return rep;
}

void save_signal_report(const SignalReport& r, const std::string& csv_path) {
    CsvWriter w(csv_path);
    w.row({"example_id", "signal_kind", "value", "label", "correct"});
    for (const auto& row : r.rows) {
        w.row({std::to_string(row.id), signal_name(r.kind), fmt_double(row.value),
               std::to_string(row.label), row.correct ? "1" : "0"});
    }
    w.close();
}

}  // namespace ltf
