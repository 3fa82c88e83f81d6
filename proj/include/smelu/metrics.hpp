#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "smelu/error.hpp"

// Prediction Difference (PD) metrics over M models' label distributions on N
// shared examples, plus the usual per-model accuracy, log loss and AUC.

namespace smelu {

/// probs[n][m][l]: probability model m assigns label l on example n.
class PredictionTensor {
public:
    PredictionTensor(std::size_t examples, std::size_t models, std::size_t labels, std::vector<double> probs,
                     std::optional<std::vector<int>> true_labels = std::nullopt, double tolerance = 1e-9)
        : n_(examples), m_(models), l_(labels), probs_(std::move(probs)), true_labels_(std::move(true_labels))
    {
        if (n_ == 0 || m_ == 0 || l_ == 0) throw DimensionError("prediction tensor needs N, M, L > 0");
        if (probs_.size() != n_ * m_ * l_) throw DimensionError("prediction tensor size mismatch");
        for (std::size_t n = 0; n < n_; ++n)
            for (std::size_t m = 0; m < m_; ++m) {
                double sum = 0.0;
                for (std::size_t l = 0; l < l_; ++l) {
                    const double p = at(n, m, l);
                    if (!(p >= 0.0) || !std::isfinite(p))
                        throw FormatError("probabilities must be finite and non-negative");
                    sum += p;
                }
                if (std::abs(sum - 1.0) > tolerance)
                    throw FormatError("row (" + std::to_string(n) + ", " + std::to_string(m) + ") sums to " +
                                      std::to_string(sum));
            }
        if (true_labels_) {
            if (true_labels_->size() != n_) throw DimensionError("true label count mismatch");
            for (int t : *true_labels_)
                if (t < 0 || static_cast<std::size_t>(t) >= l_) throw FormatError("true label out of range");
        }
    }

    std::size_t examples() const noexcept { return n_; }
    std::size_t models() const noexcept { return m_; }
    std::size_t labels() const noexcept { return l_; }
    const std::optional<std::vector<int>>& true_labels() const noexcept { return true_labels_; }

    double at(std::size_t n, std::size_t m, std::size_t l) const { return probs_[(n * m_ + m) * l_ + l]; }

    /// Across-model mean distribution for example n, accumulated as offsets
    /// from model 0 so that identical models give their common value exactly.
    std::vector<double> mean(std::size_t n) const
    {
        std::vector<double> out(l_, 0.0);
        for (std::size_t m = 1; m < m_; ++m)
            for (std::size_t l = 0; l < l_; ++l) out[l] += at(n, m, l) - at(n, 0, l);
        for (std::size_t l = 0; l < l_; ++l) out[l] = at(n, 0, l) + out[l] / static_cast<double>(m_);
        return out;
    }

    /// Lowest index among maximal probabilities.
    std::size_t argmax(std::size_t n, std::size_t m) const
    {
        std::size_t best = 0;
        for (std::size_t l = 1; l < l_; ++l)
            if (at(n, m, l) > at(n, m, best)) best = l;
        return best;
    }

private:
    std::size_t n_, m_, l_;
    std::vector<double> probs_;
    std::optional<std::vector<int>> true_labels_;
};

/// Denominator floor for the relative metrics.
inline constexpr double default_relative_floor = 1e-9;

namespace detail {

inline void require_replicas(const PredictionTensor& t, const char* who)
{
    if (t.models() < 2) throw DimensionError(std::string(who) + ": needs at least two models");
}

// Mean over examples and models of term(n, m, mean_n); also returns the
// per-model averages for spread statistics.
template <typename Term>
double average_over(const PredictionTensor& t, Term term, std::vector<double>* per_model = nullptr)
{
    std::vector<double> model_sum(t.models(), 0.0);
    for (std::size_t n = 0; n < t.examples(); ++n) {
        const auto mean = t.mean(n);
        for (std::size_t m = 0; m < t.models(); ++m) model_sum[m] += term(n, m, mean);
    }
    double total = 0.0;
    for (double& s : model_sum) {
        s /= static_cast<double>(t.examples());
        total += s;
    }
    if (per_model) *per_model = model_sum;
    return total / static_cast<double>(t.models());
}

} // namespace detail

/// L_p prediction difference: mean over n, m of ||P_{n,m} - mean_n||_p.
inline double delta_p(const PredictionTensor& t, double p, std::vector<double>* per_model = nullptr)
{
    detail::require_replicas(t, "delta_p");
    if (!(p >= 1.0)) throw ParameterError("delta_p: p must be >= 1");
    return detail::average_over(
        t,
        [&](std::size_t n, std::size_t m, const std::vector<double>& mean) {
            double s = 0.0;
            for (std::size_t l = 0; l < t.labels(); ++l) s += std::pow(std::abs(t.at(n, m, l) - mean[l]), p);
            return std::pow(s, 1.0 / p);
        },
        per_model);
}

/// Relative L1 PD: each label's deviation divided by the mean probability of that label.
inline double delta_1_rel(const PredictionTensor& t, double floor = default_relative_floor,
                          std::vector<double>* per_model = nullptr)
{
    detail::require_replicas(t, "delta_1_rel");
    return detail::average_over(
        t,
        [&](std::size_t n, std::size_t m, const std::vector<double>& mean) {
            double s = 0.0;
            for (std::size_t l = 0; l < t.labels(); ++l)
                s += std::abs(t.at(n, m, l) - mean[l]) / std::max(mean[l], floor);
            return s;
        },
        per_model);
}

/// Binary relative L1 PD: the whole L1 deviation divided by the mean positive-label probability.
inline double delta_1_rel_binary(const PredictionTensor& t, double floor = default_relative_floor,
                                 std::vector<double>* per_model = nullptr)
{
    detail::require_replicas(t, "delta_1_rel_binary");
    if (t.labels() != 2) throw DimensionError("delta_1_rel_binary: needs exactly two labels");
    return detail::average_over(
        t,
        [&](std::size_t n, std::size_t m, const std::vector<double>& mean) {
            const double l1 = std::abs(t.at(n, m, 0) - mean[0]) + std::abs(t.at(n, m, 1) - mean[1]);
            return l1 / std::max(mean[1], floor);
        },
        per_model);
}

/// PD on the observed label only, relative to its mean probability.
inline double delta_1_label(const PredictionTensor& t, double floor = default_relative_floor)
{
    detail::require_replicas(t, "delta_1_label");
    if (!t.true_labels()) throw ParameterError("delta_1_label: true labels are required");
    const auto& truth = *t.true_labels();
    return detail::average_over(t, [&](std::size_t n, std::size_t m, const std::vector<double>& mean) {
        const auto l = static_cast<std::size_t>(truth[n]);
        return std::abs(t.at(n, m, l) - mean[l]) / std::max(mean[l], floor);
    });
}

/// Mean over unordered model pairs of the fraction of examples whose argmax differs.
inline double delta_hamming(const PredictionTensor& t)
{
    detail::require_replicas(t, "delta_hamming");
    double total = 0.0;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < t.models(); ++a)
        for (std::size_t b = a + 1; b < t.models(); ++b) {
            std::size_t diff = 0;
            for (std::size_t n = 0; n < t.examples(); ++n) diff += t.argmax(n, a) != t.argmax(n, b);
            total += static_cast<double>(diff) / static_cast<double>(t.examples());
            ++pairs;
        }
    return total / static_cast<double>(pairs);
}

/// Area under the ROC curve: normalized Mann-Whitney U, ties count 1/2.
inline double auc(std::span<const double> scores, std::span<const int> labels)
{
    if (scores.size() != labels.size()) throw DimensionError("auc: score/label count mismatch");
    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] < scores[b]; });

    // midranks over tie groups
    double positive_rank_sum = 0.0;
    std::size_t positives = 0;
    for (std::size_t i = 0; i < order.size();) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        const double midrank = 0.5 * static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k)
            if (labels[order[k]] == 1) {
                positive_rank_sum += midrank;
                ++positives;
            } else if (labels[order[k]] != 0) {
                throw ParameterError("auc: labels must be 0 or 1");
            }
        i = j;
    }
    const std::size_t negatives = scores.size() - positives;
    if (positives == 0 || negatives == 0) throw ParameterError("auc: both classes must be present");
    const double np = static_cast<double>(positives), nn = static_cast<double>(negatives);
    return (positive_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

struct MeanStd {
    double mean = 0.0;
    double stdev = 0.0;
};

/// Arithmetic mean and population standard deviation.
inline MeanStd aggregate(std::span<const double> values)
{
    if (values.empty()) throw ParameterError("aggregate: no values");
    const double n = static_cast<double>(values.size());
    const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    double ss = 0.0;
    for (double v : values) ss += (v - mean) * (v - mean);
    return {mean, std::sqrt(ss / n)};
}

/// All PD metrics plus per-model quality, aggregated over the M models.
/// Spread of a PD metric is the population stdev of the per-model terms whose
/// mean is the metric.
struct PDReport {
    std::size_t examples = 0;
    std::size_t models = 0;
    std::size_t labels = 0;

    double delta_1 = 0.0;
    double delta_1_std = 0.0;
    double delta_2 = 0.0;
    double delta_1_rel = 0.0;
    double delta_1_rel_std = 0.0;
    std::optional<double> delta_1_rel_binary;
    std::optional<double> delta_1_label;
    double delta_hamming = 0.0;

    std::optional<MeanStd> accuracy;
    std::optional<MeanStd> error_rate;
    std::optional<MeanStd> loss;
    std::optional<MeanStd> auc;
};

inline PDReport make_report(const PredictionTensor& t, double floor = default_relative_floor)
{
    PDReport r;
    r.examples = t.examples();
    r.models = t.models();
    r.labels = t.labels();

    std::vector<double> per_model;
    r.delta_1 = delta_p(t, 1.0, &per_model);
    r.delta_1_std = aggregate(per_model).stdev;
    r.delta_2 = delta_p(t, 2.0);
    r.delta_1_rel = delta_1_rel(t, floor, &per_model);
    r.delta_1_rel_std = aggregate(per_model).stdev;
    if (t.labels() == 2) r.delta_1_rel_binary = delta_1_rel_binary(t, floor);
    r.delta_hamming = delta_hamming(t);

    if (const auto& truth = t.true_labels()) {
        r.delta_1_label = delta_1_label(t, floor);
        std::vector<double> acc(t.models()), err(t.models()), loss(t.models()), aucs;
        for (std::size_t m = 0; m < t.models(); ++m) {
            std::size_t correct = 0;
            double ll = 0.0;
            for (std::size_t n = 0; n < t.examples(); ++n) {
                const auto l = static_cast<std::size_t>((*truth)[n]);
                correct += t.argmax(n, m) == l;
                ll -= std::log(std::max(t.at(n, m, l), 1e-15));
            }
            acc[m] = static_cast<double>(correct) / static_cast<double>(t.examples());
            err[m] = 1.0 - acc[m];
            loss[m] = ll / static_cast<double>(t.examples());
        }
        r.accuracy = aggregate(acc);
        r.error_rate = aggregate(err);
        r.loss = aggregate(loss);

        const bool both = std::find(truth->begin(), truth->end(), 0) != truth->end() &&
                          std::find(truth->begin(), truth->end(), 1) != truth->end();
        if (t.labels() == 2 && both) {
            std::vector<double> scores(t.examples());
            for (std::size_t m = 0; m < t.models(); ++m) {
                for (std::size_t n = 0; n < t.examples(); ++n) scores[n] = t.at(n, m, 1);
                aucs.push_back(smelu::auc(scores, *truth));
            }
            r.auc = aggregate(aucs);
        }
    }
    return r;
}

inline nlohmann::json to_json(const PDReport& r)
{
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); };
    auto ms = [](const std::optional<MeanStd>& v) {
        return v ? nlohmann::json{{"mean", v->mean}, {"stdev", v->stdev}} : nlohmann::json();
    };
    return {{"examples", r.examples},
            {"models", r.models},
            {"labels", r.labels},
            {"delta_1", r.delta_1},
            {"delta_1_stdev", r.delta_1_std},
            {"delta_2", r.delta_2},
            {"delta_1_rel", r.delta_1_rel},
            {"delta_1_rel_stdev", r.delta_1_rel_std},
            {"delta_1_rel_binary", opt(r.delta_1_rel_binary)},
            {"delta_1_label", opt(r.delta_1_label)},
            {"delta_hamming", r.delta_hamming},
            {"accuracy", ms(r.accuracy)},
            {"error_rate", ms(r.error_rate)},
            {"loss", ms(r.loss)},
            {"auc", ms(r.auc)}};
}

/// Column headers of the results table, one string per column.
inline const std::vector<std::string>& table_columns()
{
    static const std::vector<std::string> cols = {"AUC", "AUC stdev", "Δ1", "Δ1 stdev", "Δ1r %", "Δ1r stdev %"};
    return cols;
}

/// One aligned row: model name, parameter, then the table columns. Missing
/// AUC prints as "-".
inline std::string table_row(const std::string& model, const std::string& param, const PDReport& r)
{
    char buf[256];
    auto cell = [&](std::optional<double> v, const char* fmt) {
        if (!v) return std::string("-");
        std::snprintf(buf, sizeof buf, fmt, *v);
        return std::string(buf);
    };
    std::snprintf(buf, sizeof buf, "%-10s %-12s", model.c_str(), param.c_str());
    std::string row = buf;
    const std::string auc_mean = r.auc ? cell(r.auc->mean, "%.3f") : "-";
    const std::string auc_std = r.auc ? cell(r.auc->stdev, "%.4f") : "-";
    for (const auto& c : {auc_mean, auc_std, cell(r.delta_1, "%.3f"),
                          cell(r.delta_1_std, "%.3f"), cell(100.0 * r.delta_1_rel, "%.1f"),
                          cell(100.0 * r.delta_1_rel_std, "%.1f")}) {
        std::snprintf(buf, sizeof buf, " %12s", c.c_str());
        row += buf;
    }
    return row;
}

inline std::string table_header()
{
    char buf[64];
    std::snprintf(buf, sizeof buf, "%-10s %-12s", "Model", "");
    std::string h = buf;
    for (const auto& c : table_columns()) {
        // column names contain multi-byte Δ; pad by visible width
        const std::size_t visible = c.size() - (c.find("Δ") != std::string::npos ? 1 : 0);
        h += std::string(13 - std::min<std::size_t>(visible, 12), ' ') + c;
    }
    return h;
}

} // namespace smelu
