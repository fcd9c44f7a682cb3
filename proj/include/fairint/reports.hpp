#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "json.hpp"

#include "fairint/data.hpp"
#include "fairint/error.hpp"
#include "fairint/training.hpp"

namespace fairint {

struct FeatureAttention {
    std::string feature;
    double mean = 0.0;
    double variance = 0.0;
    double min = 0.0;
    double max = 0.0;
};

/// Per head, one entry per non-sensitive feature in schema order.
struct AttentionStats {
    std::vector<std::vector<FeatureAttention>> heads;

    /// Average over heads and features of the per-feature variance.
    double mean_variance() const {
        double acc = 0.0;
        std::size_t k = 0;
        for (const auto& h : heads) {
            for (const auto& f : h) {
                acc += f.variance;
                ++k;
            }
        }
        return k ? acc / static_cast<double>(k) : 0.0;
    }
};

/// Summaries of row-major [rows x features] attention matrices, one per head.
/// Variance is the population variance over rows.
inline AttentionStats attention_stats(const std::vector<std::vector<double>>& per_head,
                                      const std::vector<std::string>& feature_names) {
    const std::size_t c = feature_names.size();
    AttentionStats out;
    for (const auto& a : per_head) {
        if (c == 0 || a.size() % c != 0 || a.empty()) {
            throw DimensionError("attention matrix does not match the feature count");
        }
        const std::size_t rows = a.size() / c;
        std::vector<FeatureAttention> head(c);
        for (std::size_t j = 0; j < c; ++j) {
            auto& f = head[j];
            f.feature = feature_names[j];
            f.min = a[j];
            f.max = a[j];
            double sum = 0.0;
            for (std::size_t r = 0; r < rows; ++r) {
                const double v = a[r * c + j];
                sum += v;
                f.min = std::min(f.min, v);
                f.max = std::max(f.max, v);
            }
            f.mean = sum / static_cast<double>(rows);
            double ss = 0.0;
            for (std::size_t r = 0; r < rows; ++r) {
                const double d = a[r * c + j] - f.mean;
                ss += d * d;
            }
            f.variance = ss / static_cast<double>(rows);
        }
        out.heads.push_back(std::move(head));
    }
    return out;
}

inline AttentionStats explain(FairIntModel& model, const Dataset& ds, SplitTag split) {
    if (model.architecture() != Architecture::fairint) {
        throw UsageError("explain needs a model trained with the interaction layer enabled (enable_bid = true)");
    }
    const auto pred = predict_split(model, ds, split);
    std::vector<std::string> names;
    for (auto c : model.feature_columns()) {
        names.push_back(model.schema()[c].name);
    }
    return attention_stats(pred.attention, names);
}

inline nlohmann::json to_json(const AttentionStats& s) {
    nlohmann::json heads = nlohmann::json::array();
    for (std::size_t h = 0; h < s.heads.size(); ++h) {
        nlohmann::json feats = nlohmann::json::array();
        for (const auto& f : s.heads[h]) {
            feats.push_back(
                {{"feature", f.feature}, {"mean", f.mean}, {"variance", f.variance}, {"min", f.min}, {"max", f.max}});
        }
        heads.push_back({{"head", h}, {"features", std::move(feats)}});
    }
    return nlohmann::json{{"heads", std::move(heads)}};
}

// ---------------------------------------------------------------------------
// Linear probe of the sensitive attribute

struct ProbeCoefficient {
    std::string feature;
    double coef = 0.0;
};

struct ProbeResult {
    double intercept = 0.0;
    /// Sorted by decreasing |coef|; ties keep design-matrix order.
    std::vector<ProbeCoefficient> coefficients;
};

struct ProbeOptions {
    int epochs = 500;
    double learning_rate = 0.1;
};

/// Logistic regression of s on every non-label, non-sensitive column:
/// numericals standardized over all rows, categoricals one-hot (one column per
/// known value). Full-batch gradient descent on mean cross-entropy from zero
/// weights, so the fit is deterministic without any randomness.
inline ProbeResult probe(const Dataset& ds, const ProbeOptions& opt = {}) {
    if (ds.n == 0) {
        throw DataError("probe: dataset is empty");
    }
    std::size_t ones = 0;
    for (int s : ds.sensitive) {
        ones += s != 0 ? 1 : 0;
    }
    if (ones == 0 || ones == ds.n) {
        throw DataError("probe: sensitive column has a single class");
    }

    std::vector<std::string> names;
    std::vector<std::vector<double>> cols;
    for (auto c : ds.feature_columns()) {
        const auto& sc = ds.schema[c];
        if (sc.kind == FeatureKind::numerical) {
            const auto& raw = ds.columns[c].raw;
            double mean = 0.0;
            for (double v : raw) mean += v;
            mean /= static_cast<double>(ds.n);
            double var = 0.0;
            for (double v : raw) var += (v - mean) * (v - mean);
            const double sd = std::sqrt(var / static_cast<double>(ds.n));
            std::vector<double> x(ds.n);
            for (std::size_t r = 0; r < ds.n; ++r) {
                x[r] = (raw[r] - mean) / (sd > 0.0 ? sd : 1.0);
            }
            names.push_back(sc.name);
            cols.push_back(std::move(x));
        } else {
            const auto& vocab = ds.encoders.vocab[c];
            for (int id = 0; id < vocab.unknown_id(); ++id) {
                std::vector<double> x(ds.n);
                for (std::size_t r = 0; r < ds.n; ++r) {
                    x[r] = ds.columns[c].codes[r] == id ? 1.0 : 0.0;
                }
                names.push_back(sc.name + "=" + vocab.values[static_cast<std::size_t>(id)]);
                cols.push_back(std::move(x));
            }
        }
    }

    const std::size_t k = cols.size();
    std::vector<double> w(k, 0.0), grad(k);
    double b = 0.0;
    const double inv_n = 1.0 / static_cast<double>(ds.n);
    std::vector<double> err(ds.n);
    for (int epoch = 0; epoch < opt.epochs; ++epoch) {
        for (std::size_t r = 0; r < ds.n; ++r) {
            double z = b;
            for (std::size_t j = 0; j < k; ++j) {
                z += w[j] * cols[j][r];
            }
            err[r] = ops::stable_sigmoid(z) - static_cast<double>(ds.sensitive[r]);
        }
        double gb = 0.0;
        for (std::size_t r = 0; r < ds.n; ++r) gb += err[r];
        for (std::size_t j = 0; j < k; ++j) {
            double g = 0.0;
            for (std::size_t r = 0; r < ds.n; ++r) g += err[r] * cols[j][r];
            grad[j] = g * inv_n;
        }
        b -= opt.learning_rate * gb * inv_n;
        for (std::size_t j = 0; j < k; ++j) {
            w[j] -= opt.learning_rate * grad[j];
        }
    }

    ProbeResult out;
    out.intercept = b;
    for (std::size_t j = 0; j < k; ++j) {
        out.coefficients.push_back({names[j], w[j]});
    }
    std::stable_sort(out.coefficients.begin(), out.coefficients.end(),
                     [](const auto& a, const auto& b2) { return std::fabs(a.coef) > std::fabs(b2.coef); });
    return out;
}

inline nlohmann::json to_json(const ProbeResult& p) {
    nlohmann::json coefs = nlohmann::json::array();
    for (const auto& c : p.coefficients) {
        coefs.push_back({{"feature", c.feature}, {"coef", c.coef}});
    }
    return nlohmann::json{{"intercept", p.intercept}, {"coefficients", std::move(coefs)}};
}

} // namespace fairint
