#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "fairint/error.hpp"

namespace fairint {

struct GroupRates {
    int group = 0;
    double positive_rate = 0.0;
    double tpr = 0.0;
    double fpr = 0.0;
    std::size_t count = 0;
};

/// Where evaluation takes its group assignment from.
enum class GroupSource { true_sensitive, pseudo };

inline const char* to_string(GroupSource g) { return g == GroupSource::pseudo ? "pseudo" : "true"; }

inline GroupSource group_source_from_string(const std::string& s) {
    if (s == "true") return GroupSource::true_sensitive;
    if (s == "pseudo") return GroupSource::pseudo;
    throw ConfigError("--groups-from must be 'true' or 'pseudo', got '" + s + "'");
}

struct FairnessReport {
    double auc = 0.0;
    double ddp = 0.0;
    double deo = 0.0;
    std::vector<GroupRates> group_rates;
    double sar_accuracy = 0.0;
    double threshold = 0.5;
    GroupSource groups_from = GroupSource::true_sensitive;
};

/// 1 where score >= threshold.
inline std::vector<int> threshold_labels(std::span<const double> scores, double threshold) {
    std::vector<int> out(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        out[i] = scores[i] >= threshold ? 1 : 0;
    }
    return out;
}

namespace detail {

inline void check_lengths(const char* what, std::size_t a, std::size_t b) {
    if (a != b) {
        throw MetricError(std::string(what) + ": length mismatch (" + std::to_string(a) + " vs " + std::to_string(b) +
                          ")");
    }
}

struct GroupCounts {
    std::size_t n = 0, pred_pos = 0;
    std::size_t pos = 0, true_pos = 0;
    std::size_t neg = 0, false_pos = 0;
};

inline std::array<GroupCounts, 2> count_groups(std::span<const int> pred, std::span<const double> y,
                                               std::span<const int> groups) {
    std::array<GroupCounts, 2> c{};
    for (std::size_t i = 0; i < pred.size(); ++i) {
        if (groups[i] != 0 && groups[i] != 1) {
            throw MetricError("group id " + std::to_string(groups[i]) + " is not binary");
        }
        auto& g = c[static_cast<std::size_t>(groups[i])];
        ++g.n;
        g.pred_pos += pred[i] ? 1 : 0;
        if (!y.empty()) {
            if (y[i] != 0.0) {
                ++g.pos;
                g.true_pos += pred[i] ? 1 : 0;
            } else {
                ++g.neg;
                g.false_pos += pred[i] ? 1 : 0;
            }
        }
    }
    return c;
}

} // namespace detail

/// |P(yhat=1 | g=0) - P(yhat=1 | g=1)| over binary predictions.
inline double delta_dp(std::span<const int> pred, std::span<const int> groups) {
    detail::check_lengths("delta_dp", pred.size(), groups.size());
    const auto c = detail::count_groups(pred, {}, groups);
    for (int g = 0; g < 2; ++g) {
        if (c[g].n == 0) {
            throw MetricError("delta_dp: group " + std::to_string(g) + " is empty");
        }
    }
    const double r0 = static_cast<double>(c[0].pred_pos) / static_cast<double>(c[0].n);
    const double r1 = static_cast<double>(c[1].pred_pos) / static_cast<double>(c[1].n);
    return std::fabs(r0 - r1);
}

/// |TPR_0 - TPR_1| + |FPR_0 - FPR_1|.
inline double delta_eo(std::span<const int> pred, std::span<const double> y, std::span<const int> groups) {
    detail::check_lengths("delta_eo", pred.size(), groups.size());
    detail::check_lengths("delta_eo", pred.size(), y.size());
    const auto c = detail::count_groups(pred, y, groups);
    for (int g = 0; g < 2; ++g) {
        if (c[g].pos == 0) {
            throw MetricError("delta_eo: group " + std::to_string(g) + " has no positive (y=1) rows");
        }
        if (c[g].neg == 0) {
            throw MetricError("delta_eo: group " + std::to_string(g) + " has no negative (y=0) rows");
        }
    }
    auto rate = [](std::size_t a, std::size_t b) { return static_cast<double>(a) / static_cast<double>(b); };
    return std::fabs(rate(c[0].true_pos, c[0].pos) - rate(c[1].true_pos, c[1].pos)) +
           std::fabs(rate(c[0].false_pos, c[0].neg) - rate(c[1].false_pos, c[1].neg));
}

/// Mann-Whitney AUC: P(score_pos > score_neg) with ties counted as 1/2.
/// Midranks over the sorted scores; O(n log n).
inline double auc_roc(std::span<const double> scores, std::span<const double> y) {
    detail::check_lengths("auc_roc", scores.size(), y.size());
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
    // Twice the midrank keeps every quantity an integer.
    double rank2_sum_pos = 0.0;
    std::size_t n_pos = 0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) {
            ++j;
        }
        const double rank2 = static_cast<double>(i + 1 + j);
        for (std::size_t k = i; k < j; ++k) {
            if (y[order[k]] != 0.0) {
                rank2_sum_pos += rank2;
                ++n_pos;
            }
        }
        i = j;
    }
    const std::size_t n_neg = n - n_pos;
    if (n_pos == 0 || n_neg == 0) {
        throw MetricError("auc_roc: both label classes must be present");
    }
    const double np = static_cast<double>(n_pos);
    const double u2 = rank2_sum_pos - np * (np + 1.0);
    return u2 / (2.0 * np * static_cast<double>(n_neg));
}

/// Fraction of rows where (s_hat >= 0.5) equals s.
inline double sar_accuracy(std::span<const double> s_hat, std::span<const int> s) {
    detail::check_lengths("sar_accuracy", s_hat.size(), s.size());
    if (s_hat.empty()) {
        throw MetricError("sar_accuracy: empty input");
    }
    std::size_t hits = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        hits += ((s_hat[i] >= 0.5 ? 1 : 0) == s[i]) ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(s.size());
}

/// Per-group rates; tpr/fpr are 0 for a group with no rows of that class.
inline std::vector<GroupRates> group_rates(std::span<const int> pred, std::span<const double> y,
                                           std::span<const int> groups) {
    const auto c = detail::count_groups(pred, y, groups);
    std::vector<GroupRates> out;
    for (int g = 0; g < 2; ++g) {
        const auto& k = c[static_cast<std::size_t>(g)];
        GroupRates r;
        r.group = g;
        r.count = k.n;
        r.positive_rate = k.n ? static_cast<double>(k.pred_pos) / static_cast<double>(k.n) : 0.0;
        r.tpr = k.pos ? static_cast<double>(k.true_pos) / static_cast<double>(k.pos) : 0.0;
        r.fpr = k.neg ? static_cast<double>(k.false_pos) / static_cast<double>(k.neg) : 0.0;
        out.push_back(r);
    }
    return out;
}

/// Assembles a full report. `groups` is whichever assignment the caller chose
/// (true s or thresholded s_hat); sar_accuracy always compares s_hat to true s.
inline FairnessReport make_report(std::span<const double> scores, std::span<const double> y,
                                  std::span<const int> groups, std::span<const double> s_hat,
                                  std::span<const int> s_true, double threshold, GroupSource source) {
    FairnessReport rep;
    rep.threshold = threshold;
    rep.groups_from = source;
    const auto pred = threshold_labels(scores, threshold);
    rep.auc = auc_roc(scores, y);
    rep.ddp = delta_dp(pred, groups);
    rep.deo = delta_eo(pred, y, groups);
    rep.group_rates = group_rates(pred, y, groups);
    rep.sar_accuracy = sar_accuracy(s_hat, s_true);
    return rep;
}

inline nlohmann::json to_json(const FairnessReport& r) {
    nlohmann::json rates = nlohmann::json::array();
    for (const auto& g : r.group_rates) {
        rates.push_back({{"group", g.group},
                         {"positive_rate", g.positive_rate},
                         {"tpr", g.tpr},
                         {"fpr", g.fpr},
                         {"count", g.count}});
    }
    return nlohmann::json{{"auc", r.auc},
                          {"ddp", r.ddp},
                          {"deo", r.deo},
                          {"group_rates", std::move(rates)},
                          {"sar_accuracy", r.sar_accuracy},
                          {"threshold", r.threshold},
                          {"groups_from", to_string(r.groups_from)}};
}

inline FairnessReport report_from_json(const nlohmann::json& j) {
    FairnessReport r;
    r.auc = j.at("auc").get<double>();
    r.ddp = j.at("ddp").get<double>();
    r.deo = j.at("deo").get<double>();
    r.sar_accuracy = j.at("sar_accuracy").get<double>();
    r.threshold = j.at("threshold").get<double>();
    r.groups_from = group_source_from_string(j.at("groups_from").get<std::string>());
    for (const auto& g : j.at("group_rates")) {
        r.group_rates.push_back(GroupRates{g.at("group").get<int>(), g.at("positive_rate").get<double>(),
                                           g.at("tpr").get<double>(), g.at("fpr").get<double>(),
                                           g.at("count").get<std::size_t>()});
    }
    return r;
}

} // namespace fairint
