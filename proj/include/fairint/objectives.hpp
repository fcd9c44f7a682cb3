#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "json.hpp"

#include "fairint/autodiff.hpp"
#include "fairint/error.hpp"
#include "fairint/model.hpp"

namespace fairint {

struct LossWeights {
    double lambda_ifc = 0.0;
    double lambda_fc = 0.0;

    void validate() const {
        if (!(lambda_ifc >= 0.0) || !(lambda_fc >= 0.0)) {
            throw ConfigError("loss weights must be non-negative");
        }
    }
};

/// Which regularizers take part; a disabled term is reported as 0.
struct LossToggles {
    bool enable_ifc = true;
    bool enable_fc = true;
};

/// total = l0 + lambda_ifc * l_ifc + lambda_fc * l_fc + l_sar
struct LossBreakdown {
    double l0 = 0.0;
    double l_sar = 0.0;
    double l_ifc = 0.0;
    double l_fc = 0.0;
    double total = 0.0;
};

inline double combine(const LossBreakdown& b, const LossWeights& w) {
    return b.l0 + w.lambda_ifc * b.l_ifc + w.lambda_fc * b.l_fc + b.l_sar;
}

// ---------------------------------------------------------------------------
// Value-level losses (plain vectors in, scalar out)

/// Mean binary cross-entropy of probabilities against 0/1 labels.
inline double ce_loss(std::span<const double> prob, std::span<const double> y) {
    if (prob.empty()) {
        throw UsageError("ce_loss: empty batch");
    }
    if (prob.size() != y.size()) {
        throw DimensionError("ce_loss: length mismatch");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < prob.size(); ++i) {
        if (!(prob[i] > 0.0 && prob[i] < 1.0)) {
            throw DomainError("ce_loss: probability outside (0, 1)");
        }
        acc -= y[i] * std::log(prob[i]) + (1.0 - y[i]) * std::log1p(-prob[i]);
    }
    return acc / static_cast<double>(prob.size());
}

/// Mean squared reconstruction error of s_hat against s.
inline double sar_loss(std::span<const double> s_hat, std::span<const double> s) {
    if (s_hat.empty()) {
        throw UsageError("sar_loss: empty batch");
    }
    if (s_hat.size() != s.size()) {
        throw DimensionError("sar_loss: length mismatch");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < s_hat.size(); ++i) {
        acc += (s_hat[i] - s[i]) * (s_hat[i] - s[i]);
    }
    return acc / static_cast<double>(s_hat.size());
}

/// Pseudo-group of each row: 1 iff s_hat >= 0.5 (the mean of a uniform binary s).
inline std::vector<int> assign_groups(std::span<const double> s_hat) {
    std::vector<int> g(s_hat.size());
    for (std::size_t i = 0; i < s_hat.size(); ++i) {
        g[i] = s_hat[i] >= 0.5 ? 1 : 0;
    }
    return g;
}

/// Sum over ordered pairs i != j of |ce_i - ce_j|.
inline double fc_from_group_ce(std::span<const double> group_ce) {
    double acc = 0.0;
    for (std::size_t i = 0; i < group_ce.size(); ++i) {
        for (std::size_t j = 0; j < group_ce.size(); ++j) {
            if (i != j) {
                acc += std::fabs(group_ce[i] - group_ce[j]);
            }
        }
    }
    return acc;
}

/// Sum over ordered pairs i != j of KL(p_i || p_j).
inline double ifc_from_distributions(std::span<const std::vector<double>> dists) {
    double acc = 0.0;
    for (std::size_t i = 0; i < dists.size(); ++i) {
        for (std::size_t j = 0; j < dists.size(); ++j) {
            if (i == j) {
                continue;
            }
            for (std::size_t k = 0; k < dists[i].size(); ++k) {
                acc += dists[i][k] * std::log(dists[i][k] / dists[j][k]);
            }
        }
    }
    return acc;
}

// ---------------------------------------------------------------------------
// Graph-level losses

namespace detail {

inline std::vector<double> column_values(const Var& v) {
    const auto vals = v.value().values();
    return std::vector<double>(vals.begin(), vals.end());
}

/// Row indices of every non-empty group, in group-id order.
inline std::vector<std::vector<std::size_t>> group_members(std::span<const int> groups) {
    int max_group = -1;
    for (int g : groups) {
        max_group = std::max(max_group, g);
    }
    std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(max_group + 1));
    for (std::size_t i = 0; i < groups.size(); ++i) {
        members[static_cast<std::size_t>(groups[i])].push_back(i);
    }
    std::erase_if(members, [](const auto& m) { return m.empty(); });
    return members;
}

/// Per-row cross-entropy from logits, [B x 1]: -(y log s(z) + (1-y) log s(-z)).
inline Var row_ce_from_logits(const Var& logits, std::span<const double> y) {
    Graph& g = logits.graph();
    const std::size_t n = logits.value().size();
    if (y.size() != n) {
        throw DimensionError("cross-entropy: label count does not match batch");
    }
    std::vector<double> pos(y.begin(), y.end());
    std::vector<double> neg(n);
    for (std::size_t i = 0; i < n; ++i) {
        neg[i] = 1.0 - y[i];
    }
    const Var yp = g.constant(Tensor(logits.shape(), std::move(pos)));
    const Var yn = g.constant(Tensor(logits.shape(), std::move(neg)));
    const Var ll = ops::add(ops::mul(yp, ops::log_sigmoid(logits)), ops::mul(yn, ops::log_sigmoid(ops::neg(logits))));
    return ops::neg(ll);
}

} // namespace detail

/// Mean cross-entropy, computed from logits for stability.
inline Var ce_loss(const Var& logits, std::span<const double> y) {
    if (y.empty()) {
        throw UsageError("ce_loss: empty batch");
    }
    return ops::mean(detail::row_ce_from_logits(logits, y));
}

inline Var sar_loss(const Var& s_hat, std::span<const double> s) {
    if (s.empty()) {
        throw UsageError("sar_loss: empty batch");
    }
    const Var target = s_hat.graph().constant(Tensor(s_hat.shape(), std::vector<double>(s.begin(), s.end())));
    return ops::mean(ops::square(ops::sub(s_hat, target)));
}

/// Interaction fairness: each group's mean fused embedding is softmaxed into a
/// distribution over embedding coordinates, then KL divergences are summed over
/// ordered group pairs. Empty groups are skipped; fewer than two groups gives 0.
inline Var ifc_loss(const Var& fused, std::span<const int> groups) {
    Graph& g = fused.graph();
    const auto members = detail::group_members(groups);
    if (members.size() < 2) {
        return g.constant(Tensor::scalar(0.0));
    }
    std::vector<Var> log_p, p;
    for (const auto& rows : members) {
        const Var lp = ops::log_softmax_lastdim(ops::mean_rows(ops::gather_rows(fused, rows)));
        log_p.push_back(lp);
        p.push_back(ops::exp(lp));
    }
    Var total;
    for (std::size_t i = 0; i < members.size(); ++i) {
        for (std::size_t j = 0; j < members.size(); ++j) {
            if (i == j) {
                continue;
            }
            const Var kl = ops::sum(ops::mul(p[i], ops::sub(log_p[i], log_p[j])));
            total = total.valid() ? ops::add(total, kl) : kl;
        }
    }
    return total;
}

/// Fairness constraint: per-group mean cross-entropy, summed absolute
/// differences over ordered group pairs. Fewer than two groups gives 0.
inline Var fc_loss(const Var& logits, std::span<const double> y, std::span<const int> groups) {
    Graph& g = logits.graph();
    const auto members = detail::group_members(groups);
    if (members.size() < 2) {
        return g.constant(Tensor::scalar(0.0));
    }
    const Var row_ce = detail::row_ce_from_logits(logits, y);
    std::vector<Var> group_ce;
    for (const auto& rows : members) {
        group_ce.push_back(ops::mean(ops::gather_rows(row_ce, rows)));
    }
    Var total;
    for (std::size_t i = 0; i < group_ce.size(); ++i) {
        for (std::size_t j = 0; j < group_ce.size(); ++j) {
            if (i == j) {
                continue;
            }
            const Var d = ops::abs(ops::sub(group_ce[i], group_ce[j]));
            total = total.valid() ? ops::add(total, d) : d;
        }
    }
    return total;
}

/// Graph nodes of every term plus their values.
struct JointLoss {
    Var total;
    LossBreakdown values;
    std::vector<int> groups;
};

/// L0 + lambda_ifc * L_IFC + lambda_fc * L_FC + L_SAR. Groups come from the
/// pseudo-sensitive s_hat. A term whose weight is zero is evaluated for
/// logging but kept off the gradient path; a disabled term is not evaluated.
inline JointLoss joint_loss(const ForwardTrace& trace, std::span<const double> y, std::span<const double> s,
                            const LossWeights& weights, const LossToggles& toggles = {}) {
    weights.validate();
    JointLoss out;
    out.groups = assign_groups(detail::column_values(trace.pseudo_prob));

    const Var l0 = ce_loss(trace.logit, y);
    const Var l_sar = sar_loss(trace.pseudo_prob, s);
    Var total = ops::add(l0, l_sar);
    out.values.l0 = l0.value().item();
    out.values.l_sar = l_sar.value().item();

    if (toggles.enable_ifc) {
        const Var l_ifc = ifc_loss(trace.fused, out.groups);
        out.values.l_ifc = l_ifc.value().item();
        if (weights.lambda_ifc != 0.0) {
            total = ops::add(total, ops::scale(l_ifc, weights.lambda_ifc));
        }
    }
    if (toggles.enable_fc) {
        const Var l_fc = fc_loss(trace.logit, y, out.groups);
        out.values.l_fc = l_fc.value().item();
        if (weights.lambda_fc != 0.0) {
            total = ops::add(total, ops::scale(l_fc, weights.lambda_fc));
        }
    }
    const LossWeights effective{toggles.enable_ifc ? weights.lambda_ifc : 0.0,
                                toggles.enable_fc ? weights.lambda_fc : 0.0};
    out.values.total = combine(out.values, effective);
    out.total = total;
    return out;
}

inline nlohmann::json to_json(const LossBreakdown& b) {
    return nlohmann::json{{"l0", b.l0}, {"l_sar", b.l_sar}, {"l_ifc", b.l_ifc}, {"l_fc", b.l_fc}, {"total", b.total}};
}

} // namespace fairint
