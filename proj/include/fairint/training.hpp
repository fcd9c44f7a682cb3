#pragma once

#include <cmath>
#include <cstdint>
#include <future>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "fairint/autodiff.hpp"
#include "fairint/data.hpp"
#include "fairint/metrics.hpp"
#include "fairint/model.hpp"
#include "fairint/objectives.hpp"
#include "fairint/random.hpp"

namespace fairint {

struct Ablation {
    bool enable_ifc = true;
    bool enable_fc = true;
    bool enable_bid = true;

    friend bool operator==(const Ablation&, const Ablation&) = default;
};

struct TrainConfig {
    double lambda_ifc = 1.0;
    double lambda_fc = 1.0;
    double learning_rate = 1e-3;
    std::size_t batch_size = 256;
    int max_epochs = 200;
    int patience = 10;
    double dropout = 0.1;
    double l2 = 1e-5;
    /// Reconstructor weights are updated by the reconstruction loss alone.
    bool isolate_reconstructor = true;
    std::uint64_t seed = 1;
    Ablation ablation;

    void validate() const {
        LossWeights{lambda_ifc, lambda_fc}.validate();
        if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be positive");
        if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
        if (max_epochs < 0) throw ConfigError("train.max_epochs must be >= 0");
        if (patience < 1) throw ConfigError("train.patience must be >= 1");
        if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("train.dropout must lie in [0, 1)");
        if (!(l2 >= 0.0)) throw ConfigError("train.l2 must be >= 0");
    }
};

inline nlohmann::json to_json(const Ablation& a) {
    return nlohmann::json{{"enable_ifc", a.enable_ifc}, {"enable_fc", a.enable_fc}, {"enable_bid", a.enable_bid}};
}

inline nlohmann::json to_json(const TrainConfig& c) {
    return nlohmann::json{{"lambda_ifc", c.lambda_ifc}, {"lambda_fc", c.lambda_fc}, {"learning_rate", c.learning_rate},
                          {"batch_size", c.batch_size}, {"max_epochs", c.max_epochs}, {"patience", c.patience},
                          {"dropout", c.dropout},       {"l2", c.l2},                 {"seed", c.seed},
                          {"isolate_reconstructor", c.isolate_reconstructor},
                          {"ablation", to_json(c.ablation)}};
}

inline TrainConfig train_config_from_json(const nlohmann::json& j) {
    TrainConfig c;
    try {
        c.lambda_ifc = j.value("lambda_ifc", c.lambda_ifc);
        c.lambda_fc = j.value("lambda_fc", c.lambda_fc);
        c.learning_rate = j.value("learning_rate", c.learning_rate);
        c.batch_size = j.value("batch_size", c.batch_size);
        c.max_epochs = j.value("max_epochs", c.max_epochs);
        c.patience = j.value("patience", c.patience);
        c.dropout = j.value("dropout", c.dropout);
        c.l2 = j.value("l2", c.l2);
        c.seed = j.value("seed", c.seed);
        c.isolate_reconstructor = j.value("isolate_reconstructor", c.isolate_reconstructor);
        if (j.contains("ablation")) {
            const auto& a = j.at("ablation");
            c.ablation.enable_ifc = a.value("enable_ifc", true);
            c.ablation.enable_fc = a.value("enable_fc", true);
            c.ablation.enable_bid = a.value("enable_bid", true);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed train config: ") + e.what());
    }
    c.validate();
    return c;
}

struct EpochRecord {
    int epoch = 0;
    LossBreakdown loss;
    std::optional<double> val_auc;
    std::optional<double> val_ddp;
    std::optional<double> val_deo;
};

struct TrainHistory {
    std::vector<EpochRecord> epochs;
    std::optional<int> best_epoch;
    std::string stopping_reason;
};

struct TrainResult {
    FairIntModel model;
    TrainHistory history;
};

/// Adam with bias correction.
class Adam {
public:
    Adam(const ParameterStore& params, double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
        for (const auto& p : params) {
            m_.emplace_back(p.value.size(), 0.0);
            v_.emplace_back(p.value.size(), 0.0);
        }
    }

    void step(ParameterStore& params) {
        ++t_;
        const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        std::size_t k = 0;
        for (auto& p : params) {
            auto w = p.value.values();
            const auto g = p.grad.values();
            auto& m = m_[k];
            auto& v = v_[k];
            for (std::size_t i = 0; i < w.size(); ++i) {
                m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
                v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
                w[i] -= lr_ * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps_);
            }
            ++k;
        }
    }

private:
    double lr_, beta1_, beta2_, eps_;
    std::uint64_t t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

/// Eval-mode outputs over a split, rows in split order.
struct Predictions {
    std::vector<std::size_t> rows;
    std::vector<double> scores;
    std::vector<double> pseudo;
    std::vector<double> labels;
    std::vector<int> sensitive;
    /// Per head, row-major [rows x features]; empty for the MLP.
    std::vector<std::vector<double>> attention;
};

inline Predictions predict_split(FairIntModel& model, const Dataset& ds, SplitTag split,
                                 std::size_t chunk = 4096) {
    Predictions out;
    out.attention.resize(model.architecture() == Architecture::fairint
                             ? static_cast<std::size_t>(model.config().attention_heads)
                             : 0);
    Rng unused(0);
    for (const auto& batch : ordered_batches(ds, split, chunk)) {
        Graph g;
        const auto trace = model.forward(g, batch, false, unused);
        for (std::size_t i = 0; i < batch.size(); ++i) {
            out.scores.push_back(trace.prob.value()[i]);
            out.pseudo.push_back(trace.pseudo_prob.value()[i]);
        }
        for (std::size_t h = 0; h < out.attention.size(); ++h) {
            const auto vals = trace.attention[h].value().values();
            out.attention[h].insert(out.attention[h].end(), vals.begin(), vals.end());
        }
        out.rows.insert(out.rows.end(), batch.rows.begin(), batch.rows.end());
        out.labels.insert(out.labels.end(), batch.labels.begin(), batch.labels.end());
        out.sensitive.insert(out.sensitive.end(), batch.true_sensitive.begin(), batch.true_sensitive.end());
    }
    if (out.rows.empty()) {
        throw UsageError(std::string("split '") + to_string(split) + "' is empty");
    }
    return out;
}

inline FairnessReport report_from_predictions(const Predictions& p, double threshold, GroupSource source) {
    const std::vector<int> groups = source == GroupSource::pseudo ? assign_groups(p.pseudo) : p.sensitive;
    return make_report(p.scores, p.labels, groups, p.pseudo, p.sensitive, threshold, source);
}

/// Eval-mode forward over a split followed by the fairness metrics. The
/// sensitive column reaches only the metric layer.
inline FairnessReport evaluate(FairIntModel& model, const Dataset& ds, SplitTag split, double threshold = 0.5,
                               GroupSource source = GroupSource::true_sensitive) {
    return report_from_predictions(predict_split(model, ds, split), threshold, source);
}

namespace detail {

inline void add_l2(ParameterStore& params, double l2) {
    if (l2 == 0.0) {
        return;
    }
    for (auto& p : params) {
        auto g = p.grad.values();
        const auto w = p.value.values();
        for (std::size_t i = 0; i < g.size(); ++i) {
            g[i] += 2.0 * l2 * w[i];
        }
    }
}

template <typename F>
std::optional<double> try_metric(F&& f) {
    try {
        return f();
    } catch (const MetricError&) {
        return std::nullopt;
    }
}

} // namespace detail

/// Mini-batch Adam on the joint objective with L2 on every weight, validation
/// AUC after each epoch, early stopping, and restoration of the best epoch.
/// Fully deterministic for a given dataset, configs and seed.
inline TrainResult train(const Dataset& ds, const ModelConfig& model_config, const TrainConfig& cfg) {
    cfg.validate();
    const Architecture arch = cfg.ablation.enable_bid ? Architecture::fairint : Architecture::mlp;
    FairIntModel model(ds.schema, model_config, arch, cfg.seed);
    model.set_dropout(cfg.dropout);
    model.set_isolate_reconstructor(cfg.isolate_reconstructor);
    TrainHistory history;
    if (cfg.max_epochs == 0) {
        history.stopping_reason = "max_epochs";
        return TrainResult{std::move(model), std::move(history)};
    }

    const LossWeights weights{cfg.lambda_ifc, cfg.lambda_fc};
    const LossToggles toggles{cfg.ablation.enable_ifc, cfg.ablation.enable_fc};
    Adam adam(model.params(), cfg.learning_rate);
    ParameterStore best = model.params();
    double best_auc = -1.0;
    history.stopping_reason = "max_epochs";

    for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
        Rng dropout_rng(mix_seed(cfg.seed, 0xD70, static_cast<std::uint64_t>(epoch)));
        LossBreakdown sums;
        std::size_t count = 0;
        const auto epoch_batches = batches(ds, SplitTag::train, cfg.batch_size, cfg.seed, static_cast<std::uint64_t>(epoch));
        for (std::size_t b = 0; b < epoch_batches.size(); ++b) {
            const Batch& batch = epoch_batches[b];
            std::vector<double> s(batch.true_sensitive.begin(), batch.true_sensitive.end());
            Graph g;
            JointLoss loss;
            try {
                const auto trace = model.forward(g, batch, true, dropout_rng);
                loss = joint_loss(trace, batch.labels, s, weights, toggles);
                backward(loss.total, model.params());
            } catch (const DomainError& e) {
                throw TrainingError("training diverged at epoch " + std::to_string(epoch) + ", batch " +
                                    std::to_string(b) + ": " + e.what());
            }
            if (!std::isfinite(loss.values.total)) {
                throw TrainingError("non-finite loss at epoch " + std::to_string(epoch) + ", batch " +
                                    std::to_string(b));
            }
            detail::add_l2(model.params(), cfg.l2);
            adam.step(model.params());
            sums.l0 += loss.values.l0;
            sums.l_sar += loss.values.l_sar;
            sums.l_ifc += loss.values.l_ifc;
            sums.l_fc += loss.values.l_fc;
            ++count;
        }

        EpochRecord rec;
        rec.epoch = epoch;
        const double inv = 1.0 / static_cast<double>(count);
        rec.loss.l0 = sums.l0 * inv;
        rec.loss.l_sar = sums.l_sar * inv;
        rec.loss.l_ifc = sums.l_ifc * inv;
        rec.loss.l_fc = sums.l_fc * inv;
        rec.loss.total = combine(rec.loss, LossWeights{toggles.enable_ifc ? cfg.lambda_ifc : 0.0,
                                                       toggles.enable_fc ? cfg.lambda_fc : 0.0});

        const auto pred = predict_split(model, ds, SplitTag::val);
        const auto labels = threshold_labels(pred.scores, 0.5);
        rec.val_auc = detail::try_metric([&] { return auc_roc(pred.scores, pred.labels); });
        rec.val_ddp = detail::try_metric([&] { return delta_dp(labels, pred.sensitive); });
        rec.val_deo = detail::try_metric([&] { return delta_eo(labels, pred.labels, pred.sensitive); });
        history.epochs.push_back(rec);

        const double auc = rec.val_auc.value_or(0.5);
        if (auc > best_auc) {
            best_auc = auc;
            history.best_epoch = epoch;
            best = model.params();
        } else if (epoch - *history.best_epoch >= cfg.patience) {
            history.stopping_reason = "early_stopping";
            break;
        }
    }
    for (std::size_t k = 0; k < best.size(); ++k) {
        model.params()[k].value = best[k].value;
    }
    return TrainResult{std::move(model), std::move(history)};
}

inline nlohmann::json epoch_to_json(const EpochRecord& r) {
    auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
    return nlohmann::json{{"epoch", r.epoch},       {"l0", r.loss.l0},       {"l_sar", r.loss.l_sar},
                          {"l_ifc", r.loss.l_ifc},  {"l_fc", r.loss.l_fc},   {"total", r.loss.total},
                          {"val_auc", opt(r.val_auc)}, {"val_ddp", opt(r.val_ddp)}, {"val_deo", opt(r.val_deo)}};
}

/// JSON lines: one metadata record (keyed "meta") and then one record per epoch.
inline std::string history_to_jsonl(const TrainHistory& h, const TrainConfig& cfg) {
    nlohmann::json meta{{"lambda_ifc", cfg.lambda_ifc},
                        {"lambda_fc", cfg.lambda_fc},
                        {"seed", cfg.seed},
                        {"ablation", to_json(cfg.ablation)},
                        {"best_epoch", h.best_epoch ? nlohmann::json(*h.best_epoch) : nlohmann::json(nullptr)},
                        {"stopping_reason", h.stopping_reason}};
    std::string out = nlohmann::json{{"meta", std::move(meta)}}.dump() + "\n";
    for (const auto& e : h.epochs) {
        out += epoch_to_json(e).dump() + "\n";
    }
    return out;
}

// ---------------------------------------------------------------------------
// Sweeps

struct SweepPoint {
    double lambda_ifc = 0.0;
    double lambda_fc = 0.0;
    std::optional<FairnessReport> report;
    std::string error;
};

/// One independent seeded run per (lambda_ifc, lambda_fc) pair, evaluated on
/// the test split. Results keep the grid order; a failing point records its
/// error and the sweep moves on. Up to `max_parallel` points run concurrently.
inline std::vector<SweepPoint> sweep(const Dataset& ds, const ModelConfig& model_config, const TrainConfig& base,
                                     const std::vector<std::pair<double, double>>& grid, double threshold = 0.5,
                                     GroupSource source = GroupSource::true_sensitive, std::size_t max_parallel = 1) {
    if (grid.empty()) {
        throw ConfigError("sweep grid is empty");
    }
    auto run_point = [&](std::pair<double, double> lambdas) {
        SweepPoint pt;
        pt.lambda_ifc = lambdas.first;
        pt.lambda_fc = lambdas.second;
        try {
            TrainConfig cfg = base;
            cfg.lambda_ifc = lambdas.first;
            cfg.lambda_fc = lambdas.second;
            auto result = train(ds, model_config, cfg);
            pt.report = evaluate(result.model, ds, SplitTag::test, threshold, source);
        } catch (const Error& e) {
            pt.error = std::string(kind_name(e.kind())) + ": " + e.what();
        }
        return pt;
    };
    std::vector<SweepPoint> out(grid.size());
    const std::size_t width = std::max<std::size_t>(1, max_parallel);
    for (std::size_t start = 0; start < grid.size(); start += width) {
        std::vector<std::future<SweepPoint>> running;
        const std::size_t stop = std::min(grid.size(), start + width);
        for (std::size_t k = start; k < stop; ++k) {
            running.push_back(std::async(width == 1 ? std::launch::deferred : std::launch::async, run_point, grid[k]));
        }
        for (std::size_t k = start; k < stop; ++k) {
            out[k] = running[k - start].get();
        }
    }
    return out;
}

} // namespace fairint
