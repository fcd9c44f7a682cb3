#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "fairint/autodiff.hpp"
#include "fairint/data.hpp"
#include "fairint/random.hpp"

namespace fairint {

struct ModelConfig {
    int embed_dim = 4;
    int attention_heads = 1;
    /// Output width of each head's value projection; 0 means embed_dim.
    int value_dim = 0;
    /// Hidden widths of the reconstructor; a final embed_dim layer is appended,
    /// so the defaults give a four-layer MLP 16-16-8-d.
    std::vector<int> sar_hidden{16, 16, 8};
    /// Hidden widths before the prediction head's output unit (empty: single layer).
    std::vector<int> head_hidden{};
    /// Hidden widths of the vanilla MLP baseline.
    std::vector<int> baseline_hidden{64, 32};

    int effective_value_dim() const { return value_dim > 0 ? value_dim : embed_dim; }

    void validate() const {
        if (embed_dim < 1) throw ConfigError("model.embed_dim must be >= 1");
        if (attention_heads < 1) throw ConfigError("model.attention_heads must be >= 1");
        if (value_dim < 0) throw ConfigError("model.value_dim must be >= 0");
        for (const auto* widths : {&sar_hidden, &head_hidden, &baseline_hidden}) {
            for (int w : *widths) {
                if (w < 1) throw ConfigError("model hidden widths must be >= 1");
            }
        }
    }

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

inline nlohmann::json to_json(const ModelConfig& c) {
    return nlohmann::json{{"embed_dim", c.embed_dim},         {"attention_heads", c.attention_heads},
                          {"value_dim", c.value_dim},         {"sar_hidden", c.sar_hidden},
                          {"head_hidden", c.head_hidden},     {"baseline_hidden", c.baseline_hidden}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    try {
        c.embed_dim = j.value("embed_dim", c.embed_dim);
        c.attention_heads = j.value("attention_heads", c.attention_heads);
        c.value_dim = j.value("value_dim", c.value_dim);
        c.sar_hidden = j.value("sar_hidden", c.sar_hidden);
        c.head_hidden = j.value("head_hidden", c.head_hidden);
        c.baseline_hidden = j.value("baseline_hidden", c.baseline_hidden);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed model config: ") + e.what());
    }
    c.validate();
    return c;
}

/// Which predictor sits on top of the shared embeddings and reconstructor.
enum class Architecture { fairint, mlp };

inline const char* to_string(Architecture a) { return a == Architecture::fairint ? "fairint" : "mlp"; }

inline Architecture architecture_from_string(const std::string& s) {
    if (s == "fairint") return Architecture::fairint;
    if (s == "mlp") return Architecture::mlp;
    throw DataError("unknown architecture '" + s + "'");
}

/// Everything one forward pass exposes. All tensors are batched along rows.
struct ForwardTrace {
    std::vector<Var> embeddings;  // per non-sensitive feature, [B x d]
    Var pseudo_embed;             // reconstructor embedding, [B x d]
    Var pseudo_logit;             // [B x 1]
    Var pseudo_prob;              // s_hat, [B x 1]
    std::vector<Var> attention;   // per head, [B x C]; empty for the MLP
    Var interaction;              // concatenated head outputs, [B x d'|H|]
    Var fused;                    // representation fed to the head
    Var logit;                    // [B x 1]
    Var prob;                     // y_hat, [B x 1]
};

namespace layers {

/// x[B x in] * W^T with W stored [out x in], plus an optional bias [out].
inline Var linear(const Var& x, const Var& weight, const Var* bias = nullptr) {
    Var y = ops::matmul(x, ops::transpose(weight));
    return bias ? ops::add_bias(y, *bias) : y;
}

/// Per-row attention of the pseudo-sensitive query over the feature keys:
/// score_c = <W_q q, W_k e_c>, weights = softmax over features. Exactly one
/// score per feature per row.
inline Var bid_attention(const Var& pseudo_embed, std::span<const Var> embeddings, const Var& w_query,
                         const Var& w_key) {
    const Var query = linear(pseudo_embed, w_query);
    std::vector<Var> scores;
    scores.reserve(embeddings.size());
    for (const auto& e : embeddings) {
        scores.push_back(ops::sum_lastdim(ops::mul(query, linear(e, w_key))));
    }
    return ops::softmax_lastdim(ops::concat_lastdim(scores));
}

/// sum_c a_c * (W_v e_c) for one head.
inline Var attend_values(const Var& weights, std::span<const Var> embeddings, const Var& w_value) {
    Var out;
    for (std::size_t c = 0; c < embeddings.size(); ++c) {
        Var term = ops::mul_col(linear(embeddings[c], w_value), ops::slice_lastdim(weights, c, 1));
        out = out.valid() ? ops::add(out, term) : term;
    }
    return out;
}

/// Concatenation over heads of each head's weighted value sum.
inline Var interaction_embedding(std::span<const Var> head_weights, std::span<const Var> embeddings,
                                 std::span<const Var> w_values) {
    std::vector<Var> heads;
    for (std::size_t h = 0; h < head_weights.size(); ++h) {
        heads.push_back(attend_values(head_weights[h], embeddings, w_values[h]));
    }
    return heads.size() == 1 ? heads.front() : ops::concat_lastdim(heads);
}

/// ReLU(interaction + W_res * pseudo_embed).
inline Var residual_fuse(const Var& interaction, const Var& pseudo_embed, const Var& w_res) {
    return ops::relu(ops::add(interaction, linear(pseudo_embed, w_res)));
}

} // namespace layers

/// Embeddings, reconstructor, interaction layer and prediction head (or the
/// vanilla MLP), with all weights in one ParameterStore.
class FairIntModel {
public:
    FairIntModel(Schema schema, ModelConfig config, Architecture arch, std::uint64_t init_seed)
        : schema_(std::move(schema)), config_(std::move(config)), arch_(arch) {
        validate_schema(schema_);
        config_.validate();
        Rng rng(mix_seed(init_seed, 0x1417));
        init(rng);
    }

    /// Rebuilds a model around an existing parameter collection (loaded file).
    FairIntModel(Schema schema, ModelConfig config, Architecture arch, const ParameterStore& params)
        : FairIntModel(std::move(schema), std::move(config), arch, std::uint64_t{0}) {
        if (params.size() != params_.size()) {
            throw DataError("model file has " + std::to_string(params.size()) + " parameters, expected " +
                            std::to_string(params_.size()));
        }
        for (auto& p : params_) {
            const auto& src = params.get(p.name);
            if (src.value.shape() != p.value.shape()) {
                throw DataError("parameter '" + p.name + "' has shape " + shape_str(src.value.shape()) +
                                ", expected " + shape_str(p.value.shape()));
            }
            p.value = src.value;
        }
    }

    const Schema& schema() const { return schema_; }
    const ModelConfig& config() const { return config_; }
    Architecture architecture() const { return arch_; }
    ParameterStore& params() { return params_; }
    const ParameterStore& params() const { return params_; }

    /// Dropout rate for hidden MLP activations (training mode only).
    void set_dropout(double rate) {
        if (!(rate >= 0.0 && rate < 1.0)) {
            throw ConfigError("dropout must lie in [0, 1)");
        }
        dropout_rate_ = rate;
    }
    double dropout() const { return dropout_rate_; }

    /// When set, the interaction layer sees a detached copy of the pseudo
    /// embedding, so the reconstructor's weights move only under its own loss.
    /// Forward values are unchanged.
    void set_isolate_reconstructor(bool on) { isolate_sar_ = on; }
    bool isolate_reconstructor() const { return isolate_sar_; }

    /// Off only for gradient checking: the reconstructor then reads the live
    /// embeddings and every path in the graph is differentiable.
    void set_detach_reconstructor_input(bool on) { detach_sar_input_ = on; }
    bool detach_reconstructor_input() const { return detach_sar_input_; }

    std::size_t feature_count() const { return feature_columns_.size(); }
    const std::vector<std::size_t>& feature_columns() const { return feature_columns_; }

    /// Full forward pass. Dropout draws from `rng` only in training mode.
    ForwardTrace forward(Graph& g, const Batch& batch, bool training, Rng& rng) {
        Binder bind(g, params_);
        ForwardTrace t;
        t.embeddings = embed_features(bind, batch);
        sar_forward(bind, t, training, rng);
        if (arch_ == Architecture::fairint) {
            const Var query = isolate_sar_ ? ops::detach(t.pseudo_embed) : t.pseudo_embed;
            std::vector<Var> w_values;
            for (int h = 0; h < config_.attention_heads; ++h) {
                t.attention.push_back(layers::bid_attention(query, t.embeddings, bind(bid_query_[h]),
                                                            bind(bid_key_[h])));
                w_values.push_back(bind(bid_value_[h]));
            }
            t.interaction = layers::interaction_embedding(t.attention, t.embeddings, w_values);
            t.fused = layers::residual_fuse(t.interaction, query, bind(bid_res_));
            t.logit = mlp(bind, t.fused, head_, training, rng, nullptr);
        } else {
            Var hidden;
            t.logit = mlp(bind, ops::concat_lastdim(t.embeddings), baseline_, training, rng, &hidden);
            t.fused = hidden;
        }
        t.prob = ops::sigmoid(t.logit);
        return t;
    }

    /// Per-feature embeddings; the batch never carries the sensitive column.
    std::vector<Var> embed_features(Graph& g, const Batch& batch) {
        Binder bind(g, params_);
        return embed_features(bind, batch);
    }

private:
    struct Layer {
        std::size_t weight = 0;
        std::size_t bias = 0;
    };

    /// Binds each parameter to a single leaf node per graph.
    class Binder {
    public:
        Binder(Graph& g, ParameterStore& p) : g_(g), p_(p), vars_(p.size()) {}
        Var operator()(std::size_t idx) {
            if (!vars_[idx]) {
                vars_[idx] = g_.param(p_[idx]);
            }
            return *vars_[idx];
        }
        Graph& graph() { return g_; }

    private:
        Graph& g_;
        ParameterStore& p_;
        std::vector<std::optional<Var>> vars_;
    };

    static Tensor glorot(Shape shape, Rng& rng) {
        const double fan_out = static_cast<double>(shape[0]);
        const double fan_in = static_cast<double>(shape.size() > 1 ? shape[1] : 1);
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        Tensor t(std::move(shape));
        for (auto& v : t.values()) {
            v = rng.uniform(-limit, limit);
        }
        return t;
    }

    std::vector<Layer> add_mlp(const std::string& prefix, std::size_t in, const std::vector<int>& hidden,
                               std::size_t out, Rng& rng) {
        std::vector<Layer> layers;
        std::size_t width = in;
        auto widths = hidden;
        widths.push_back(static_cast<int>(out));
        for (std::size_t k = 0; k < widths.size(); ++k) {
            const auto w = static_cast<std::size_t>(widths[k]);
            const std::string name = prefix + (k + 1 == widths.size() ? std::string(".out") : ".l" + std::to_string(k));
            Layer l;
            l.weight = params_.add(name + ".W", glorot(Shape{w, width}, rng));
            l.bias = params_.add(name + ".b", Tensor(Shape{w}));
            layers.push_back(l);
            width = w;
        }
        return layers;
    }

    void init(Rng& rng) {
        const auto d = static_cast<std::size_t>(config_.embed_dim);
        for (std::size_t c = 0; c < schema_.size(); ++c) {
            if (schema_[c].role != FeatureRole::non_sensitive) {
                continue;
            }
            feature_columns_.push_back(c);
            const auto vocab = static_cast<std::size_t>(schema_[c].vocab_size());
            embed_.push_back(params_.add("embed." + schema_[c].name, glorot(Shape{d, vocab}, rng)));
        }
        const std::size_t concat_width = d * feature_columns_.size();
        sar_ = add_mlp("sar", concat_width, config_.sar_hidden, d, rng);
        sar_scalar_ = params_.add("sar.scalar_head.W", glorot(Shape{1, d}, rng));
        if (arch_ == Architecture::fairint) {
            const auto dv = static_cast<std::size_t>(config_.effective_value_dim());
            for (int h = 0; h < config_.attention_heads; ++h) {
                const std::string suffix = ".h" + std::to_string(h);
                bid_query_.push_back(params_.add("bid.W_query" + suffix, glorot(Shape{d, d}, rng)));
                bid_key_.push_back(params_.add("bid.W_key" + suffix, glorot(Shape{d, d}, rng)));
                bid_value_.push_back(params_.add("bid.W_value" + suffix, glorot(Shape{dv, d}, rng)));
            }
            const std::size_t fused = dv * static_cast<std::size_t>(config_.attention_heads);
            bid_res_ = params_.add("bid.W_res", glorot(Shape{fused, d}, rng));
            head_ = add_mlp("head", fused, config_.head_hidden, 1, rng);
        } else {
            baseline_ = add_mlp("mlp", concat_width, config_.baseline_hidden, 1, rng);
        }
    }

    std::vector<Var> embed_features(Binder& bind, const Batch& batch) {
        if (batch.features.size() != feature_columns_.size()) {
            throw DimensionError("batch has " + std::to_string(batch.features.size()) + " features, model expects " +
                                 std::to_string(feature_columns_.size()));
        }
        Graph& g = bind.graph();
        std::vector<Var> out;
        for (std::size_t k = 0; k < batch.features.size(); ++k) {
            const auto& f = batch.features[k];
            const Var table = bind(embed_[k]);
            if (f.kind == FeatureKind::categorical) {
                out.push_back(ops::embedding_lookup(table, f.codes));
            } else {
                // Learned vector scaled by the standardized value.
                const Var x = g.constant(Tensor(Shape{f.values.size(), 1}, f.values));
                out.push_back(ops::matmul(x, ops::transpose(table)));
            }
        }
        return out;
    }

    /// Hidden layers use ReLU and dropout; the last layer is linear.
    /// `last_hidden` receives the input of the final layer.
    Var mlp(Binder& bind, Var x, const std::vector<Layer>& layers, bool training, Rng& rng, Var* last_hidden) {
        for (std::size_t k = 0; k < layers.size(); ++k) {
            if (last_hidden && k + 1 == layers.size()) {
                *last_hidden = x;
            }
            const Var bias = bind(layers[k].bias);
            x = layers::linear(x, bind(layers[k].weight), &bias);
            if (k + 1 < layers.size()) {
                x = ops::relu(x);
                x = ops::dropout(x, dropout_rate_, rng, training);
            }
        }
        return x;
    }

    /// The reconstructor reads detached embeddings: its loss trains only its
    /// own weights, never the shared embedding tables.
    void sar_forward(Binder& bind, ForwardTrace& t, bool training, Rng& rng) {
        std::vector<Var> detached;
        for (const auto& e : t.embeddings) {
            detached.push_back(detach_sar_input_ ? ops::detach(e) : e);
        }
        t.pseudo_embed = mlp(bind, ops::concat_lastdim(detached), sar_, training, rng, nullptr);
        t.pseudo_logit = layers::linear(t.pseudo_embed, bind(sar_scalar_));
        t.pseudo_prob = ops::sigmoid(t.pseudo_logit);
    }

    Schema schema_;
    ModelConfig config_;
    Architecture arch_;
    ParameterStore params_;
    double dropout_rate_ = 0.0;
    bool isolate_sar_ = false;
    bool detach_sar_input_ = true;

    std::vector<std::size_t> feature_columns_;
    std::vector<std::size_t> embed_;
    std::vector<Layer> sar_;
    std::size_t sar_scalar_ = 0;
    std::vector<std::size_t> bid_query_, bid_key_, bid_value_;
    std::size_t bid_res_ = 0;
    std::vector<Layer> head_;
    std::vector<Layer> baseline_;
};

} // namespace fairint
