#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fairint/error.hpp"
#include "fairint/random.hpp"
#include "fairint/tensor.hpp"

namespace fairint {

/// A named trainable tensor with its gradient buffer.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
};

/// Ordered collection of parameters. Names are unique; insertion order is the
/// serialization order. Copies are deep, which is how training snapshots work.
class ParameterStore {
public:
    std::size_t add(const std::string& name, Tensor value) {
        if (index_.count(name)) {
            throw UsageError("duplicate parameter name '" + name + "'");
        }
        Tensor grad(value.shape());
        params_.push_back(Parameter{name, std::move(value), std::move(grad)});
        index_.emplace(name, params_.size() - 1);
        return params_.size() - 1;
    }

    Parameter& operator[](std::size_t i) { return params_.at(i); }
    const Parameter& operator[](std::size_t i) const { return params_.at(i); }

    Parameter& get(const std::string& name) { return params_.at(index_of(name)); }
    const Parameter& get(const std::string& name) const { return params_.at(index_of(name)); }

    bool contains(const std::string& name) const { return index_.count(name) != 0; }

    std::size_t index_of(const std::string& name) const {
        auto it = index_.find(name);
        if (it == index_.end()) {
            throw UsageError("unknown parameter '" + name + "'");
        }
        return it->second;
    }

    std::size_t size() const noexcept { return params_.size(); }
    auto begin() { return params_.begin(); }
    auto end() { return params_.end(); }
    auto begin() const { return params_.begin(); }
    auto end() const { return params_.end(); }

    void zero_grad() {
        for (auto& p : params_) {
            p.grad.fill(0.0);
        }
    }

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& p : params_) {
            n += p.value.size();
        }
        return n;
    }

private:
    std::deque<Parameter> params_;
    std::map<std::string, std::size_t> index_;
};

class Graph;

/// Handle to a node in a Graph.
class Var {
public:
    Var() = default;
    Var(Graph* graph, std::size_t id) : graph_(graph), id_(id) {}

    Graph& graph() const { return *graph_; }
    std::size_t id() const noexcept { return id_; }
    bool valid() const noexcept { return graph_ != nullptr; }
    const Tensor& value() const;
    const Shape& shape() const { return value().shape(); }
    bool requires_grad() const;

private:
    Graph* graph_ = nullptr;
    std::size_t id_ = 0;
};

/// Append-only reverse-mode tape. Nodes are recorded in evaluation order, so
/// every node's inputs precede it and backward is a single reverse sweep.
class Graph {
public:
    using BackwardFn = std::function<void(Graph&, std::size_t)>;

    struct Node {
        const char* op = "";
        Tensor value;
        std::vector<std::size_t> inputs;
        bool requires_grad = false;
        Parameter* param = nullptr;
        BackwardFn backward;
    };

    Graph() = default;
    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    Var constant(Tensor value) { return record("constant", std::move(value), {}, nullptr); }

    /// Leaf bound to a parameter; backward accumulates into param.grad.
    Var param(Parameter& p) {
        Var v = record("param", p.value, {}, nullptr);
        nodes_[v.id()].requires_grad = true;
        nodes_[v.id()].param = &p;
        return v;
    }

    /// Records an op. The backward callback runs only when the node needs a gradient.
    Var record(const char* op, Tensor value, std::vector<std::size_t> inputs, BackwardFn backward) {
        if (!value.all_finite()) {
            throw DomainError(std::string("non-finite value produced by ") + op);
        }
        Node node;
        node.op = op;
        node.value = std::move(value);
        for (auto in : inputs) {
            node.requires_grad = node.requires_grad || nodes_[in].requires_grad;
        }
        node.inputs = std::move(inputs);
        if (node.requires_grad) {
            node.backward = std::move(backward);
        }
        nodes_.push_back(std::move(node));
        return Var(this, nodes_.size() - 1);
    }

    const Node& node(std::size_t id) const { return nodes_.at(id); }
    std::size_t size() const noexcept { return nodes_.size(); }

    const Tensor& value(std::size_t id) const { return nodes_[id].value; }
    bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

    /// Gradient buffer for a node; zero-initialized on first access.
    Tensor& grad_slot(std::size_t id) {
        if (grads_.size() < nodes_.size()) {
            grads_.resize(nodes_.size());
            has_grad_.resize(nodes_.size(), false);
        }
        if (!has_grad_[id]) {
            grads_[id] = Tensor(nodes_[id].value.shape());
            has_grad_[id] = true;
        }
        return grads_[id];
    }

    /// Gradient of the last backward root with respect to v (zeros if unreached).
    Tensor grad(Var v) { return grad_slot(v.id()); }

    /// Reverse sweep from a scalar root. Parameter gradients are accumulated,
    /// so callers zero them first (see backward(Var, ParameterStore&)).
    void backward(Var root) {
        if (root.value().size() != 1) {
            throw UsageError("backward root must be scalar, got shape " + shape_str(root.value().shape()));
        }
        grads_.assign(nodes_.size(), Tensor());
        has_grad_.assign(nodes_.size(), false);
        grad_slot(root.id()).fill(1.0);
        for (std::size_t id = root.id() + 1; id-- > 0;) {
            const Node& n = nodes_[id];
            if (!n.requires_grad || !has_grad_[id]) {
                continue;
            }
            if (n.param != nullptr) {
                auto dst = n.param->grad.values();
                auto src = grads_[id].values();
                for (std::size_t i = 0; i < dst.size(); ++i) {
                    dst[i] += src[i];
                }
            } else if (n.backward) {
                n.backward(*this, id);
            }
        }
    }

private:
    // deque: references to recorded values stay valid while the tape grows.
    std::deque<Node> nodes_;
    std::vector<Tensor> grads_;
    std::vector<bool> has_grad_;
};

inline const Tensor& Var::value() const { return graph_->value(id_); }
inline bool Var::requires_grad() const { return graph_->requires_grad(id_); }

/// Zeroes every parameter gradient, then back-propagates from root. Parameters
/// the root does not depend on end with zero gradient.
inline void backward(Var root, ParameterStore& params) {
    params.zero_grad();
    root.graph().backward(root);
}

namespace ops {

namespace detail {

inline void same_graph(const Var& a, const Var& b) {
    if (&a.graph() != &b.graph()) {
        throw UsageError("operands belong to different graphs");
    }
}

inline void same_shape(const char* op, const Var& a, const Var& b) {
    same_graph(a, b);
    if (a.shape() != b.shape()) {
        throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                             shape_str(b.shape()));
    }
}

/// Adds src into the gradient slot of input `id` if that input needs a gradient.
inline void accumulate(Graph& g, std::size_t id, std::span<const double> src) {
    if (!g.requires_grad(id)) {
        return;
    }
    auto dst = g.grad_slot(id).values();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] += src[i];
    }
}

template <typename Forward, typename Derivative>
Var unary(const char* op, const Var& x, Forward f, Derivative df) {
    Tensor out(x.shape());
    const auto in = x.value().values();
    auto o = out.values();
    for (std::size_t i = 0; i < o.size(); ++i) {
        o[i] = f(in[i]);
    }
    const std::size_t xid = x.id();
    return x.graph().record(op, std::move(out), {xid}, [xid, df](Graph& g, std::size_t self) {
        if (!g.requires_grad(xid)) {
            return;
        }
        const auto xin = g.value(xid).values();
        const auto y = g.value(self).values();
        const auto gy = g.grad_slot(self).values();
        auto gx = g.grad_slot(xid).values();
        for (std::size_t i = 0; i < gx.size(); ++i) {
            gx[i] += gy[i] * df(xin[i], y[i]);
        }
    });
}

} // namespace detail

/// Plain matrix product of an m x k and a k x n tensor.
inline Var matmul(const Var& a, const Var& b) {
    detail::same_graph(a, b);
    const Tensor& A = a.value();
    const Tensor& B = b.value();
    if (A.rank() != 2 || B.rank() != 2 || A.cols() != B.rows()) {
        throw DimensionError("matmul: incompatible shapes " + shape_str(A.shape()) + " and " +
                             shape_str(B.shape()));
    }
    const std::size_t m = A.rows(), k = A.cols(), n = B.cols();
    Tensor out(Shape{m, n});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t p = 0; p < k; ++p) {
            const double aip = A[i * k + p];
            for (std::size_t j = 0; j < n; ++j) {
                out[i * n + j] += aip * B[p * n + j];
            }
        }
    }
    const std::size_t aid = a.id(), bid = b.id();
    return a.graph().record("matmul", std::move(out), {aid, bid}, [aid, bid, m, k, n](Graph& g, std::size_t self) {
        const Tensor& G = g.grad_slot(self);
        const Tensor& A = g.value(aid);
        const Tensor& B = g.value(bid);
        if (g.requires_grad(aid)) {
            // dA = G * B^T
            Tensor& gA = g.grad_slot(aid);
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    double acc = 0.0;
                    for (std::size_t j = 0; j < n; ++j) {
                        acc += G[i * n + j] * B[p * n + j];
                    }
                    gA[i * k + p] += acc;
                }
            }
        }
        if (g.requires_grad(bid)) {
            // dB = A^T * G
            Tensor& gB = g.grad_slot(bid);
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t p = 0; p < k; ++p) {
                    const double aip = A[i * k + p];
                    for (std::size_t j = 0; j < n; ++j) {
                        gB[p * n + j] += aip * G[i * n + j];
                    }
                }
            }
        }
    });
}

inline Var transpose(const Var& x) {
    const Tensor& X = x.value();
    const std::size_t m = X.rows(), n = X.cols();
    Tensor out(Shape{n, m});
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            out[j * m + i] = X[i * n + j];
        }
    }
    const std::size_t xid = x.id();
    return x.graph().record("transpose", std::move(out), {xid}, [xid, m, n](Graph& g, std::size_t self) {
        if (!g.requires_grad(xid)) {
            return;
        }
        const Tensor& G = g.grad_slot(self);
        Tensor& gx = g.grad_slot(xid);
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                gx[i * n + j] += G[j * m + i];
            }
        }
    });
}

inline Var add(const Var& a, const Var& b) {
    detail::same_shape("add", a, b);
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a.value()[i] + b.value()[i];
    }
    const std::size_t aid = a.id(), bid = b.id();
    return a.graph().record("add", std::move(out), {aid, bid}, [aid, bid](Graph& g, std::size_t self) {
        const auto G = g.grad_slot(self).values();
        detail::accumulate(g, aid, G);
        detail::accumulate(g, bid, G);
    });
}

inline Var sub(const Var& a, const Var& b) {
    detail::same_shape("sub", a, b);
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a.value()[i] - b.value()[i];
    }
    const std::size_t aid = a.id(), bid = b.id();
    return a.graph().record("sub", std::move(out), {aid, bid}, [aid, bid](Graph& g, std::size_t self) {
        const auto G = g.grad_slot(self).values();
        detail::accumulate(g, aid, G);
        if (g.requires_grad(bid)) {
            auto gb = g.grad_slot(bid).values();
            for (std::size_t i = 0; i < gb.size(); ++i) {
                gb[i] -= G[i];
            }
        }
    });
}

/// Elementwise product.
inline Var mul(const Var& a, const Var& b) {
    detail::same_shape("mul", a, b);
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i] = a.value()[i] * b.value()[i];
    }
    const std::size_t aid = a.id(), bid = b.id();
    return a.graph().record("mul", std::move(out), {aid, bid}, [aid, bid](Graph& g, std::size_t self) {
        const auto G = g.grad_slot(self).values();
        const auto A = g.value(aid).values();
        const auto B = g.value(bid).values();
        if (g.requires_grad(aid)) {
            auto ga = g.grad_slot(aid).values();
            for (std::size_t i = 0; i < ga.size(); ++i) {
                ga[i] += G[i] * B[i];
            }
        }
        if (g.requires_grad(bid)) {
            auto gb = g.grad_slot(bid).values();
            for (std::size_t i = 0; i < gb.size(); ++i) {
                gb[i] += G[i] * A[i];
            }
        }
    });
}

/// x[m x n] + bias broadcast over rows; bias has n elements (shape [n] or [1 x n]).
inline Var add_bias(const Var& x, const Var& bias) {
    detail::same_graph(x, bias);
    const std::size_t n = x.value().last_extent();
    if (bias.value().size() != n) {
        throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " does not match " + shape_str(x.shape()));
    }
    Tensor out = x.value();
    const std::size_t m = out.outer_count();
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            out[i * n + j] += bias.value()[j];
        }
    }
    const std::size_t xid = x.id(), bid = bias.id();
    return x.graph().record("add_bias", std::move(out), {xid, bid}, [xid, bid, m, n](Graph& g, std::size_t self) {
        const auto G = g.grad_slot(self).values();
        detail::accumulate(g, xid, G);
        if (g.requires_grad(bid)) {
            auto gb = g.grad_slot(bid).values();
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    gb[j] += G[i * n + j];
                }
            }
        }
    });
}

/// x[m x n] scaled row-wise by column[m x 1].
inline Var mul_col(const Var& x, const Var& column) {
    detail::same_graph(x, column);
    const Tensor& X = x.value();
    const Tensor& C = column.value();
    const std::size_t n = X.last_extent();
    const std::size_t m = X.outer_count();
    if (C.size() != m) {
        throw DimensionError("mul_col: column " + shape_str(C.shape()) + " does not match " + shape_str(X.shape()));
    }
    Tensor out(X.shape());
    for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            out[i * n + j] = X[i * n + j] * C[i];
        }
    }
    const std::size_t xid = x.id(), cid = column.id();
    return x.graph().record("mul_col", std::move(out), {xid, cid}, [xid, cid, m, n](Graph& g, std::size_t self) {
        const auto G = g.grad_slot(self).values();
        const auto X = g.value(xid).values();
        const auto C = g.value(cid).values();
        if (g.requires_grad(xid)) {
            auto gx = g.grad_slot(xid).values();
            for (std::size_t i = 0; i < m; ++i) {
                for (std::size_t j = 0; j < n; ++j) {
                    gx[i * n + j] += G[i * n + j] * C[i];
                }
            }
        }
        if (g.requires_grad(cid)) {
            auto gc = g.grad_slot(cid).values();
            for (std::size_t i = 0; i < m; ++i) {
                double acc = 0.0;
                for (std::size_t j = 0; j < n; ++j) {
                    acc += G[i * n + j] * X[i * n + j];
                }
                gc[i] += acc;
            }
        }
    });
}

inline Var scale(const Var& x, double factor) {
    return detail::unary(
        "scale", x, [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

inline Var add_scalar(const Var& x, double c) {
    return detail::unary(
        "add_scalar", x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

inline Var neg(const Var& x) { return scale(x, -1.0); }

/// Subgradient at exactly 0 is 0.
inline Var relu(const Var& x) {
    return detail::unary(
        "relu", x, [](double v) { return v > 0.0 ? v : 0.0; },
        [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

inline double stable_sigmoid(double v) {
    if (v >= 0.0) {
        return 1.0 / (1.0 + std::exp(-v));
    }
    const double e = std::exp(v);
    return e / (1.0 + e);
}

inline Var sigmoid(const Var& x) {
    return detail::unary(
        "sigmoid", x, [](double v) { return stable_sigmoid(v); },
        [](double, double y) { return y * (1.0 - y); });
}

/// log(sigmoid(x)) without the underflow of composing the two.
inline Var log_sigmoid(const Var& x) {
    return detail::unary(
        "log_sigmoid", x,
        [](double v) { return v >= 0.0 ? -std::log1p(std::exp(-v)) : v - std::log1p(std::exp(v)); },
        [](double v, double) { return 1.0 - stable_sigmoid(v); });
}

inline Var exp(const Var& x) {
    return detail::unary(
        "exp", x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

inline Var log(const Var& x) {
    for (double v : x.value().values()) {
        if (!(v > 0.0)) {
            throw DomainError("log of non-positive value " + std::to_string(v));
        }
    }
    return detail::unary(
        "log", x, [](double v) { return std::log(v); }, [](double v, double) { return 1.0 / v; });
}

/// |x|; derivative at 0 taken as 0.
inline Var abs(const Var& x) {
    return detail::unary(
        "abs", x, [](double v) { return std::fabs(v); },
        [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

inline Var square(const Var& x) {
    return detail::unary(
        "square", x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

/// Softmax over each last-dimension slice, max-subtracted.
inline Var softmax_lastdim(const Var& x) {
    const Tensor& X = x.value();
    const std::size_t n = X.last_extent();
    const std::size_t m = X.outer_count();
    Tensor out(X.shape());
    for (std::size_t r = 0; r < m; ++r) {
        const double* in = X.values().data() + r * n;
        double* o = &out[r * n];
        const double mx = *std::max_element(in, in + n);
        double total = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            o[j] = std::exp(in[j] - mx);
            total += o[j];
        }
        for (std::size_t j = 0; j < n; ++j) {
            o[j] /= total;
        }
    }
    const std::size_t xid = x.id();
    return x.graph().record("softmax_lastdim", std::move(out), {xid}, [xid, m, n](Graph& g, std::size_t self) {
        if (!g.requires_grad(xid)) {
            return;
        }
        const Tensor& Y = g.value(self);
        const Tensor& G = g.grad_slot(self);
        Tensor& gx = g.grad_slot(xid);
        for (std::size_t r = 0; r < m; ++r) {
            double dot = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                dot += G[r * n + j] * Y[r * n + j];
            }
            for (std::size_t j = 0; j < n; ++j) {
                gx[r * n + j] += Y[r * n + j] * (G[r * n + j] - dot);
            }
        }
    });
}

inline Var log_softmax_lastdim(const Var& x) {
    const Tensor& X = x.value();
    const std::size_t n = X.last_extent();
    const std::size_t m = X.outer_count();
    Tensor out(X.shape());
    for (std::size_t r = 0; r < m; ++r) {
        const double* in = X.values().data() + r * n;
        const double mx = *std::max_element(in, in + n);
        double total = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            total += std::exp(in[j] - mx);
        }
        const double lse = mx + std::log(total);
        for (std::size_t j = 0; j < n; ++j) {
            out[r * n + j] = in[j] - lse;
        }
    }
    const std::size_t xid = x.id();
    return x.graph().record("log_softmax_lastdim", std::move(out), {xid}, [xid, m, n](Graph& g, std::size_t self) {
        if (!g.requires_grad(xid)) {
            return;
        }
        const Tensor& Y = g.value(self);
        const Tensor& G = g.grad_slot(self);
        Tensor& gx = g.grad_slot(xid);
        for (std::size_t r = 0; r < m; ++r) {
            double gsum = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                gsum += G[r * n + j];
            }
            for (std::size_t j = 0; j < n; ++j) {
                gx[r * n + j] += G[r * n + j] - std::exp(Y[r * n + j]) * gsum;
            }
        }
    });
}

/// Concatenates along the last dimension; all leading extents must agree.
inline Var concat_lastdim(std::span<const Var> parts) {
    if (parts.empty()) {
        throw DimensionError("concat_lastdim: no operands");
    }
    Graph& graph = parts.front().graph();
    Shape lead(parts.front().shape().begin(), parts.front().shape().end() - 1);
    std::vector<std::size_t> widths;
    std::vector<std::size_t> ids;
    std::size_t total = 0;
    for (const auto& p : parts) {
        detail::same_graph(parts.front(), p);
        Shape pl(p.shape().begin(), p.shape().end() - 1);
        if (pl != lead) {
            throw DimensionError("concat_lastdim: leading extents differ " + shape_str(p.shape()) + " vs " +
                                 shape_str(parts.front().shape()));
        }
        widths.push_back(p.value().last_extent());
        ids.push_back(p.id());
        total += widths.back();
    }
    Shape shape = lead;
    shape.push_back(total);
    Tensor out(shape);
    const std::size_t m = out.outer_count();
    std::size_t offset = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const Tensor& P = parts[k].value();
        for (std::size_t r = 0; r < m; ++r) {
            for (std::size_t j = 0; j < widths[k]; ++j) {
                out[r * total + offset + j] = P[r * widths[k] + j];
            }
        }
        offset += widths[k];
    }
    auto inputs = ids;
    return graph.record("concat_lastdim", std::move(out), std::move(inputs),
                        [ids, widths, m, total](Graph& g, std::size_t self) {
                            const Tensor& G = g.grad_slot(self);
                            std::size_t offset = 0;
                            for (std::size_t k = 0; k < ids.size(); ++k) {
                                if (g.requires_grad(ids[k])) {
                                    Tensor& gp = g.grad_slot(ids[k]);
                                    for (std::size_t r = 0; r < m; ++r) {
                                        for (std::size_t j = 0; j < widths[k]; ++j) {
                                            gp[r * widths[k] + j] += G[r * total + offset + j];
                                        }
                                    }
                                }
                                offset += widths[k];
                            }
                        });
}

inline Var concat_lastdim(std::initializer_list<Var> parts) {
    return concat_lastdim(std::span<const Var>(parts.begin(), parts.size()));
}

/// Columns [start, start+len) of every last-dimension slice.
inline Var slice_lastdim(const Var& x, std::size_t start, std::size_t len) {
    const Tensor& X = x.value();
    const std::size_t n = X.last_extent();
    if (len == 0 || start + len > n) {
        throw DimensionError("slice_lastdim: range out of bounds for " + shape_str(X.shape()));
    }
    Shape shape = X.shape();
    shape.back() = len;
    Tensor out(shape);
    const std::size_t m = X.outer_count();
    for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t j = 0; j < len; ++j) {
            out[r * len + j] = X[r * n + start + j];
        }
    }
    const std::size_t xid = x.id();
    return x.graph().record("slice_lastdim", std::move(out), {xid}, [xid, m, n, start, len](Graph& g, std::size_t self) {
        if (!g.requires_grad(xid)) {
            return;
        }
        const Tensor& G = g.grad_slot(self);
        Tensor& gx = g.grad_slot(xid);
        for (std::size_t r = 0; r < m; ++r) {
            for (std::size_t j = 0; j < len; ++j) {
                gx[r * n + start + j] += G[r * len + j];
            }
        }
    });
}

inline Var sum(const Var& x) {
    double total = 0.0;
    for (double v : x.value().values()) {
        total += v;
    }
    const std::size_t xid = x.id();
    return x.graph().record("sum", Tensor::scalar(total), {xid}, [xid](Graph& g, std::size_t self) {
        if (!g.requires_grad(xid)) {
            return;
        }
        const double G = g.grad_slot(self)[0];
        for (auto& v : g.grad_slot(xid).values()) {
            v += G;
        }
    });
}

inline Var mean(const Var& x) {
    const double n = static_cast<double>(x.value().size());
    return scale(sum(x), 1.0 / n);
}

/// Sum over the last dimension: [.. x n] -> [.. x 1].
inline Var sum_lastdim(const Var& x) {
    const Tensor& X = x.value();
    const std::size_t n = X.last_extent();
    const std::size_t m = X.outer_count();
    Shape shape = X.shape();
    shape.back() = 1;
    Tensor out(shape);
    for (std::size_t r = 0; r < m; ++r) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            acc += X[r * n + j];
        }
        out[r] = acc;
    }
    const std::size_t xid = x.id();
    return x.graph().record("sum_lastdim", std::move(out), {xid}, [xid, m, n](Graph& g, std::size_t self) {
        if (!g.requires_grad(xid)) {
            return;
        }
        const Tensor& G = g.grad_slot(self);
        Tensor& gx = g.grad_slot(xid);
        for (std::size_t r = 0; r < m; ++r) {
            for (std::size_t j = 0; j < n; ++j) {
                gx[r * n + j] += G[r];
            }
        }
    });
}

/// Column means of a matrix: [m x n] -> [1 x n].
inline Var mean_rows(const Var& x) {
    const Tensor& X = x.value();
    const std::size_t m = X.rows(), n = X.cols();
    Tensor out(Shape{1, n});
    for (std::size_t r = 0; r < m; ++r) {
        for (std::size_t j = 0; j < n; ++j) {
            out[j] += X[r * n + j];
        }
    }
    for (std::size_t j = 0; j < n; ++j) {
        out[j] /= static_cast<double>(m);
    }
    const std::size_t xid = x.id();
    return x.graph().record("mean_rows", std::move(out), {xid}, [xid, m, n](Graph& g, std::size_t self) {
        if (!g.requires_grad(xid)) {
            return;
        }
        const Tensor& G = g.grad_slot(self);
        Tensor& gx = g.grad_slot(xid);
        const double inv = 1.0 / static_cast<double>(m);
        for (std::size_t r = 0; r < m; ++r) {
            for (std::size_t j = 0; j < n; ++j) {
                gx[r * n + j] += G[j] * inv;
            }
        }
    });
}

/// Selects matrix rows by index (indices may repeat).
inline Var gather_rows(const Var& x, std::span<const std::size_t> rows) {
    const Tensor& X = x.value();
    const std::size_t n = X.last_extent();
    const std::size_t m = X.outer_count();
    if (rows.empty()) {
        throw DimensionError("gather_rows: empty row selection");
    }
    Tensor out(Shape{rows.size(), n});
    for (std::size_t k = 0; k < rows.size(); ++k) {
        if (rows[k] >= m) {
            throw DimensionError("gather_rows: row " + std::to_string(rows[k]) + " out of range");
        }
        for (std::size_t j = 0; j < n; ++j) {
            out[k * n + j] = X[rows[k] * n + j];
        }
    }
    const std::size_t xid = x.id();
    std::vector<std::size_t> sel(rows.begin(), rows.end());
    return x.graph().record("gather_rows", std::move(out), {xid}, [xid, sel, n](Graph& g, std::size_t self) {
        if (!g.requires_grad(xid)) {
            return;
        }
        const Tensor& G = g.grad_slot(self);
        Tensor& gx = g.grad_slot(xid);
        for (std::size_t k = 0; k < sel.size(); ++k) {
            for (std::size_t j = 0; j < n; ++j) {
                gx[sel[k] * n + j] += G[k * n + j];
            }
        }
    });
}

/// Batched column lookup: table[d x V], one category id per row -> [B x d].
/// Backward scatters into the selected columns only.
inline Var embedding_lookup(const Var& table, std::span<const int> ids) {
    const Tensor& T = table.value();
    const std::size_t d = T.rows(), V = T.cols();
    if (ids.empty()) {
        throw DimensionError("embedding_lookup: empty index batch");
    }
    Tensor out(Shape{ids.size(), d});
    for (std::size_t b = 0; b < ids.size(); ++b) {
        if (ids[b] < 0 || static_cast<std::size_t>(ids[b]) >= V) {
            throw DataError("embedding_lookup: category id " + std::to_string(ids[b]) + " outside [0, " +
                            std::to_string(V) + ")");
        }
        for (std::size_t r = 0; r < d; ++r) {
            out[b * d + r] = T[r * V + static_cast<std::size_t>(ids[b])];
        }
    }
    const std::size_t tid = table.id();
    std::vector<int> idx(ids.begin(), ids.end());
    return table.graph().record("embedding_lookup", std::move(out), {tid}, [tid, idx, d, V](Graph& g, std::size_t self) {
        if (!g.requires_grad(tid)) {
            return;
        }
        const Tensor& G = g.grad_slot(self);
        Tensor& gt = g.grad_slot(tid);
        for (std::size_t b = 0; b < idx.size(); ++b) {
            for (std::size_t r = 0; r < d; ++r) {
                gt[r * V + static_cast<std::size_t>(idx[b])] += G[b * d + r];
            }
        }
    });
}

/// Inverted dropout: in training mode zero each element with probability
/// `rate` and scale survivors by 1/(1-rate); identity otherwise.
inline Var dropout(const Var& x, double rate, Rng& rng, bool training) {
    if (!(rate >= 0.0 && rate < 1.0)) {
        throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
    }
    if (!training || rate == 0.0) {
        return x;
    }
    const double keep_scale = 1.0 / (1.0 - rate);
    Tensor mask(x.shape());
    for (auto& m : mask.values()) {
        m = rng.uniform() < rate ? 0.0 : keep_scale;
    }
    return mul(x, x.graph().constant(std::move(mask)));
}

/// Copy of x's value with no gradient path back to x.
inline Var detach(const Var& x) { return x.graph().constant(x.value()); }

} // namespace ops

inline Var operator+(const Var& a, const Var& b) { return ops::add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return ops::sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return ops::mul(a, b); }
inline Var operator*(double c, const Var& x) { return ops::scale(x, c); }

} // namespace fairint
