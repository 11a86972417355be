#pragma once

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "dcnmt/rng.hpp"

namespace dcnmt {

class DimensionError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class DegenerateVectorError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {
inline bool& grad_enabled_flag() {
    thread_local bool enabled = true;
    return enabled;
}
}  // namespace detail

// Disables graph recording in a scope (inference, decoding, reward scoring).
class NoGradGuard {
public:
    NoGradGuard() : prev_(detail::grad_enabled_flag()) { detail::grad_enabled_flag() = false; }
    ~NoGradGuard() { detail::grad_enabled_flag() = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

inline bool grad_enabled() { return detail::grad_enabled_flag(); }

// Dense row-major tensor participating in a reverse-mode graph.
// A Tensor is a cheap handle; copies alias the same node.
class Tensor {
public:
    struct Node {
        std::vector<std::size_t> shape;
        std::vector<double> value;
        std::vector<double> grad;
        bool requires_grad = false;
        std::vector<std::shared_ptr<Node>> parents;
        std::function<void(Node&)> backward;  // accumulates into parents' grads
    };

    Tensor() = default;

    Tensor(std::vector<std::size_t> shape, double fill = 0.0, bool requires_grad = false)
        : node_(std::make_shared<Node>()) {
        node_->shape = std::move(shape);
        node_->value.assign(numel_of(node_->shape), fill);
        node_->requires_grad = requires_grad && grad_enabled();
        if (node_->requires_grad) node_->grad.assign(node_->value.size(), 0.0);
    }

    static Tensor from(std::vector<std::size_t> shape, std::vector<double> values,
                       bool requires_grad = false) {
        Tensor t;
        t.node_ = std::make_shared<Node>();
        if (numel_of(shape) != values.size())
            throw DimensionError("tensor: shape does not match value count");
        t.node_->shape = std::move(shape);
        t.node_->value = std::move(values);
        t.node_->requires_grad = requires_grad && grad_enabled();
        if (t.node_->requires_grad) t.node_->grad.assign(t.node_->value.size(), 0.0);
        return t;
    }

    static Tensor scalar(double v, bool requires_grad = false) {
        return from({1}, {v}, requires_grad);
    }

    bool defined() const { return node_ != nullptr; }
    const std::vector<std::size_t>& shape() const { return node_->shape; }
    std::size_t ndim() const { return node_->shape.size(); }
    std::size_t size() const { return node_->value.size(); }
    std::size_t rows() const { return node_->shape.size() == 2 ? node_->shape[0] : 1; }
    std::size_t cols() const { return node_->shape.back(); }

    std::vector<double>& val() { return node_->value; }
    const std::vector<double>& val() const { return node_->value; }
    std::vector<double>& grad() { return node_->grad; }
    const std::vector<double>& grad() const { return node_->grad; }
    bool requires_grad() const { return node_->requires_grad; }

    double item() const {
        if (node_->value.size() != 1) throw DimensionError("item: tensor is not a scalar");
        return node_->value[0];
    }

    double at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

    void zero_grad() {
        if (node_->requires_grad) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
    }

    std::shared_ptr<Node> node() const { return node_; }

    // Reverse pass from a scalar. Visits each node exactly once in reverse
    // topological order.
    void backward() {
        if (size() != 1) throw DimensionError("backward: loss must be a scalar");
        std::vector<Node*> order;
        std::unordered_set<Node*> seen;
        topo(node_.get(), seen, order);
        ensure_grad(*node_);
        node_->grad[0] = 1.0;
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            Node* n = *it;
            if (n->backward) {
                for (auto& p : n->parents) ensure_grad(*p);
                n->backward(*n);
            }
        }
    }

    static std::size_t numel_of(const std::vector<std::size_t>& shape) {
        return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                               std::multiplies<std::size_t>());
    }

    static void ensure_grad(Node& n) {
        if (n.grad.size() != n.value.size()) n.grad.assign(n.value.size(), 0.0);
    }

private:
    static void topo(Node* n, std::unordered_set<Node*>& seen, std::vector<Node*>& order) {
        if (!n || seen.count(n)) return;
        seen.insert(n);
        // Iterative DFS; graphs for a whole talk get deep.
        struct Frame {
            Node* node;
            std::size_t next_parent;
        };
        std::vector<Frame> stack{{n, 0}};
        while (!stack.empty()) {
            Frame& f = stack.back();
            if (f.next_parent < f.node->parents.size()) {
                Node* p = f.node->parents[f.next_parent++].get();
                if (p && !seen.count(p)) {
                    seen.insert(p);
                    stack.push_back({p, 0});
                }
            } else {
                order.push_back(f.node);
                stack.pop_back();
            }
        }
    }

    std::shared_ptr<Node> node_;
};

namespace detail {

inline Tensor make_result(std::vector<std::size_t> shape, std::vector<double> value,
                          std::vector<Tensor> parents,
                          std::function<void(Tensor::Node&)> backward) {
    Tensor out = Tensor::from(std::move(shape), std::move(value));
    bool any_grad = false;
    if (grad_enabled()) {
        for (const auto& p : parents)
            if (p.requires_grad()) any_grad = true;
    }
    if (any_grad) {
        auto n = out.node();
        n->requires_grad = true;
        n->grad.assign(n->value.size(), 0.0);
        for (const auto& p : parents) n->parents.push_back(p.node());
        n->backward = std::move(backward);
    }
    return out;
}

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw DimensionError(std::string(op) + ": shape mismatch");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise and linear-algebra operations
// ---------------------------------------------------------------------------

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "add");
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.val()[i] + b.val()[i];
    auto an = a.node(), bn = b.node();
    return detail::make_result(a.shape(), std::move(v), {a, b}, [an, bn](Tensor::Node& n) {
        if (an->requires_grad)
            for (std::size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i];
        if (bn->requires_grad)
            for (std::size_t i = 0; i < n.grad.size(); ++i) bn->grad[i] += n.grad[i];
    });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "sub");
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.val()[i] - b.val()[i];
    auto an = a.node(), bn = b.node();
    return detail::make_result(a.shape(), std::move(v), {a, b}, [an, bn](Tensor::Node& n) {
        if (an->requires_grad)
            for (std::size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i];
        if (bn->requires_grad)
            for (std::size_t i = 0; i < n.grad.size(); ++i) bn->grad[i] -= n.grad[i];
    });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "mul");
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.val()[i] * b.val()[i];
    auto an = a.node(), bn = b.node();
    return detail::make_result(a.shape(), std::move(v), {a, b}, [an, bn](Tensor::Node& n) {
        if (an->requires_grad)
            for (std::size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i] * bn->value[i];
        if (bn->requires_grad)
            for (std::size_t i = 0; i < n.grad.size(); ++i) bn->grad[i] += n.grad[i] * an->value[i];
    });
}

inline Tensor scale(const Tensor& a, double c) {
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.val()[i] * c;
    auto an = a.node();
    return detail::make_result(a.shape(), std::move(v), {a}, [an, c](Tensor::Node& n) {
        if (an->requires_grad)
            for (std::size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i] * c;
    });
}

// Adds a length-n row vector to every row of an m-by-n matrix.
inline Tensor add_rowwise(const Tensor& a, const Tensor& bias) {
    if (a.cols() != bias.size()) throw DimensionError("add_rowwise: width mismatch");
    std::size_t m = a.rows(), nn = a.cols();
    std::vector<double> v(a.size());
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < nn; ++c) v[r * nn + c] = a.val()[r * nn + c] + bias.val()[c];
    auto an = a.node(), bn = bias.node();
    return detail::make_result(a.shape(), std::move(v), {a, bias},
                               [an, bn, m, nn](Tensor::Node& n) {
        if (an->requires_grad)
            for (std::size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i];
        if (bn->requires_grad)
            for (std::size_t r = 0; r < m; ++r)
                for (std::size_t c = 0; c < nn; ++c) bn->grad[c] += n.grad[r * nn + c];
    });
}

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.shape()[1] != b.shape()[0])
        throw DimensionError("matmul: inner dimensions disagree");
    std::size_t m = a.shape()[0], k = a.shape()[1], p = b.shape()[1];
    std::vector<double> v(m * p, 0.0);
    const double* av = a.val().data();
    const double* bv = b.val().data();
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t l = 0; l < k; ++l) {
            double x = av[i * k + l];
            if (x == 0.0) continue;
            const double* brow = bv + l * p;
            double* vrow = v.data() + i * p;
            for (std::size_t j = 0; j < p; ++j) vrow[j] += x * brow[j];
        }
    auto an = a.node(), bn = b.node();
    return detail::make_result({m, p}, std::move(v), {a, b},
                               [an, bn, m, k, p](Tensor::Node& n) {
        // dA = dC * B^T, dB = A^T * dC
        if (an->requires_grad) {
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t l = 0; l < k; ++l) {
                    double s = 0.0;
                    const double* grow = n.grad.data() + i * p;
                    const double* brow = bn->value.data() + l * p;
                    for (std::size_t j = 0; j < p; ++j) s += grow[j] * brow[j];
                    an->grad[i * k + l] += s;
                }
        }
        if (bn->requires_grad) {
            for (std::size_t i = 0; i < m; ++i)
                for (std::size_t l = 0; l < k; ++l) {
                    double x = an->value[i * k + l];
                    if (x == 0.0) continue;
                    const double* grow = n.grad.data() + i * p;
                    double* brow = bn->grad.data() + l * p;
                    for (std::size_t j = 0; j < p; ++j) brow[j] += x * grow[j];
                }
        }
    });
}

inline Tensor transpose(const Tensor& a) {
    if (a.ndim() != 2) throw DimensionError("transpose: rank-2 only");
    std::size_t m = a.shape()[0], nn = a.shape()[1];
    std::vector<double> v(a.size());
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < nn; ++c) v[c * m + r] = a.val()[r * nn + c];
    auto an = a.node();
    return detail::make_result({nn, m}, std::move(v), {a}, [an, m, nn](Tensor::Node& n) {
        if (!an->requires_grad) return;
        for (std::size_t r = 0; r < m; ++r)
            for (std::size_t c = 0; c < nn; ++c) an->grad[r * nn + c] += n.grad[c * m + r];
    });
}

inline Tensor sum(const Tensor& a) {
    double s = std::accumulate(a.val().begin(), a.val().end(), 0.0);
    auto an = a.node();
    return detail::make_result({1}, {s}, {a}, [an](Tensor::Node& n) {
        if (!an->requires_grad) return;
        for (double& g : an->grad) g += n.grad[0];
    });
}

inline Tensor mean(const Tensor& a) { return scale(sum(a), 1.0 / double(a.size())); }

inline Tensor relu(const Tensor& a) {
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.val()[i] > 0.0 ? a.val()[i] : 0.0;
    auto an = a.node();
    return detail::make_result(a.shape(), std::move(v), {a}, [an](Tensor::Node& n) {
        if (!an->requires_grad) return;
        for (std::size_t i = 0; i < n.grad.size(); ++i)
            if (an->value[i] > 0.0) an->grad[i] += n.grad[i];
    });
}

inline Tensor tanh_op(const Tensor& a) {
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = std::tanh(a.val()[i]);
    auto an = a.node();
    return detail::make_result(a.shape(), std::move(v), {a}, [an](Tensor::Node& n) {
        if (!an->requires_grad) return;
        for (std::size_t i = 0; i < n.grad.size(); ++i)
            an->grad[i] += n.grad[i] * (1.0 - n.value[i] * n.value[i]);
    });
}

inline Tensor sigmoid(const Tensor& a) {
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = 1.0 / (1.0 + std::exp(-a.val()[i]));
    auto an = a.node();
    return detail::make_result(a.shape(), std::move(v), {a}, [an](Tensor::Node& n) {
        if (!an->requires_grad) return;
        for (std::size_t i = 0; i < n.grad.size(); ++i)
            an->grad[i] += n.grad[i] * n.value[i] * (1.0 - n.value[i]);
    });
}

// Softmax along the last axis (each row normalized), max-subtracted.
inline Tensor softmax(const Tensor& a) {
    std::size_t m = a.rows(), nn = a.cols();
    std::vector<double> v(a.size());
    for (std::size_t r = 0; r < m; ++r) {
        const double* row = a.val().data() + r * nn;
        double mx = *std::max_element(row, row + nn);
        double z = 0.0;
        for (std::size_t c = 0; c < nn; ++c) {
            v[r * nn + c] = std::exp(row[c] - mx);
            z += v[r * nn + c];
        }
        for (std::size_t c = 0; c < nn; ++c) v[r * nn + c] /= z;
    }
    auto an = a.node();
    return detail::make_result(a.shape(), std::move(v), {a}, [an, m, nn](Tensor::Node& n) {
        if (!an->requires_grad) return;
        for (std::size_t r = 0; r < m; ++r) {
            const double* y = n.value.data() + r * nn;
            const double* g = n.grad.data() + r * nn;
            double dot = 0.0;
            for (std::size_t c = 0; c < nn; ++c) dot += y[c] * g[c];
            for (std::size_t c = 0; c < nn; ++c) an->grad[r * nn + c] += y[c] * (g[c] - dot);
        }
    });
}

// Row-wise layer normalization with learned gain and bias.
inline Tensor layer_norm(const Tensor& a, const Tensor& gain, const Tensor& bias,
                         double eps = 1e-6) {
    std::size_t m = a.rows(), nn = a.cols();
    if (gain.size() != nn || bias.size() != nn)
        throw DimensionError("layer_norm: gain/bias width mismatch");
    std::vector<double> v(a.size());
    std::vector<double> mu(m), istd(m);
    for (std::size_t r = 0; r < m; ++r) {
        const double* row = a.val().data() + r * nn;
        double s = 0.0;
        for (std::size_t c = 0; c < nn; ++c) s += row[c];
        mu[r] = s / double(nn);
        double var = 0.0;
        for (std::size_t c = 0; c < nn; ++c) var += (row[c] - mu[r]) * (row[c] - mu[r]);
        var /= double(nn);
        istd[r] = 1.0 / std::sqrt(var + eps);
        for (std::size_t c = 0; c < nn; ++c)
            v[r * nn + c] = (row[c] - mu[r]) * istd[r] * gain.val()[c] + bias.val()[c];
    }
    auto an = a.node(), gn = gain.node(), bn = bias.node();
    return detail::make_result(
        a.shape(), std::move(v), {a, gain, bias},
        [an, gn, bn, m, nn, mu, istd](Tensor::Node& n) {
            for (std::size_t r = 0; r < m; ++r) {
                const double* row = an->value.data() + r * nn;
                const double* g = n.grad.data() + r * nn;
                // xhat = (x - mu) * istd
                std::vector<double> xhat(nn);
                for (std::size_t c = 0; c < nn; ++c) xhat[c] = (row[c] - mu[r]) * istd[r];
                if (gn->requires_grad)
                    for (std::size_t c = 0; c < nn; ++c) gn->grad[c] += g[c] * xhat[c];
                if (bn->requires_grad)
                    for (std::size_t c = 0; c < nn; ++c) bn->grad[c] += g[c];
                if (an->requires_grad) {
                    std::vector<double> dxhat(nn);
                    double s1 = 0.0, s2 = 0.0;
                    for (std::size_t c = 0; c < nn; ++c) {
                        dxhat[c] = g[c] * gn->value[c];
                        s1 += dxhat[c];
                        s2 += dxhat[c] * xhat[c];
                    }
                    for (std::size_t c = 0; c < nn; ++c)
                        an->grad[r * nn + c] +=
                            istd[r] * (dxhat[c] - s1 / double(nn) - xhat[c] * s2 / double(nn));
                }
            }
        });
}

// Gathers rows of an embedding table; backward scatter-adds.
inline Tensor embedding_lookup(const Tensor& table, const std::vector<int>& ids) {
    std::size_t vocab = table.rows(), d = table.cols();
    std::vector<double> v(ids.size() * d);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        if (ids[i] < 0 || std::size_t(ids[i]) >= vocab)
            throw DimensionError("embedding_lookup: token id out of range");
        std::copy_n(table.val().data() + std::size_t(ids[i]) * d, d, v.data() + i * d);
    }
    auto tn = table.node();
    return detail::make_result({ids.size(), d}, std::move(v), {table},
                               [tn, ids, d](Tensor::Node& n) {
        if (!tn->requires_grad) return;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            double* dst = tn->grad.data() + std::size_t(ids[i]) * d;
            const double* src = n.grad.data() + i * d;
            for (std::size_t c = 0; c < d; ++c) dst[c] += src[c];
        }
    });
}

inline Tensor concat_rows(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw DimensionError("concat_rows: no inputs");
    std::size_t nn = parts[0].cols(), m = 0;
    for (const auto& p : parts) {
        if (p.cols() != nn) throw DimensionError("concat_rows: width mismatch");
        m += p.rows();
    }
    std::vector<double> v;
    v.reserve(m * nn);
    for (const auto& p : parts) v.insert(v.end(), p.val().begin(), p.val().end());
    std::vector<std::shared_ptr<Tensor::Node>> nodes;
    for (const auto& p : parts) nodes.push_back(p.node());
    return detail::make_result({m, nn}, std::move(v), parts, [nodes](Tensor::Node& n) {
        std::size_t off = 0;
        for (auto& pn : nodes) {
            if (pn->requires_grad)
                for (std::size_t i = 0; i < pn->value.size(); ++i)
                    pn->grad[i] += n.grad[off + i];
            off += pn->value.size();
        }
    });
}

inline Tensor slice_rows(const Tensor& a, std::size_t r0, std::size_t r1) {
    if (r1 > a.rows() || r0 > r1) throw DimensionError("slice_rows: bad range");
    std::size_t nn = a.cols();
    std::vector<double> v(a.val().begin() + r0 * nn, a.val().begin() + r1 * nn);
    auto an = a.node();
    return detail::make_result({r1 - r0, nn}, std::move(v), {a}, [an, r0, nn](Tensor::Node& n) {
        if (!an->requires_grad) return;
        for (std::size_t i = 0; i < n.grad.size(); ++i) an->grad[r0 * nn + i] += n.grad[i];
    });
}

inline Tensor slice_cols(const Tensor& a, std::size_t c0, std::size_t c1) {
    if (c1 > a.cols() || c0 > c1) throw DimensionError("slice_cols: bad range");
    std::size_t m = a.rows(), nn = a.cols(), w = c1 - c0;
    std::vector<double> v(m * w);
    for (std::size_t r = 0; r < m; ++r)
        std::copy_n(a.val().data() + r * nn + c0, w, v.data() + r * w);
    auto an = a.node();
    return detail::make_result({m, w}, std::move(v), {a}, [an, c0, m, nn, w](Tensor::Node& n) {
        if (!an->requires_grad) return;
        for (std::size_t r = 0; r < m; ++r)
            for (std::size_t c = 0; c < w; ++c)
                an->grad[r * nn + c0 + c] += n.grad[r * w + c];
    });
}

inline Tensor concat_cols(const std::vector<Tensor>& parts) {
    if (parts.empty()) throw DimensionError("concat_cols: no inputs");
    std::size_t m = parts[0].rows(), total = 0;
    for (const auto& p : parts) {
        if (p.rows() != m) throw DimensionError("concat_cols: height mismatch");
        total += p.cols();
    }
    std::vector<double> v(m * total);
    std::size_t off = 0;
    for (const auto& p : parts) {
        std::size_t w = p.cols();
        for (std::size_t r = 0; r < m; ++r)
            std::copy_n(p.val().data() + r * w, w, v.data() + r * total + off);
        off += w;
    }
    std::vector<std::shared_ptr<Tensor::Node>> nodes;
    std::vector<std::size_t> widths;
    for (const auto& p : parts) {
        nodes.push_back(p.node());
        widths.push_back(p.cols());
    }
    return detail::make_result({m, total}, std::move(v), parts,
                               [nodes, widths, m, total](Tensor::Node& n) {
        std::size_t off = 0;
        for (std::size_t k = 0; k < nodes.size(); ++k) {
            auto& pn = nodes[k];
            std::size_t w = widths[k];
            if (pn->requires_grad)
                for (std::size_t r = 0; r < m; ++r)
                    for (std::size_t c = 0; c < w; ++c)
                        pn->grad[r * w + c] += n.grad[r * total + off + c];
            off += w;
        }
    });
}

// Sum of -log softmax(logits)[t, target[t]] over positions where target >= 0.
// Targets of -1 are skipped (padding).
inline Tensor cross_entropy(const Tensor& logits, const std::vector<int>& targets) {
    std::size_t m = logits.rows(), vv = logits.cols();
    if (targets.size() != m) throw DimensionError("cross_entropy: target length mismatch");
    double loss = 0.0;
    std::vector<double> probs(m * vv);
    for (std::size_t r = 0; r < m; ++r) {
        const double* row = logits.val().data() + r * vv;
        double mx = *std::max_element(row, row + vv);
        double z = 0.0;
        for (std::size_t c = 0; c < vv; ++c) {
            probs[r * vv + c] = std::exp(row[c] - mx);
            z += probs[r * vv + c];
        }
        for (std::size_t c = 0; c < vv; ++c) probs[r * vv + c] /= z;
        if (targets[r] >= 0) loss -= std::log(probs[r * vv + std::size_t(targets[r])]);
    }
    auto ln = logits.node();
    return detail::make_result({1}, {loss}, {logits},
                               [ln, targets, probs, m, vv](Tensor::Node& n) {
        if (!ln->requires_grad) return;
        double g = n.grad[0];
        for (std::size_t r = 0; r < m; ++r) {
            if (targets[r] < 0) continue;
            for (std::size_t c = 0; c < vv; ++c)
                ln->grad[r * vv + c] += g * probs[r * vv + c];
            ln->grad[r * vv + std::size_t(targets[r])] -= g;
        }
    });
}

// cos(u, v) with analytic gradient. Inputs are treated as flat vectors.
inline Tensor cosine_similarity(const Tensor& u, const Tensor& v) {
    if (u.size() != v.size()) throw DimensionError("cosine_similarity: length mismatch");
    double dot = 0.0, nu = 0.0, nv = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        dot += u.val()[i] * v.val()[i];
        nu += u.val()[i] * u.val()[i];
        nv += v.val()[i] * v.val()[i];
    }
    nu = std::sqrt(nu);
    nv = std::sqrt(nv);
    if (nu == 0.0 || nv == 0.0)
        throw DegenerateVectorError("cosine_similarity: zero-norm input");
    double cosv = dot / (nu * nv);
    auto un = u.node(), vn = v.node();
    return detail::make_result({1}, {cosv}, {u, v}, [un, vn, nu, nv, cosv](Tensor::Node& n) {
        double g = n.grad[0];
        for (std::size_t i = 0; i < un->value.size(); ++i) {
            double ui = un->value[i], vi = vn->value[i];
            if (un->requires_grad)
                un->grad[i] += g * (vi / (nu * nv) - cosv * ui / (nu * nu));
            if (vn->requires_grad)
                vn->grad[i] += g * (ui / (nu * nv) - cosv * vi / (nv * nv));
        }
    });
}

// Inverted dropout: scales kept activations by 1/keep_prob so inference is a
// plain identity. Identity when train is false or keep_prob == 1.
inline Tensor dropout(const Tensor& a, double keep_prob, Rng& rng, bool train) {
    if (keep_prob <= 0.0 || keep_prob > 1.0)
        throw DimensionError("dropout: keep_prob must be in (0, 1]");
    if (!train || keep_prob == 1.0) return a;
    std::vector<double> mask(a.size());
    for (auto& m : mask) m = rng.bernoulli(keep_prob) ? 1.0 / keep_prob : 0.0;
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.val()[i] * mask[i];
    auto an = a.node();
    return detail::make_result(a.shape(), std::move(v), {a}, [an, mask](Tensor::Node& n) {
        if (!an->requires_grad) return;
        for (std::size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i] * mask[i];
    });
}

// Adds a constant (non-learned) matrix, e.g. positional encodings or an
// additive attention mask.
inline Tensor add_const(const Tensor& a, const std::vector<double>& c) {
    if (c.size() != a.size()) throw DimensionError("add_const: size mismatch");
    std::vector<double> v(a.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = a.val()[i] + c[i];
    auto an = a.node();
    return detail::make_result(a.shape(), std::move(v), {a}, [an](Tensor::Node& n) {
        if (!an->requires_grad) return;
        for (std::size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i];
    });
}

}  // namespace dcnmt
