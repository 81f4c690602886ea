#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "scorevae/tensor.hpp"

namespace scorevae::ad {

// Reverse-mode tape over Tensor values. Backward rules emit graph nodes
// rather than raw tensors, so gradients are themselves differentiable
// (gradient-of-gradient, as needed when a loss contains an input-gradient).
// Every rule is expressed in terms of the node's parents only; no node
// references its own output, which keeps the graph acyclic under shared_ptr.

struct Node;
struct Var;

using VjpFn = std::function<void(const Var& g, const std::vector<Var>& parents,
                                 const std::vector<char>& needed, std::vector<Var>& out)>;

struct Node {
    Tensor val;
    std::vector<Var> parents;
    VjpFn vjp;
    std::int64_t id;
};

inline std::int64_t next_node_id() {
    static std::atomic<std::int64_t> counter{0};
    return counter.fetch_add(1, std::memory_order_relaxed);
}

struct Var {
    std::shared_ptr<Node> n;

    Var() = default;
    explicit Var(std::shared_ptr<Node> node) : n(std::move(node)) {}

    bool defined() const { return static_cast<bool>(n); }
    const Tensor& val() const { return n->val; }
    int rows() const { return n->val.rows; }
    int cols() const { return n->val.cols; }
    double item() const { return n->val.item(); }
};

inline Var make_node(Tensor value, std::vector<Var> parents = {}, VjpFn vjp = nullptr) {
    auto node = std::make_shared<Node>();
    node->val = std::move(value);
    node->parents = std::move(parents);
    node->vjp = std::move(vjp);
    node->id = next_node_id();
    return Var(node);
}

// Leaf holding a value; participates in grad() only if listed in wrt.
inline Var constant(Tensor value) { return make_node(std::move(value)); }
inline Var constant(double x) { return make_node(Tensor::scalar(x)); }

/*--------------------------------- ops ---------------------------------*/

inline Var add(const Var& a, const Var& b) {
    return make_node(t_add(a.val(), b.val()), {a, b},
                     [](const Var& g, const std::vector<Var>&, const std::vector<char>& need, std::vector<Var>& out) {
                         if (need[0]) out[0] = g;
                         if (need[1]) out[1] = g;
                     });
}

inline Var scale(const Var& a, double c) {
    return make_node(t_scale(a.val(), c), {a},
                     [c](const Var& g, const std::vector<Var>&, const std::vector<char>& need, std::vector<Var>& out) {
                         if (need[0]) out[0] = scale(g, c);
                     });
}

inline Var neg(const Var& a) { return scale(a, -1.0); }

inline Var sub(const Var& a, const Var& b) {
    return make_node(t_sub(a.val(), b.val()), {a, b},
                     [](const Var& g, const std::vector<Var>&, const std::vector<char>& need, std::vector<Var>& out) {
                         if (need[0]) out[0] = g;
                         if (need[1]) out[1] = neg(g);
                     });
}

inline Var mul(const Var& a, const Var& b) {
    return make_node(t_mul(a.val(), b.val()), {a, b},
                     [](const Var& g, const std::vector<Var>& p, const std::vector<char>& need, std::vector<Var>& out) {
                         if (need[0]) out[0] = mul(g, p[1]);
                         if (need[1]) out[1] = mul(g, p[0]);
                     });
}

inline Var add_scalar(const Var& a, double c) {
    Tensor t = a.val();
    for (double& x : t.v) x += c;
    return make_node(std::move(t), {a},
                     [](const Var& g, const std::vector<Var>&, const std::vector<char>& need, std::vector<Var>& out) {
                         if (need[0]) out[0] = g;
                     });
}

inline Var transpose(const Var& a) {
    return make_node(t_transpose(a.val()), {a},
                     [](const Var& g, const std::vector<Var>&, const std::vector<char>& need, std::vector<Var>& out) {
                         if (need[0]) out[0] = transpose(g);
                     });
}

inline Var matmul(const Var& a, const Var& b) {
    return make_node(t_matmul(a.val(), b.val()), {a, b},
                     [](const Var& g, const std::vector<Var>& p, const std::vector<char>& need, std::vector<Var>& out) {
                         if (need[0]) out[0] = matmul(g, transpose(p[1]));
                         if (need[1]) out[1] = matmul(transpose(p[0]), g);
                     });
}

inline Var sum_down(const Var& a);

// (1 x m) -> (n x m)
inline Var row_broadcast(const Var& a, int n) {
    if (a.rows() != 1) throw ShapeError("row_broadcast: expected single row, got " + a.val().shape_str());
    Tensor t(n, a.cols());
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < a.cols(); ++c) t.at(r, c) = a.val().at(0, c);
    return make_node(std::move(t), {a},
                     [](const Var& g, const std::vector<Var>&, const std::vector<char>& need, std::vector<Var>& out) {
                         if (need[0]) out[0] = sum_down(g);
                     });
}

// (n x m) -> (1 x m), sum over rows
inline Var sum_down(const Var& a) {
    Tensor t(1, a.cols());
    for (int r = 0; r < a.rows(); ++r)
        for (int c = 0; c < a.cols(); ++c) t.at(0, c) += a.val().at(r, c);
    int n = a.rows();
    return make_node(std::move(t), {a},
                     [n](const Var& g, const std::vector<Var>&, const std::vector<char>& need, std::vector<Var>& out) {
                         if (need[0]) out[0] = row_broadcast(g, n);
                     });
}

inline Var sum_rows(const Var& a);

// (n x 1) -> (n x m)
inline Var col_broadcast(const Var& a, int m) {
    if (a.cols() != 1) throw ShapeError("col_broadcast: expected single column, got " + a.val().shape_str());
    Tensor t(a.rows(), m);
    for (int r = 0; r < a.rows(); ++r)
        for (int c = 0; c < m; ++c) t.at(r, c) = a.val().at(r, 0);
    return make_node(std::move(t), {a},
                     [](const Var& g, const std::vector<Var>&, const std::vector<char>& need, std::vector<Var>& out) {
                         if (need[0]) out[0] = sum_rows(g);
                     });
}

// (n x m) -> (n x 1), sum over columns
inline Var sum_rows(const Var& a) {
    Tensor t(a.rows(), 1);
    for (int r = 0; r < a.rows(); ++r)
        for (int c = 0; c < a.cols(); ++c) t.at(r, 0) += a.val().at(r, c);
    int m = a.cols();
    return make_node(std::move(t), {a},
                     [m](const Var& g, const std::vector<Var>&, const std::vector<char>& need, std::vector<Var>& out) {
                         if (need[0]) out[0] = col_broadcast(g, m);
                     });
}

inline Var bcast_scalar(const Var& a, int r, int c);

inline Var sum_all(const Var& a) {
    double s = 0;
    for (double x : a.val().v) s += x;
    int r = a.rows(), c = a.cols();
    return make_node(Tensor::scalar(s), {a},
                     [r, c](const Var& g, const std::vector<Var>&, const std::vector<char>& need, std::vector<Var>& out) {
                         if (need[0]) out[0] = bcast_scalar(g, r, c);
                     });
}

inline Var bcast_scalar(const Var& a, int r, int c) {
    if (a.rows() != 1 || a.cols() != 1) throw ShapeError("bcast_scalar: expected scalar, got " + a.val().shape_str());
    return make_node(Tensor(r, c, a.val().v[0]), {a},
                     [](const Var& g, const std::vector<Var>&, const std::vector<char>& need, std::vector<Var>& out) {
                         if (need[0]) out[0] = sum_all(g);
                     });
}

inline Var square(const Var& a) {
    Tensor t = a.val();
    for (double& x : t.v) x *= x;
    return make_node(std::move(t), {a},
                     [](const Var& g, const std::vector<Var>& p, const std::vector<char>& need, std::vector<Var>& out) {
                         if (need[0]) out[0] = mul(g, scale(p[0], 2.0));
                     });
}

inline Var exp(const Var& a) {
    Tensor t = a.val();
    for (double& x : t.v) x = std::exp(x);
    return make_node(std::move(t), {a},
                     [](const Var& g, const std::vector<Var>& p, const std::vector<char>& need, std::vector<Var>& out) {
                         if (need[0]) out[0] = mul(g, exp(p[0]));
                     });
}

inline Var recip(const Var& a) {
    Tensor t = a.val();
    for (double& x : t.v) x = 1.0 / x;
    return make_node(std::move(t), {a},
                     [](const Var& g, const std::vector<Var>& p, const std::vector<char>& need, std::vector<Var>& out) {
                         if (need[0]) out[0] = neg(mul(g, recip(square(p[0]))));
                     });
}

inline Var log(const Var& a) {
    Tensor t = a.val();
    for (double& x : t.v) x = std::log(x);
    return make_node(std::move(t), {a},
                     [](const Var& g, const std::vector<Var>& p, const std::vector<char>& need, std::vector<Var>& out) {
                         if (need[0]) out[0] = mul(g, recip(p[0]));
                     });
}

inline Var tanh(const Var& a) {
    Tensor t = a.val();
    for (double& x : t.v) x = std::tanh(x);
    return make_node(std::move(t), {a},
                     [](const Var& g, const std::vector<Var>& p, const std::vector<char>& need, std::vector<Var>& out) {
                         if (need[0]) out[0] = mul(g, add_scalar(neg(square(tanh(p[0]))), 1.0));
                     });
}

// Standard normal pdf, used by normcdf's backward rule.
inline Var normpdf(const Var& a) {
    return scale(exp(scale(square(a), -0.5)), 0.39894228040143267794);
}

// Standard normal CDF via erf; exact GELU is x * normcdf(x).
inline Var normcdf(const Var& a) {
    Tensor t = a.val();
    for (double& x : t.v) x = 0.5 * std::erfc(-x * 0.70710678118654752440);
    return make_node(std::move(t), {a},
                     [](const Var& g, const std::vector<Var>& p, const std::vector<char>& need, std::vector<Var>& out) {
                         if (need[0]) out[0] = mul(g, normpdf(p[0]));
                     });
}

inline Var gelu(const Var& a) { return mul(a, normcdf(a)); }

// Derivative is the inside-interval indicator, constant w.r.t. the graph.
inline Var clamp(const Var& a, double lo, double hi) {
    Tensor t = a.val();
    Tensor mask(t.rows, t.cols);
    for (size_t i = 0; i < t.v.size(); ++i) {
        mask.v[i] = (t.v[i] > lo && t.v[i] < hi) ? 1.0 : 0.0;
        t.v[i] = std::min(std::max(t.v[i], lo), hi);
    }
    return make_node(std::move(t), {a},
                     [mask](const Var& g, const std::vector<Var>&, const std::vector<char>& need, std::vector<Var>& out) {
                         if (need[0]) out[0] = mul(g, constant(mask));
                     });
}

inline Var slice_cols(const Var& a, int c0, int c1);

// Place a into a zero matrix of `total` columns starting at column c0.
inline Var pad_cols(const Var& a, int c0, int total) {
    Tensor t(a.rows(), total);
    for (int r = 0; r < a.rows(); ++r)
        for (int c = 0; c < a.cols(); ++c) t.at(r, c0 + c) = a.val().at(r, c);
    int w = a.cols();
    return make_node(std::move(t), {a},
                     [c0, w](const Var& g, const std::vector<Var>&, const std::vector<char>& need, std::vector<Var>& out) {
                         if (need[0]) out[0] = slice_cols(g, c0, c0 + w);
                     });
}

inline Var slice_cols(const Var& a, int c0, int c1) {
    if (c0 < 0 || c1 > a.cols() || c0 >= c1)
        throw ShapeError("slice_cols: bad range [" + std::to_string(c0) + "," + std::to_string(c1) + ") on " + a.val().shape_str());
    Tensor t(a.rows(), c1 - c0);
    for (int r = 0; r < a.rows(); ++r)
        for (int c = c0; c < c1; ++c) t.at(r, c - c0) = a.val().at(r, c);
    int total = a.cols();
    return make_node(std::move(t), {a},
                     [c0, total](const Var& g, const std::vector<Var>&, const std::vector<char>& need, std::vector<Var>& out) {
                         if (need[0]) out[0] = pad_cols(g, c0, total);
                     });
}

inline Var concat_cols(const Var& a, const Var& b) {
    if (a.rows() != b.rows())
        throw ShapeError("concat_cols: row mismatch " + a.val().shape_str() + " vs " + b.val().shape_str());
    Tensor t(a.rows(), a.cols() + b.cols());
    for (int r = 0; r < a.rows(); ++r) {
        for (int c = 0; c < a.cols(); ++c) t.at(r, c) = a.val().at(r, c);
        for (int c = 0; c < b.cols(); ++c) t.at(r, a.cols() + c) = b.val().at(r, c);
    }
    int p = a.cols(), q = b.cols();
    return make_node(std::move(t), {a, b},
                     [p, q](const Var& g, const std::vector<Var>&, const std::vector<char>& need, std::vector<Var>& out) {
                         if (need[0]) out[0] = slice_cols(g, 0, p);
                         if (need[1]) out[1] = slice_cols(g, p, p + q);
                     });
}

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }
inline Var operator-(const Var& a) { return neg(a); }

// Per-row squared Euclidean norm: (n x m) -> (n x 1).
inline Var sq_norm_rows(const Var& a) { return sum_rows(square(a)); }

inline Var mean_all(const Var& a) {
    return scale(sum_all(a), 1.0 / static_cast<double>(a.val().size()));
}

/*------------------------------- backward -------------------------------*/

// Gradients of a scalar root with respect to each Var in wrt. The result
// vars are part of the graph, so they can be differentiated again.
inline std::vector<Var> grad(const Var& root, const std::vector<Var>& wrt) {
    if (root.rows() != 1 || root.cols() != 1)
        throw ShapeError("grad: root must be scalar, got " + root.val().shape_str());

    // Reachable subgraph; creation ids give a topological order.
    std::vector<Node*> order;
    std::unordered_set<Node*> seen;
    std::vector<Node*> stack{root.n.get()};
    seen.insert(root.n.get());
    while (!stack.empty()) {
        Node* n = stack.back();
        stack.pop_back();
        order.push_back(n);
        for (const Var& p : n->parents)
            if (seen.insert(p.n.get()).second) stack.push_back(p.n.get());
    }
    std::sort(order.begin(), order.end(), [](Node* a, Node* b) { return a->id < b->id; });

    // A node needs a gradient if it is requested or feeds into one that is.
    std::unordered_set<Node*> wanted;
    for (const Var& w : wrt) wanted.insert(w.n.get());
    std::unordered_set<Node*> needed;
    for (Node* n : order) {
        if (wanted.count(n)) {
            needed.insert(n);
            continue;
        }
        for (const Var& p : n->parents)
            if (needed.count(p.n.get())) {
                needed.insert(n);
                break;
            }
    }

    std::unordered_map<Node*, Var> acc;
    acc.emplace(root.n.get(), constant(Tensor::scalar(1.0)));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        Node* n = *it;
        auto gi = acc.find(n);
        if (gi == acc.end() || !needed.count(n) || !n->vjp) continue;
        std::vector<char> need(n->parents.size(), 0);
        bool any = false;
        for (size_t i = 0; i < n->parents.size(); ++i) {
            need[i] = needed.count(n->parents[i].n.get()) ? 1 : 0;
            any = any || need[i];
        }
        if (!any) continue;
        std::vector<Var> pg(n->parents.size());
        n->vjp(gi->second, n->parents, need, pg);
        for (size_t i = 0; i < n->parents.size(); ++i) {
            if (!need[i] || !pg[i].defined()) continue;
            Node* p = n->parents[i].n.get();
            auto e = acc.find(p);
            if (e == acc.end())
                acc.emplace(p, pg[i]);
            else
                e->second = add(e->second, pg[i]);
        }
    }

    std::vector<Var> out;
    out.reserve(wrt.size());
    for (const Var& w : wrt) {
        auto e = acc.find(w.n.get());
        if (e != acc.end())
            out.push_back(e->second);
        else
            out.push_back(constant(Tensor(w.rows(), w.cols())));
    }
    return out;
}

} // namespace scorevae::ad
