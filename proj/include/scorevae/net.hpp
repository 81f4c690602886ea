#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "scorevae/autodiff.hpp"
#include "scorevae/errors.hpp"
#include "scorevae/rng.hpp"
#include "scorevae/tensor.hpp"

namespace scorevae {

enum class Activation { Gelu, Tanh, Identity };

inline std::string activation_name(Activation a) {
    switch (a) {
        case Activation::Gelu: return "gelu";
        case Activation::Tanh: return "tanh";
        case Activation::Identity: return "identity";
    }
    return "?";
}

inline Activation activation_from_name(const std::string& s) {
    if (s == "gelu") return Activation::Gelu;
    if (s == "tanh") return Activation::Tanh;
    if (s == "identity") return Activation::Identity;
    throw ConfigError("unknown activation '" + s + "'");
}

// widths[0] is the full first-layer input width, including the 2*time_features
// columns appended for the sinusoidal time embedding. Final layer is linear.
struct NetSpec {
    std::vector<int> widths;
    Activation activation = Activation::Gelu;
    int time_features = 0;

    void validate() const {
        if (widths.size() < 2) throw ConfigError("NetSpec: need at least one layer (two widths)");
        for (int w : widths)
            if (w < 1) throw ConfigError("NetSpec: widths must be positive");
        if (time_features < 0) throw ConfigError("NetSpec: time_features >= 0");
        if (2 * time_features >= widths.front())
            throw ConfigError("NetSpec: time embedding wider than first layer");
    }

    int input_width() const { return widths.front() - 2 * time_features; }
    int output_width() const { return widths.back(); }

    static NetSpec make(int in, const std::vector<int>& hidden, int out, int time_features,
                        Activation act = Activation::Gelu) {
        NetSpec s;
        s.widths.push_back(in + 2 * time_features);
        for (int h : hidden) s.widths.push_back(h);
        s.widths.push_back(out);
        s.activation = act;
        s.time_features = time_features;
        s.validate();
        return s;
    }
};

// [sin(2^k pi t), cos(2^k pi t)] pairs for k < K, one row per time entry.
inline Tensor time_embedding(const Tensor& t_col, int k_features) {
    Tensor emb(t_col.rows, 2 * k_features);
    for (int r = 0; r < t_col.rows; ++r) {
        double t = t_col.at(r, 0);
        double f = 3.14159265358979323846;
        for (int k = 0; k < k_features; ++k) {
            emb.at(r, 2 * k) = std::sin(f * t);
            emb.at(r, 2 * k + 1) = std::cos(f * t);
            f *= 2.0;
        }
    }
    return emb;
}

struct Mlp {
    NetSpec spec;
    std::vector<ad::Var> params; // W0, b0, W1, b1, ...

    Mlp() = default;

    explicit Mlp(NetSpec s) : spec(std::move(s)) {
        spec.validate();
        for (size_t i = 0; i + 1 < spec.widths.size(); ++i) {
            params.push_back(ad::constant(Tensor(spec.widths[i], spec.widths[i + 1])));
            params.push_back(ad::constant(Tensor(1, spec.widths[i + 1])));
        }
    }

    // Weights ~ N(0, 2/fan_in), biases 0. zero_last zeroes the output layer so a
    // fresh model evaluates to exactly zero.
    void init(RandomStream& rng, bool zero_last = false) {
        size_t n_layers = params.size() / 2;
        for (size_t l = 0; l < n_layers; ++l) {
            Tensor w(spec.widths[l], spec.widths[l + 1]);
            if (!(zero_last && l + 1 == n_layers)) {
                double std_dev = std::sqrt(2.0 / static_cast<double>(spec.widths[l]));
                for (double& x : w.v) x = std_dev * rng.normal();
            }
            params[2 * l] = ad::constant(std::move(w));
            params[2 * l + 1] = ad::constant(Tensor(1, spec.widths[l + 1]));
        }
    }

    size_t param_count() const {
        size_t n = 0;
        for (const auto& p : params) n += p.val().size();
        return n;
    }

    std::vector<double> flatten() const {
        std::vector<double> out;
        out.reserve(param_count());
        for (const auto& p : params) out.insert(out.end(), p.val().v.begin(), p.val().v.end());
        return out;
    }

    void unflatten(const std::vector<double>& flat) {
        if (flat.size() != param_count())
            throw ShapeError("Mlp::unflatten: expected " + std::to_string(param_count()) +
                             " values, got " + std::to_string(flat.size()));
        size_t off = 0;
        for (auto& p : params) {
            Tensor t(p.rows(), p.cols());
            std::copy(flat.begin() + off, flat.begin() + off + t.size(), t.v.begin());
            off += t.size();
            p = ad::constant(std::move(t));
        }
    }

    // x is (n x input_width); t_col (n x 1) required iff time_features > 0.
    ad::Var forward(const ad::Var& x, const Tensor* t_col = nullptr) const {
        if (x.cols() != spec.input_width())
            throw ShapeError("Mlp::forward: expected input width " + std::to_string(spec.input_width()) +
                             ", got " + std::to_string(x.cols()));
        ad::Var h = x;
        if (spec.time_features > 0) {
            if (!t_col) throw ShapeError("Mlp::forward: time input required (time_features > 0)");
            if (t_col->rows != x.rows() || t_col->cols != 1)
                throw ShapeError("Mlp::forward: t_col must be " + std::to_string(x.rows()) + "x1, got " +
                                 t_col->shape_str());
            h = ad::concat_cols(h, ad::constant(time_embedding(*t_col, spec.time_features)));
        }
        size_t n_layers = params.size() / 2;
        for (size_t l = 0; l < n_layers; ++l) {
            h = ad::add(ad::matmul(h, params[2 * l]), ad::row_broadcast(params[2 * l + 1], h.rows()));
            if (l + 1 < n_layers) {
                switch (spec.activation) {
                    case Activation::Gelu: h = ad::gelu(h); break;
                    case Activation::Tanh: h = ad::tanh(h); break;
                    case Activation::Identity: break;
                }
            }
        }
        return h;
    }

    Tensor forward_value(const Tensor& x, const Tensor* t_col = nullptr) const {
        return forward(ad::constant(x), t_col).val();
    }
};

// Gradient of a scalar function of x with respect to x.
template <typename Fn>
Tensor grad_input(Fn&& scalar_fn, const Tensor& x) {
    ad::Var xv = ad::constant(x);
    ad::Var y = scalar_fn(xv);
    return ad::grad(y, {xv})[0].val();
}

// Gradients of a scalar function with respect to a parameter list.
template <typename Fn>
std::vector<Tensor> grad_params(Fn&& scalar_fn, const std::vector<ad::Var>& params) {
    ad::Var y = scalar_fn();
    auto gs = ad::grad(y, params);
    std::vector<Tensor> out;
    out.reserve(gs.size());
    for (auto& g : gs) out.push_back(g.val());
    return out;
}

} // namespace scorevae
