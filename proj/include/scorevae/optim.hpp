#pragma once

#include <cmath>
#include <vector>

#include "scorevae/autodiff.hpp"
#include "scorevae/errors.hpp"

namespace scorevae {

// Adaptive moment estimation over a flat view of the parameter list.
struct Adam {
    double learning_rate = 2e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    std::vector<double> m, v;
    long step_count = 0;

    void step(std::vector<ad::Var>& params, const std::vector<ad::Var>& grads) {
        size_t total = 0;
        for (const auto& p : params) total += p.val().size();
        if (m.empty()) {
            m.assign(total, 0.0);
            v.assign(total, 0.0);
        }
        if (m.size() != total) throw ShapeError("Adam: parameter count changed mid-run");
        ++step_count;
        double c1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
        double c2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
        size_t off = 0;
        for (size_t i = 0; i < params.size(); ++i) {
            Tensor& pv = params[i].n->val;
            const Tensor& gv = grads[i].val();
            check_same_shape(pv, gv, "Adam::step");
            for (size_t j = 0; j < pv.size(); ++j) {
                double g = gv.v[j];
                m[off] = beta1 * m[off] + (1.0 - beta1) * g;
                v[off] = beta2 * v[off] + (1.0 - beta2) * g * g;
                double mh = m[off] / c1;
                double vh = v[off] / c2;
                pv.v[j] -= learning_rate * mh / (std::sqrt(vh) + eps);
                ++off;
            }
        }
    }
};

// Exponential moving average of parameters, used as evaluation weights.
struct EmaState {
    double rate = 0.999;
    std::vector<double> shadow;

    void init_from(const std::vector<ad::Var>& params) {
        shadow.clear();
        for (const auto& p : params) shadow.insert(shadow.end(), p.val().v.begin(), p.val().v.end());
    }

    void update(const std::vector<ad::Var>& params) {
        size_t off = 0;
        for (const auto& p : params) {
            for (double x : p.val().v) {
                shadow[off] = rate * shadow[off] + (1.0 - rate) * x;
                ++off;
            }
        }
    }
};

} // namespace scorevae
