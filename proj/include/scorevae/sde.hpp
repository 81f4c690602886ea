#pragma once

#include <cmath>
#include <functional>
#include <string>

#include "scorevae/errors.hpp"
#include "scorevae/rng.hpp"
#include "scorevae/tensor.hpp"

namespace scorevae {

inline constexpr double kDefaultTEps = 1e-3;

// Variance-preserving forward process dx = -1/2 beta(t) x dt + sqrt(beta(t)) dw
// with a linear beta schedule on [0, t_end].
struct SdeSpec {
    double beta_min = 0.1;
    double beta_max = 20.0;
    double t_end = 1.0;
    int dim = 1;

    void validate() const {
        if (!(beta_min > 0.0) || !(beta_max >= beta_min))
            throw ConfigError("SdeSpec: require 0 < beta_min <= beta_max");
        if (!(t_end > 0.0)) throw ConfigError("SdeSpec: require t_end > 0");
        if (dim < 1) throw ConfigError("SdeSpec: require dim >= 1");
    }
};

// Perturbation kernel p(x_t | x_0) = N(a x_0, sigma^2 I); a^2 + sigma^2 = 1.
struct KernelParams {
    double a = 1.0;
    double sigma = 0.0;
};

inline void check_time(const SdeSpec& spec, double t) {
    if (!(t >= 0.0 && t <= spec.t_end))
        throw std::domain_error("time " + std::to_string(t) + " outside [0, " + std::to_string(spec.t_end) + "]");
}

inline double beta(const SdeSpec& spec, double t) {
    check_time(spec, t);
    return spec.beta_min + (t / spec.t_end) * (spec.beta_max - spec.beta_min);
}

inline double diffusion_g(const SdeSpec& spec, double t) { return std::sqrt(beta(spec, t)); }

// Integral of beta over [0, t] in closed form.
inline double beta_integral(const SdeSpec& spec, double t) {
    check_time(spec, t);
    return spec.beta_min * t + 0.5 * (spec.beta_max - spec.beta_min) * t * t / spec.t_end;
}

inline KernelParams perturb_params(const SdeSpec& spec, double t) {
    double big_b = beta_integral(spec, t);
    KernelParams kp;
    kp.a = std::exp(-0.5 * big_b);
    kp.sigma = std::sqrt(1.0 - std::exp(-big_b));
    return kp;
}

// Draw x_t ~ p(x_t | x_0) for every row of x0 at a shared time t.
inline Tensor sample_perturbed(const SdeSpec& spec, const Tensor& x0, double t, RandomStream& rng) {
    KernelParams kp = perturb_params(spec, t);
    Tensor out = t_scale(x0, kp.a);
    for (double& x : out.v) x += kp.sigma * rng.normal();
    return out;
}

// Per-row times; t_col is (n x 1). Returns x_t and fills the used noise if asked.
inline Tensor sample_perturbed_rows(const SdeSpec& spec, const Tensor& x0, const Tensor& t_col,
                                    RandomStream& rng, Tensor* noise_out = nullptr) {
    if (t_col.rows != x0.rows || t_col.cols != 1)
        throw ShapeError("sample_perturbed_rows: t_col must be " + std::to_string(x0.rows) + "x1");
    Tensor out(x0.rows, x0.cols);
    Tensor noise(x0.rows, x0.cols);
    for (int r = 0; r < x0.rows; ++r) {
        KernelParams kp = perturb_params(spec, t_col.at(r, 0));
        for (int c = 0; c < x0.cols; ++c) {
            double eps = rng.normal();
            noise.at(r, c) = eps;
            out.at(r, c) = kp.a * x0.at(r, c) + kp.sigma * eps;
        }
    }
    if (noise_out) *noise_out = std::move(noise);
    return out;
}

// Score of the perturbation kernel: -(x_t - a x_0) / sigma^2. Requires t > 0.
inline Tensor transition_score(const SdeSpec& spec, const Tensor& x_t, const Tensor& x0, double t) {
    check_same_shape(x_t, x0, "transition_score");
    KernelParams kp = perturb_params(spec, t);
    if (!(kp.sigma > 0.0))
        throw NumericError("transition_score: sigma(t)=0 at t=" + std::to_string(t));
    Tensor out(x_t.rows, x_t.cols);
    double inv_var = 1.0 / (kp.sigma * kp.sigma);
    for (size_t i = 0; i < out.size(); ++i) out.v[i] = -(x_t.v[i] - kp.a * x0.v[i]) * inv_var;
    return out;
}

inline Tensor transition_score_rows(const SdeSpec& spec, const Tensor& x_t, const Tensor& x0, const Tensor& t_col) {
    check_same_shape(x_t, x0, "transition_score_rows");
    Tensor out(x_t.rows, x_t.cols);
    for (int r = 0; r < x_t.rows; ++r) {
        KernelParams kp = perturb_params(spec, t_col.at(r, 0));
        if (!(kp.sigma > 0.0))
            throw NumericError("transition_score_rows: sigma(t)=0 at t=" + std::to_string(t_col.at(r, 0)));
        double inv_var = 1.0 / (kp.sigma * kp.sigma);
        for (int c = 0; c < x_t.cols; ++c)
            out.at(r, c) = -(x_t.at(r, c) - kp.a * x0.at(r, c)) * inv_var;
    }
    return out;
}

// ln N(x; 0, I) for a single state (1 x d or d x 1).
inline double prior_logdensity(const Tensor& x) {
    if (!x.all_finite()) throw NumericError("prior_logdensity: non-finite input");
    double sq = 0;
    for (double v : x.v) sq += v * v;
    return -0.5 * (sq + static_cast<double>(x.size()) * std::log(2.0 * 3.14159265358979323846));
}

// Row-wise version: (n x d) -> (n x 1).
inline Tensor prior_logdensity_rows(const Tensor& x) {
    Tensor out(x.rows, 1);
    double c = static_cast<double>(x.cols) * std::log(2.0 * 3.14159265358979323846);
    for (int r = 0; r < x.rows; ++r) {
        double sq = 0;
        for (int j = 0; j < x.cols; ++j) sq += x.at(r, j) * x.at(r, j);
        out.at(r, 0) = -0.5 * (sq + c);
    }
    return out;
}

// Divergence of the drift f(x,t) = -1/2 beta(t) x, which is -1/2 beta(t) dim.
inline double divergence_drift(const SdeSpec& spec, double t) {
    return -0.5 * beta(spec, t) * static_cast<double>(spec.dim);
}

// One Euler-Maruyama step of the reverse SDE from t toward t - dt:
//   x' = x - [f(x,t) - g(t)^2 score] dt + g(t) sqrt(dt) eps.
// `noise` toggles the diffusion term (off gives the deterministic drift step).
inline Tensor reverse_step_em(const SdeSpec& spec, const Tensor& x, double t, double dt,
                              const Tensor& score, RandomStream& rng, bool noise = true) {
    check_same_shape(x, score, "reverse_step_em");
    if (!(dt > 0.0 && dt <= t)) throw std::domain_error("reverse_step_em: require 0 < dt <= t");
    if (!x.all_finite() || !score.all_finite())
        throw NumericError("reverse_step_em: non-finite state or score at t=" + std::to_string(t));
    double b = beta(spec, t);
    double g_sqrt_dt = noise ? std::sqrt(b * dt) : 0.0;
    Tensor out(x.rows, x.cols);
    for (size_t i = 0; i < out.size(); ++i) {
        double drift = -0.5 * b * x.v[i] - b * score.v[i];
        out.v[i] = x.v[i] - drift * dt;
    }
    if (noise)
        for (double& v : out.v) v += g_sqrt_dt * rng.normal();
    return out;
}

// Score field over a batch of states at a shared time.
using ScoreFieldFn = std::function<Tensor(const Tensor& x, double t)>;

// Integrate the reverse SDE from t_end down to t_eps on a uniform grid,
// starting from the standard-normal prior. Returns the (n_samples x dim) batch.
inline Tensor integrate_reverse(const ScoreFieldFn& score_field, const SdeSpec& spec, int n_steps,
                                RandomStream& rng, int n_samples = 1, double t_eps = kDefaultTEps) {
    if (n_steps < 1) throw ConfigError("integrate_reverse: n_steps >= 1");
    if (!(t_eps > 0.0 && t_eps < spec.t_end)) throw ConfigError("integrate_reverse: bad t_eps");
    Tensor x = normal_tensor(n_samples, spec.dim, rng);
    double dt = (spec.t_end - t_eps) / static_cast<double>(n_steps);
    for (int k = 0; k < n_steps; ++k) {
        double t = spec.t_end - static_cast<double>(k) * dt;
        Tensor s = score_field(x, t);
        if (!s.all_finite())
            throw NumericError("integrate_reverse: non-finite score at step " + std::to_string(k) +
                               ", t=" + std::to_string(t));
        x = reverse_step_em(spec, x, t, dt, s, rng);
    }
    return x;
}

} // namespace scorevae
