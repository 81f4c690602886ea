#pragma once

#include <cmath>
#include <vector>

#include "scorevae/models.hpp"
#include "scorevae/sde.hpp"

namespace scorevae {

// Weighting lambda(t) of the denoising objective. Likelihood weighting is
// g(t)^2 = beta(t); the simple weighting is sigma(t)^2.
enum class WeightingKind { Likelihood, Simple };

inline double weighting(const SdeSpec& spec, WeightingKind kind, double t) {
    switch (kind) {
        case WeightingKind::Likelihood: return beta(spec, t);
        case WeightingKind::Simple: {
            KernelParams kp = perturb_params(spec, t);
            return kp.sigma * kp.sigma;
        }
    }
    return 0.0;
}

inline WeightingKind weighting_from_name(const std::string& s) {
    if (s == "likelihood") return WeightingKind::Likelihood;
    if (s == "simple") return WeightingKind::Simple;
    throw ConfigError("unknown weighting '" + s + "'");
}

struct LossReport {
    double total = 0.0;
    double dsm_term = 0.0; // data-fit term (reconstruction term for the VAE)
    double kl_term = 0.0;  // unweighted mean KL
    int n_samples = 0;
};

// Loss value plus the graph node to differentiate through.
struct LossResult {
    ad::Var total;
    LossReport report;
};

/*---------------------------------- KL -----------------------------------*/

// KL(N(mu, diag(sigma^2)) || N(0, I)) per row: (n x L) -> (n x 1).
inline ad::Var kl_diag_gaussian_rows(const ad::Var& mu, const ad::Var& sigma) {
    ad::Var terms = ad::add_scalar(
        ad::sub(ad::add(ad::square(mu), ad::square(sigma)), ad::scale(ad::log(ad::square(sigma)), 1.0)), -1.0);
    return ad::scale(ad::sum_rows(terms), 0.5);
}

inline double kl_diag_gaussian(const Tensor& mu, const Tensor& sigma) {
    check_same_shape(mu, sigma, "kl_diag_gaussian");
    for (double s : sigma.v)
        if (!(s > 0.0)) throw std::domain_error("kl_diag_gaussian: sigma must be positive");
    double kl = 0;
    for (size_t i = 0; i < mu.size(); ++i) {
        double m = mu.v[i], s = sigma.v[i];
        kl += 0.5 * (m * m + s * s - 1.0 - std::log(s * s));
    }
    return kl;
}

/*------------------------------ sample draws ------------------------------*/

// Shared Monte Carlo draw for the denoising losses. Named sub-streams keep
// the (t, x_t) draws identical across objectives that add extra latent draws.
struct DsmDraw {
    Tensor t_col;    // (n x 1) times ~ U(t_eps, T)
    Tensor x_t;      // (n x d) perturbed states
    Tensor target;   // (n x d) transition scores
    Tensor lambda;   // (n x 1) weights
    Tensor g2;       // (n x 1) likelihood weights beta(t)
    RandomStream z_rng;
};

inline DsmDraw make_dsm_draw(const SdeSpec& spec, const Tensor& batch, WeightingKind kind,
                             RandomStream& rng, double t_eps) {
    RandomStream t_rng = rng.split();
    RandomStream x_rng = rng.split();
    DsmDraw d;
    d.z_rng = rng.split();
    int n = batch.rows;
    d.t_col = Tensor(n, 1);
    d.lambda = Tensor(n, 1);
    d.g2 = Tensor(n, 1);
    for (int r = 0; r < n; ++r) {
        double t = t_rng.uniform(t_eps, spec.t_end);
        d.t_col.at(r, 0) = t;
        d.lambda.at(r, 0) = weighting(spec, kind, t);
        d.g2.at(r, 0) = beta(spec, t);
    }
    d.x_t = sample_perturbed_rows(spec, batch, d.t_col, x_rng);
    d.target = transition_score_rows(spec, d.x_t, batch, d.t_col);
    return d;
}

// 1/2 lambda(t) |target - s|^2 averaged over rows.
inline ad::Var weighted_residual_mean(const Tensor& lambda, const Tensor& target, const ad::Var& s) {
    ad::Var residual = ad::sub(ad::constant(target), s);
    ad::Var rows = ad::scale(ad::mul(ad::constant(lambda), ad::sq_norm_rows(residual)), 0.5);
    return ad::scale(ad::sum_all(rows), 1.0 / static_cast<double>(target.rows));
}

/*-------------------------------- DSM loss --------------------------------*/

template <typename Model>
LossResult dsm_loss(const Model& model, const Tensor& batch, const SdeSpec& spec, WeightingKind kind,
                    RandomStream& rng, double t_eps = kDefaultTEps) {
    if (batch.rows < 1) throw ConfigError("dsm_loss: empty batch");
    DsmDraw d = make_dsm_draw(spec, batch, kind, rng, t_eps);
    ad::Var s = model.score(ad::constant(d.x_t), d.t_col);
    ad::Var total = weighted_residual_mean(d.lambda, d.target, s);
    LossResult r;
    r.total = total;
    r.report = {total.item(), total.item(), 0.0, batch.rows};
    if (!std::isfinite(r.report.total)) throw NumericError("dsm_loss: non-finite loss");
    return r;
}

/*-------------------------------- CDE loss --------------------------------*/

// Conditional denoising estimator: the conditional score network is trained
// jointly with its encoder. With beta=0 the latent is the deterministic
// encoder mean; with beta>0 it is reparameterized and the KL term is added.
template <typename CondModel, typename Enc>
LossResult cde_loss(const CondModel& model, const Enc& encoder, const Tensor& batch, const SdeSpec& spec,
                    WeightingKind kind, RandomStream& rng, double beta_kl = 0.0,
                    double t_eps = kDefaultTEps) {
    if (batch.rows < 1) throw ConfigError("cde_loss: empty batch");
    DsmDraw d = make_dsm_draw(spec, batch, kind, rng, t_eps);
    Tensor zeros(batch.rows, 1, 0.0);
    auto [mu0, sigma0] = encoder.encode(ad::constant(batch), zeros);
    ad::Var z = mu0;
    if (beta_kl > 0.0) {
        Tensor eps = normal_tensor(mu0.rows(), mu0.cols(), d.z_rng);
        z = ad::add(mu0, ad::mul(sigma0, ad::constant(eps)));
    }
    ad::Var s = model.correct(ad::constant(d.x_t), z, d.t_col);
    ad::Var dsm = weighted_residual_mean(d.lambda, d.target, s);
    LossResult r;
    r.report.dsm_term = dsm.item();
    r.report.n_samples = batch.rows;
    if (beta_kl > 0.0) {
        ad::Var kl = ad::scale(ad::sum_all(kl_diag_gaussian_rows(mu0, sigma0)), 1.0 / batch.rows);
        r.report.kl_term = kl.item();
        r.total = ad::add(dsm, ad::scale(kl, beta_kl));
    } else {
        r.total = dsm;
    }
    r.report.total = r.total.item();
    if (!std::isfinite(r.report.total)) throw NumericError("cde_loss: non-finite loss");
    return r;
}

/*------------------------- composed (Bayes) losses ------------------------*/

// Denoising objective of the composed conditional score
//   s(x_t, z, t) = prior(x_t, t) + grad_x ln q_t(z | x_t) [+ corrector],
// with z reparameterized from q_0(z | x0) and likelihood weighting g(t)^2.
// Which parameters receive gradients is decided by the caller; the prior is
// constant by contract and never trained through this path.
template <typename Prior, typename Enc, typename Corr>
LossResult composed_dsm_loss(const Prior& prior, const Enc& encoder, const Corr* corrector,
                             const Tensor& batch, const SdeSpec& spec, double beta_kl, RandomStream& rng,
                             double t_eps = kDefaultTEps) {
    if (batch.rows < 1) throw ConfigError("composed loss: empty batch");
    DsmDraw d = make_dsm_draw(spec, batch, WeightingKind::Likelihood, rng, t_eps);

    Tensor zeros(batch.rows, 1, 0.0);
    auto [mu0, sigma0] = encoder.encode(ad::constant(batch), zeros);
    Tensor eps = normal_tensor(mu0.rows(), mu0.cols(), d.z_rng);
    ad::Var z = ad::add(mu0, ad::mul(sigma0, ad::constant(eps)));

    ad::Var x_leaf = ad::constant(d.x_t);
    auto [mu_t, sigma_t] = encoder.encode(x_leaf, d.t_col);
    ad::Var lnq = gaussian_logdensity_rows(z, mu_t, sigma_t);
    ad::Var enc_score = ad::grad(ad::sum_all(lnq), {x_leaf})[0];

    ad::Var s = ad::add(prior.score(x_leaf, d.t_col), enc_score);
    if (corrector) s = ad::add(s, corrector->correct(x_leaf, z, d.t_col));

    ad::Var dsm = weighted_residual_mean(d.g2, d.target, s);
    ad::Var kl = ad::scale(ad::sum_all(kl_diag_gaussian_rows(mu0, sigma0)), 1.0 / batch.rows);

    LossResult r;
    r.total = ad::add(dsm, ad::scale(kl, beta_kl));
    r.report = {r.total.item(), dsm.item(), kl.item(), batch.rows};
    if (!std::isfinite(r.report.total)) throw NumericError("composed loss: non-finite loss");
    return r;
}

template <typename Prior, typename Enc>
LossResult scorevae_loss(const Enc& encoder, const Prior& prior, const Tensor& batch, const SdeSpec& spec,
                         double beta_kl, RandomStream& rng, double t_eps = kDefaultTEps) {
    return composed_dsm_loss<Prior, Enc, Corrector>(prior, encoder, nullptr, batch, spec, beta_kl, rng, t_eps);
}

// Same objective and draws with the corrector in the composition; encoder and
// prior are frozen, so only the corrector parameters are updated from this.
template <typename Prior, typename Enc, typename Corr>
LossResult corrector_loss(const Corr& corrector, const Enc& encoder, const Prior& prior, const Tensor& batch,
                          const SdeSpec& spec, double beta_kl, RandomStream& rng,
                          double t_eps = kDefaultTEps) {
    return composed_dsm_loss(prior, encoder, &corrector, batch, spec, beta_kl, rng, t_eps);
}

/*------------------------------- beta-ELBO --------------------------------*/

// Mean of 1/2 |x - decode(z)|^2 + beta KL(q(z|x) || N(0,I)) with z
// reparameterized; the additive (d/2) ln 2pi constant is dropped.
template <typename Enc>
LossResult vae_beta_elbo(const Enc& encoder, const VaeDecoder& decoder, const Tensor& batch, double beta_kl,
                         RandomStream& rng) {
    if (batch.rows < 1) throw ConfigError("vae_beta_elbo: empty batch");
    RandomStream t_rng = rng.split();
    RandomStream x_rng = rng.split();
    RandomStream z_rng = rng.split();
    (void)t_rng;
    (void)x_rng;
    Tensor zeros(batch.rows, 1, 0.0);
    auto [mu, sigma] = encoder.encode(ad::constant(batch), zeros);
    Tensor eps = normal_tensor(mu.rows(), mu.cols(), z_rng);
    ad::Var z = ad::add(mu, ad::mul(sigma, ad::constant(eps)));
    ad::Var xhat = decoder.decode(z);
    ad::Var recon_rows = ad::scale(ad::sq_norm_rows(ad::sub(ad::constant(batch), xhat)), 0.5);
    ad::Var recon = ad::scale(ad::sum_all(recon_rows), 1.0 / batch.rows);
    ad::Var kl = ad::scale(ad::sum_all(kl_diag_gaussian_rows(mu, sigma)), 1.0 / batch.rows);
    LossResult r;
    r.total = ad::add(recon, ad::scale(kl, beta_kl));
    r.report = {r.total.item(), recon.item(), kl.item(), batch.rows};
    if (!std::isfinite(r.report.total)) throw NumericError("vae_beta_elbo: non-finite loss");
    return r;
}

/*---------------------------- likelihood bound ----------------------------*/

struct BoundEstimate {
    double value = 0.0;
    double std_error = 0.0;
    int n_mc = 0;
};

// Monte Carlo estimate of the variational lower bound on ln p(x0):
//   E_z[ L_DSM(x0, z) ] - KL(q_0(z|x0) || N(0, I)),
// where per draw (z, t, x_t, x_T)
//   L_DSM contribution = ln pi(x_T)
//     + (T - t_eps)/2 * [ g^2 (|ks|^2 - |ks - s|^2) + 2 div f ]
// with ks the transition score and s the composed conditional score. The
// quadratic difference is expanded to g^2 (2 ks.s - |s|^2), which is exact and
// avoids the 1/sigma^2 variance blow-up near t=0.
template <typename Prior, typename Enc>
BoundEstimate likelihood_bound_detailed(const Enc& encoder, const Prior& prior, const Tensor& x0,
                                        const SdeSpec& spec, int n_mc, RandomStream& rng,
                                        double t_eps = kDefaultTEps) {
    if (n_mc < 1) throw ConfigError("likelihood_bound: n_mc >= 1");
    if (x0.rows != 1) throw ShapeError("likelihood_bound: x0 must be a single state row");
    RandomStream t_rng = rng.split();
    RandomStream x_rng = rng.split();
    RandomStream z_rng = rng.split();

    auto [mu0, sigma0] = encoder.encode_value(x0, 0.0);
    double kl = kl_diag_gaussian(mu0, sigma0);

    KernelParams kp_end = perturb_params(spec, spec.t_end);
    int d = x0.cols;
    double horizon = spec.t_end - t_eps;

    double sum = 0.0, sum_sq = 0.0;
    for (int i = 0; i < n_mc; ++i) {
        Tensor z = mu0;
        for (size_t j = 0; j < z.size(); ++j) z.v[j] += sigma0.v[j] * z_rng.normal();

        double t = t_rng.uniform(t_eps, spec.t_end);
        KernelParams kp = perturb_params(spec, t);
        Tensor x_t(1, d), ks(1, d), x_end(1, d);
        for (int c = 0; c < d; ++c) {
            double e = x_rng.normal();
            x_t.v[c] = kp.a * x0.v[c] + kp.sigma * e;
            ks.v[c] = -e / kp.sigma;
        }
        for (int c = 0; c < d; ++c) x_end.v[c] = kp_end.a * x0.v[c] + kp_end.sigma * x_rng.normal();

        Tensor s = t_add(prior.score_value(x_t, t), encoder.score_value(z, x_t, t));
        double g2 = beta(spec, t);
        double quad = g2 * (2.0 * t_dot(ks, s) - t_dot(s, s));
        double contrib = prior_logdensity(x_end) + 0.5 * horizon * (quad + 2.0 * divergence_drift(spec, t));
        sum += contrib;
        sum_sq += contrib * contrib;
    }
    double mean = sum / n_mc;
    double var = std::max(0.0, sum_sq / n_mc - mean * mean);
    BoundEstimate be;
    be.value = mean - kl;
    be.std_error = std::sqrt(var / n_mc);
    be.n_mc = n_mc;
    return be;
}

template <typename Prior, typename Enc>
double likelihood_bound(const Enc& encoder, const Prior& prior, const Tensor& x0, const SdeSpec& spec,
                        int n_mc, RandomStream& rng, double t_eps = kDefaultTEps) {
    return likelihood_bound_detailed(encoder, prior, x0, spec, n_mc, rng, t_eps).value;
}

} // namespace scorevae
