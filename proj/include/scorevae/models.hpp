#pragma once

#include <utility>
#include <vector>

#include "scorevae/net.hpp"
#include "scorevae/rng.hpp"
#include "scorevae/sde.hpp"

namespace scorevae {

inline constexpr double kLn2Pi = 1.8378770664093454836;
inline constexpr double kLogSigmaMin = -7.0;
inline constexpr double kLogSigmaMax = 2.0;

// Diagonal-Gaussian log density per row: z, mu, sigma all (n x L) -> (n x 1).
inline ad::Var gaussian_logdensity_rows(const ad::Var& z, const ad::Var& mu, const ad::Var& sigma) {
    ad::Var diff = ad::sub(z, mu);
    ad::Var quad = ad::scale(ad::mul(ad::square(diff), ad::recip(ad::square(sigma))), -0.5);
    ad::Var terms = ad::sub(quad, ad::log(sigma));
    return ad::sum_rows(ad::add_scalar(terms, -0.5 * kLn2Pi));
}

/*------------------------------ score model ------------------------------*/

// Per-row 1/sigma(t) column. Score networks predict a unit-scale quantity
// that is divided by the kernel std, so outputs track the score's natural
// growth near t=0 without the net having to produce huge values.
inline Tensor inv_sigma_col(const SdeSpec& sde, const Tensor& t_col) {
    Tensor out(t_col.rows, 1);
    for (int r = 0; r < t_col.rows; ++r) {
        KernelParams kp = perturb_params(sde, t_col.at(r, 0));
        if (!(kp.sigma > 0.0))
            throw NumericError("score model: sigma(t)=0 at t=" + std::to_string(t_col.at(r, 0)));
        out.at(r, 0) = 1.0 / kp.sigma;
    }
    return out;
}

// Unconditional score network s(x_t, t) = net(x_t, t) / sigma(t).
struct ScoreModel {
    Mlp net;
    SdeSpec sde;

    ScoreModel() = default;
    ScoreModel(NetSpec spec, SdeSpec sde_spec) : net(std::move(spec)), sde(sde_spec) {
        if (net.spec.output_width() != net.spec.input_width())
            throw ConfigError("ScoreModel: output width must equal data dimension");
        sde.dim = net.spec.output_width();
        sde.validate();
    }

    int data_dim() const { return net.spec.input_width(); }

    ad::Var score(const ad::Var& x_t, const Tensor& t_col) const {
        ad::Var raw = net.forward(x_t, &t_col);
        return ad::mul(raw, ad::col_broadcast(ad::constant(inv_sigma_col(sde, t_col)), raw.cols()));
    }

    Tensor score_value(const Tensor& x_t, double t) const {
        Tensor t_col(x_t.rows, 1, t);
        Tensor out = score(ad::constant(x_t), t_col).val();
        if (!out.all_finite()) throw NumericError("ScoreModel: non-finite score output");
        return out;
    }
};

inline ScoreModel make_score_model(int data_dim, const std::vector<int>& hidden, int time_features,
                                   const SdeSpec& sde, Activation act = Activation::Gelu) {
    return ScoreModel(NetSpec::make(data_dim, hidden, data_dim, time_features, act), sde);
}

/*------------------------------ time encoder -----------------------------*/

// Time-dependent Gaussian encoder: (x_t, t) -> (mu, sigma) of q(z | x_t).
// sigma = exp(clamp(log_sigma, -7, 2)) keeps the density and its score finite.
struct TimeEncoder {
    Mlp net;
    int latent_dim = 0;

    TimeEncoder() = default;
    TimeEncoder(NetSpec spec, int latent) : net(std::move(spec)), latent_dim(latent) {
        if (net.spec.output_width() != 2 * latent_dim)
            throw ConfigError("TimeEncoder: output width must be 2*latent_dim");
    }

    int data_dim() const { return net.spec.input_width(); }
    bool time_conditioned() const { return net.spec.time_features > 0; }

    std::pair<ad::Var, ad::Var> encode(const ad::Var& x_t, const Tensor& t_col) const {
        ad::Var out = net.forward(x_t, time_conditioned() ? &t_col : nullptr);
        ad::Var mu = ad::slice_cols(out, 0, latent_dim);
        ad::Var log_sigma = ad::clamp(ad::slice_cols(out, latent_dim, 2 * latent_dim), kLogSigmaMin, kLogSigmaMax);
        return {mu, ad::exp(log_sigma)};
    }

    std::pair<Tensor, Tensor> encode_value(const Tensor& x_t, double t) const {
        Tensor t_col(x_t.rows, 1, t);
        auto [mu, sigma] = encode(ad::constant(x_t), t_col);
        return {mu.val(), sigma.val()};
    }

    // Latent posterior score via reverse-mode differentiation; see encoder_score.
    Tensor score_value(const Tensor& z, const Tensor& x_t, double t) const;
};

inline TimeEncoder make_time_encoder(int data_dim, int latent_dim, const std::vector<int>& hidden,
                                     int time_features, Activation act = Activation::Gelu) {
    return TimeEncoder(NetSpec::make(data_dim, hidden, 2 * latent_dim, time_features, act), latent_dim);
}

// Reparameterized draw from q(z | x0) at t = 0.
template <typename Enc>
Tensor sample_latent(const Enc& enc, const Tensor& x0, RandomStream& rng) {
    auto [mu, sigma] = enc.encode_value(x0, 0.0);
    Tensor z = mu;
    for (size_t i = 0; i < z.size(); ++i) z.v[i] += sigma.v[i] * rng.normal();
    return z;
}

// ln q_t(z | x_t), one value per row.
template <typename Enc>
Tensor encoder_logdensity(const Enc& enc, const Tensor& z, const Tensor& x_t, double t) {
    Tensor t_col(x_t.rows, 1, t);
    auto [mu, sigma] = enc.encode(ad::constant(x_t), t_col);
    return gaussian_logdensity_rows(ad::constant(z), mu, sigma).val();
}

// Latent posterior score: grad of ln q_t(z | x_t) with respect to x_t, per row.
// Rows decouple, so the gradient of the summed log density is the batch of scores.
template <typename Enc>
Tensor encoder_score(const Enc& enc, const Tensor& z, const Tensor& x_t, double t) {
    Tensor t_col(x_t.rows, 1, t);
    ad::Var x_leaf = ad::constant(x_t);
    auto [mu, sigma] = enc.encode(x_leaf, t_col);
    ad::Var lnq = gaussian_logdensity_rows(ad::constant(z), mu, sigma);
    Tensor out = ad::grad(ad::sum_all(lnq), {x_leaf})[0].val();
    if (!out.all_finite()) throw NumericError("encoder_score: non-finite gradient");
    return out;
}

inline Tensor TimeEncoder::score_value(const Tensor& z, const Tensor& x_t, double t) const {
    return encoder_score(*this, z, x_t, t);
}

/*------------------------------- corrector -------------------------------*/

// Conditional network c(x_t, z, t) = net([x_t | z], t) / sigma(t) in data
// space. Serves both as the residual corrector on top of the composed score
// and as the conditional score network of the CDE baseline.
struct Corrector {
    Mlp net;
    SdeSpec sde;
    int latent_dim = 0;

    Corrector() = default;
    Corrector(NetSpec spec, int latent, SdeSpec sde_spec) : net(std::move(spec)), sde(sde_spec), latent_dim(latent) {
        if (net.spec.output_width() != net.spec.input_width() - latent_dim)
            throw ConfigError("Corrector: output width must equal data dimension");
        sde.dim = net.spec.output_width();
        sde.validate();
    }

    int data_dim() const { return net.spec.input_width() - latent_dim; }

    ad::Var correct(const ad::Var& x_t, const ad::Var& z, const Tensor& t_col) const {
        ad::Var raw = net.forward(ad::concat_cols(x_t, z), &t_col);
        return ad::mul(raw, ad::col_broadcast(ad::constant(inv_sigma_col(sde, t_col)), raw.cols()));
    }

    Tensor correct_value(const Tensor& x_t, const Tensor& z, double t) const {
        Tensor t_col(x_t.rows, 1, t);
        return correct(ad::constant(x_t), ad::constant(z), t_col).val();
    }
};

inline Corrector make_corrector(int data_dim, int latent_dim, const std::vector<int>& hidden,
                                int time_features, const SdeSpec& sde, Activation act = Activation::Gelu) {
    return Corrector(NetSpec::make(data_dim + latent_dim, hidden, data_dim, time_features, act), latent_dim,
                     sde);
}

/*------------------------------ VAE decoder ------------------------------*/

// Gaussian decoder with identity covariance: outputs the mean in data space.
struct VaeDecoder {
    Mlp net;

    VaeDecoder() = default;
    explicit VaeDecoder(NetSpec spec) : net(std::move(spec)) {}

    int latent_dim() const { return net.spec.input_width(); }
    int data_dim() const { return net.spec.output_width(); }

    ad::Var decode(const ad::Var& z) const { return net.forward(z); }

    Tensor decode_value(const Tensor& z) const { return decode(ad::constant(z)).val(); }
};

inline VaeDecoder make_vae_decoder(int latent_dim, int data_dim, const std::vector<int>& hidden,
                                   Activation act = Activation::Gelu) {
    return VaeDecoder(NetSpec::make(latent_dim, hidden, data_dim, 0, act));
}

inline Tensor vae_decode(const VaeDecoder& dec, const Tensor& z) { return dec.decode_value(z); }

} // namespace scorevae
