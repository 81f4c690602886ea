#pragma once

#include <functional>
#include <string>
#include <vector>

#include "scorevae/checkpoint.hpp"
#include "scorevae/compose.hpp"
#include "scorevae/config.hpp"
#include "scorevae/objectives.hpp"
#include "scorevae/optim.hpp"

namespace scorevae {

struct TrainOutput {
    Checkpoint checkpoint;
    std::vector<double> loss_curve;
};

inline Tensor sample_batch(const Dataset& data, int batch_size, RandomStream& rng) {
    Tensor batch(batch_size, data.dim());
    for (int r = 0; r < batch_size; ++r) {
        int idx = static_cast<int>(rng.uniform() * data.size());
        if (idx == data.size()) idx = data.size() - 1;
        for (int c = 0; c < data.dim(); ++c) batch.at(r, c) = data.samples.at(idx, c);
    }
    return batch;
}

// Single-writer loop: sample batch, evaluate loss graph, Adam step, EMA update.
// Divergence aborts with the failing iteration in the message.
template <typename LossFn>
std::vector<double> run_training(std::vector<ad::Var>& params, LossFn&& make_loss, const Dataset& data,
                                 const OptimizerConfig& opt, EmaState& ema, RandomStream& rng) {
    Adam adam;
    adam.learning_rate = opt.learning_rate;
    ema.rate = opt.ema_rate;
    ema.init_from(params);
    std::vector<double> curve;
    curve.reserve(opt.n_iters);
    for (int iter = 0; iter < opt.n_iters; ++iter) {
        Tensor batch = sample_batch(data, opt.batch_size, rng);
        LossResult res;
        try {
            res = make_loss(batch, rng);
        } catch (const NumericError& e) {
            throw NumericError("training diverged at iteration " + std::to_string(iter) + ": " + e.what());
        }
        auto grads = ad::grad(res.total, params);
        adam.step(params, grads);
        ema.update(params);
        curve.push_back(res.report.total);
    }
    return curve;
}

inline Checkpoint make_single_net_checkpoint(const std::string& component, const ExperimentConfig& cfg,
                                             const NetSpec& spec, const std::string& net_name,
                                             const std::vector<double>& weights, int iters) {
    Checkpoint ck;
    ck.component = component;
    ck.iteration = iters;
    ck.seed = cfg.seed;
    ck.weights = "ema";
    ck.latent_dim = cfg.latent_dim;
    ck.sde = cfg.sde;
    ck.sde.dim = cfg.data_dim();
    ck.nets.emplace_back(net_name, spec);
    append_params(ck.payload, weights);
    return ck;
}

/*------------------------------ train: prior ------------------------------*/

inline TrainOutput train_prior(const ExperimentConfig& cfg) {
    cfg.validate();
    int d = cfg.data_dim();
    SdeSpec sde = cfg.sde;
    sde.dim = d;
    Dataset data = build_dataset(cfg, derive_seed(cfg.seed, "data"));

    ScoreModel model = make_score_model(d, cfg.prior_net.hidden, cfg.prior_net.time_features, sde,
                                        cfg.prior_net.activation);
    RandomStream init_rng(derive_seed(cfg.seed, "prior-init"));
    model.net.init(init_rng, /*zero_last=*/true);

    EmaState ema;
    RandomStream rng(derive_seed(cfg.seed, "prior-train"));
    auto loss = [&](const Tensor& batch, RandomStream& r) {
        return dsm_loss(model, batch, sde, cfg.prior_weighting, r, cfg.sampler.t_eps);
    };
    TrainOutput out;
    out.loss_curve = run_training(model.net.params, loss, data, cfg.optimizer, ema, rng);
    out.checkpoint = make_single_net_checkpoint("prior", cfg, model.net.spec, "score", ema.shadow,
                                                cfg.optimizer.n_iters);
    return out;
}

inline ScoreModel score_model_from_checkpoint(const Checkpoint& ck) {
    if (ck.component != "prior") throw ConfigError("expected a prior checkpoint, got '" + ck.component + "'");
    ScoreModel model(ck.nets.at(0).second, ck.sde);
    model.net.unflatten(net_params_from_payload(ck, 0));
    return model;
}

/*----------------------------- train: encoder -----------------------------*/

inline TrainOutput train_encoder(const ExperimentConfig& cfg, const Checkpoint& prior_ck) {
    cfg.validate();
    int d = cfg.data_dim();
    SdeSpec sde = cfg.sde;
    sde.dim = d;
    Dataset data = build_dataset(cfg, derive_seed(cfg.seed, "data"));
    ScoreModel prior = score_model_from_checkpoint(prior_ck);

    TimeEncoder enc = make_time_encoder(d, cfg.latent_dim, cfg.encoder_net.hidden,
                                        cfg.encoder_net.time_features, cfg.encoder_net.activation);
    RandomStream init_rng(derive_seed(cfg.seed, "encoder-init"));
    enc.net.init(init_rng, /*zero_last=*/true);

    EmaState ema;
    RandomStream rng(derive_seed(cfg.seed, "encoder-train"));
    auto loss = [&](const Tensor& batch, RandomStream& r) {
        return scorevae_loss(enc, prior, batch, sde, cfg.beta, r, cfg.sampler.t_eps);
    };
    TrainOutput out;
    out.loss_curve = run_training(enc.net.params, loss, data, cfg.optimizer, ema, rng);
    out.checkpoint = make_single_net_checkpoint("encoder", cfg, enc.net.spec, "encoder", ema.shadow,
                                                cfg.optimizer.n_iters);
    return out;
}

inline TimeEncoder encoder_from_checkpoint(const Checkpoint& ck) {
    if (ck.component != "encoder") throw ConfigError("expected an encoder checkpoint, got '" + ck.component + "'");
    TimeEncoder enc(ck.nets.at(0).second, ck.latent_dim);
    enc.net.unflatten(net_params_from_payload(ck, 0));
    return enc;
}

/*---------------------------- train: corrector ----------------------------*/

inline TrainOutput train_corrector(const ExperimentConfig& cfg, const Checkpoint& prior_ck,
                                   const Checkpoint& encoder_ck) {
    cfg.validate();
    int d = cfg.data_dim();
    SdeSpec sde = cfg.sde;
    sde.dim = d;
    Dataset data = build_dataset(cfg, derive_seed(cfg.seed, "data"));
    ScoreModel prior = score_model_from_checkpoint(prior_ck);
    TimeEncoder enc = encoder_from_checkpoint(encoder_ck);

    Corrector corr = make_corrector(d, cfg.latent_dim, cfg.corrector_net.hidden,
                                    cfg.corrector_net.time_features, sde, cfg.corrector_net.activation);
    RandomStream init_rng(derive_seed(cfg.seed, "corrector-init"));
    corr.net.init(init_rng, /*zero_last=*/true);

    EmaState ema;
    RandomStream rng(derive_seed(cfg.seed, "corrector-train"));
    auto loss = [&](const Tensor& batch, RandomStream& r) {
        return corrector_loss(corr, enc, prior, batch, sde, cfg.beta, r, cfg.sampler.t_eps);
    };
    TrainOutput out;
    out.loss_curve = run_training(corr.net.params, loss, data, cfg.optimizer, ema, rng);
    out.checkpoint = make_single_net_checkpoint("corrector", cfg, corr.net.spec, "corrector", ema.shadow,
                                                cfg.optimizer.n_iters);
    return out;
}

inline Corrector corrector_from_checkpoint(const Checkpoint& ck) {
    if (ck.component != "corrector")
        throw ConfigError("expected a corrector checkpoint, got '" + ck.component + "'");
    Corrector corr(ck.nets.at(0).second, ck.latent_dim, ck.sde);
    corr.net.unflatten(net_params_from_payload(ck, 0));
    return corr;
}

/*------------------------------- train: VAE -------------------------------*/

inline TrainOutput train_vae(const ExperimentConfig& cfg) {
    cfg.validate();
    int d = cfg.data_dim();
    Dataset data = build_dataset(cfg, derive_seed(cfg.seed, "data"));

    TimeEncoder enc = make_time_encoder(d, cfg.latent_dim, cfg.vae_encoder_net.hidden, 0,
                                        cfg.vae_encoder_net.activation);
    VaeDecoder dec = make_vae_decoder(cfg.latent_dim, d, cfg.decoder_net.hidden, cfg.decoder_net.activation);
    RandomStream init_rng(derive_seed(cfg.seed, "vae-init"));
    enc.net.init(init_rng, /*zero_last=*/true);
    dec.net.init(init_rng, /*zero_last=*/true);

    std::vector<ad::Var> params = enc.net.params;
    params.insert(params.end(), dec.net.params.begin(), dec.net.params.end());

    EmaState ema;
    RandomStream rng(derive_seed(cfg.seed, "vae-train"));
    // Var copies share leaf nodes, so optimizer updates through `params` are
    // visible to the models.
    auto loss = [&](const Tensor& batch, RandomStream& r) {
        return vae_beta_elbo(enc, dec, batch, cfg.beta, r);
    };
    TrainOutput out;
    out.loss_curve = run_training(params, loss, data, cfg.optimizer, ema, rng);

    Checkpoint ck;
    ck.component = "vae";
    ck.iteration = cfg.optimizer.n_iters;
    ck.seed = cfg.seed;
    ck.weights = "ema";
    ck.latent_dim = cfg.latent_dim;
    ck.sde = cfg.sde;
    ck.sde.dim = d;
    ck.nets.emplace_back("vae_encoder", enc.net.spec);
    ck.nets.emplace_back("decoder", dec.net.spec);
    append_params(ck.payload, ema.shadow);
    out.checkpoint = ck;
    return out;
}

/*--------------------------- train: diff-decoder --------------------------*/

// Conditional score network trained jointly with its own encoder (CDE).
// beta_override < 0 means "use cfg.beta"; 0 trains the plain auto-encoding
// variant that the evaluation table reports as the beta=0 row.
inline TrainOutput train_diffdecoder(const ExperimentConfig& cfg, double beta_override = -1.0) {
    cfg.validate();
    double beta_kl = beta_override >= 0.0 ? beta_override : cfg.beta;
    int d = cfg.data_dim();
    SdeSpec sde = cfg.sde;
    sde.dim = d;
    Dataset data = build_dataset(cfg, derive_seed(cfg.seed, "data"));

    Corrector cond = make_corrector(d, cfg.latent_dim, cfg.diffdecoder_net.hidden,
                                    cfg.diffdecoder_net.time_features, sde, cfg.diffdecoder_net.activation);
    TimeEncoder enc = make_time_encoder(d, cfg.latent_dim, cfg.vae_encoder_net.hidden, 0,
                                        cfg.vae_encoder_net.activation);
    RandomStream init_rng(derive_seed(cfg.seed, "diffdecoder-init"));
    cond.net.init(init_rng, /*zero_last=*/true);
    enc.net.init(init_rng, /*zero_last=*/true);

    std::vector<ad::Var> params = cond.net.params;
    params.insert(params.end(), enc.net.params.begin(), enc.net.params.end());

    EmaState ema;
    RandomStream rng(derive_seed(cfg.seed, "diffdecoder-train"));
    auto loss = [&](const Tensor& batch, RandomStream& r) {
        return cde_loss(cond, enc, batch, sde, cfg.prior_weighting, r, beta_kl, cfg.sampler.t_eps);
    };
    TrainOutput out;
    out.loss_curve = run_training(params, loss, data, cfg.optimizer, ema, rng);

    Checkpoint ck;
    ck.component = beta_kl > 0.0 ? "diffdecoder" : "diffdecoder0";
    ck.iteration = cfg.optimizer.n_iters;
    ck.seed = cfg.seed;
    ck.weights = "ema";
    ck.latent_dim = cfg.latent_dim;
    ck.sde = sde;
    ck.nets.emplace_back("cond_score", cond.net.spec);
    ck.nets.emplace_back("dd_encoder", enc.net.spec);
    append_params(ck.payload, ema.shadow);
    out.checkpoint = ck;
    return out;
}

} // namespace scorevae
