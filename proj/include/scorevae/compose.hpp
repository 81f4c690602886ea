#pragma once

#include "scorevae/models.hpp"
#include "scorevae/sde.hpp"

namespace scorevae {

// Bayes-rule score composition: the conditional data score is the prior score
// plus the latent posterior score (plus an optional learned residual).
// The prior is frozen; z is the conditioning latent, one row per state row.
template <typename Prior, typename Enc, typename Corr = Corrector>
struct ComposedScore {
    const Prior* prior = nullptr;
    const Enc* encoder = nullptr;
    const Corr* corrector = nullptr;
    Tensor z;

    struct Parts {
        Tensor prior_score;
        Tensor encoder_score;
        Tensor corrector_term; // zero-sized when absent
        Tensor total;
    };

    Parts conditional_score_parts(const Tensor& x_t, double t) const {
        Parts p;
        p.prior_score = prior->score_value(x_t, t);
        p.encoder_score = encoder->score_value(z, x_t, t);
        p.total = t_add(p.prior_score, p.encoder_score);
        if (corrector) {
            p.corrector_term = corrector->correct_value(x_t, z, t);
            p.total = t_add(p.total, p.corrector_term);
        }
        if (!p.total.all_finite()) throw NumericError("conditional_score: non-finite at t=" + std::to_string(t));
        return p;
    }

    Tensor conditional_score(const Tensor& x_t, double t) const {
        return conditional_score_parts(x_t, t).total;
    }
};

template <typename Prior, typename Enc, typename Corr>
ComposedScore<Prior, Enc, Corr> make_composed_score(const Prior& prior, const Enc& enc, const Corr* corr,
                                                    Tensor z) {
    ComposedScore<Prior, Enc, Corr> cs;
    cs.prior = &prior;
    cs.encoder = &enc;
    cs.corrector = corr;
    cs.z = std::move(z);
    return cs;
}

// Encode each row of x0 at t=0, then run the conditional reverse SDE from the
// unconditional prior at t_end down to t_eps. Returns one reconstruction per row.
template <typename Prior, typename Enc, typename Corr = Corrector>
Tensor reconstruct(const Prior& prior, const Enc& enc, const Corr* corrector, const SdeSpec& spec,
                   const Tensor& x0, int n_steps, RandomStream& rng, bool mean_latent = false,
                   double t_eps = kDefaultTEps) {
    Tensor z = mean_latent ? enc.encode_value(x0, 0.0).first : sample_latent(enc, x0, rng);
    auto cs = make_composed_score(prior, enc, corrector, std::move(z));
    auto field = [&cs](const Tensor& x, double t) { return cs.conditional_score(x, t); };
    return integrate_reverse(field, spec, n_steps, rng, x0.rows, t_eps);
}

} // namespace scorevae
