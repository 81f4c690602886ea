#pragma once

#include <cmath>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

#include "scorevae/compose.hpp"
#include "scorevae/config.hpp"
#include "scorevae/train.hpp"

namespace scorevae {

struct EvalRow {
    std::string method;
    double mean_l2 = 0.0;
    double sd_l2 = 0.0;
    int n = 0;
};

// Per-sample Euclidean norm of the difference, averaged over the test set.
inline EvalRow l2_metric(const std::string& method, const Tensor& x, const Tensor& xhat) {
    check_same_shape(x, xhat, "l2_metric");
    EvalRow row;
    row.method = method;
    row.n = x.rows;
    std::vector<double> dists(x.rows);
    for (int r = 0; r < x.rows; ++r) {
        double sq = 0;
        for (int c = 0; c < x.cols; ++c) {
            double d = x.at(r, c) - xhat.at(r, c);
            sq += d * d;
        }
        dists[r] = std::sqrt(sq);
        row.mean_l2 += dists[r];
    }
    row.mean_l2 /= x.rows;
    for (double d : dists) row.sd_l2 += (d - row.mean_l2) * (d - row.mean_l2);
    row.sd_l2 = x.rows > 1 ? std::sqrt(row.sd_l2 / (x.rows - 1)) : 0.0;
    return row;
}

/*----------------------------- reconstructions ----------------------------*/

template <typename Enc>
Tensor reconstruct_vae(const Enc& enc, const VaeDecoder& dec, const Tensor& x0, RandomStream& rng,
                       bool mean_latent) {
    Tensor z = mean_latent ? enc.encode_value(x0, 0.0).first : sample_latent(enc, x0, rng);
    return dec.decode_value(z);
}

// CDE reconstruction: encode, then run the reverse SDE on the conditional
// score network directly (no Bayes composition).
template <typename Enc>
Tensor reconstruct_diffdecoder(const Corrector& cond, const Enc& enc, const SdeSpec& spec, const Tensor& x0,
                               int n_steps, RandomStream& rng, bool sample_z, double t_eps) {
    Tensor z = sample_z ? sample_latent(enc, x0, rng) : enc.encode_value(x0, 0.0).first;
    auto field = [&](const Tensor& x, double t) { return cond.correct_value(x, z, t); };
    return integrate_reverse(field, spec, n_steps, rng, x0.rows, t_eps);
}

/*-------------------------------- evaluate --------------------------------*/

struct MethodCheckpoints {
    const Checkpoint* prior = nullptr;
    const Checkpoint* encoder = nullptr;
    const Checkpoint* corrector = nullptr;
    const Checkpoint* vae = nullptr;
    const Checkpoint* diffdecoder = nullptr;  // trained with beta > 0
    const Checkpoint* diffdecoder0 = nullptr; // trained with beta = 0
};

inline std::pair<TimeEncoder, VaeDecoder> vae_from_checkpoint(const Checkpoint& ck) {
    if (ck.component != "vae") throw ConfigError("expected a vae checkpoint, got '" + ck.component + "'");
    TimeEncoder enc(ck.nets.at(0).second, ck.latent_dim);
    enc.net.unflatten(net_params_from_payload(ck, 0));
    VaeDecoder dec(ck.nets.at(1).second);
    dec.net.unflatten(net_params_from_payload(ck, 1));
    return {std::move(enc), std::move(dec)};
}

inline std::pair<Corrector, TimeEncoder> diffdecoder_from_checkpoint(const Checkpoint& ck) {
    if (ck.component != "diffdecoder" && ck.component != "diffdecoder0")
        throw ConfigError("expected a diffdecoder checkpoint, got '" + ck.component + "'");
    Corrector cond(ck.nets.at(0).second, ck.latent_dim, ck.sde);
    cond.net.unflatten(net_params_from_payload(ck, 0));
    TimeEncoder enc(ck.nets.at(1).second, ck.latent_dim);
    enc.net.unflatten(net_params_from_payload(ck, 1));
    return {std::move(cond), std::move(enc)};
}

// Reconstruction L2 for every method with a checkpoint, Table-1 row order.
// Each method runs from the same eval seed so draws are comparable.
inline std::vector<EvalRow> evaluate(const MethodCheckpoints& mc, const Dataset& test,
                                     const ExperimentConfig& cfg, bool mean_latent = false) {
    std::vector<EvalRow> rows;
    SdeSpec sde = cfg.sde;
    sde.dim = test.dim();
    const Tensor& x = test.samples;
    char label[64];

    if (mc.vae) {
        auto [enc, dec] = vae_from_checkpoint(*mc.vae);
        RandomStream rng(derive_seed(cfg.eval_seed, "eval-vae"));
        Tensor xhat = reconstruct_vae(enc, dec, x, rng, mean_latent);
        std::snprintf(label, sizeof label, "VAE (beta=%g)", cfg.beta);
        rows.push_back(l2_metric(label, x, xhat));
    }
    if (mc.prior && mc.encoder) {
        ScoreModel prior = score_model_from_checkpoint(*mc.prior);
        TimeEncoder enc = encoder_from_checkpoint(*mc.encoder);
        RandomStream rng(derive_seed(cfg.eval_seed, "eval-scorevae"));
        Tensor xhat = reconstruct<ScoreModel, TimeEncoder, Corrector>(
            prior, enc, nullptr, sde, x, cfg.sampler.n_steps, rng, mean_latent, cfg.sampler.t_eps);
        std::snprintf(label, sizeof label, "ScoreVAE (beta=%g)", cfg.beta);
        rows.push_back(l2_metric(label, x, xhat));
    }
    if (mc.prior && mc.encoder && mc.corrector) {
        ScoreModel prior = score_model_from_checkpoint(*mc.prior);
        TimeEncoder enc = encoder_from_checkpoint(*mc.encoder);
        Corrector corr = corrector_from_checkpoint(*mc.corrector);
        RandomStream rng(derive_seed(cfg.eval_seed, "eval-scorevae+"));
        Tensor xhat = reconstruct(prior, enc, &corr, sde, x, cfg.sampler.n_steps, rng, mean_latent,
                                  cfg.sampler.t_eps);
        std::snprintf(label, sizeof label, "ScoreVAE+ (beta=%g)", cfg.beta);
        rows.push_back(l2_metric(label, x, xhat));
    }
    if (mc.diffdecoder) {
        auto [cond, enc] = diffdecoder_from_checkpoint(*mc.diffdecoder);
        RandomStream rng(derive_seed(cfg.eval_seed, "eval-diffdecoder"));
        Tensor xhat = reconstruct_diffdecoder(cond, enc, sde, x, cfg.sampler.n_steps, rng,
                                              /*sample_z=*/!mean_latent, cfg.sampler.t_eps);
        std::snprintf(label, sizeof label, "DiffDecoder (beta=%g)", cfg.beta);
        rows.push_back(l2_metric(label, x, xhat));
    }
    if (mc.diffdecoder0) {
        auto [cond, enc] = diffdecoder_from_checkpoint(*mc.diffdecoder0);
        RandomStream rng(derive_seed(cfg.eval_seed, "eval-diffdecoder0"));
        Tensor xhat = reconstruct_diffdecoder(cond, enc, sde, x, cfg.sampler.n_steps, rng,
                                              /*sample_z=*/false, cfg.sampler.t_eps);
        rows.push_back(l2_metric("DiffDecoder (beta=0)", x, xhat));
    }
    return rows;
}

/*---------------------------------- output --------------------------------*/

inline void write_metrics_csv(const std::string& path, const std::vector<EvalRow>& rows) {
    std::ofstream out(path);
    if (!out) throw IoError("write_metrics_csv: cannot open '" + path + "'");
    out << "method,mean_l2,sd_l2,n\n";
    for (const auto& r : rows)
        out << r.method << "," << format_double(r.mean_l2) << "," << format_double(r.sd_l2) << "," << r.n << "\n";
}

inline std::string format_metric_table(const std::vector<EvalRow>& rows) {
    size_t width = 8;
    for (const auto& r : rows) width = std::max(width, r.method.size());
    std::string s;
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-*s  %10s  %10s  %6s\n", static_cast<int>(width), "method", "L2", "sd", "n");
    s += buf;
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%-*s  %10.4f  %10.4f  %6d\n", static_cast<int>(width), r.method.c_str(),
                      r.mean_l2, r.sd_l2, r.n);
        s += buf;
    }
    return s;
}

inline void write_loss_csv(const std::string& path, const std::vector<double>& curve) {
    std::ofstream out(path);
    if (!out) throw IoError("write_loss_csv: cannot open '" + path + "'");
    out << "iteration,loss\n";
    for (size_t i = 0; i < curve.size(); ++i) out << i << "," << format_double(curve[i]) << "\n";
}

// 2D point clouds as CSV; one row per sample.
inline void write_points_csv(const std::string& path, const Tensor& points) {
    std::ofstream out(path);
    if (!out) throw IoError("write_points_csv: cannot open '" + path + "'");
    for (int r = 0; r < points.rows; ++r) {
        for (int c = 0; c < points.cols; ++c) {
            if (c) out << ",";
            out << format_double(points.at(r, c));
        }
        out << "\n";
    }
}

// Binary PGM (P5) grid of square images; values in [0,1] map to bytes 0..255.
inline void emit_images(const Tensor& states, const std::string& path) {
    int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(states.cols))));
    if (side * side != states.cols)
        throw ShapeError("emit_images: sample width " + std::to_string(states.cols) + " is not a square");
    int grid = 1;
    while (grid * grid < states.rows) ++grid;
    int w = grid * side, h = ((states.rows + grid - 1) / grid) * side;
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("emit_images: cannot open '" + path + "'");
    out << "P5\n" << w << " " << h << "\n255\n";
    std::vector<unsigned char> canvas(static_cast<size_t>(w) * h, 0);
    for (int i = 0; i < states.rows; ++i) {
        int gx = (i % grid) * side, gy = (i / grid) * side;
        for (int r = 0; r < side; ++r)
            for (int c = 0; c < side; ++c) {
                double v = std::min(std::max(states.at(i, r * side + c), 0.0), 1.0);
                canvas[static_cast<size_t>(gy + r) * w + gx + c] =
                    static_cast<unsigned char>(std::lround(v * 255.0));
            }
    }
    out.write(reinterpret_cast<const char*>(canvas.data()), static_cast<std::streamsize>(canvas.size()));
}

} // namespace scorevae
