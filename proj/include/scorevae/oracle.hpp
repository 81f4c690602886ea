#pragma once

#include <cmath>

#include <Eigen/Dense>

#include "scorevae/rng.hpp"
#include "scorevae/sde.hpp"
#include "scorevae/tensor.hpp"

namespace scorevae::oracle {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline VectorXd to_eigen_vec(const Tensor& t) {
    VectorXd v(static_cast<Eigen::Index>(t.size()));
    for (size_t i = 0; i < t.size(); ++i) v[static_cast<Eigen::Index>(i)] = t.v[i];
    return v;
}

inline Tensor to_row_tensor(const VectorXd& v) {
    Tensor t(1, static_cast<int>(v.size()));
    for (int i = 0; i < t.cols; ++i) t.v[i] = v[i];
    return t;
}

// Linear-Gaussian world: x0 ~ N(m, C), z | x0 ~ N(A x0 + b, s^2 I), diffused by
// the VP process. Every score in the model has a closed form here, which makes
// this the ground-truth generator for verification.
struct GaussianWorld {
    VectorXd m;
    MatrixXd C;
    MatrixXd A;
    VectorXd b;
    double s = 1.0;
    SdeSpec spec;

    GaussianWorld(VectorXd mean, MatrixXd cov, MatrixXd enc, VectorXd bias, double noise_std, SdeSpec sde)
        : m(std::move(mean)), C(std::move(cov)), A(std::move(enc)), b(std::move(bias)), s(noise_std), spec(sde) {
        spec.validate();
        if (C.rows() != C.cols() || C.rows() != m.size())
            throw ShapeError("GaussianWorld: C must be square and match m");
        if (A.cols() != m.size() || A.rows() != b.size())
            throw ShapeError("GaussianWorld: A must be (latent x data), b latent-sized");
        if (!(s > 0.0)) throw ConfigError("GaussianWorld: encoder noise std must be positive");
        if ((C - C.transpose()).cwiseAbs().maxCoeff() > 1e-10)
            throw ConfigError("GaussianWorld: C must be symmetric");
        Eigen::SelfAdjointEigenSolver<MatrixXd> es(C);
        double lo = es.eigenvalues().minCoeff();
        double hi = es.eigenvalues().maxCoeff();
        if (!(lo > 0.0)) throw ConfigError("GaussianWorld: C must be positive definite");
        if (hi / lo > 1e8) throw ConfigError("GaussianWorld: C condition number exceeds 1e8");
        spec.dim = static_cast<int>(m.size());
    }

    int data_dim() const { return static_cast<int>(m.size()); }
    int latent_dim() const { return static_cast<int>(b.size()); }

    // Covariance of x_t = a x0 + sigma eps.
    MatrixXd sigma_x(double t) const {
        KernelParams kp = perturb_params(spec, t);
        return kp.a * kp.a * C + kp.sigma * kp.sigma * MatrixXd::Identity(data_dim(), data_dim());
    }

    MatrixXd sigma_z() const {
        return A * C * A.transpose() + s * s * MatrixXd::Identity(latent_dim(), latent_dim());
    }

    // Cov(z, x_t) = a A C.
    MatrixXd cross_cov(double t) const {
        KernelParams kp = perturb_params(spec, t);
        return kp.a * A * C;
    }

    VectorXd mean_x(double t) const { return perturb_params(spec, t).a * m; }
    VectorXd mean_z() const { return A * m + b; }
};

// Exact Gaussian parameters of p(z | x_t): mean = offset + M x, covariance S.
struct EncoderParams {
    MatrixXd M;
    VectorXd offset;
    MatrixXd S;
};

inline EncoderParams optimal_encoder(const GaussianWorld& w, double t) {
    MatrixXd sx = w.sigma_x(t);
    MatrixXd K = w.cross_cov(t);
    Eigen::LLT<MatrixXd> llt(sx);
    if (llt.info() != Eigen::Success) throw NumericError("optimal_encoder: singular diffused covariance");
    MatrixXd M = llt.solve(K.transpose()).transpose(); // K Sigma_x^{-1}
    EncoderParams ep;
    ep.M = M;
    ep.offset = w.mean_z() - M * w.mean_x(t);
    ep.S = w.sigma_z() - M * K.transpose();
    return ep;
}

// Marginal data score at time t: -(a^2 C + sigma^2 I)^{-1} (x - a m).
inline VectorXd marginal_score(const GaussianWorld& w, const VectorXd& x, double t) {
    Eigen::LLT<MatrixXd> llt(w.sigma_x(t));
    if (llt.info() != Eigen::Success) throw NumericError("marginal_score: singular covariance");
    return -llt.solve(x - w.mean_x(t));
}

inline double marginal_logdensity(const GaussianWorld& w, const VectorXd& x, double t) {
    MatrixXd sx = w.sigma_x(t);
    Eigen::LLT<MatrixXd> llt(sx);
    if (llt.info() != Eigen::Success) throw NumericError("marginal_logdensity: singular covariance");
    VectorXd d = x - w.mean_x(t);
    double quad = d.dot(llt.solve(d));
    double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    return -0.5 * (quad + logdet + w.data_dim() * std::log(2.0 * 3.14159265358979323846));
}

// ln p(x0) of the data distribution itself.
inline double data_logdensity(const GaussianWorld& w, const VectorXd& x0) {
    Eigen::LLT<MatrixXd> llt(w.C);
    VectorXd d = x0 - w.m;
    double quad = d.dot(llt.solve(d));
    double logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    return -0.5 * (quad + logdet + w.data_dim() * std::log(2.0 * 3.14159265358979323846));
}

// Latent posterior score: grad_x ln p(z | x_t) = M^T S^{-1} (z - offset - M x).
inline VectorXd posterior_score(const GaussianWorld& w, const VectorXd& z, const VectorXd& x, double t) {
    EncoderParams ep = optimal_encoder(w, t);
    Eigen::LLT<MatrixXd> llt(ep.S);
    if (llt.info() != Eigen::Success) throw NumericError("posterior_score: singular conditional covariance");
    return ep.M.transpose() * llt.solve(z - ep.offset - ep.M * x);
}

// Moments of p(x_t | z), computed directly from the joint Gaussian of
// (x_t, z) rather than through the Bayes sum.
inline void conditional_moments(const GaussianWorld& w, const VectorXd& z, double t, VectorXd& mean,
                                MatrixXd& cov) {
    MatrixXd cxz = w.cross_cov(t).transpose(); // Cov(x_t, z), (d x L)
    Eigen::LLT<MatrixXd> llt(w.sigma_z());
    if (llt.info() != Eigen::Success) throw NumericError("conditional_moments: singular latent covariance");
    MatrixXd gain = llt.solve(cxz.transpose()).transpose(); // cxz Sigma_z^{-1}
    mean = w.mean_x(t) + gain * (z - w.mean_z());
    cov = w.sigma_x(t) - gain * cxz.transpose();
}

// Conditional data score grad_x ln p(x_t | z), independent of the Bayes route.
inline VectorXd conditional_score(const GaussianWorld& w, const VectorXd& z, const VectorXd& x, double t) {
    VectorXd mean;
    MatrixXd cov;
    conditional_moments(w, z, t, mean, cov);
    Eigen::LLT<MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) throw NumericError("conditional_score: singular conditional covariance");
    return -llt.solve(x - mean);
}

/*------------------------------- sampling --------------------------------*/

inline MatrixXd cov_sqrt(const MatrixXd& c) {
    Eigen::LLT<MatrixXd> llt(c);
    if (llt.info() != Eigen::Success) throw NumericError("cov_sqrt: matrix not positive definite");
    return llt.matrixL();
}

inline VectorXd sample_gaussian(const VectorXd& mean, const MatrixXd& cov_chol, RandomStream& rng) {
    VectorXd eps(mean.size());
    for (Eigen::Index i = 0; i < eps.size(); ++i) eps[i] = rng.normal();
    return mean + cov_chol * eps;
}

inline VectorXd sample_data(const GaussianWorld& w, RandomStream& rng) {
    return sample_gaussian(w.m, cov_sqrt(w.C), rng);
}

inline VectorXd sample_latent_given_data(const GaussianWorld& w, const VectorXd& x0, RandomStream& rng) {
    VectorXd z = w.A * x0 + w.b;
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] += w.s * rng.normal();
    return z;
}

/*--------------------------- analytic stand-ins --------------------------*/

// Score-field stand-ins with the same call surface as the learned models, so
// the composition and bound code can run against exact closed forms.
struct MarginalScoreField {
    const GaussianWorld* world;

    Tensor score_value(const Tensor& x, double t) const {
        Tensor out(x.rows, x.cols);
        for (int r = 0; r < x.rows; ++r) {
            VectorXd xr(x.cols);
            for (int c = 0; c < x.cols; ++c) xr[c] = x.at(r, c);
            VectorXd s = marginal_score(*world, xr, t);
            for (int c = 0; c < x.cols; ++c) out.at(r, c) = s[c];
        }
        return out;
    }
};

// Exact time-dependent encoder q_t(z|x_t) = p(z|x_t); score via closed form.
struct OptimalEncoderField {
    const GaussianWorld* world;

    std::pair<Tensor, Tensor> encode_value(const Tensor& x, double t) const {
        EncoderParams ep = optimal_encoder(*world, t);
        int latent = world->latent_dim();
        Tensor mu(x.rows, latent), sigma(x.rows, latent);
        for (int r = 0; r < x.rows; ++r) {
            VectorXd xr(x.cols);
            for (int c = 0; c < x.cols; ++c) xr[c] = x.at(r, c);
            VectorXd mean = ep.offset + ep.M * xr;
            for (int c = 0; c < latent; ++c) {
                mu.at(r, c) = mean[c];
                sigma.at(r, c) = std::sqrt(ep.S(c, c));
            }
        }
        return {mu, sigma};
    }

    Tensor score_value(const Tensor& z, const Tensor& x, double t) const {
        Tensor out(x.rows, x.cols);
        for (int r = 0; r < x.rows; ++r) {
            VectorXd xr(x.cols), zr(z.cols);
            for (int c = 0; c < x.cols; ++c) xr[c] = x.at(r, c);
            for (int c = 0; c < z.cols; ++c) zr[c] = z.at(r, c);
            VectorXd s = posterior_score(*world, zr, xr, t);
            for (int c = 0; c < x.cols; ++c) out.at(r, c) = s[c];
        }
        return out;
    }
};

} // namespace scorevae::oracle
