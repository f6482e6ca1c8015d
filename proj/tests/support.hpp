#pragma once

// Shared fixtures and independent closed-form oracles for the test suites.
// Oracle code here deliberately avoids the library's likelihood pathways: the
// Gaussian formulas are spelled out directly and the GLM oracle is a separate
// IRLS implementation.

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>

#include "hglm/model.hpp"
#include "hglm/rng.hpp"

namespace testsupport {

using Eigen::MatrixXd;
using Eigen::VectorXd;

constexpr double kLog2Pi = 1.8378770664093454836;

struct Fixture {
    hglm::ModelSpec model;
    VectorXd v_true;
};

// Balanced one-way normal layout: g groups of m, intercept-only X.
inline Fixture oneway_normal(int g, int m, double beta, double phi, double lambda,
                             std::uint64_t seed) {
    int n = g * m;
    hglm::PhiloxStream rng(seed, 0);
    VectorXd v(g);
    for (int i = 0; i < g; ++i) v[i] = std::sqrt(lambda) * rng.normal();
    VectorXd y(n);
    MatrixXd x = MatrixXd::Ones(n, 1);
    MatrixXd z = MatrixXd::Zero(n, g);
    for (int i = 0; i < g; ++i)
        for (int j = 0; j < m; ++j) {
            int row = i * m + j;
            z(row, i) = 1.0;
            y[row] = beta + v[i] + std::sqrt(phi) * rng.normal();
        }
    hglm::Family fam;
    fam.kind = hglm::FamilyKind::normal;
    hglm::Link link;
    link.kind = hglm::LinkKind::identity;
    hglm::DesignSet designs;
    designs.X = x;
    designs.Z = z;
    hglm::RandomSpec random;
    random.structure = hglm::RandomStructure::iid;
    random.dim = g;
    Fixture f{hglm::ModelSpec::assemble(fam, link, std::move(designs), std::move(random), y), v};
    return f;
}

// Poisson-normal clusters: g clusters of m, intercept-only X, log link.
inline Fixture poisson_normal(int g, int m, double beta, double lambda, std::uint64_t seed,
                              const VectorXd* covariate = nullptr, double beta1 = 0.0) {
    int n = g * m;
    hglm::PhiloxStream rng(seed, 0);
    VectorXd v(g);
    for (int i = 0; i < g; ++i) v[i] = std::sqrt(lambda) * rng.normal();
    VectorXd y(n);
    int p = covariate ? 2 : 1;
    MatrixXd x = MatrixXd::Ones(n, p);
    if (covariate) x.col(1) = *covariate;
    MatrixXd z = MatrixXd::Zero(n, g);
    for (int i = 0; i < g; ++i)
        for (int j = 0; j < m; ++j) {
            int row = i * m + j;
            z(row, i) = 1.0;
            double eta = beta + v[i] + (covariate ? beta1 * (*covariate)[row] : 0.0);
            y[row] = static_cast<double>(rng.poisson(std::exp(eta)));
        }
    hglm::Family fam;
    fam.kind = hglm::FamilyKind::poisson;
    hglm::Link link;
    link.kind = hglm::LinkKind::log_link;
    hglm::DesignSet designs;
    designs.X = x;
    designs.Z = z;
    hglm::RandomSpec random;
    random.structure = hglm::RandomStructure::iid;
    random.dim = g;
    Fixture f{hglm::ModelSpec::assemble(fam, link, std::move(designs), std::move(random), y), v};
    return f;
}

// Bernoulli fixture for derivative checks.
inline Fixture bernoulli_groups(int g, int m, double beta, double lambda, std::uint64_t seed) {
    int n = g * m;
    hglm::PhiloxStream rng(seed, 0);
    VectorXd v(g);
    for (int i = 0; i < g; ++i) v[i] = std::sqrt(lambda) * rng.normal();
    VectorXd y(n);
    MatrixXd z = MatrixXd::Zero(n, g);
    for (int i = 0; i < g; ++i)
        for (int j = 0; j < m; ++j) {
            int row = i * m + j;
            z(row, i) = 1.0;
            double pr = 1.0 / (1.0 + std::exp(-(beta + v[i])));
            y[row] = rng.uniform() < pr ? 1.0 : 0.0;
        }
    hglm::Family fam;
    fam.kind = hglm::FamilyKind::bernoulli;
    hglm::Link link;
    link.kind = hglm::LinkKind::logit;
    hglm::DesignSet designs;
    designs.X = MatrixXd::Ones(n, 1);
    designs.Z = z;
    hglm::RandomSpec random;
    random.structure = hglm::RandomStructure::iid;
    random.dim = g;
    Fixture f{hglm::ModelSpec::assemble(fam, link, std::move(designs), std::move(random), y), v};
    return f;
}

inline Fixture binomial_groups(int g, int m, double beta, double lambda, int trials,
                               std::uint64_t seed) {
    int n = g * m;
    hglm::PhiloxStream rng(seed, 0);
    VectorXd v(g);
    for (int i = 0; i < g; ++i) v[i] = std::sqrt(lambda) * rng.normal();
    VectorXd y(n), tr(n);
    MatrixXd z = MatrixXd::Zero(n, g);
    for (int i = 0; i < g; ++i)
        for (int j = 0; j < m; ++j) {
            int row = i * m + j;
            z(row, i) = 1.0;
            double pr = 1.0 / (1.0 + std::exp(-(beta + v[i])));
            int s = 0;
            for (int t = 0; t < trials; ++t)
                if (rng.uniform() < pr) ++s;
            y[row] = s;
            tr[row] = trials;
        }
    hglm::Family fam;
    fam.kind = hglm::FamilyKind::binomial;
    fam.trials = tr;
    hglm::Link link;
    link.kind = hglm::LinkKind::logit;
    hglm::DesignSet designs;
    designs.X = MatrixXd::Ones(n, 1);
    designs.Z = z;
    hglm::RandomSpec random;
    random.structure = hglm::RandomStructure::iid;
    random.dim = g;
    Fixture f{hglm::ModelSpec::assemble(fam, link, std::move(designs), std::move(random), y), v};
    return f;
}

// log N(y; mean, cov) spelled out.
inline double mvn_logpdf(const VectorXd& y, const VectorXd& mean, const MatrixXd& cov) {
    Eigen::LLT<MatrixXd> llt(cov);
    VectorXd r = y - mean;
    VectorXd w = llt.matrixL().solve(r);
    double logdet = 0.0;
    for (Eigen::Index i = 0; i < cov.rows(); ++i) logdet += 2.0 * std::log(llt.matrixL()(i, i));
    return -0.5 * (y.size() * kLog2Pi + logdet + w.squaredNorm());
}

// Exact marginal log-likelihood of the normal-normal model
// y ~ N(X beta, phi I + Z diag(lambda) Z').
inline double normal_marginal(const hglm::ModelSpec& model, const VectorXd& beta, double phi,
                              double lambda) {
    const MatrixXd& z = model.z_eff();
    MatrixXd cov = lambda * z * z.transpose();
    cov.diagonal().array() += phi;
    VectorXd mean = model.designs.X * beta;
    if (model.offset) mean += *model.offset;
    return mvn_logpdf(model.y, mean, cov);
}

// Conditional posterior v | y for the normal-normal model.
struct NormalPosterior {
    VectorXd mean;
    MatrixXd cov;
};
inline NormalPosterior normal_conditional(const hglm::ModelSpec& model, const VectorXd& beta,
                                          double phi, double lambda) {
    const MatrixXd& z = model.z_eff();
    MatrixXd prec = z.transpose() * z / phi;
    prec.diagonal().array() += 1.0 / lambda;
    MatrixXd cov = prec.llt().solve(MatrixXd::Identity(prec.rows(), prec.cols()));
    VectorXd resid = model.y - model.designs.X * beta;
    if (model.offset) resid -= *model.offset;
    NormalPosterior post;
    post.cov = cov;
    post.mean = cov * (z.transpose() * resid) / phi;
    return post;
}

// Textbook REML log-likelihood of the normal-normal model, constants
// included: -1/2 [(n-p) log 2pi + log|V| + log|X'V^{-1}X| + r'V^{-1}r].
inline double normal_reml(const hglm::ModelSpec& model, double phi, double lambda) {
    const MatrixXd& z = model.z_eff();
    const MatrixXd& x = model.designs.X;
    Eigen::Index n = model.n(), p = model.p();
    MatrixXd vcov = lambda * z * z.transpose();
    vcov.diagonal().array() += phi;
    Eigen::LLT<MatrixXd> llt(vcov);
    MatrixXd vinv = llt.solve(MatrixXd::Identity(n, n));
    MatrixXd xtvx = x.transpose() * vinv * x;
    VectorXd beta_gls = xtvx.ldlt().solve(x.transpose() * vinv * model.y);
    VectorXd r = model.y - x * beta_gls;
    double logdet_v = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) logdet_v += 2.0 * std::log(llt.matrixL()(i, i));
    double logdet_x = std::log(xtvx.determinant());
    return -0.5 * ((n - p) * kLog2Pi + logdet_v + logdet_x + r.dot(vinv * r));
}

// Independent fixed-effect GLM oracle (IRLS written from the textbook
// update, separate from the library's initializer).
inline VectorXd irls_glm(const hglm::ModelSpec& model, int iters = 60) {
    Eigen::Index n = model.n(), p = model.p();
    const MatrixXd& x = model.designs.X;
    VectorXd eta(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double y = model.y[i];
        switch (model.family.kind) {
            case hglm::FamilyKind::normal: eta[i] = y; break;
            case hglm::FamilyKind::poisson: eta[i] = std::log(y + 0.5); break;
            default: {
                double m = model.family.trials_at(i);
                eta[i] = std::log((y + 0.5) / (m - y + 0.5));
            }
        }
    }
    VectorXd beta = VectorXd::Zero(p);
    for (int it = 0; it < iters; ++it) {
        VectorXd w(n), zresp(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            double e = eta[i];
            double mu, dmu, var;
            double m = model.family.trials_at(i);
            switch (model.family.kind) {
                case hglm::FamilyKind::normal:
                    mu = e;
                    dmu = 1.0;
                    var = 1.0;
                    break;
                case hglm::FamilyKind::poisson:
                    mu = std::exp(e);
                    dmu = mu;
                    var = mu;
                    break;
                default:
                    mu = 1.0 / (1.0 + std::exp(-e));
                    dmu = mu * (1.0 - mu);
                    var = mu * (1.0 - mu);
            }
            w[i] = m * dmu * dmu / var;
            double off = model.offset ? (*model.offset)[i] : 0.0;
            zresp[i] = (e - off) + (model.y[i] - m * mu) / (m * dmu);
        }
        beta = (x.transpose() * w.asDiagonal() * x)
                   .ldlt()
                   .solve(x.transpose() * w.asDiagonal() * zresp);
        eta = x * beta;
        if (model.offset) eta += *model.offset;
    }
    return beta;
}

}  // namespace testsupport
