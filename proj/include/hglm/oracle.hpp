#pragma once

#include <Eigen/Core>

#include "hglm/hlik.hpp"
#include "hglm/model.hpp"
#include "hglm/optim.hpp"
#include "hglm/predict.hpp"

namespace hglm {
namespace oracle {

// Gauss-Hermite rule for weight exp(-x^2): integrates polynomials of degree
// < 2 * order exactly. Nodes from Golub-Welsch on the Hermite Jacobi matrix;
// weights from the Christoffel-function identity, which keeps the extreme
// weights relatively accurate (the eigenvector route only gives them to
// absolute precision, and the adaptive sum multiplies them by exp(x^2)).
struct QuadratureRule {
    Eigen::VectorXd nodes;
    Eigen::VectorXd weights;
    Eigen::VectorXd log_weights;
    int order = 0;

    static QuadratureRule gauss_hermite(int order);
};

// Adaptive Gauss-Hermite marginal log-likelihood for cluster-separable
// models: diagonal random-effect precision and at most one random column per
// row. Each cluster's rule is centered at the conditional mode with scale
// from the conditional curvature. Throws unsupported_structure otherwise.
double quad_marginal(const ModelSpec& model, const Eigen::VectorXd& beta,
                     const Dispersion& dispersion, int order);

// Posterior mean and variance of one cluster's random effect by ratios of
// quadrature integrals.
struct PosteriorMoments {
    double mean = 0.0;
    double variance = 0.0;
};
PosteriorMoments quad_posterior_moments(const ModelSpec& model, const Eigen::VectorXd& beta,
                                        const Dispersion& dispersion, Eigen::Index cluster,
                                        int order);

// The exponential-exponential single-observation model: f(u) = theta
// exp(-theta u), f(y|u) = u exp(-u y), with h defined on v = log u. All of
// its closed forms, evaluated from the printed formulas.
struct BayarriRecord {
    double m;            // log theta - 2 log(theta + y)
    double theta_hat;    // y
    double var_theta;    // 2 y^2
    double u_hat;        // 2 / (theta + y)
    double cond_var_u;   // var(u|y) = 2 / (theta + y)^2
    double u_hat_at_ml;  // 1 / y
    double eb_var;       // 1 / (2 y^2)
    double cmse;         // 1 / y^2
    Eigen::Matrix2d hessian_theta_u;  // [[1/theta^2, 1], [1, (y+theta)^2/2]]
};
BayarriRecord bayarri_closed_forms(double y, double theta);

// The model itself as differentiable objectives, for driving the general
// machinery (mode finding, adjusted profiles, variance decomposition).
struct BayarriModel {
    double y = 1.0;

    double h(double theta, double v) const;  // 2v + log theta - e^v (theta + y)
    // Objective in v at fixed theta (for adjust_profile / mode finding).
    Objective v_objective(double theta) const;
    // Negated second derivatives of h in (theta, u) at a point, as Hessian
    // blocks with theta playing the fixed-effect role.
    HessianBlocks hessian_theta_u(double theta, double u) const;
};

// Predictive induced by Jeffreys' prior theta^{-1/2}: negative binomial with
// shape sum(y) + 1/2 and rate n on the gamma posterior.
PredictiveDist jeffreys_predictive(const Eigen::VectorXd& y, int v_max = -1);

}  // namespace oracle
}  // namespace hglm
