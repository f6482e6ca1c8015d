#pragma once

#include <Eigen/Core>
#include <optional>

#include "hglm/model.hpp"
#include "hglm/optim.hpp"
#include "hglm/state.hpp"

namespace hglm {

// Negated second-derivative blocks of h in (beta, v). For the canonical
// family/link pairs these are exact: h_bb = X'WX, h_bv = X'WZ, and
// h_vv = Z'WZ + P with P the random-effect precision.
struct HessianBlocks {
    Eigen::MatrixXd h_bb;  // p x p
    Eigen::MatrixXd h_bv;  // p x q
    Eigen::MatrixXd h_vv;  // q x q

    Eigen::MatrixXd assembled() const;
};

// Optional constraint pinning one beta coordinate (used by profile refits).
struct BetaConstraint {
    Eigen::Index index;
    double value;
};

// h(theta, v) = log f(y|v) + log f(v) with all normalizing constants, so that
// exp(h) is the joint density of (y, v). Under a rank-deficient precision the
// prior term uses the generalized log-determinant and v must lie in the row
// space.
double eval_h(const ModelSpec& model, const ParamState& state);

struct HGradient {
    Eigen::VectorXd g_beta;
    Eigen::VectorXd g_v;
};
HGradient grad_h(const ModelSpec& model, const ParamState& state);

HessianBlocks hess_h(const ModelSpec& model, const ParamState& state);

// Maximizes h over v at fixed (beta, dispersion). Under a singular precision
// the Newton runs in row-space coordinates, so every iterate satisfies the
// null-space constraint.
Eigen::VectorXd v_mode(const ModelSpec& model, const Eigen::VectorXd& beta,
                       const Dispersion& dispersion,
                       std::optional<Eigen::VectorXd> v_init = {},
                       const NewtonOptions& options = {}, NewtonResult* info = nullptr);

// Joint Newton in (beta, v) at fixed dispersion; h never decreases across
// accepted steps. Throws convergence_error / numerical_error naming the
// offending block.
ParamState joint_mode(const ModelSpec& model, const Dispersion& dispersion,
                      std::optional<ParamState> init = {}, const NewtonOptions& options = {},
                      NewtonResult* info = nullptr, const BetaConstraint* fix_beta = nullptr);

// Exact gradient of the Laplace marginal p_v(h) in beta at the profiled mode
// vhat: the envelope term X's plus the derivative of the log-determinant
// adjustment through both the direct and the induced-mode dependence of the
// working weights. For the normal family the adjustment term vanishes.
Eigen::VectorXd laplace_marginal_beta_gradient(const ModelSpec& model, const Eigen::VectorXd& beta,
                                               const Dispersion& dispersion,
                                               const Eigen::VectorXd& vhat);

// Plain fixed-effect GLM fit (IRLS) ignoring the random effects; used to
// initialize beta.
Eigen::VectorXd glm_initial_beta(const ModelSpec& model, const BetaConstraint* fix_beta = nullptr);

// Fixed-effect GLM log-likelihood at beta with v = 0 contributions only
// (conditional part of h); used by vanishing-random-effect checks.
double glm_loglik(const ModelSpec& model, const Eigen::VectorXd& beta, double phi = 1.0);

}  // namespace hglm
