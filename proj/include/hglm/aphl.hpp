#pragma once

#include <Eigen/Core>
#include <optional>

#include "hglm/hlik.hpp"
#include "hglm/model.hpp"
#include "hglm/optim.hpp"

namespace hglm {

// One adjusted-profile value: p_a(l; psi) = [l - 1/2 log det{D(l,a)/(2pi)}]
// at a = a~, where D = -d2l/da2 and a~ solves dl/da = 0. The parts satisfy
// value + logdet_adjust = l(a~) exactly.
struct AphlValue {
    double value = 0.0;
    double logdet_adjust = 0.0;          // 1/2 log det{D/(2pi)} at the maximizer
    Eigen::VectorXd nuisance_at_max;
    bool converged = false;
};

// Generic adjusted profile of a twice-differentiable objective over its
// nuisance argument (any fixed psi is bound inside the objective closures).
// Throws convergence_error from the inner Newton and numerical_error when the
// curvature at the maximizer is not positive definite.
AphlValue adjust_profile(const Objective& objective, const Eigen::VectorXd& alpha_init,
                         const NewtonOptions& options = {});

// p_v(h): Laplace approximation to the marginal log-likelihood, eliminating v
// at fixed (beta, dispersion). Exact for normal-normal models. Under a
// singular precision the adjustment runs over the row space.
AphlValue laplace_marginal(const ModelSpec& model, const Eigen::VectorXd& beta,
                           const Dispersion& dispersion,
                           std::optional<Eigen::VectorXd> v_init = {},
                           const NewtonOptions& options = {});

// p_{beta,v}(h): the restricted likelihood, eliminating beta and v jointly at
// fixed dispersion. fix_beta pins one coefficient (profile refits); that
// coordinate is then excluded from the adjustment.
AphlValue restricted_lik(const ModelSpec& model, const Dispersion& dispersion,
                         std::optional<ParamState> init = {}, const NewtonOptions& options = {},
                         const BetaConstraint* fix_beta = nullptr);

// 1/2 log det(A / (2pi)) via Cholesky; throws numerical_error when A is not
// positive definite (the Laplace adjustment is undefined).
double half_logdet_over_2pi(const Eigen::MatrixXd& a, const char* context);

}  // namespace hglm
