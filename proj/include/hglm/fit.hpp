#pragma once

#include <Eigen/Core>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "hglm/aphl.hpp"
#include "hglm/model.hpp"
#include "hglm/state.hpp"

namespace hglm {

struct FitOptions {
    int max_outer = 100;
    double param_tol = 1e-8;       // relative parameter change across one cycle
    double criterion_tol = 1e-10;  // criterion change across one cycle
    double fd_step = 1e-5;         // finite-difference step for the beta refinement
    double reml_fd_step = 1e-4;    // step for the restricted-likelihood derivatives
    double se_fd_step = 1e-3;      // step for the marginal curvature behind se_beta
    double boundary_value = 1e-8;  // dispersion components are pinned here
    // Pin margin at the open upper edge of unit-interval components (the
    // restricted likelihood is flat beyond measurement precision there).
    double unit_upper_margin = 1e-6;
    int max_beta_steps = 25;       // marginal-likelihood Newton steps per cycle
    NewtonOptions newton;          // inner (v and joint) Newton settings
    std::optional<BetaConstraint> fix_beta;
    std::map<std::string, double> fix_dispersion;
    std::optional<ParamState> init;
    bool compute_se = true;
};

struct FitTraceEntry {
    int cycle = 0;
    double h = 0.0;
    double marginal = 0.0;
    double restricted = 0.0;
    double param_delta = 0.0;
};

struct FitResult {
    ParamState state;
    double h_value = 0.0;
    double marginal_aphl = 0.0;
    double restricted_aphl = 0.0;
    Eigen::VectorXd se_beta;
    int iterations = 0;
    bool converged = false;
    std::string stall_reason;  // set when a sub-problem stopped the outer loop
    std::vector<std::string> boundary_components;
    std::vector<FitTraceEntry> trace;
};

// Outer estimation loop: per cycle, (1) joint (beta, v) h-mode at the current
// dispersion, (2) one safeguarded Newton step on the restricted likelihood
// over the transformed dispersion, (3) Newton refinement of beta on the
// Laplace marginal likelihood until its own gradient tolerance, with v
// re-synced to the h-mode. At the returned state beta is stationary for the
// marginal likelihood, the dispersion for the restricted likelihood, and v
// maximizes h given them.
FitResult fit(const ModelSpec& model, const FitOptions& options = {});

}  // namespace hglm
