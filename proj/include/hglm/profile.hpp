#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "hglm/aphl.hpp"
#include "hglm/fit.hpp"
#include "hglm/model.hpp"

namespace hglm {

// APHL values over a strictly increasing parameter grid. Values are raw (log
// scale); non-converged points are flagged and left NaN, never interpolated.
struct ProfileCurve {
    std::string param_name;
    Eigen::VectorXd grid;
    Eigen::VectorXd values;
    std::vector<bool> point_converged;
    std::vector<std::string> nuisance_names;
    Eigen::MatrixXd nuisance_trace;  // one row per grid point

    // Set by re_profile: log normalizer (the fit's Laplace marginal) and the
    // trapezoid mass of exp(values - log_norm) over the grid.
    double log_norm = std::numeric_limits<double>::quiet_NaN();
    double mass = std::numeric_limits<double>::quiet_NaN();
    bool grid_warning = false;

    bool all_converged() const;
};

// Marginal-posterior profile for random effect i: v_{-i} eliminated by the
// Laplace adjustment, all fixed parameters conditioned at the fitted state.
// exp(value - log_norm) approximates the posterior density of v_i.
ProfileCurve re_profile(const ModelSpec& model, const ParamState& fitted, Eigen::Index index,
                        const Eigen::VectorXd& grid, const NewtonOptions& options = {});

// Profile for one fixed-effect coefficient or one dispersion component: at
// each grid point every remaining parameter is re-estimated (remaining beta
// by the Laplace marginal, dispersion by the restricted likelihood) and the
// matching APHL is recorded. Refit failures flag the point; the curve
// continues.
ProfileCurve param_profile(const ModelSpec& model, const FitResult& full_fit,
                           const std::string& param_name, const Eigen::VectorXd& grid,
                           const FitOptions& base_options = {});

// 41 points spanning +/- 4 Wald SEs of the named parameter (transformed scale
// for dispersion components).
Eigen::VectorXd default_profile_grid(const ModelSpec& model, const FitResult& fit,
                                     const std::string& param_name, int n_points = 41,
                                     double width = 4.0);

// Trapezoid moments of exp(values - log_norm) over the grid (converged,
// finite points only).
double curve_mass(const ProfileCurve& curve);
double curve_mean(const ProfileCurve& curve);
double curve_variance(const ProfileCurve& curve);

}  // namespace hglm
