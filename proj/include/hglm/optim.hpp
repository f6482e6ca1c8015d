#pragma once

#include <Eigen/Core>
#include <functional>
#include <string>
#include <vector>

namespace hglm {

// Twice-differentiable objective to maximize. neg_hessian returns
// D = -d2f/dx2, positive definite near an interior maximum.
struct Objective {
    std::function<double(const Eigen::VectorXd&)> value;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> gradient;
    std::function<Eigen::MatrixXd(const Eigen::VectorXd&)> neg_hessian;
};

// Damped Newton: Armijo backtracking (shrink 0.5, max 30 halvings), max 200
// iterations, convergence on gradient inf-norm < 1e-8 with the objective
// stable to relative 1e-12 over the last accepted step. After meeting the
// tolerance the iteration polishes toward polish_gtol so downstream
// finite differences see noise near machine precision.
struct NewtonOptions {
    int max_iterations = 200;
    double grad_tol = 1e-8;
    double value_tol_rel = 1e-12;
    double armijo_c = 1e-4;
    double shrink = 0.5;
    int max_halvings = 30;
    double polish_gtol = 1e-13;
    int polish_iterations = 3;
    // Relative slope below which a failed line search is treated as
    // float-level flatness rather than a genuine ascent failure.
    double flat_slope_tol = 1e-9;
};

struct NewtonResult {
    Eigen::VectorXd x;
    double value = 0.0;
    double grad_norm = 0.0;
    int iterations = 0;  // accepted Newton steps
    bool converged = false;
    std::vector<double> value_trace;  // objective at each accepted iterate
};

// Maximizes obj from x0. Throws numerical_error{context} when the Newton
// system cannot be solved and convergence_error when the iteration stalls.
NewtonResult newton_maximize(const Objective& obj, const Eigen::VectorXd& x0,
                             const NewtonOptions& options = {},
                             const std::string& context = "newton");

// Newton step on a possibly indefinite curvature matrix: eigenvalues of the
// negated Hessian are floored at a small positive multiple of the largest, so
// the step is always an ascent direction. For finite-difference outer loops.
Eigen::VectorXd modified_ascent_step(const Eigen::MatrixXd& neg_hessian,
                                     const Eigen::VectorXd& gradient);

// Central finite differences of a scalar function, step h_j scaled by
// max(1, |x_j|).
Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                            const Eigen::VectorXd& x, double step);
Eigen::MatrixXd fd_hessian(const std::function<double(const Eigen::VectorXd&)>& f,
                           const Eigen::VectorXd& x, double step);

}  // namespace hglm
