#include "hglm/optim.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>

#include "hglm/errors.hpp"

namespace hglm {

NewtonResult newton_maximize(const Objective& obj, const Eigen::VectorXd& x0,
                             const NewtonOptions& options, const std::string& context) {
    NewtonResult res;
    res.x = x0;
    if (x0.size() == 0) {  // empty nuisance: the profile is the objective itself
        res.value = obj.value(res.x);
        res.converged = true;
        res.value_trace.push_back(res.value);
        return res;
    }
    res.value = obj.value(res.x);
    if (!std::isfinite(res.value)) throw domain_error(context + ": objective not finite at start");
    res.value_trace.push_back(res.value);
    int polish_left = options.polish_iterations;
    bool converged = false;

    for (int iter = 0; iter < options.max_iterations; ++iter) {
        Eigen::VectorXd g = obj.gradient(res.x);
        res.grad_norm = g.cwiseAbs().maxCoeff();

        Eigen::MatrixXd d = obj.neg_hessian(res.x);
        Eigen::LDLT<Eigen::MatrixXd> ldlt(d);
        bool solvable = ldlt.info() == Eigen::Success && ldlt.isPositive();
        Eigen::VectorXd step = solvable ? ldlt.solve(g).eval() : modified_ascent_step(d, g);
        if (!step.allFinite()) {
            if (converged) return res;
            throw numerical_error(context + ": singular Newton system");
        }

        if (!converged && res.grad_norm < options.grad_tol) {
            // Gradient small and the predicted remaining gain (Newton
            // decrement) negligible relative to the objective.
            double decrement = 0.5 * g.dot(step);
            if (decrement < options.value_tol_rel * (1.0 + std::abs(res.value))) converged = true;
        }
        double noise = 64.0 * std::numeric_limits<double>::epsilon() * (1.0 + std::abs(res.value));
        if (converged) {
            res.converged = true;
            if (res.grad_norm < options.polish_gtol || polish_left == 0 || !solvable) return res;
            --polish_left;
            double nv = obj.value(res.x + step);
            if (!std::isfinite(nv) || nv < res.value - noise) return res;
            res.x += step;
            res.value = std::max(nv, res.value);
            continue;
        }

        double slope = g.dot(step);
        double t = 1.0;
        double new_value = res.value;
        bool accepted = false;
        bool quiet = false;
        if (slope <= noise) {
            // Predicted gain below rounding: the objective cannot measure the
            // step, and with positive-definite curvature a step this small in
            // the Newton metric cannot diverge. Take it in full; it still
            // contracts the gradient.
            new_value = obj.value(res.x + step);
            if (std::isfinite(new_value)) {
                accepted = true;
                quiet = true;
                new_value = std::max(new_value, res.value);
            }
        }
        if (!accepted) {
            // Armijo backtracking on the ascent condition.
            for (int h = 0; h <= options.max_halvings; ++h) {
                new_value = obj.value(res.x + t * step);
                if (std::isfinite(new_value) &&
                    new_value >= res.value + options.armijo_c * t * slope) {
                    accepted = true;
                    break;
                }
                t *= options.shrink;
            }
            if (!accepted && slope <= options.flat_slope_tol * (1.0 + std::abs(res.value))) {
                // Line search starved by evaluation noise: the predicted gain
                // is immeasurably small, so the full step is safe.
                t = 1.0;
                new_value = obj.value(res.x + step);
                if (std::isfinite(new_value)) {
                    accepted = true;
                    quiet = true;
                    new_value = std::max(new_value, res.value);
                }
            }
        }
        if (!accepted)
            throw convergence_error(context + ": line search failed (gradient inf-norm " +
                                        std::to_string(res.grad_norm) + ")",
                                    res.grad_norm, iter);
        res.x += t * step;
        res.value = new_value;
        if (!quiet) res.value_trace.push_back(res.value);
        ++res.iterations;
    }
    if (converged) {
        res.converged = true;
        return res;
    }
    Eigen::VectorXd g = obj.gradient(res.x);
    res.grad_norm = g.cwiseAbs().maxCoeff();
    if (res.grad_norm < options.grad_tol) {
        res.converged = true;
        return res;
    }
    throw convergence_error(context + ": no convergence in " +
                                std::to_string(options.max_iterations) +
                                " iterations (gradient inf-norm " + std::to_string(res.grad_norm) + ")",
                            res.grad_norm, options.max_iterations);
}

Eigen::VectorXd modified_ascent_step(const Eigen::MatrixXd& neg_hessian,
                                     const Eigen::VectorXd& gradient) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(neg_hessian);
    Eigen::VectorXd ev = es.eigenvalues();
    double floor = std::max(ev.cwiseAbs().maxCoeff(), 1e-8) * 1e-8;
    for (Eigen::Index i = 0; i < ev.size(); ++i) ev[i] = std::max(std::abs(ev[i]), floor);
    return es.eigenvectors() * ev.cwiseInverse().asDiagonal() *
           (es.eigenvectors().transpose() * gradient);
}

Eigen::VectorXd fd_gradient(const std::function<double(const Eigen::VectorXd&)>& f,
                            const Eigen::VectorXd& x, double step) {
    Eigen::VectorXd g(x.size());
    Eigen::VectorXd xp = x;
    for (Eigen::Index j = 0; j < x.size(); ++j) {
        double h = step * std::max(1.0, std::abs(x[j]));
        xp[j] = x[j] + h;
        double fp = f(xp);
        xp[j] = x[j] - h;
        double fm = f(xp);
        xp[j] = x[j];
        g[j] = (fp - fm) / (2.0 * h);
    }
    return g;
}

Eigen::MatrixXd fd_hessian(const std::function<double(const Eigen::VectorXd&)>& f,
                           const Eigen::VectorXd& x, double step) {
    Eigen::Index d = x.size();
    Eigen::MatrixXd hess(d, d);
    double f0 = f(x);
    Eigen::VectorXd xp = x;
    Eigen::VectorXd hs(d);
    for (Eigen::Index j = 0; j < d; ++j) hs[j] = step * std::max(1.0, std::abs(x[j]));
    for (Eigen::Index j = 0; j < d; ++j) {
        xp[j] = x[j] + hs[j];
        double fp = f(xp);
        xp[j] = x[j] - hs[j];
        double fm = f(xp);
        xp[j] = x[j];
        hess(j, j) = (fp - 2.0 * f0 + fm) / (hs[j] * hs[j]);
        for (Eigen::Index k = j + 1; k < d; ++k) {
            xp[j] = x[j] + hs[j];
            xp[k] = x[k] + hs[k];
            double fpp = f(xp);
            xp[k] = x[k] - hs[k];
            double fpm = f(xp);
            xp[j] = x[j] - hs[j];
            double fmm = f(xp);
            xp[k] = x[k] + hs[k];
            double fmp = f(xp);
            xp[j] = x[j];
            xp[k] = x[k];
            hess(j, k) = hess(k, j) = (fpp - fpm - fmp + fmm) / (4.0 * hs[j] * hs[k]);
        }
    }
    return hess;
}

}  // namespace hglm
