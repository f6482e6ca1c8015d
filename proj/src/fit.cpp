#include "hglm/fit.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <limits>

#include "hglm/errors.hpp"
#include "hglm/hlik.hpp"

namespace hglm {

namespace {

struct FreeDispersion {
    std::vector<Eigen::Index> idx;  // indices into Dispersion components

    Eigen::VectorXd pack(const Dispersion& d) const {
        Eigen::VectorXd t(static_cast<Eigen::Index>(idx.size()));
        for (std::size_t j = 0; j < idx.size(); ++j)
            t[static_cast<Eigen::Index>(j)] = to_unconstrained(d[idx[j]].value, d[idx[j]].domain);
        return t;
    }
    void unpack(const Eigen::VectorXd& t, Dispersion& d) const {
        for (std::size_t j = 0; j < idx.size(); ++j)
            d[idx[j]].value = from_unconstrained(t[static_cast<Eigen::Index>(j)], d[idx[j]].domain);
    }
};

// Pins components that have collapsed to a domain edge; returns true when the
// free set changed.
bool apply_boundaries(Dispersion& d, FreeDispersion& free, double boundary, double upper_margin,
                      std::vector<std::string>& flagged) {
    bool changed = false;
    for (auto it = free.idx.begin(); it != free.idx.end();) {
        DispersionComponent& c = d[*it];
        bool pin = false;
        switch (c.domain) {
            case Domain::positive:
                if (c.value < boundary) {
                    c.value = boundary;
                    pin = true;
                }
                break;
            case Domain::unit_interval:
                if (c.value < boundary) {
                    c.value = boundary;
                    pin = true;
                } else if (c.value >= 1.0 - 1.0000001 * upper_margin) {
                    c.value = 1.0 - upper_margin;
                    pin = true;
                }
                break;
            case Domain::correlation:
                if (std::abs(c.value) >= 1.0 - 1.0000001 * upper_margin) {
                    c.value = c.value > 0 ? 1.0 - upper_margin : -1.0 + upper_margin;
                    pin = true;
                }
                break;
        }
        if (pin) {
            c.boundary = true;
            flagged.push_back(c.name);
            it = free.idx.erase(it);
            changed = true;
        } else {
            ++it;
        }
    }
    return changed;
}

double rel_delta(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    if (a.size() == 0) return 0.0;
    double d = 0.0;
    for (Eigen::Index i = 0; i < a.size(); ++i)
        d = std::max(d, std::abs(a[i] - b[i]) / (1.0 + std::abs(b[i])));
    return d;
}

}  // namespace

FitResult fit(const ModelSpec& model, const FitOptions& options) {
    FitResult res;
    const BetaConstraint* fix_beta = options.fix_beta ? &*options.fix_beta : nullptr;

    // --- initialization ---------------------------------------------------
    ParamState state = model.blank_state();
    state.beta = glm_initial_beta(model, fix_beta);
    if (model.family.dispersion_free()) {
        // Scale-aware start: split the GLM residual variance between the
        // error and the random-term variance components.
        Eigen::VectorXd resid = model.y - model.linear_predictor(state.beta, state.v);
        double s2 = resid.squaredNorm() / std::max<Eigen::Index>(1, model.n() - model.p());
        s2 = std::max(s2, 1e-6);
        for (Eigen::Index i = 0; i < state.dispersion.size(); ++i)
            if (state.dispersion[i].domain == Domain::positive)
                state.dispersion[i].value = 0.5 * s2;
    }
    if (options.init) {
        if (options.init->beta.size() == model.p()) state.beta = options.init->beta;
        if (options.init->v.size() == model.q()) state.v = options.init->v;
        if (options.init->dispersion.size() == state.dispersion.size())
            state.dispersion = options.init->dispersion;
    }
    for (const auto& [name, value] : options.fix_dispersion) {
        state.dispersion.set(name, value);
        for (Eigen::Index i = 0; i < state.dispersion.size(); ++i)
            if (state.dispersion[i].name == name) state.dispersion[i].fixed = true;
    }
    state.dispersion.check_domains();

    FreeDispersion free;
    for (Eigen::Index i = 0; i < state.dispersion.size(); ++i)
        if (!state.dispersion[i].fixed) free.idx.push_back(i);
    apply_boundaries(state.dispersion, free, options.boundary_value, options.unit_upper_margin,
                     res.boundary_components);

    std::vector<Eigen::Index> free_beta;
    for (Eigen::Index j = 0; j < model.p(); ++j)
        if (!fix_beta || fix_beta->index != j) free_beta.push_back(j);
    Eigen::Index pf = static_cast<Eigen::Index>(free_beta.size());

    auto marginal_at = [&](const Eigen::VectorXd& beta, const Eigen::VectorXd& v_warm) {
        return laplace_marginal(model, beta, state.dispersion, v_warm, options.newton);
    };
    auto beta_with_free = [&](const Eigen::VectorXd& bf) {
        Eigen::VectorXd beta = state.beta;
        for (Eigen::Index j = 0; j < pf; ++j) beta[free_beta[static_cast<std::size_t>(j)]] = bf[j];
        return beta;
    };

    double prev_h = std::numeric_limits<double>::quiet_NaN();
    double prev_marg = prev_h, prev_rest = prev_h;
    bool stalled = false;

    int cycle = 0;
    for (cycle = 1; cycle <= options.max_outer; ++cycle) {
        ParamState cycle_start = state;
        Eigen::VectorXd t_start = free.pack(state.dispersion);
        double h_val, rest_val, marg_val;
        try {
            // (1) joint (beta, v) mode at the current dispersion
            NewtonResult jm_info;
            state = joint_mode(model, state.dispersion, state, options.newton, &jm_info, fix_beta);
            h_val = jm_info.value;

            // (2) one safeguarded Newton step on the restricted likelihood
            rest_val = std::numeric_limits<double>::quiet_NaN();
            if (!free.idx.empty()) {
                auto rfun = [&](const Eigen::VectorXd& t) {
                    Dispersion d = state.dispersion;
                    free.unpack(t, d);
                    try {
                        return restricted_lik(model, d, state, options.newton, fix_beta).value;
                    } catch (const std::runtime_error&) {
                        return -std::numeric_limits<double>::infinity();
                    }
                };
                Eigen::VectorXd t = free.pack(state.dispersion);
                double r0 = rfun(t);
                Eigen::VectorXd g = fd_gradient(rfun, t, options.reml_fd_step);
                rest_val = r0;
                if (g.allFinite()) {
                    Eigen::MatrixXd hess = fd_hessian(rfun, t, options.reml_fd_step);
                    Eigen::VectorXd step = hess.allFinite() ? modified_ascent_step(-hess, g)
                                                            : (0.1 * g).eval();
                    double limit = 2.0;  // keep transformed moves sane
                    if (step.cwiseAbs().maxCoeff() > limit)
                        step *= limit / step.cwiseAbs().maxCoeff();
                    double tau = 1.0;
                    double slope = g.dot(step);
                    bool full_step = false;
                    for (int hvs = 0; hvs < 30; ++hvs) {
                        double r1 = rfun(t + tau * step);
                        if (std::isfinite(r1) && r1 >= r0 + 1e-4 * tau * slope) {
                            t += tau * step;
                            rest_val = r1;
                            full_step = hvs == 0;
                            break;
                        }
                        tau *= 0.5;
                    }
                    // Expansion: when the full step was uphill, keep doubling
                    // while the surface measurably improves (this turns slow
                    // boundary marches on flat surfaces into geometric ones).
                    if (full_step) {
                        double span = tau * step.cwiseAbs().maxCoeff();
                        for (int dbl = 0; dbl < 10 && span < 4.0; ++dbl) {
                            double r2 = rfun(t + tau * step);
                            if (!std::isfinite(r2) || r2 <= rest_val) break;
                            t += tau * step;
                            rest_val = r2;
                            tau *= 2.0;
                            span *= 2.0;
                        }
                    }
                    // Active-set jump: a unit-interval component within 1e-4
                    // of its open edge sits on a plateau the evaluation noise
                    // cannot resolve; move it to the pin directly unless the
                    // surface measurably objects.
                    for (Eigen::Index j = 0; j < t.size(); ++j) {
                        const DispersionComponent& comp =
                            state.dispersion[free.idx[static_cast<std::size_t>(j)]];
                        if (comp.domain != Domain::unit_interval) continue;
                        double val = from_unconstrained(t[j], Domain::unit_interval);
                        if (val <= 1.0 - 1e-4) continue;
                        Eigen::VectorXd t_try = t;
                        t_try[j] =
                            to_unconstrained(1.0 - options.unit_upper_margin, Domain::unit_interval);
                        double r_try = rfun(t_try);
                        if (std::isfinite(r_try) &&
                            r_try >= rest_val - 1e-5 * (1.0 + std::abs(rest_val))) {
                            t = t_try;
                            rest_val = r_try;
                        }
                    }
                    free.unpack(t, state.dispersion);
                    apply_boundaries(state.dispersion, free, options.boundary_value,
                                     options.unit_upper_margin, res.boundary_components);
                }
            } else {
                rest_val = restricted_lik(model, state.dispersion, state, options.newton, fix_beta)
                               .value;
            }

            // (3) beta refinement on the Laplace marginal, v re-synced
            marg_val = std::numeric_limits<double>::quiet_NaN();
            if (pf > 0) {
                Eigen::VectorXd bf(pf);
                for (Eigen::Index j = 0; j < pf; ++j)
                    bf[j] = state.beta[free_beta[static_cast<std::size_t>(j)]];
                auto mfun = [&](const Eigen::VectorXd& b) {
                    try {
                        return marginal_at(beta_with_free(b), state.v).value;
                    } catch (const std::runtime_error&) {
                        return -std::numeric_limits<double>::infinity();
                    }
                };
                AphlValue mcur = marginal_at(beta_with_free(bf), state.v);
                double m0 = mcur.value;
                for (int bs = 0; bs < options.max_beta_steps; ++bs) {
                    // Analytic marginal gradient at the profiled mode; the
                    // curvature stays finite-difference.
                    Eigen::VectorXd g(pf);
                    try {
                        Eigen::VectorXd gfull = laplace_marginal_beta_gradient(
                            model, beta_with_free(bf), state.dispersion, mcur.nuisance_at_max);
                        for (Eigen::Index j = 0; j < pf; ++j)
                            g[j] = gfull[free_beta[static_cast<std::size_t>(j)]];
                    } catch (const std::runtime_error&) {
                        break;
                    }
                    if (!g.allFinite() || g.cwiseAbs().maxCoeff() < options.newton.grad_tol) break;
                    // Curvature by central differences of the analytic
                    // gradient (differencing values would drown flat
                    // directions in evaluation noise).
                    Eigen::MatrixXd hess(pf, pf);
                    bool hess_ok = true;
                    try {
                        Eigen::VectorXd bp = bf;
                        for (Eigen::Index j = 0; j < pf; ++j) {
                            double hstep = options.fd_step * std::max(1.0, std::abs(bf[j]));
                            bp[j] = bf[j] + hstep;
                            AphlValue mp = marginal_at(beta_with_free(bp), state.v);
                            Eigen::VectorXd gp = laplace_marginal_beta_gradient(
                                model, beta_with_free(bp), state.dispersion, mp.nuisance_at_max);
                            bp[j] = bf[j] - hstep;
                            AphlValue mm = marginal_at(beta_with_free(bp), state.v);
                            Eigen::VectorXd gm = laplace_marginal_beta_gradient(
                                model, beta_with_free(bp), state.dispersion, mm.nuisance_at_max);
                            bp[j] = bf[j];
                            for (Eigen::Index k = 0; k < pf; ++k)
                                hess(k, j) =
                                    (gp[free_beta[static_cast<std::size_t>(k)]] -
                                     gm[free_beta[static_cast<std::size_t>(k)]]) /
                                    (2.0 * hstep);
                        }
                        hess = (0.5 * (hess + hess.transpose())).eval();
                    } catch (const std::runtime_error&) {
                        hess_ok = false;
                    }
                    if (!hess_ok || !hess.allFinite()) hess = fd_hessian(mfun, bf, options.fd_step);
                    Eigen::VectorXd step = hess.allFinite() ? modified_ascent_step(-hess, g)
                                                            : (0.1 * g).eval();
                    double tau = 1.0;
                    double slope = g.dot(step);
                    bool ok = false;
                    for (int hvs = 0; hvs < 30; ++hvs) {
                        try {
                            AphlValue m1 = marginal_at(beta_with_free(bf + tau * step), state.v);
                            if (std::isfinite(m1.value) &&
                                m1.value >= m0 + 1e-4 * tau * slope -
                                                64.0 * std::numeric_limits<double>::epsilon() *
                                                    (1.0 + std::abs(m0))) {
                                bf += tau * step;
                                m0 = m1.value;
                                mcur = m1;
                                ok = true;
                                break;
                            }
                        } catch (const std::runtime_error&) {
                        }
                        tau *= 0.5;
                    }
                    if (!ok) break;
                }
                state.beta = beta_with_free(bf);
                marg_val = m0;
            } else {
                marg_val = marginal_at(state.beta, state.v).value;
            }
            state.v = v_mode(model, state.beta, state.dispersion, state.v, options.newton);
        } catch (const convergence_error& e) {
            stalled = true;
            res.stall_reason = e.what();
            state = cycle_start;
            break;
        }

        Eigen::VectorXd t_end = free.pack(state.dispersion);
        double pd = std::max({rel_delta(state.beta, cycle_start.beta),
                              rel_delta(state.v, cycle_start.v),
                              t_start.size() == t_end.size() ? rel_delta(t_end, t_start) : 1.0});
        res.trace.push_back({cycle, h_val, marg_val, rest_val, pd});

        bool crit_ok = std::isfinite(prev_h) &&
                       std::abs(h_val - prev_h) < options.criterion_tol * (1.0 + std::abs(h_val)) &&
                       std::abs(marg_val - prev_marg) <
                           options.criterion_tol * (1.0 + std::abs(marg_val)) &&
                       std::abs(rest_val - prev_rest) <
                           options.criterion_tol * (1.0 + std::abs(rest_val));
        prev_h = h_val;
        prev_marg = marg_val;
        prev_rest = rest_val;
        if (pd < options.param_tol && crit_ok) {
            res.converged = true;
            break;
        }
    }
    res.iterations = std::min(cycle, options.max_outer);

    // Final criterion values at the returned state.
    res.state = state;
    res.h_value = eval_h(model, state);
    AphlValue marg = laplace_marginal(model, state.beta, state.dispersion, state.v, options.newton);
    res.marginal_aphl = marg.value;
    res.restricted_aphl =
        restricted_lik(model, state.dispersion, state, options.newton, fix_beta).value;

    if (options.compute_se && model.p() > 0 && !options.fix_beta) {
        auto mfull = [&](const Eigen::VectorXd& b) {
            return laplace_marginal(model, b, state.dispersion, state.v, options.newton).value;
        };
        Eigen::MatrixXd hess = fd_hessian(mfull, state.beta, options.se_fd_step);
        Eigen::MatrixXd info = -hess;
        Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
        res.se_beta = Eigen::VectorXd::Constant(model.p(), std::numeric_limits<double>::quiet_NaN());
        if (ldlt.info() == Eigen::Success && ldlt.isPositive()) {
            Eigen::MatrixXd cov = ldlt.solve(Eigen::MatrixXd::Identity(model.p(), model.p()));
            for (Eigen::Index j = 0; j < model.p(); ++j)
                res.se_beta[j] = cov(j, j) > 0 ? std::sqrt(cov(j, j)) : std::numeric_limits<double>::quiet_NaN();
        }
    }
    if (stalled && !res.converged && res.trace.empty())
        throw convergence_error("fit: " + res.stall_reason, 0.0, 0);
    return res;
}

}  // namespace hglm
