#include "hglm/profile.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hglm/errors.hpp"
#include "hglm/optim.hpp"

namespace hglm {

namespace {

void check_grid(const Eigen::VectorXd& grid) {
    if (grid.size() < 2) throw domain_error("profile grid needs at least two points");
    for (Eigen::Index i = 1; i < grid.size(); ++i)
        if (!(grid[i] > grid[i - 1])) throw domain_error("profile grid must be strictly increasing");
}

double trapezoid_exp(const ProfileCurve& c, int moment, double center) {
    double acc = 0.0;
    for (Eigen::Index i = 1; i < c.grid.size(); ++i) {
        if (!c.point_converged[static_cast<std::size_t>(i)] ||
            !c.point_converged[static_cast<std::size_t>(i - 1)])
            continue;
        double f0 = std::exp(c.values[i - 1] - c.log_norm) *
                    std::pow(c.grid[i - 1] - center, moment);
        double f1 = std::exp(c.values[i] - c.log_norm) * std::pow(c.grid[i] - center, moment);
        acc += 0.5 * (f0 + f1) * (c.grid[i] - c.grid[i - 1]);
    }
    return acc;
}

}  // namespace

bool ProfileCurve::all_converged() const {
    return std::all_of(point_converged.begin(), point_converged.end(), [](bool b) { return b; });
}

double curve_mass(const ProfileCurve& curve) { return trapezoid_exp(curve, 0, 0.0); }

double curve_mean(const ProfileCurve& curve) {
    return trapezoid_exp(curve, 1, 0.0) / trapezoid_exp(curve, 0, 0.0);
}

double curve_variance(const ProfileCurve& curve) {
    double m = curve_mean(curve);
    return trapezoid_exp(curve, 2, m) / trapezoid_exp(curve, 0, 0.0);
}

ProfileCurve re_profile(const ModelSpec& model, const ParamState& fitted, Eigen::Index index,
                        const Eigen::VectorXd& grid, const NewtonOptions& options) {
    check_grid(grid);
    model.check_state(fitted);
    Eigen::Index q = model.q();
    if (index < 0 || index >= q) throw domain_error("random-effect index out of range");
    PrecisionStructure prec = model.random.precision(fitted.dispersion);
    if (!prec.full_rank())
        throw unsupported_structure("re_profile needs a full-rank random-effect precision");

    ProfileCurve c;
    c.param_name = "v_" + std::to_string(index);
    c.grid = grid;
    c.values.resize(grid.size());
    c.point_converged.assign(static_cast<std::size_t>(grid.size()), false);
    for (Eigen::Index j = 0; j < q; ++j)
        if (j != index) c.nuisance_names.push_back("v_" + std::to_string(j));
    c.nuisance_trace.resize(grid.size(), q - 1);

    // Normalizer: the Laplace marginal at the fitted parameters.
    c.log_norm = laplace_marginal(model, fitted.beta, fitted.dispersion, fitted.v, options).value;

    auto assemble_v = [&](double vi, const Eigen::VectorXd& rest) {
        Eigen::VectorXd v(q);
        Eigen::Index k = 0;
        for (Eigen::Index j = 0; j < q; ++j) v[j] = j == index ? vi : rest[k++];
        return v;
    };
    auto drop_index = [&](const Eigen::VectorXd& full) {
        Eigen::VectorXd rest(q - 1);
        Eigen::Index k = 0;
        for (Eigen::Index j = 0; j < q; ++j)
            if (j != index) rest[k++] = full[j];
        return rest;
    };

    Eigen::VectorXd warm = drop_index(fitted.v);
    for (Eigen::Index g = 0; g < grid.size(); ++g) {
        double vi = grid[g];
        ParamState st = fitted;
        Objective obj;
        obj.value = [&](const Eigen::VectorXd& rest) {
            ParamState s = st;
            s.v = assemble_v(vi, rest);
            return eval_h(model, s);
        };
        obj.gradient = [&](const Eigen::VectorXd& rest) {
            ParamState s = st;
            s.v = assemble_v(vi, rest);
            return drop_index(grad_h(model, s).g_v);
        };
        obj.neg_hessian = [&](const Eigen::VectorXd& rest) {
            ParamState s = st;
            s.v = assemble_v(vi, rest);
            Eigen::MatrixXd h_vv = hess_h(model, s).h_vv;
            Eigen::MatrixXd out(q - 1, q - 1);
            Eigen::Index a = 0;
            for (Eigen::Index r = 0; r < q; ++r) {
                if (r == index) continue;
                Eigen::Index b = 0;
                for (Eigen::Index cidx = 0; cidx < q; ++cidx) {
                    if (cidx == index) continue;
                    out(a, b++) = h_vv(r, cidx);
                }
                ++a;
            }
            return out;
        };
        try {
            AphlValue val = adjust_profile(obj, warm, options);
            c.values[g] = val.value;
            c.point_converged[static_cast<std::size_t>(g)] = val.converged;
            c.nuisance_trace.row(g) = val.nuisance_at_max.transpose();
            if (val.converged) warm = val.nuisance_at_max;
        } catch (const std::runtime_error&) {
            c.values[g] = std::numeric_limits<double>::quiet_NaN();
            c.nuisance_trace.row(g).setConstant(std::numeric_limits<double>::quiet_NaN());
        }
    }
    c.mass = curve_mass(c);
    c.grid_warning = !(c.mass >= 0.99);
    return c;
}

ProfileCurve param_profile(const ModelSpec& model, const FitResult& full_fit,
                           const std::string& param_name, const Eigen::VectorXd& grid,
                           const FitOptions& base_options) {
    check_grid(grid);

    Eigen::Index beta_index = -1;
    for (Eigen::Index j = 0; j < model.p(); ++j)
        if (model.beta_names[static_cast<std::size_t>(j)] == param_name) beta_index = j;
    bool is_dispersion = full_fit.state.dispersion.has(param_name);
    if (beta_index < 0 && !is_dispersion) {
        std::string names;
        for (const auto& nm : model.beta_names) names += nm + " ";
        for (const auto& comp : full_fit.state.dispersion.components()) names += comp.name + " ";
        throw config_error("unknown parameter '" + param_name + "'; valid names: " + names);
    }

    ProfileCurve c;
    c.param_name = param_name;
    c.grid = grid;
    c.values.resize(grid.size());
    c.point_converged.assign(static_cast<std::size_t>(grid.size()), false);
    for (Eigen::Index j = 0; j < model.p(); ++j)
        if (j != beta_index) c.nuisance_names.push_back(model.beta_names[static_cast<std::size_t>(j)]);
    for (const auto& comp : full_fit.state.dispersion.components())
        if (!(is_dispersion && comp.name == param_name)) c.nuisance_names.push_back(comp.name);
    c.nuisance_trace.resize(grid.size(), static_cast<Eigen::Index>(c.nuisance_names.size()));

    ParamState warm = full_fit.state;
    for (Eigen::Index g = 0; g < grid.size(); ++g) {
        FitOptions opts = base_options;
        opts.compute_se = false;
        opts.init = warm;
        if (beta_index >= 0) {
            // Remaining beta re-estimated by the marginal likelihood; the
            // dispersion stays at its restricted-likelihood estimate, which
            // eliminates all of beta and so does not vary with the pinned
            // coefficient.
            opts.fix_beta = BetaConstraint{beta_index, grid[g]};
            opts.init->beta[beta_index] = grid[g];
            for (const auto& comp : full_fit.state.dispersion.components())
                opts.fix_dispersion[comp.name] = comp.value;
        } else {
            opts.fix_dispersion[param_name] = grid[g];
        }
        try {
            FitResult fr = fit(model, opts);
            c.values[g] = beta_index >= 0 ? fr.marginal_aphl : fr.restricted_aphl;
            c.point_converged[static_cast<std::size_t>(g)] = fr.converged;
            Eigen::Index k = 0;
            for (Eigen::Index j = 0; j < model.p(); ++j)
                if (j != beta_index) c.nuisance_trace(g, k++) = fr.state.beta[j];
            for (const auto& comp : fr.state.dispersion.components())
                if (!(is_dispersion && comp.name == param_name)) c.nuisance_trace(g, k++) = comp.value;
            if (fr.converged) warm = fr.state;
        } catch (const std::runtime_error&) {
            c.values[g] = std::numeric_limits<double>::quiet_NaN();
            c.nuisance_trace.row(g).setConstant(std::numeric_limits<double>::quiet_NaN());
        }
    }
    return c;
}

Eigen::VectorXd default_profile_grid(const ModelSpec& model, const FitResult& fit,
                                     const std::string& param_name, int n_points, double width) {
    if (n_points < 3) throw domain_error("grid needs at least three points");
    for (Eigen::Index j = 0; j < model.p(); ++j)
        if (model.beta_names[static_cast<std::size_t>(j)] == param_name) {
            double se = fit.se_beta.size() == model.p() ? fit.se_beta[j] : 1.0;
            if (!(se > 0.0) || !std::isfinite(se)) se = 1.0;
            double center = fit.state.beta[j];
            Eigen::VectorXd g(n_points);
            for (int i = 0; i < n_points; ++i)
                g[i] = center - width * se + 2.0 * width * se * i / (n_points - 1);
            return g;
        }
    if (fit.state.dispersion.has(param_name)) {
        // Wald width on the transformed scale from the restricted-likelihood
        // curvature, mapped back to the natural scale.
        Domain dom = Domain::positive;
        for (const auto& comp : fit.state.dispersion.components())
            if (comp.name == param_name) dom = comp.domain;
        double t_hat = to_unconstrained(fit.state.dispersion.get(param_name), dom);
        auto rfun = [&](const Eigen::VectorXd& t) {
            Dispersion d = fit.state.dispersion;
            d.set(param_name, from_unconstrained(t[0], dom));
            return restricted_lik(model, d, fit.state).value;
        };
        Eigen::VectorXd t0(1);
        t0[0] = t_hat;
        Eigen::MatrixXd hess = fd_hessian(rfun, t0, 1e-4);
        double se_t = hess(0, 0) < 0.0 ? 1.0 / std::sqrt(-hess(0, 0)) : 1.0;
        Eigen::VectorXd g(n_points);
        for (int i = 0; i < n_points; ++i)
            g[i] = from_unconstrained(t_hat - width * se_t + 2.0 * width * se_t * i / (n_points - 1),
                                      dom);
        return g;
    }
    std::string names;
    for (const auto& nm : model.beta_names) names += nm + " ";
    for (const auto& comp : fit.state.dispersion.components()) names += comp.name + " ";
    throw config_error("unknown parameter '" + param_name + "'; valid names: " + names);
}

}  // namespace hglm
