#include "hglm/hlik.hpp"

#include <Eigen/Cholesky>
#include <cmath>

#include "hglm/errors.hpp"

namespace hglm {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double softplus(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

// log f(y|v) summed over rows, with normalizing constants.
double conditional_loglik(const ModelSpec& model, const Eigen::VectorXd& eta, double phi) {
    double ll = 0.0;
    for (Eigen::Index i = 0; i < model.n(); ++i) {
        double e = model.link.clamp_eta(eta[i]);
        double y = model.y[i];
        switch (model.family.kind) {
            case FamilyKind::normal: {
                double r = y - e;
                ll += -0.5 * (kLog2Pi + std::log(phi)) - r * r / (2.0 * phi);
                break;
            }
            case FamilyKind::poisson: {
                // Deviance form: the parameter-dependent part stays O(1) per
                // row, so large y eta and lgamma terms cancel only inside the
                // parameter-free constant.
                double mu = std::exp(e);
                if (y > 0.0)
                    ll += y * (e - std::log(y)) - (mu - y) +
                          (y * std::log(y) - y - std::lgamma(y + 1.0));
                else
                    ll += -mu;
                break;
            }
            case FamilyKind::bernoulli:
            case FamilyKind::binomial: {
                double m = model.family.trials_at(i);
                ll += y * e - m * softplus(e) + std::lgamma(m + 1.0) - std::lgamma(y + 1.0) -
                      std::lgamma(m - y + 1.0);
                break;
            }
        }
    }
    return ll;
}

// log f(v): normal with the given precision; generalized density over the
// row space when the precision is rank deficient.
double prior_logdens(const PrecisionStructure& prec, const Eigen::VectorXd& v) {
    if (!prec.full_rank()) {
        double null_comp = (prec.null_basis.transpose() * v).cwiseAbs().maxCoeff();
        if (null_comp > 1e-8 * (1.0 + v.cwiseAbs().maxCoeff()))
            throw domain_error("v has a component of size " + std::to_string(null_comp) +
                               " in the null space of a singular precision");
    }
    double quad = v.dot(prec.matrix * v);
    return -0.5 * static_cast<double>(prec.rank) * kLog2Pi + 0.5 * prec.glogdet - 0.5 * quad;
}

double phi_of(const ModelSpec& model, const Dispersion& d) {
    return model.family.dispersion_free() ? d.get("phi") : 1.0;
}

// Score of the conditional log-likelihood in eta.
Eigen::VectorXd eta_score(const ModelSpec& model, const Eigen::VectorXd& eta, double phi) {
    Eigen::VectorXd s(model.n());
    for (Eigen::Index i = 0; i < model.n(); ++i) {
        double e = eta[i];
        double mu = model.link.inverse(e);
        double dmu = model.link.dmu_deta(e);
        double m = model.family.trials_at(i);
        s[i] = (model.y[i] - m * mu) * dmu / (phi * model.family.variance(mu));
    }
    return s;
}

struct ReducedBasis {
    bool reduced = false;
    Eigen::MatrixXd b;  // q x r orthonormal row-space basis when reduced
    Eigen::Index dim(const ModelSpec& model) const { return reduced ? b.cols() : model.q(); }
    Eigen::VectorXd expand(const Eigen::VectorXd& w) const { return reduced ? (b * w).eval() : w; }
    Eigen::VectorXd restrict_vec(const Eigen::VectorXd& g) const {
        return reduced ? (b.transpose() * g).eval() : g;
    }
    Eigen::MatrixXd restrict_right(const Eigen::MatrixXd& m) const {
        return reduced ? (m * b).eval() : m;
    }
    Eigen::MatrixXd restrict_both(const Eigen::MatrixXd& m) const {
        return reduced ? (b.transpose() * m * b).eval() : m;
    }
};

ReducedBasis basis_for(const PrecisionStructure& prec) {
    ReducedBasis rb;
    if (!prec.full_rank()) {
        rb.reduced = true;
        rb.b = prec.range_basis;
    }
    return rb;
}

double eval_h_with(const ModelSpec& model, const ParamState& state,
                   const PrecisionStructure& prec) {
    Eigen::VectorXd eta = model.linear_predictor(state.beta, state.v);
    return conditional_loglik(model, eta, phi_of(model, state.dispersion)) +
           prior_logdens(prec, state.v);
}

HGradient grad_h_with(const ModelSpec& model, const ParamState& state,
                      const PrecisionStructure& prec) {
    Eigen::VectorXd eta = model.linear_predictor(state.beta, state.v);
    Eigen::VectorXd s = eta_score(model, eta, phi_of(model, state.dispersion));
    HGradient g;
    g.g_beta = model.designs.X.transpose() * s;
    g.g_v = model.z_eff().transpose() * s - prec.matrix * state.v;
    return g;
}

HessianBlocks hess_h_with(const ModelSpec& model, const ParamState& state,
                          const PrecisionStructure& prec) {
    MeanWeights mw = mean_and_weights(model, state);
    const Eigen::MatrixXd& x = model.designs.X;
    const Eigen::MatrixXd& z = model.z_eff();
    HessianBlocks hb;
    Eigen::MatrixXd wz = mw.w.asDiagonal() * z;
    hb.h_bb = x.transpose() * mw.w.asDiagonal() * x;
    hb.h_bv = x.transpose() * wz;
    hb.h_vv = z.transpose() * wz + prec.matrix;
    return hb;
}

}  // namespace

Eigen::MatrixXd HessianBlocks::assembled() const {
    Eigen::Index p = h_bb.rows(), q = h_vv.rows();
    Eigen::MatrixXd full(p + q, p + q);
    full.topLeftCorner(p, p) = h_bb;
    full.topRightCorner(p, q) = h_bv;
    full.bottomLeftCorner(q, p) = h_bv.transpose();
    full.bottomRightCorner(q, q) = h_vv;
    return full;
}

double eval_h(const ModelSpec& model, const ParamState& state) {
    model.check_state(state);
    return eval_h_with(model, state, model.random.precision(state.dispersion));
}

HGradient grad_h(const ModelSpec& model, const ParamState& state) {
    model.check_state(state);
    return grad_h_with(model, state, model.random.precision(state.dispersion));
}

HessianBlocks hess_h(const ModelSpec& model, const ParamState& state) {
    model.check_state(state);
    return hess_h_with(model, state, model.random.precision(state.dispersion));
}

Eigen::VectorXd v_mode(const ModelSpec& model, const Eigen::VectorXd& beta,
                       const Dispersion& dispersion, std::optional<Eigen::VectorXd> v_init,
                       const NewtonOptions& options, NewtonResult* info) {
    PrecisionStructure prec = model.random.precision(dispersion);
    ReducedBasis rb = basis_for(prec);
    ParamState st;
    st.beta = beta;
    st.dispersion = dispersion;
    st.v = Eigen::VectorXd::Zero(model.q());
    model.check_state(st);

    Objective obj;
    obj.value = [&](const Eigen::VectorXd& w) {
        ParamState s = st;
        s.v = rb.expand(w);
        return eval_h_with(model, s, prec);
    };
    obj.gradient = [&](const Eigen::VectorXd& w) {
        ParamState s = st;
        s.v = rb.expand(w);
        return rb.restrict_vec(grad_h_with(model, s, prec).g_v);
    };
    obj.neg_hessian = [&](const Eigen::VectorXd& w) {
        ParamState s = st;
        s.v = rb.expand(w);
        return rb.restrict_both(hess_h_with(model, s, prec).h_vv);
    };

    Eigen::VectorXd w0 = Eigen::VectorXd::Zero(rb.dim(model));
    if (v_init && v_init->size() == model.q()) w0 = rb.restrict_vec(*v_init);
    NewtonResult res = newton_maximize(obj, w0, options, "v_mode");
    if (info) *info = res;
    return rb.expand(res.x);
}

ParamState joint_mode(const ModelSpec& model, const Dispersion& dispersion,
                      std::optional<ParamState> init, const NewtonOptions& options,
                      NewtonResult* info, const BetaConstraint* fix_beta) {
    dispersion.check_domains();
    PrecisionStructure prec = model.random.precision(dispersion);
    ReducedBasis rb = basis_for(prec);
    Eigen::Index p = model.p();
    Eigen::Index r = rb.dim(model);

    std::vector<Eigen::Index> free_beta;
    for (Eigen::Index j = 0; j < p; ++j)
        if (!fix_beta || fix_beta->index != j) free_beta.push_back(j);
    Eigen::Index pf = static_cast<Eigen::Index>(free_beta.size());

    auto unpack = [&](const Eigen::VectorXd& x) {
        ParamState s;
        s.dispersion = dispersion;
        s.beta = Eigen::VectorXd::Zero(p);
        if (fix_beta) s.beta[fix_beta->index] = fix_beta->value;
        for (Eigen::Index j = 0; j < pf; ++j) s.beta[free_beta[static_cast<std::size_t>(j)]] = x[j];
        s.v = rb.expand(x.tail(r));
        return s;
    };

    Objective obj;
    obj.value = [&](const Eigen::VectorXd& x) { return eval_h_with(model, unpack(x), prec); };
    obj.gradient = [&](const Eigen::VectorXd& x) {
        HGradient g = grad_h_with(model, unpack(x), prec);
        Eigen::VectorXd out(pf + r);
        for (Eigen::Index j = 0; j < pf; ++j) out[j] = g.g_beta[free_beta[static_cast<std::size_t>(j)]];
        out.tail(r) = rb.restrict_vec(g.g_v);
        return out;
    };
    obj.neg_hessian = [&](const Eigen::VectorXd& x) {
        HessianBlocks hb = hess_h_with(model, unpack(x), prec);
        if (!hb.h_vv.allFinite()) throw numerical_error("joint_mode: h_vv block is not finite");
        if (!hb.h_bb.allFinite()) throw numerical_error("joint_mode: h_bb block is not finite");
        Eigen::MatrixXd out(pf + r, pf + r);
        for (Eigen::Index a = 0; a < pf; ++a) {
            for (Eigen::Index b = 0; b < pf; ++b)
                out(a, b) = hb.h_bb(free_beta[static_cast<std::size_t>(a)],
                                    free_beta[static_cast<std::size_t>(b)]);
            out.row(a).tail(r) =
                rb.restrict_vec(hb.h_bv.row(free_beta[static_cast<std::size_t>(a)]).transpose())
                    .transpose();
        }
        out.bottomLeftCorner(r, pf) = out.topRightCorner(pf, r).transpose();
        out.bottomRightCorner(r, r) = rb.restrict_both(hb.h_vv);
        return out;
    };

    Eigen::VectorXd x0(pf + r);
    Eigen::VectorXd beta0;
    if (init && init->beta.size() == p) {
        beta0 = init->beta;
    } else {
        beta0 = glm_initial_beta(model, fix_beta);
    }
    for (Eigen::Index j = 0; j < pf; ++j) x0[j] = beta0[free_beta[static_cast<std::size_t>(j)]];
    x0.tail(r).setZero();
    if (init && init->v.size() == model.q()) x0.tail(r) = rb.restrict_vec(init->v);

    NewtonResult res = newton_maximize(obj, x0, options, "joint_mode");
    if (info) *info = res;
    return unpack(res.x);
}

Eigen::VectorXd laplace_marginal_beta_gradient(const ModelSpec& model, const Eigen::VectorXd& beta,
                                               const Dispersion& dispersion,
                                               const Eigen::VectorXd& vhat) {
    PrecisionStructure prec = model.random.precision(dispersion);
    ReducedBasis rb = basis_for(prec);
    ParamState st;
    st.beta = beta;
    st.v = vhat;
    st.dispersion = dispersion;
    model.check_state(st);

    Eigen::VectorXd eta = model.linear_predictor(beta, vhat);
    double phi = phi_of(model, dispersion);
    Eigen::VectorXd s = eta_score(model, eta, phi);
    const Eigen::MatrixXd& x = model.designs.X;
    const Eigen::MatrixXd& z = model.z_eff();
    Eigen::VectorXd grad = x.transpose() * s;
    if (model.family.kind == FamilyKind::normal) return grad;  // constant weights

    // dW/deta per row (canonical links; zero where the clamp flattens eta).
    Eigen::Index n = model.n();
    Eigen::VectorXd w(n), wprime(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double e = eta[i];
        double dmu = model.link.dmu_deta(e);
        double mu = model.link.inverse(e);
        double m = model.family.trials_at(i);
        w[i] = m * dmu * dmu / (phi * model.family.variance(mu));
        if (dmu == 0.0) {
            wprime[i] = 0.0;
        } else if (model.family.kind == FamilyKind::poisson) {
            wprime[i] = mu;
        } else {  // bernoulli / binomial, logit link
            wprime[i] = m * mu * (1.0 - mu) * (1.0 - 2.0 * mu);
        }
    }

    Eigen::MatrixXd zr = rb.reduced ? (z * rb.b).eval() : z;  // n x r
    Eigen::MatrixXd k = zr.transpose() * w.asDiagonal() * zr +
                        (rb.reduced ? (rb.b.transpose() * prec.matrix * rb.b).eval()
                                    : prec.matrix);
    Eigen::LLT<Eigen::MatrixXd> llt(k);
    if (llt.info() != Eigen::Success)
        throw numerical_error("laplace_marginal_beta_gradient: curvature not positive definite");

    // c_i = z_i' K^{-1} z_i and the induced mode sensitivity dv/dbeta.
    Eigen::MatrixXd kinv_zt = llt.solve(zr.transpose());       // r x n
    Eigen::VectorXd c(n);
    for (Eigen::Index i = 0; i < n; ++i) c[i] = zr.row(i).dot(kinv_zt.col(i));
    Eigen::MatrixXd a = zr.transpose() * w.asDiagonal() * x;   // r x p
    Eigen::MatrixXd dv = -llt.solve(a);                        // r x p
    Eigen::MatrixXd total = x + zr * dv;                       // d eta / d beta
    grad -= 0.5 * total.transpose() * (c.cwiseProduct(wprime));
    return grad;
}

Eigen::VectorXd glm_initial_beta(const ModelSpec& model, const BetaConstraint* fix_beta) {
    Eigen::Index p = model.p();
    if (p == 0) return Eigen::VectorXd();
    Eigen::Index n = model.n();
    const Eigen::MatrixXd& x = model.designs.X;

    std::vector<Eigen::Index> free_beta;
    for (Eigen::Index j = 0; j < p; ++j)
        if (!fix_beta || fix_beta->index != j) free_beta.push_back(j);
    Eigen::Index pf = static_cast<Eigen::Index>(free_beta.size());
    Eigen::MatrixXd xf(n, pf);
    for (Eigen::Index j = 0; j < pf; ++j) xf.col(j) = x.col(free_beta[static_cast<std::size_t>(j)]);

    Eigen::VectorXd fixed_part = Eigen::VectorXd::Zero(n);
    if (model.offset) fixed_part += *model.offset;
    if (fix_beta) fixed_part += x.col(fix_beta->index) * fix_beta->value;

    // Starting working response from the data.
    Eigen::VectorXd eta(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        double y = model.y[i];
        switch (model.family.kind) {
            case FamilyKind::normal: eta[i] = y; break;
            case FamilyKind::poisson: eta[i] = std::log(y + 0.5); break;
            case FamilyKind::bernoulli:
            case FamilyKind::binomial: {
                double m = model.family.trials_at(i);
                eta[i] = std::log((y + 0.5) / (m - y + 0.5));
                break;
            }
        }
    }

    Eigen::VectorXd beta_f = Eigen::VectorXd::Zero(pf);
    if (pf == 0) {
        Eigen::VectorXd full = Eigen::VectorXd::Zero(p);
        if (fix_beta) full[fix_beta->index] = fix_beta->value;
        return full;
    }
    for (int iter = 0; iter < 50; ++iter) {
        Eigen::VectorXd w(n), z(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            double e = model.link.clamp_eta(eta[i]);
            double mu = model.link.inverse(e);
            double dmu = model.link.dmu_deta(e);
            double m = model.family.trials_at(i);
            if (dmu <= 0.0) {  // clamped row: no weight, no residual pull
                w[i] = 0.0;
                z[i] = e - fixed_part[i];
                continue;
            }
            w[i] = m * dmu * dmu / model.family.variance(mu);
            z[i] = e + (model.y[i] - m * mu) / (m * dmu) - fixed_part[i];
        }
        Eigen::MatrixXd xtwx = xf.transpose() * w.asDiagonal() * xf;
        Eigen::VectorXd xtwz = xf.transpose() * w.asDiagonal() * z;
        Eigen::VectorXd next = xtwx.ldlt().solve(xtwz);
        double delta = (next - beta_f).cwiseAbs().maxCoeff();
        beta_f = next;
        eta = xf * beta_f + fixed_part;
        if (delta < 1e-10 * (1.0 + beta_f.cwiseAbs().maxCoeff())) break;
    }
    Eigen::VectorXd full = Eigen::VectorXd::Zero(p);
    if (fix_beta) full[fix_beta->index] = fix_beta->value;
    for (Eigen::Index j = 0; j < pf; ++j) full[free_beta[static_cast<std::size_t>(j)]] = beta_f[j];
    return full;
}

double glm_loglik(const ModelSpec& model, const Eigen::VectorXd& beta, double phi) {
    Eigen::VectorXd eta = model.linear_predictor(beta, Eigen::VectorXd::Zero(model.q()));
    return conditional_loglik(model, eta, phi);
}

}  // namespace hglm
