#include "hglm/aphl.hpp"

#include <Eigen/Cholesky>
#include <cmath>
#include <string>

#include "hglm/errors.hpp"

namespace hglm {

namespace {
constexpr double kLog2Pi = 1.8378770664093454836;
}

double half_logdet_over_2pi(const Eigen::MatrixXd& a, const char* context) {
    Eigen::Index d = a.rows();
    if (d == 0) return 0.0;
    Eigen::LLT<Eigen::MatrixXd> llt(a);
    if (llt.info() != Eigen::Success)
        throw numerical_error(std::string(context) +
                              ": curvature at the profiled maximum is not positive definite");
    double logdet = 0.0;
    for (Eigen::Index i = 0; i < d; ++i) logdet += std::log(llt.matrixL()(i, i));
    return logdet - 0.5 * static_cast<double>(d) * kLog2Pi;
}

AphlValue adjust_profile(const Objective& objective, const Eigen::VectorXd& alpha_init,
                         const NewtonOptions& options) {
    NewtonResult inner = newton_maximize(objective, alpha_init, options, "adjust_profile");
    AphlValue out;
    out.nuisance_at_max = inner.x;
    out.converged = inner.converged;
    out.logdet_adjust = half_logdet_over_2pi(objective.neg_hessian(inner.x), "adjust_profile");
    out.value = inner.value - out.logdet_adjust;
    return out;
}

AphlValue laplace_marginal(const ModelSpec& model, const Eigen::VectorXd& beta,
                           const Dispersion& dispersion, std::optional<Eigen::VectorXd> v_init,
                           const NewtonOptions& options) {
    NewtonResult info;
    Eigen::VectorXd vhat = v_mode(model, beta, dispersion, std::move(v_init), options, &info);
    ParamState st;
    st.beta = beta;
    st.v = vhat;
    st.dispersion = dispersion;
    HessianBlocks hb = hess_h(model, st);

    PrecisionStructure prec = model.random.precision(dispersion);
    Eigen::MatrixXd d = prec.full_rank()
                            ? hb.h_vv
                            : (prec.range_basis.transpose() * hb.h_vv * prec.range_basis).eval();

    AphlValue out;
    out.nuisance_at_max = vhat;
    out.converged = info.converged;
    out.logdet_adjust = half_logdet_over_2pi(d, "laplace_marginal");
    out.value = eval_h(model, st) - out.logdet_adjust;
    return out;
}

AphlValue restricted_lik(const ModelSpec& model, const Dispersion& dispersion,
                         std::optional<ParamState> init, const NewtonOptions& options,
                         const BetaConstraint* fix_beta) {
    NewtonResult info;
    ParamState st = joint_mode(model, dispersion, std::move(init), options, &info, fix_beta);
    HessianBlocks hb = hess_h(model, st);
    PrecisionStructure prec = model.random.precision(dispersion);

    Eigen::Index p = model.p();
    std::vector<Eigen::Index> free_beta;
    for (Eigen::Index j = 0; j < p; ++j)
        if (!fix_beta || fix_beta->index != j) free_beta.push_back(j);
    Eigen::Index pf = static_cast<Eigen::Index>(free_beta.size());

    Eigen::MatrixXd h_vv = prec.full_rank()
                               ? hb.h_vv
                               : (prec.range_basis.transpose() * hb.h_vv * prec.range_basis).eval();
    Eigen::Index r = h_vv.rows();
    Eigen::MatrixXd d(pf + r, pf + r);
    for (Eigen::Index a = 0; a < pf; ++a) {
        for (Eigen::Index b = 0; b < pf; ++b)
            d(a, b) = hb.h_bb(free_beta[static_cast<std::size_t>(a)],
                              free_beta[static_cast<std::size_t>(b)]);
        Eigen::VectorXd row = hb.h_bv.row(free_beta[static_cast<std::size_t>(a)]).transpose();
        if (!prec.full_rank()) row = (prec.range_basis.transpose() * row).eval();
        d.row(a).tail(r) = row.transpose();
    }
    d.bottomLeftCorner(r, pf) = d.topRightCorner(pf, r).transpose();
    d.bottomRightCorner(r, r) = h_vv;

    AphlValue out;
    out.nuisance_at_max.resize(pf + model.q());
    for (Eigen::Index j = 0; j < pf; ++j)
        out.nuisance_at_max[j] = st.beta[free_beta[static_cast<std::size_t>(j)]];
    out.nuisance_at_max.tail(model.q()) = st.v;
    out.converged = info.converged;
    out.logdet_adjust = half_logdet_over_2pi(d, "restricted_lik");
    out.value = eval_h(model, st) - out.logdet_adjust;
    return out;
}

}  // namespace hglm
