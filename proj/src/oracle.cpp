#include "hglm/oracle.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <limits>
#include <vector>

#include "hglm/errors.hpp"

namespace hglm {
namespace oracle {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double softplus(double x) {
    return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

// Log density of one row given its linear predictor, no clamping: the oracle
// evaluates the model density as written.
double row_loglik(const ModelSpec& model, Eigen::Index i, double eta, double phi) {
    double y = model.y[i];
    switch (model.family.kind) {
        case FamilyKind::normal: {
            double r = y - eta;
            return -0.5 * (kLog2Pi + std::log(phi)) - r * r / (2.0 * phi);
        }
        case FamilyKind::poisson: {
            double mu = std::exp(eta);
            if (y > 0.0)
                return y * (eta - std::log(y)) - (mu - y) +
                       (y * std::log(y) - y - std::lgamma(y + 1.0));
            return -mu;
        }
        case FamilyKind::bernoulli:
        case FamilyKind::binomial: {
            double m = model.family.trials_at(i);
            return y * eta - m * softplus(eta) + std::lgamma(m + 1.0) - std::lgamma(y + 1.0) -
                   std::lgamma(m - y + 1.0);
        }
    }
    return 0.0;
}

struct SeparableLayout {
    std::vector<std::vector<Eigen::Index>> cluster_rows;  // rows touching column c
    std::vector<Eigen::Index> free_rows;                  // rows with no random term
    Eigen::VectorXd prec_diag;
};

SeparableLayout separate_clusters(const ModelSpec& model, const Dispersion& dispersion) {
    PrecisionStructure prec = model.random.precision(dispersion);
    Eigen::Index q = model.q();
    double scale = prec.matrix.cwiseAbs().maxCoeff();
    for (Eigen::Index a = 0; a < q; ++a)
        for (Eigen::Index b = 0; b < q; ++b)
            if (a != b && std::abs(prec.matrix(a, b)) > 1e-12 * scale)
                throw unsupported_structure(
                    "quadrature oracle needs a diagonal random-effect precision");
    SeparableLayout lay;
    lay.cluster_rows.resize(static_cast<std::size_t>(q));
    lay.prec_diag = prec.matrix.diagonal();
    const Eigen::MatrixXd& z = model.z_eff();
    for (Eigen::Index i = 0; i < model.n(); ++i) {
        Eigen::Index hits = 0, col = -1;
        for (Eigen::Index c = 0; c < q; ++c)
            if (z(i, c) != 0.0) {
                ++hits;
                col = c;
            }
        if (hits > 1)
            throw unsupported_structure(
                "quadrature oracle needs at most one random column per row");
        if (hits == 1)
            lay.cluster_rows[static_cast<std::size_t>(col)].push_back(i);
        else
            lay.free_rows.push_back(i);
    }
    return lay;
}

struct ClusterIntegrand {
    const ModelSpec* model;
    const std::vector<Eigen::Index>* rows;
    Eigen::VectorXd eta0;  // fixed part of the predictor for those rows
    Eigen::VectorXd zc;    // random-column entries for those rows
    double prec = 1.0;
    double phi = 1.0;

    double operator()(double t) const {
        double g = -0.5 * kLog2Pi + 0.5 * std::log(prec) - 0.5 * prec * t * t;
        for (std::size_t j = 0; j < rows->size(); ++j)
            g += row_loglik(*model, (*rows)[j], eta0[static_cast<Eigen::Index>(j)] +
                                                    zc[static_cast<Eigen::Index>(j)] * t,
                            phi);
        return g;
    }
};

struct ClusterQuad {
    double log_integral;
    double mean;
    double variance;
};

// Adaptive rule centered at the cluster's conditional mode with scale from
// the conditional curvature (both from the hlik machinery).
ClusterQuad integrate_cluster(const ClusterIntegrand& f, double center, double curvature,
                              const QuadratureRule& rule) {
    double s = 1.0 / std::sqrt(curvature);
    double root2s = std::sqrt(2.0) * s;
    Eigen::VectorXd expo(rule.order), ts(rule.order);
    double mx = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < rule.order; ++k) {
        double t = center + root2s * rule.nodes[k];
        ts[k] = t;
        expo[k] = rule.log_weights[k] + rule.nodes[k] * rule.nodes[k] + f(t);
        mx = std::max(mx, expo[k]);
    }
    double sum = 0.0, sum_t = 0.0, sum_tt = 0.0;
    for (int k = 0; k < rule.order; ++k) {
        double w = std::exp(expo[k] - mx);
        sum += w;
        sum_t += w * ts[k];
        sum_tt += w * ts[k] * ts[k];
    }
    ClusterQuad out;
    out.log_integral = std::log(sum) + mx + std::log(root2s);
    out.mean = sum_t / sum;
    out.variance = sum_tt / sum - out.mean * out.mean;
    return out;
}

ClusterQuad cluster_quadrature(const ModelSpec& model, const Eigen::VectorXd& beta,
                               const Dispersion& dispersion, const SeparableLayout& lay,
                               const Eigen::VectorXd& vhat, const Eigen::VectorXd& curv_diag,
                               Eigen::Index c, const QuadratureRule& rule) {
    ClusterIntegrand f;
    f.model = &model;
    f.rows = &lay.cluster_rows[static_cast<std::size_t>(c)];
    f.prec = lay.prec_diag[c];
    f.phi = model.family.dispersion_free() ? dispersion.get("phi") : 1.0;
    Eigen::Index nr = static_cast<Eigen::Index>(f.rows->size());
    f.eta0.resize(nr);
    f.zc.resize(nr);
    Eigen::VectorXd eta_fixed = model.designs.X.cols() > 0
                                    ? (model.designs.X * beta).eval()
                                    : Eigen::VectorXd::Zero(model.n());
    if (model.offset) eta_fixed += *model.offset;
    for (Eigen::Index j = 0; j < nr; ++j) {
        Eigen::Index i = (*f.rows)[static_cast<std::size_t>(j)];
        f.eta0[j] = eta_fixed[i];
        f.zc[j] = model.z_eff()(i, c);
    }
    return integrate_cluster(f, vhat[c], curv_diag[c], rule);
}

}  // namespace

namespace {

// 1 / sum_{j<n} htilde_j(x)^2 is the Gauss weight at a node x, with htilde
// the orthonormal Hermite polynomials for weight exp(-x^2).
double christoffel_log_weight(int n, double x) {
    double p_prev = 0.0;
    double p = std::pow(M_PI, -0.25);
    double sum = p * p;
    for (int j = 1; j < n; ++j) {
        double p_next = x * std::sqrt(2.0 / j) * p - std::sqrt((j - 1.0) / j) * p_prev;
        p_prev = p;
        p = p_next;
        sum += p * p;
    }
    return -std::log(sum);
}

}  // namespace

QuadratureRule QuadratureRule::gauss_hermite(int order) {
    if (order < 1) throw domain_error("quadrature order must be >= 1");
    QuadratureRule r;
    r.order = order;
    if (order == 1) {
        r.nodes = Eigen::VectorXd::Zero(1);
        r.weights = Eigen::VectorXd::Constant(1, std::sqrt(M_PI));
        r.log_weights = Eigen::VectorXd::Constant(1, 0.5 * std::log(M_PI));
        return r;
    }
    Eigen::MatrixXd j = Eigen::MatrixXd::Zero(order, order);
    for (int k = 1; k < order; ++k) {
        double b = std::sqrt(k / 2.0);
        j(k, k - 1) = b;
        j(k - 1, k) = b;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(j);
    r.nodes = es.eigenvalues();
    r.weights.resize(order);
    r.log_weights.resize(order);
    for (int k = 0; k < order; ++k) {
        r.log_weights[k] = christoffel_log_weight(order, r.nodes[k]);
        r.weights[k] = std::exp(r.log_weights[k]);
    }
    return r;
}

double quad_marginal(const ModelSpec& model, const Eigen::VectorXd& beta,
                     const Dispersion& dispersion, int order) {
    SeparableLayout lay = separate_clusters(model, dispersion);
    QuadratureRule rule = QuadratureRule::gauss_hermite(order);
    Eigen::VectorXd vhat = v_mode(model, beta, dispersion);
    ParamState st;
    st.beta = beta;
    st.v = vhat;
    st.dispersion = dispersion;
    Eigen::VectorXd curv = hess_h(model, st).h_vv.diagonal();

    double total = 0.0;
    for (Eigen::Index c = 0; c < model.q(); ++c)
        total += cluster_quadrature(model, beta, dispersion, lay, vhat, curv, c, rule).log_integral;
    double phi = model.family.dispersion_free() ? dispersion.get("phi") : 1.0;
    Eigen::VectorXd eta_fixed = model.designs.X.cols() > 0
                                    ? (model.designs.X * beta).eval()
                                    : Eigen::VectorXd::Zero(model.n());
    if (model.offset) eta_fixed += *model.offset;
    for (Eigen::Index i : lay.free_rows) total += row_loglik(model, i, eta_fixed[i], phi);
    return total;
}

PosteriorMoments quad_posterior_moments(const ModelSpec& model, const Eigen::VectorXd& beta,
                                        const Dispersion& dispersion, Eigen::Index cluster,
                                        int order) {
    SeparableLayout lay = separate_clusters(model, dispersion);
    if (cluster < 0 || cluster >= model.q()) throw domain_error("cluster index out of range");
    QuadratureRule rule = QuadratureRule::gauss_hermite(order);
    Eigen::VectorXd vhat = v_mode(model, beta, dispersion);
    ParamState st;
    st.beta = beta;
    st.v = vhat;
    st.dispersion = dispersion;
    Eigen::VectorXd curv = hess_h(model, st).h_vv.diagonal();
    ClusterQuad q = cluster_quadrature(model, beta, dispersion, lay, vhat, curv, cluster, rule);
    return {q.mean, q.variance};
}

BayarriRecord bayarri_closed_forms(double y, double theta) {
    if (y <= 0.0 || theta <= 0.0) throw domain_error("Bayarri model needs y > 0 and theta > 0");
    BayarriRecord r;
    r.m = std::log(theta) - 2.0 * std::log(theta + y);
    r.theta_hat = y;
    r.var_theta = 2.0 * y * y;
    r.u_hat = 2.0 / (theta + y);
    r.cond_var_u = 2.0 / ((theta + y) * (theta + y));
    r.u_hat_at_ml = 1.0 / y;
    r.eb_var = 1.0 / (2.0 * y * y);
    r.cmse = 1.0 / (y * y);
    r.hessian_theta_u << 1.0 / (theta * theta), 1.0, 1.0, (y + theta) * (y + theta) / 2.0;
    return r;
}

double BayarriModel::h(double theta, double v) const {
    return 2.0 * v + std::log(theta) - std::exp(v) * (theta + y);
}

Objective BayarriModel::v_objective(double theta) const {
    double yy = y;
    Objective obj;
    obj.value = [yy, theta](const Eigen::VectorXd& v) {
        return 2.0 * v[0] + std::log(theta) - std::exp(v[0]) * (theta + yy);
    };
    obj.gradient = [yy, theta](const Eigen::VectorXd& v) {
        Eigen::VectorXd g(1);
        g[0] = 2.0 - std::exp(v[0]) * (theta + yy);
        return g;
    };
    obj.neg_hessian = [yy, theta](const Eigen::VectorXd& v) {
        Eigen::MatrixXd d(1, 1);
        d(0, 0) = std::exp(v[0]) * (theta + yy);
        return d;
    };
    return obj;
}

HessianBlocks BayarriModel::hessian_theta_u(double theta, double u) const {
    // h(theta, u) = 2 log u + log theta - u (theta + y); negated curvature.
    HessianBlocks hb;
    hb.h_bb.resize(1, 1);
    hb.h_bv.resize(1, 1);
    hb.h_vv.resize(1, 1);
    hb.h_bb(0, 0) = 1.0 / (theta * theta);
    hb.h_bv(0, 0) = 1.0;
    hb.h_vv(0, 0) = 2.0 / (u * u);
    return hb;
}

PredictiveDist jeffreys_predictive(const Eigen::VectorXd& y, int v_max) {
    if (y.size() == 0) throw domain_error("count vector must be nonempty");
    double s = y.sum();
    double n = static_cast<double>(y.size());
    double r = s + 0.5;
    if (v_max < 0) v_max = default_v_max(y);
    // Negative binomial: gamma(r, rate n) posterior mixed over poisson.
    auto logw = [r, n](int v) {
        return std::lgamma(v + r) - std::lgamma(r) - std::lgamma(v + 1.0) +
               r * std::log(n / (n + 1.0)) - v * std::log(n + 1.0);
    };
    return predictive_from_log_weights(logw, v_max, PredictMethod::jeffreys);
}

}  // namespace oracle
}  // namespace hglm
