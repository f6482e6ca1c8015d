#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hglm/errors.hpp"
#include "hglm/hlik.hpp"
#include "hglm/model.hpp"
#include "hglm/oracle.hpp"
#include "hglm/rng.hpp"
#include "support.hpp"

using namespace hglm;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using testsupport::Fixture;

namespace {

// One observation, one random effect, normal/identity.
ModelSpec tiny_normal(double y) {
    Family fam;
    fam.kind = FamilyKind::normal;
    Link link;
    link.kind = LinkKind::identity;
    DesignSet d;
    d.X = MatrixXd::Ones(1, 1);
    d.Z = MatrixXd::Ones(1, 1);
    RandomSpec r;
    r.structure = RandomStructure::iid;
    r.dim = 1;
    VectorXd yy(1);
    yy << y;
    return ModelSpec::assemble(fam, link, std::move(d), std::move(r), yy);
}

ParamState random_state(const ModelSpec& model, PhiloxStream& rng, double scale = 0.5) {
    ParamState s = model.blank_state();
    for (Eigen::Index j = 0; j < s.beta.size(); ++j) s.beta[j] = scale * rng.normal();
    for (Eigen::Index j = 0; j < s.v.size(); ++j) s.v[j] = scale * rng.normal();
    return s;
}

void check_grad_fd(const ModelSpec& model, const ParamState& s, double rtol) {
    HGradient g = grad_h(model, s);
    double h = 1e-5;
    for (Eigen::Index j = 0; j < model.p(); ++j) {
        ParamState sp = s, sm = s;
        sp.beta[j] += h;
        sm.beta[j] -= h;
        double fd = (eval_h(model, sp) - eval_h(model, sm)) / (2 * h);
        CHECK(std::abs(fd - g.g_beta[j]) <= rtol * std::max(1.0, std::abs(g.g_beta[j])));
    }
    for (Eigen::Index j = 0; j < model.q(); ++j) {
        ParamState sp = s, sm = s;
        sp.v[j] += h;
        sm.v[j] -= h;
        double fd = (eval_h(model, sp) - eval_h(model, sm)) / (2 * h);
        CHECK(std::abs(fd - g.g_v[j]) <= rtol * std::max(1.0, std::abs(g.g_v[j])));
    }
}

void check_hess_fd(const ModelSpec& model, const ParamState& s, double rtol) {
    HessianBlocks hb = hess_h(model, s);
    double h = 1e-5;
    double scale = std::max({1.0, hb.h_bb.cwiseAbs().maxCoeff(), hb.h_vv.cwiseAbs().maxCoeff()});
    for (Eigen::Index j = 0; j < model.p(); ++j) {
        ParamState sp = s, sm = s;
        sp.beta[j] += h;
        sm.beta[j] -= h;
        HGradient gp = grad_h(model, sp), gm = grad_h(model, sm);
        VectorXd col_b = (gp.g_beta - gm.g_beta) / (2 * h);
        VectorXd col_v = (gp.g_v - gm.g_v) / (2 * h);
        CHECK((col_b + hb.h_bb.col(j)).cwiseAbs().maxCoeff() <= rtol * scale);
        CHECK((col_v + hb.h_bv.transpose().col(j)).cwiseAbs().maxCoeff() <= rtol * scale);
    }
    for (Eigen::Index j = 0; j < model.q(); ++j) {
        ParamState sp = s, sm = s;
        sp.v[j] += h;
        sm.v[j] -= h;
        HGradient gp = grad_h(model, sp), gm = grad_h(model, sm);
        VectorXd col_v = (gp.g_v - gm.g_v) / (2 * h);
        CHECK((col_v + hb.h_vv.col(j)).cwiseAbs().maxCoeff() <= rtol * scale);
    }
}

}  // namespace

TEST_CASE("eval_h closed forms") {
    SUBCASE("two standard normal log densities at zero") {
        ModelSpec m = tiny_normal(0.0);
        ParamState s = m.blank_state();
        CHECK(eval_h(m, s) == doctest::Approx(-std::log(2.0 * M_PI)).epsilon(1e-12));
    }
    SUBCASE("Bayarri h at y=1, theta=1, v=0 is -2") {
        oracle::BayarriModel bm{1.0};
        CHECK(bm.h(1.0, 0.0) == doctest::Approx(-2.0).epsilon(1e-14));
    }
    SUBCASE("decomposition: h minus conditional log density is the marginal, constant in v") {
        Fixture fx = testsupport::oneway_normal(4, 3, 0.4, 0.8, 1.3, 31);
        double phi = 0.8, lambda = 1.3;
        ParamState s = fx.model.blank_state();
        s.beta << 0.4;
        s.dispersion.set("phi", phi);
        s.dispersion.set("lambda", lambda);
        auto post = testsupport::normal_conditional(fx.model, s.beta, phi, lambda);
        double marg = testsupport::normal_marginal(fx.model, s.beta, phi, lambda);
        PhiloxStream rng(5, 0);
        for (int rep = 0; rep < 10; ++rep) {
            for (Eigen::Index j = 0; j < s.v.size(); ++j) s.v[j] = rng.normal();
            double diff = eval_h(fx.model, s) - testsupport::mvn_logpdf(s.v, post.mean, post.cov);
            CHECK(diff == doctest::Approx(marg).epsilon(1e-10));
        }
    }
}

TEST_CASE("grad_h") {
    SUBCASE("unit residual, zero prior pull") {
        ModelSpec m = tiny_normal(1.0);
        ParamState s = m.blank_state();
        HGradient g = grad_h(m, s);
        CHECK(g.g_beta[0] == doctest::Approx(1.0).epsilon(1e-14));
        CHECK(g.g_v[0] == doctest::Approx(1.0).epsilon(1e-14));
    }
    SUBCASE("stationary at the joint mode") {
        Fixture fx = testsupport::poisson_normal(5, 3, 0.5, 0.5, 17);
        ParamState s = fx.model.blank_state();
        s.dispersion.set("lambda", 0.5);
        ParamState mode = joint_mode(fx.model, s.dispersion);
        HGradient g = grad_h(fx.model, mode);
        CHECK(std::max(g.g_beta.cwiseAbs().maxCoeff(), g.g_v.cwiseAbs().maxCoeff()) < 1e-8);
    }
    SUBCASE("matches finite differences on random poisson states") {
        Fixture fx = testsupport::poisson_normal(4, 3, 0.2, 0.6, 23);
        PhiloxStream rng(3, 0);
        for (int rep = 0; rep < 5; ++rep) {
            ParamState s = random_state(fx.model, rng);
            s.dispersion.set("lambda", 0.6);
            check_grad_fd(fx.model, s, 1e-5);
        }
    }
}

TEST_CASE("gradient and hessian match finite differences, 20 random states per family") {
    PhiloxStream rng(101, 0);
    auto run = [&](Fixture& fx, const char* which) {
        INFO(which);
        for (int rep = 0; rep < 20; ++rep) {
            ParamState s = random_state(fx.model, rng);
            check_grad_fd(fx.model, s, 1e-4);
            check_hess_fd(fx.model, s, 1e-4);
        }
    };
    Fixture fn = testsupport::oneway_normal(3, 3, 0.1, 0.9, 1.1, 41);
    Fixture fp = testsupport::poisson_normal(3, 3, 0.3, 0.5, 42);
    Fixture fb = testsupport::bernoulli_groups(3, 4, 0.2, 0.7, 43);
    Fixture fm = testsupport::binomial_groups(3, 3, -0.1, 0.5, 7, 44);
    run(fn, "normal");
    run(fp, "poisson");
    run(fb, "bernoulli");
    run(fm, "binomial");
}

TEST_CASE("hess_h") {
    SUBCASE("Bayarri blocks match the printed display") {
        oracle::BayarriModel bm{1.0};
        double theta = 1.3;
        double u = 2.0 / (theta + bm.y);
        HessianBlocks hb = bm.hessian_theta_u(theta, u);
        CHECK(hb.h_bb(0, 0) == doctest::Approx(1.0 / (theta * theta)).epsilon(1e-12));
        CHECK(hb.h_bv(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(hb.h_vv(0, 0) ==
              doctest::Approx((bm.y + theta) * (bm.y + theta) / 2.0).epsilon(1e-12));
    }
    SUBCASE("gaussian hessian is constant in the state") {
        Fixture fx = testsupport::oneway_normal(3, 2, 0.0, 1.0, 1.0, 51);
        PhiloxStream rng(9, 0);
        ParamState s1 = random_state(fx.model, rng);
        ParamState s2 = random_state(fx.model, rng);
        HessianBlocks a = hess_h(fx.model, s1), b = hess_h(fx.model, s2);
        CHECK((a.h_bb - b.h_bb).cwiseAbs().maxCoeff() <= 1e-13);
        CHECK((a.h_bv - b.h_bv).cwiseAbs().maxCoeff() <= 1e-13);
        CHECK((a.h_vv - b.h_vv).cwiseAbs().maxCoeff() <= 1e-13);
    }
    SUBCASE("blocks are symmetric and h_vv is positive definite at the mode") {
        Fixture fx = testsupport::poisson_normal(4, 3, 0.3, 0.4, 52);
        ParamState s = fx.model.blank_state();
        s.dispersion.set("lambda", 0.4);
        ParamState mode = joint_mode(fx.model, s.dispersion);
        HessianBlocks hb = hess_h(fx.model, mode);
        CHECK((hb.h_bb - hb.h_bb.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
        CHECK((hb.h_vv - hb.h_vv.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
        Eigen::LLT<MatrixXd> llt(hb.h_vv);
        CHECK(llt.info() == Eigen::Success);
        MatrixXd full = hb.assembled();
        CHECK((full - full.transpose()).cwiseAbs().maxCoeff() <= 1e-10);
    }
}

TEST_CASE("v_mode") {
    SUBCASE("closed-form shrinkage in the one-way normal model") {
        Fixture fx = testsupport::oneway_normal(5, 4, 0.7, 0.9, 1.4, 61);
        double beta = 0.55, phi = 0.9, lambda = 1.4;
        Dispersion d = fx.model.dispersion_template();
        d.set("phi", phi);
        d.set("lambda", lambda);
        VectorXd b(1);
        b << beta;
        VectorXd vhat = v_mode(fx.model, b, d);
        int m = 4;
        for (int i = 0; i < 5; ++i) {
            double ybar = fx.model.y.segment(i * m, m).mean();
            double expect = (m * lambda / (m * lambda + phi)) * (ybar - beta);
            CHECK(vhat[i] == doctest::Approx(expect).epsilon(1e-9));
        }
    }
    SUBCASE("perfect fit keeps v at zero") {
        Fixture fx = testsupport::poisson_normal(3, 2, 0.0, 0.5, 62);
        ModelSpec m = fx.model;
        VectorXd b(1);
        b << 0.4;
        // rebuild response as exactly g^{-1}(x beta)
        VectorXd y = VectorXd::Constant(m.n(), std::exp(0.4));
        DesignSet d2;
        d2.X = m.designs.X;
        d2.Z = m.designs.Z;
        RandomSpec r2 = m.random;
        ModelSpec m2 = ModelSpec::assemble(m.family, m.link, std::move(d2), std::move(r2), y);
        Dispersion d = m2.dispersion_template();
        d.set("lambda", 0.8);
        VectorXd vhat = v_mode(m2, b, d);
        CHECK(vhat.cwiseAbs().maxCoeff() <= 1e-9);
    }
    SUBCASE("Bayarri mode satisfies u = 2/(theta+y)") {
        oracle::BayarriModel bm{1.0};
        for (double theta : {0.5, 1.0, 2.7}) {
            NewtonOptions opts;
            NewtonResult res = newton_maximize(bm.v_objective(theta), VectorXd::Zero(1), opts);
            CHECK(std::exp(res.x[0]) == doctest::Approx(2.0 / (theta + bm.y)).epsilon(1e-10));
        }
    }
    SUBCASE("gradient tolerance met at return") {
        Fixture fx = testsupport::bernoulli_groups(4, 5, 0.3, 0.8, 63);
        Dispersion d = fx.model.dispersion_template();
        d.set("lambda", 0.8);
        VectorXd b(1);
        b << 0.2;
        VectorXd vhat = v_mode(fx.model, b, d);
        ParamState s = fx.model.blank_state();
        s.beta = b;
        s.v = vhat;
        s.dispersion = d;
        CHECK(grad_h(fx.model, s).g_v.cwiseAbs().maxCoeff() < 1e-8);
    }
}

TEST_CASE("joint_mode") {
    SUBCASE("one Newton step on a quadratic objective") {
        Fixture fx = testsupport::oneway_normal(4, 3, 0.5, 1.0, 1.0, 71);
        Dispersion d = fx.model.dispersion_template();
        PhiloxStream rng(13, 0);
        for (int rep = 0; rep < 3; ++rep) {
            ParamState init = random_state(fx.model, rng, 2.0);
            init.dispersion = d;
            NewtonResult info;
            joint_mode(fx.model, d, init, NewtonOptions{}, &info);
            CHECK(info.iterations == 1);
        }
    }
    SUBCASE("balanced one-way beta is the grand mean") {
        Fixture fx = testsupport::oneway_normal(6, 4, 1.2, 0.7, 0.9, 72);
        Dispersion d = fx.model.dispersion_template();
        d.set("phi", 0.7);
        d.set("lambda", 0.9);
        ParamState mode = joint_mode(fx.model, d);
        CHECK(mode.beta[0] == doctest::Approx(fx.model.y.mean()).epsilon(1e-10));
    }
    SUBCASE("vanishing random effect matches the fixed-effect GLM") {
        VectorXd cov(12);
        PhiloxStream rng(14, 0);
        for (int i = 0; i < 12; ++i) cov[i] = rng.normal();
        Fixture fx = testsupport::poisson_normal(4, 3, 0.5, 0.3, 73, &cov, 0.4);
        Dispersion d = fx.model.dispersion_template();
        d.set("lambda", 1e-10);
        ParamState mode = joint_mode(fx.model, d);
        VectorXd oracle_beta = testsupport::irls_glm(fx.model);
        CHECK((mode.beta - oracle_beta).cwiseAbs().maxCoeff() < 1e-4);
    }
    SUBCASE("h never decreases across accepted steps") {
        Fixture fx = testsupport::bernoulli_groups(5, 6, 0.4, 1.0, 74);
        Dispersion d = fx.model.dispersion_template();
        d.set("lambda", 1.0);
        ParamState init = fx.model.blank_state();
        init.beta << 3.0;  // far start
        init.v.setConstant(-2.0);
        init.dispersion = d;
        NewtonResult info;
        joint_mode(fx.model, d, init, NewtonOptions{}, &info);
        for (std::size_t i = 1; i < info.value_trace.size(); ++i)
            CHECK(info.value_trace[i] >= info.value_trace[i - 1]);
    }
    SUBCASE("permuting rows leaves estimates unchanged") {
        Fixture fx = testsupport::poisson_normal(4, 3, 0.4, 0.5, 75);
        Dispersion d = fx.model.dispersion_template();
        d.set("lambda", 0.5);
        ParamState mode = joint_mode(fx.model, d);

        // reverse the rows
        Eigen::Index n = fx.model.n();
        MatrixXd x(n, 1), z(n, fx.model.q());
        VectorXd y(n);
        for (Eigen::Index i = 0; i < n; ++i) {
            x.row(i) = fx.model.designs.X.row(n - 1 - i);
            z.row(i) = fx.model.designs.Z.row(n - 1 - i);
            y[i] = fx.model.y[n - 1 - i];
        }
        DesignSet ds;
        ds.X = x;
        ds.Z = z;
        RandomSpec rs = fx.model.random;
        ModelSpec perm = ModelSpec::assemble(fx.model.family, fx.model.link, std::move(ds),
                                             std::move(rs), y);
        ParamState mode2 = joint_mode(perm, d);
        CHECK((mode.beta - mode2.beta).cwiseAbs().maxCoeff() <= 1e-9);
        CHECK((mode.v - mode2.v).cwiseAbs().maxCoeff() <= 1e-9);
    }
}

TEST_CASE("singular precision (random walk)") {
    // AR(1) with rho pinned to 1: precision is the differencing matrix with
    // the constant vector as null space.
    int n = 6;
    PhiloxStream rng(81, 0);
    VectorXd y(n);
    double level = 0.3;
    for (int i = 0; i < n; ++i) {
        level += 0.4 * rng.normal();
        y[i] = level + 0.5 * rng.normal();
    }
    Family fam;
    fam.kind = FamilyKind::normal;
    Link link;
    link.kind = LinkKind::identity;
    DesignSet d;
    d.X = MatrixXd::Ones(n, 1);
    d.Z = MatrixXd::Identity(n, n);
    RandomSpec r;
    r.structure = RandomStructure::ar1;
    r.dim = n;
    r.rho_fixed = true;
    r.rho_fixed_value = 1.0;
    ModelSpec model = ModelSpec::assemble(fam, link, std::move(d), std::move(r), y);

    ParamState s = model.blank_state();
    SUBCASE("v off the row space is a domain error") {
        s.v.setConstant(0.5);  // pure null-space direction
        CHECK_THROWS_AS(eval_h(model, s), domain_error);
    }
    SUBCASE("v in the row space evaluates, and the generalized logdet is used") {
        s.v.setZero();
        double h0 = eval_h(model, s);
        CHECK(std::isfinite(h0));
    }
    SUBCASE("v_mode stays in the row space with projected gradient below tolerance") {
        Dispersion disp = model.dispersion_template();
        disp.set("lambda", 0.16);
        VectorXd b(1);
        b << y.mean();
        VectorXd vhat = v_mode(model, b, disp);
        CHECK(std::abs(vhat.sum()) <= 1e-9 * (1.0 + vhat.cwiseAbs().maxCoeff()));
        ParamState st = model.blank_state();
        st.beta = b;
        st.v = vhat;
        st.dispersion = disp;
        VectorXd g = grad_h(model, st).g_v;
        // project out the null direction (the constant vector)
        VectorXd proj = g.array() - g.mean();
        CHECK(proj.cwiseAbs().maxCoeff() < 1e-8);
    }
    SUBCASE("joint mode solves the constrained system") {
        Dispersion disp = model.dispersion_template();
        disp.set("lambda", 0.16);
        ParamState mode = joint_mode(model, disp);
        CHECK(std::abs(mode.v.sum()) <= 1e-9 * (1.0 + mode.v.cwiseAbs().maxCoeff()));
    }
}
