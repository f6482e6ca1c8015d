#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "hglm/errors.hpp"
#include "hglm/oracle.hpp"
#include "hglm/predict.hpp"

using namespace hglm;
using Eigen::VectorXd;

namespace {
VectorXd seizure_counts() {
    VectorXd y(5);
    y << 3, 2, 5, 0, 4;
    return y;
}
}  // namespace

TEST_CASE("plug-in predictive") {
    VectorXd y = seizure_counts();
    auto d = plugin_predictive(y);
    SUBCASE("rate estimate and pmf values") {
        CHECK(y.mean() == 2.8);  // exact in binary arithmetic: 14 / 5
        for (int i = 0; i <= 15; ++i) {
            double expect = std::exp(-2.8 + i * std::log(2.8) - std::lgamma(i + 1.0));
            CHECK(std::abs(d.mass[i] - expect) <= 1e-12);
        }
    }
    SUBCASE("proper after renormalization, truncation reported") {
        CHECK(std::abs(d.mass.sum() - 1.0) <= 1e-12);
        CHECK(d.truncation_mass < 1e-8);
    }
    SUBCASE("all-zero counts degenerate at zero") {
        VectorXd z = VectorXd::Zero(3);
        auto dz = plugin_predictive(z);
        CHECK(dz.mass[0] == doctest::Approx(1.0));
        CHECK(dz.mean() == doctest::Approx(0.0));
    }
    SUBCASE("bad input rejected") {
        CHECK_THROWS_AS(plugin_predictive(VectorXd()), domain_error);
        VectorXd neg(2);
        neg << 1, -2;
        CHECK_THROWS_AS(plugin_predictive(neg), domain_error);
        VectorXd fr(2);
        fr << 1, 2.5;
        CHECK_THROWS_AS(profile_predictive(fr), domain_error);
    }
}

TEST_CASE("profile predictive") {
    VectorXd y = seizure_counts();
    auto prof = profile_predictive(y);
    auto plug = plugin_predictive(y);

    SUBCASE("matches the normalized profile weights computed directly") {
        // w_v = f_{theta_hat(v)}(y, v) with theta_hat(v) = (14 + v) / 6
        int vmax = prof.support.size() - 1;
        std::vector<double> w(vmax + 1);
        double total = 0.0;
        for (int v = 0; v <= vmax; ++v) {
            double theta = (14.0 + v) / 6.0;
            w[v] = std::exp(-6.0 * theta + (14.0 + v) * std::log(theta) - std::lgamma(v + 1.0));
            total += w[v];
        }
        // direct normalization over the kept support differs from the
        // library's (which accounts for the tail) by at most the truncation
        for (int v = 0; v <= vmax; ++v)
            CHECK(prof.mass[v] == doctest::Approx(w[v] / total).epsilon(1e-8));
        CHECK((14.0 + 4.0) / 6.0 == 3.0);  // theta_hat at v = 4
    }
    SUBCASE("proper and heavier-tailed than plug-in") {
        CHECK(std::abs(prof.mass.sum() - 1.0) <= 1e-12);
        CHECK(prof.variance() > plug.variance());
        CHECK(prof.truncation_mass < 1e-8);
    }
    SUBCASE("depends on y only through sum and n") {
        VectorXd perm(5);
        perm << 0, 5, 4, 3, 2;
        auto prof2 = profile_predictive(perm);
        CHECK((prof.mass - prof2.mass).cwiseAbs().maxCoeff() == 0.0);
        VectorXd same_sum(5);
        same_sum << 14, 0, 0, 0, 0;
        auto prof3 = profile_predictive(same_sum);
        CHECK((prof.mass - prof3.mass).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("profile and plug-in converge in total variation as n grows") {
    double prev = 1.0;
    for (int n : {5, 50, 500, 5000}) {
        VectorXd y = VectorXd::Constant(n, 3.0);
        int vmax = 40;
        auto prof = profile_predictive(y, vmax);
        auto plug = plugin_predictive(y, vmax);
        double tv = total_variation(prof, plug);
        CHECK(tv < prev);
        prev = tv;
    }
    CHECK(prev < 0.01);  // at n = 5000 already below 1%

    VectorXd big = VectorXd::Constant(10000, 3.0);
    CHECK(total_variation(profile_predictive(big, 40), plugin_predictive(big, 40)) < 0.01);
}

TEST_CASE("explicit v_max truncation is honored and reported") {
    VectorXd y = seizure_counts();
    auto d = plugin_predictive(y, 3);
    CHECK(d.support.size() == 4);
    CHECK(std::abs(d.mass.sum() - 1.0) <= 1e-12);
    // poisson(2.8) has sizable mass beyond 3
    CHECK(d.truncation_mass > 0.3);
    CHECK(d.truncation_mass < 0.6);
}
