#pragma once

#include <Eigen/Core>
#include <functional>
#include <string>

namespace hglm {

enum class PredictMethod { plugin, profile, jeffreys };

// Probability mass function over future counts 0..v_max, renormalized after
// truncation; the mass cut off by the truncation is reported.
struct PredictiveDist {
    Eigen::VectorXi support;
    Eigen::VectorXd mass;
    PredictMethod method = PredictMethod::plugin;
    double truncation_mass = 0.0;

    double mean() const;
    double variance() const;
};

// Default truncation point: smallest m with the upper tail of
// poisson(mean(y) + 1) below 1e-10, covering the profile method's heavier
// tail. Always reported through truncation_mass.
int default_v_max(const Eigen::VectorXd& y);

// Plug-in predictive: poisson pmf at theta_hat = mean(y).
PredictiveDist plugin_predictive(const Eigen::VectorXd& y, int v_max = -1);

// Normalized profile likelihood: the joint poisson likelihood of (y, v)
// evaluated at theta_hat(v) = (sum(y) + v) / (n + 1), normalized over v.
PredictiveDist profile_predictive(const Eigen::VectorXd& y, int v_max = -1);

// Total variation distance between two pmfs on the same support length.
double total_variation(const PredictiveDist& a, const PredictiveDist& b);

// Builds a truncated, renormalized pmf from unnormalized log-weights defined
// on all v >= 0; the internal support extends past v_max until the weights
// become negligible so truncation_mass can be reported.
PredictiveDist predictive_from_log_weights(const std::function<double(int)>& logw, int v_max,
                                           PredictMethod method);

}  // namespace hglm
