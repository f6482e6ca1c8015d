#include "hglm/predict.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <vector>

#include "hglm/errors.hpp"

namespace hglm {

namespace {

void check_counts(const Eigen::VectorXd& y) {
    if (y.size() == 0) throw domain_error("count vector must be nonempty");
    for (Eigen::Index i = 0; i < y.size(); ++i)
        if (y[i] < 0.0 || y[i] != std::floor(y[i]))
            throw domain_error("counts must be nonnegative integers");
}

double log_poisson_pmf(int k, double mean) {
    if (mean == 0.0) return k == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
    return k * std::log(mean) - mean - std::lgamma(k + 1.0);
}

}  // namespace

PredictiveDist predictive_from_log_weights(const std::function<double(int)>& logw, int v_max,
                                           PredictMethod method) {
    std::vector<double> lw;
    double best = -std::numeric_limits<double>::infinity();
    int v = 0;
    while (true) {
        double l = logw(v);
        lw.push_back(l);
        best = std::max(best, l);
        bool tail_done = v > v_max && (l == -std::numeric_limits<double>::infinity() ||
                                       l < best - 46.0);  // e^-46 ~ 1e-20
        if (tail_done || v > v_max + 10000) break;
        ++v;
    }
    double total = 0.0, kept = 0.0;
    for (int i = 0; i < static_cast<int>(lw.size()); ++i) {
        double w = std::exp(lw[static_cast<std::size_t>(i)] - best);
        total += w;
        if (i <= v_max) kept += w;
    }
    PredictiveDist d;
    d.method = method;
    d.truncation_mass = (total - kept) / total;
    d.support.resize(v_max + 1);
    d.mass.resize(v_max + 1);
    for (int i = 0; i <= v_max; ++i) {
        d.support[i] = i;
        d.mass[i] = std::exp(lw[static_cast<std::size_t>(i)] - best) / kept;
    }
    return d;
}

double PredictiveDist::mean() const {
    double m = 0.0;
    for (Eigen::Index i = 0; i < mass.size(); ++i) m += support[i] * mass[i];
    return m;
}

double PredictiveDist::variance() const {
    double m = mean(), s = 0.0;
    for (Eigen::Index i = 0; i < mass.size(); ++i)
        s += (support[i] - m) * (support[i] - m) * mass[i];
    return s;
}

int default_v_max(const Eigen::VectorXd& y) {
    double rate = y.mean() + 1.0;
    double tail = 1.0;  // P(V > m) for poisson(rate), by forward recursion
    double pmf = std::exp(-rate);
    tail -= pmf;
    int m = 0;
    while (tail >= 1e-10 && m < 100000) {
        ++m;
        pmf *= rate / m;
        tail -= pmf;
    }
    return m;
}

PredictiveDist plugin_predictive(const Eigen::VectorXd& y, int v_max) {
    check_counts(y);
    double theta = y.mean();
    if (v_max < 0) v_max = default_v_max(y);
    return predictive_from_log_weights([&](int v) { return log_poisson_pmf(v, theta); }, v_max,
                                       PredictMethod::plugin);
}

PredictiveDist profile_predictive(const Eigen::VectorXd& y, int v_max) {
    check_counts(y);
    double s = y.sum();
    double n = static_cast<double>(y.size());
    if (v_max < 0) v_max = default_v_max(y);
    // log f_{theta_hat(v)}(y, v) up to the constant -sum(lgamma(y_i + 1)).
    auto logw = [&](int v) {
        double theta = (s + v) / (n + 1.0);
        double t = s + v;
        double log_theta_term = t == 0.0 ? 0.0 : t * std::log(theta);
        return -(n + 1.0) * theta + log_theta_term - std::lgamma(v + 1.0);
    };
    return predictive_from_log_weights(logw, v_max, PredictMethod::profile);
}

double total_variation(const PredictiveDist& a, const PredictiveDist& b) {
    if (a.support.size() != b.support.size())
        throw domain_error("predictive supports differ in length");
    double tv = 0.0;
    for (Eigen::Index i = 0; i < a.mass.size(); ++i) tv += std::abs(a.mass[i] - b.mass[i]);
    return tv / 2.0;
}

}  // namespace hglm
