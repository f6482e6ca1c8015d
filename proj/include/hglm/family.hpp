#pragma once

#include <Eigen/Core>
#include <string>

namespace hglm {

enum class FamilyKind { normal, poisson, bernoulli, binomial };
enum class LinkKind { identity, log_link, logit };

std::string family_name(FamilyKind k);
std::string link_name(LinkKind k);
FamilyKind family_from_name(const std::string& name);
LinkKind link_from_name(const std::string& name);

// Response family of the conditional GLM. Binomial rows carry explicit trial
// counts; bernoulli is binomial with one trial. The dispersion phi is fixed
// at 1 except for the normal family.
struct Family {
    FamilyKind kind = FamilyKind::normal;
    Eigen::VectorXd trials;  // binomial only; empty otherwise

    // Variance function V(mu) on the per-trial scale.
    double variance(double mu) const;
    bool dispersion_free() const { return kind == FamilyKind::normal; }
    // Trials for row i (1 except binomial).
    double trials_at(Eigen::Index i) const {
        return kind == FamilyKind::binomial ? trials[i] : 1.0;
    }
};

// Monotone link g with eta = g(mu). Linear predictors are clamped to
// [-30, 30] before inversion for log/logit to avoid overflow; the number of
// clamped rows is surfaced through mean_and_weights diagnostics.
struct Link {
    LinkKind kind = LinkKind::identity;

    static constexpr double clamp_bound = 30.0;

    bool clamps() const { return kind != LinkKind::identity; }
    double clamp_eta(double eta) const;
    double inverse(double eta) const;        // mu = g^{-1}(clamped eta)
    double dmu_deta(double eta) const;       // derivative at the clamped eta
    double forward(double mu) const;         // g(mu)
};

// The admissible (canonical) pairs: normal/identity, poisson/log,
// bernoulli|binomial/logit.
bool link_admissible(FamilyKind family, LinkKind link);

}  // namespace hglm
