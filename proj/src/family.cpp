#include "hglm/family.hpp"

#include <algorithm>
#include <cmath>

#include "hglm/errors.hpp"

namespace hglm {

std::string family_name(FamilyKind k) {
    switch (k) {
        case FamilyKind::normal: return "normal";
        case FamilyKind::poisson: return "poisson";
        case FamilyKind::bernoulli: return "bernoulli";
        case FamilyKind::binomial: return "binomial";
    }
    return "?";
}

std::string link_name(LinkKind k) {
    switch (k) {
        case LinkKind::identity: return "identity";
        case LinkKind::log_link: return "log";
        case LinkKind::logit: return "logit";
    }
    return "?";
}

FamilyKind family_from_name(const std::string& name) {
    if (name == "normal" || name == "gaussian") return FamilyKind::normal;
    if (name == "poisson") return FamilyKind::poisson;
    if (name == "bernoulli") return FamilyKind::bernoulli;
    if (name == "binomial") return FamilyKind::binomial;
    throw config_error("unknown family '" + name + "'");
}

LinkKind link_from_name(const std::string& name) {
    if (name == "identity") return LinkKind::identity;
    if (name == "log") return LinkKind::log_link;
    if (name == "logit") return LinkKind::logit;
    throw config_error("unknown link '" + name + "'");
}

double Family::variance(double mu) const {
    switch (kind) {
        case FamilyKind::normal: return 1.0;
        case FamilyKind::poisson: return mu;
        case FamilyKind::bernoulli:
        case FamilyKind::binomial: return mu * (1.0 - mu);
    }
    return 1.0;
}

double Link::clamp_eta(double eta) const {
    if (!clamps()) return eta;
    return std::clamp(eta, -clamp_bound, clamp_bound);
}

double Link::inverse(double eta) const {
    eta = clamp_eta(eta);
    switch (kind) {
        case LinkKind::identity: return eta;
        case LinkKind::log_link: return std::exp(eta);
        case LinkKind::logit: return 1.0 / (1.0 + std::exp(-eta));
    }
    return eta;
}

double Link::dmu_deta(double eta) const {
    // The clamped composition is flat outside the bounds; its derivative is
    // zero there, which keeps gradients consistent with eval points.
    if (clamps() && std::abs(eta) > clamp_bound) return 0.0;
    eta = clamp_eta(eta);
    switch (kind) {
        case LinkKind::identity: return 1.0;
        case LinkKind::log_link: return std::exp(eta);
        case LinkKind::logit: {
            double mu = 1.0 / (1.0 + std::exp(-eta));
            return mu * (1.0 - mu);
        }
    }
    return 1.0;
}

double Link::forward(double mu) const {
    switch (kind) {
        case LinkKind::identity: return mu;
        case LinkKind::log_link: return std::log(mu);
        case LinkKind::logit: return std::log(mu / (1.0 - mu));
    }
    return mu;
}

bool link_admissible(FamilyKind family, LinkKind link) {
    switch (family) {
        case FamilyKind::normal: return link == LinkKind::identity;
        case FamilyKind::poisson: return link == LinkKind::log_link;
        case FamilyKind::bernoulli:
        case FamilyKind::binomial: return link == LinkKind::logit;
    }
    return false;
}

}  // namespace hglm
