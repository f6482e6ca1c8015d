#include "hglm/state.hpp"

#include <algorithm>
#include <cmath>

#include "hglm/errors.hpp"

namespace hglm {

bool Dispersion::has(const std::string& name) const {
    return std::any_of(components_.begin(), components_.end(),
                       [&](const DispersionComponent& c) { return c.name == name; });
}

double Dispersion::get(const std::string& name) const {
    for (const auto& c : components_)
        if (c.name == name) return c.value;
    throw config_error("no dispersion component named '" + name + "'");
}

void Dispersion::set(const std::string& name, double value) {
    for (auto& c : components_)
        if (c.name == name) {
            c.value = value;
            return;
        }
    throw config_error("no dispersion component named '" + name + "'");
}

void Dispersion::check_domains() const {
    for (const auto& c : components_) {
        switch (c.domain) {
            case Domain::positive:
                if (!(c.value > 0.0))
                    throw domain_error("dispersion component '" + c.name + "' must be positive");
                break;
            case Domain::unit_interval:
                if (!(c.value >= 0.0 && c.value < 1.0) && !(c.fixed && c.value == 1.0))
                    throw domain_error("dispersion component '" + c.name + "' must lie in [0, 1)");
                break;
            case Domain::correlation:
                if (!(c.value > -1.0 && c.value < 1.0) && !(c.fixed && c.value == 1.0))
                    throw domain_error("dispersion component '" + c.name + "' must lie in (-1, 1)");
                break;
        }
    }
}

double to_unconstrained(double value, Domain domain) {
    switch (domain) {
        case Domain::positive: return std::log(value);
        case Domain::unit_interval: return std::log(value / (1.0 - value));
        case Domain::correlation: return std::atanh(value);
    }
    return value;
}

double from_unconstrained(double t, Domain domain) {
    switch (domain) {
        case Domain::positive: return std::exp(std::min(t, 350.0));
        case Domain::unit_interval: return 1.0 / (1.0 + std::exp(-t));
        case Domain::correlation: return std::tanh(t);
    }
    return t;
}

}  // namespace hglm
