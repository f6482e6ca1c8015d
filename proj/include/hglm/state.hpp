#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

namespace hglm {

// Domain of a dispersion component, fixing the unconstrained transform used
// by the outer optimizer: positive -> log, unit_interval [0,1) -> logit,
// correlation (-1,1) -> atanh.
enum class Domain { positive, unit_interval, correlation };

struct DispersionComponent {
    std::string name;
    double value = 1.0;
    Domain domain = Domain::positive;
    bool fixed = false;     // never moved by the fitter (e.g. rho pinned to 1)
    bool boundary = false;  // collapsed to the domain edge during fitting
};

class Dispersion {
  public:
    Dispersion() = default;
    explicit Dispersion(std::vector<DispersionComponent> components)
        : components_(std::move(components)) {}

    Eigen::Index size() const { return static_cast<Eigen::Index>(components_.size()); }
    const DispersionComponent& operator[](Eigen::Index i) const {
        return components_[static_cast<std::size_t>(i)];
    }
    DispersionComponent& operator[](Eigen::Index i) {
        return components_[static_cast<std::size_t>(i)];
    }
    const std::vector<DispersionComponent>& components() const { return components_; }

    bool has(const std::string& name) const;
    double get(const std::string& name) const;
    void set(const std::string& name, double value);

    // Validates all components against their domains.
    void check_domains() const;

  private:
    std::vector<DispersionComponent> components_;
};

double to_unconstrained(double value, Domain domain);
double from_unconstrained(double t, Domain domain);

// Fixed effects, random effects on the linear-predictor scale, and named
// dispersion components for one model.
struct ParamState {
    Eigen::VectorXd beta;
    Eigen::VectorXd v;
    Dispersion dispersion;
};

}  // namespace hglm
