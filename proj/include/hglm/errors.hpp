#pragma once

#include <stdexcept>
#include <string>

namespace hglm {

// Bad model description or option values supplied by the caller.
struct config_error : std::runtime_error {
    explicit config_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Malformed or inconsistent input data (CSV contents, dimensions).
struct data_error : std::runtime_error {
    explicit data_error(const std::string& msg) : std::runtime_error(msg) {}
};

// A point outside the admissible domain of an operation.
struct domain_error : std::runtime_error {
    explicit domain_error(const std::string& msg) : std::runtime_error(msg) {}
};

// An iteration that failed to reach its tolerance.
struct convergence_error : std::runtime_error {
    convergence_error(const std::string& msg, double grad_norm, int iterations)
        : std::runtime_error(msg), grad_norm(grad_norm), iterations(iterations) {}
    double grad_norm;
    int iterations;
};

// A factorization or solve that broke down.
struct numerical_error : std::runtime_error {
    explicit numerical_error(const std::string& msg) : std::runtime_error(msg) {}
};

// Simulation replicate failure rate above the configured threshold.
struct simulation_error : std::runtime_error {
    explicit simulation_error(const std::string& msg) : std::runtime_error(msg) {}
};

// A model shape an operation does not support (e.g. non-separable quadrature).
struct unsupported_structure : std::runtime_error {
    explicit unsupported_structure(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace hglm
