#pragma once

#include <Eigen/Core>
#include <optional>
#include <string>
#include <vector>

#include "hglm/family.hpp"
#include "hglm/state.hpp"
#include "hglm/structures.hpp"
#include "hglm/table.hpp"

namespace hglm {

// Design matrices: fixed effects X (n x p, full column rank), random-effect
// incidence Z (n x q0), and an optional loading factor L (q0 x k) so that the
// fitted random vector r has v = L r and var(v) = L Lambda L^t.
struct DesignSet {
    Eigen::MatrixXd X;
    Eigen::MatrixXd Z;
    std::optional<Eigen::MatrixXd> L;
};

enum class RandomStructure { iid, car, ar1, factor };

std::string random_structure_name(RandomStructure s);

// Distribution and precision family of the random effects. Normal only; the
// precision is rebuilt from the current dispersion components as the outer
// optimizer moves them. v enters the linear predictor (weak canonical scale).
struct RandomSpec {
    RandomStructure structure = RandomStructure::iid;
    Eigen::Index dim = 0;                      // effective random dimension k
    std::optional<NeighborhoodMatrix> car_q;   // car only
    bool rho_fixed = false;                    // ar1: pin rho (random walk when 1)
    double rho_fixed_value = 1.0;
    // Spectrum of Q, computed once at assembly: the CAR precision spectrum is
    // then (lambda q_i + 1 - lambda)/sigma2 analytically for any lambda, so
    // near-singular log-determinants stay exact.
    Eigen::MatrixXd car_q_eigvecs;
    Eigen::VectorXd car_q_eigvals;

    // Component names/domains/default values this structure contributes.
    std::vector<DispersionComponent> dispersion_template() const;
    PrecisionStructure precision(const Dispersion& d) const;
    void prepare();  // fills cached spectra; called by ModelSpec::assemble
};

// A validated HGLM: family, link, designs, random structure, optional offset.
// Immutable after construction and safe to share across threads.
struct ModelSpec {
    Family family;
    Link link;
    DesignSet designs;
    RandomSpec random;
    std::optional<Eigen::VectorXd> offset;
    Eigen::VectorXd y;

    std::vector<std::string> beta_names;
    std::vector<std::string> group_labels;  // labels for the q0 columns of Z

    Eigen::Index n() const { return designs.X.rows(); }
    Eigen::Index p() const { return designs.X.cols(); }
    // Effective random dimension (k when L is present, else Z's columns).
    Eigen::Index q() const { return z_eff_.cols(); }

    const Eigen::MatrixXd& z_eff() const { return z_eff_; }
    Eigen::VectorXd linear_predictor(const Eigen::VectorXd& beta, const Eigen::VectorXd& v) const;

    // Family + random-structure dispersion components at default values.
    Dispersion dispersion_template() const;
    ParamState blank_state() const;
    void check_state(const ParamState& s) const;

    // Validates dimensions, X rank, link admissibility; caches Z_eff.
    static ModelSpec assemble(Family family, Link link, DesignSet designs, RandomSpec random,
                              Eigen::VectorXd y, std::optional<Eigen::VectorXd> offset = {},
                              std::vector<std::string> beta_names = {},
                              std::vector<std::string> group_labels = {});

  private:
    Eigen::MatrixXd z_eff_;
};

// Model description for build_model: explicit column lists, no formula
// parsing. `random_params` carries structure-specific settings.
struct ModelConfig {
    std::string response;
    std::vector<std::string> covariates;
    bool intercept = true;
    std::string group;                  // grouping column (one random level per value)
    std::string family = "normal";
    std::string link = "identity";
    std::string trials;                 // binomial: column of trial counts
    std::string offset;                 // optional offset column
    RandomStructure structure = RandomStructure::iid;
    std::vector<std::pair<int, int>> car_edges;  // car: 1-based edges over group levels
    std::string item;                   // factor: item column
    std::vector<double> loadings;       // factor: alpha per item level (first-appearance order)
    std::optional<double> ar1_rho_fixed;
};

ModelSpec build_model(const DataTable& table, const ModelConfig& config);

struct MeanWeights {
    Eigen::VectorXd eta;  // unclamped linear predictor
    Eigen::VectorXd mu;
    Eigen::VectorXd w;    // working weights m (dmu/deta)^2 / (phi V(mu))
    Eigen::Index n_clamped = 0;
};

MeanWeights mean_and_weights(const ModelSpec& model, const ParamState& state);

}  // namespace hglm
