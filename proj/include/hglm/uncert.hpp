#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "hglm/fit.hpp"
#include "hglm/hlik.hpp"
#include "hglm/model.hpp"
#include "hglm/structures.hpp"

namespace hglm {

// Random-effect variances: the naive EB diagonal from inverting h_vv alone,
// the h-likelihood diagonal from the v-block of the full joint Hessian
// inverse, and their difference (the inflation from estimating beta). The
// full inverse is formed by block elimination on the small beta block, so
// hlik_var_i = eb_var_i + a nonnegative quadratic form.
struct VarDecomp {
    Eigen::VectorXd eb_var;
    Eigen::VectorXd hlik_var;
    Eigen::VectorXd inflation;
};

VarDecomp var_decomp(const HessianBlocks& blocks);
VarDecomp var_decomp(const ModelSpec& model, const FitResult& fit);

enum class VarKind { eb, hlik };

struct Intervals {
    Eigen::VectorXd center;
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;
    double level = 0.95;
    VarKind kind = VarKind::hlik;
};

Intervals wald_intervals(const VarDecomp& decomp, const FitResult& fit, double level,
                         VarKind kind = VarKind::hlik);

// Standard normal quantile (Wichura's AS 241, double precision).
double normal_quantile(double p);

// --- coverage simulation ---------------------------------------------------

struct SimTruth {
    double beta = -4.920;
    double sigma2 = 2.0;
    double lambda = 0.62;
};

// Replicate fits declare convergence at tolerances far below the statistical
// precision of 20-region data but loose enough to be attainable when the CAR
// lambda pins at its near-singular edge (where the evaluation noise of the
// restricted likelihood limits parameter stability to ~1e-5).
FitOptions sim_fit_options();

struct SimConfig {
    NeighborhoodMatrix adjacency;
    Eigen::VectorXd populations;
    SimTruth truth;
    int n_sims = 200;
    std::uint64_t seed = 1;
    int n_bins = 4;
    double level = 0.95;
    bool oracle_mode = false;    // plug in the truth instead of fitting
    bool allow_partial = false;  // return instead of throwing above the failure cap
    double max_failure_fraction = 0.05;
    int threads = 0;  // 0 = hardware concurrency
    FitOptions fit_options = sim_fit_options();
};

struct CoverageBin {
    double n_lo = 0.0, n_hi = 0.0;  // population range of the bin
    long regions = 0;
    long eb_hits = 0, hlik_hits = 0, total = 0;

    double eb_coverage() const { return total > 0 ? double(eb_hits) / double(total) : 0.0; }
    double hlik_coverage() const { return total > 0 ? double(hlik_hits) / double(total) : 0.0; }
};

struct CoverageReport {
    std::vector<CoverageBin> bins;
    int n_sims = 0;
    int failures = 0;
    long schur_violations = 0;  // replicates with any hlik_var < eb_var - 1e-12
    std::uint64_t seed = 0;
    double level = 0.95;
    int n_regions = 0;
    bool failure_cap_exceeded = false;
};

// Per replicate r (counter-based stream r of the seed): draw v ~ N(0,
// sigma2 D^{-1}) with D = lambda Q + (1 - lambda) I, draw poisson counts with
// offset log(n_i) and mean n_i exp(beta + v_i), fit the CAR model, form both
// interval kinds, and record coverage of the true v_i binned by population
// size. Fully reproducible from the seed regardless of thread count.
CoverageReport coverage_sim(const SimConfig& config);

Eigen::VectorXd log_spaced_populations(int n, double lo, double hi);
NeighborhoodMatrix random_connected_graph(int n_regions, int extra_edges, std::uint64_t seed);

}  // namespace hglm
