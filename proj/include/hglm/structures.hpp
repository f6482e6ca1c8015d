#pragma once

#include <Eigen/Core>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace hglm {

// Symmetric positive-semidefinite precision matrix with its rank, null-space
// and row-space bases, and generalized log-determinant (product of nonzero
// eigenvalues). Constructions are self-checking: the rank is computed from
// the spectrum and the bases come from the same eigendecomposition.
struct PrecisionStructure {
    Eigen::MatrixXd matrix;
    Eigen::Index rank = 0;
    Eigen::MatrixXd null_basis;   // q x (q - rank), orthonormal
    Eigen::MatrixXd range_basis;  // q x rank, orthonormal
    double glogdet = 0.0;         // sum of log positive eigenvalues
    std::map<std::string, double> params;

    Eigen::Index dim() const { return matrix.rows(); }
    bool full_rank() const { return rank == dim(); }

    // Eigendecomposes, verifies PSD-ness (eigenvalues >= -tol_rel * max), and
    // fills rank/bases/glogdet. Relative eigenvalue tolerance 1e-10.
    static PrecisionStructure from_matrix(Eigen::MatrixXd m,
                                          std::map<std::string, double> params = {},
                                          double tol_rel = 1e-10);

    // Same contract, but from a known spectrum (ascending eigenvalues with
    // their orthonormal vectors). Keeps tiny eigenvalues exact where the
    // caller can compute them analytically, e.g. lambda q_i + (1 - lambda).
    static PrecisionStructure from_spectrum(Eigen::MatrixXd m, const Eigen::MatrixXd& eigvecs,
                                            const Eigen::VectorXd& eigvals,
                                            std::map<std::string, double> params = {},
                                            double tol_rel = 1e-10);
};

// Q with diagonal = number of neighbors, off-diagonal -1 for neighbors and 0
// otherwise; rows sum to zero.
struct NeighborhoodMatrix {
    Eigen::MatrixXd q_matrix;
    Eigen::Index n_regions() const { return q_matrix.rows(); }
};

// Edges are 1-based region pairs; duplicates collapse, self-loops rejected.
NeighborhoodMatrix neighborhood_from_adjacency(const std::vector<std::pair<int, int>>& edges,
                                               int n_regions);

// Rook-adjacency lattice of rows x cols regions, numbered row-major, 1-based.
std::vector<std::pair<int, int>> lattice_edges(int rows, int cols);

// CAR precision D / sigma2 with D = lambda Q + (1 - lambda) I. Full rank for
// lambda < 1; intrinsic CAR (lambda = 1) on a connected graph has rank q-1
// with the constant vector as null basis.
PrecisionStructure car_precision(const NeighborhoodMatrix& q, double lambda, double sigma2);

// Precision of the AR(1) process v_t = rho v_{t-1} + r_t, var(r_t) = lambda,
// with stationary start v_1 ~ N(0, lambda / (1 - rho^2)). rho = 1 gives the
// random-walk (first-difference) precision of rank n-1.
PrecisionStructure ar1_precision(Eigen::Index n, double rho, double lambda);

// Rank-1 loading covariance lambda * alpha alpha^t and the loading column L
// so that v = L r with r ~ N(0, lambda).
struct FactorLoading {
    Eigen::MatrixXd covariance;
    Eigen::VectorXd loading;  // L column, equals alpha
};
FactorLoading factor_loading_cov(const Eigen::VectorXd& alpha, double lambda);

}  // namespace hglm
