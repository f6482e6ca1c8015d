#include "hglm/structures.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <set>

#include "hglm/errors.hpp"

namespace hglm {

PrecisionStructure PrecisionStructure::from_matrix(Eigen::MatrixXd m,
                                                   std::map<std::string, double> params,
                                                   double tol_rel) {
    if (m.rows() != m.cols()) throw domain_error("precision matrix must be square");
    double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
    double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
    if (asym > 1e-12 * scale)
        throw domain_error("precision matrix is not symmetric (max asymmetry " + std::to_string(asym) + ")");
    m = ((m + m.transpose()) / 2.0).eval();

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    return from_spectrum(std::move(m), es.eigenvectors(), es.eigenvalues(), std::move(params),
                         tol_rel);
}

PrecisionStructure PrecisionStructure::from_spectrum(Eigen::MatrixXd m,
                                                     const Eigen::MatrixXd& eigvecs,
                                                     const Eigen::VectorXd& ev,
                                                     std::map<std::string, double> params,
                                                     double tol_rel) {
    double max_ev = std::max(ev.maxCoeff(), 0.0);
    double tol = tol_rel * std::max(max_ev, 1e-300);
    if (ev.minCoeff() < -tol)
        throw domain_error("precision matrix has negative eigenvalue " + std::to_string(ev.minCoeff()));

    PrecisionStructure p;
    p.matrix = std::move(m);
    p.params = std::move(params);
    Eigen::Index q = p.matrix.rows();
    Eigen::Index r = 0;
    for (Eigen::Index i = 0; i < q; ++i)
        if (ev[i] > tol) ++r;
    p.rank = r;
    p.null_basis = eigvecs.leftCols(q - r);
    p.range_basis = eigvecs.rightCols(r);
    p.glogdet = 0.0;
    for (Eigen::Index i = q - r; i < q; ++i) p.glogdet += std::log(ev[i]);
    return p;
}

NeighborhoodMatrix neighborhood_from_adjacency(const std::vector<std::pair<int, int>>& edges,
                                               int n_regions) {
    if (n_regions < 1) throw domain_error("need at least one region");
    std::set<std::pair<int, int>> unique_edges;
    for (auto [a, b] : edges) {
        if (a == b) throw domain_error("self-loop on region " + std::to_string(a));
        if (a < 1 || a > n_regions || b < 1 || b > n_regions)
            throw domain_error("edge (" + std::to_string(a) + "," + std::to_string(b) +
                               ") references a region outside 1.." + std::to_string(n_regions));
        unique_edges.insert({std::min(a, b), std::max(a, b)});
    }
    NeighborhoodMatrix nm;
    nm.q_matrix = Eigen::MatrixXd::Zero(n_regions, n_regions);
    for (auto [a, b] : unique_edges) {
        nm.q_matrix(a - 1, b - 1) = -1.0;
        nm.q_matrix(b - 1, a - 1) = -1.0;
        nm.q_matrix(a - 1, a - 1) += 1.0;
        nm.q_matrix(b - 1, b - 1) += 1.0;
    }
    return nm;
}

std::vector<std::pair<int, int>> lattice_edges(int rows, int cols) {
    if (rows < 1 || cols < 1) throw domain_error("lattice needs positive dimensions");
    std::vector<std::pair<int, int>> edges;
    auto id = [cols](int r, int c) { return r * cols + c + 1; };
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) {
            if (c + 1 < cols) edges.emplace_back(id(r, c), id(r, c + 1));
            if (r + 1 < rows) edges.emplace_back(id(r, c), id(r + 1, c));
        }
    return edges;
}

PrecisionStructure car_precision(const NeighborhoodMatrix& q, double lambda, double sigma2) {
    if (lambda < 0.0 || lambda > 1.0) throw domain_error("CAR lambda must be in [0, 1]");
    if (sigma2 <= 0.0) throw domain_error("sigma2 must be positive");
    Eigen::Index n = q.n_regions();
    Eigen::MatrixXd d = lambda * q.q_matrix + (1.0 - lambda) * Eigen::MatrixXd::Identity(n, n);
    return PrecisionStructure::from_matrix(d / sigma2, {{"lambda", lambda}, {"sigma2", sigma2}});
}

PrecisionStructure ar1_precision(Eigen::Index n, double rho, double lambda) {
    if (n < 2) throw domain_error("AR(1) needs length >= 2");
    if (rho <= -1.0 || rho > 1.0) throw domain_error("AR rho must be in (-1, 1]");
    if (lambda <= 0.0) throw domain_error("lambda must be positive");
    Eigen::MatrixXd t = Eigen::MatrixXd::Zero(n, n);
    if (rho == 1.0) {
        // Random walk: precision of first differences, free level.
        for (Eigen::Index i = 0; i + 1 < n; ++i) {
            t(i, i) += 1.0;
            t(i + 1, i + 1) += 1.0;
            t(i, i + 1) -= 1.0;
            t(i + 1, i) -= 1.0;
        }
    } else {
        // Stationary AR(1): tridiagonal with 1 + rho^2 interior diagonal.
        for (Eigen::Index i = 0; i < n; ++i)
            t(i, i) = (i == 0 || i == n - 1) ? 1.0 : 1.0 + rho * rho;
        for (Eigen::Index i = 0; i + 1 < n; ++i) {
            t(i, i + 1) = -rho;
            t(i + 1, i) = -rho;
        }
    }
    return PrecisionStructure::from_matrix(t / lambda, {{"rho", rho}, {"lambda", lambda}});
}

FactorLoading factor_loading_cov(const Eigen::VectorXd& alpha, double lambda) {
    if (alpha.size() == 0) throw domain_error("loadings must be nonempty");
    if (lambda <= 0.0) throw domain_error("lambda must be positive");
    FactorLoading f;
    f.covariance = lambda * alpha * alpha.transpose();
    f.loading = alpha;
    return f;
}

}  // namespace hglm
