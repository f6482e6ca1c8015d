#include "hglm/model.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <algorithm>
#include <cmath>
#include <map>

#include "hglm/errors.hpp"

namespace hglm {

std::string random_structure_name(RandomStructure s) {
    switch (s) {
        case RandomStructure::iid: return "iid";
        case RandomStructure::car: return "car";
        case RandomStructure::ar1: return "ar1";
        case RandomStructure::factor: return "factor";
    }
    return "?";
}

std::vector<DispersionComponent> RandomSpec::dispersion_template() const {
    switch (structure) {
        case RandomStructure::iid:
        case RandomStructure::factor:
            return {{"lambda", 1.0, Domain::positive, false, false}};
        case RandomStructure::car:
            return {{"sigma2", 1.0, Domain::positive, false, false},
                    {"lambda", 0.5, Domain::unit_interval, false, false}};
        case RandomStructure::ar1: {
            std::vector<DispersionComponent> out{{"lambda", 1.0, Domain::positive, false, false}};
            if (rho_fixed)
                out.push_back({"rho", rho_fixed_value, Domain::correlation, true, false});
            else
                out.push_back({"rho", 0.0, Domain::correlation, false, false});
            return out;
        }
    }
    return {};
}

PrecisionStructure RandomSpec::precision(const Dispersion& d) const {
    switch (structure) {
        case RandomStructure::iid:
        case RandomStructure::factor: {
            // Diagonal shortcut: spectrum is 1/lambda everywhere.
            double lambda = d.get("lambda");
            PrecisionStructure p;
            p.matrix = Eigen::MatrixXd::Identity(dim, dim) / lambda;
            p.rank = dim;
            p.null_basis = Eigen::MatrixXd(dim, 0);
            p.range_basis = Eigen::MatrixXd::Identity(dim, dim);
            p.glogdet = -static_cast<double>(dim) * std::log(lambda);
            p.params = {{"lambda", lambda}};
            return p;
        }
        case RandomStructure::car: {
            double lambda = d.get("lambda");
            double sigma2 = d.get("sigma2");
            if (lambda < 0.0 || lambda > 1.0) throw domain_error("CAR lambda must be in [0, 1]");
            if (sigma2 <= 0.0) throw domain_error("sigma2 must be positive");
            if (car_q_eigvals.size() != dim) return car_precision(*car_q, lambda, sigma2);
            Eigen::MatrixXd m = (lambda * car_q->q_matrix +
                                 (1.0 - lambda) * Eigen::MatrixXd::Identity(dim, dim)) /
                                sigma2;
            Eigen::VectorXd ev =
                ((lambda * car_q_eigvals.array() + (1.0 - lambda)) / sigma2).matrix();
            return PrecisionStructure::from_spectrum(std::move(m), car_q_eigvecs, ev,
                                                     {{"lambda", lambda}, {"sigma2", sigma2}});
        }
        case RandomStructure::ar1:
            return ar1_precision(dim, d.get("rho"), d.get("lambda"));
    }
    throw config_error("unknown random structure");
}

void RandomSpec::prepare() {
    if (structure == RandomStructure::car && car_q && car_q_eigvals.size() != dim) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(car_q->q_matrix);
        car_q_eigvecs = es.eigenvectors();
        car_q_eigvals = es.eigenvalues();
    }
}

Eigen::VectorXd ModelSpec::linear_predictor(const Eigen::VectorXd& beta,
                                            const Eigen::VectorXd& v) const {
    Eigen::VectorXd eta = z_eff_ * v;
    if (p() > 0) eta += designs.X * beta;
    if (offset) eta += *offset;
    return eta;
}

Dispersion ModelSpec::dispersion_template() const {
    std::vector<DispersionComponent> comps;
    if (family.dispersion_free()) comps.push_back({"phi", 1.0, Domain::positive, false, false});
    for (auto& c : random.dispersion_template()) comps.push_back(c);
    return Dispersion(std::move(comps));
}

ParamState ModelSpec::blank_state() const {
    ParamState s;
    s.beta = Eigen::VectorXd::Zero(p());
    s.v = Eigen::VectorXd::Zero(q());
    s.dispersion = dispersion_template();
    return s;
}

void ModelSpec::check_state(const ParamState& s) const {
    if (s.beta.size() != p())
        throw domain_error("beta has length " + std::to_string(s.beta.size()) + ", model expects " +
                           std::to_string(p()));
    if (s.v.size() != q())
        throw domain_error("v has length " + std::to_string(s.v.size()) + ", model expects " +
                           std::to_string(q()));
    s.dispersion.check_domains();
}

ModelSpec ModelSpec::assemble(Family family, Link link, DesignSet designs, RandomSpec random,
                              Eigen::VectorXd y, std::optional<Eigen::VectorXd> offset,
                              std::vector<std::string> beta_names,
                              std::vector<std::string> group_labels) {
    Eigen::Index n = y.size();
    if (n < 1) throw data_error("need at least one observation");
    if (designs.X.rows() != n) throw data_error("X row count does not match y");
    if (designs.Z.rows() != n) throw data_error("Z row count does not match y");
    if (designs.Z.cols() < 1) throw data_error("Z needs at least one column");
    if (offset && offset->size() != n) throw data_error("offset length does not match y");
    if (!link_admissible(family.kind, link.kind))
        throw config_error("link '" + link_name(link.kind) + "' is not admissible for family '" +
                           family_name(family.kind) + "'");
    if (family.kind == FamilyKind::binomial) {
        if (family.trials.size() != n) throw data_error("binomial trials length does not match y");
        for (Eigen::Index i = 0; i < n; ++i) {
            if (family.trials[i] < 1.0 || family.trials[i] != std::floor(family.trials[i]))
                throw data_error("trials must be positive integers (row " + std::to_string(i + 1) + ")");
            if (y[i] < 0.0 || y[i] > family.trials[i])
                throw data_error("binomial response outside 0..trials (row " + std::to_string(i + 1) + ")");
        }
    }

    ModelSpec m;
    m.family = std::move(family);
    m.link = link;
    m.designs = std::move(designs);
    m.random = std::move(random);
    m.offset = std::move(offset);
    m.y = std::move(y);

    // Full-column-rank check via pivoted QR, tolerance 1e-10 * largest pivot.
    if (m.designs.X.cols() > 0) {
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(m.designs.X);
        qr.setThreshold(1e-10);
        if (qr.rank() < m.designs.X.cols())
            throw config_error("fixed-effect design X is rank deficient (rank " +
                               std::to_string(qr.rank()) + " of " + std::to_string(m.designs.X.cols()) + ")");
    }

    m.z_eff_ = m.designs.L ? (m.designs.Z * *m.designs.L).eval() : m.designs.Z;
    if (m.random.dim == 0) m.random.dim = m.z_eff_.cols();
    m.random.prepare();
    if (m.random.dim != m.z_eff_.cols())
        throw config_error("random dimension " + std::to_string(m.random.dim) +
                           " does not match effective Z columns " + std::to_string(m.z_eff_.cols()));

    m.beta_names = std::move(beta_names);
    if (m.beta_names.empty())
        for (Eigen::Index j = 0; j < m.p(); ++j) m.beta_names.push_back("beta_" + std::to_string(j));
    m.group_labels = std::move(group_labels);
    if (m.group_labels.empty())
        for (Eigen::Index j = 0; j < m.designs.Z.cols(); ++j)
            m.group_labels.push_back("g" + std::to_string(j + 1));
    return m;
}

namespace {

// Levels in order of first appearance, for deterministic construction.
std::vector<std::string> level_order(const std::vector<std::string>& values) {
    std::vector<std::string> levels;
    for (const auto& v : values)
        if (std::find(levels.begin(), levels.end(), v) == levels.end()) levels.push_back(v);
    return levels;
}

}  // namespace

ModelSpec build_model(const DataTable& table, const ModelConfig& config) {
    Eigen::Index n = table.n_rows();
    if (config.response.empty()) throw config_error("config must name a response column");
    Eigen::VectorXd y = table.numeric_column(config.response);

    Eigen::Index p = static_cast<Eigen::Index>(config.covariates.size()) + (config.intercept ? 1 : 0);
    Eigen::MatrixXd X(n, p);
    std::vector<std::string> beta_names;
    Eigen::Index col = 0;
    if (config.intercept) {
        X.col(col++).setOnes();
        beta_names.push_back("intercept");
    }
    for (const auto& name : config.covariates) {
        X.col(col++) = table.numeric_column(name);
        beta_names.push_back(name);
    }

    if (config.group.empty()) throw config_error("config must name a grouping column");
    std::vector<std::string> group = table.string_column(config.group);
    std::vector<std::string> levels = level_order(group);
    Eigen::Index g = static_cast<Eigen::Index>(levels.size());

    Family family;
    family.kind = family_from_name(config.family);
    if (family.kind == FamilyKind::binomial) {
        if (config.trials.empty()) throw config_error("binomial family needs a trials column");
        family.trials = table.numeric_column(config.trials);
    }
    Link link;
    link.kind = link_from_name(config.link);

    std::optional<Eigen::VectorXd> offset;
    if (!config.offset.empty()) offset = table.numeric_column(config.offset);

    DesignSet designs;
    designs.X = std::move(X);
    RandomSpec random;
    random.structure = config.structure;
    std::vector<std::string> z_labels;

    if (config.structure == RandomStructure::factor) {
        if (config.item.empty()) throw config_error("factor structure needs an item column");
        std::vector<std::string> item = table.string_column(config.item);
        std::vector<std::string> item_levels = level_order(item);
        Eigen::Index k_items = static_cast<Eigen::Index>(item_levels.size());
        if (static_cast<Eigen::Index>(config.loadings.size()) != k_items)
            throw config_error("factor loadings count " + std::to_string(config.loadings.size()) +
                               " does not match item levels " + std::to_string(k_items));
        // Z is the (group, item) incidence; L = I_groups (x) alpha maps the
        // per-group factor r to v = L r.
        designs.Z = Eigen::MatrixXd::Zero(n, g * k_items);
        Eigen::MatrixXd L = Eigen::MatrixXd::Zero(g * k_items, g);
        for (Eigen::Index i = 0; i < n; ++i) {
            auto gi = std::find(levels.begin(), levels.end(), group[static_cast<std::size_t>(i)]) -
                      levels.begin();
            auto ji = std::find(item_levels.begin(), item_levels.end(),
                                item[static_cast<std::size_t>(i)]) -
                      item_levels.begin();
            designs.Z(i, gi * k_items + ji) = 1.0;
        }
        for (Eigen::Index gi = 0; gi < g; ++gi)
            for (Eigen::Index ji = 0; ji < k_items; ++ji)
                L(gi * k_items + ji, gi) = config.loadings[static_cast<std::size_t>(ji)];
        designs.L = std::move(L);
        random.dim = g;
        for (Eigen::Index gi = 0; gi < g; ++gi)
            for (Eigen::Index ji = 0; ji < k_items; ++ji)
                z_labels.push_back(levels[static_cast<std::size_t>(gi)] + ":" +
                                   item_levels[static_cast<std::size_t>(ji)]);
    } else {
        designs.Z = Eigen::MatrixXd::Zero(n, g);
        for (Eigen::Index i = 0; i < n; ++i) {
            auto gi = std::find(levels.begin(), levels.end(), group[static_cast<std::size_t>(i)]) -
                      levels.begin();
            designs.Z(i, gi) = 1.0;
        }
        random.dim = g;
        z_labels = levels;
        if (config.structure == RandomStructure::car) {
            if (config.car_edges.empty()) throw config_error("car structure needs adjacency edges");
            random.car_q = neighborhood_from_adjacency(config.car_edges, static_cast<int>(g));
        } else if (config.structure == RandomStructure::ar1 && config.ar1_rho_fixed) {
            random.rho_fixed = true;
            random.rho_fixed_value = *config.ar1_rho_fixed;
        }
    }

    return ModelSpec::assemble(std::move(family), link, std::move(designs), std::move(random),
                               std::move(y), std::move(offset), std::move(beta_names),
                               std::move(z_labels));
}

MeanWeights mean_and_weights(const ModelSpec& model, const ParamState& state) {
    model.check_state(state);
    MeanWeights mw;
    mw.eta = model.linear_predictor(state.beta, state.v);
    Eigen::Index n = model.n();
    mw.mu.resize(n);
    mw.w.resize(n);
    double phi = model.family.dispersion_free() ? state.dispersion.get("phi") : 1.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        double eta = mw.eta[i];
        if (model.link.clamps() && std::abs(eta) > Link::clamp_bound) ++mw.n_clamped;
        double mu = model.link.inverse(eta);
        if (!std::isfinite(mu))
            throw domain_error("mean undefined at row " + std::to_string(i + 1) +
                               " (eta = " + std::to_string(eta) + ")");
        double dmu = model.link.dmu_deta(eta);
        double var = model.family.variance(mu);
        mw.mu[i] = mu;
        mw.w[i] = model.family.trials_at(i) * dmu * dmu / (phi * var);
    }
    return mw;
}

}  // namespace hglm
