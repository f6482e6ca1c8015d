#include "hglm/uncert.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <mutex>
#include <numeric>
#include <thread>

#include "hglm/errors.hpp"
#include "hglm/rng.hpp"

namespace hglm {

VarDecomp var_decomp(const HessianBlocks& blocks) {
    Eigen::Index p = blocks.h_bb.rows();
    Eigen::Index q = blocks.h_vv.rows();
    Eigen::LLT<Eigen::MatrixXd> llt(blocks.h_vv);
    if (llt.info() != Eigen::Success)
        throw numerical_error("var_decomp: h_vv is not positive definite");

    VarDecomp d;
    Eigen::MatrixXd vinv = llt.solve(Eigen::MatrixXd::Identity(q, q));
    d.eb_var = vinv.diagonal();
    d.inflation = Eigen::VectorXd::Zero(q);
    if (p > 0) {
        // Block elimination on the small beta block: the v-block of the full
        // inverse is h_vv^{-1} + F S^{-1} F' with F = h_vv^{-1} h_bv' and
        // S = h_bb - h_bv F the Schur complement.
        Eigen::MatrixXd f = llt.solve(blocks.h_bv.transpose());  // q x p
        Eigen::MatrixXd s = blocks.h_bb - blocks.h_bv * f;
        Eigen::LLT<Eigen::MatrixXd> slt(s);
        if (slt.info() != Eigen::Success)
            throw numerical_error("var_decomp: beta-block Schur complement is not positive definite");
        Eigen::MatrixXd sinv_ft = slt.solve(f.transpose());  // p x q
        for (Eigen::Index i = 0; i < q; ++i) d.inflation[i] = f.row(i).dot(sinv_ft.col(i));
    }
    d.hlik_var = d.eb_var + d.inflation;
    return d;
}

VarDecomp var_decomp(const ModelSpec& model, const FitResult& fit) {
    return var_decomp(hess_h(model, fit.state));
}

Intervals wald_intervals(const VarDecomp& decomp, const FitResult& fit, double level,
                         VarKind kind) {
    if (!(level > 0.0 && level < 1.0)) throw domain_error("level must lie in (0, 1)");
    const Eigen::VectorXd& var = kind == VarKind::eb ? decomp.eb_var : decomp.hlik_var;
    double z = normal_quantile(0.5 * (1.0 + level));
    Intervals out;
    out.center = fit.state.v;
    out.lower = out.center - z * var.cwiseSqrt();
    out.upper = out.center + z * var.cwiseSqrt();
    out.level = level;
    out.kind = kind;
    return out;
}

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw domain_error("quantile probability must lie in (0, 1)");
    // Wichura (1988), algorithm AS 241, PPND16.
    static const double a[8] = {3.3871328727963666080e0, 1.3314166789178437745e2,
                                1.9715909503065514427e3, 1.3731693765509461125e4,
                                4.5921953931549871457e4, 6.7265770927008700853e4,
                                3.3430575583588128105e4, 2.5090809287301226727e3};
    static const double b[8] = {1.0, 4.2313330701600911252e1, 6.8718700749205790830e2,
                                5.3941960214247511077e3, 2.1213794301586595867e4,
                                3.9307895800092710610e4, 2.8729085735721942674e4,
                                5.2264952788528545610e3};
    static const double c[8] = {1.42343711074968357734e0, 4.63033784615654529590e0,
                                5.76949722146069140550e0, 3.64784832476320460504e0,
                                1.27045825245236838258e0, 2.41780725177450611770e-1,
                                2.27238449892691845833e-2, 7.74545014278341407640e-4};
    static const double d[8] = {1.0, 2.05319162663775882187e0, 1.67638483018380384940e0,
                                6.89767334985100004550e-1, 1.48103976427480074590e-1,
                                1.51986665636164571966e-2, 5.47593808499534494600e-4,
                                1.05075007164441684324e-9};
    static const double e[8] = {6.65790464350110377720e0, 5.46378491116411436990e0,
                                1.78482653991729133580e0, 2.96560571828504891230e-1,
                                2.65321895265761230930e-2, 1.24266094738807843860e-3,
                                2.71155556874348757815e-5, 2.01033439929228813265e-7};
    static const double f[8] = {1.0, 5.99832206555887937690e-1, 1.36929880922735805310e-1,
                                1.48753612908506148525e-2, 7.86869131145613259100e-4,
                                1.84631831751005468180e-6, 1.42151175831644588870e-7,
                                2.04426310338993978564e-15};
    auto poly = [](const double* coef, double x) {
        double s = coef[7];
        for (int i = 6; i >= 0; --i) s = s * x + coef[i];
        return s;
    };
    double q = p - 0.5;
    if (std::abs(q) <= 0.425) {
        double r = 0.180625 - q * q;
        return q * poly(a, r) / poly(b, r);
    }
    double r = q < 0.0 ? p : 1.0 - p;
    r = std::sqrt(-std::log(r));
    double val;
    if (r <= 5.0) {
        r -= 1.6;
        val = poly(c, r) / poly(d, r);
    } else {
        r -= 5.0;
        val = poly(e, r) / poly(f, r);
    }
    return q < 0.0 ? -val : val;
}

FitOptions sim_fit_options() {
    FitOptions opt;
    opt.param_tol = 1e-4;
    opt.criterion_tol = 1e-7;
    return opt;
}

Eigen::VectorXd log_spaced_populations(int n, double lo, double hi) {
    if (n < 2 || lo <= 0.0 || hi <= lo) throw domain_error("bad population range");
    Eigen::VectorXd out(n);
    double llo = std::log(lo), lhi = std::log(hi);
    for (int i = 0; i < n; ++i)
        out[i] = std::round(std::exp(llo + (lhi - llo) * i / (n - 1)));
    return out;
}

NeighborhoodMatrix random_connected_graph(int n_regions, int extra_edges, std::uint64_t seed) {
    if (n_regions < 2) throw domain_error("need at least two regions");
    PhiloxStream rng(seed, 0x67726170ull /* graph stream */);
    std::vector<std::pair<int, int>> edges;
    // Random attachment tree keeps the graph connected, then extra edges.
    for (int i = 2; i <= n_regions; ++i) {
        int j = 1 + static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(i - 1));
        edges.emplace_back(j, i);
    }
    int added = 0, guard = 0;
    while (added < extra_edges && guard < 100 * (extra_edges + 1)) {
        ++guard;
        int aa = 1 + static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(n_regions));
        int bb = 1 + static_cast<int>(rng.next_u64() % static_cast<std::uint64_t>(n_regions));
        if (aa == bb) continue;
        auto e = std::make_pair(std::min(aa, bb), std::max(aa, bb));
        if (std::find(edges.begin(), edges.end(), e) != edges.end()) continue;
        edges.push_back(e);
        ++added;
    }
    return neighborhood_from_adjacency(edges, n_regions);
}

namespace {

struct BinLayout {
    std::vector<int> region_bin;  // region -> bin index
    std::vector<CoverageBin> bins;
};

BinLayout make_bins(const Eigen::VectorXd& populations, int n_bins) {
    int q = static_cast<int>(populations.size());
    n_bins = std::min(n_bins, q);
    std::vector<int> order(static_cast<std::size_t>(q));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int i, int j) { return populations[i] < populations[j]; });
    BinLayout lay;
    lay.region_bin.assign(static_cast<std::size_t>(q), 0);
    lay.bins.assign(static_cast<std::size_t>(n_bins), {});
    for (int rank = 0; rank < q; ++rank) {
        int b = std::min(n_bins - 1, rank * n_bins / q);
        int region = order[static_cast<std::size_t>(rank)];
        lay.region_bin[static_cast<std::size_t>(region)] = b;
        CoverageBin& bin = lay.bins[static_cast<std::size_t>(b)];
        if (bin.regions == 0) {
            bin.n_lo = populations[region];
            bin.n_hi = populations[region];
        }
        bin.n_lo = std::min(bin.n_lo, populations[region]);
        bin.n_hi = std::max(bin.n_hi, populations[region]);
        ++bin.regions;
    }
    return lay;
}

struct ReplicateCounts {
    std::vector<long> eb_hits, hlik_hits, total;
    int failures = 0;
    long schur_violations = 0;
};

}  // namespace

CoverageReport coverage_sim(const SimConfig& config) {
    if (config.n_sims < 1) throw domain_error("n_sims must be >= 1");
    int q = static_cast<int>(config.adjacency.n_regions());
    if (config.populations.size() != q)
        throw domain_error("populations length does not match adjacency");
    if (!(config.truth.lambda >= 0.0 && config.truth.lambda < 1.0))
        throw domain_error("truth lambda must lie in [0, 1)");
    if (config.truth.sigma2 <= 0.0) throw domain_error("truth sigma2 must be positive");

    // Truth precision and a Cholesky factor for sampling v = sigma L^{-T} z.
    Eigen::MatrixXd d_truth = config.truth.lambda * config.adjacency.q_matrix +
                              (1.0 - config.truth.lambda) * Eigen::MatrixXd::Identity(q, q);
    Eigen::LLT<Eigen::MatrixXd> dllt(d_truth);
    if (dllt.info() != Eigen::Success) throw numerical_error("truth precision not positive definite");
    Eigen::MatrixXd lt = dllt.matrixL().transpose();
    double sigma = std::sqrt(config.truth.sigma2);

    Eigen::VectorXd offset = config.populations.array().log();
    BinLayout lay = make_bins(config.populations, config.n_bins);
    int n_bins = static_cast<int>(lay.bins.size());
    double z_star = normal_quantile(0.5 * (1.0 + config.level));

    auto run_replicate = [&](int r, ReplicateCounts& acc) {
        PhiloxStream rng(config.seed, static_cast<std::uint64_t>(r) + 1);
        Eigen::VectorXd z(q);
        for (int i = 0; i < q; ++i) z[i] = rng.normal();
        Eigen::VectorXd v_true = sigma * lt.triangularView<Eigen::Upper>().solve(z);
        Eigen::VectorXd y(q);
        for (int i = 0; i < q; ++i) {
            double mean = config.populations[i] * std::exp(config.truth.beta + v_true[i]);
            y[i] = static_cast<double>(rng.poisson(mean));
        }

        Family fam;
        fam.kind = FamilyKind::poisson;
        Link link;
        link.kind = LinkKind::log_link;
        DesignSet designs;
        designs.X = Eigen::MatrixXd::Ones(q, 1);
        designs.Z = Eigen::MatrixXd::Identity(q, q);
        RandomSpec random;
        random.structure = RandomStructure::car;
        random.car_q = config.adjacency;
        random.dim = q;
        ModelSpec model = ModelSpec::assemble(fam, link, std::move(designs), std::move(random),
                                              y, offset);

        Eigen::VectorXd vhat, eb_var, hlik_var;
        try {
            if (config.oracle_mode) {
                Dispersion disp = model.dispersion_template();
                disp.set("sigma2", config.truth.sigma2);
                disp.set("lambda", config.truth.lambda);
                Eigen::VectorXd beta(1);
                beta[0] = config.truth.beta;
                vhat = v_mode(model, beta, disp);
                ParamState st;
                st.beta = beta;
                st.v = vhat;
                st.dispersion = disp;
                Eigen::LLT<Eigen::MatrixXd> llt(hess_h(model, st).h_vv);
                Eigen::MatrixXd vinv = llt.solve(Eigen::MatrixXd::Identity(q, q));
                eb_var = vinv.diagonal();
                hlik_var = eb_var;
            } else {
                FitResult fr = fit(model, config.fit_options);
                if (!fr.converged) throw convergence_error("replicate fit did not converge", 0, 0);
                VarDecomp vd = var_decomp(model, fr);
                vhat = fr.state.v;
                eb_var = vd.eb_var;
                hlik_var = vd.hlik_var;
            }
        } catch (const std::runtime_error&) {
            ++acc.failures;
            return;
        }
        for (int i = 0; i < q; ++i)
            if (hlik_var[i] < eb_var[i] - 1e-12) {
                ++acc.schur_violations;
                break;
            }
        for (int i = 0; i < q; ++i) {
            int b = lay.region_bin[static_cast<std::size_t>(i)];
            double se_eb = std::sqrt(eb_var[i]);
            double se_hl = std::sqrt(hlik_var[i]);
            if (std::abs(v_true[i] - vhat[i]) <= z_star * se_eb) ++acc.eb_hits[b];
            if (std::abs(v_true[i] - vhat[i]) <= z_star * se_hl) ++acc.hlik_hits[b];
            ++acc.total[b];
        }
    };

    int n_threads = config.threads > 0
                        ? config.threads
                        : std::max(1u, std::thread::hardware_concurrency());
    n_threads = std::min<int>(n_threads, config.n_sims);
    std::vector<ReplicateCounts> parts(static_cast<std::size_t>(n_threads));
    for (auto& p : parts) {
        p.eb_hits.assign(static_cast<std::size_t>(n_bins), 0);
        p.hlik_hits.assign(static_cast<std::size_t>(n_bins), 0);
        p.total.assign(static_cast<std::size_t>(n_bins), 0);
    }
    std::vector<std::thread> pool;
    for (int t = 0; t < n_threads; ++t)
        pool.emplace_back([&, t]() {
            for (int r = t; r < config.n_sims; r += n_threads) run_replicate(r, parts[static_cast<std::size_t>(t)]);
        });
    for (auto& th : pool) th.join();

    CoverageReport rep;
    rep.bins = lay.bins;
    rep.n_sims = config.n_sims;
    rep.seed = config.seed;
    rep.level = config.level;
    rep.n_regions = q;
    for (const auto& part : parts) {
        rep.failures += part.failures;
        rep.schur_violations += part.schur_violations;
        for (int b = 0; b < n_bins; ++b) {
            rep.bins[static_cast<std::size_t>(b)].eb_hits += part.eb_hits[static_cast<std::size_t>(b)];
            rep.bins[static_cast<std::size_t>(b)].hlik_hits += part.hlik_hits[static_cast<std::size_t>(b)];
            rep.bins[static_cast<std::size_t>(b)].total += part.total[static_cast<std::size_t>(b)];
        }
    }
    rep.failure_cap_exceeded =
        rep.failures > config.max_failure_fraction * static_cast<double>(config.n_sims);
    if (rep.failure_cap_exceeded && !config.allow_partial)
        throw simulation_error("coverage simulation: " + std::to_string(rep.failures) + " of " +
                               std::to_string(config.n_sims) + " replicates failed");
    return rep;
}

}  // namespace hglm
