#include "hglm/io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "hglm/errors.hpp"

namespace hglm {

using ordered_json = nlohmann::ordered_json;

std::string fmt17(double x) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", x);
    return buf;
}

void atomic_write_file(const std::string& path, const std::string& content) {
    namespace fs = std::filesystem;
    fs::path target(path);
    fs::path tmp = target;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw data_error("cannot write '" + tmp.string() + "'");
        out << content;
    }
    fs::rename(tmp, target);
}

std::string fit_summary_json(const ModelSpec& model, const FitResult& result,
                             const VarDecomp& decomp, const FitOptions& options) {
    ordered_json j;
    ordered_json est;
    ordered_json beta = ordered_json::object();
    for (Eigen::Index i = 0; i < model.p(); ++i)
        beta[model.beta_names[static_cast<std::size_t>(i)]] = result.state.beta[i];
    est["beta"] = beta;
    ordered_json disp = ordered_json::object();
    for (const auto& comp : result.state.dispersion.components()) disp[comp.name] = comp.value;
    est["dispersion"] = disp;
    j["estimates"] = est;

    ordered_json se = ordered_json::object();
    ordered_json se_beta = ordered_json::object();
    for (Eigen::Index i = 0; i < model.p(); ++i)
        se_beta[model.beta_names[static_cast<std::size_t>(i)]] =
            result.se_beta.size() == model.p() ? result.se_beta[i] : 0.0;
    se["beta"] = se_beta;
    Eigen::VectorXd se_eb = decomp.eb_var.cwiseSqrt();
    Eigen::VectorXd se_hl = decomp.hlik_var.cwiseSqrt();
    se["v_eb"] = std::vector<double>(se_eb.data(), se_eb.data() + se_eb.size());
    se["v_hlik"] = std::vector<double>(se_hl.data(), se_hl.data() + se_hl.size());
    j["standard_errors"] = se;

    j["criteria"] = {{"h", result.h_value},
                     {"marginal_aphl", result.marginal_aphl},
                     {"restricted_aphl", result.restricted_aphl}};

    ordered_json conv;
    conv["converged"] = result.converged;
    conv["iterations"] = result.iterations;
    conv["boundary_components"] = result.boundary_components;
    ordered_json trace = ordered_json::array();
    for (const auto& t : result.trace)
        trace.push_back({{"cycle", t.cycle},
                         {"h", t.h},
                         {"marginal", t.marginal},
                         {"restricted", t.restricted},
                         {"param_delta", t.param_delta}});
    conv["trace"] = trace;
    j["convergence"] = conv;

    j["options"] = {{"max_outer", options.max_outer},
                    {"param_tol", options.param_tol},
                    {"criterion_tol", options.criterion_tol},
                    {"fd_step", options.fd_step},
                    {"boundary_value", options.boundary_value},
                    {"grad_tol", options.newton.grad_tol}};
    return j.dump(2) + "\n";
}

std::string random_effects_csv(const ModelSpec& model, const FitResult& result,
                               const VarDecomp& decomp, double level) {
    Intervals ci = wald_intervals(decomp, result, level, VarKind::hlik);
    std::ostringstream out;
    out << "effect_index,group_label,v_hat,se_eb,se_hlik,ci_low,ci_high\n";
    for (Eigen::Index i = 0; i < model.q(); ++i) {
        std::string label = i < static_cast<Eigen::Index>(model.group_labels.size())
                                ? model.group_labels[static_cast<std::size_t>(i)]
                                : ("r" + std::to_string(i + 1));
        out << i + 1 << ',' << label << ',' << fmt17(result.state.v[i]) << ','
            << fmt17(std::sqrt(decomp.eb_var[i])) << ',' << fmt17(std::sqrt(decomp.hlik_var[i]))
            << ',' << fmt17(ci.lower[i]) << ',' << fmt17(ci.upper[i]) << '\n';
    }
    return out.str();
}

std::string profile_curve_csv(const ProfileCurve& curve) {
    std::ostringstream out;
    out << "param_value,aphl_value,converged";
    for (const auto& name : curve.nuisance_names) out << ',' << name;
    out << '\n';
    for (Eigen::Index g = 0; g < curve.grid.size(); ++g) {
        out << fmt17(curve.grid[g]) << ',' << fmt17(curve.values[g]) << ','
            << (curve.point_converged[static_cast<std::size_t>(g)] ? 1 : 0);
        for (Eigen::Index k = 0; k < curve.nuisance_trace.cols(); ++k)
            out << ',' << fmt17(curve.nuisance_trace(g, k));
        out << '\n';
    }
    return out.str();
}

std::string predictive_csv(const std::vector<PredictiveDist>& dists) {
    if (dists.empty()) throw domain_error("no predictive distributions to write");
    std::ostringstream out;
    out << "v";
    for (const auto& d : dists) {
        switch (d.method) {
            case PredictMethod::plugin: out << ",plugin_mass"; break;
            case PredictMethod::profile: out << ",profile_mass"; break;
            case PredictMethod::jeffreys: out << ",jeffreys_mass"; break;
        }
    }
    out << '\n';
    Eigen::Index rows = dists.front().support.size();
    for (const auto& d : dists)
        if (d.support.size() != rows) throw domain_error("predictive supports differ");
    for (Eigen::Index i = 0; i < rows; ++i) {
        out << dists.front().support[i];
        for (const auto& d : dists) out << ',' << fmt17(d.mass[i]);
        out << '\n';
    }
    return out.str();
}

std::string coverage_csv(const CoverageReport& report) {
    std::ostringstream out;
    out << "bin,n_range,eb_coverage,hlik_coverage,count\n";
    for (std::size_t b = 0; b < report.bins.size(); ++b) {
        const CoverageBin& bin = report.bins[b];
        out << b + 1 << ',' << bin.n_lo << '-' << bin.n_hi << ',' << fmt17(bin.eb_coverage())
            << ',' << fmt17(bin.hlik_coverage()) << ',' << bin.total << '\n';
    }
    return out.str();
}

std::string coverage_meta_json(const SimConfig& config, const CoverageReport& report) {
    ordered_json j;
    j["config"] = {{"n_regions", static_cast<int>(config.adjacency.n_regions())},
                   {"populations", std::vector<double>(config.populations.data(),
                                                       config.populations.data() +
                                                           config.populations.size())},
                   {"truth",
                    {{"beta", config.truth.beta},
                     {"sigma2", config.truth.sigma2},
                     {"lambda", config.truth.lambda}}},
                   {"n_sims", config.n_sims},
                   {"n_bins", config.n_bins},
                   {"level", config.level},
                   {"oracle_mode", config.oracle_mode}};
    j["seed"] = config.seed;
    j["failures"] = report.failures;
    j["failure_cap_exceeded"] = report.failure_cap_exceeded;
    return j.dump(2) + "\n";
}

}  // namespace hglm
