// Command-line front end: fit models from CSV + JSON config, emit fit
// summaries, profile curves, predictive distributions, and coverage reports.

#include <CLI11.hpp>
#include <json.hpp>

#include <Eigen/Core>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "hglm/errors.hpp"
#include "hglm/fit.hpp"
#include "hglm/io.hpp"
#include "hglm/model.hpp"
#include "hglm/oracle.hpp"
#include "hglm/predict.hpp"
#include "hglm/profile.hpp"
#include "hglm/table.hpp"
#include "hglm/uncert.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw hglm::data_error("cannot open '" + path + "'");
    json j;
    in >> j;
    return j;
}

std::vector<std::pair<int, int>> edges_from_csv(const std::string& path) {
    hglm::DataTable t = hglm::DataTable::from_csv_file(path);
    Eigen::VectorXd a = t.numeric_column("region_a");
    Eigen::VectorXd b = t.numeric_column("region_b");
    std::vector<std::pair<int, int>> edges;
    for (Eigen::Index i = 0; i < a.size(); ++i)
        edges.emplace_back(static_cast<int>(a[i]), static_cast<int>(b[i]));
    return edges;
}

hglm::ModelConfig model_config_from_json(const json& j) {
    hglm::ModelConfig cfg;
    cfg.response = j.at("response").get<std::string>();
    if (j.contains("covariates"))
        cfg.covariates = j["covariates"].get<std::vector<std::string>>();
    cfg.intercept = j.value("intercept", true);
    cfg.group = j.at("group").get<std::string>();
    cfg.family = j.value("family", std::string("normal"));
    cfg.link = j.value("link", std::string("identity"));
    cfg.trials = j.value("trials", std::string(""));
    cfg.offset = j.value("offset", std::string(""));
    if (j.contains("random")) {
        const json& r = j["random"];
        std::string structure = r.value("structure", std::string("iid"));
        if (structure == "iid") {
            cfg.structure = hglm::RandomStructure::iid;
        } else if (structure == "car") {
            cfg.structure = hglm::RandomStructure::car;
            if (r.contains("adjacency"))
                cfg.car_edges = edges_from_csv(r["adjacency"].get<std::string>());
            else if (r.contains("edges"))
                for (const auto& e : r["edges"])
                    cfg.car_edges.emplace_back(e[0].get<int>(), e[1].get<int>());
            else
                throw hglm::config_error("car structure needs 'adjacency' (csv) or 'edges'");
        } else if (structure == "ar1") {
            cfg.structure = hglm::RandomStructure::ar1;
            if (r.contains("rho")) cfg.ar1_rho_fixed = r["rho"].get<double>();
        } else if (structure == "factor") {
            cfg.structure = hglm::RandomStructure::factor;
            cfg.item = r.value("item", std::string(""));
            if (r.contains("loadings")) cfg.loadings = r["loadings"].get<std::vector<double>>();
        } else {
            throw hglm::config_error("unknown random structure '" + structure + "'");
        }
    }
    return cfg;
}

struct FitArtifacts {
    hglm::ModelSpec model;
    hglm::FitResult result;
    hglm::VarDecomp decomp;
};

FitArtifacts run_fit(const std::string& data_path, const std::string& config_path) {
    hglm::DataTable table = hglm::DataTable::from_csv_file(data_path);
    hglm::ModelConfig cfg = model_config_from_json(load_json(config_path));
    hglm::ModelSpec model = build_model(table, cfg);
    hglm::FitResult result = hglm::fit(model);
    hglm::VarDecomp decomp = hglm::var_decomp(model, result);
    return {std::move(model), std::move(result), std::move(decomp)};
}

Eigen::VectorXd parse_counts(const std::string& text) {
    std::vector<double> vals;
    std::string cell;
    std::stringstream ss(text);
    while (std::getline(ss, cell, ',')) {
        if (cell.empty()) throw hglm::data_error("empty count in --y");
        char* end = nullptr;
        double v = std::strtod(cell.c_str(), &end);
        if (end == cell.c_str() || *end != '\0')
            throw hglm::data_error("'" + cell + "' is not a count");
        vals.push_back(v);
    }
    if (vals.empty()) throw hglm::data_error("--y is empty");
    return Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

struct GridSpec {
    double lo = 0.0, hi = 0.0;
    int n = 0;
    bool given = false;
};

GridSpec parse_grid(const std::string& text) {
    GridSpec g;
    if (text.empty()) return g;
    double lo, hi;
    int n;
    if (std::sscanf(text.c_str(), "%lf:%lf:%d", &lo, &hi, &n) != 3)
        throw hglm::config_error("--grid must be lo:hi:n");
    if (!(lo < hi) || n < 3) throw hglm::config_error("invalid grid: need lo < hi and n >= 3");
    g.lo = lo;
    g.hi = hi;
    g.n = n;
    g.given = true;
    return g;
}

void write_output(const fs::path& dir, const std::string& name, const std::string& content) {
    fs::create_directories(dir);
    hglm::atomic_write_file((dir / name).string(), content);
}

int cmd_fit(const std::string& data, const std::string& config, const std::string& out,
            double level) {
    FitArtifacts art = run_fit(data, config);
    hglm::FitOptions defaults;
    write_output(out, "fit-summary.json",
                 hglm::fit_summary_json(art.model, art.result, art.decomp, defaults));
    write_output(out, "random-effects.csv",
                 hglm::random_effects_csv(art.model, art.result, art.decomp, level));
    std::cout << "fit " << (art.result.converged ? "converged" : "did NOT converge") << " in "
              << art.result.iterations << " cycles; marginal APHL "
              << hglm::fmt17(art.result.marginal_aphl) << "\n";
    return art.result.converged ? 0 : 2;
}

int cmd_profile(const std::string& data, const std::string& config, const std::string& out,
                const std::string& param, int effect, const GridSpec& grid, bool verbose) {
    FitArtifacts art = run_fit(data, config);
    hglm::ProfileCurve curve;
    if (!param.empty()) {
        Eigen::VectorXd g;
        if (grid.given) {
            g.resize(grid.n);
            for (int i = 0; i < grid.n; ++i)
                g[i] = grid.lo + (grid.hi - grid.lo) * i / (grid.n - 1);
        } else {
            g = hglm::default_profile_grid(art.model, art.result, param);
        }
        if (verbose) std::cerr << "profiling " << param << " over " << g.size() << " points\n";
        curve = hglm::param_profile(art.model, art.result, param, g);
    } else {
        if (effect < 1 || effect > art.model.q())
            throw hglm::config_error("--effect out of range 1.." + std::to_string(art.model.q()));
        Eigen::Index idx = effect - 1;
        double se = std::sqrt(art.decomp.hlik_var[idx]);
        double center = art.result.state.v[idx];
        Eigen::VectorXd g;
        if (grid.given) {
            g.resize(grid.n);
            for (int i = 0; i < grid.n; ++i)
                g[i] = grid.lo + (grid.hi - grid.lo) * i / (grid.n - 1);
        } else {
            g.resize(41);
            for (int i = 0; i < 41; ++i) g[i] = center - 5 * se + 10.0 * se * i / 40;
        }
        if (verbose)
            std::cerr << "profiling random effect " << effect << " over " << g.size()
                      << " points\n";
        curve = hglm::re_profile(art.model, art.result.state, idx, g);
        if (curve.grid_warning)
            std::cerr << "warning: grid captures only " << hglm::fmt17(curve.mass)
                      << " of the posterior mass\n";
    }
    write_output(out, "curve.csv", hglm::profile_curve_csv(curve));
    std::cout << "profile curve with " << curve.grid.size() << " points written\n";
    return 0;
}

int cmd_predict(const std::string& y_text, const std::string& method, const std::string& out) {
    Eigen::VectorXd y = parse_counts(y_text);
    std::vector<hglm::PredictiveDist> dists;
    if (method == "plugin" || method == "both") dists.push_back(hglm::plugin_predictive(y));
    if (method == "profile" || method == "both") dists.push_back(hglm::profile_predictive(y));
    if (dists.empty()) throw hglm::config_error("--method must be plugin, profile, or both");
    if (method == "both")
        std::cerr << "plugin variance " << hglm::fmt17(dists[0].variance()) << ", profile variance "
                  << hglm::fmt17(dists[1].variance()) << "\n";
    write_output(out, "predictive.csv", hglm::predictive_csv(dists));
    std::cout << "predictive pmf over 0.." << dists[0].support.size() - 1 << " written\n";
    return 0;
}

int cmd_simulate(const std::string& config_path, const std::string& out) {
    json j = load_json(config_path);
    hglm::SimConfig cfg;
    int regions = j.value("regions", 20);
    if (j.contains("edges_file")) {
        cfg.adjacency = hglm::neighborhood_from_adjacency(
            edges_from_csv(j["edges_file"].get<std::string>()), regions);
    } else if (j.contains("edges")) {
        std::vector<std::pair<int, int>> edges;
        for (const auto& e : j["edges"]) edges.emplace_back(e[0].get<int>(), e[1].get<int>());
        cfg.adjacency = hglm::neighborhood_from_adjacency(edges, regions);
    } else if (j.contains("graph") && j["graph"].value("type", std::string("random")) == "lattice") {
        int rows = j["graph"].value("rows", 4);
        int cols = j["graph"].value("cols", 5);
        regions = rows * cols;
        cfg.adjacency = hglm::neighborhood_from_adjacency(hglm::lattice_edges(rows, cols), regions);
    } else {
        int extra = j.contains("graph") ? j["graph"].value("extra_edges", regions / 2)
                                        : regions / 2;
        std::uint64_t gseed = j.contains("graph")
                                  ? j["graph"].value("seed", std::uint64_t{11})
                                  : std::uint64_t{11};
        cfg.adjacency = hglm::random_connected_graph(regions, extra, gseed);
    }
    if (j.contains("populations") && j["populations"].is_array()) {
        auto pops = j["populations"].get<std::vector<double>>();
        cfg.populations =
            Eigen::Map<Eigen::VectorXd>(pops.data(), static_cast<Eigen::Index>(pops.size()));
    } else {
        double lo = 100.0, hi = 50000.0;
        if (j.contains("populations")) {
            lo = j["populations"].value("min", 100.0);
            hi = j["populations"].value("max", 50000.0);
        }
        cfg.populations = hglm::log_spaced_populations(regions, lo, hi);
    }
    if (j.contains("truth")) {
        cfg.truth.beta = j["truth"].value("beta", cfg.truth.beta);
        cfg.truth.sigma2 = j["truth"].value("sigma2", cfg.truth.sigma2);
        cfg.truth.lambda = j["truth"].value("lambda", cfg.truth.lambda);
    }
    cfg.n_sims = j.value("n_sims", 200);
    cfg.seed = j.value("seed", std::uint64_t{1});
    cfg.n_bins = j.value("bins", 4);
    cfg.level = j.value("level", 0.95);
    cfg.oracle_mode = j.value("oracle_mode", false);
    cfg.threads = j.value("threads", 0);
    cfg.allow_partial = true;  // exit code carries the failure signal

    hglm::CoverageReport rep = hglm::coverage_sim(cfg);
    write_output(out, "coverage.csv", hglm::coverage_csv(rep));
    write_output(out, "coverage-meta.json", hglm::coverage_meta_json(cfg, rep));
    for (std::size_t b = 0; b < rep.bins.size(); ++b) {
        const auto& bin = rep.bins[b];
        std::cout << "bin " << b + 1 << " (n " << bin.n_lo << "-" << bin.n_hi << "): eb "
                  << bin.eb_coverage() << ", hlik " << bin.hlik_coverage() << "\n";
    }
    if (rep.failure_cap_exceeded) {
        std::cerr << "error: " << rep.failures << " of " << rep.n_sims
                  << " replicates failed (cap 5%); partial report preserved\n";
        return 3;
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hierarchical-likelihood inference for GLMs with random effects"};
    app.require_subcommand(1);

    std::string data, config, out = ".", param, y_text, method = "plugin";
    int effect = 0;
    std::string grid_text;
    double level = 0.95;
    bool verbose = false;

    CLI::App* fit_cmd = app.add_subcommand("fit", "fit a model from csv data + json config");
    fit_cmd->add_option("--data", data, "input csv")->required();
    fit_cmd->add_option("--config", config, "model config json")->required();
    fit_cmd->add_option("--out", out, "output directory");
    fit_cmd->add_option("--level", level, "interval level for random-effects.csv");

    CLI::App* prof_cmd = app.add_subcommand("profile", "profile one parameter or random effect");
    prof_cmd->add_option("--data", data, "input csv")->required();
    prof_cmd->add_option("--config", config, "model config json")->required();
    prof_cmd->add_option("--out", out, "output directory");
    prof_cmd->add_option("--param", param, "fixed-effect or dispersion name");
    prof_cmd->add_option("--effect", effect, "random-effect index (1-based)");
    prof_cmd->add_option("--grid", grid_text, "grid lo:hi:n");
    prof_cmd->add_flag("--verbose", verbose, "progress on stderr");

    CLI::App* pred_cmd = app.add_subcommand("predict", "predictive pmf for iid poisson counts");
    pred_cmd->add_option("--y", y_text, "comma-separated counts")->required();
    pred_cmd->add_option("--method", method, "plugin | profile | both");
    pred_cmd->add_option("--out", out, "output directory");

    CLI::App* sim_cmd = app.add_subcommand("simulate", "coverage simulation for the CAR model");
    sim_cmd->add_option("--config", config, "simulation config json")->required();
    sim_cmd->add_option("--out", out, "output directory");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(fit_cmd)) return cmd_fit(data, config, out, level);
        if (app.got_subcommand(prof_cmd)) {
            if (param.empty() == (effect == 0))
                throw hglm::config_error("give exactly one of --param or --effect");
            return cmd_profile(data, config, out, param, effect, parse_grid(grid_text), verbose);
        }
        if (app.got_subcommand(pred_cmd)) return cmd_predict(y_text, method, out);
        if (app.got_subcommand(sim_cmd)) return cmd_simulate(config, out);
    } catch (const hglm::convergence_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
