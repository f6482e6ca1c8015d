#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <json.hpp>

#include <Eigen/Dense>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "hglm/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct RunResult {
    int exit_code;
    std::string stdout_text;
    std::string stderr_text;
};

RunResult run_cli(const std::string& args, const fs::path& dir) {
    fs::path out = dir / "stdout.txt", err = dir / "stderr.txt";
    std::string cmd = std::string(HGLM_CLI_PATH) + " " + args + " > " + out.string() + " 2> " +
                      err.string();
    int rc = std::system(cmd.c_str());
    auto slurp = [](const fs::path& p) {
        std::ifstream in(p);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    };
    return {WEXITSTATUS(rc), slurp(out), slurp(err)};
}

std::string slurp_file(const fs::path& p) {
    std::ifstream in(p);
    REQUIRE(in.good());
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / ("hglm_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

// Balanced one-way normal data with a known generator.
void write_oneway_fixture(const fs::path& dir, int g, int m, double beta, double phi,
                          double lambda, std::uint64_t seed) {
    hglm::PhiloxStream rng(seed, 0);
    std::ostringstream csv;
    csv << "y,g\n";
    for (int i = 0; i < g; ++i) {
        double v = std::sqrt(lambda) * rng.normal();
        for (int j = 0; j < m; ++j) {
            double y = beta + v + std::sqrt(phi) * rng.normal();
            csv << y << ",g" << i + 1 << "\n";
        }
    }
    std::ofstream(dir / "data.csv") << csv.str();
    std::ofstream(dir / "model.json") << R"({
        "response": "y", "group": "g",
        "family": "normal", "link": "identity",
        "random": {"structure": "iid"}
    })";
}

// Simulated Epil-like fixture: poisson counts over visits with a treatment
// effect and a patient random intercept. NOT the original trial data.
void write_epil_like_fixture(const fs::path& dir, std::uint64_t seed) {
    hglm::PhiloxStream rng(seed, 0);
    std::ostringstream csv;
    csv << "y,treat,logbase,patient\n";
    int patients = 12, visits = 4;
    for (int i = 0; i < patients; ++i) {
        double v = 0.5 * rng.normal();
        double treat = i % 2;
        double logbase = 0.8 + 0.4 * rng.normal();
        for (int j = 0; j < visits; ++j) {
            double eta = 1.0 - 0.4 * treat + 0.5 * logbase + v;
            long y = rng.poisson(std::exp(eta));
            csv << y << "," << treat << "," << logbase << ",p" << i + 1 << "\n";
        }
    }
    std::ofstream(dir / "data.csv") << csv.str();
    std::ofstream(dir / "model.json") << R"({
        "response": "y", "covariates": ["treat", "logbase"], "group": "patient",
        "family": "poisson", "link": "log",
        "random": {"structure": "iid"}
    })";
}

}  // namespace

TEST_CASE("cli fit writes summary and effects, lambda matches the ANOVA identity") {
    fs::path dir = fresh_dir("fit");
    int g = 6, m = 4;
    write_oneway_fixture(dir, g, m, 1.0, 0.8, 1.5, 901);
    RunResult r = run_cli("fit --data " + (dir / "data.csv").string() + " --config " +
                              (dir / "model.json").string() + " --out " + (dir / "out").string(),
                          dir);
    CHECK(r.exit_code == 0);

    json summary = json::parse(slurp_file(dir / "out" / "fit-summary.json"));
    REQUIRE(summary.contains("estimates"));
    CHECK(summary["estimates"]["beta"].contains("intercept"));
    CHECK(summary["estimates"]["dispersion"].contains("phi"));
    CHECK(summary["estimates"]["dispersion"].contains("lambda"));
    CHECK(summary["convergence"]["converged"].get<bool>());

    // ANOVA oracle on the same generated data
    hglm::PhiloxStream rng(901, 0);
    std::vector<double> y;
    for (int i = 0; i < g; ++i) {
        double v = std::sqrt(1.5) * rng.normal();
        for (int j = 0; j < m; ++j) y.push_back(1.0 + v + std::sqrt(0.8) * rng.normal());
    }
    double grand = 0;
    for (double yy : y) grand += yy;
    grand /= y.size();
    double ssb = 0, ssw = 0;
    for (int i = 0; i < g; ++i) {
        double gm = 0;
        for (int j = 0; j < m; ++j) gm += y[i * m + j];
        gm /= m;
        ssb += (gm - grand) * (gm - grand);
        for (int j = 0; j < m; ++j) ssw += (y[i * m + j] - gm) * (y[i * m + j] - gm);
    }
    double msw = ssw / (g * (m - 1.0)), msb = m * ssb / (g - 1.0);
    double lambda_anova = std::max(0.0, (msb - msw) / m);
    CHECK(summary["estimates"]["dispersion"]["lambda"].get<double>() ==
          doctest::Approx(lambda_anova).epsilon(1e-6));
    CHECK(summary["estimates"]["dispersion"]["phi"].get<double>() ==
          doctest::Approx(msw).epsilon(1e-6));

    // effects csv has one row per group plus header
    std::string csv = slurp_file(dir / "out" / "random-effects.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == g + 1);
    CHECK(csv.find("effect_index,group_label,v_hat,se_eb,se_hlik,ci_low,ci_high") == 0);
}

TEST_CASE("cli fit rejects malformed csv with exit 1 and no partial outputs") {
    fs::path dir = fresh_dir("badcsv");
    std::ofstream(dir / "data.csv") << "1.0,a\n2.0,\n";  // no header, missing value
    std::ofstream(dir / "model.json") << R"({"response": "y", "group": "g"})";
    RunResult r = run_cli("fit --data " + (dir / "data.csv").string() + " --config " +
                              (dir / "model.json").string() + " --out " + (dir / "out").string(),
                          dir);
    CHECK(r.exit_code == 1);
    CHECK(!r.stderr_text.empty());
    CHECK(!fs::exists(dir / "out" / "fit-summary.json"));
    CHECK(!fs::exists(dir / "out" / "random-effects.csv"));
}

TEST_CASE("cli outputs are byte-identical across reruns") {
    fs::path dir = fresh_dir("rerun");
    write_oneway_fixture(dir, 5, 3, 0.5, 1.0, 0.9, 902);
    std::string base = "fit --data " + (dir / "data.csv").string() + " --config " +
                       (dir / "model.json").string();
    RunResult r1 = run_cli(base + " --out " + (dir / "out1").string(), dir);
    RunResult r2 = run_cli(base + " --out " + (dir / "out2").string(), dir);
    CHECK(r1.exit_code == 0);
    CHECK(r2.exit_code == 0);
    CHECK(slurp_file(dir / "out1" / "fit-summary.json") ==
          slurp_file(dir / "out2" / "fit-summary.json"));
    CHECK(slurp_file(dir / "out1" / "random-effects.csv") ==
          slurp_file(dir / "out2" / "random-effects.csv"));
}

TEST_CASE("cli profile over a fixed effect peaks at the estimate") {
    fs::path dir = fresh_dir("profparam");
    write_epil_like_fixture(dir, 903);
    std::string base = "--data " + (dir / "data.csv").string() + " --config " +
                       (dir / "model.json").string();
    RunResult fit_run = run_cli("fit " + base + " --out " + (dir / "fit").string(), dir);
    REQUIRE(fit_run.exit_code == 0);
    json summary = json::parse(slurp_file(dir / "fit" / "fit-summary.json"));
    double treat_hat = summary["estimates"]["beta"]["treat"].get<double>();

    RunResult r = run_cli("profile " + base + " --param treat --out " + (dir / "prof").string(),
                          dir);
    CHECK(r.exit_code == 0);
    std::string csv = slurp_file(dir / "prof" / "curve.csv");
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);  // header
    double best_val = -1e300, best_x = 0, step = 0, prev_x = 0;
    int row = 0;
    while (std::getline(in, line)) {
        double x, val;
        int conv;
        REQUIRE(std::sscanf(line.c_str(), "%lf,%lf,%d", &x, &val, &conv) == 3);
        if (row > 0) step = x - prev_x;
        prev_x = x;
        if (conv == 1 && val > best_val) {
            best_val = val;
            best_x = x;
        }
        ++row;
    }
    CHECK(row == 41);
    CHECK(std::abs(best_x - treat_hat) <= step + 1e-12);
}

TEST_CASE("cli profile over a random effect is gaussian for the normal model") {
    fs::path dir = fresh_dir("profeffect");
    write_oneway_fixture(dir, 5, 4, 0.3, 0.7, 1.2, 904);
    std::string base = "--data " + (dir / "data.csv").string() + " --config " +
                       (dir / "model.json").string();
    RunResult r = run_cli("profile " + base + " --effect 2 --out " + (dir / "prof").string(), dir);
    CHECK(r.exit_code == 0);
    std::string csv = slurp_file(dir / "prof" / "curve.csv");
    std::istringstream in(csv);
    std::string line;
    std::getline(in, line);
    std::vector<double> xs, vals;
    while (std::getline(in, line)) {
        double x, val;
        int conv;
        REQUIRE(std::sscanf(line.c_str(), "%lf,%lf,%d", &x, &val, &conv) == 3);
        CHECK(conv == 1);
        xs.push_back(x);
        vals.push_back(val);
    }
    // least-squares quadratic fit; R^2 must exceed 0.9999
    int n = static_cast<int>(xs.size());
    Eigen::MatrixXd x_mat(n, 3);
    Eigen::VectorXd y_vec(n);
    for (int i = 0; i < n; ++i) {
        x_mat(i, 0) = 1.0;
        x_mat(i, 1) = xs[static_cast<std::size_t>(i)];
        x_mat(i, 2) = xs[static_cast<std::size_t>(i)] * xs[static_cast<std::size_t>(i)];
        y_vec(i) = vals[static_cast<std::size_t>(i)];
    }
    Eigen::VectorXd coef = (x_mat.transpose() * x_mat).ldlt().solve(x_mat.transpose() * y_vec);
    Eigen::VectorXd resid = y_vec - x_mat * coef;
    double ss_tot = (y_vec.array() - y_vec.mean()).square().sum();
    double r2 = 1.0 - resid.squaredNorm() / ss_tot;
    CHECK(r2 > 0.9999);
    CHECK(coef[2] < 0.0);
}

TEST_CASE("cli profile rejects bad input") {
    fs::path dir = fresh_dir("profbad");
    write_oneway_fixture(dir, 4, 3, 0.5, 1.0, 0.9, 905);
    std::string base = "--data " + (dir / "data.csv").string() + " --config " +
                       (dir / "model.json").string();
    SUBCASE("invalid grid") {
        RunResult r = run_cli("profile " + base + " --param beta_0 --grid 1:0:5 --out " +
                                  (dir / "o1").string(),
                              dir);
        CHECK(r.exit_code == 1);
    }
    SUBCASE("unknown parameter lists valid names") {
        RunResult r = run_cli("profile " + base + " --param nope --out " + (dir / "o2").string(),
                              dir);
        CHECK(r.exit_code == 1);
        CHECK(r.stderr_text.find("intercept") != std::string::npos);
        CHECK(r.stderr_text.find("lambda") != std::string::npos);
    }
    SUBCASE("needs exactly one target") {
        RunResult r = run_cli("profile " + base + " --out " + (dir / "o3").string(), dir);
        CHECK(r.exit_code == 1);
    }
}

TEST_CASE("cli predict") {
    fs::path dir = fresh_dir("predict");
    SUBCASE("plugin row v=0") {
        RunResult r =
            run_cli("predict --y 3,2,5,0,4 --method plugin --out " + (dir / "p1").string(), dir);
        CHECK(r.exit_code == 0);
        std::string csv = slurp_file(dir / "p1" / "predictive.csv");
        std::istringstream in(csv);
        std::string line;
        std::getline(in, line);
        CHECK(line == "v,plugin_mass");
        std::getline(in, line);
        double mass0 = 0;
        int v0 = -1;
        REQUIRE(std::sscanf(line.c_str(), "%d,%lf", &v0, &mass0) == 2);
        CHECK(v0 == 0);
        CHECK(mass0 == doctest::Approx(0.0608101).epsilon(1e-5));
    }
    SUBCASE("both methods report variances on stderr") {
        RunResult r =
            run_cli("predict --y 3,2,5,0,4 --method both --out " + (dir / "p2").string(), dir);
        CHECK(r.exit_code == 0);
        CHECK(r.stderr_text.find("plugin variance") != std::string::npos);
        CHECK(r.stderr_text.find("profile variance") != std::string::npos);
        std::string header = slurp_file(dir / "p2" / "predictive.csv").substr(0, 40);
        CHECK(header.find("plugin_mass,profile_mass") != std::string::npos);
    }
    SUBCASE("empty y is exit 1") {
        RunResult r = run_cli("predict --y \"\" --out " + (dir / "p3").string(), dir);
        CHECK(r.exit_code == 1);
    }
}

TEST_CASE("cli simulate is deterministic and echoes the default truth") {
    fs::path dir = fresh_dir("simulate");
    std::ofstream(dir / "sim.json") << R"({
        "regions": 8, "n_sims": 3, "seed": 42, "bins": 2,
        "graph": {"type": "random", "extra_edges": 4, "seed": 5}
    })";
    std::string base = "simulate --config " + (dir / "sim.json").string();
    RunResult r1 = run_cli(base + " --out " + (dir / "s1").string(), dir);
    RunResult r2 = run_cli(base + " --out " + (dir / "s2").string(), dir);
    CHECK(r1.exit_code == 0);
    CHECK(slurp_file(dir / "s1" / "coverage.csv") == slurp_file(dir / "s2" / "coverage.csv"));
    json meta = json::parse(slurp_file(dir / "s1" / "coverage-meta.json"));
    CHECK(meta["config"]["truth"]["beta"].get<double>() == doctest::Approx(-4.920));
    CHECK(meta["config"]["truth"]["sigma2"].get<double>() == doctest::Approx(2.0));
    CHECK(meta["config"]["truth"]["lambda"].get<double>() == doctest::Approx(0.62));
    CHECK(meta["seed"].get<std::uint64_t>() == 42);
    CHECK(meta["failures"].get<int>() == 0);
}
