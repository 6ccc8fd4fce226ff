#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>

#include "doctest.h"
#include "json.hpp"

#include "cli/commands.hpp"
#include "cli/config.hpp"
#include "cli/io.hpp"
#include "iie/dgp.hpp"
#include "iie/errors.hpp"
#include "iie/estimators.hpp"
#include "iie/nuisance.hpp"

using namespace iie;
using namespace iie::cli;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = 0;
  std::string out;
  std::string err;
};

Run invoke(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  Run r;
  r.code = run(args, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("iie_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::vector<std::vector<std::string>> read_csv(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    rows.push_back(cells);
  }
  return rows;
}

// First data row whose leading columns match the given prefix.
std::vector<std::string> find_row(const std::vector<std::vector<std::string>>& rows,
                                  const std::vector<std::string>& prefix) {
  for (std::size_t i = 1; i < rows.size(); ++i) {
    bool ok = rows[i].size() >= prefix.size();
    for (std::size_t j = 0; ok && j < prefix.size(); ++j) ok = rows[i][j] == prefix[j];
    if (ok) return rows[i];
  }
  return {};
}

fs::path export_sample(const fs::path& dir, std::size_t n, const std::string& design = "dgp") {
  const fs::path file = dir / ("sample_" + design + ".csv");
  const Run r = invoke({"sample", "-n", std::to_string(n), "--design", design, "-f", file.string()});
  REQUIRE(r.code == kExitOk);
  return file;
}

}  // namespace

TEST_CASE("config round-trips losslessly through INI") {
  RunConfig cfg;
  apply_overrides(cfg, {"seed=77", "estimator.folds=5", "estimator.ridge=0.1",
                        "sensitivity.tau=0,0.3333333333333333", "sensitivity.assumption=A3",
                        "simulate.proportion_mediated=true", "estimator.fold_mode=pooled"});
  const std::string ini = to_ini(cfg);
  std::istringstream in(ini);
  boost::property_tree::ptree tree;
  boost::property_tree::read_ini(in, tree);
  const RunConfig back = from_ptree(tree);
  CHECK(to_ini(back) == ini);
  CHECK(back.seed == 77u);
  CHECK(back.folds == 5);
  CHECK(back.tau.at(1) == 0.3333333333333333);
  CHECK(back.proportion_mediated);
}

TEST_CASE("unknown keys and malformed overrides exit 2") {
  Run r = invoke({"-s", "estimator.nonsense=1", "config"});
  CHECK(r.code == kExitConfig);
  CHECK(r.err.find("E_CONFIG") != std::string::npos);
  CHECK(r.err.find("estimator.nonsense") != std::string::npos);
  r = invoke({"-s", "estimator.folds", "config"});
  CHECK(r.code == kExitConfig);
  r = invoke({"-s", "estimator.folds=1", "config"});
  CHECK(r.code == kExitConfig);
  r = invoke({"--no-such-flag", "config"});
  CHECK(r.code == kExitConfig);
  r = invoke({"-s", "estimator.folds=3", "config"});
  CHECK(r.code == kExitOk);
  CHECK(r.out.find("folds=3") != std::string::npos);
}

TEST_CASE("config file keys are read and unknown sections rejected") {
  const fs::path dir = scratch("cfgfile");
  {
    std::ofstream f(dir / "good.ini");
    f << "seed=5\n[estimator]\nfolds=4\n[verify]\nproblems=3\n";
    std::ofstream g(dir / "bad.ini");
    g << "[nowhere]\nkey=1\n";
  }
  Run r = invoke({"-c", (dir / "good.ini").string(), "config"});
  REQUIRE(r.code == kExitOk);
  CHECK(r.out.find("seed=5") != std::string::npos);
  CHECK(r.out.find("folds=4") != std::string::npos);
  r = invoke({"-c", (dir / "bad.ini").string(), "config"});
  CHECK(r.code == kExitConfig);
}

TEST_CASE("simulate with zero replications exits 2") {
  const fs::path dir = scratch("reps0");
  const Run r = invoke({"-o", dir.string(), "-s", "simulate.reps=0", "simulate"});
  CHECK(r.code == kExitConfig);
  CHECK(r.err.find("E_CONFIG") != std::string::npos);
}

TEST_CASE("simulate is byte-identical for a repeated seed and has the table header") {
  const fs::path a = scratch("sim_a");
  const fs::path b = scratch("sim_b");
  const std::vector<std::string> common{"-s", "simulate.n=200", "-s", "simulate.reps=3",
                                        "-s", "simulate.points=0", "-s", "simulate.projections=1",
                                        "-s", "seed=11"};
  auto args = [&](const fs::path& dir, const std::string& threads) {
    std::vector<std::string> v{"-o", dir.string(), "-t", threads};
    v.insert(v.end(), common.begin(), common.end());
    v.push_back("simulate");
    return v;
  };
  REQUIRE(invoke(args(a, "1")).code == kExitOk);
  REQUIRE(invoke(args(b, "2")).code == kExitOk);
  const std::string ta = slurp(a / "table.csv");
  CHECK(ta == slurp(b / "table.csv"));
  CHECK(ta.rfind("Point,Strategy,Projection,Truth,Bias,Std,RMSE,Coverage", 0) == 0);
  const auto m = nlohmann::json::parse(slurp(a / "manifest.json"));
  CHECK(m["seed"] == 11);
  CHECK(m["version"] == kVersion);
  CHECK(m["config_sha256"].get<std::string>().size() == 64u);
  CHECK(m["outputs"].size() == 1u);
}

TEST_CASE("estimate on an exported sample matches the library bitwise") {
  const fs::path dir = scratch("estimate");
  const fs::path data = export_sample(dir, 1500);
  const Run r = invoke({"-o", dir.string(), "estimate", data.string()});
  REQUIRE(r.code == kExitOk);

  const RunConfig cfg;
  const Sample s = read_dataset_file(data.string());
  CHECK(s.size() == 1500u);
  const FoldPlan plan = make_folds(s.size(), cfg.folds, cfg.seed, cfg.fold_mode);
  const auto fits = cross_fit_nuisances(s, plan, default_learner(cfg.nuisance()));
  const auto rows = read_csv(dir / "estimates.csv");
  for (Estimand e : {Estimand::PsiM1, Estimand::Cate}) {
    const CrossFitResult cf = cross_fit_pseudo_outcomes(s, plan, fits, e, cfg.arms());
    const EstimateReport os = one_step(cf.pseudo);
    const auto row = find_row(rows, {to_string(e), os.method});
    REQUIRE(row.size() == 12u);
    CHECK(row[3] == format_double(os.estimate));
    CHECK(row[4] == format_double(os.se));
  }
  CHECK(rows.size() == 1u + 2u * (1u + 2u * 3u + 3u));
}

TEST_CASE("datasets with a missing or malformed column exit 2 naming it") {
  const fs::path dir = scratch("schema");
  {
    std::ofstream f(dir / "no_m2.csv");
    f << "y,a,m1,x1\n1,0,1,0.5\n";
    std::ofstream g(dir / "bad_a.csv");
    g << "y,a,m1,m2,x1\n1,2,1,0,0.5\n";
  }
  Run r = invoke({"-o", dir.string(), "estimate", (dir / "no_m2.csv").string()});
  CHECK(r.code == kExitConfig);
  CHECK(r.err.find("E_SCHEMA") != std::string::npos);
  CHECK(r.err.find("'m2'") != std::string::npos);
  r = invoke({"-o", dir.string(), "estimate", (dir / "bad_a.csv").string()});
  CHECK(r.code == kExitConfig);
  CHECK(r.err.find("'a'") != std::string::npos);
}

TEST_CASE("dataset export round-trips through the reader") {
  std::mt19937_64 rng(3);
  const Sample s = dgp_sample(DgpSpec{}, 50, rng);
  std::stringstream io;
  write_dataset(io, s);
  const Sample back = read_dataset(io);
  REQUIRE(back.size() == s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    CHECK(back.y(i) == s.y(i));
    CHECK(back.a(i) == s.a(i));
    CHECK(back.x(i, 0) == s.x(i, 0));
  }
}

TEST_CASE("positivity failure exits 4 listing offending rows") {
  const fs::path dir = scratch("positivity");
  const fs::path data = dir / "separated.csv";
  {
    std::ofstream f(data);
    f << "y,a,m1,m2,x1\n";
    for (int i = 0; i < 400; ++i) {
      const double x = -3.0 + 6.0 * i / 399.0;
      f << (i % 3 == 0) << ',' << (x > 0.0) << ',' << (i % 2) << ',' << (i % 5 == 0) << ','
        << format_double(x) << '\n';
    }
  }
  const Run r = invoke({"-o", dir.string(), "-s", "estimator.positivity=0.05", "estimate",
                        data.string()});
  CHECK(r.code == kExitPositivity);
  CHECK(r.err.find("E_POSITIVITY") != std::string::npos);
  const auto pos = r.err.find("; rows=");
  REQUIRE(pos != std::string::npos);
  // Extreme covariates sit at the first and last rows.
  const std::string rows = r.err.substr(pos + 7);
  CHECK(rows.rfind("0,", 0) == 0);
  CHECK(rows.find("399") != std::string::npos);
}

TEST_CASE("bounds at tau 0 equal the one-step estimate") {
  const fs::path dir = scratch("bounds");
  const fs::path data = export_sample(dir, 1200);
  REQUIRE(invoke({"-o", dir.string(), "estimate", data.string()}).code == kExitOk);
  const Run r = invoke({"-o", dir.string(), "-s", "sensitivity.tau=0,0.05", "bounds", data.string()});
  REQUIRE(r.code == kExitOk);
  const auto est = find_row(read_csv(dir / "estimates.csv"), {"psi_M1", "one-step"});
  const auto b = find_row(read_csv(dir / "bounds_average.csv"), {"A2", "0"});
  REQUIRE(est.size() == 12u);
  REQUIRE(b.size() == 9u);
  CHECK(b[2] == est[3]);
  CHECK(b[3] == est[3]);
  const auto wide = find_row(read_csv(dir / "bounds_average.csv"), {"A2", "0.05"});
  REQUIRE(wide.size() == 9u);
  CHECK(std::stod(wide[2]) <= std::stod(wide[3]));
  CHECK(read_csv(dir / "bounds_curve.csv").size() == 1u + 2u * 3u);
}

TEST_CASE("bounds under A2 reject outcomes outside the unit interval") {
  const fs::path dir = scratch("scale");
  const fs::path data = dir / "wide_y.csv";
  {
    std::ofstream f(data);
    f << "y,a,m1,m2,x1\n";
    for (int i = 0; i < 40; ++i) f << (i == 7 ? "1.5" : "0") << ',' << i % 2 << ",0,1," << i << '\n';
  }
  const Run r = invoke({"-o", dir.string(), "bounds", data.string()});
  CHECK(r.code == kExitConfig);
  CHECK(r.err.find("E_SCALE") != std::string::npos);
}

TEST_CASE("robustness tau on selection data is positive and finite") {
  const fs::path dir = scratch("robust");
  const fs::path data = export_sample(dir, 2000, "selection");
  const Run r = invoke({"-o", dir.string(), "bounds", data.string()});
  REQUIRE(r.code == kExitOk);
  const auto m = nlohmann::json::parse(slurp(dir / "manifest.json"));
  REQUIRE(m["robustness_tau"].is_number());
  const double tau = m["robustness_tau"].get<double>();
  CHECK(tau > 0.0);
  CHECK(std::isfinite(tau));
  CHECK(m["calibrated_tau"].get<double>() >= 0.0);
}

TEST_CASE("verify passes and a corrupted term exits 5 naming it") {
  const fs::path ok = scratch("verify_ok");
  Run r = invoke({"-o", ok.string(), "-s", "verify.problems=4", "verify"});
  CHECK(r.code == kExitOk);
  CHECK(fs::exists(ok / "audit.csv"));
  CHECK(read_csv(ok / "audit.csv").size() == 5u);
  CHECK(read_csv(ok / "verify_scaling.csv").size() == 1u + 2u * 4u);

  const fs::path bad = scratch("verify_bad");
  r = invoke({"-o", bad.string(), "-s", "verify.problems=4", "verify", "--corrupt-term", "a.SO1"});
  CHECK(r.code == kExitVerify);
  CHECK(r.err.find("E_VERIFY") != std::string::npos);
  CHECK(r.err.find("a.SO1") != std::string::npos);
  CHECK(fs::exists(bad / "audit.csv"));
  const auto m = nlohmann::json::parse(slurp(bad / "manifest.json"));
  CHECK(m["passed"] == false);
}

TEST_CASE("convergence writes one row per size, estimator and panel") {
  const fs::path dir = scratch("convergence");
  const Run r = invoke({"-o", dir.string(), "-s", "simulate.convergence_n=200,400", "-s",
                        "simulate.convergence_reps=2", "convergence"});
  REQUIRE(r.code == kExitOk);
  const auto rows = read_csv(dir / "convergence.csv");
  CHECK(rows.size() == 1u + 2u * 3u * default_panels().size());
}

TEST_CASE("truth export reproduces the decomposition") {
  const fs::path dir = scratch("truth");
  REQUIRE(invoke({"-o", dir.string(), "truth", "--points", "7"}).code == kExitOk);
  const auto rows = read_csv(dir / "truth.csv");
  REQUIRE(rows.size() == 8u);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double sum = std::stod(rows[i][1]) + std::stod(rows[i][2]) + std::stod(rows[i][3]) +
                       std::stod(rows[i][4]);
    CHECK(sum == doctest::Approx(std::stod(rows[i][5])).epsilon(1e-12));
  }
}

TEST_CASE("library error ids map to documented exit codes") {
  CHECK(exit_code_for("E_SCHEMA") == 2);
  CHECK(exit_code_for("E_SCALE") == 2);
  CHECK(exit_code_for("E_REPLICATION") == 3);
  CHECK(exit_code_for("E_POSITIVITY") == 4);
  CHECK(exit_code_for("E_VERIFY") == 5);
  CHECK(exit_code_for("E_RANK") == 1);
}
