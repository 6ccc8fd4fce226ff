// Acceptance runner: one PASS/FAIL line per criterion; exit status 1 when
// any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cli/commands.hpp"
#include "iie/dgp.hpp"
#include "iie/oracle.hpp"
#include "iie/sensitivity.hpp"
#include "iie/simlab.hpp"

using namespace iie;

namespace {

const ArmPair kArms = ArmPair::make(1, 0);

// Criterion 1
constexpr double kTruthTolM1At0 = 0.003;
constexpr double kTruthTolM1At2 = 0.004;
constexpr double kTruthTolPsi = 0.004;
constexpr double kTruthTolRatio = 0.02;
// Criteria 2 and 3
constexpr double kIdentityTol = 1e-10;
constexpr double kZeroTermTol = 1e-14;
// Criterion 4
constexpr double kOneStepSlopeLo = 1.8, kOneStepSlopeHi = 2.2;
constexpr double kPluginSlopeLo = 0.8, kPluginSlopeHi = 1.2;
// Criteria 5 and 6
constexpr int kTableReps = 500;
constexpr std::size_t kTableN = 1000;
constexpr double kEfficientCoverageLo = 91.0, kEfficientCoverageHi = 98.0;
constexpr double kPluginCoverageMax = 50.0;
constexpr double kEfficientBiasMax = 0.02;
constexpr double kDrCoverageLo = 90.0, kDrCoverageHi = 98.0;
constexpr double kDrRmseLo = 0.04, kDrRmseHi = 0.16;
// Criterion 7
constexpr int kConvergenceReps = 200;
constexpr double kFlatSpread = 0.25;
constexpr double kDrOracleLo = 0.8, kDrOracleHi = 1.5;
// Criterion 8
constexpr double kCollapseTol = 1e-14;
constexpr double kWidthRatioTol = 1e-12;
constexpr double kSelectionTau = 0.1;
constexpr int kSelectionGrid = 50;
constexpr double kRecoveryTol = 1e-8;
constexpr double kDecompositionTol = 1e-12;
// Criterion 9
constexpr int kRatioReps = 200;
constexpr double kSeparateCoverageLo = 90.0, kSeparateCoverageHi = 98.0;
constexpr double kRatioRmseFactor = 10.0;

int failures = 0;

void report(int id, bool pass, const std::string& title, const std::string& detail) {
  if (!pass) ++failures;
  std::cout << (pass ? "PASS" : "FAIL") << " criterion " << id << ": " << title << " | " << detail
            << std::endl;
}

std::string fmt(double v, int precision = 4) {
  std::ostringstream os;
  os.precision(precision);
  os << v;
  return os.str();
}

bool within(double v, double target, double tol) { return std::abs(v - target) <= tol; }

void truth_reproduction() {
  const TruthPoint t0 = truth_at(0.0, kArms);
  const TruthPoint t2 = truth_at(2.0, kArms);
  struct Item {
    const char* name;
    double value, target, tol;
  };
  const std::vector<Item> items{{"psi_M1(0)", t0.psi_m1, 0.070, kTruthTolM1At0},
                                {"psi_M1(2)", t2.psi_m1, 0.112, kTruthTolM1At2},
                                {"psi(0)", t0.psi, 0.091, kTruthTolPsi},
                                {"psi(2)", t2.psi, 0.129, kTruthTolPsi},
                                {"psi_R(0)", t0.psi_r, 0.77, kTruthTolRatio},
                                {"psi_R(2)", t2.psi_r, 0.87, kTruthTolRatio}};
  bool pass = true;
  std::string detail;
  for (const auto& it : items) {
    const bool ok = within(it.value, it.target, it.tol);
    pass = pass && ok;
    detail += std::string(it.name) + "=" + fmt(it.value, 5) + (ok ? "" : " (outside " + fmt(it.target) +
                                                                             "+-" + fmt(it.tol) + ")") +
              " ";
  }
  for (int degree : {1, 2}) {
    detail += "; projection degree " + std::to_string(degree) + ": psi(0)=" +
              fmt(projection_truth(DgpSpec{}, degree, 0.0, kArms).psi) + " psi(2)=" +
              fmt(projection_truth(DgpSpec{}, degree, 2.0, kArms).psi);
  }
  report(1, pass, "truth reproduction", detail);
}

void remainder_identities(const BatteryConfig& cfg) {
  const BatteryResult res = run_battery(cfg, kIdentityTol);
  bool exact = true;
  for (const auto& r : res.remainders) exact = exact && r.passed && r.relative_residual <= kIdentityTol;
  double worst_zero = 0.0;
  for (const auto& p : battery_problems(cfg)) {
    for (auto v : {RemainderVariant::NoteTermwise, RemainderVariant::PaperDecomp}) {
      const auto rep = remainder_decomposition(p, p.truth, kArms, v);
      worst_zero = std::max(worst_zero, std::abs(rep.lhs));
      for (const auto& t : rep.terms) worst_zero = std::max(worst_zero, std::abs(t.value));
    }
  }
  report(2, exact && worst_zero <= kZeroTermTol, "remainder identities",
         std::to_string(res.remainders.size()) + " identities, max relative residual " +
             fmt(res.max_remainder_residual) + ", max |term| at true nuisances " + fmt(worst_zero));
}

void centering(const BatteryConfig& cfg) {
  const BatteryResult res = run_battery(cfg, kIdentityTol);
  bool pass = !res.centering.empty();
  for (const auto& c : res.centering) pass = pass && c.relative_error <= kIdentityTol;
  report(3, pass, "influence function centering",
         std::to_string(res.centering.size()) + " checks, max relative error " +
             fmt(res.max_centering_error));
}

void orthogonality(const BatteryConfig& cfg) {
  std::mt19937_64 rng = rng_stream(cfg.seed, 0, "acceptance-scaling");
  double lo1 = 1e300, hi1 = -1e300, lo0 = 1e300, hi0 = -1e300;
  for (const auto& p : battery_problems(cfg)) {
    const auto d = random_direction(p, rng);
    const double s1 = second_order_scaling(p, d, kArms, ScalingTarget::OneStep).slope;
    const double s0 = second_order_scaling(p, d, kArms, ScalingTarget::Plugin).slope;
    lo1 = std::min(lo1, s1);
    hi1 = std::max(hi1, s1);
    lo0 = std::min(lo0, s0);
    hi0 = std::max(hi0, s0);
  }
  const bool pass = lo1 >= kOneStepSlopeLo && hi1 <= kOneStepSlopeHi && lo0 >= kPluginSlopeLo &&
                    hi0 <= kPluginSlopeHi;
  report(4, pass, "orthogonality scaling",
         "one-step slopes [" + fmt(lo1) + ", " + fmt(hi1) + "], plug-in slopes [" + fmt(lo0) + ", " +
             fmt(hi0) + "] over " + std::to_string(cfg.problems) + " problems");
}

void simulation_tables(int threads) {
  TableConfig cfg;
  cfg.n = kTableN;
  cfg.reps = kTableReps;
  cfg.points = {0.0, 2.0};
  cfg.projections = {1};
  cfg.threads = threads;
  const McReport rep = run_table(cfg);

  const McCell& eff = rep.find("projection", "Efficient", "Linear", 0.0);
  const McCell& plug = rep.find("projection", "Plugin", "Linear", 0.0);
  const bool p5 = eff.coverage >= kEfficientCoverageLo && eff.coverage <= kEfficientCoverageHi &&
                  plug.coverage < kPluginCoverageMax && std::abs(eff.bias) <= kEfficientBiasMax;
  report(5, p5, "projection table at n=1000, x=0",
         "efficient coverage " + fmt(eff.coverage) + "%, bias " + fmt(eff.bias) + "; plug-in coverage " +
             fmt(plug.coverage) + "%; failures " + std::to_string(eff.failures));

  const McCell& dr0 = rep.find("nonparametric", "DR-Learner", "", 0.0);
  const McCell& dr2 = rep.find("nonparametric", "DR-Learner", "", 2.0);
  const bool p6 = dr0.coverage >= kDrCoverageLo && dr0.coverage <= kDrCoverageHi &&
                  dr0.rmse >= kDrRmseLo && dr0.rmse <= kDrRmseHi && dr2.rmse > dr0.rmse;
  report(6, p6, "nonparametric table at n=1000",
         "DR-Learner coverage(0) " + fmt(dr0.coverage) + "%, RMSE(0) " + fmt(dr0.rmse) + ", RMSE(2) " +
             fmt(dr2.rmse));
}

void convergence(int threads) {
  ConvergenceConfig cfg;
  cfg.reps = kConvergenceReps;
  cfg.threads = threads;
  const auto rows = run_convergence(cfg);
  auto series = [&](const std::string& panel, const std::string& estimator) {
    std::vector<const ConvergenceRow*> out;
    for (const auto& r : rows) {
      if (r.panel == panel && r.estimator == estimator) out.push_back(&r);
    }
    return out;
  };
  const auto flat = series("all-fast", "plugin");
  double lo = 1e300, hi = 0.0;
  for (const auto* r : flat) {
    lo = std::min(lo, r->scaled_rmse);
    hi = std::max(hi, r->scaled_rmse);
  }
  const bool flat_ok = !flat.empty() && hi / lo - 1.0 <= kFlatSpread;

  const auto plug = series("slow-mu", "plugin");
  const auto dr = series("slow-mu", "dr-learner");
  const auto oracle = series("slow-mu", "oracle");
  bool increasing = plug.size() == oracle.size() && plug.size() > 1;
  bool dr_ok = dr.size() == oracle.size() && !dr.empty();
  std::string ratios, dr_ratios;
  double last = -1.0;
  for (std::size_t i = 0; i < plug.size() && i < oracle.size(); ++i) {
    const double r = plug[i]->rmse / oracle[i]->rmse;
    increasing = increasing && r > last;
    last = r;
    ratios += fmt(r, 3) + " ";
  }
  for (std::size_t i = 0; i < dr.size() && i < oracle.size(); ++i) {
    const double r = dr[i]->rmse / oracle[i]->rmse;
    dr_ok = dr_ok && r >= kDrOracleLo && r <= kDrOracleHi;
    dr_ratios += fmt(r, 3) + " ";
  }
  report(7, flat_ok && increasing && dr_ok, "convergence experiment",
         "all-fast plug-in sqrt(n) RMSE spread " + fmt(hi / lo - 1.0, 3) + "; slow-mu plug-in/oracle " +
             ratios + "; DR/oracle " + dr_ratios);
}

void sensitivity_suite() {
  const std::vector<AssumptionKind> kinds{AssumptionKind::A1, AssumptionKind::A2, AssumptionKind::A3};
  const std::vector<double> grid = linspace(-2.0, 4.0, kSelectionGrid);

  double collapse = 0.0;
  std::mt19937_64 rng(5);
  const DiscreteProblem p = random_problem(rng, 4, 0.05);
  const double psi_avg = enumerate_functional(p, Functional::PsiM1, kArms);
  for (auto kind : kinds) {
    const auto sa = SensitivityAssumption::make(kind, 0.0);
    const Interval avg = bounds_average(CovariateLaw::from_problem(p), kArms, sa);
    collapse = std::max({collapse, std::abs(avg.lb - psi_avg), std::abs(avg.ub - psi_avg)});
    for (double x : grid) {
      const NuisancePoint np = dgp_point(x);
      const double psi = psi_m1_plugin(np, kArms);
      const Interval b = bounds_psi_m1_at_x(np, kArms, sa);
      collapse = std::max({collapse, std::abs(b.lb - psi), std::abs(b.ub - psi)});
      const Interval cell = bound_mu(sa, np.mu[1][0], np.joint[1][0]);
      collapse = std::max({collapse, std::abs(cell.lb), std::abs(cell.ub)});
    }
  }
  const bool collapse_ok = collapse <= kCollapseTol;

  double width_err = 0.0;
  for (double x : grid) {
    const NuisancePoint np = dgp_point(x);
    for (double tau : {0.01, 0.1, 0.3}) {
      const double w1 =
          bounds_psi_m1_at_x(np, kArms, SensitivityAssumption::make(AssumptionKind::A1, tau)).width();
      const double w2 =
          bounds_psi_m1_at_x(np, kArms, SensitivityAssumption::make(AssumptionKind::A2, tau)).width();
      width_err = std::max(width_err, std::abs(w1 - 2.0 * w2) / std::max(1e-300, std::abs(w1)));
    }
  }
  const bool width_ok = width_err <= kWidthRatioTol;

  int bracketed = 0;
  for (const auto& r : selection_curves(10.0 / 3.0, kSelectionTau, grid, kArms)) {
    bracketed += r.lb <= r.psi_m1 + 1e-12 && r.psi_m1 <= r.ub + 1e-12;
  }
  const bool bracket_ok = bracketed == kSelectionGrid;

  double recovery = 0.0;
  const double sigma = 10.0 / 3.0;
  const SelectionNuisances observed(sigma);
  for (double x : grid) {
    const double r = recover_known_selection(observed.at(x), kArms, selection_equality_at(x, sigma));
    recovery = std::max(recovery, std::abs(r - truth_at(x, kArms).psi_m1));
  }
  const bool recovery_ok = recovery <= kRecoveryTol;

  double decomposition = 0.0;
  for (double x : grid) {
    const NuisancePoint np = dgp_point(x);
    const double psi = np.outcome_mean(1) - np.outcome_mean(0);
    for (auto kind : kinds) {
      const auto e = extension_bounds(extension_terms_at_x(np, kArms),
                                      SensitivityAssumption::make(kind, 0.1).constants());
      decomposition = std::max({decomposition, std::abs(e.iie.lb + e.ide.ub - psi),
                                std::abs(e.iie.ub + e.ide.lb - psi)});
    }
  }
  const bool decomposition_ok = decomposition <= kDecompositionTol;

  report(8, collapse_ok && width_ok && bracket_ok && recovery_ok && decomposition_ok,
         "sensitivity suite",
         "tau=0 collapse " + fmt(collapse) + ", A1/A2 width error " + fmt(width_err) + ", bracketed " +
             std::to_string(bracketed) + "/" + std::to_string(kSelectionGrid) + ", recovery error " +
             fmt(recovery) + ", decomposition error " + fmt(decomposition));
}

void proportion_mediated(int threads) {
  TableConfig cfg;
  cfg.n = kTableN;
  cfg.reps = kRatioReps;
  cfg.points = {0.0, 2.0};
  cfg.projections = {1};
  cfg.projection = false;
  cfg.proportion_mediated = true;
  cfg.threads = threads;
  const McReport rep = run_table(cfg);
  bool pass = true;
  std::string detail;
  for (double x : cfg.points) {
    const McCell& sep = rep.find("proportion-mediated", "Separate", "", x, "psi_R");
    const McCell& ratio = rep.find("proportion-mediated", "Ratio", "", x, "psi_R");
    const bool ok = sep.coverage >= kSeparateCoverageLo && sep.coverage <= kSeparateCoverageHi &&
                    ratio.rmse >= kRatioRmseFactor * sep.rmse;
    pass = pass && ok;
    detail += "x=" + fmt(x) + ": separate coverage " + fmt(sep.coverage) + "%, RMSE " + fmt(sep.rmse) +
              "; ratio RMSE " + fmt(ratio.rmse) + " (" + std::to_string(ratio.failures) +
              " failed reps); ";
  }
  report(9, pass, "proportion mediated, separate vs ratio", detail);
}

void audit() {
  namespace fs = std::filesystem;
  const fs::path dir = fs::temp_directory_path() / "iie_acceptance_verify";
  fs::remove_all(dir);
  std::ostringstream out, err;
  const int code = cli::run({"-o", dir.string(), "verify"}, out, err);
  std::ifstream in(dir / "audit.csv");
  std::string line;
  int rows = -1;
  while (std::getline(in, line)) ++rows;
  std::string summary = out.str();
  const auto pos = summary.find("benkeser-ran audit");
  summary = pos == std::string::npos ? "no audit summary"
                                     : summary.substr(pos, summary.find('\n', pos) - pos);
  report(10, code == cli::kExitOk && rows == BatteryConfig{}.problems, "remainder audit table",
         "verify exit " + std::to_string(code) + ", " + std::to_string(rows) + " audit rows; " + summary);
}

template <typename F>
void timed(F&& f) {
  const auto start = std::chrono::steady_clock::now();
  f();
  const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  std::cout << "  (" << fmt(s, 3) << " s)" << std::endl;
}

}  // namespace

int main() {
  const int threads = default_threads();
  const BatteryConfig battery;
  timed(truth_reproduction);
  timed([&] { remainder_identities(battery); });
  timed([&] { centering(battery); });
  timed([&] { orthogonality(battery); });
  timed([&] { simulation_tables(threads); });
  timed([&] { convergence(threads); });
  timed(sensitivity_suite);
  timed([&] { proportion_mediated(threads); });
  timed(audit);
  std::cout << (failures == 0 ? "ALL CRITERIA PASS" : std::to_string(failures) + " CRITERIA FAIL")
            << std::endl;
  return failures == 0 ? 0 : 1;
}
