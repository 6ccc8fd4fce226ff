#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <boost/property_tree/ptree.hpp>

#include "iie/estimators.hpp"
#include "iie/nuisance.hpp"
#include "iie/oracle.hpp"
#include "iie/sensitivity.hpp"
#include "iie/simlab.hpp"

namespace iie::cli {

// Every setting of a run. Keys are "section.name" except the root seed.
struct RunConfig {
  std::uint64_t seed = 20240611;
  int threads = 0;  // 0 defers to IIE_THREADS

  // [data]
  std::string data_path;
  std::string output_dir = ".";

  // [estimator]
  int arm = 1;
  int arm_prime = 0;
  int folds = 2;
  FoldMode fold_mode = FoldMode::SwapAverage;
  std::vector<double> query{0.0, 1.0, 2.0};
  std::vector<int> projections{1, 2};
  std::size_t v_index = 0;
  BasisKind basis = BasisKind::Polynomial;
  int degree = 1;
  int knots = 4;
  double ridge = 0.0;
  double floor = kPositivityFloor;
  double positivity = kPositivityFloor;  // enforced on every evaluated row
  double bandwidth = 0.0;  // 0 selects by cross-validation

  // [sensitivity]
  AssumptionKind assumption = AssumptionKind::A2;
  std::vector<double> tau{0.0, 0.01, 0.02, 0.05, 0.1, 0.2};

  // [simulate]
  std::size_t sim_n = 1000;
  int sim_reps = 500;
  std::vector<double> sim_points{0.0, 2.0};
  std::vector<int> sim_projections{1, 2};
  bool proportion_mediated = false;
  double failure_cap = 0.01;
  std::vector<std::size_t> convergence_n{500, 1000, 2000, 4000, 8000, 16000};
  int convergence_reps = 200;

  // [verify]
  int problems = 20;
  std::vector<int> grid_sizes{2, 3, 5};
  double verify_floor = 0.05;
  double perturbation = 0.2;
  double tolerance = 1e-10;
  std::string corrupt_term;

  ArmPair arms() const;
  NuisanceConfig nuisance() const;
  BandwidthPolicy bandwidth_policy() const;
  TableConfig table() const;
  ConvergenceConfig convergence() const;
  BatteryConfig battery() const;
  int thread_count() const;
};

// Throws ConfigError on unknown keys or malformed values.
RunConfig from_ptree(const boost::property_tree::ptree& pt);
boost::property_tree::ptree to_ptree(const RunConfig& cfg);

RunConfig load_config(const std::string& path);

// Applies "section.key=value" (or "seed=value") overrides in order.
void apply_overrides(RunConfig& cfg, const std::vector<std::string>& overrides);

// Canonical INI text; the manifest hashes this.
std::string to_ini(const RunConfig& cfg);

std::string format_double(double v);

}  // namespace iie::cli
