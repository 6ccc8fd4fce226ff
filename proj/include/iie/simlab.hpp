#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "iie/dgp.hpp"
#include "iie/estimators.hpp"
#include "iie/nuisance.hpp"

namespace iie {

// Independent stream for (seed, index, name); results do not depend on
// which worker runs which replication.
std::mt19937_64 rng_stream(std::uint64_t seed, std::uint64_t index, const std::string& name);

// Runs body(i) for i in [0, count) on up to `threads` workers.
void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& body);

// Threads from IIE_THREADS, else 1.
int default_threads();

// Quadrature for the clamped normal covariate law: Simpson nodes on
// [x_lo, x_hi] plus point masses at both ends.
struct XQuadrature {
  std::vector<double> x;
  std::vector<double> w;
};

XQuadrature x_law_quadrature(const DgpSpec& spec, int intervals = 6000);

// Coefficients of the weighted L2 projection of f onto 1, x, ..., x^degree.
Eigen::VectorXd projection_coefficients(const XQuadrature& q, int degree,
                                        const std::function<double(double)>& f);
double projection_value(const Eigen::VectorXd& beta, double x);

// Projection targets g(x; beta*) of the truth curves.
struct ProjectionTruth {
  double psi_m1 = 0.0;
  double psi = 0.0;
  double psi_r = 0.0;        // projection of psi_R(x)
  double ratio_of_proj = 0.0;  // psi_m1 / psi of the projections
};

ProjectionTruth projection_truth(const DgpSpec& spec, int degree, double x,
                                 ArmPair arms = ArmPair::make(1, 0));

// ---------------------------------------------------------------- tables

struct TableConfig {
  std::size_t n = 1000;
  int reps = 500;
  std::uint64_t seed = 20240611;
  std::vector<double> points{0.0, 2.0};
  std::vector<int> projections{1, 2};
  bool projection = true;
  bool dr_learner = true;
  bool proportion_mediated = false;
  double failure_cap = 0.01;
  int threads = 1;
  DgpSpec dgp;
  NuisanceConfig nuisance;
  BandwidthPolicy bandwidth;
  ArmPair arms = ArmPair::make(1, 0);
};

void validate(const TableConfig& cfg);

struct McCell {
  std::string table;     // projection, nonparametric, proportion-mediated
  std::string estimand;  // psi_M1, psi, psi_R
  std::string strategy;  // Efficient, Plugin, DR-Learner, Ratio, Separate
  std::string projection;  // Linear, Quadratic or empty
  double point = 0.0;
  std::size_t n = 0;
  double truth = 0.0;
  double bias = 0.0;
  double sd = 0.0;
  double rmse = 0.0;
  double coverage = 0.0;  // percent, NaN when no interval
  int reps = 0;
  int failures = 0;
  double median_estimate = 0.0;
};

struct McReport {
  std::vector<McCell> cells;
  int reps = 0;
  std::uint64_t seed = 0;
  bool failure_cap_exceeded = false;

  const McCell& find(const std::string& table, const std::string& strategy,
                     const std::string& projection, double point,
                     const std::string& estimand = "psi_M1") const;
};

McReport run_table(const TableConfig& cfg);

// ---------------------------------------------------------------- convergence

inline constexpr std::size_t kPilotReps = 5;

struct ConvergencePanel {
  std::string name;
  RateSpec rates;
};

std::vector<ConvergencePanel> default_panels();

struct ConvergenceConfig {
  std::vector<ConvergencePanel> panels = default_panels();
  std::vector<std::size_t> n_grid{500, 1000, 2000, 4000, 8000, 16000};
  int reps = 200;
  std::uint64_t seed = 20240611;
  int grid_points = 31;
  double grid_lo = -0.4;
  double grid_hi = 2.4;
  int threads = 1;
  DgpSpec dgp;
  BandwidthPolicy bandwidth;
  ArmPair arms = ArmPair::make(1, 0);
};

void validate(const ConvergenceConfig& cfg);

struct ConvergenceRow {
  std::string panel;
  std::size_t n = 0;
  std::string estimator;  // plugin, dr-learner, oracle
  double rmse = 0.0;
  double scaled_rmse = 0.0;
  double bandwidth = 0.0;
  int reps = 0;
};

std::vector<ConvergenceRow> run_convergence(const ConvergenceConfig& cfg);

// ---------------------------------------------------------------- selection

struct SelectionRow {
  double x = 0.0;
  double tau_star = 0.0;
  double psi_m1 = 0.0;      // true effect
  double psi_m1_bar = 0.0;  // biased target from the observed regression
  double recovered = 0.0;   // known-selection recovery
  double lb = 0.0;
  double ub = 0.0;
};

// Reference curves of the selection design under assumption A2 with scalar tau.
std::vector<SelectionRow> selection_curves(double sigma, double tau, const std::vector<double>& grid,
                                           ArmPair arms = ArmPair::make(1, 0));

std::vector<double> linspace(double lo, double hi, int points);

}  // namespace iie
