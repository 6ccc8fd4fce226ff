#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "iie/eif.hpp"
#include "iie/model.hpp"
#include "iie/sensitivity.hpp"

namespace iie {

// Functionals with an exact enumeration on a discrete problem. Those marked
// with an influence function can also be evaluated through exact_plugin_mean.
enum class Functional {
  PsiM1,          // influence function: eif_psi_m1
  PsiM1Arm,       // eif_psi_m1_arm (a)
  PsiM1ArmPrime,  // eif_psi_m1_arm (a')
  Cate,           // eif_cate
  Ratio,          // eif_ratio
  BoundLower,     // eif_bounds lower
  BoundUpper,     // eif_bounds upper
  Gamma1a,
  Gamma1ap,
  Gamma2a,
  Gamma2ap,
  Gamma1aM2,
  Gamma1apM2,
  Gamma2aM2,
  Gamma2apM2,
  Gamma1IIE,
  Gamma2IIE,
  // enumeration only
  PsiM2,
  PsiCov,
  PsiIDE,
  PsiIIE,
  M2Lower,
  M2Upper,
  IIELower,
  IIEUpper,
  IDELower,
  IDEUpper,
  CovLower,
  CovUpper,
};

std::string to_string(Functional f);
bool has_influence_function(Functional f);
std::vector<Functional> functionals_with_influence_function();

// Direct summation over covariate support, mediator cells and arms.
double enumerate_functional(const DiscreteProblem& p, Functional f, ArmPair arms,
                            std::optional<SensitivityAssumption> sa = std::nullopt);

// P[IF(Z; eta_hat)] under the true law of the problem, computed exactly.
double exact_plugin_mean(const DiscreteProblem& p, const std::vector<NuisancePoint>& eta_hat,
                         Functional f, ArmPair arms,
                         std::optional<SensitivityAssumption> sa = std::nullopt);

// Plug-in value of the M1 effect average under the covariate masses of p.
double plugin_average(const DiscreteProblem& p, const std::vector<NuisancePoint>& eta_hat,
                      ArmPair arms);

struct BatteryConfig {
  std::vector<int> grid_sizes{2, 3, 5};
  double floor = 0.05;
  double perturbation = 0.2;
  int problems = 20;
  std::uint64_t seed = 20240611;
};

DiscreteProblem random_problem(std::mt19937_64& rng, int grid_size, double floor);

// Logit-scale perturbation of every nuisance component, with the mediator
// marginals recomputed from the perturbed joint law.
std::vector<NuisancePoint> perturb_problem(const DiscreteProblem& p, std::mt19937_64& rng,
                                           double relative);

// A fixed perturbation direction per support point.
struct Direction {
  double pi = 0.0;
  std::array<Cells, 2> mu{};
  std::array<Cells, 2> joint{};
};

std::vector<Direction> random_direction(const DiscreteProblem& p, std::mt19937_64& rng);
std::vector<NuisancePoint> perturb_along(const DiscreteProblem& p, const std::vector<Direction>& d,
                                         double eps);

std::vector<DiscreteProblem> battery_problems(const BatteryConfig& cfg);

struct RemainderTerm {
  std::string name;
  double value = 0.0;
};

struct RemainderReport {
  std::string variant;
  double lhs = 0.0;
  std::vector<RemainderTerm> terms;
  double rhs = 0.0;
  double residual = 0.0;
  double relative_residual = 0.0;
  bool passed = false;
  // Descriptive extras for the audit variant.
  double missing_terms = 0.0;
  double residual_minus_missing = 0.0;
};

enum class RemainderVariant { NoteTermwise, PaperDecomp, BenkeserRan };
std::string to_string(RemainderVariant v);

RemainderReport remainder_decomposition(const DiscreteProblem& p,
                                        const std::vector<NuisancePoint>& eta_hat, ArmPair arms,
                                        RemainderVariant variant, double tol = 1e-10);

enum class GammaComponent { Phi1a, Phi1ap, Phi2a, Phi2ap };
std::string to_string(GammaComponent g);

RemainderReport gamma_remainder(const DiscreteProblem& p, const std::vector<NuisancePoint>& eta_hat,
                                ArmPair arms, GammaComponent which, double tol = 1e-10);

struct ScalingReport {
  std::vector<double> eps;
  std::vector<double> bias;
  double slope = 0.0;
};

enum class ScalingTarget { OneStep, Plugin };

ScalingReport second_order_scaling(const DiscreteProblem& p, const std::vector<Direction>& d,
                                   ArmPair arms, ScalingTarget target,
                                   std::vector<double> eps = {1e-3, 3.1622776601683794e-4, 1e-4,
                                                              3.1622776601683794e-5, 1e-5});

// Full verification battery: remainder identities, gamma remainders,
// centering of every influence function and the descriptive audit.
struct CenteringCheck {
  std::string name;
  double enumerated = 0.0;
  double expected = 0.0;
  double relative_error = 0.0;
  bool passed = false;
};

struct BatteryResult {
  std::vector<RemainderReport> remainders;  // exact identities
  std::vector<RemainderReport> audit;       // descriptive only
  std::vector<CenteringCheck> centering;
  double max_remainder_residual = 0.0;
  double max_centering_error = 0.0;
  bool passed = false;
};

BatteryResult run_battery(const BatteryConfig& cfg, double tol = 1e-10,
                          const std::string& corrupt_term = "");

}  // namespace iie
