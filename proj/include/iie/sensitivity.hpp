#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "iie/model.hpp"

namespace iie {

// Bounds on the off-cell counterfactual mean take the form
//   mu* - mu in [ (c_l mu + t_l) f_l(tau) (1 - p), (c_u mu + t_u) f_u(tau) (1 - p) ].
enum class AssumptionKind { A1, A2, A3 };

std::string to_string(AssumptionKind k);
AssumptionKind parse_assumption(const std::string& s);

struct SensitivityConstants {
  double c_l = 0.0, t_l = 0.0, f_l = 0.0;
  double c_u = 0.0, t_u = 0.0, f_u = 0.0;
};

struct SensitivityAssumption {
  AssumptionKind kind = AssumptionKind::A1;
  double tau = 0.0;

  static SensitivityAssumption make(AssumptionKind kind, double tau);
  SensitivityConstants constants() const;
  bool requires_unit_outcome() const { return kind != AssumptionKind::A1; }
};

// Throws ScaleError when an assumption needs outcomes in [0, 1] and the
// outcome regression leaves that range.
void check_outcome_scale(const SensitivityAssumption& sa, const NuisancePoint& np);

struct Interval {
  double lb = 0.0;
  double ub = 0.0;
  double width() const { return ub - lb; }
  bool contains(double v, double tol = 0.0) const { return v >= lb - tol && v <= ub + tol; }
};

// Bounds on mu*(off cells) - mu for one cell with outcome mean mu and
// cell probability p_cell.
Interval bound_mu(const SensitivityAssumption& sa, double mu, double p_cell);

// Pointwise quantities that enter every bound, for arm pair (a, a').
struct BoundTermsAtX {
  double psi_bar = 0.0;       // sum mu (p1 - p1') p2'
  double psi_bar_a = 0.0;     // sum mu p1 p2'
  double psi_bar_ap = 0.0;    // sum mu p1' p2'
  double gamma_1a = 0.0;      // sum mu p12 p1 p2'
  double gamma_1ap = 0.0;     // sum mu p12 p1' p2'
  double gamma_2a = 0.0;      // sum p12 p1 p2'
  double gamma_2ap = 0.0;     // sum p12 p1' p2'
};

BoundTermsAtX bound_terms_at_x(const NuisancePoint& np, ArmPair arms);

Interval bounds_psi_m1_at_x(const NuisancePoint& np, ArmPair arms, const SensitivityConstants& k);
Interval bounds_psi_m1_at_x(const NuisancePoint& np, ArmPair arms, const SensitivityAssumption& sa);
Interval bounds_psi_m1_at_x(const NuisanceSet& eta, std::span<const double> x, ArmPair arms,
                            const SensitivityAssumption& sa);

// Bounds from averaged terms; averaging the pointwise bounds gives the same value.
Interval bounds_from_terms(const BoundTermsAtX& t, const SensitivityConstants& k);

// Weighted covariate law used for averaged bounds: points and masses.
struct CovariateLaw {
  std::vector<NuisancePoint> points;
  std::vector<double> weights;

  static CovariateLaw from_problem(const DiscreteProblem& p);
  static CovariateLaw empirical(const NuisanceSet& eta, const Sample& s);
};

BoundTermsAtX average_bound_terms(const CovariateLaw& law, ArmPair arms);
Interval bounds_average(const CovariateLaw& law, ArmPair arms, const SensitivityAssumption& sa);

// Bounds on the remaining interventional effects and the decomposition.
struct ExtensionTermsAtX {
  double psi_arm = 0.0;        // E[Y | a, x]
  double psi_arm_prime = 0.0;  // E[Y | a', x]
  double iie_bar_ap = 0.0;     // sum mu_a p12(a')
  double gamma_1_iie = 0.0;    // sum mu_a p12(a) p12(a')
  double gamma_2_iie = 0.0;    // sum p12(a) p12(a')
  double m2_bar = 0.0;         // sum mu_a (p2 - p2') p1
  double m2_bar_a = 0.0;       // sum mu_a p2 p1
  double m2_bar_ap = 0.0;      // sum mu_a p2' p1
  double gamma_1a_m2 = 0.0;    // sum mu_a p12 p1 p2
  double gamma_1ap_m2 = 0.0;   // sum mu_a p12 p1 p2'
  double gamma_2a_m2 = 0.0;    // sum p12 p1 p2
  double gamma_2ap_m2 = 0.0;   // sum p12 p1 p2'
  BoundTermsAtX m1;
};

ExtensionTermsAtX extension_terms_at_x(const NuisancePoint& np, ArmPair arms);
ExtensionTermsAtX average_extension_terms(const CovariateLaw& law, ArmPair arms);

struct ExtensionBounds {
  double psi_total = 0.0;
  Interval m1, m2, iie, ide, cov;
};

ExtensionBounds extension_bounds(const ExtensionTermsAtX& t, const SensitivityConstants& k);

// Signed equality model mu* - mu = f (c mu + t) (1 - p) for a known selection
// function.
struct SelectionEquality {
  double c = 0.0, t = 0.0, f = 0.0;
  static SelectionEquality lower(const SensitivityAssumption& sa);
  static SelectionEquality upper(const SensitivityAssumption& sa);
};

double recover_known_selection(const NuisancePoint& np, ArmPair arms, const SelectionEquality& eq);

// One bound estimate per sensitivity value, used for the robustness value.
struct BoundEstimate {
  double tau = 0.0;
  double lb = 0.0, ub = 0.0;
  double se_lb = 0.0, se_ub = 0.0;
};

// Smallest tau whose confidence-augmented bound interval contains zero.
std::optional<double> robustness_tau(const std::vector<BoundEstimate>& grid, double z = 1.959963984540054);

// Calibration of tau from omitting covariates: the largest relative gap
// between the covariate-adjusted and unadjusted cell means of arm a.
double calibrate_tau(const Sample& s, const NuisanceSet& eta, int arm);

}  // namespace iie
