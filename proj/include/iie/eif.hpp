#pragma once

#include <optional>
#include <vector>

#include "iie/model.hpp"
#include "iie/sensitivity.hpp"

namespace iie {

inline constexpr double kRatioDelta = 1e-3;

// Nuisances of the total effect: propensity and arm-specific outcome means.
struct CatePoint {
  double pi1 = 0.5;
  double mu0 = 0.0;
  double mu1 = 0.0;

  double pi(int a) const { return a == 1 ? pi1 : 1.0 - pi1; }
  double mu(int a) const { return a == 1 ? mu1 : mu0; }
};

// E[Y | A, X] obtained by averaging the outcome regression over the joint
// mediator law.
CatePoint cate_point(const NuisancePoint& np);

enum class ArmTerm { A, APrime };

// Uncentered influence function of the M1 indirect effect.
double eif_psi_m1(const CellObs& z, const NuisancePoint& np, ArmPair arms);

// Uncentered influence function of one arm component; the difference of the
// two components equals eif_psi_m1.
double eif_psi_m1_arm(const CellObs& z, const NuisancePoint& np, ArmPair arms, ArmTerm which);

// Augmented inverse probability weighted pseudo-outcome of the total effect.
double eif_cate(const CellObs& z, const CatePoint& cp, ArmPair arms);

// Influence function of the proportion mediated psi_M1(x) / psi(x).
double eif_ratio(const CellObs& z, const NuisancePoint& np, const CatePoint& cp, ArmPair arms,
                 double delta = kRatioDelta);

struct BoundZetas {
  double z1a = 0.0, z1ap = 0.0, z2a = 0.0, z2ap = 0.0;
};

BoundZetas bound_zetas(const NuisancePoint& np, ArmPair arms);

struct BoundComponents {
  double phi_1a = 0.0;
  double phi_1ap = 0.0;
  double phi_2a = 0.0;
  double phi_2ap = 0.0;
};

BoundComponents eif_bound_components(const CellObs& z, const NuisancePoint& np, ArmPair arms);

// Influence functions of the lower and upper bounds on psi_M1.
Interval eif_bounds(const CellObs& z, const NuisancePoint& np, ArmPair arms,
                    const SensitivityConstants& k);
Interval eif_bounds(const CellObs& z, const NuisancePoint& np, ArmPair arms,
                    const SensitivityAssumption& sa);

struct ExtensionComponents {
  double g1a_m2 = 0.0;
  double g1ap_m2 = 0.0;
  double g2a_m2 = 0.0;
  double g2ap_m2 = 0.0;
  double g1_iie = 0.0;
  double g2_iie = 0.0;
};

ExtensionComponents eif_bound_extensions(const CellObs& z, const NuisancePoint& np, ArmPair arms);

// Pseudo-outcomes for a whole sample with a single nuisance set.
struct PseudoOutcomes {
  Estimand estimand = Estimand::PsiM1;
  Provenance provenance = Provenance::Fitted;
  std::vector<double> values;
  std::vector<long> rows;
};

PseudoOutcomes compute_pseudo_outcomes(const Sample& s, const NuisanceSet& eta, Estimand estimand,
                                       ArmPair arms,
                                       std::optional<SensitivityAssumption> sa = std::nullopt,
                                       double floor = kPositivityFloor,
                                       double delta = kRatioDelta);

}  // namespace iie
