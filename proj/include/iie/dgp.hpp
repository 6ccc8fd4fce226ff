#pragma once

#include <cmath>
#include <random>
#include <vector>

#include "iie/model.hpp"
#include "iie/sensitivity.hpp"

namespace iie {

// Simulation design with two binary mediators confounded by a latent binary
// variable, one covariate and a binary outcome.
struct DgpSpec {
  double x_mean = 1.0;
  double x_sd = std::sqrt(0.5);
  double x_lo = -2.0;
  double x_hi = 4.0;
};

double dgp_propensity(double x);
double dgp_zeta(double x);

// P(M1 = 1 | U = u, A = a, X = x) and P(M2 = 1 | U = u, A = a, X = x).
double dgp_m1_prob(int u, int a, double x);
double dgp_m2_prob(int u, int a, double x);

// Joint mediator law of arm a, mixed over the latent variable.
Cells dgp_joint(int a, double x);

// Normalized outcome mean, identical across arms.
double dgp_outcome(int m1, int m2, double x);

// Range of the raw outcome surface over a 4001-point grid on [-2, 4].
struct OutcomeRange {
  double z_lo = 0.0;
  double z_hi = 0.0;
};
const OutcomeRange& dgp_outcome_range();

class DgpNuisances : public NuisanceSet {
 public:
  DgpNuisances() : NuisanceSet(Provenance::TrueDgp) {}

 protected:
  NuisancePoint evaluate(std::span<const double> x) const override;
};

NuisancePoint dgp_point(double x);

Sample dgp_sample(const DgpSpec& spec, std::size_t n, std::mt19937_64& rng);

// Draws from the observed law given by eta with the design's covariate law.
Sample sample_from(const NuisanceSet& eta, const DgpSpec& spec, std::size_t n,
                   std::mt19937_64& rng);

struct TruthPoint {
  double x = 0.0;
  double psi_m1 = 0.0;
  double psi = 0.0;
  double psi_r = 0.0;
  double psi_m2 = 0.0;
  double psi_cov = 0.0;
  double psi_ide = 0.0;
  double psi_iie = 0.0;
};

TruthPoint truth_at(double x, ArmPair arms = ArmPair::make(1, 0));
std::vector<TruthPoint> truth_curves(const std::vector<double>& grid,
                                     ArmPair arms = ArmPair::make(1, 0));

// Largest absolute inverse weight of the influence function at x: the
// arm-a ratio weight over mediator cells and the arm-a' weight 1 / pi_a'.
double max_inverse_weight(double x, ArmPair arms = ArmPair::make(1, 0));

// Selection design: the off-cell counterfactual mean sits exactly on the A2
// lower bound for x < 1 and on the A2 upper bound for x >= 1.
double selection_tau(double x, double sigma);

class SelectionNuisances : public NuisanceSet {
 public:
  explicit SelectionNuisances(double sigma) : NuisanceSet(Provenance::TrueDgp), sigma_(sigma) {}
  double sigma() const { return sigma_; }

 protected:
  NuisancePoint evaluate(std::span<const double> x) const override;

 private:
  double sigma_;
};

// Equality model that generated the observed outcome regression at x.
SelectionEquality selection_equality_at(double x, double sigma);

}  // namespace iie
