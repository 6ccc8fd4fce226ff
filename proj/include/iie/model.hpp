#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "iie/errors.hpp"

namespace iie {

inline constexpr double kPositivityFloor = 1e-6;
inline constexpr double kNormalizationTol = 1e-9;

// Mediator cells are stored as 2 * m1 + m2.
inline constexpr int cell_index(int m1, int m2) { return 2 * m1 + m2; }
inline constexpr int cell_m1(int cell) { return cell / 2; }
inline constexpr int cell_m2(int cell) { return cell % 2; }

using Cells = std::array<double, 4>;
using Binary = std::array<double, 2>;

struct ArmPair {
  int a = 1;
  int a_prime = 0;

  static ArmPair make(int a, int a_prime);
  ArmPair swapped() const { return ArmPair::make(a_prime, a); }
};

enum class Provenance { TrueDgp, Fitted, Synthetic, Marginalized };

std::string to_string(Provenance p);

enum class Estimand {
  PsiM1,
  PsiM1Arm,
  PsiM1ArmPrime,
  Cate,
  Ratio,
  BoundLower,
  BoundUpper,
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

std::string to_string(Estimand e);

// Observed unit with owning covariate storage.
struct Observation {
  double y = 0.0;
  int a = 0;
  int m1 = 0;
  int m2 = 0;
  std::vector<double> x;
};

// The non-covariate part of an observation; influence functions act on this
// together with nuisance values already evaluated at the unit's covariates.
struct CellObs {
  double y = 0.0;
  int a = 0;
  int m1 = 0;
  int m2 = 0;
};

void validate_observation(const Observation& o, std::size_t dim);

// Nuisance values at a single covariate point, for both arms.
struct NuisancePoint {
  double pi1 = 0.5;
  std::array<Cells, 2> mu{};
  std::array<Cells, 2> joint{};
  std::array<Binary, 2> m1{};
  std::array<Binary, 2> m2{};

  double pi(int a) const { return a == 1 ? pi1 : 1.0 - pi1; }
  double mu_at(int a, int v1, int v2) const { return mu[a][cell_index(v1, v2)]; }
  double joint_at(int a, int v1, int v2) const { return joint[a][cell_index(v1, v2)]; }
  double p_m1(int a, int v) const { return m1[a][v]; }
  double p_m2(int a, int v) const { return m2[a][v]; }

  // E[Y | A = a, X = x] implied by the outcome and joint mediator law.
  double outcome_mean(int a) const;

  void fill_marginals();
  static NuisancePoint from_joint(double pi1, const std::array<Cells, 2>& mu,
                                  const std::array<Cells, 2>& joint);

  // Throws PositivityError or NormalizationError.
  void validate(double floor = kPositivityFloor, bool coherent = false) const;
};

class NuisanceSet {
 public:
  explicit NuisanceSet(Provenance provenance, double floor = kPositivityFloor)
      : provenance_(provenance), floor_(floor) {}
  virtual ~NuisanceSet() = default;

  // Values at x, validated for positivity and normalization.
  NuisancePoint at(std::span<const double> x) const;
  NuisancePoint at(double x) const { return at(std::span<const double>(&x, 1)); }

  Provenance provenance() const { return provenance_; }
  double floor() const { return floor_; }

  const std::string& note() const { return note_; }
  void set_note(std::string n) { note_ = std::move(n); }

  // Rows of the sample the set was trained on, if it was fitted.
  const std::vector<long>* training_rows() const { return training_rows_.get(); }
  void set_training_rows(std::vector<long> rows);

 protected:
  virtual NuisancePoint evaluate(std::span<const double> x) const = 0;

 private:
  Provenance provenance_;
  double floor_;
  std::string note_;
  std::shared_ptr<const std::vector<long>> training_rows_;
};

class FunctionNuisanceSet : public NuisanceSet {
 public:
  using Fn = std::function<NuisancePoint(std::span<const double>)>;
  FunctionNuisanceSet(Fn fn, Provenance provenance, double floor = kPositivityFloor)
      : NuisanceSet(provenance, floor), fn_(std::move(fn)) {}

 protected:
  NuisancePoint evaluate(std::span<const double> x) const override { return fn_(x); }

 private:
  Fn fn_;
};

// Outcome regressions averaged over mediator laws.
struct MarginalizedOutcomes {
  Binary mu_M1{};       // sum_m1 mu_a(m1, m2) p(m1 | a), indexed by m2
  Binary mu_M1p{};      // sum_m1 mu_a(m1, m2) p(m1 | a'), indexed by m2
  Binary mu_M2p{};      // sum_m2 mu_a(m1, m2) p(m2 | a'), indexed by m1
  double mu_M1xM2p = 0.0;
  double mu_M1pxM2p = 0.0;
};

MarginalizedOutcomes marginalize_outcomes(const NuisancePoint& np, ArmPair arms);
MarginalizedOutcomes marginalize_outcomes(const NuisanceSet& eta, std::span<const double> x,
                                          ArmPair arms);

// Plug-in value of the M1 interventional indirect effect at one point.
double psi_m1_plugin(const NuisancePoint& np, ArmPair arms);

// Columnar sample with rows (y, a, m1, m2, x_1..x_d).
class Sample {
 public:
  explicit Sample(std::size_t dim = 1) : dim_(dim) {}

  void reserve(std::size_t n);
  void add(double y, int a, int m1, int m2, std::span<const double> x);
  void add(const Observation& o);

  std::size_t size() const { return y_.size(); }
  std::size_t dim() const { return dim_; }

  double y(std::size_t i) const { return y_[i]; }
  int a(std::size_t i) const { return a_[i]; }
  int m1(std::size_t i) const { return m1_[i]; }
  int m2(std::size_t i) const { return m2_[i]; }
  std::span<const double> x(std::size_t i) const {
    return std::span<const double>(x_.data() + i * dim_, dim_);
  }
  double x(std::size_t i, std::size_t j) const { return x_[i * dim_ + j]; }
  CellObs cell(std::size_t i) const { return CellObs{y_[i], a_[i], m1_[i], m2_[i]}; }
  Observation observation(std::size_t i) const;
  std::vector<double> column(std::size_t j) const;

  Sample subset(const std::vector<long>& rows) const;
  bool binary_outcome() const;
  bool outcome_in_unit_interval() const;

 private:
  std::size_t dim_;
  std::vector<double> y_;
  std::vector<int> a_, m1_, m2_;
  std::vector<double> x_;
};

// Finite covariate support with exact nuisance values: expectations are sums.
struct DiscreteProblem {
  std::vector<double> x;
  std::vector<double> px;
  std::vector<NuisancePoint> truth;

  void validate(double floor = kPositivityFloor) const;
  std::size_t size() const { return x.size(); }
};

}  // namespace iie
