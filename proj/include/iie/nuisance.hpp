#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "iie/model.hpp"

namespace iie {

// ---------------------------------------------------------------- basis

enum class BasisKind { Polynomial, Spline, Saturated };

std::string to_string(BasisKind k);
BasisKind parse_basis(const std::string& s);

struct BasisSpec {
  BasisKind kind = BasisKind::Polynomial;
  int degree = 3;        // polynomial degree
  int knots = 4;         // interior knots of the piecewise-linear spline
  int saturate_at = 10;  // covariates with at most this many levels use indicators
  double ridge = 0.0;    // L2 penalty on the mean log-likelihood, intercept free
};

// Design map fixed on a training sample: intercept followed by per-covariate
// blocks. Polynomial blocks are standardized and clamped to the training range,
// splines use quantile knots and low-cardinality covariates use level indicators.
class Basis {
 public:
  static Basis fit(const BasisSpec& spec, const Sample& s);
  static Basis fit(const BasisSpec& spec, const std::vector<std::vector<double>>& columns);

  std::size_t dim() const { return dim_; }
  void features(std::span<const double> x, double* out) const;
  Eigen::RowVectorXd row(std::span<const double> x) const;
  Eigen::MatrixXd design(const Sample& s) const;
  Eigen::MatrixXd design(const Sample& s, const std::vector<long>& rows) const;

 private:
  struct Block {
    BasisKind kind = BasisKind::Polynomial;
    double center = 0.0, scale = 1.0;
    double lo = 0.0, hi = 0.0;  // training range; polynomial features are evaluated clamped
    int degree = 0;
    std::vector<double> knots;   // spline
    std::vector<double> levels;  // saturated, first level is the reference
  };
  std::vector<Block> blocks_;
  std::size_t dim_ = 1;
};

// ---------------------------------------------------------------- solvers

struct GlmFit {
  Eigen::VectorXd beta;
  int iterations = 0;
  bool converged = false;
  bool ridge = false;
};

inline constexpr double kIrlsTol = 1e-8;
inline constexpr int kIrlsMaxIter = 100;
inline constexpr double kRidgeFallback = 1e-4;

// Logistic regression by iteratively reweighted least squares. Responses may
// be fractional in [0, 1]. Divergence or non-convergence triggers a refit with
// an L2 penalty of kRidgeFallback on the mean log-likelihood.
GlmFit fit_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double ridge = 0.0);

// Logistic regression by plain gradient ascent; slow, used to cross-check IRLS.
GlmFit fit_logistic_gradient(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                             int max_iter = 200000, double tol = 1e-12);

// Multinomial logit with category 0 as reference. Y has one column per
// category, rows summing to one. beta has (categories - 1) blocks of X.cols().
GlmFit fit_multinomial(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, double ridge = 0.0);
GlmFit fit_multinomial_gradient(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                                int max_iter = 200000, double tol = 1e-12);
Eigen::VectorXd multinomial_probs(const Eigen::VectorXd& beta, const Eigen::RowVectorXd& row,
                                  int categories);

GlmFit fit_linear(const Eigen::MatrixXd& X, const Eigen::VectorXd& y);

double expit(double v);
double logit(double p);

// ---------------------------------------------------------------- learners

struct PropensityModel {
  Basis basis;
  GlmFit fit;
  double floor = kPositivityFloor;
  double operator()(std::span<const double> x) const;  // P(A = 1 | x), clipped
};

PropensityModel fit_propensity(const Sample& s, const BasisSpec& spec,
                               double floor = kPositivityFloor);

struct JointMediatorModel {
  Basis basis;
  std::array<GlmFit, 2> fit;
  std::array<bool, 2> smoothed{false, false};
  double floor = kPositivityFloor;
  Cells operator()(int a, std::span<const double> x) const;
};

JointMediatorModel fit_joint_mediator(const Sample& s, const BasisSpec& spec,
                                      double floor = kPositivityFloor);

struct OutcomeModel {
  Basis basis;
  bool logistic = true;
  std::array<std::array<GlmFit, 4>, 2> stratum{};
  std::array<std::array<bool, 4>, 2> pooled{};
  GlmFit pooled_fit;
  bool has_pooled = false;
  double floor = kPositivityFloor;
  double operator()(int a, int cell, std::span<const double> x) const;
};

OutcomeModel fit_outcome(const Sample& s, const BasisSpec& spec, double floor = kPositivityFloor);

// Linear in x by default; cubic fits overfit the per-arm mediator model at n = 1000.
struct NuisanceConfig {
  BasisSpec propensity{.degree = 1};
  BasisSpec mediator{.degree = 1};
  BasisSpec outcome{.degree = 1};
  double floor = kPositivityFloor;
};

class FittedNuisanceSet : public NuisanceSet {
 public:
  FittedNuisanceSet(PropensityModel pi, JointMediatorModel med, OutcomeModel mu);

  const PropensityModel& propensity() const { return pi_; }
  const JointMediatorModel& mediator() const { return med_; }
  const OutcomeModel& outcome() const { return mu_; }

 protected:
  NuisancePoint evaluate(std::span<const double> x) const override;

 private:
  PropensityModel pi_;
  JointMediatorModel med_;
  OutcomeModel mu_;
};

// Fits all nuisances on s; training_rows are recorded as given.
std::shared_ptr<const NuisanceSet> fit_nuisances(const Sample& s, const NuisanceConfig& cfg,
                                                 std::vector<long> training_rows = {});

using NuisanceLearner = std::function<std::shared_ptr<const NuisanceSet>(const Sample& train,
                                                                         std::vector<long> rows)>;

NuisanceLearner default_learner(NuisanceConfig cfg = {});

// ---------------------------------------------------------------- synthetic

struct RateSpec {
  double alpha_pi = 0.5;
  double alpha_mu = 0.5;
  double alpha_med = 0.5;
  double scale = 1.0;
  int wiggle_knots = 7;
  double x_lo = -2.0;
  double x_hi = 4.0;
};

// Perturbs a true nuisance set on the logit scale (log scale for the joint
// mediator cells, renormalized) by b + s(x) with b ~ N(C n^-alpha, (C n^-alpha)^2)
// and s a cubic spline wiggle of amplitude C n^-alpha through uniform knots.
// One draw per scalar component per call.
class SyntheticNuisanceSet : public NuisanceSet {
 public:
  SyntheticNuisanceSet(std::shared_ptr<const NuisanceSet> truth, std::size_t n,
                       const RateSpec& rates, std::mt19937_64& rng);

  struct Shift {
    double b = 0.0;
    double amplitude = 0.0;
    std::function<double(double)> wiggle;  // unit-amplitude spline
    double operator()(double x) const;
  };

 protected:
  NuisancePoint evaluate(std::span<const double> x) const override;

 private:
  std::shared_ptr<const NuisanceSet> truth_;
  Shift pi_;
  std::array<std::array<Shift, 4>, 2> mu_;
  std::array<std::array<Shift, 4>, 2> joint_;
};

// Root mean square differences between two nuisance sets over the listed
// covariate points, per nuisance family.
struct NuisanceError {
  double pi = 0.0, mu = 0.0, joint = 0.0;
};
NuisanceError nuisance_l2_error(const NuisanceSet& est, const NuisanceSet& truth,
                                const std::vector<double>& points);

// ---------------------------------------------------------------- folds

enum class FoldMode { SwapAverage, Pooled };

std::string to_string(FoldMode m);
FoldMode parse_fold_mode(const std::string& s);

struct FoldPlan {
  int k = 2;
  FoldMode mode = FoldMode::SwapAverage;
  std::vector<int> assignment;

  std::vector<long> rows_in(int fold) const;
  std::vector<long> rows_out(int fold) const;
};

FoldPlan make_folds(std::size_t n, int k, std::uint64_t seed, FoldMode mode = FoldMode::SwapAverage);

}  // namespace iie
