#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "iie/eif.hpp"
#include "iie/model.hpp"
#include "iie/nuisance.hpp"
#include "iie/sensitivity.hpp"

namespace iie {

inline constexpr double kZ975 = 1.959963984540054;

struct Diagnostics {
  double max_inverse_weight = std::numeric_limits<double>::quiet_NaN();
  double sum_abs_weights = std::numeric_limits<double>::quiet_NaN();
  double bandwidth = std::numeric_limits<double>::quiet_NaN();
  double nuisance_error = std::numeric_limits<double>::quiet_NaN();
};

struct EstimateReport {
  Estimand estimand = Estimand::PsiM1;
  std::string method;
  double query = std::numeric_limits<double>::quiet_NaN();  // NaN for averages
  double estimate = 0.0;
  double se = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  Diagnostics diag;
  Provenance provenance = Provenance::Fitted;

  bool covers(double truth) const { return truth >= ci_lo && truth <= ci_hi; }
};

EstimateReport make_report(Estimand e, std::string method, double estimate, double se,
                           Provenance prov, double query = std::numeric_limits<double>::quiet_NaN());

// ---------------------------------------------------------------- one-step

EstimateReport one_step(const PseudoOutcomes& po);
EstimateReport one_step(const Sample& s, const NuisanceSet& eta, Estimand e, ArmPair arms,
                        std::optional<SensitivityAssumption> sa = std::nullopt);

// Largest |weight| of the M1 influence function over the sample.
double max_inverse_weight(const Sample& s, const NuisanceSet& eta, ArmPair arms);

// ---------------------------------------------------------------- projection

struct ProjectionSpec {
  int degree = 1;                        // polynomial g(v; beta) in v
  std::size_t v_index = 0;               // covariate used as v
  std::function<double(double)> weight;  // empty means w = 1
};

struct ProjectionFit {
  int degree = 1;
  std::size_t n = 0;
  Eigen::VectorXd beta;
  Eigen::MatrixXd M;         // P_n[w g' g'^T]
  Eigen::MatrixXd Omega;     // sample covariance of w g' (phi - g)
  Eigen::MatrixXd sandwich;  // M^-1 Omega M^-T, asymptotic covariance of sqrt(n) beta
};

Eigen::RowVectorXd projection_basis(int degree, double v);

// Weighted least squares of pseudo-outcomes on the polynomial basis.
ProjectionFit fit_projection(std::span<const double> y, std::span<const double> v,
                             const ProjectionSpec& spec);

// P_n[w g'(v) (y - g(v; beta))] at a given beta.
Eigen::VectorXd projection_moment(const ProjectionFit& fit, std::span<const double> y,
                                  std::span<const double> v, const ProjectionSpec& spec);

EstimateReport project_predict(const ProjectionFit& fit, double v, Estimand e = Estimand::PsiM1,
                               std::string method = "projection",
                               Provenance prov = Provenance::Fitted);

// Delta-method covariance of two predictions from fits on the same rows.
double projection_cross_covariance(const ProjectionFit& f1, std::span<const double> y1,
                                   const ProjectionFit& f2, std::span<const double> y2,
                                   std::span<const double> v, const ProjectionSpec& spec,
                                   double at);

// ---------------------------------------------------------------- smoother

struct BandwidthPolicy {
  bool fixed = false;
  double h = 0.0;  // used when fixed
  int grid = 20;
  double lo = 0.05;  // multiples of sd(v)
  double hi = 2.0;
  std::size_t cv_subsample = 2000;
  std::uint64_t seed = 1;
};

struct SmootherFit {
  double bandwidth = 0.0;
  std::vector<double> query;
  std::vector<double> fitted;
  std::vector<double> variance;  // of the fitted value
  std::vector<double> sum_abs_weights;
  std::vector<double> weight_sum;
  std::vector<double> cv_bandwidths;
  std::vector<double> cv_scores;
  // At the data points, when variances were requested.
  std::vector<double> residuals;
  std::vector<double> residual_scale;  // E[r_i^2] / sigma^2 under homoscedasticity
};

// Local-linear Gaussian-kernel weights w_i(q) for all i.
std::vector<double> smoother_weights(std::span<const double> v, double q, double h);

// Leave-one-out mean squared error of the local-linear fit at bandwidth h.
double loo_cv_score(std::span<const double> y, std::span<const double> v, double h);

double select_bandwidth(std::span<const double> y, std::span<const double> v,
                        const BandwidthPolicy& policy, std::vector<double>* grid = nullptr,
                        std::vector<double>* scores = nullptr);

// Pointwise variance is sigma^2(q) sum_i w_i(q)^2 with sigma^2(q) a kernel
// average of leverage-corrected squared residuals.
SmootherFit fit_smoother(std::span<const double> y, std::span<const double> v,
                         std::span<const double> query, const BandwidthPolicy& policy,
                         bool with_variance = true);

// ---------------------------------------------------------------- DR-Learner

// Pseudo-outcomes where every row uses nuisances fitted without it.
struct CrossFitResult {
  PseudoOutcomes pseudo;
  std::vector<std::shared_ptr<const NuisanceSet>> fits;  // one per fold
};

// Nuisances for fold k are trained on its complement.
std::vector<std::shared_ptr<const NuisanceSet>> cross_fit_nuisances(const Sample& s,
                                                                    const FoldPlan& plan,
                                                                    const NuisanceLearner& learner);

CrossFitResult cross_fit_pseudo_outcomes(const Sample& s, const FoldPlan& plan,
                                         const std::vector<std::shared_ptr<const NuisanceSet>>& fits,
                                         Estimand e, ArmPair arms,
                                         std::optional<SensitivityAssumption> sa = std::nullopt,
                                         double floor = kPositivityFloor);

// Throws DomainError when a row's nuisances were trained on that row.
void audit_out_of_fold(const FoldPlan& plan,
                       const std::vector<std::shared_ptr<const NuisanceSet>>& fits);

// Second stage on a fixed set of pseudo-outcomes.
std::vector<EstimateReport> smooth_pseudo_outcomes(const PseudoOutcomes& po, const Sample& s,
                                                   std::span<const double> query,
                                                   const BandwidthPolicy& policy,
                                                   std::size_t v_index = 0,
                                                   std::string method = "dr-learner");

// DR-Learner with nuisances already estimated on an independent sample (or
// known), evaluated on s.
std::vector<EstimateReport> dr_learner(const Sample& s, const NuisanceSet& eta, Estimand e,
                                       ArmPair arms, std::span<const double> query,
                                       const BandwidthPolicy& policy,
                                       std::optional<SensitivityAssumption> sa = std::nullopt,
                                       std::size_t v_index = 0);

// Cross-fitted DR-Learner. Swap-average smooths within each fold and averages
// across folds; pooled smooths all out-of-fold pseudo-outcomes at once.
std::vector<EstimateReport> dr_learner(const Sample& s, const FoldPlan& plan,
                                       const NuisanceLearner& learner, Estimand e, ArmPair arms,
                                       std::span<const double> query,
                                       const BandwidthPolicy& policy,
                                       std::optional<SensitivityAssumption> sa = std::nullopt,
                                       std::size_t v_index = 0);

// Second stage of the cross-fitted DR-Learner on pseudo-outcomes already formed.
std::vector<EstimateReport> smooth_cross_fit(const CrossFitResult& cf, const Sample& s,
                                             const FoldPlan& plan, std::span<const double> query,
                                             const BandwidthPolicy& policy, std::size_t v_index = 0);

// ---------------------------------------------------------------- bounds

struct BoundReport {
  EstimateReport lb;
  EstimateReport ub;
  double covariance = 0.0;  // of the two estimates
};

BoundReport one_step_bounds(const Sample& s, const NuisanceSet& eta, ArmPair arms,
                            const SensitivityAssumption& sa);

std::vector<BoundReport> projection_bounds(const Sample& s, const NuisanceSet& eta, ArmPair arms,
                                           const SensitivityAssumption& sa,
                                           const ProjectionSpec& spec,
                                           std::span<const double> query);

std::vector<BoundReport> dr_learner_bounds(const Sample& s, const NuisanceSet& eta, ArmPair arms,
                                           const SensitivityAssumption& sa,
                                           std::span<const double> query,
                                           const BandwidthPolicy& policy, std::size_t v_index = 0);

// ---------------------------------------------------------------- ratio

enum class RatioMode { Ratio, Separate };
std::string to_string(RatioMode m);

// Separate mode: psi_M1(v) / psi(v) from two estimates; the delta-method
// variance drops the covariance term, conservative under positive dependence.
EstimateReport ratio_separate(const EstimateReport& m1, const EstimateReport& total,
                              double delta = kRatioDelta);

// Proportion mediated at the query points with nuisances from an independent
// sample; ratio mode smooths Lambda pseudo-outcomes.
std::vector<EstimateReport> proportion_mediated(const Sample& s, const NuisanceSet& eta,
                                                ArmPair arms, RatioMode mode,
                                                std::span<const double> query,
                                                const BandwidthPolicy& policy,
                                                double delta = kRatioDelta,
                                                std::size_t v_index = 0);

// ---------------------------------------------------------------- plug-in

// psi_M1(x) or psi(x) plugged in from eta at each sample row.
std::vector<double> plugin_values(const Sample& s, const NuisanceSet& eta, Estimand e,
                                  ArmPair arms);
double plugin_point(const NuisanceSet& eta, double x, Estimand e, ArmPair arms);

}  // namespace iie
