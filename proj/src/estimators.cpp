#include "iie/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

namespace iie {

EstimateReport make_report(Estimand e, std::string method, double estimate, double se,
                           Provenance prov, double query) {
  EstimateReport r;
  r.estimand = e;
  r.method = std::move(method);
  r.query = query;
  r.estimate = estimate;
  r.se = std::max(se, 0.0);
  r.ci_lo = estimate - kZ975 * r.se;
  r.ci_hi = estimate + kZ975 * r.se;
  r.provenance = prov;
  return r;
}

// ---------------------------------------------------------------- one-step

EstimateReport one_step(const PseudoOutcomes& po) {
  const std::size_t n = po.values.size();
  if (n < 2) throw DomainError("one-step estimate needs at least two observations");
  const double mean = std::accumulate(po.values.begin(), po.values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : po.values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / (n - 1));
  return make_report(po.estimand, "one-step", mean, sd / std::sqrt(static_cast<double>(n)),
                     po.provenance);
}

EstimateReport one_step(const Sample& s, const NuisanceSet& eta, Estimand e, ArmPair arms,
                        std::optional<SensitivityAssumption> sa) {
  EstimateReport r = one_step(compute_pseudo_outcomes(s, eta, e, arms, sa));
  if (e == Estimand::PsiM1) r.diag.max_inverse_weight = max_inverse_weight(s, eta, arms);
  return r;
}

namespace {

double inverse_weight_at(const NuisancePoint& np, ArmPair arms) {
  const int a = arms.a;
  const int ap = arms.a_prime;
  double w = 1.0 / np.pi(ap);
  for (int c = 0; c < 4; ++c) {
    const int v1 = cell_m1(c);
    const int v2 = cell_m2(c);
    w = std::max(w, std::abs(np.m1[a][v1] - np.m1[ap][v1]) * np.m2[ap][v2] /
                        (np.pi(a) * np.joint[a][c]));
  }
  return w;
}

}  // namespace

double max_inverse_weight(const Sample& s, const NuisanceSet& eta, ArmPair arms) {
  double w = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) w = std::max(w, inverse_weight_at(eta.at(s.x(i)), arms));
  return w;
}

// ---------------------------------------------------------------- projection

Eigen::RowVectorXd projection_basis(int degree, double v) {
  Eigen::RowVectorXd g(degree + 1);
  double p = 1.0;
  for (int k = 0; k <= degree; ++k) {
    g[k] = p;
    p *= v;
  }
  return g;
}

ProjectionFit fit_projection(std::span<const double> y, std::span<const double> v,
                             const ProjectionSpec& spec) {
  if (y.size() != v.size()) throw DomainError("projection: response and covariate lengths differ");
  if (spec.degree < 0) throw ConfigError("projection degree must be nonnegative");
  const std::size_t n = y.size();
  const int p = spec.degree + 1;
  if (n < static_cast<std::size_t>(p)) throw RankError("projection: fewer rows than coefficients");
  ProjectionFit f;
  f.degree = spec.degree;
  f.n = n;
  Eigen::MatrixXd G(n, p);
  Eigen::VectorXd w(n), yy(n);
  for (std::size_t i = 0; i < n; ++i) {
    G.row(i) = projection_basis(spec.degree, v[i]);
    w[i] = spec.weight ? spec.weight(v[i]) : 1.0;
    yy[i] = y[i];
  }
  const double nn = static_cast<double>(n);
  f.M = G.transpose() * w.asDiagonal() * G / nn;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(f.M);
  lu.setThreshold(1e-12);
  if (lu.rank() < p) throw RankError("projection design is rank deficient");
  f.beta = lu.solve(G.transpose() * w.asDiagonal() * yy / nn);
  const Eigen::VectorXd r = yy - G * f.beta;
  Eigen::MatrixXd U = G;
  for (std::size_t i = 0; i < n; ++i) U.row(i) *= w[i] * r[i];
  f.Omega = U.transpose() * U / nn;
  const Eigen::MatrixXd Minv = lu.inverse();
  f.sandwich = Minv * f.Omega * Minv.transpose();
  f.sandwich = 0.5 * (f.sandwich + f.sandwich.transpose());
  return f;
}

Eigen::VectorXd projection_moment(const ProjectionFit& fit, std::span<const double> y,
                                  std::span<const double> v, const ProjectionSpec& spec) {
  Eigen::VectorXd m = Eigen::VectorXd::Zero(fit.degree + 1);
  for (std::size_t i = 0; i < y.size(); ++i) {
    const Eigen::RowVectorXd g = projection_basis(fit.degree, v[i]);
    const double w = spec.weight ? spec.weight(v[i]) : 1.0;
    m += (w * (y[i] - g.dot(fit.beta))) * g.transpose();
  }
  return m / static_cast<double>(y.size());
}

EstimateReport project_predict(const ProjectionFit& fit, double v, Estimand e, std::string method,
                               Provenance prov) {
  const Eigen::RowVectorXd g = projection_basis(fit.degree, v);
  const double var = g.dot(fit.sandwich * g.transpose()) / static_cast<double>(fit.n);
  return make_report(e, std::move(method), g.dot(fit.beta), std::sqrt(std::max(var, 0.0)), prov, v);
}

double projection_cross_covariance(const ProjectionFit& f1, std::span<const double> y1,
                                   const ProjectionFit& f2, std::span<const double> y2,
                                   std::span<const double> v, const ProjectionSpec& spec,
                                   double at) {
  const std::size_t n = v.size();
  const double nn = static_cast<double>(n);
  Eigen::MatrixXd C = Eigen::MatrixXd::Zero(f1.degree + 1, f2.degree + 1);
  for (std::size_t i = 0; i < n; ++i) {
    const double w = spec.weight ? spec.weight(v[i]) : 1.0;
    const Eigen::RowVectorXd g1 = projection_basis(f1.degree, v[i]);
    const Eigen::RowVectorXd g2 = projection_basis(f2.degree, v[i]);
    const double r1 = y1[i] - g1.dot(f1.beta);
    const double r2 = y2[i] - g2.dot(f2.beta);
    C += (w * w * r1 * r2) * g1.transpose() * g2;
  }
  C /= nn;
  const Eigen::RowVectorXd a1 = projection_basis(f1.degree, at) * f1.M.inverse();
  const Eigen::RowVectorXd a2 = projection_basis(f2.degree, at) * f2.M.inverse();
  return a1.dot(C * a2.transpose()) / nn;
}

// ---------------------------------------------------------------- smoother

namespace {

struct LocalSums {
  double s0 = 0.0, s1 = 0.0, s2 = 0.0;
};

// Kernel values scaled by their maximum so distant queries do not underflow.
void kernel_values(std::span<const double> v, double q, double h, std::vector<double>& k) {
  k.resize(v.size());
  double umax = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double d = (v[i] - q) / h;
    k[i] = -0.5 * d * d;
    umax = std::max(umax, k[i]);
  }
  for (double& u : k) u = std::exp(u - umax);
}

void local_linear_weights(std::span<const double> v, double q, double h, std::vector<double>& w) {
  kernel_values(v, q, h, w);
  LocalSums s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double d = v[i] - q;
    s.s0 += w[i];
    s.s1 += w[i] * d;
    s.s2 += w[i] * d * d;
  }
  const double det = s.s0 * s.s2 - s.s1 * s.s1;
  if (det <= 1e-12 * s.s0 * s.s2) {
    for (double& x : w) x /= s.s0;
    return;
  }
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double d = v[i] - q;
    w[i] = w[i] * (s.s2 - d * s.s1) / det;
  }
}

double sd_of(std::span<const double> v) {
  const double n = static_cast<double>(v.size());
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / n);
}

double loo_score_on(std::span<const double> y, std::span<const double> v,
                    const std::vector<std::size_t>& eval, double h) {
  std::vector<double> k;
  double sse = 0.0;
  std::size_t used = 0;
  for (std::size_t idx : eval) {
    const double q = v[idx];
    kernel_values(v, q, h, k);
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, t0 = 0.0, t1 = 0.0;
    for (std::size_t j = 0; j < v.size(); ++j) {
      if (j == idx) continue;
      const double d = v[j] - q;
      const double kj = k[j];
      s0 += kj;
      s1 += kj * d;
      s2 += kj * d * d;
      t0 += kj * y[j];
      t1 += kj * d * y[j];
    }
    if (s0 <= 0.0) continue;
    const double det = s0 * s2 - s1 * s1;
    const double fit = det > 1e-12 * s0 * s2 ? (s2 * t0 - s1 * t1) / det : t0 / s0;
    sse += (y[idx] - fit) * (y[idx] - fit);
    ++used;
  }
  return used ? sse / static_cast<double>(used) : std::numeric_limits<double>::infinity();
}

}  // namespace

std::vector<double> smoother_weights(std::span<const double> v, double q, double h) {
  std::vector<double> w;
  local_linear_weights(v, q, h, w);
  return w;
}

double loo_cv_score(std::span<const double> y, std::span<const double> v, double h) {
  std::vector<std::size_t> all(v.size());
  std::iota(all.begin(), all.end(), 0);
  return loo_score_on(y, v, all, h);
}

double select_bandwidth(std::span<const double> y, std::span<const double> v,
                        const BandwidthPolicy& policy, std::vector<double>* grid,
                        std::vector<double>* scores) {
  if (v.size() < 20) throw DomainError("smoother needs at least 20 points");
  const double sd = sd_of(v);
  if (!(sd > 0.0)) throw DegenerateDesignError("all covariate values are identical");
  if (policy.fixed) {
    if (!(policy.h > 0.0)) throw ConfigError("fixed bandwidth must be positive");
    return policy.h;
  }
  if (policy.grid < 2 || !(policy.lo > 0.0) || !(policy.hi > policy.lo)) {
    throw ConfigError("invalid bandwidth grid");
  }
  std::vector<std::size_t> eval(v.size());
  std::iota(eval.begin(), eval.end(), 0);
  if (eval.size() > policy.cv_subsample) {
    std::mt19937_64 rng(policy.seed);
    for (std::size_t i = eval.size() - 1; i > 0; --i) {
      std::swap(eval[i], eval[static_cast<std::size_t>(rng() % (i + 1))]);
    }
    eval.resize(policy.cv_subsample);
    std::sort(eval.begin(), eval.end());
  }
  double best_h = 0.0;
  double best = std::numeric_limits<double>::infinity();
  for (int g = 0; g < policy.grid; ++g) {
    const double frac = static_cast<double>(g) / (policy.grid - 1);
    const double h = sd * policy.lo * std::pow(policy.hi / policy.lo, frac);
    const double sc = loo_score_on(y, v, eval, h);
    if (grid) grid->push_back(h);
    if (scores) scores->push_back(sc);
    if (sc < best) {
      best = sc;
      best_h = h;
    }
  }
  return best_h;
}

SmootherFit fit_smoother(std::span<const double> y, std::span<const double> v,
                         std::span<const double> query, const BandwidthPolicy& policy,
                         bool with_variance) {
  if (y.size() != v.size()) throw DomainError("smoother: response and covariate lengths differ");
  SmootherFit f;
  f.bandwidth = select_bandwidth(y, v, policy, &f.cv_bandwidths, &f.cv_scores);
  const double h = f.bandwidth;
  const std::size_t n = v.size();
  if (with_variance) {
    f.residuals.resize(n);
    f.residual_scale.resize(n);
    std::vector<double> w;
    for (std::size_t i = 0; i < n; ++i) {
      local_linear_weights(v, v[i], h, w);
      double fit = 0.0, sq = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        fit += w[j] * y[j];
        sq += w[j] * w[j];
      }
      f.residuals[i] = y[i] - fit;
      f.residual_scale[i] = std::max(1.0 - 2.0 * w[i] + sq, 1e-3);
    }
  }
  std::vector<double> w, k;
  for (double q : query) {
    local_linear_weights(v, q, h, w);
    double fit = 0.0, sum = 0.0, sabs = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      fit += w[i] * y[i];
      sum += w[i];
      sabs += std::abs(w[i]);
      sq += w[i] * w[i];
    }
    f.query.push_back(q);
    f.fitted.push_back(fit);
    f.weight_sum.push_back(sum);
    f.sum_abs_weights.push_back(sabs);
    if (with_variance) {
      kernel_values(v, q, h, k);
      double num = 0.0, den = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        num += k[i] * f.residuals[i] * f.residuals[i] / f.residual_scale[i];
        den += k[i];
      }
      f.variance.push_back(num / den * sq);
    } else {
      f.variance.push_back(std::numeric_limits<double>::quiet_NaN());
    }
  }
  return f;
}

// ---------------------------------------------------------------- DR-Learner

std::vector<std::shared_ptr<const NuisanceSet>> cross_fit_nuisances(const Sample& s,
                                                                    const FoldPlan& plan,
                                                                    const NuisanceLearner& learner) {
  if (plan.assignment.size() != s.size()) throw DomainError("fold plan does not match the sample");
  std::vector<std::shared_ptr<const NuisanceSet>> fits;
  for (int k = 0; k < plan.k; ++k) {
    std::vector<long> train = plan.rows_out(k);
    fits.push_back(learner(s.subset(train), train));
  }
  return fits;
}

void audit_out_of_fold(const FoldPlan& plan,
                       const std::vector<std::shared_ptr<const NuisanceSet>>& fits) {
  for (int k = 0; k < plan.k; ++k) {
    const auto* rows = fits.at(k)->training_rows();
    if (!rows) continue;
    const std::set<long> seen(rows->begin(), rows->end());
    for (long r : plan.rows_in(k)) {
      if (seen.count(r)) {
        throw DomainError("row " + std::to_string(r) + " evaluated with nuisances trained on it");
      }
    }
  }
}

CrossFitResult cross_fit_pseudo_outcomes(const Sample& s, const FoldPlan& plan,
                                         const std::vector<std::shared_ptr<const NuisanceSet>>& fits,
                                         Estimand e, ArmPair arms,
                                         std::optional<SensitivityAssumption> sa, double floor) {
  audit_out_of_fold(plan, fits);
  CrossFitResult out;
  out.fits = fits;
  out.pseudo.estimand = e;
  out.pseudo.provenance = fits.at(0)->provenance();
  out.pseudo.values.assign(s.size(), 0.0);
  out.pseudo.rows.resize(s.size());
  std::iota(out.pseudo.rows.begin(), out.pseudo.rows.end(), 0L);
  std::vector<long> bad;
  for (int k = 0; k < plan.k; ++k) {
    const std::vector<long> rows = plan.rows_in(k);
    try {
      const PseudoOutcomes po = compute_pseudo_outcomes(s.subset(rows), *fits[k], e, arms, sa, floor);
      for (std::size_t j = 0; j < rows.size(); ++j) {
        out.pseudo.values[static_cast<std::size_t>(rows[j])] = po.values[j];
      }
    } catch (const PositivityError& err) {
      for (long r : err.rows()) bad.push_back(rows[static_cast<std::size_t>(r)]);
    }
  }
  if (!bad.empty()) {
    std::sort(bad.begin(), bad.end());
    throw PositivityError(std::to_string(bad.size()) + " observation(s) violate the positivity floor",
                          bad);
  }
  return out;
}

namespace {

std::vector<double> covariate_column(const Sample& s, std::size_t v_index,
                                     const std::vector<long>& rows) {
  if (v_index >= s.dim()) throw ConfigError("covariate index out of range");
  std::vector<double> v(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) v[i] = s.x(static_cast<std::size_t>(rows[i]), v_index);
  return v;
}

}  // namespace

std::vector<EstimateReport> smooth_pseudo_outcomes(const PseudoOutcomes& po, const Sample& s,
                                                   std::span<const double> query,
                                                   const BandwidthPolicy& policy,
                                                   std::size_t v_index, std::string method) {
  const std::vector<double> v = covariate_column(s, v_index, po.rows);
  const SmootherFit fit = fit_smoother(po.values, v, query, policy);
  std::vector<EstimateReport> out;
  for (std::size_t q = 0; q < query.size(); ++q) {
    EstimateReport r = make_report(po.estimand, method, fit.fitted[q], std::sqrt(fit.variance[q]),
                                   po.provenance, query[q]);
    r.diag.bandwidth = fit.bandwidth;
    r.diag.sum_abs_weights = fit.sum_abs_weights[q];
    out.push_back(r);
  }
  return out;
}

std::vector<EstimateReport> dr_learner(const Sample& s, const NuisanceSet& eta, Estimand e,
                                       ArmPair arms, std::span<const double> query,
                                       const BandwidthPolicy& policy,
                                       std::optional<SensitivityAssumption> sa,
                                       std::size_t v_index) {
  const PseudoOutcomes po = compute_pseudo_outcomes(s, eta, e, arms, sa);
  auto out = smooth_pseudo_outcomes(po, s, query, policy, v_index);
  if (e == Estimand::PsiM1) {
    const double w = max_inverse_weight(s, eta, arms);
    for (auto& r : out) r.diag.max_inverse_weight = w;
  }
  return out;
}

std::vector<EstimateReport> dr_learner(const Sample& s, const FoldPlan& plan,
                                       const NuisanceLearner& learner, Estimand e, ArmPair arms,
                                       std::span<const double> query,
                                       const BandwidthPolicy& policy,
                                       std::optional<SensitivityAssumption> sa,
                                       std::size_t v_index) {
  const auto fits = cross_fit_nuisances(s, plan, learner);
  const CrossFitResult cf = cross_fit_pseudo_outcomes(s, plan, fits, e, arms, sa);
  return smooth_cross_fit(cf, s, plan, query, policy, v_index);
}

std::vector<EstimateReport> smooth_cross_fit(const CrossFitResult& cf, const Sample& s,
                                             const FoldPlan& plan, std::span<const double> query,
                                             const BandwidthPolicy& policy, std::size_t v_index) {
  const Estimand e = cf.pseudo.estimand;
  if (plan.mode == FoldMode::Pooled) {
    return smooth_pseudo_outcomes(cf.pseudo, s, query, policy, v_index, "dr-learner-pooled");
  }
  std::vector<EstimateReport> acc;
  for (int k = 0; k < plan.k; ++k) {
    PseudoOutcomes part;
    part.estimand = e;
    part.provenance = cf.pseudo.provenance;
    part.rows = plan.rows_in(k);
    for (long r : part.rows) part.values.push_back(cf.pseudo.values[static_cast<std::size_t>(r)]);
    const auto est = smooth_pseudo_outcomes(part, s, query, policy, v_index);
    if (acc.empty()) {
      acc = est;
      for (auto& r : acc) r.se = r.se * r.se;
    } else {
      for (std::size_t q = 0; q < est.size(); ++q) {
        acc[q].estimate += est[q].estimate;
        acc[q].se += est[q].se * est[q].se;
        acc[q].diag.sum_abs_weights += est[q].diag.sum_abs_weights;
        acc[q].diag.bandwidth += est[q].diag.bandwidth;
      }
    }
  }
  const double k = plan.k;
  std::vector<EstimateReport> out;
  for (const auto& r : acc) {
    EstimateReport o = make_report(e, "dr-learner-swap", r.estimate / k, std::sqrt(r.se) / k,
                                   r.provenance, r.query);
    o.diag.sum_abs_weights = r.diag.sum_abs_weights / k;
    o.diag.bandwidth = r.diag.bandwidth / k;
    out.push_back(o);
  }
  return out;
}

// ---------------------------------------------------------------- bounds

BoundReport one_step_bounds(const Sample& s, const NuisanceSet& eta, ArmPair arms,
                            const SensitivityAssumption& sa) {
  for (std::size_t i = 0; i < s.size(); ++i) check_outcome_scale(sa, eta.at(s.x(i)));
  const PseudoOutcomes lo = compute_pseudo_outcomes(s, eta, Estimand::BoundLower, arms, sa);
  const PseudoOutcomes hi = compute_pseudo_outcomes(s, eta, Estimand::BoundUpper, arms, sa);
  BoundReport b;
  b.lb = one_step(lo);
  b.ub = one_step(hi);
  const double n = static_cast<double>(s.size());
  double c = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    c += (lo.values[i] - b.lb.estimate) * (hi.values[i] - b.ub.estimate);
  }
  b.covariance = c / (n - 1) / n;
  return b;
}

std::vector<BoundReport> projection_bounds(const Sample& s, const NuisanceSet& eta, ArmPair arms,
                                           const SensitivityAssumption& sa,
                                           const ProjectionSpec& spec,
                                           std::span<const double> query) {
  for (std::size_t i = 0; i < s.size(); ++i) check_outcome_scale(sa, eta.at(s.x(i)));
  const PseudoOutcomes lo = compute_pseudo_outcomes(s, eta, Estimand::BoundLower, arms, sa);
  const PseudoOutcomes hi = compute_pseudo_outcomes(s, eta, Estimand::BoundUpper, arms, sa);
  const std::vector<double> v = covariate_column(s, spec.v_index, lo.rows);
  const ProjectionFit fl = fit_projection(lo.values, v, spec);
  const ProjectionFit fu = fit_projection(hi.values, v, spec);
  std::vector<BoundReport> out;
  for (double q : query) {
    BoundReport b;
    b.lb = project_predict(fl, q, Estimand::BoundLower, "projection", eta.provenance());
    b.ub = project_predict(fu, q, Estimand::BoundUpper, "projection", eta.provenance());
    b.covariance = projection_cross_covariance(fl, lo.values, fu, hi.values, v, spec, q);
    out.push_back(b);
  }
  return out;
}

std::vector<BoundReport> dr_learner_bounds(const Sample& s, const NuisanceSet& eta, ArmPair arms,
                                           const SensitivityAssumption& sa,
                                           std::span<const double> query,
                                           const BandwidthPolicy& policy, std::size_t v_index) {
  for (std::size_t i = 0; i < s.size(); ++i) check_outcome_scale(sa, eta.at(s.x(i)));
  const PseudoOutcomes lo = compute_pseudo_outcomes(s, eta, Estimand::BoundLower, arms, sa);
  const PseudoOutcomes hi = compute_pseudo_outcomes(s, eta, Estimand::BoundUpper, arms, sa);
  const std::vector<double> v = covariate_column(s, v_index, lo.rows);
  // One bandwidth for both curves so their weights, and covariance, are shared.
  BandwidthPolicy shared = policy;
  shared.fixed = true;
  shared.h = select_bandwidth(lo.values, v, policy);
  const SmootherFit fl = fit_smoother(lo.values, v, query, shared);
  const SmootherFit fu = fit_smoother(hi.values, v, query, shared);
  std::vector<BoundReport> out;
  std::vector<double> k;
  for (std::size_t q = 0; q < query.size(); ++q) {
    BoundReport b;
    b.lb = make_report(Estimand::BoundLower, "dr-learner", fl.fitted[q], std::sqrt(fl.variance[q]),
                       eta.provenance(), query[q]);
    b.ub = make_report(Estimand::BoundUpper, "dr-learner", fu.fitted[q], std::sqrt(fu.variance[q]),
                       eta.provenance(), query[q]);
    b.lb.diag.bandwidth = b.ub.diag.bandwidth = shared.h;
    b.lb.diag.sum_abs_weights = b.ub.diag.sum_abs_weights = fl.sum_abs_weights[q];
    kernel_values(v, query[q], shared.h, k);
    const std::vector<double> w = smoother_weights(v, query[q], shared.h);
    double num = 0.0, den = 0.0, sq = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      num += k[i] * fl.residuals[i] * fu.residuals[i] / fl.residual_scale[i];
      den += k[i];
      sq += w[i] * w[i];
    }
    b.covariance = num / den * sq;
    out.push_back(b);
  }
  return out;
}

// ---------------------------------------------------------------- ratio

std::string to_string(RatioMode m) { return m == RatioMode::Ratio ? "ratio" : "separate"; }

EstimateReport ratio_separate(const EstimateReport& m1, const EstimateReport& total, double delta) {
  if (std::abs(total.estimate) < delta) {
    throw RatioDegenerateError("estimated total effect below the ratio floor");
  }
  const double b = total.estimate;
  const double r = m1.estimate / b;
  const double var = m1.se * m1.se / (b * b) + r * r * total.se * total.se / (b * b);
  EstimateReport out = make_report(Estimand::Ratio, "separate", r, std::sqrt(var), m1.provenance,
                                   m1.query);
  out.diag = m1.diag;
  return out;
}

std::vector<EstimateReport> proportion_mediated(const Sample& s, const NuisanceSet& eta,
                                                ArmPair arms, RatioMode mode,
                                                std::span<const double> query,
                                                const BandwidthPolicy& policy, double delta,
                                                std::size_t v_index) {
  if (mode == RatioMode::Ratio) {
    const PseudoOutcomes po =
        compute_pseudo_outcomes(s, eta, Estimand::Ratio, arms, std::nullopt, kPositivityFloor, delta);
    return smooth_pseudo_outcomes(po, s, query, policy, v_index, "ratio");
  }
  const auto m1 = dr_learner(s, eta, Estimand::PsiM1, arms, query, policy, std::nullopt, v_index);
  const auto tot = dr_learner(s, eta, Estimand::Cate, arms, query, policy, std::nullopt, v_index);
  std::vector<EstimateReport> out;
  for (std::size_t q = 0; q < query.size(); ++q) out.push_back(ratio_separate(m1[q], tot[q], delta));
  return out;
}

// ---------------------------------------------------------------- plug-in

namespace {

double plugin_at(const NuisancePoint& np, Estimand e, ArmPair arms) {
  switch (e) {
    case Estimand::PsiM1: return psi_m1_plugin(np, arms);
    case Estimand::Cate: return np.outcome_mean(arms.a) - np.outcome_mean(arms.a_prime);
    case Estimand::Ratio:
      return psi_m1_plugin(np, arms) / (np.outcome_mean(arms.a) - np.outcome_mean(arms.a_prime));
    default: throw DomainError("no plug-in for estimand " + to_string(e));
  }
}

}  // namespace

std::vector<double> plugin_values(const Sample& s, const NuisanceSet& eta, Estimand e,
                                  ArmPair arms) {
  std::vector<double> out(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = plugin_at(eta.at(s.x(i)), e, arms);
  return out;
}

double plugin_point(const NuisanceSet& eta, double x, Estimand e, ArmPair arms) {
  return plugin_at(eta.at(x), e, arms);
}

}  // namespace iie
