#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "iie/dgp.hpp"
#include "iie/estimators.hpp"
#include "iie/simlab.hpp"

using namespace iie;

namespace {

const ArmPair kArms = ArmPair::make(1, 0);

double mean_of(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sd_of(const std::vector<double>& v) {
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

}  // namespace

TEST_CASE("one-step with true nuisances is the mean of the true influence values") {
  std::mt19937_64 rng(1);
  const Sample s = dgp_sample(DgpSpec{}, 500, rng);
  const DgpNuisances eta;
  const PseudoOutcomes po = compute_pseudo_outcomes(s, eta, Estimand::PsiM1, kArms);
  const EstimateReport r = one_step(s, eta, Estimand::PsiM1, kArms);
  CHECK(r.estimate == one_step(po).estimate);
  double sum = 0.0;
  for (double v : po.values) sum += v;
  CHECK(std::abs(r.estimate - sum / 500.0) <= 1e-15);
  CHECK(r.se >= 0.0);
  CHECK(r.ci_lo <= r.estimate);
  CHECK(r.estimate <= r.ci_hi);
  CHECK(r.provenance == Provenance::TrueDgp);
}

TEST_CASE("one-step is centered on the averaged effect and covers at the nominal rate") {
  const XQuadrature q = x_law_quadrature(DgpSpec{});
  double truth = 0.0;
  for (std::size_t i = 0; i < q.x.size(); ++i) truth += q.w[i] * truth_at(q.x[i]).psi_m1;
  const int reps = 500;
  std::vector<double> est(reps);
  int covered = 0;
  for (int r = 0; r < reps; ++r) {
    std::mt19937_64 rng = rng_stream(11, r, "one-step");
    const Sample train = dgp_sample(DgpSpec{}, 4000, rng);
    const Sample s = dgp_sample(DgpSpec{}, 4000, rng);
    const auto eta = fit_nuisances(train, NuisanceConfig{});
    const EstimateReport e = one_step(s, *eta, Estimand::PsiM1, kArms);
    est[r] = e.estimate;
    covered += e.covers(truth);
  }
  const double mc_se = sd_of(est) / std::sqrt(static_cast<double>(reps));
  CHECK(std::abs(mean_of(est) - truth) <= 2.0 * mc_se);
  const double coverage = 100.0 * covered / reps;
  CHECK(coverage >= 92.0);
  CHECK(coverage <= 98.0);
}

TEST_CASE("projection interpolates noiseless pseudo-outcomes") {
  std::vector<double> v, y;
  for (int i = 0; i < 40; ++i) {
    v.push_back(-2.0 + 0.15 * i);
    y.push_back(0.3 - 0.5 * v.back() + 0.2 * v.back() * v.back());
  }
  ProjectionSpec spec;
  spec.degree = 2;
  const ProjectionFit f = fit_projection(y, v, spec);
  CHECK(std::abs(f.beta[0] - 0.3) <= 1e-10);
  CHECK(std::abs(f.beta[1] + 0.5) <= 1e-10);
  CHECK(std::abs(f.beta[2] - 0.2) <= 1e-10);
}

TEST_CASE("projection moment residual vanishes at the fitted coefficients") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> v(300), y(300);
  for (int i = 0; i < 300; ++i) {
    v[i] = nd(rng);
    y[i] = std::sin(v[i]) + nd(rng);
  }
  for (int degree : {1, 2}) {
    ProjectionSpec spec;
    spec.degree = degree;
    spec.weight = [](double x) { return 1.0 + 0.5 * std::tanh(x); };
    const ProjectionFit f = fit_projection(y, v, spec);
    CHECK(projection_moment(f, y, v, spec).cwiseAbs().maxCoeff() <= 1e-10);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(f.sandwich);
    CHECK(es.eigenvalues().minCoeff() >= -1e-12);
    CHECK((f.sandwich - f.sandwich.transpose()).cwiseAbs().maxCoeff() <= 1e-12);
  }
}

TEST_CASE("projection rejects a rank deficient design") {
  const std::vector<double> v(30, 1.0), y(30, 0.5);
  CHECK_THROWS_AS(fit_projection(y, v, ProjectionSpec{}), RankError);
}

TEST_CASE("projection prediction evaluates the fitted polynomial") {
  ProjectionFit f;
  f.degree = 1;
  f.n = 100;
  f.beta = Eigen::Vector2d(0.0, 1.0);
  f.sandwich = Eigen::Matrix2d::Identity();
  const EstimateReport r = project_predict(f, 2.0);
  CHECK(r.estimate == 2.0);
  CHECK(r.se == doctest::Approx(std::sqrt(5.0 / 100.0)));
}

TEST_CASE("sandwich standard errors match Monte Carlo spread and shrink at root n") {
  const auto run = [](std::size_t n, int reps) {
    std::vector<double> pred(reps), se(reps);
    for (int r = 0; r < reps; ++r) {
      std::mt19937_64 rng = rng_stream(3, r * 7919ULL + n, "sandwich");
      std::normal_distribution<double> nd(0.0, 1.0);
      std::vector<double> v(n), y(n);
      for (std::size_t i = 0; i < n; ++i) {
        v[i] = nd(rng);
        y[i] = 1.0 + 2.0 * v[i] + v[i] * v[i] + (0.5 + std::abs(v[i])) * nd(rng);
      }
      const ProjectionFit f = fit_projection(y, v, ProjectionSpec{});
      const EstimateReport e = project_predict(f, 1.0);
      pred[r] = e.estimate;
      se[r] = e.se;
    }
    return std::pair{sd_of(pred), mean_of(se)};
  };
  const auto [mc1000, se1000] = run(1000, 500);
  const auto [mc4000, se4000] = run(4000, 200);
  CHECK(se1000 == doctest::Approx(mc1000).epsilon(0.15));
  CHECK(se1000 / se4000 == doctest::Approx(2.0).epsilon(0.2));
  CHECK(mc1000 / mc4000 == doctest::Approx(2.0).epsilon(0.2));
}

TEST_CASE("local-linear smoother reproduces constants and lines") {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> nd(0.0, 1.0);
  std::vector<double> v(200), c(200, 0.37), line(200);
  for (int i = 0; i < 200; ++i) {
    v[i] = nd(rng);
    line[i] = 2.0 * v[i];
  }
  const std::vector<double> query = linspace(-1.5, 1.5, 13);
  const SmootherFit fc = fit_smoother(c, v, query, BandwidthPolicy{});
  const SmootherFit fl = fit_smoother(line, v, query, BandwidthPolicy{});
  for (std::size_t j = 0; j < query.size(); ++j) {
    CHECK(std::abs(fc.fitted[j] - 0.37) <= 1e-10);
    CHECK(std::abs(fl.fitted[j] - 2.0 * query[j]) <= 1e-10);
    CHECK(std::abs(fc.weight_sum[j] - 1.0) <= 1e-10);
    CHECK(std::isfinite(fc.sum_abs_weights[j]));
  }
  CHECK(fc.cv_bandwidths.size() == 20);
}

TEST_CASE("smoother rejects identical covariate values") {
  const std::vector<double> v(30, 2.0), y(30, 1.0), q{2.0};
  CHECK_THROWS_AS(fit_smoother(y, v, q, BandwidthPolicy{}), DegenerateDesignError);
}

TEST_CASE("cross-validated bandwidth beats an oversmoothed fixed bandwidth") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  std::normal_distribution<double> noise(0.0, 0.1);
  std::vector<double> v(1000), y(1000);
  for (int i = 0; i < 1000; ++i) {
    v[i] = u(rng);
    y[i] = std::sin(v[i]) + noise(rng);
  }
  std::vector<double> test(500);
  for (double& t : test) t = u(rng);
  BandwidthPolicy fixed;
  fixed.fixed = true;
  fixed.h = 2.0 * sd_of(v);
  const SmootherFit cv = fit_smoother(y, v, test, BandwidthPolicy{}, false);
  const SmootherFit wide = fit_smoother(y, v, test, fixed, false);
  double mse_cv = 0.0, mse_wide = 0.0;
  for (std::size_t j = 0; j < test.size(); ++j) {
    mse_cv += std::pow(cv.fitted[j] - std::sin(test[j]), 2);
    mse_wide += std::pow(wide.fitted[j] - std::sin(test[j]), 2);
  }
  CHECK(mse_cv < mse_wide);
}

TEST_CASE("DR-Learner with true nuisances is the oracle smoother bit for bit") {
  std::mt19937_64 rng(6);
  const Sample s = dgp_sample(DgpSpec{}, 800, rng);
  const DgpNuisances eta;
  const std::vector<double> query{0.0, 1.0, 2.0};
  const auto dr = dr_learner(s, eta, Estimand::PsiM1, kArms, query, BandwidthPolicy{});
  const PseudoOutcomes po = compute_pseudo_outcomes(s, eta, Estimand::PsiM1, kArms);
  const SmootherFit oracle = fit_smoother(po.values, s.column(0), query, BandwidthPolicy{});
  REQUIRE(dr.size() == 3);
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(dr[j].estimate == oracle.fitted[j]);
    CHECK(dr[j].se == std::sqrt(oracle.variance[j]));
    CHECK(dr[j].provenance == Provenance::TrueDgp);
  }
}

TEST_CASE("bound estimators collapse to the effect estimators at tau zero") {
  std::mt19937_64 rng(7);
  const Sample train = dgp_sample(DgpSpec{}, 1000, rng);
  const Sample s = dgp_sample(DgpSpec{}, 1000, rng);
  const auto eta = fit_nuisances(train, NuisanceConfig{});
  const std::vector<double> query{0.0, 2.0};
  for (auto kind : {AssumptionKind::A1, AssumptionKind::A2, AssumptionKind::A3}) {
    const auto sa = SensitivityAssumption::make(kind, 0.0);
    const BoundReport os = one_step_bounds(s, *eta, kArms, sa);
    const EstimateReport point = one_step(s, *eta, Estimand::PsiM1, kArms);
    CHECK(os.lb.estimate == point.estimate);
    CHECK(os.ub.estimate == point.estimate);

    const auto dr = dr_learner(s, *eta, Estimand::PsiM1, kArms, query, BandwidthPolicy{});
    const auto drb = dr_learner_bounds(s, *eta, kArms, sa, query, BandwidthPolicy{});
    const PseudoOutcomes po = compute_pseudo_outcomes(s, *eta, Estimand::PsiM1, kArms);
    const ProjectionFit pf = fit_projection(po.values, s.column(0), ProjectionSpec{});
    const auto pb = projection_bounds(s, *eta, kArms, sa, ProjectionSpec{}, query);
    for (std::size_t j = 0; j < query.size(); ++j) {
      CHECK(drb[j].lb.estimate == dr[j].estimate);
      CHECK(drb[j].ub.estimate == dr[j].estimate);
      CHECK(pb[j].lb.estimate == project_predict(pf, query[j]).estimate);
      CHECK(pb[j].ub.estimate == project_predict(pf, query[j]).estimate);
    }
  }
}

TEST_CASE("estimated bounds stay ordered across replications") {
  const std::vector<double> query = linspace(-1.0, 3.0, 9);
  const auto sa = SensitivityAssumption::make(AssumptionKind::A2, 0.05);
  int ordered = 0;
  const int reps = 100;
  for (int r = 0; r < reps; ++r) {
    std::mt19937_64 rng = rng_stream(8, r, "ordered");
    const Sample train = dgp_sample(DgpSpec{}, 2000, rng);
    const Sample s = dgp_sample(DgpSpec{}, 2000, rng);
    const auto eta = fit_nuisances(train, NuisanceConfig{});
    const auto b = projection_bounds(s, *eta, kArms, sa, ProjectionSpec{}, query);
    bool ok = true;
    for (const auto& q : b) ok = ok && q.lb.estimate <= q.ub.estimate;
    ordered += ok;
  }
  CHECK(ordered >= 99);
}

TEST_CASE("one-step bounds cover the averaged effect on the selection design") {
  const double sigma = 10.0 / 3.0;
  const SelectionNuisances eta(sigma);
  const XQuadrature q = x_law_quadrature(DgpSpec{});
  double truth = 0.0;
  for (std::size_t i = 0; i < q.x.size(); ++i) truth += q.w[i] * truth_at(q.x[i]).psi_m1;
  const auto sa = SensitivityAssumption::make(AssumptionKind::A2, 0.1);
  int covered = 0;
  const int reps = 200;
  for (int r = 0; r < reps; ++r) {
    std::mt19937_64 rng = rng_stream(9, r, "selection");
    const Sample s = sample_from(eta, DgpSpec{}, 2000, rng);
    const BoundReport b = one_step_bounds(s, eta, kArms, sa);
    covered += b.lb.ci_lo <= truth && truth <= b.ub.ci_hi;
  }
  CHECK(covered >= 0.9 * reps);
}

TEST_CASE("cross-fitting never evaluates a row with nuisances trained on it") {
  std::mt19937_64 rng(10);
  const Sample s = dgp_sample(DgpSpec{}, 600, rng);
  const FoldPlan plan = make_folds(s.size(), 2, 3);
  const auto fits = cross_fit_nuisances(s, plan, default_learner());
  CHECK_NOTHROW(audit_out_of_fold(plan, fits));
  const auto swapped = std::vector{fits[1], fits[0]};
  CHECK_THROWS_AS(audit_out_of_fold(plan, swapped), DomainError);
  const std::vector<double> query{0.0, 2.0};
  for (auto mode : {FoldMode::SwapAverage, FoldMode::Pooled}) {
    const FoldPlan p = make_folds(s.size(), 2, 3, mode);
    const auto r = dr_learner(s, p, default_learner(), Estimand::PsiM1, kArms, query,
                              BandwidthPolicy{});
    REQUIRE(r.size() == 2);
    for (const auto& e : r) {
      CHECK(std::isfinite(e.estimate));
      CHECK(e.se > 0.0);
    }
  }
}

TEST_CASE("separate proportion mediated divides the two estimates") {
  const EstimateReport m1 = make_report(Estimand::PsiM1, "x", 0.06, 0.01, Provenance::Fitted, 0.0);
  const EstimateReport tot = make_report(Estimand::Cate, "x", 0.08, 0.02, Provenance::Fitted, 0.0);
  const EstimateReport r = ratio_separate(m1, tot);
  CHECK(r.estimate == doctest::Approx(0.75));
  const double se = std::sqrt(std::pow(0.01 / 0.08, 2) + std::pow(0.06 * 0.02 / (0.08 * 0.08), 2));
  CHECK(r.se == doctest::Approx(se));
  const EstimateReport tiny = make_report(Estimand::Cate, "x", 1e-5, 0.02, Provenance::Fitted, 0.0);
  CHECK_THROWS_AS(ratio_separate(m1, tiny), RatioDegenerateError);
}
