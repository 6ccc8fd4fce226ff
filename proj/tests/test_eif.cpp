#include <cmath>
#include <random>

#include "doctest.h"
#include "iie/dgp.hpp"
#include "iie/eif.hpp"
#include "iie/oracle.hpp"

using namespace iie;

namespace {

const ArmPair kArms = ArmPair::make(1, 0);

std::vector<CellObs> all_cells(double y) {
  std::vector<CellObs> z;
  for (int a = 0; a < 2; ++a) {
    for (int c = 0; c < 4; ++c) z.push_back({y, a, cell_m1(c), cell_m2(c)});
  }
  return z;
}

}  // namespace

TEST_CASE("arm components difference to the combined influence function") {
  for (double x : {-1.5, 0.0, 1.2, 3.0}) {
    const NuisancePoint np = dgp_point(x);
    for (double y : {0.0, 1.0}) {
      for (const auto& z : all_cells(y)) {
        const double d = eif_psi_m1_arm(z, np, kArms, ArmTerm::A) -
                         eif_psi_m1_arm(z, np, kArms, ArmTerm::APrime);
        CHECK(std::abs(d - eif_psi_m1(z, np, kArms)) <= 1e-13);
      }
    }
  }
}

TEST_CASE("conditional mean of the influence function is the plug-in effect") {
  for (double x : {-1.0, 0.5, 2.0}) {
    const NuisancePoint np = dgp_point(x);
    double m = 0.0;
    for (int a = 0; a < 2; ++a) {
      for (int c = 0; c < 4; ++c) {
        const double w = np.pi(a) * np.joint[a][c];
        const double mu = np.mu[a][c];
        const CellObs z1{1.0, a, cell_m1(c), cell_m2(c)};
        const CellObs z0{0.0, a, cell_m1(c), cell_m2(c)};
        m += w * (mu * eif_psi_m1(z1, np, kArms) + (1.0 - mu) * eif_psi_m1(z0, np, kArms));
      }
    }
    CHECK(std::abs(m - psi_m1_plugin(np, kArms)) <= 1e-13);
  }
}

TEST_CASE("total effect pseudo-outcome matches the augmented weighting formula") {
  const CatePoint cp{0.3, 0.2, 0.6};
  const CellObs treated{1.0, 1, 0, 0};
  CHECK(eif_cate(treated, cp, kArms) == doctest::Approx((1.0 - 0.6) / 0.3 + 0.4));
  const CellObs control{1.0, 0, 1, 1};
  CHECK(eif_cate(control, cp, kArms) == doctest::Approx(-(1.0 - 0.2) / 0.7 + 0.4));
}

TEST_CASE("ratio influence function refuses a vanishing total effect") {
  NuisancePoint np = dgp_point(0.0);
  CatePoint cp = cate_point(np);
  cp.mu0 = cp.mu1 - 5e-4;
  CHECK_THROWS_AS(eif_ratio({1.0, 1, 0, 0}, np, cp, kArms), RatioDegenerateError);
  CHECK_NOTHROW(eif_ratio({1.0, 1, 0, 0}, np, cp, kArms, 1e-4));
}

TEST_CASE("bound influence functions collapse to the effect at tau zero") {
  for (auto kind : {AssumptionKind::A1, AssumptionKind::A2, AssumptionKind::A3}) {
    const auto sa = SensitivityAssumption::make(kind, 0.0);
    const NuisancePoint np = dgp_point(0.7);
    for (const auto& z : all_cells(1.0)) {
      const Interval xi = eif_bounds(z, np, kArms, sa);
      CHECK(xi.lb == doctest::Approx(eif_psi_m1(z, np, kArms)).epsilon(1e-14));
      CHECK(xi.ub == doctest::Approx(eif_psi_m1(z, np, kArms)).epsilon(1e-14));
    }
  }
}

TEST_CASE("influence functions are centered on random discrete problems") {
  std::mt19937_64 rng(11);
  for (int k = 0; k < 5; ++k) {
    const DiscreteProblem p = random_problem(rng, 3, 0.05);
    for (auto f : functionals_with_influence_function()) {
      const auto sa = SensitivityAssumption::make(AssumptionKind::A2, 0.1);
      const double e = exact_plugin_mean(p, p.truth, f, kArms, sa);
      const double t = enumerate_functional(p, f, kArms, sa);
      CHECK_MESSAGE(std::abs(e - t) <= 1e-10 * std::max(1.0, std::abs(t)), to_string(f));
    }
  }
}

TEST_CASE("pseudo-outcomes list every row below the positivity floor") {
  Sample s(1);
  for (double x : {0.0, 5.0, 1.0, 6.0}) {
    const double xv[1] = {x};
    s.add(1.0, 1, 0, 0, xv);
  }
  const FunctionNuisanceSet eta(
      [](std::span<const double> x) {
        NuisancePoint np = dgp_point(std::min(x[0], 3.0));
        if (x[0] > 4.0) np.pi1 = 1e-3;
        return np;
      },
      Provenance::Fitted);
  try {
    compute_pseudo_outcomes(s, eta, Estimand::PsiM1, kArms, std::nullopt, 1e-2);
    FAIL("expected a positivity error");
  } catch (const PositivityError& e) {
    CHECK(e.rows() == std::vector<long>{1, 3});
    CHECK(e.id() == "E_POSITIVITY");
  }
}

TEST_CASE("bound pseudo-outcomes require an assumption") {
  std::mt19937_64 rng(3);
  const Sample s = dgp_sample(DgpSpec{}, 10, rng);
  const DgpNuisances eta;
  CHECK_THROWS_AS(compute_pseudo_outcomes(s, eta, Estimand::BoundLower, kArms), DomainError);
}
