#include <cmath>
#include <random>

#include "doctest.h"
#include "iie/dgp.hpp"
#include "iie/oracle.hpp"
#include "iie/sensitivity.hpp"
#include "iie/simlab.hpp"

using namespace iie;

namespace {

const ArmPair kArms = ArmPair::make(1, 0);
const std::vector<AssumptionKind> kKinds{AssumptionKind::A1, AssumptionKind::A2, AssumptionKind::A3};

}  // namespace

TEST_CASE("assumption encodings") {
  const auto a1 = SensitivityAssumption::make(AssumptionKind::A1, 0.2).constants();
  CHECK(a1.c_l == 0.0);
  CHECK(a1.t_l * a1.f_l == doctest::Approx(-0.2));
  CHECK(a1.t_u * a1.f_u == doctest::Approx(0.2));
  const auto a2 = SensitivityAssumption::make(AssumptionKind::A2, 0.2).constants();
  CHECK(a2.c_u == -1.0);
  CHECK(a2.t_u == 1.0);
  CHECK_THROWS_AS(SensitivityAssumption::make(AssumptionKind::A2, 1.0), DomainError);
  CHECK_THROWS_AS(SensitivityAssumption::make(AssumptionKind::A1, -0.1), DomainError);
  CHECK(parse_assumption("A3") == AssumptionKind::A3);
}

TEST_CASE("cell bounds by direct substitution") {
  const Interval z = bound_mu(SensitivityAssumption::make(AssumptionKind::A2, 0.0), 0.4, 0.3);
  CHECK(z.lb == 0.0);
  CHECK(z.ub == 0.0);
  const Interval a1 = bound_mu(SensitivityAssumption::make(AssumptionKind::A1, 0.1), 0.4, 0.5);
  CHECK(a1.lb == doctest::Approx(-0.05));
  CHECK(a1.ub == doctest::Approx(0.05));
  const Interval a3 = bound_mu(SensitivityAssumption::make(AssumptionKind::A3, 0.15), 0.4, 0.25);
  CHECK(a3.ub == doctest::Approx(0.4 * (0.15 / 0.85) * 0.75).epsilon(1e-14));
  CHECK(a3.lb == doctest::Approx(-0.15 * 0.4 * 0.75).epsilon(1e-14));
  CHECK_THROWS_AS(bound_mu(SensitivityAssumption::make(AssumptionKind::A2, 0.1), 1.5, 0.2), ScaleError);
  CHECK_NOTHROW(bound_mu(SensitivityAssumption::make(AssumptionKind::A1, 0.1), 1.5, 0.2));
}

TEST_CASE("A3 upper cell bound exceeds A2 exactly above (1 - tau) / (2 - tau)") {
  for (double tau : {0.05, 0.1, 0.3, 0.6}) {
    const double threshold = (1.0 - tau) / (2.0 - tau);
    for (int i = 0; i <= 200; ++i) {
      const double mu = i / 200.0;
      if (std::abs(mu - threshold) < 1e-12) continue;
      const double u2 = bound_mu(SensitivityAssumption::make(AssumptionKind::A2, tau), mu, 0.3).ub;
      const double u3 = bound_mu(SensitivityAssumption::make(AssumptionKind::A3, tau), mu, 0.3).ub;
      CHECK((u3 >= u2) == (mu >= threshold));
    }
  }
}

TEST_CASE("every bound operation collapses at tau zero") {
  std::mt19937_64 rng(5);
  const DiscreteProblem p = random_problem(rng, 4, 0.05);
  const CovariateLaw law = CovariateLaw::from_problem(p);
  for (auto kind : kKinds) {
    const auto sa = SensitivityAssumption::make(kind, 0.0);
    for (double x : {-1.0, 0.0, 2.5}) {
      const NuisancePoint np = dgp_point(x);
      const Interval b = bounds_psi_m1_at_x(np, kArms, sa);
      CHECK(std::abs(b.lb - psi_m1_plugin(np, kArms)) <= 1e-15);
      CHECK(std::abs(b.ub - psi_m1_plugin(np, kArms)) <= 1e-15);
      const TruthPoint t = truth_at(x);
      const ExtensionBounds e = extension_bounds(extension_terms_at_x(np, kArms), sa.constants());
      CHECK(e.m2.lb == doctest::Approx(t.psi_m2).epsilon(1e-12));
      CHECK(e.m2.ub == doctest::Approx(t.psi_m2).epsilon(1e-12));
      CHECK(e.iie.lb == doctest::Approx(t.psi_iie).epsilon(1e-12));
      CHECK(e.iie.ub == doctest::Approx(t.psi_iie).epsilon(1e-12));
      CHECK(e.ide.lb == doctest::Approx(t.psi_ide).epsilon(1e-12));
      CHECK(e.cov.ub == doctest::Approx(t.psi_cov).epsilon(1e-12));
      CHECK(e.cov.lb == doctest::Approx(t.psi_cov).epsilon(1e-12));
    }
    const Interval avg = bounds_average(law, kArms, sa);
    const double psi = enumerate_functional(p, Functional::PsiM1, kArms);
    CHECK(std::abs(avg.lb - psi) <= 1e-14);
    CHECK(std::abs(avg.ub - psi) <= 1e-14);
  }
}

TEST_CASE("A1 bounds are exactly twice as wide as A2 bounds") {
  for (double x : {-1.0, 0.3, 1.8, 3.2}) {
    const NuisancePoint np = dgp_point(x);
    for (double tau : {0.01, 0.1, 0.3}) {
      const double w1 = bounds_psi_m1_at_x(np, kArms, SensitivityAssumption::make(AssumptionKind::A1, tau)).width();
      const double w2 = bounds_psi_m1_at_x(np, kArms, SensitivityAssumption::make(AssumptionKind::A2, tau)).width();
      CHECK(w1 == doctest::Approx(2.0 * w2).epsilon(1e-12));
      const double c1 = bound_mu(SensitivityAssumption::make(AssumptionKind::A1, tau), np.mu[1][2], np.joint[1][2]).width();
      const double c2 = bound_mu(SensitivityAssumption::make(AssumptionKind::A2, tau), np.mu[1][2], np.joint[1][2]).width();
      CHECK(c1 == doctest::Approx(2.0 * c2).epsilon(1e-14));
    }
  }
}

TEST_CASE("lower bound never exceeds upper bound and width grows with tau") {
  std::mt19937_64 rng(17);
  for (int k = 0; k < 100; ++k) {
    const DiscreteProblem p = random_problem(rng, 2 + k % 4, 0.02);
    const CovariateLaw law = CovariateLaw::from_problem(p);
    for (auto kind : kKinds) {
      double last = -1.0;
      for (double tau : {0.0, 0.01, 0.05, 0.1, 0.3}) {
        const Interval b = bounds_average(law, kArms, SensitivityAssumption::make(kind, tau));
        CHECK(b.lb <= b.ub + 1e-15);
        CHECK(b.width() >= last - 1e-15);
        last = b.width();
      }
    }
  }
}

TEST_CASE("averaged bounds equal averaged pointwise bounds") {
  std::mt19937_64 rng(23);
  const DiscreteProblem p = random_problem(rng, 5, 0.05);
  const auto sa = SensitivityAssumption::make(AssumptionKind::A3, 0.2);
  double lb = 0.0, ub = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const Interval b = bounds_psi_m1_at_x(p.truth[i], kArms, sa);
    lb += p.px[i] * b.lb;
    ub += p.px[i] * b.ub;
  }
  const Interval avg = bounds_average(CovariateLaw::from_problem(p), kArms, sa);
  CHECK(avg.lb == doctest::Approx(lb).epsilon(1e-13));
  CHECK(avg.ub == doctest::Approx(ub).epsilon(1e-13));
  CHECK(avg.lb == doctest::Approx(enumerate_functional(p, Functional::BoundLower, kArms, sa)).epsilon(1e-12));
}

TEST_CASE("total effect decomposes through the indirect and direct bounds") {
  for (double x : {-0.5, 1.0, 2.2}) {
    const NuisancePoint np = dgp_point(x);
    for (auto kind : kKinds) {
      const auto k = SensitivityAssumption::make(kind, 0.1).constants();
      const ExtensionBounds e = extension_bounds(extension_terms_at_x(np, kArms), k);
      const double psi = np.outcome_mean(1) - np.outcome_mean(0);
      CHECK(std::abs(e.psi_total - psi) <= 1e-12);
      CHECK(std::abs(e.iie.lb + e.ide.ub - psi) <= 1e-12);
      CHECK(std::abs(e.iie.ub + e.ide.lb - psi) <= 1e-12);
      CHECK(e.cov.ub == doctest::Approx(e.iie.ub - (e.m2.lb + e.m1.lb)).epsilon(1e-14));
    }
  }
}

TEST_CASE("known selection recovery round trips on the selection design") {
  const double sigma = 10.0 / 3.0;
  for (double x : linspace(-2.0, 4.0, 50)) {
    const SelectionNuisances observed(sigma);
    const double r = recover_known_selection(observed.at(x), kArms, selection_equality_at(x, sigma));
    CHECK(std::abs(r - truth_at(x).psi_m1) <= 1e-8);
  }
}

TEST_CASE("zero selection returns the observed effect") {
  const NuisancePoint np = dgp_point(0.4);
  CHECK(recover_known_selection(np, kArms, {-1.0, 0.0, 0.0}) == doctest::Approx(psi_m1_plugin(np, kArms)));
}

TEST_CASE("pure shift selection by hand on a two point grid") {
  for (double x : {0.0, 2.0}) {
    NuisancePoint np = dgp_point(x);
    const double f = 0.07;
    double truth = 0.0;
    for (int v1 = 0; v1 < 2; ++v1) {
      for (int v2 = 0; v2 < 2; ++v2) {
        const double nu = np.mu_at(1, v1, v2) + f * (1.0 - np.joint_at(1, v1, v2));
        truth += nu * (np.p_m1(1, v1) - np.p_m1(0, v1)) * np.p_m2(0, v2);
      }
    }
    CHECK(recover_known_selection(np, kArms, {0.0, 1.0, f}) == doctest::Approx(truth).epsilon(1e-14));
  }
}

TEST_CASE("selection design bounds bracket the effect at tau 0.1") {
  const auto rows = selection_curves(10.0 / 3.0, 0.1, linspace(-2.0, 4.0, 50));
  REQUIRE(rows.size() == 50);
  for (const auto& r : rows) {
    CHECK_MESSAGE(r.lb <= r.psi_m1 + 1e-12, "x " << r.x);
    CHECK_MESSAGE(r.psi_m1 <= r.ub + 1e-12, "x " << r.x);
    CHECK(r.tau_star <= 0.1 + 1e-12);
  }
}

TEST_CASE("smaller tau brackets the effect wherever it dominates the selection level") {
  for (double tau : {0.02, 0.05}) {
    for (const auto& r : selection_curves(10.0 / 3.0, tau, linspace(-2.0, 4.0, 200))) {
      if (r.tau_star > tau) continue;
      CHECK_MESSAGE(r.lb <= r.psi_m1 + 1e-12, "tau " << tau << " x " << r.x);
      CHECK_MESSAGE(r.psi_m1 <= r.ub + 1e-12, "tau " << tau << " x " << r.x);
    }
  }
}

TEST_CASE("robustness value is the smallest tau whose interval reaches zero") {
  std::vector<BoundEstimate> grid{{0.2, 0.01, 0.09, 0.01, 0.01},
                                  {0.0, 0.05, 0.05, 0.01, 0.01},
                                  {0.1, 0.03, 0.07, 0.01, 0.01}};
  const auto t = robustness_tau(grid);
  REQUIRE(t.has_value());
  CHECK(*t == 0.2);
  grid.pop_back();
  grid.front().lb = 0.03;
  CHECK_FALSE(robustness_tau(grid).has_value());
}
