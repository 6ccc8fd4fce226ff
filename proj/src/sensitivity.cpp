#include "iie/sensitivity.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace iie {

std::string to_string(AssumptionKind k) {
  switch (k) {
    case AssumptionKind::A1: return "A1";
    case AssumptionKind::A2: return "A2";
    case AssumptionKind::A3: return "A3";
  }
  return "unknown";
}

AssumptionKind parse_assumption(const std::string& s) {
  if (s == "A1" || s == "a1") return AssumptionKind::A1;
  if (s == "A2" || s == "a2") return AssumptionKind::A2;
  if (s == "A3" || s == "a3") return AssumptionKind::A3;
  throw ConfigError("unknown sensitivity assumption '" + s + "'");
}

SensitivityAssumption SensitivityAssumption::make(AssumptionKind kind, double tau) {
  if (!(tau >= 0.0 && tau < 1.0)) throw DomainError("tau must lie in [0, 1)");
  SensitivityAssumption sa;
  sa.kind = kind;
  sa.tau = tau;
  return sa;
}

SensitivityConstants SensitivityAssumption::constants() const {
  SensitivityConstants k;
  switch (kind) {
    case AssumptionKind::A1:
      k = {0.0, 1.0, -tau, 0.0, 1.0, tau};
      break;
    case AssumptionKind::A2:
      k = {1.0, 0.0, -tau, -1.0, 1.0, tau};
      break;
    case AssumptionKind::A3:
      k = {1.0, 0.0, -tau, 1.0, 0.0, tau / (1.0 - tau)};
      break;
  }
  return k;
}

void check_outcome_scale(const SensitivityAssumption& sa, const NuisancePoint& np) {
  if (!sa.requires_unit_outcome()) return;
  for (const auto& arm : np.mu) {
    for (double m : arm) {
      if (m < 0.0 || m > 1.0) {
        throw ScaleError("assumption " + to_string(sa.kind) + " requires outcomes in [0, 1]");
      }
    }
  }
}

Interval bound_mu(const SensitivityAssumption& sa, double mu, double p_cell) {
  if (sa.requires_unit_outcome() && (mu < 0.0 || mu > 1.0)) {
    throw ScaleError("assumption " + to_string(sa.kind) + " requires outcomes in [0, 1]");
  }
  const SensitivityConstants k = sa.constants();
  const double off = 1.0 - p_cell;
  return {(k.c_l * mu + k.t_l) * k.f_l * off, (k.c_u * mu + k.t_u) * k.f_u * off};
}

BoundTermsAtX bound_terms_at_x(const NuisancePoint& np, ArmPair arms) {
  const int a = arms.a;
  const int ap = arms.a_prime;
  BoundTermsAtX t;
  for (int v1 = 0; v1 < 2; ++v1) {
    for (int v2 = 0; v2 < 2; ++v2) {
      const double mu = np.mu_at(a, v1, v2);
      const double p12 = np.joint_at(a, v1, v2);
      const double w_a = np.p_m1(a, v1) * np.p_m2(ap, v2);
      const double w_ap = np.p_m1(ap, v1) * np.p_m2(ap, v2);
      t.psi_bar_a += mu * w_a;
      t.psi_bar_ap += mu * w_ap;
      t.gamma_1a += mu * p12 * w_a;
      t.gamma_1ap += mu * p12 * w_ap;
      t.gamma_2a += p12 * w_a;
      t.gamma_2ap += p12 * w_ap;
    }
  }
  t.psi_bar = t.psi_bar_a - t.psi_bar_ap;
  return t;
}

Interval bounds_from_terms(const BoundTermsAtX& t, const SensitivityConstants& k) {
  Interval out;
  out.ub = t.psi_bar + k.f_u * k.c_u * t.psi_bar_a - k.f_l * k.c_l * t.psi_bar_ap +
           k.t_u * k.f_u - k.t_l * k.f_l - k.f_u * (k.c_u * t.gamma_1a + k.t_u * t.gamma_2a) +
           k.f_l * (k.c_l * t.gamma_1ap + k.t_l * t.gamma_2ap);
  out.lb = t.psi_bar + k.f_l * k.c_l * t.psi_bar_a - k.f_u * k.c_u * t.psi_bar_ap +
           k.t_l * k.f_l - k.t_u * k.f_u - k.f_l * (k.c_l * t.gamma_1a + k.t_l * t.gamma_2a) +
           k.f_u * (k.c_u * t.gamma_1ap + k.t_u * t.gamma_2ap);
  return out;
}

Interval bounds_psi_m1_at_x(const NuisancePoint& np, ArmPair arms, const SensitivityConstants& k) {
  return bounds_from_terms(bound_terms_at_x(np, arms), k);
}

Interval bounds_psi_m1_at_x(const NuisancePoint& np, ArmPair arms, const SensitivityAssumption& sa) {
  check_outcome_scale(sa, np);
  return bounds_psi_m1_at_x(np, arms, sa.constants());
}

Interval bounds_psi_m1_at_x(const NuisanceSet& eta, std::span<const double> x, ArmPair arms,
                            const SensitivityAssumption& sa) {
  return bounds_psi_m1_at_x(eta.at(x), arms, sa);
}

CovariateLaw CovariateLaw::from_problem(const DiscreteProblem& p) {
  p.validate();
  CovariateLaw law;
  law.points = p.truth;
  law.weights = p.px;
  return law;
}

CovariateLaw CovariateLaw::empirical(const NuisanceSet& eta, const Sample& s) {
  if (s.size() == 0) throw DomainError("empty sample");
  CovariateLaw law;
  law.points.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) law.points.push_back(eta.at(s.x(i)));
  law.weights.assign(s.size(), 1.0 / static_cast<double>(s.size()));
  return law;
}

BoundTermsAtX average_bound_terms(const CovariateLaw& law, ArmPair arms) {
  BoundTermsAtX avg;
  for (std::size_t i = 0; i < law.points.size(); ++i) {
    const BoundTermsAtX t = bound_terms_at_x(law.points[i], arms);
    const double w = law.weights[i];
    avg.psi_bar += w * t.psi_bar;
    avg.psi_bar_a += w * t.psi_bar_a;
    avg.psi_bar_ap += w * t.psi_bar_ap;
    avg.gamma_1a += w * t.gamma_1a;
    avg.gamma_1ap += w * t.gamma_1ap;
    avg.gamma_2a += w * t.gamma_2a;
    avg.gamma_2ap += w * t.gamma_2ap;
  }
  return avg;
}

Interval bounds_average(const CovariateLaw& law, ArmPair arms, const SensitivityAssumption& sa) {
  for (const auto& np : law.points) check_outcome_scale(sa, np);
  return bounds_from_terms(average_bound_terms(law, arms), sa.constants());
}

ExtensionTermsAtX extension_terms_at_x(const NuisancePoint& np, ArmPair arms) {
  const int a = arms.a;
  const int ap = arms.a_prime;
  ExtensionTermsAtX t;
  t.psi_arm = np.outcome_mean(a);
  t.psi_arm_prime = np.outcome_mean(ap);
  for (int v1 = 0; v1 < 2; ++v1) {
    for (int v2 = 0; v2 < 2; ++v2) {
      const double mu = np.mu_at(a, v1, v2);
      const double p12 = np.joint_at(a, v1, v2);
      const double p12p = np.joint_at(ap, v1, v2);
      const double p1 = np.p_m1(a, v1);
      const double p2 = np.p_m2(a, v2);
      const double p2p = np.p_m2(ap, v2);
      t.iie_bar_ap += mu * p12p;
      t.gamma_1_iie += mu * p12 * p12p;
      t.gamma_2_iie += p12 * p12p;
      t.m2_bar_a += mu * p2 * p1;
      t.m2_bar_ap += mu * p2p * p1;
      t.gamma_1a_m2 += mu * p12 * p1 * p2;
      t.gamma_1ap_m2 += mu * p12 * p1 * p2p;
      t.gamma_2a_m2 += p12 * p1 * p2;
      t.gamma_2ap_m2 += p12 * p1 * p2p;
    }
  }
  t.m2_bar = t.m2_bar_a - t.m2_bar_ap;
  t.m1 = bound_terms_at_x(np, arms);
  return t;
}

ExtensionTermsAtX average_extension_terms(const CovariateLaw& law, ArmPair arms) {
  ExtensionTermsAtX avg;
  for (std::size_t i = 0; i < law.points.size(); ++i) {
    const ExtensionTermsAtX t = extension_terms_at_x(law.points[i], arms);
    const double w = law.weights[i];
    avg.psi_arm += w * t.psi_arm;
    avg.psi_arm_prime += w * t.psi_arm_prime;
    avg.iie_bar_ap += w * t.iie_bar_ap;
    avg.gamma_1_iie += w * t.gamma_1_iie;
    avg.gamma_2_iie += w * t.gamma_2_iie;
    avg.m2_bar += w * t.m2_bar;
    avg.m2_bar_a += w * t.m2_bar_a;
    avg.m2_bar_ap += w * t.m2_bar_ap;
    avg.gamma_1a_m2 += w * t.gamma_1a_m2;
    avg.gamma_1ap_m2 += w * t.gamma_1ap_m2;
    avg.gamma_2a_m2 += w * t.gamma_2a_m2;
    avg.gamma_2ap_m2 += w * t.gamma_2ap_m2;
  }
  avg.m1 = average_bound_terms(law, arms);
  return avg;
}

ExtensionBounds extension_bounds(const ExtensionTermsAtX& t, const SensitivityConstants& k) {
  ExtensionBounds b;
  b.psi_total = t.psi_arm - t.psi_arm_prime;
  b.m1 = bounds_from_terms(t.m1, k);

  b.m2.ub = t.m2_bar + k.f_u * k.c_u * t.m2_bar_a - k.f_l * k.c_l * t.m2_bar_ap + k.t_u * k.f_u -
            k.t_l * k.f_l - k.f_u * (k.c_u * t.gamma_1a_m2 + k.t_u * t.gamma_2a_m2) +
            k.f_l * (k.c_l * t.gamma_1ap_m2 + k.t_l * t.gamma_2ap_m2);
  b.m2.lb = t.m2_bar + k.f_l * k.c_l * t.m2_bar_a - k.f_u * k.c_u * t.m2_bar_ap + k.t_l * k.f_l -
            k.t_u * k.f_u - k.f_l * (k.c_l * t.gamma_1a_m2 + k.t_l * t.gamma_2a_m2) +
            k.f_u * (k.c_u * t.gamma_1ap_m2 + k.t_u * t.gamma_2ap_m2);

  const double iie_point = t.psi_arm - t.iie_bar_ap;
  b.iie.ub = iie_point - k.f_l * k.c_l * t.iie_bar_ap - k.t_l * k.f_l +
             k.f_l * (k.c_l * t.gamma_1_iie + k.t_l * t.gamma_2_iie);
  b.iie.lb = iie_point - k.f_u * k.c_u * t.iie_bar_ap - k.t_u * k.f_u +
             k.f_u * (k.c_u * t.gamma_1_iie + k.t_u * t.gamma_2_iie);

  b.ide.lb = b.psi_total - b.iie.ub;
  b.ide.ub = b.psi_total - b.iie.lb;
  b.cov.ub = b.iie.ub - (b.m2.lb + b.m1.lb);
  b.cov.lb = b.iie.lb - (b.m2.ub + b.m1.ub);
  return b;
}

SelectionEquality SelectionEquality::lower(const SensitivityAssumption& sa) {
  const SensitivityConstants k = sa.constants();
  return {k.c_l, k.t_l, k.f_l};
}

SelectionEquality SelectionEquality::upper(const SensitivityAssumption& sa) {
  const SensitivityConstants k = sa.constants();
  return {k.c_u, k.t_u, k.f_u};
}

double recover_known_selection(const NuisancePoint& np, ArmPair arms, const SelectionEquality& eq) {
  const int a = arms.a;
  const int ap = arms.a_prime;
  double psi_bar = 0.0, mu_term = 0.0, p_term = 0.0;
  for (int v1 = 0; v1 < 2; ++v1) {
    for (int v2 = 0; v2 < 2; ++v2) {
      const double mu = np.mu_at(a, v1, v2);
      const double p12 = np.joint_at(a, v1, v2);
      const double w = (np.p_m1(a, v1) - np.p_m1(ap, v1)) * np.p_m2(ap, v2);
      psi_bar += mu * w;
      mu_term += mu * p12 * w;
      p_term += p12 * w;
    }
  }
  return psi_bar * (1.0 + eq.c * eq.f) - eq.c * eq.f * mu_term - eq.t * eq.f * p_term;
}

std::optional<double> robustness_tau(const std::vector<BoundEstimate>& grid, double z) {
  std::vector<BoundEstimate> sorted = grid;
  std::sort(sorted.begin(), sorted.end(),
            [](const BoundEstimate& l, const BoundEstimate& r) { return l.tau < r.tau; });
  for (const auto& b : sorted) {
    const double lo = b.lb - z * b.se_lb;
    const double hi = b.ub + z * b.se_ub;
    if (lo <= 0.0 && hi >= 0.0) return b.tau;
  }
  return std::nullopt;
}

double calibrate_tau(const Sample& s, const NuisanceSet& eta, int arm) {
  std::array<double, 4> adjusted{}, raw{};
  std::array<long, 4> count{};
  for (std::size_t i = 0; i < s.size(); ++i) {
    const NuisancePoint np = eta.at(s.x(i));
    for (int c = 0; c < 4; ++c) adjusted[c] += np.mu[arm][c];
    if (s.a(i) == arm) {
      const int c = cell_index(s.m1(i), s.m2(i));
      raw[c] += s.y(i);
      ++count[c];
    }
  }
  double tau = 0.0;
  for (int c = 0; c < 4; ++c) {
    if (count[c] == 0) continue;
    const double adj = adjusted[c] / static_cast<double>(s.size());
    const double unadj = raw[c] / static_cast<double>(count[c]);
    if (adj <= 0.0 || unadj <= 0.0) continue;
    const double r = adj / unadj;
    tau = std::max({tau, 1.0 - r, 1.0 - 1.0 / r});
  }
  return tau;
}

}  // namespace iie
