#include "iie/dgp.hpp"

#include <algorithm>
#include <limits>

namespace iie {

double dgp_propensity(double x) {
  if (x < -1.0) return 0.2;
  if (x < 0.0) return 0.2 + 0.55 * std::abs(x + 1.0);
  if (x < 1.0) return 0.75 - 0.25 * x;
  if (x < 2.0) return 0.5 - 0.25 * (x - 1.0) * (x - 1.0);
  if (x < 3.0) return 0.25 + 0.5 * (x - 2.0);
  return 0.75;
}

double dgp_zeta(double x) {
  const double base = -12.0 + 10.0 * std::sin(1.0) + 10.0 * std::cos(1.0);
  if (x < -0.5) return x - x * x;
  if (x < 0.0) return -2.0 + x;
  if (x < 1.0) return -12.0 + 10.0 * std::sin(x * x) + 10.0 * std::cos(x * x);
  if (x < 1.5) return base - 5.0 * (x - 1.0) - 5.0 * (x - 1.0) * (x - 1.0);
  if (x < 2.5) {
    const double d = x - 1.5;
    return base - 3.75 + 0.5 * d - d * d + 3.0 * d * d * d;
  }
  return -4.0 + 2.0 * x;
}

double dgp_m1_prob(int u, int a, double x) {
  if (u == 1) return a == 1 ? 0.8 : 0.1;
  return a == 1 ? 0.55 + 0.05 * (x + 1.0) : 0.15 + 0.1 * (x + 1.0);
}

double dgp_m2_prob(int u, int a, double x) {
  if (u == 1) return a == 1 ? 0.8 : 0.1;
  return a == 1 ? 0.4 + 0.1 * (x + 0.5) : 0.15 + 0.125 * (x + 1.0);
}

Cells dgp_joint(int a, double x) {
  Cells j{};
  for (int u = 0; u < 2; ++u) {
    const double q1 = dgp_m1_prob(u, a, x);
    const double q2 = dgp_m2_prob(u, a, x);
    for (int c = 0; c < 4; ++c) {
      const double f1 = cell_m1(c) == 1 ? q1 : 1.0 - q1;
      const double f2 = cell_m2(c) == 1 ? q2 : 1.0 - q2;
      j[c] += 0.5 * f1 * f2;
    }
  }
  return j;
}

namespace {

double raw_outcome(int m1, int m2, double x) {
  const double z = dgp_zeta(x);
  const double trend = 2.0 * x + 0.5 * x * x;
  if (m1 == 1 && m2 == 1) return 10.0 + z + trend;
  if (m1 == 0 && m2 == 1) return 4.0 + z;
  if (m1 == 1 && m2 == 0) return 8.0 + z + trend;
  return z;
}

}  // namespace

const OutcomeRange& dgp_outcome_range() {
  static const OutcomeRange range = [] {
    OutcomeRange r{std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity()};
    const int points = 4001;
    for (int i = 0; i < points; ++i) {
      const double x = -2.0 + 6.0 * static_cast<double>(i) / (points - 1);
      for (int c = 0; c < 4; ++c) {
        const double v = raw_outcome(cell_m1(c), cell_m2(c), x);
        r.z_lo = std::min(r.z_lo, v);
        r.z_hi = std::max(r.z_hi, v);
      }
    }
    return r;
  }();
  return range;
}

double dgp_outcome(int m1, int m2, double x) {
  const OutcomeRange& r = dgp_outcome_range();
  return (raw_outcome(m1, m2, x) - r.z_lo + 10.0) / (r.z_hi - r.z_lo + 20.0);
}

NuisancePoint dgp_point(double x) {
  std::array<Cells, 2> mu{}, joint{};
  for (int a = 0; a < 2; ++a) {
    joint[a] = dgp_joint(a, x);
    for (int c = 0; c < 4; ++c) mu[a][c] = dgp_outcome(cell_m1(c), cell_m2(c), x);
  }
  return NuisancePoint::from_joint(dgp_propensity(x), mu, joint);
}

NuisancePoint DgpNuisances::evaluate(std::span<const double> x) const { return dgp_point(x[0]); }

Sample dgp_sample(const DgpSpec& spec, std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> xdist(spec.x_mean, spec.x_sd);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Sample s(1);
  s.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = std::clamp(xdist(rng), spec.x_lo, spec.x_hi);
    const int a = unif(rng) < dgp_propensity(x) ? 1 : 0;
    const int u = unif(rng) < 0.5 ? 1 : 0;
    const int m1 = unif(rng) < dgp_m1_prob(u, a, x) ? 1 : 0;
    const int m2 = unif(rng) < dgp_m2_prob(u, a, x) ? 1 : 0;
    const double y = unif(rng) < dgp_outcome(m1, m2, x) ? 1.0 : 0.0;
    s.add(y, a, m1, m2, std::span<const double>(&x, 1));
  }
  return s;
}

Sample sample_from(const NuisanceSet& eta, const DgpSpec& spec, std::size_t n,
                   std::mt19937_64& rng) {
  std::normal_distribution<double> xdist(spec.x_mean, spec.x_sd);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  Sample s(1);
  s.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = std::clamp(xdist(rng), spec.x_lo, spec.x_hi);
    const NuisancePoint np = eta.at(x);
    const int a = unif(rng) < np.pi1 ? 1 : 0;
    const double u = unif(rng);
    int c = 0;
    double acc = np.joint[a][0];
    while (c < 3 && u >= acc) acc += np.joint[a][++c];
    const double y = unif(rng) < np.mu[a][c] ? 1.0 : 0.0;
    s.add(y, a, cell_m1(c), cell_m2(c), std::span<const double>(&x, 1));
  }
  return s;
}

TruthPoint truth_at(double x, ArmPair arms) {
  const NuisancePoint np = dgp_point(x);
  const int a = arms.a;
  const int ap = arms.a_prime;
  TruthPoint t;
  t.x = x;
  t.psi_m1 = psi_m1_plugin(np, arms);
  t.psi = np.outcome_mean(a) - np.outcome_mean(ap);
  t.psi_r = t.psi_m1 / t.psi;
  for (int c = 0; c < 4; ++c) {
    const int v1 = cell_m1(c);
    const int v2 = cell_m2(c);
    const double mu = np.mu[a][c];
    t.psi_m2 += mu * (np.m2[a][v2] - np.m2[ap][v2]) * np.m1[a][v1];
    t.psi_cov += mu * (np.joint[a][c] - np.m1[a][v1] * np.m2[a][v2] -
                       (np.joint[ap][c] - np.m1[ap][v1] * np.m2[ap][v2]));
    t.psi_ide += (np.mu[a][c] - np.mu[ap][c]) * np.joint[ap][c];
    t.psi_iie += mu * (np.joint[a][c] - np.joint[ap][c]);
  }
  return t;
}

std::vector<TruthPoint> truth_curves(const std::vector<double>& grid, ArmPair arms) {
  std::vector<TruthPoint> out;
  out.reserve(grid.size());
  for (double x : grid) out.push_back(truth_at(x, arms));
  return out;
}

double max_inverse_weight(double x, ArmPair arms) {
  const NuisancePoint np = dgp_point(x);
  const int a = arms.a;
  const int ap = arms.a_prime;
  double w = 1.0 / np.pi(ap);
  for (int c = 0; c < 4; ++c) {
    const int v1 = cell_m1(c);
    const int v2 = cell_m2(c);
    const double r = std::abs(np.m1[a][v1] - np.m1[ap][v1]) * np.m2[ap][v2] /
                     (np.pi(a) * np.joint[a][c]);
    w = std::max(w, r);
  }
  return w;
}

double selection_tau(double x, double sigma) {
  double level = 0.03;
  if (x < -1.0) level = 0.01;
  else if (x < 0.0) level = 0.02;
  else if (x < 1.0) level = 0.03;
  else if (x < 2.0) level = 0.02;
  else if (x < 3.0) level = 0.01;
  return sigma * level;
}

SelectionEquality selection_equality_at(double x, double sigma) {
  const auto sa = SensitivityAssumption::make(AssumptionKind::A2, selection_tau(x, sigma));
  return x < 1.0 ? SelectionEquality::lower(sa) : SelectionEquality::upper(sa);
}

NuisancePoint SelectionNuisances::evaluate(std::span<const double> x) const {
  NuisancePoint np = dgp_point(x[0]);
  const SelectionEquality eq = selection_equality_at(x[0], sigma_);
  // nu = mu + f (c mu + t)(1 - p) solved for the observed regression mu.
  for (int a = 0; a < 2; ++a) {
    for (int c = 0; c < 4; ++c) {
      const double off = 1.0 - np.joint[a][c];
      np.mu[a][c] = (np.mu[a][c] - eq.f * eq.t * off) / (1.0 + eq.f * eq.c * off);
    }
  }
  return np;
}

}  // namespace iie
