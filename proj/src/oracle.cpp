#include "iie/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace iie {

namespace {

double logit(double p) { return std::log(p / (1.0 - p)); }
double expit(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// Per-cell bounds on the off-cell counterfactual shift, written directly from
// the three assumptions.
void nu_shift(const SensitivityAssumption& sa, double mu, double p_cell, double& lo, double& hi) {
  const double off = 1.0 - p_cell;
  const double t = sa.tau;
  switch (sa.kind) {
    case AssumptionKind::A1:
      lo = -t * off;
      hi = t * off;
      break;
    case AssumptionKind::A2:
      lo = -t * mu * off;
      hi = t * (1.0 - mu) * off;
      break;
    case AssumptionKind::A3:
      lo = -t * mu * off;
      hi = t / (1.0 - t) * mu * off;
      break;
  }
}

struct PointValues {
  double m1 = 0, m1a = 0, m1ap = 0, cate = 0, m2 = 0, cov = 0, ide = 0, iie = 0, psi_a = 0;
  double g1a = 0, g1ap = 0, g2a = 0, g2ap = 0;
  double g1a_m2 = 0, g1ap_m2 = 0, g2a_m2 = 0, g2ap_m2 = 0, g1_iie = 0, g2_iie = 0;
  double m1_lb = 0, m1_ub = 0, m2_lb = 0, m2_ub = 0, iie_lb = 0, iie_ub = 0;
};

PointValues point_values(const NuisancePoint& np, ArmPair arms,
                         const std::optional<SensitivityAssumption>& sa) {
  const int a = arms.a;
  const int ap = arms.a_prime;
  PointValues v;
  double psi_ap = 0.0;
  double nu_lo_m1a = 0, nu_hi_m1a = 0, nu_lo_m1ap = 0, nu_hi_m1ap = 0;
  double nu_lo_m2a = 0, nu_hi_m2a = 0, nu_lo_m2ap = 0, nu_hi_m2ap = 0;
  double nu_lo_iie = 0, nu_hi_iie = 0;
  for (int c = 0; c < 4; ++c) {
    const int v1 = cell_m1(c);
    const int v2 = cell_m2(c);
    const double mu = np.mu[a][c];
    const double mup = np.mu[ap][c];
    const double p12 = np.joint[a][c];
    const double p12p = np.joint[ap][c];
    const double p1 = np.m1[a][v1];
    const double p1p = np.m1[ap][v1];
    const double p2 = np.m2[a][v2];
    const double p2p = np.m2[ap][v2];
    v.m1a += mu * p1 * p2p;
    v.m1ap += mu * p1p * p2p;
    v.psi_a += mu * p12;
    psi_ap += mup * p12p;
    v.m2 += mu * (p2 - p2p) * p1;
    v.cov += mu * (p12 - p1 * p2 - (p12p - p1p * p2p));
    v.ide += (mu - mup) * p12p;
    v.iie += mu * (p12 - p12p);
    v.g1a += mu * p12 * p1 * p2p;
    v.g1ap += mu * p12 * p1p * p2p;
    v.g2a += p12 * p1 * p2p;
    v.g2ap += p12 * p1p * p2p;
    v.g1a_m2 += mu * p12 * p1 * p2;
    v.g1ap_m2 += mu * p12 * p1 * p2p;
    v.g2a_m2 += p12 * p1 * p2;
    v.g2ap_m2 += p12 * p1 * p2p;
    v.g1_iie += mu * p12 * p12p;
    v.g2_iie += p12 * p12p;
    if (sa) {
      double lo = 0, hi = 0;
      nu_shift(*sa, mu, p12, lo, hi);
      nu_lo_m1a += (mu + lo) * p1 * p2p;
      nu_hi_m1a += (mu + hi) * p1 * p2p;
      nu_lo_m1ap += (mu + lo) * p1p * p2p;
      nu_hi_m1ap += (mu + hi) * p1p * p2p;
      nu_lo_m2a += (mu + lo) * p2 * p1;
      nu_hi_m2a += (mu + hi) * p2 * p1;
      nu_lo_m2ap += (mu + lo) * p2p * p1;
      nu_hi_m2ap += (mu + hi) * p2p * p1;
      nu_lo_iie += (mu + lo) * p12p;
      nu_hi_iie += (mu + hi) * p12p;
    }
  }
  v.m1 = v.m1a - v.m1ap;
  v.cate = v.psi_a - psi_ap;
  if (sa) {
    v.m1_ub = nu_hi_m1a - nu_lo_m1ap;
    v.m1_lb = nu_lo_m1a - nu_hi_m1ap;
    v.m2_ub = nu_hi_m2a - nu_lo_m2ap;
    v.m2_lb = nu_lo_m2a - nu_hi_m2ap;
    v.iie_ub = v.psi_a - nu_lo_iie;
    v.iie_lb = v.psi_a - nu_hi_iie;
  }
  return v;
}

double select(const PointValues& v, Functional f) {
  switch (f) {
    case Functional::PsiM1: return v.m1;
    case Functional::PsiM1Arm: return v.m1a;
    case Functional::PsiM1ArmPrime: return v.m1ap;
    case Functional::Cate: return v.cate;
    case Functional::Ratio: return v.m1 / v.cate;
    case Functional::BoundLower: return v.m1_lb;
    case Functional::BoundUpper: return v.m1_ub;
    case Functional::Gamma1a: return v.g1a;
    case Functional::Gamma1ap: return v.g1ap;
    case Functional::Gamma2a: return v.g2a;
    case Functional::Gamma2ap: return v.g2ap;
    case Functional::Gamma1aM2: return v.g1a_m2;
    case Functional::Gamma1apM2: return v.g1ap_m2;
    case Functional::Gamma2aM2: return v.g2a_m2;
    case Functional::Gamma2apM2: return v.g2ap_m2;
    case Functional::Gamma1IIE: return v.g1_iie;
    case Functional::Gamma2IIE: return v.g2_iie;
    case Functional::PsiM2: return v.m2;
    case Functional::PsiCov: return v.cov;
    case Functional::PsiIDE: return v.ide;
    case Functional::PsiIIE: return v.iie;
    case Functional::M2Lower: return v.m2_lb;
    case Functional::M2Upper: return v.m2_ub;
    case Functional::IIELower: return v.iie_lb;
    case Functional::IIEUpper: return v.iie_ub;
    case Functional::IDELower: return v.cate - v.iie_ub;
    case Functional::IDEUpper: return v.cate - v.iie_lb;
    case Functional::CovLower: return v.iie_lb - (v.m2_ub + v.m1_ub);
    case Functional::CovUpper: return v.iie_ub - (v.m2_lb + v.m1_lb);
  }
  return 0.0;
}

bool needs_assumption(Functional f) {
  switch (f) {
    case Functional::BoundLower:
    case Functional::BoundUpper:
    case Functional::M2Lower:
    case Functional::M2Upper:
    case Functional::IIELower:
    case Functional::IIEUpper:
    case Functional::IDELower:
    case Functional::IDEUpper:
    case Functional::CovLower:
    case Functional::CovUpper:
      return true;
    default:
      return false;
  }
}

double influence_value(Functional f, const CellObs& z, const NuisancePoint& nh, ArmPair arms,
                       const std::optional<SensitivityAssumption>& sa) {
  switch (f) {
    case Functional::PsiM1: return eif_psi_m1(z, nh, arms);
    case Functional::PsiM1Arm: return eif_psi_m1_arm(z, nh, arms, ArmTerm::A);
    case Functional::PsiM1ArmPrime: return eif_psi_m1_arm(z, nh, arms, ArmTerm::APrime);
    case Functional::Cate: return eif_cate(z, cate_point(nh), arms);
    case Functional::Ratio: return eif_ratio(z, nh, cate_point(nh), arms);
    case Functional::BoundLower: return eif_bounds(z, nh, arms, *sa).lb;
    case Functional::BoundUpper: return eif_bounds(z, nh, arms, *sa).ub;
    case Functional::Gamma1a: return eif_bound_components(z, nh, arms).phi_1a;
    case Functional::Gamma1ap: return eif_bound_components(z, nh, arms).phi_1ap;
    case Functional::Gamma2a: return eif_bound_components(z, nh, arms).phi_2a;
    case Functional::Gamma2ap: return eif_bound_components(z, nh, arms).phi_2ap;
    case Functional::Gamma1aM2: return eif_bound_extensions(z, nh, arms).g1a_m2;
    case Functional::Gamma1apM2: return eif_bound_extensions(z, nh, arms).g1ap_m2;
    case Functional::Gamma2aM2: return eif_bound_extensions(z, nh, arms).g2a_m2;
    case Functional::Gamma2apM2: return eif_bound_extensions(z, nh, arms).g2ap_m2;
    case Functional::Gamma1IIE: return eif_bound_extensions(z, nh, arms).g1_iie;
    case Functional::Gamma2IIE: return eif_bound_extensions(z, nh, arms).g2_iie;
    default:
      throw DomainError("no influence function for " + to_string(f));
  }
}

double relative_error(double value, double reference) {
  return std::abs(value - reference) / std::max(1.0, std::abs(reference));
}

}  // namespace

std::string to_string(Functional f) {
  switch (f) {
    case Functional::PsiM1: return "psi_M1";
    case Functional::PsiM1Arm: return "psi_M1_a";
    case Functional::PsiM1ArmPrime: return "psi_M1_aprime";
    case Functional::Cate: return "psi_total";
    case Functional::Ratio: return "psi_R";
    case Functional::BoundLower: return "psi_M1_lb";
    case Functional::BoundUpper: return "psi_M1_ub";
    case Functional::Gamma1a: return "gamma_1a";
    case Functional::Gamma1ap: return "gamma_1aprime";
    case Functional::Gamma2a: return "gamma_2a";
    case Functional::Gamma2ap: return "gamma_2aprime";
    case Functional::Gamma1aM2: return "gamma_1a_M2";
    case Functional::Gamma1apM2: return "gamma_1aprime_M2";
    case Functional::Gamma2aM2: return "gamma_2a_M2";
    case Functional::Gamma2apM2: return "gamma_2aprime_M2";
    case Functional::Gamma1IIE: return "gamma_1_IIE";
    case Functional::Gamma2IIE: return "gamma_2_IIE";
    case Functional::PsiM2: return "psi_M2";
    case Functional::PsiCov: return "psi_Cov";
    case Functional::PsiIDE: return "psi_IDE";
    case Functional::PsiIIE: return "psi_IIE";
    case Functional::M2Lower: return "psi_M2_lb";
    case Functional::M2Upper: return "psi_M2_ub";
    case Functional::IIELower: return "psi_IIE_lb";
    case Functional::IIEUpper: return "psi_IIE_ub";
    case Functional::IDELower: return "psi_IDE_lb";
    case Functional::IDEUpper: return "psi_IDE_ub";
    case Functional::CovLower: return "psi_Cov_lb";
    case Functional::CovUpper: return "psi_Cov_ub";
  }
  return "unknown";
}

bool has_influence_function(Functional f) {
  return static_cast<int>(f) <= static_cast<int>(Functional::Gamma2IIE);
}

std::vector<Functional> functionals_with_influence_function() {
  std::vector<Functional> out;
  for (int i = 0; i <= static_cast<int>(Functional::Gamma2IIE); ++i) {
    out.push_back(static_cast<Functional>(i));
  }
  return out;
}

double enumerate_functional(const DiscreteProblem& p, Functional f, ArmPair arms,
                            std::optional<SensitivityAssumption> sa) {
  p.validate();
  if (needs_assumption(f) && !sa) throw DomainError("bound functionals need an assumption");
  double total = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    total += p.px[k] * select(point_values(p.truth[k], arms, sa), f);
  }
  return total;
}

double exact_plugin_mean(const DiscreteProblem& p, const std::vector<NuisancePoint>& eta_hat,
                         Functional f, ArmPair arms, std::optional<SensitivityAssumption> sa) {
  if (eta_hat.size() != p.size()) throw DomainError("estimated nuisances misaligned with problem");
  if (needs_assumption(f) && !sa) throw DomainError("bound functionals need an assumption");
  double total = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    const NuisancePoint& np = p.truth[k];
    double inner = 0.0;
    for (int a = 0; a < 2; ++a) {
      for (int c = 0; c < 4; ++c) {
        const CellObs z{np.mu[a][c], a, cell_m1(c), cell_m2(c)};
        inner += np.pi(a) * np.joint[a][c] * influence_value(f, z, eta_hat[k], arms, sa);
      }
    }
    total += p.px[k] * inner;
  }
  return total;
}

double plugin_average(const DiscreteProblem& p, const std::vector<NuisancePoint>& eta_hat,
                      ArmPair arms) {
  double total = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) total += p.px[k] * psi_m1_plugin(eta_hat[k], arms);
  return total;
}

DiscreteProblem random_problem(std::mt19937_64& rng, int grid_size, double floor) {
  if (grid_size < 1 || floor <= 0.0 || floor >= 0.25) {
    throw DomainError("grid size must be positive and floor in (0, 0.25)");
  }
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::exponential_distribution<double> expo(1.0);
  DiscreteProblem p;
  double mass = 0.0;
  for (int k = 0; k < grid_size; ++k) {
    p.x.push_back(static_cast<double>(k));
    p.px.push_back(0.5 + unif(rng));
    mass += p.px.back();
  }
  for (double& v : p.px) v /= mass;
  for (int k = 0; k < grid_size; ++k) {
    std::array<Cells, 2> mu{}, joint{};
    for (int a = 0; a < 2; ++a) {
      double s = 0.0;
      Cells g{};
      for (int c = 0; c < 4; ++c) {
        g[c] = expo(rng);
        s += g[c];
        mu[a][c] = floor + (1.0 - 2.0 * floor) * unif(rng);
      }
      for (int c = 0; c < 4; ++c) joint[a][c] = floor + (1.0 - 4.0 * floor) * g[c] / s;
    }
    const double pi1 = floor + (1.0 - 2.0 * floor) * unif(rng);
    p.truth.push_back(NuisancePoint::from_joint(pi1, mu, joint));
  }
  p.validate();
  return p;
}

std::vector<NuisancePoint> perturb_along(const DiscreteProblem& p, const std::vector<Direction>& d,
                                         double eps) {
  std::vector<NuisancePoint> out;
  out.reserve(p.size());
  for (std::size_t k = 0; k < p.size(); ++k) {
    const NuisancePoint& np = p.truth[k];
    std::array<Cells, 2> mu{}, joint{};
    for (int a = 0; a < 2; ++a) {
      double s = 0.0;
      for (int c = 0; c < 4; ++c) {
        const double m = np.mu[a][c];
        mu[a][c] = (m > 0.0 && m < 1.0) ? expit(logit(m) + eps * d[k].mu[a][c])
                                        : m + eps * d[k].mu[a][c];
        joint[a][c] = np.joint[a][c] * std::exp(eps * d[k].joint[a][c]);
        s += joint[a][c];
      }
      for (int c = 0; c < 4; ++c) joint[a][c] /= s;
    }
    out.push_back(NuisancePoint::from_joint(expit(logit(np.pi1) + eps * d[k].pi), mu, joint));
  }
  return out;
}

std::vector<Direction> random_direction(const DiscreteProblem& p, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> unif(-1.0, 1.0);
  std::vector<Direction> d(p.size());
  for (auto& dk : d) {
    dk.pi = unif(rng);
    for (int a = 0; a < 2; ++a) {
      for (int c = 0; c < 4; ++c) {
        dk.mu[a][c] = unif(rng);
        dk.joint[a][c] = unif(rng);
      }
    }
  }
  return d;
}

std::vector<NuisancePoint> perturb_problem(const DiscreteProblem& p, std::mt19937_64& rng,
                                           double relative) {
  return perturb_along(p, random_direction(p, rng), relative);
}

std::vector<DiscreteProblem> battery_problems(const BatteryConfig& cfg) {
  if (cfg.grid_sizes.empty() || cfg.problems < 1) throw DomainError("empty battery");
  std::mt19937_64 rng(cfg.seed);
  std::vector<DiscreteProblem> out;
  for (int i = 0; i < cfg.problems; ++i) {
    const int size = cfg.grid_sizes[static_cast<std::size_t>(i) % cfg.grid_sizes.size()];
    out.push_back(random_problem(rng, size, cfg.floor));
  }
  return out;
}

std::string to_string(RemainderVariant v) {
  switch (v) {
    case RemainderVariant::NoteTermwise: return "note-termwise";
    case RemainderVariant::PaperDecomp: return "paper-decomp";
    case RemainderVariant::BenkeserRan: return "benkeser-ran";
  }
  return "unknown";
}

std::string to_string(GammaComponent g) {
  switch (g) {
    case GammaComponent::Phi1a: return "phi_1a";
    case GammaComponent::Phi1ap: return "phi_1aprime";
    case GammaComponent::Phi2a: return "phi_2a";
    case GammaComponent::Phi2ap: return "phi_2aprime";
  }
  return "unknown";
}

namespace {

// True and estimated quantities at one support point, arranged per cell.
struct CellErrors {
  double pi = 0, pih = 0, pip = 0, piph = 0;
  Cells mu{}, muh{}, p12{}, p12h{};
  Cells p1{}, p1h{}, p1p{}, p1ph{}, p2p{}, p2ph{}, p2{}, p2h{};
};

CellErrors cell_errors(const NuisancePoint& t, const NuisancePoint& e, ArmPair arms) {
  const int a = arms.a;
  const int ap = arms.a_prime;
  CellErrors ce;
  ce.pi = t.pi(a);
  ce.pih = e.pi(a);
  ce.pip = t.pi(ap);
  ce.piph = e.pi(ap);
  for (int c = 0; c < 4; ++c) {
    const int v1 = cell_m1(c);
    const int v2 = cell_m2(c);
    ce.mu[c] = t.mu[a][c];
    ce.muh[c] = e.mu[a][c];
    ce.p12[c] = t.joint[a][c];
    ce.p12h[c] = e.joint[a][c];
    ce.p1[c] = t.m1[a][v1];
    ce.p1h[c] = e.m1[a][v1];
    ce.p1p[c] = t.m1[ap][v1];
    ce.p1ph[c] = e.m1[ap][v1];
    ce.p2p[c] = t.m2[ap][v2];
    ce.p2ph[c] = e.m2[ap][v2];
    ce.p2[c] = t.m2[a][v2];
    ce.p2h[c] = e.m2[a][v2];
  }
  return ce;
}

using TermFn = std::function<double(const CellErrors&)>;

double cell_sum(const std::function<double(const CellErrors&, int)>& f, const CellErrors& e) {
  double s = 0.0;
  for (int c = 0; c < 4; ++c) s += f(e, c);
  return s;
}

std::vector<std::pair<std::string, TermFn>> note_terms() {
  std::vector<std::pair<std::string, TermFn>> t;
  // Arm a component.
  t.emplace_back("a.SO1", [](const CellErrors& e) {
    return e.pi / e.pih * cell_sum([](const CellErrors& e, int c) {
      return (e.mu[c] - e.muh[c]) * (e.p12[c] - e.p12h[c]) * e.p1h[c] * e.p2ph[c] / e.p12h[c];
    }, e);
  });
  t.emplace_back("a.SO2", [](const CellErrors& e) {
    return (e.pi - e.pih) / e.pih * cell_sum([](const CellErrors& e, int c) {
      return e.p1h[c] * e.p2ph[c] * (e.mu[c] - e.muh[c]);
    }, e);
  });
  t.emplace_back("a.SO3", [](const CellErrors& e) {
    return (e.pi - e.pih) / e.pih * cell_sum([](const CellErrors& e, int c) {
      return e.muh[c] * e.p2ph[c] * (e.p1[c] - e.p1h[c]);
    }, e);
  });
  t.emplace_back("a.SO4", [](const CellErrors& e) {
    return (e.pip - e.piph) / e.piph * cell_sum([](const CellErrors& e, int c) {
      return e.muh[c] * e.p1h[c] * (e.p2p[c] - e.p2ph[c]);
    }, e);
  });
  t.emplace_back("a.SO5", [](const CellErrors& e) {
    return -cell_sum([](const CellErrors& e, int c) {
      return (e.mu[c] - e.muh[c]) * e.p2ph[c] * (e.p1[c] - e.p1h[c]);
    }, e);
  });
  t.emplace_back("a.SO6", [](const CellErrors& e) {
    return -cell_sum([](const CellErrors& e, int c) {
      return e.muh[c] * (e.p1[c] - e.p1h[c]) * (e.p2p[c] - e.p2ph[c]);
    }, e);
  });
  t.emplace_back("a.SO7", [](const CellErrors& e) {
    return -cell_sum([](const CellErrors& e, int c) {
      return (e.mu[c] - e.muh[c]) * e.p1[c] * (e.p2p[c] - e.p2ph[c]);
    }, e);
  });
  // Arm a' component, entering with a negative sign.
  t.emplace_back("aprime.SO1", [](const CellErrors& e) {
    return -e.pi / e.pih * cell_sum([](const CellErrors& e, int c) {
      return (e.mu[c] - e.muh[c]) * (e.p12[c] - e.p12h[c]) * e.p1ph[c] * e.p2ph[c] / e.p12h[c];
    }, e);
  });
  t.emplace_back("aprime.SO2", [](const CellErrors& e) {
    return -(e.pi - e.pih) / e.pih * cell_sum([](const CellErrors& e, int c) {
      return e.p1ph[c] * e.p2ph[c] * (e.mu[c] - e.muh[c]);
    }, e);
  });
  t.emplace_back("aprime.SO3", [](const CellErrors& e) {
    return -(e.pip - e.piph) / e.piph * cell_sum([](const CellErrors& e, int c) {
      return e.muh[c] * e.p2ph[c] * (e.p1p[c] - e.p1ph[c]);
    }, e);
  });
  t.emplace_back("aprime.SO4", [](const CellErrors& e) {
    return -(e.pip - e.piph) / e.piph * cell_sum([](const CellErrors& e, int c) {
      return e.muh[c] * e.p1ph[c] * (e.p2p[c] - e.p2ph[c]);
    }, e);
  });
  t.emplace_back("aprime.SO5", [](const CellErrors& e) {
    return cell_sum([](const CellErrors& e, int c) {
      return (e.mu[c] - e.muh[c]) * e.p2ph[c] * (e.p1p[c] - e.p1ph[c]);
    }, e);
  });
  t.emplace_back("aprime.SO6", [](const CellErrors& e) {
    return cell_sum([](const CellErrors& e, int c) {
      return e.muh[c] * (e.p1p[c] - e.p1ph[c]) * (e.p2p[c] - e.p2ph[c]);
    }, e);
  });
  t.emplace_back("aprime.SO7", [](const CellErrors& e) {
    return cell_sum([](const CellErrors& e, int c) {
      return (e.mu[c] - e.muh[c]) * e.p1p[c] * (e.p2p[c] - e.p2ph[c]);
    }, e);
  });
  return t;
}

std::vector<std::pair<std::string, TermFn>> decomp_terms() {
  std::vector<std::pair<std::string, TermFn>> t;
  t.emplace_back("decomp.1", [](const CellErrors& e) {
    return e.pi / e.pih * cell_sum([](const CellErrors& e, int c) {
      return (e.p1h[c] - e.p1ph[c]) * e.p2ph[c] / e.p12h[c] * (e.p12[c] - e.p12h[c]) *
             (e.mu[c] - e.muh[c]);
    }, e);
  });
  t.emplace_back("decomp.2", [](const CellErrors& e) {
    return (e.pi - e.pih) / e.pih * cell_sum([](const CellErrors& e, int c) {
      return (e.mu[c] - e.muh[c]) * e.p2ph[c] * (e.p1h[c] - e.p1ph[c]);
    }, e);
  });
  t.emplace_back("decomp.3", [](const CellErrors& e) {
    return cell_sum([](const CellErrors& e, int c) {
      return e.muh[c] * e.p2ph[c] *
             ((e.pi - e.pih) / e.pih * (e.p1[c] - e.p1h[c]) -
              (e.pip - e.piph) / e.piph * (e.p1p[c] - e.p1ph[c]));
    }, e);
  });
  t.emplace_back("decomp.4", [](const CellErrors& e) {
    return (e.pip - e.piph) / e.piph * cell_sum([](const CellErrors& e, int c) {
      return e.muh[c] * (e.p1h[c] - e.p1ph[c]) * (e.p2p[c] - e.p2ph[c]);
    }, e);
  });
  t.emplace_back("decomp.5", [](const CellErrors& e) {
    return -cell_sum([](const CellErrors& e, int c) {
      return e.p2ph[c] * (e.mu[c] - e.muh[c]) * ((e.p1[c] - e.p1h[c]) - (e.p1p[c] - e.p1ph[c]));
    }, e);
  });
  t.emplace_back("decomp.6", [](const CellErrors& e) {
    return -cell_sum([](const CellErrors& e, int c) {
      return e.muh[c] * (e.p2p[c] - e.p2ph[c]) * ((e.p1[c] - e.p1h[c]) - (e.p1p[c] - e.p1ph[c]));
    }, e);
  });
  t.emplace_back("decomp.7", [](const CellErrors& e) {
    return -cell_sum([](const CellErrors& e, int c) {
      return (e.p1[c] - e.p1p[c]) * (e.mu[c] - e.muh[c]) * (e.p2p[c] - e.p2ph[c]);
    }, e);
  });
  return t;
}

std::vector<std::pair<std::string, TermFn>> benkeser_ran_terms() {
  std::vector<std::pair<std::string, TermFn>> t;
  t.emplace_back("br.1", [](const CellErrors& e) {
    return e.pi / e.pih * cell_sum([](const CellErrors& e, int c) {
      return (e.p1h[c] - e.p1ph[c]) * e.p2ph[c] / (e.p12[c] * e.p12h[c]) *
             (e.muh[c] - e.mu[c]) * (e.p12h[c] - e.p12[c]);
    }, e);
  });
  t.emplace_back("br.2", [](const CellErrors& e) {
    return -(e.pih - e.pi) / e.pih * cell_sum([](const CellErrors& e, int c) {
      return (e.muh[c] - e.mu[c]) * e.p1ph[c] * e.p2ph[c];
    }, e);
  });
  t.emplace_back("br.3", [](const CellErrors& e) {
    return -(e.piph - e.pip) / e.piph * cell_sum([](const CellErrors& e, int c) {
      return e.mu[c] * (e.p1ph[c] * e.p2ph[c] - e.p1p[c] * e.p2p[c]);
    }, e);
  });
  t.emplace_back("br.4", [](const CellErrors& e) {
    return (e.piph - e.pip) / e.piph * cell_sum([](const CellErrors& e, int c) {
      return e.muh[c] * e.p1h[c] * (e.p2ph[c] - e.p2p[c]);
    }, e);
  });
  t.emplace_back("br.5", [](const CellErrors& e) {
    return (e.pih - e.pi) / e.pih * cell_sum([](const CellErrors& e, int c) {
      return (e.muh[c] - e.mu[c]) * e.p1h[c] * e.p2ph[c];
    }, e);
  });
  t.emplace_back("br.6", [](const CellErrors& e) {
    return (e.pih - e.pi) / e.pih * cell_sum([](const CellErrors& e, int c) {
      return e.muh[c] * e.p2ph[c] * (e.p1h[c] - e.p1[c]);
    }, e);
  });
  t.emplace_back("br.7", [](const CellErrors& e) {
    return -cell_sum([](const CellErrors& e, int c) {
      return (e.muh[c] - e.mu[c]) * (e.p1h[c] * e.p2ph[c] - e.p1[c] * e.p2p[c]);
    }, e);
  });
  t.emplace_back("br.8", [](const CellErrors& e) {
    return -cell_sum([](const CellErrors& e, int c) {
      return e.muh[c] * (e.p2ph[c] - e.p2p[c]) * (e.p1h[c] - e.p1[c]);
    }, e);
  });
  return t;
}

double br_missing(const CellErrors& e) {
  return cell_sum([](const CellErrors& e, int c) {
    return (e.muh[c] - e.mu[c]) * (e.p1ph[c] * e.p2ph[c] - e.p1p[c] * e.p2p[c]) +
           e.muh[c] * (e.p1ph[c] - e.p1p[c]) * (e.p2ph[c] - e.p2p[c]);
  }, e);
}

std::vector<std::pair<std::string, TermFn>> gamma_terms(GammaComponent g) {
  std::vector<std::pair<std::string, TermFn>> t;
  const bool prime = g == GammaComponent::Phi1ap || g == GammaComponent::Phi2ap;
  const bool with_mu = g == GammaComponent::Phi1a || g == GammaComponent::Phi1ap;
  // The marginal of M1 that the component averages over, true and estimated.
  auto q = [prime](const CellErrors& e, int c) { return prime ? e.p1p[c] : e.p1[c]; };
  auto qh = [prime](const CellErrors& e, int c) { return prime ? e.p1ph[c] : e.p1h[c]; };
  // Weight on the M1 marginal error: pi_a for the arm-a marginal, pi_a' otherwise.
  auto r1 = [prime](const CellErrors& e) {
    return prime ? (e.pip - e.piph) / e.piph : (e.pi - e.pih) / e.pih;
  };
  auto r = [](const CellErrors& e) { return (e.pi - e.pih) / e.pih; };
  auto rp = [](const CellErrors& e) { return (e.pip - e.piph) / e.piph; };

  if (with_mu) {
    t.emplace_back("k.pi_mu", [=](const CellErrors& e) {
      return r(e) * cell_sum([=](const CellErrors& e, int c) {
        return (e.mu[c] - e.muh[c]) * e.p12[c] * qh(e, c) * e.p2ph[c];
      }, e);
    });
    t.emplace_back("k.pi_p12", [=](const CellErrors& e) {
      return r(e) * cell_sum([=](const CellErrors& e, int c) {
        return e.muh[c] * (e.p12[c] - e.p12h[c]) * qh(e, c) * e.p2ph[c];
      }, e);
    });
    t.emplace_back("k.pi_p1", [=](const CellErrors& e) {
      return r1(e) * cell_sum([=](const CellErrors& e, int c) {
        return e.muh[c] * e.p12h[c] * e.p2ph[c] * (q(e, c) - qh(e, c));
      }, e);
    });
    t.emplace_back("k.pi_p2", [=](const CellErrors& e) {
      return rp(e) * cell_sum([=](const CellErrors& e, int c) {
        return e.muh[c] * e.p12h[c] * qh(e, c) * (e.p2p[c] - e.p2ph[c]);
      }, e);
    });
    t.emplace_back("k.joint_p1", [=](const CellErrors& e) {
      return -cell_sum([=](const CellErrors& e, int c) {
        return ((e.mu[c] - e.muh[c]) * e.p12[c] + e.muh[c] * (e.p12[c] - e.p12h[c])) *
               e.p2ph[c] * (q(e, c) - qh(e, c));
      }, e);
    });
    t.emplace_back("k.joint_p2", [=](const CellErrors& e) {
      return -cell_sum([=](const CellErrors& e, int c) {
        return ((e.mu[c] - e.muh[c]) * e.p12[c] + e.muh[c] * (e.p12[c] - e.p12h[c])) * qh(e, c) *
               (e.p2p[c] - e.p2ph[c]);
      }, e);
    });
    t.emplace_back("k.p1_p2", [=](const CellErrors& e) {
      return -cell_sum([=](const CellErrors& e, int c) {
        return e.mu[c] * e.p12[c] * (q(e, c) - qh(e, c)) * (e.p2p[c] - e.p2ph[c]);
      }, e);
    });
  } else {
    t.emplace_back("k.pi_p12", [=](const CellErrors& e) {
      return r(e) * cell_sum([=](const CellErrors& e, int c) {
        return (e.p12[c] - e.p12h[c]) * qh(e, c) * e.p2ph[c];
      }, e);
    });
    t.emplace_back("k.pi_p1", [=](const CellErrors& e) {
      return r1(e) * cell_sum([=](const CellErrors& e, int c) {
        return (q(e, c) - qh(e, c)) * e.p12h[c] * e.p2ph[c];
      }, e);
    });
    t.emplace_back("k.pi_p2", [=](const CellErrors& e) {
      return rp(e) * cell_sum([=](const CellErrors& e, int c) {
        return (e.p2p[c] - e.p2ph[c]) * e.p12h[c] * qh(e, c);
      }, e);
    });
    t.emplace_back("k.p12_p1", [=](const CellErrors& e) {
      return -cell_sum([=](const CellErrors& e, int c) {
        return (e.p12[c] - e.p12h[c]) * e.p2p[c] * (q(e, c) - qh(e, c));
      }, e);
    });
    t.emplace_back("k.p12_p2", [=](const CellErrors& e) {
      return -cell_sum([=](const CellErrors& e, int c) {
        return (e.p12[c] - e.p12h[c]) * qh(e, c) * (e.p2p[c] - e.p2ph[c]);
      }, e);
    });
    t.emplace_back("k.p1_p2", [=](const CellErrors& e) {
      return -cell_sum([=](const CellErrors& e, int c) {
        return e.p12h[c] * (q(e, c) - qh(e, c)) * (e.p2p[c] - e.p2ph[c]);
      }, e);
    });
  }
  return t;
}

RemainderReport assemble(const std::string& variant, double lhs, const DiscreteProblem& p,
                         const std::vector<NuisancePoint>& eta_hat, ArmPair arms,
                         const std::vector<std::pair<std::string, TermFn>>& fns, double tol) {
  RemainderReport rep;
  rep.variant = variant;
  rep.lhs = lhs;
  for (const auto& [name, fn] : fns) {
    double v = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
      v += p.px[k] * fn(cell_errors(p.truth[k], eta_hat[k], arms));
    }
    rep.terms.push_back({name, v});
    rep.rhs += v;
  }
  rep.residual = rep.lhs - rep.rhs;
  double scale = std::max(1.0, std::abs(rep.lhs));
  for (const auto& t : rep.terms) scale = std::max(scale, std::abs(t.value));
  rep.relative_residual = std::abs(rep.residual) / scale;
  rep.passed = rep.relative_residual <= tol;
  return rep;
}

}  // namespace

RemainderReport remainder_decomposition(const DiscreteProblem& p,
                                        const std::vector<NuisancePoint>& eta_hat, ArmPair arms,
                                        RemainderVariant variant, double tol) {
  p.validate();
  if (eta_hat.size() != p.size()) throw DomainError("estimated nuisances misaligned with problem");
  const double lhs = exact_plugin_mean(p, eta_hat, Functional::PsiM1, arms) -
                     enumerate_functional(p, Functional::PsiM1, arms);
  switch (variant) {
    case RemainderVariant::NoteTermwise:
      return assemble(to_string(variant), lhs, p, eta_hat, arms, note_terms(), tol);
    case RemainderVariant::PaperDecomp:
      return assemble(to_string(variant), lhs, p, eta_hat, arms, decomp_terms(), tol);
    case RemainderVariant::BenkeserRan: {
      RemainderReport rep =
          assemble(to_string(variant), lhs, p, eta_hat, arms, benkeser_ran_terms(), tol);
      double missing = 0.0;
      for (std::size_t k = 0; k < p.size(); ++k) {
        missing += p.px[k] * br_missing(cell_errors(p.truth[k], eta_hat[k], arms));
      }
      rep.missing_terms = missing;
      rep.residual_minus_missing = rep.residual - missing;
      return rep;
    }
  }
  throw DomainError("unknown remainder variant");
}

RemainderReport gamma_remainder(const DiscreteProblem& p, const std::vector<NuisancePoint>& eta_hat,
                                ArmPair arms, GammaComponent which, double tol) {
  p.validate();
  if (eta_hat.size() != p.size()) throw DomainError("estimated nuisances misaligned with problem");
  Functional f = Functional::Gamma1a;
  switch (which) {
    case GammaComponent::Phi1a: f = Functional::Gamma1a; break;
    case GammaComponent::Phi1ap: f = Functional::Gamma1ap; break;
    case GammaComponent::Phi2a: f = Functional::Gamma2a; break;
    case GammaComponent::Phi2ap: f = Functional::Gamma2ap; break;
  }
  const double lhs = exact_plugin_mean(p, eta_hat, f, arms) - enumerate_functional(p, f, arms);
  return assemble("gamma." + to_string(which), lhs, p, eta_hat, arms, gamma_terms(which), tol);
}

ScalingReport second_order_scaling(const DiscreteProblem& p, const std::vector<Direction>& d,
                                   ArmPair arms, ScalingTarget target, std::vector<double> eps) {
  const double truth = enumerate_functional(p, Functional::PsiM1, arms);
  ScalingReport rep;
  for (double e : eps) {
    const auto eta_hat = perturb_along(p, d, e);
    const double est = target == ScalingTarget::OneStep
                           ? exact_plugin_mean(p, eta_hat, Functional::PsiM1, arms)
                           : plugin_average(p, eta_hat, arms);
    const double bias = std::abs(est - truth);
    if (bias < 1e-13) continue;
    rep.eps.push_back(e);
    rep.bias.push_back(bias);
  }
  if (rep.eps.size() < 2) throw DomainError("bias underflow: perturbation grid too small");
  const std::size_t n = rep.eps.size();
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double lx = std::log(rep.eps[i]);
    const double ly = std::log(rep.bias[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
  }
  const double dn = static_cast<double>(n);
  rep.slope = (dn * sxy - sx * sy) / (dn * sxx - sx * sx);
  return rep;
}

BatteryResult run_battery(const BatteryConfig& cfg, double tol, const std::string& corrupt_term) {
  BatteryResult res;
  const ArmPair arms = ArmPair::make(1, 0);
  const auto problems = battery_problems(cfg);
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  const std::vector<SensitivityAssumption> assumptions = {
      SensitivityAssumption::make(AssumptionKind::A1, 0.15),
      SensitivityAssumption::make(AssumptionKind::A2, 0.15),
      SensitivityAssumption::make(AssumptionKind::A3, 0.15)};

  auto corrupt = [&](RemainderReport& rep) {
    if (corrupt_term.empty()) return;
    for (auto& t : rep.terms) {
      if (t.name == corrupt_term || rep.variant + ":" + t.name == corrupt_term) {
        t.value += 1e-3;
        rep.rhs += 1e-3;
        rep.residual = rep.lhs - rep.rhs;
        double scale = std::max(1.0, std::abs(rep.lhs));
        for (const auto& u : rep.terms) scale = std::max(scale, std::abs(u.value));
        rep.relative_residual = std::abs(rep.residual) / scale;
        rep.passed = rep.relative_residual <= tol;
      }
    }
  };

  for (const auto& p : problems) {
    const auto eta_hat = perturb_problem(p, rng, cfg.perturbation);
    for (auto v : {RemainderVariant::NoteTermwise, RemainderVariant::PaperDecomp}) {
      auto rep = remainder_decomposition(p, eta_hat, arms, v, tol);
      corrupt(rep);
      res.remainders.push_back(rep);
    }
    for (auto g : {GammaComponent::Phi1a, GammaComponent::Phi1ap, GammaComponent::Phi2a,
                   GammaComponent::Phi2ap}) {
      auto rep = gamma_remainder(p, eta_hat, arms, g, tol);
      corrupt(rep);
      res.remainders.push_back(rep);
    }
    res.audit.push_back(
        remainder_decomposition(p, eta_hat, arms, RemainderVariant::BenkeserRan, tol));

    for (Functional f : functionals_with_influence_function()) {
      std::vector<std::optional<SensitivityAssumption>> sas{std::nullopt};
      if (needs_assumption(f)) sas.assign(assumptions.begin(), assumptions.end());
      for (const auto& sa : sas) {
        CenteringCheck cc;
        cc.name = to_string(f) + (sa ? "[" + to_string(sa->kind) + "]" : "");
        try {
          cc.enumerated = exact_plugin_mean(p, p.truth, f, arms, sa);
        } catch (const RatioDegenerateError&) {
          continue;
        }
        cc.expected = enumerate_functional(p, f, arms, sa);
        cc.relative_error = relative_error(cc.enumerated, cc.expected);
        cc.passed = cc.relative_error <= tol;
        res.centering.push_back(cc);
      }
    }
  }

  res.passed = true;
  for (const auto& r : res.remainders) {
    res.max_remainder_residual = std::max(res.max_remainder_residual, r.relative_residual);
    res.passed = res.passed && r.passed;
  }
  for (const auto& c : res.centering) {
    res.max_centering_error = std::max(res.max_centering_error, c.relative_error);
    res.passed = res.passed && c.passed;
  }
  return res;
}

}  // namespace iie
