#include "iie/eif.hpp"

#include <cmath>
#include <sstream>

namespace iie {

CatePoint cate_point(const NuisancePoint& np) {
  return CatePoint{np.pi1, np.outcome_mean(0), np.outcome_mean(1)};
}

double eif_psi_m1(const CellObs& z, const NuisancePoint& np, ArmPair arms) {
  const int a = arms.a;
  const int ap = arms.a_prime;
  const MarginalizedOutcomes mo = marginalize_outcomes(np, arms);
  const double ia = z.a == a ? 1.0 / np.pi(a) : 0.0;
  const double iap = z.a == ap ? 1.0 / np.pi(ap) : 0.0;

  const double ratio = (np.p_m1(a, z.m1) - np.p_m1(ap, z.m1)) * np.p_m2(ap, z.m2) /
                       np.joint_at(a, z.m1, z.m2);
  const double resid = z.y - np.mu_at(a, z.m1, z.m2);

  return ia * ratio * resid + ia * (mo.mu_M2p[z.m1] - mo.mu_M1xM2p) -
         iap * (mo.mu_M2p[z.m1] - mo.mu_M1pxM2p) +
         iap * (mo.mu_M1[z.m2] - mo.mu_M1xM2p - mo.mu_M1p[z.m2] + mo.mu_M1pxM2p) +
         mo.mu_M1xM2p - mo.mu_M1pxM2p;
}

double eif_psi_m1_arm(const CellObs& z, const NuisancePoint& np, ArmPair arms, ArmTerm which) {
  const int a = arms.a;
  const int ap = arms.a_prime;
  const MarginalizedOutcomes mo = marginalize_outcomes(np, arms);
  const double ia = z.a == a ? 1.0 / np.pi(a) : 0.0;
  const double iap = z.a == ap ? 1.0 / np.pi(ap) : 0.0;
  const double resid = z.y - np.mu_at(a, z.m1, z.m2);
  const double p12 = np.joint_at(a, z.m1, z.m2);
  const double p2p = np.p_m2(ap, z.m2);

  if (which == ArmTerm::A) {
    return ia * np.p_m1(a, z.m1) * p2p / p12 * resid + ia * (mo.mu_M2p[z.m1] - mo.mu_M1xM2p) +
           iap * (mo.mu_M1[z.m2] - mo.mu_M1xM2p) + mo.mu_M1xM2p;
  }
  return ia * np.p_m1(ap, z.m1) * p2p / p12 * resid + iap * (mo.mu_M2p[z.m1] - mo.mu_M1pxM2p) +
         iap * (mo.mu_M1p[z.m2] - mo.mu_M1pxM2p) + mo.mu_M1pxM2p;
}

double eif_cate(const CellObs& z, const CatePoint& cp, ArmPair arms) {
  const int a = arms.a;
  const int ap = arms.a_prime;
  const double w = (z.a == a ? 1.0 / cp.pi(a) : 0.0) - (z.a == ap ? 1.0 / cp.pi(ap) : 0.0);
  return w * (z.y - cp.mu(z.a)) + cp.mu(a) - cp.mu(ap);
}

double eif_ratio(const CellObs& z, const NuisancePoint& np, const CatePoint& cp, ArmPair arms,
                 double delta) {
  const double psi = cp.mu(arms.a) - cp.mu(arms.a_prime);
  if (!(std::abs(psi) >= delta)) {
    std::ostringstream os;
    os << "total effect " << psi << " is within " << delta << " of zero";
    throw RatioDegenerateError(os.str());
  }
  const double psi_m1 = psi_m1_plugin(np, arms);
  const double psi_r = psi_m1 / psi;
  const double centered_m1 = eif_psi_m1(z, np, arms) - psi_m1;
  const double centered_total = eif_cate(z, cp, arms) - psi;
  return centered_m1 / psi - psi_r / psi * centered_total + psi_r;
}

BoundZetas bound_zetas(const NuisancePoint& np, ArmPair arms) {
  const int a = arms.a;
  const int ap = arms.a_prime;
  BoundZetas zt;
  for (int v1 = 0; v1 < 2; ++v1) {
    for (int v2 = 0; v2 < 2; ++v2) {
      const double mu = np.mu_at(a, v1, v2);
      const double p12 = np.joint_at(a, v1, v2);
      const double wa = np.p_m1(a, v1) * np.p_m2(ap, v2);
      const double wap = np.p_m1(ap, v1) * np.p_m2(ap, v2);
      zt.z1a += mu * p12 * wa;
      zt.z1ap += mu * p12 * wap;
      zt.z2a += p12 * wa;
      zt.z2ap += p12 * wap;
    }
  }
  return zt;
}

BoundComponents eif_bound_components(const CellObs& z, const NuisancePoint& np, ArmPair arms) {
  const int a = arms.a;
  const int ap = arms.a_prime;
  const BoundZetas zt = bound_zetas(np, arms);
  const double ia = z.a == a ? 1.0 / np.pi(a) : 0.0;
  const double iap = z.a == ap ? 1.0 / np.pi(ap) : 0.0;

  // Sums over the unobserved mediator with the observed one held fixed.
  double s1_mu = 0.0, s1 = 0.0;           // over m2: mu p12 p2', p12 p2'
  double s2_mu_a = 0.0, s2_a = 0.0;       // over m1: mu p12 p1, p12 p1
  double s2_mu_ap = 0.0, s2_ap = 0.0;     // over m1: mu p12 p1', p12 p1'
  for (int v = 0; v < 2; ++v) {
    const double p12_row = np.joint_at(a, z.m1, v);
    s1_mu += np.mu_at(a, z.m1, v) * p12_row * np.p_m2(ap, v);
    s1 += p12_row * np.p_m2(ap, v);
    const double p12_col = np.joint_at(a, v, z.m2);
    s2_mu_a += np.mu_at(a, v, z.m2) * p12_col * np.p_m1(a, v);
    s2_a += p12_col * np.p_m1(a, v);
    s2_mu_ap += np.mu_at(a, v, z.m2) * p12_col * np.p_m1(ap, v);
    s2_ap += p12_col * np.p_m1(ap, v);
  }
  const double p1 = np.p_m1(a, z.m1);
  const double p1p = np.p_m1(ap, z.m1);
  const double p2p = np.p_m2(ap, z.m2);

  BoundComponents bc;
  bc.phi_1a = ia * (z.y * p1 * p2p - zt.z1a) + ia * (s1_mu - zt.z1a) + iap * (s2_mu_a - zt.z1a) +
              zt.z1a;
  bc.phi_1ap = ia * (z.y * p1p * p2p - zt.z1ap) + iap * (s1_mu - zt.z1ap) +
               iap * (s2_mu_ap - zt.z1ap) + zt.z1ap;
  bc.phi_2a = ia * (p1 * p2p - zt.z2a) + ia * (s1 - zt.z2a) + iap * (s2_a - zt.z2a) + zt.z2a;
  bc.phi_2ap = ia * (p1p * p2p - zt.z2ap) + iap * (s1 - zt.z2ap) + iap * (s2_ap - zt.z2ap) +
               zt.z2ap;
  return bc;
}

Interval eif_bounds(const CellObs& z, const NuisancePoint& np, ArmPair arms,
                    const SensitivityConstants& k) {
  const double phi = eif_psi_m1(z, np, arms);
  const double phi_a = eif_psi_m1_arm(z, np, arms, ArmTerm::A);
  const double phi_ap = eif_psi_m1_arm(z, np, arms, ArmTerm::APrime);
  const BoundComponents bc = eif_bound_components(z, np, arms);
  Interval xi;
  xi.ub = phi + phi_a * k.f_u * k.c_u - phi_ap * k.f_l * k.c_l + k.t_u * k.f_u - k.t_l * k.f_l -
          k.f_u * (k.c_u * bc.phi_1a + k.t_u * bc.phi_2a) +
          k.f_l * (k.c_l * bc.phi_1ap + k.t_l * bc.phi_2ap);
  xi.lb = phi + phi_a * k.f_l * k.c_l - phi_ap * k.f_u * k.c_u + k.t_l * k.f_l - k.t_u * k.f_u -
          k.f_l * (k.c_l * bc.phi_1a + k.t_l * bc.phi_2a) +
          k.f_u * (k.c_u * bc.phi_1ap + k.t_u * bc.phi_2ap);
  return xi;
}

Interval eif_bounds(const CellObs& z, const NuisancePoint& np, ArmPair arms,
                    const SensitivityAssumption& sa) {
  check_outcome_scale(sa, np);
  return eif_bounds(z, np, arms, sa.constants());
}

ExtensionComponents eif_bound_extensions(const CellObs& z, const NuisancePoint& np, ArmPair arms) {
  const int a = arms.a;
  const int ap = arms.a_prime;
  const double ia = z.a == a ? 1.0 / np.pi(a) : 0.0;
  const double iap = z.a == ap ? 1.0 / np.pi(ap) : 0.0;

  double z1a = 0.0, z1ap = 0.0, z2a = 0.0, z2ap = 0.0, z1i = 0.0, z2i = 0.0;
  for (int v1 = 0; v1 < 2; ++v1) {
    for (int v2 = 0; v2 < 2; ++v2) {
      const double mu = np.mu_at(a, v1, v2);
      const double p12 = np.joint_at(a, v1, v2);
      const double p12p = np.joint_at(ap, v1, v2);
      const double p1 = np.p_m1(a, v1);
      z1a += mu * p12 * p1 * np.p_m2(a, v2);
      z1ap += mu * p12 * p1 * np.p_m2(ap, v2);
      z2a += p12 * p1 * np.p_m2(a, v2);
      z2ap += p12 * p1 * np.p_m2(ap, v2);
      z1i += mu * p12 * p12p;
      z2i += p12 * p12p;
    }
  }

  double row_mu_a = 0.0, row_a = 0.0, row_mu_ap = 0.0, row_ap = 0.0;
  double col_mu = 0.0, col = 0.0;
  for (int v = 0; v < 2; ++v) {
    const double p12_row = np.joint_at(a, z.m1, v);
    row_mu_a += np.mu_at(a, z.m1, v) * p12_row * np.p_m2(a, v);
    row_a += p12_row * np.p_m2(a, v);
    row_mu_ap += np.mu_at(a, z.m1, v) * p12_row * np.p_m2(ap, v);
    row_ap += p12_row * np.p_m2(ap, v);
    const double p12_col = np.joint_at(a, v, z.m2);
    col_mu += np.mu_at(a, v, z.m2) * p12_col * np.p_m1(a, v);
    col += p12_col * np.p_m1(a, v);
  }
  const double p1 = np.p_m1(a, z.m1);
  const double p2 = np.p_m2(a, z.m2);
  const double p2p = np.p_m2(ap, z.m2);
  const double p12_obs = np.joint_at(a, z.m1, z.m2);
  const double p12p_obs = np.joint_at(ap, z.m1, z.m2);
  const double mu_obs = np.mu_at(a, z.m1, z.m2);

  ExtensionComponents ec;
  ec.g1a_m2 = ia * (z.y * p1 * p2 - z1a) + ia * (row_mu_a - z1a) + ia * (col_mu - z1a) + z1a;
  ec.g1ap_m2 =
      ia * (z.y * p1 * p2p - z1ap) + ia * (row_mu_ap - z1ap) + iap * (col_mu - z1ap) + z1ap;
  ec.g2a_m2 = ia * (p1 * p2 - z2a) + ia * (row_a - z2a) + ia * (col - z2a) + z2a;
  ec.g2ap_m2 = ia * (p1 * p2p - z2ap) + ia * (row_ap - z2ap) + iap * (col - z2ap) + z2ap;
  ec.g1_iie = ia * (z.y * p12p_obs - z1i) + iap * (mu_obs * p12_obs - z1i) + z1i;
  ec.g2_iie = ia * (p12p_obs - z2i) + iap * (p12_obs - z2i) + z2i;
  return ec;
}

PseudoOutcomes compute_pseudo_outcomes(const Sample& s, const NuisanceSet& eta, Estimand estimand,
                                       ArmPair arms, std::optional<SensitivityAssumption> sa,
                                       double floor, double delta) {
  PseudoOutcomes out;
  out.estimand = estimand;
  out.provenance = eta.provenance();
  out.values.resize(s.size());
  out.rows.resize(s.size());
  std::vector<long> bad_rows;
  for (std::size_t i = 0; i < s.size(); ++i) {
    NuisancePoint np;
    try {
      np = eta.at(s.x(i));
      if (floor > eta.floor()) np.validate(floor);
    } catch (const PositivityError&) {
      bad_rows.push_back(static_cast<long>(i));
      continue;
    }
    const CellObs z = s.cell(i);
    double v = 0.0;
    switch (estimand) {
      case Estimand::PsiM1: v = eif_psi_m1(z, np, arms); break;
      case Estimand::PsiM1Arm: v = eif_psi_m1_arm(z, np, arms, ArmTerm::A); break;
      case Estimand::PsiM1ArmPrime: v = eif_psi_m1_arm(z, np, arms, ArmTerm::APrime); break;
      case Estimand::Cate: v = eif_cate(z, cate_point(np), arms); break;
      case Estimand::Ratio: v = eif_ratio(z, np, cate_point(np), arms, delta); break;
      case Estimand::BoundLower:
      case Estimand::BoundUpper: {
        if (!sa) throw DomainError("bound pseudo-outcomes need a sensitivity assumption");
        const Interval xi = eif_bounds(z, np, arms, *sa);
        v = estimand == Estimand::BoundLower ? xi.lb : xi.ub;
        break;
      }
      default:
        throw DomainError("no pseudo-outcome for estimand " + to_string(estimand));
    }
    out.values[i] = v;
    out.rows[i] = static_cast<long>(i);
  }
  if (!bad_rows.empty()) {
    std::ostringstream os;
    os << bad_rows.size() << " observation(s) violate the positivity floor " << floor;
    throw PositivityError(os.str(), bad_rows);
  }
  return out;
}

}  // namespace iie
