#include "iie/model.hpp"

#include <cmath>
#include <sstream>

namespace iie {

ArmPair ArmPair::make(int a, int a_prime) {
  if ((a != 0 && a != 1) || (a_prime != 0 && a_prime != 1) || a == a_prime) {
    throw DomainError("arm pair must be two distinct values in {0, 1}");
  }
  ArmPair p;
  p.a = a;
  p.a_prime = a_prime;
  return p;
}

std::string to_string(Provenance p) {
  switch (p) {
    case Provenance::TrueDgp: return "true-dgp";
    case Provenance::Fitted: return "fitted";
    case Provenance::Synthetic: return "synthetic";
    case Provenance::Marginalized: return "marginalized";
  }
  return "unknown";
}

std::string to_string(Estimand e) {
  switch (e) {
    case Estimand::PsiM1: return "psi_M1";
    case Estimand::PsiM1Arm: return "psi_M1_a";
    case Estimand::PsiM1ArmPrime: return "psi_M1_aprime";
    case Estimand::Cate: return "cate";
    case Estimand::Ratio: return "psi_R";
    case Estimand::BoundLower: return "psi_M1_lb";
    case Estimand::BoundUpper: return "psi_M1_ub";
    case Estimand::PsiM2: return "psi_M2";
    case Estimand::PsiCov: return "psi_Cov";
    case Estimand::PsiIDE: return "psi_IDE";
    case Estimand::PsiIIE: return "psi_IIE";
    case Estimand::M2Lower: return "psi_M2_lb";
    case Estimand::M2Upper: return "psi_M2_ub";
    case Estimand::IIELower: return "psi_IIE_lb";
    case Estimand::IIEUpper: return "psi_IIE_ub";
    case Estimand::IDELower: return "psi_IDE_lb";
    case Estimand::IDEUpper: return "psi_IDE_ub";
    case Estimand::CovLower: return "psi_Cov_lb";
    case Estimand::CovUpper: return "psi_Cov_ub";
  }
  return "unknown";
}

void validate_observation(const Observation& o, std::size_t dim) {
  auto bin = [](int v) { return v == 0 || v == 1; };
  if (!bin(o.a) || !bin(o.m1) || !bin(o.m2)) {
    throw DomainError("treatment and mediators must be binary");
  }
  if (!std::isfinite(o.y)) throw DomainError("outcome must be finite");
  if (o.x.size() != dim) throw DomainError("covariate dimension mismatch");
  for (double v : o.x) {
    if (!std::isfinite(v)) throw DomainError("covariates must be finite");
  }
}

double NuisancePoint::outcome_mean(int a) const {
  double s = 0.0;
  for (int c = 0; c < 4; ++c) s += mu[a][c] * joint[a][c];
  return s;
}

void NuisancePoint::fill_marginals() {
  for (int a = 0; a < 2; ++a) {
    const Cells& j = joint[a];
    m1[a][0] = j[0] + j[1];
    m1[a][1] = j[2] + j[3];
    m2[a][0] = j[0] + j[2];
    m2[a][1] = j[1] + j[3];
  }
}

NuisancePoint NuisancePoint::from_joint(double pi1, const std::array<Cells, 2>& mu,
                                        const std::array<Cells, 2>& joint) {
  NuisancePoint np;
  np.pi1 = pi1;
  np.mu = mu;
  np.joint = joint;
  np.fill_marginals();
  return np;
}

void NuisancePoint::validate(double floor, bool coherent) const {
  auto fail = [](const std::string& what) { throw PositivityError(what); };
  if (!(pi1 >= floor && 1.0 - pi1 >= floor)) {
    std::ostringstream os;
    os << "propensity " << pi1 << " outside [" << floor << ", " << 1.0 - floor << "]";
    fail(os.str());
  }
  for (int a = 0; a < 2; ++a) {
    double sj = 0.0;
    for (int c = 0; c < 4; ++c) {
      if (!(joint[a][c] >= floor)) {
        std::ostringstream os;
        os << "joint mediator probability " << joint[a][c] << " below floor " << floor;
        fail(os.str());
      }
      if (!std::isfinite(mu[a][c])) throw DomainError("outcome regression is not finite");
      sj += joint[a][c];
    }
    if (std::abs(sj - 1.0) > kNormalizationTol) {
      throw NormalizationError("joint mediator law does not sum to one");
    }
    for (int v = 0; v < 2; ++v) {
      if (!(m1[a][v] >= floor) || !(m2[a][v] >= floor)) {
        fail("marginal mediator probability below floor");
      }
    }
    if (std::abs(m1[a][0] + m1[a][1] - 1.0) > kNormalizationTol ||
        std::abs(m2[a][0] + m2[a][1] - 1.0) > kNormalizationTol) {
      throw NormalizationError("marginal mediator law does not sum to one");
    }
    if (coherent) {
      const Cells& j = joint[a];
      if (std::abs(m1[a][1] - (j[2] + j[3])) > kNormalizationTol ||
          std::abs(m2[a][1] - (j[1] + j[3])) > kNormalizationTol) {
        throw NormalizationError("marginals are not sums of the joint law");
      }
    }
  }
}

NuisancePoint NuisanceSet::at(std::span<const double> x) const {
  NuisancePoint np = evaluate(x);
  np.validate(floor_, provenance_ == Provenance::Marginalized);
  return np;
}

void NuisanceSet::set_training_rows(std::vector<long> rows) {
  training_rows_ = std::make_shared<const std::vector<long>>(std::move(rows));
}

MarginalizedOutcomes marginalize_outcomes(const NuisancePoint& np, ArmPair arms) {
  const int a = arms.a;
  const int ap = arms.a_prime;
  MarginalizedOutcomes mo;
  for (int v1 = 0; v1 < 2; ++v1) {
    for (int v2 = 0; v2 < 2; ++v2) {
      const double mu = np.mu_at(a, v1, v2);
      mo.mu_M1[v2] += mu * np.p_m1(a, v1);
      mo.mu_M1p[v2] += mu * np.p_m1(ap, v1);
      mo.mu_M2p[v1] += mu * np.p_m2(ap, v2);
      mo.mu_M1xM2p += mu * np.p_m1(a, v1) * np.p_m2(ap, v2);
      mo.mu_M1pxM2p += mu * np.p_m1(ap, v1) * np.p_m2(ap, v2);
    }
  }
  return mo;
}

MarginalizedOutcomes marginalize_outcomes(const NuisanceSet& eta, std::span<const double> x,
                                          ArmPair arms) {
  return marginalize_outcomes(eta.at(x), arms);
}

double psi_m1_plugin(const NuisancePoint& np, ArmPair arms) {
  const MarginalizedOutcomes mo = marginalize_outcomes(np, arms);
  return mo.mu_M1xM2p - mo.mu_M1pxM2p;
}

void Sample::reserve(std::size_t n) {
  y_.reserve(n);
  a_.reserve(n);
  m1_.reserve(n);
  m2_.reserve(n);
  x_.reserve(n * dim_);
}

void Sample::add(double y, int a, int m1, int m2, std::span<const double> x) {
  if (x.size() != dim_) throw DomainError("covariate dimension mismatch");
  if ((a != 0 && a != 1) || (m1 != 0 && m1 != 1) || (m2 != 0 && m2 != 1)) {
    throw DomainError("treatment and mediators must be binary");
  }
  if (!std::isfinite(y)) throw DomainError("outcome must be finite");
  y_.push_back(y);
  a_.push_back(a);
  m1_.push_back(m1);
  m2_.push_back(m2);
  for (double v : x) {
    if (!std::isfinite(v)) throw DomainError("covariates must be finite");
    x_.push_back(v);
  }
}

void Sample::add(const Observation& o) {
  validate_observation(o, dim_);
  add(o.y, o.a, o.m1, o.m2, o.x);
}

Observation Sample::observation(std::size_t i) const {
  Observation o;
  o.y = y_[i];
  o.a = a_[i];
  o.m1 = m1_[i];
  o.m2 = m2_[i];
  auto xi = x(i);
  o.x.assign(xi.begin(), xi.end());
  return o;
}

std::vector<double> Sample::column(std::size_t j) const {
  std::vector<double> out(size());
  for (std::size_t i = 0; i < size(); ++i) out[i] = x_[i * dim_ + j];
  return out;
}

Sample Sample::subset(const std::vector<long>& rows) const {
  Sample s(dim_);
  s.reserve(rows.size());
  for (long r : rows) {
    const auto i = static_cast<std::size_t>(r);
    s.add(y_[i], a_[i], m1_[i], m2_[i], x(i));
  }
  return s;
}

bool Sample::binary_outcome() const {
  for (double v : y_) {
    if (v != 0.0 && v != 1.0) return false;
  }
  return true;
}

bool Sample::outcome_in_unit_interval() const {
  for (double v : y_) {
    if (v < 0.0 || v > 1.0) return false;
  }
  return true;
}

void DiscreteProblem::validate(double floor) const {
  if (x.empty() || x.size() != px.size() || x.size() != truth.size()) {
    throw DomainError("discrete problem arrays must be non-empty and aligned");
  }
  double s = 0.0;
  for (double p : px) {
    if (!(p > 0.0)) throw DomainError("covariate masses must be positive");
    s += p;
  }
  if (std::abs(s - 1.0) > kNormalizationTol) {
    throw NormalizationError("covariate masses do not sum to one");
  }
  for (const auto& np : truth) np.validate(floor, true);
}

}  // namespace iie
