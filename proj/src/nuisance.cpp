#include "iie/nuisance.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <boost/math/interpolators/cardinal_cubic_b_spline.hpp>

namespace iie {

std::string to_string(BasisKind k) {
  switch (k) {
    case BasisKind::Polynomial: return "polynomial";
    case BasisKind::Spline: return "spline";
    case BasisKind::Saturated: return "saturated";
  }
  return "?";
}

BasisKind parse_basis(const std::string& s) {
  if (s == "polynomial") return BasisKind::Polynomial;
  if (s == "spline") return BasisKind::Spline;
  if (s == "saturated") return BasisKind::Saturated;
  throw ConfigError("unknown basis '" + s + "'");
}

double expit(double v) {
  if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
  const double e = std::exp(v);
  return e / (1.0 + e);
}

double logit(double p) { return std::log(p / (1.0 - p)); }

// ---------------------------------------------------------------- basis

Basis Basis::fit(const BasisSpec& spec, const Sample& s) {
  std::vector<std::vector<double>> cols;
  for (std::size_t j = 0; j < s.dim(); ++j) cols.push_back(s.column(j));
  return fit(spec, cols);
}

Basis Basis::fit(const BasisSpec& spec, const std::vector<std::vector<double>>& columns) {
  if (spec.degree < 1) throw ConfigError("basis degree must be at least 1");
  Basis b;
  b.dim_ = 1;
  for (const auto& col : columns) {
    if (col.empty()) throw DomainError("basis fit on an empty sample");
    Block blk;
    std::vector<double> levels(col);
    std::sort(levels.begin(), levels.end());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
    const bool saturate = spec.kind == BasisKind::Saturated ||
                          static_cast<int>(levels.size()) <= spec.saturate_at;
    if (saturate) {
      blk.kind = BasisKind::Saturated;
      blk.levels = levels;
      b.dim_ += levels.size() - 1;
    } else {
      const double n = static_cast<double>(col.size());
      const double mean = std::accumulate(col.begin(), col.end(), 0.0) / n;
      double ss = 0.0;
      for (double v : col) ss += (v - mean) * (v - mean);
      blk.center = mean;
      blk.scale = std::sqrt(ss / n);
      blk.lo = levels.front();
      blk.hi = levels.back();
      if (spec.kind == BasisKind::Polynomial) {
        blk.kind = BasisKind::Polynomial;
        blk.degree = spec.degree;
        b.dim_ += spec.degree;
      } else {
        blk.kind = BasisKind::Spline;
        std::vector<double> sorted(col);
        std::sort(sorted.begin(), sorted.end());
        for (int k = 1; k <= spec.knots; ++k) {
          const std::size_t idx = static_cast<std::size_t>(
              std::floor(static_cast<double>(k) / (spec.knots + 1) * (sorted.size() - 1)));
          const double z = (sorted[idx] - blk.center) / blk.scale;
          if (blk.knots.empty() || z > blk.knots.back() + 1e-9) blk.knots.push_back(z);
        }
        b.dim_ += 1 + blk.knots.size();
      }
    }
    b.blocks_.push_back(std::move(blk));
  }
  return b;
}

void Basis::features(std::span<const double> x, double* out) const {
  if (x.size() != blocks_.size()) throw DomainError("covariate dimension does not match basis");
  std::size_t k = 0;
  out[k++] = 1.0;
  for (std::size_t j = 0; j < blocks_.size(); ++j) {
    const Block& blk = blocks_[j];
    switch (blk.kind) {
      case BasisKind::Saturated: {
        // Unseen values map to the nearest level.
        std::size_t best = 0;
        for (std::size_t l = 1; l < blk.levels.size(); ++l) {
          if (std::abs(blk.levels[l] - x[j]) < std::abs(blk.levels[best] - x[j])) best = l;
        }
        for (std::size_t l = 1; l < blk.levels.size(); ++l) out[k++] = best == l ? 1.0 : 0.0;
        break;
      }
      case BasisKind::Polynomial: {
        const double z = (std::clamp(x[j], blk.lo, blk.hi) - blk.center) / blk.scale;
        double p = 1.0;
        for (int d = 1; d <= blk.degree; ++d) {
          p *= z;
          out[k++] = p;
        }
        break;
      }
      case BasisKind::Spline: {
        const double z = (x[j] - blk.center) / blk.scale;
        out[k++] = z;
        for (double kn : blk.knots) out[k++] = std::max(0.0, z - kn);
        break;
      }
    }
  }
}

Eigen::RowVectorXd Basis::row(std::span<const double> x) const {
  Eigen::RowVectorXd r(dim_);
  features(x, r.data());
  return r;
}

Eigen::MatrixXd Basis::design(const Sample& s) const {
  Eigen::MatrixXd X(s.size(), dim_);
  Eigen::RowVectorXd r(dim_);
  for (std::size_t i = 0; i < s.size(); ++i) {
    features(s.x(i), r.data());
    X.row(i) = r;
  }
  return X;
}

Eigen::MatrixXd Basis::design(const Sample& s, const std::vector<long>& rows) const {
  Eigen::MatrixXd X(rows.size(), dim_);
  Eigen::RowVectorXd r(dim_);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    features(s.x(static_cast<std::size_t>(rows[i])), r.data());
    X.row(i) = r;
  }
  return X;
}

// ---------------------------------------------------------------- solvers

namespace {

constexpr double kDivergence = 30.0;

double penalized_loglik(const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                        const Eigen::VectorXd& beta, double lambda) {
  const Eigen::VectorXd eta = X * beta;
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double e = eta[i];
    const double log1pe = e > 0 ? e + std::log1p(std::exp(-e)) : std::log1p(std::exp(e));
    ll += y[i] * e - log1pe;
  }
  const double n = static_cast<double>(X.rows());
  return ll - 0.5 * n * lambda * beta.tail(beta.size() - 1).squaredNorm();
}

GlmFit irls(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda) {
  const Eigen::Index p = X.cols();
  const double n = static_cast<double>(X.rows());
  GlmFit f;
  f.beta = Eigen::VectorXd::Zero(p);
  f.ridge = lambda > 0.0;
  Eigen::VectorXd pen = Eigen::VectorXd::Constant(p, n * lambda);
  pen[0] = 0.0;
  double ll = penalized_loglik(X, y, f.beta, lambda);
  for (int it = 1; it <= kIrlsMaxIter; ++it) {
    f.iterations = it;
    const Eigen::VectorXd eta = X * f.beta;
    Eigen::VectorXd mu(eta.size()), w(eta.size());
    for (Eigen::Index i = 0; i < eta.size(); ++i) {
      mu[i] = expit(eta[i]);
      w[i] = std::max(mu[i] * (1.0 - mu[i]), 1e-12);
    }
    const Eigen::VectorXd grad = X.transpose() * (y - mu) - pen.cwiseProduct(f.beta);
    Eigen::MatrixXd H = X.transpose() * w.asDiagonal() * X;
    H.diagonal() += pen;
    Eigen::VectorXd step = H.ldlt().solve(grad);
    if (!step.allFinite()) break;
    double t = 1.0;
    Eigen::VectorXd next = f.beta + step;
    double ll_next = penalized_loglik(X, y, next, lambda);
    for (int h = 0; h < 30 && ll_next < ll - 1e-12 * (1.0 + std::abs(ll)); ++h) {
      t *= 0.5;
      next = f.beta + t * step;
      ll_next = penalized_loglik(X, y, next, lambda);
    }
    f.beta = next;
    ll = ll_next;
    if ((t * step).lpNorm<Eigen::Infinity>() < kIrlsTol) {
      f.converged = true;
      break;
    }
    if (f.beta.lpNorm<Eigen::Infinity>() > kDivergence) break;
  }
  if (f.beta.lpNorm<Eigen::Infinity>() > kDivergence) f.converged = false;
  return f;
}

double largest_eigen(const Eigen::MatrixXd& X) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(X.transpose() * X, Eigen::EigenvaluesOnly);
  return es.eigenvalues().maxCoeff();
}

Eigen::MatrixXd softmax_rows(const Eigen::MatrixXd& X, const Eigen::VectorXd& beta, int C) {
  const Eigen::Index n = X.rows();
  const Eigen::Index p = X.cols();
  Eigen::MatrixXd P(n, C);
  for (Eigen::Index i = 0; i < n; ++i) {
    double mx = 0.0;
    P(i, 0) = 0.0;
    for (int c = 1; c < C; ++c) {
      P(i, c) = X.row(i).dot(beta.segment((c - 1) * p, p));
      mx = std::max(mx, P(i, c));
    }
    double tot = 0.0;
    for (int c = 0; c < C; ++c) {
      P(i, c) = std::exp(P(i, c) - mx);
      tot += P(i, c);
    }
    P.row(i) /= tot;
  }
  return P;
}

double multinomial_loglik(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                          const Eigen::VectorXd& beta, double lambda) {
  const int C = static_cast<int>(Y.cols());
  const Eigen::Index p = X.cols();
  const Eigen::MatrixXd P = softmax_rows(X, beta, C);
  double ll = 0.0;
  for (Eigen::Index i = 0; i < X.rows(); ++i) {
    for (int c = 0; c < C; ++c) {
      if (Y(i, c) > 0.0) ll += Y(i, c) * std::log(std::max(P(i, c), 1e-300));
    }
  }
  double pen = 0.0;
  for (int c = 1; c < C; ++c) pen += beta.segment((c - 1) * p + 1, p - 1).squaredNorm();
  return ll - 0.5 * static_cast<double>(X.rows()) * lambda * pen;
}

GlmFit multinomial_newton(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, double lambda) {
  const int C = static_cast<int>(Y.cols());
  const Eigen::Index p = X.cols();
  const Eigen::Index q = (C - 1) * p;
  const double n = static_cast<double>(X.rows());
  GlmFit f;
  f.beta = Eigen::VectorXd::Zero(q);
  f.ridge = lambda > 0.0;
  Eigen::VectorXd pen = Eigen::VectorXd::Constant(q, n * lambda);
  for (int c = 1; c < C; ++c) pen[(c - 1) * p] = 0.0;
  double ll = multinomial_loglik(X, Y, f.beta, lambda);
  for (int it = 1; it <= kIrlsMaxIter; ++it) {
    f.iterations = it;
    const Eigen::MatrixXd P = softmax_rows(X, f.beta, C);
    Eigen::VectorXd grad = -pen.cwiseProduct(f.beta);
    Eigen::MatrixXd H = Eigen::MatrixXd::Zero(q, q);
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      const Eigen::RowVectorXd xi = X.row(i);
      const Eigen::MatrixXd xx = xi.transpose() * xi;
      for (int c = 1; c < C; ++c) {
        grad.segment((c - 1) * p, p) += (Y(i, c) - P(i, c)) * xi.transpose();
        for (int d = 1; d < C; ++d) {
          const double wcd = P(i, c) * ((c == d ? 1.0 : 0.0) - P(i, d));
          H.block((c - 1) * p, (d - 1) * p, p, p) += wcd * xx;
        }
      }
    }
    H.diagonal() += pen;
    H.diagonal().array() += 1e-12;
    Eigen::VectorXd step = H.ldlt().solve(grad);
    if (!step.allFinite()) break;
    double t = 1.0;
    Eigen::VectorXd next = f.beta + step;
    double ll_next = multinomial_loglik(X, Y, next, lambda);
    for (int h = 0; h < 30 && ll_next < ll - 1e-12 * (1.0 + std::abs(ll)); ++h) {
      t *= 0.5;
      next = f.beta + t * step;
      ll_next = multinomial_loglik(X, Y, next, lambda);
    }
    f.beta = next;
    ll = ll_next;
    if ((t * step).lpNorm<Eigen::Infinity>() < kIrlsTol) {
      f.converged = true;
      break;
    }
    if (f.beta.lpNorm<Eigen::Infinity>() > kDivergence) break;
  }
  if (f.beta.lpNorm<Eigen::Infinity>() > kDivergence) f.converged = false;
  return f;
}

}  // namespace

GlmFit fit_logistic(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double ridge) {
  if (X.rows() == 0) throw DomainError("logistic fit on an empty sample");
  GlmFit f = irls(X, y, ridge);
  if (!f.converged && ridge == 0.0) f = irls(X, y, kRidgeFallback);
  return f;
}

GlmFit fit_logistic_gradient(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, int max_iter,
                             double tol) {
  const double n = static_cast<double>(X.rows());
  const double step = 4.0 * n / largest_eigen(X);
  GlmFit f;
  f.beta = Eigen::VectorXd::Zero(X.cols());
  for (int it = 1; it <= max_iter; ++it) {
    f.iterations = it;
    Eigen::VectorXd mu = X * f.beta;
    for (Eigen::Index i = 0; i < mu.size(); ++i) mu[i] = expit(mu[i]);
    const Eigen::VectorXd grad = X.transpose() * (y - mu) / n;
    f.beta += step * grad;
    if (grad.lpNorm<Eigen::Infinity>() < tol) {
      f.converged = true;
      break;
    }
  }
  return f;
}

GlmFit fit_multinomial(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, double ridge) {
  if (X.rows() == 0) throw DomainError("multinomial fit on an empty sample");
  GlmFit f = multinomial_newton(X, Y, ridge);
  if (!f.converged && ridge == 0.0) f = multinomial_newton(X, Y, kRidgeFallback);
  return f;
}

GlmFit fit_multinomial_gradient(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, int max_iter,
                                double tol) {
  const int C = static_cast<int>(Y.cols());
  const Eigen::Index p = X.cols();
  const double n = static_cast<double>(X.rows());
  const double step = 2.0 * n / largest_eigen(X);
  GlmFit f;
  f.beta = Eigen::VectorXd::Zero((C - 1) * p);
  for (int it = 1; it <= max_iter; ++it) {
    f.iterations = it;
    const Eigen::MatrixXd P = softmax_rows(X, f.beta, C);
    Eigen::VectorXd grad((C - 1) * p);
    for (int c = 1; c < C; ++c) {
      grad.segment((c - 1) * p, p) = X.transpose() * (Y.col(c) - P.col(c)) / n;
    }
    f.beta += step * grad;
    if (grad.lpNorm<Eigen::Infinity>() < tol) {
      f.converged = true;
      break;
    }
  }
  return f;
}

Eigen::VectorXd multinomial_probs(const Eigen::VectorXd& beta, const Eigen::RowVectorXd& row,
                                  int categories) {
  const Eigen::Index p = row.size();
  Eigen::VectorXd s(categories);
  s[0] = 0.0;
  for (int c = 1; c < categories; ++c) s[c] = row.dot(beta.segment((c - 1) * p, p));
  s.array() -= s.maxCoeff();
  s = s.array().exp();
  return s / s.sum();
}

GlmFit fit_linear(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
  if (X.rows() == 0) throw DomainError("linear fit on an empty sample");
  GlmFit f;
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(X);
  f.beta = qr.solve(y);
  f.iterations = 1;
  f.converged = qr.rank() == X.cols();
  return f;
}

// ---------------------------------------------------------------- learners

namespace {

double clip(double p, double floor) { return std::clamp(p, floor, 1.0 - floor); }

// Shrinks a probability vector towards uniform just enough to respect the floor.
Cells floor_cells(const Cells& p, double floor) {
  Cells out{};
  for (int c = 0; c < 4; ++c) out[c] = floor + (1.0 - 4.0 * floor) * p[c];
  return out;
}

}  // namespace

double PropensityModel::operator()(std::span<const double> x) const {
  return clip(expit(basis.row(x).dot(fit.beta)), floor);
}

PropensityModel fit_propensity(const Sample& s, const BasisSpec& spec, double floor) {
  std::size_t treated = 0;
  for (std::size_t i = 0; i < s.size(); ++i) treated += s.a(i);
  if (treated == 0 || treated == s.size()) throw DomainError("propensity fit needs both arms observed");
  PropensityModel m;
  m.basis = Basis::fit(spec, s);
  m.floor = floor;
  Eigen::VectorXd y(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) y[i] = s.a(i);
  m.fit = fit_logistic(m.basis.design(s), y, spec.ridge);
  return m;
}

Cells JointMediatorModel::operator()(int a, std::span<const double> x) const {
  const Eigen::VectorXd p = multinomial_probs(fit[a].beta, basis.row(x), 4);
  return floor_cells(Cells{p[0], p[1], p[2], p[3]}, floor);
}

JointMediatorModel fit_joint_mediator(const Sample& s, const BasisSpec& spec, double floor) {
  JointMediatorModel m;
  m.basis = Basis::fit(spec, s);
  m.floor = floor;
  for (int a = 0; a < 2; ++a) {
    std::vector<long> rows;
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (s.a(i) == a) rows.push_back(static_cast<long>(i));
    }
    if (rows.empty()) throw DomainError("mediator fit: arm " + std::to_string(a) + " is empty");
    const double na = static_cast<double>(rows.size());
    Eigen::MatrixXd Y = Eigen::MatrixXd::Zero(rows.size(), 4);
    std::array<int, 4> counts{};
    for (std::size_t r = 0; r < rows.size(); ++r) {
      const auto i = static_cast<std::size_t>(rows[r]);
      const int c = cell_index(s.m1(i), s.m2(i));
      Y(r, c) = 1.0;
      ++counts[c];
    }
    if (*std::min_element(counts.begin(), counts.end()) == 0) {
      // Add-half: every cell receives a total pseudo-count of one half.
      Y = (Y.array() + 0.5 / na) / (1.0 + 2.0 / na);
      m.smoothed[a] = true;
    }
    m.fit[a] = fit_multinomial(m.basis.design(s, rows), Y, spec.ridge);
  }
  return m;
}

namespace {

constexpr int kPooledExtra = 7;

void pooled_row(const Basis& basis, std::span<const double> x, int a, int cell, double* out) {
  basis.features(x, out);
  const double m1 = cell_m1(cell);
  const double m2 = cell_m2(cell);
  double* e = out + basis.dim();
  e[0] = a;
  e[1] = m1;
  e[2] = m2;
  e[3] = a * m1;
  e[4] = a * m2;
  e[5] = m1 * m2;
  e[6] = a * m1 * m2;
}

}  // namespace

double OutcomeModel::operator()(int a, int cell, std::span<const double> x) const {
  double v = 0.0;
  if (pooled[a][cell]) {
    Eigen::RowVectorXd r(basis.dim() + kPooledExtra);
    pooled_row(basis, x, a, cell, r.data());
    v = r.dot(pooled_fit.beta);
  } else {
    v = basis.row(x).dot(stratum[a][cell].beta);
  }
  return logistic ? clip(expit(v), floor) : v;
}

OutcomeModel fit_outcome(const Sample& s, const BasisSpec& spec, double floor) {
  OutcomeModel m;
  m.basis = Basis::fit(spec, s);
  m.floor = floor;
  m.logistic = s.outcome_in_unit_interval();
  const std::size_t dim = m.basis.dim();
  std::array<std::array<std::vector<long>, 4>, 2> rows;
  for (std::size_t i = 0; i < s.size(); ++i) {
    rows[s.a(i)][cell_index(s.m1(i), s.m2(i))].push_back(static_cast<long>(i));
  }
  for (int a = 0; a < 2; ++a) {
    for (int c = 0; c < 4; ++c) {
      const auto& r = rows[a][c];
      if (r.size() < 10 * dim) {
        m.pooled[a][c] = true;
        m.has_pooled = true;
        continue;
      }
      Eigen::VectorXd y(r.size());
      for (std::size_t k = 0; k < r.size(); ++k) y[k] = s.y(static_cast<std::size_t>(r[k]));
      const Eigen::MatrixXd X = m.basis.design(s, r);
      m.stratum[a][c] = m.logistic ? fit_logistic(X, y, spec.ridge) : fit_linear(X, y);
    }
  }
  if (m.has_pooled) {
    Eigen::MatrixXd X(s.size(), dim + kPooledExtra);
    Eigen::VectorXd y(s.size());
    Eigen::RowVectorXd r(dim + kPooledExtra);
    for (std::size_t i = 0; i < s.size(); ++i) {
      pooled_row(m.basis, s.x(i), s.a(i), cell_index(s.m1(i), s.m2(i)), r.data());
      X.row(i) = r;
      y[i] = s.y(i);
    }
    m.pooled_fit = m.logistic ? fit_logistic(X, y, spec.ridge) : fit_linear(X, y);
  }
  return m;
}

FittedNuisanceSet::FittedNuisanceSet(PropensityModel pi, JointMediatorModel med, OutcomeModel mu)
    : NuisanceSet(Provenance::Fitted, std::min({pi.floor, med.floor, mu.floor})),
      pi_(std::move(pi)),
      med_(std::move(med)),
      mu_(std::move(mu)) {
  std::ostringstream os;
  os << "propensity:" << (pi_.fit.ridge ? "ridge" : "irls");
  os << " mediator:";
  for (int a = 0; a < 2; ++a) {
    os << (a ? "," : "") << (med_.fit[a].ridge ? "ridge" : "newton")
       << (med_.smoothed[a] ? "+add-half" : "");
  }
  int pooled = 0;
  for (const auto& arm : mu_.pooled) pooled += static_cast<int>(std::count(arm.begin(), arm.end(), true));
  os << " outcome:" << (mu_.logistic ? "logistic" : "linear") << ",pooled_strata=" << pooled;
  set_note(os.str());
}

NuisancePoint FittedNuisanceSet::evaluate(std::span<const double> x) const {
  std::array<Cells, 2> mu{}, joint{};
  for (int a = 0; a < 2; ++a) {
    joint[a] = med_(a, x);
    for (int c = 0; c < 4; ++c) mu[a][c] = mu_(a, c, x);
  }
  return NuisancePoint::from_joint(pi_(x), mu, joint);
}

std::shared_ptr<const NuisanceSet> fit_nuisances(const Sample& s, const NuisanceConfig& cfg,
                                                 std::vector<long> training_rows) {
  auto set = std::make_shared<FittedNuisanceSet>(fit_propensity(s, cfg.propensity, cfg.floor),
                                                 fit_joint_mediator(s, cfg.mediator, cfg.floor),
                                                 fit_outcome(s, cfg.outcome, cfg.floor));
  set->set_training_rows(std::move(training_rows));
  return set;
}

NuisanceLearner default_learner(NuisanceConfig cfg) {
  return [cfg](const Sample& train, std::vector<long> rows) {
    return fit_nuisances(train, cfg, std::move(rows));
  };
}

// ---------------------------------------------------------------- synthetic

double SyntheticNuisanceSet::Shift::operator()(double x) const {
  if (b == 0.0 && amplitude == 0.0) return 0.0;
  return b + amplitude * wiggle(x);
}

SyntheticNuisanceSet::SyntheticNuisanceSet(std::shared_ptr<const NuisanceSet> truth, std::size_t n,
                                           const RateSpec& rates, std::mt19937_64& rng)
    : NuisanceSet(Provenance::Synthetic, truth->floor()), truth_(std::move(truth)) {
  if (n == 0) throw DomainError("synthetic nuisances need n >= 1");
  if (rates.alpha_pi <= 0.0 || rates.alpha_mu <= 0.0 || rates.alpha_med <= 0.0) {
    throw DomainError("synthetic rates must be positive");
  }
  if (rates.wiggle_knots < 4) throw DomainError("wiggle needs at least four knots");
  const double lo = rates.x_lo;
  const double hi = rates.x_hi;
  const double step = (hi - lo) / (rates.wiggle_knots - 1);
  const auto draw = [&](double alpha) {
    Shift s;
    const double m = rates.scale * std::pow(static_cast<double>(n), -alpha);
    std::normal_distribution<double> nd(m, m);
    std::uniform_real_distribution<double> ud(-1.0, 1.0);
    s.b = m > 0.0 ? nd(rng) : 0.0;
    s.amplitude = m;
    std::vector<double> knots(rates.wiggle_knots);
    for (double& k : knots) k = ud(rng);
    auto spline = std::make_shared<boost::math::interpolators::cardinal_cubic_b_spline<double>>(
        knots.begin(), knots.end(), lo, step);
    s.wiggle = [spline, lo, hi](double x) { return (*spline)(std::clamp(x, lo, hi)); };
    return s;
  };
  pi_ = draw(rates.alpha_pi);
  for (int a = 0; a < 2; ++a) {
    for (int c = 0; c < 4; ++c) mu_[a][c] = draw(rates.alpha_mu);
    for (int c = 0; c < 4; ++c) joint_[a][c] = draw(rates.alpha_med);
  }
  std::ostringstream os;
  os << "synthetic n=" << n << " alpha(pi,mu,med)=(" << rates.alpha_pi << "," << rates.alpha_mu
     << "," << rates.alpha_med << ") C=" << rates.scale;
  set_note(os.str());
}

NuisancePoint SyntheticNuisanceSet::evaluate(std::span<const double> x) const {
  NuisancePoint np = truth_->at(x);
  const double x0 = x[0];
  const double fl = floor();
  const auto shift_prob = [&](double p, const Shift& s) {
    const double d = s(x0);
    if (d == 0.0) return p;
    return clip(expit(logit(p) + d), fl);
  };
  const double pi1 = shift_prob(np.pi1, pi_);
  std::array<Cells, 2> mu = np.mu, joint = np.joint;
  for (int a = 0; a < 2; ++a) {
    bool moved = false;
    Cells lj{};
    for (int c = 0; c < 4; ++c) {
      const double m = np.mu[a][c];
      const double d = mu_[a][c](x0);
      if (d != 0.0) mu[a][c] = (m > 0.0 && m < 1.0) ? clip(expit(logit(m) + d), fl) : m + d;
      const double dj = joint_[a][c](x0);
      moved = moved || dj != 0.0;
      lj[c] = std::log(np.joint[a][c]) + dj;
    }
    if (moved) {
      const double mx = *std::max_element(lj.begin(), lj.end());
      double tot = 0.0;
      for (double& v : lj) {
        v = std::exp(v - mx);
        tot += v;
      }
      for (double& v : lj) v /= tot;
      joint[a] = floor_cells(lj, fl);
    }
  }
  return NuisancePoint::from_joint(pi1, mu, joint);
}

NuisanceError nuisance_l2_error(const NuisanceSet& est, const NuisanceSet& truth,
                                const std::vector<double>& points) {
  NuisanceError e;
  if (points.empty()) return e;
  for (double x : points) {
    const NuisancePoint a = est.at(x);
    const NuisancePoint b = truth.at(x);
    e.pi += (a.pi1 - b.pi1) * (a.pi1 - b.pi1);
    for (int arm = 0; arm < 2; ++arm) {
      for (int c = 0; c < 4; ++c) {
        e.mu += (a.mu[arm][c] - b.mu[arm][c]) * (a.mu[arm][c] - b.mu[arm][c]) / 8.0;
        e.joint += (a.joint[arm][c] - b.joint[arm][c]) * (a.joint[arm][c] - b.joint[arm][c]) / 8.0;
      }
    }
  }
  const double n = static_cast<double>(points.size());
  e.pi = std::sqrt(e.pi / n);
  e.mu = std::sqrt(e.mu / n);
  e.joint = std::sqrt(e.joint / n);
  return e;
}

// ---------------------------------------------------------------- folds

std::string to_string(FoldMode m) {
  return m == FoldMode::SwapAverage ? "swap-average" : "pooled";
}

FoldMode parse_fold_mode(const std::string& s) {
  if (s == "swap-average") return FoldMode::SwapAverage;
  if (s == "pooled") return FoldMode::Pooled;
  throw ConfigError("unknown fold mode '" + s + "'");
}

std::vector<long> FoldPlan::rows_in(int fold) const {
  std::vector<long> r;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] == fold) r.push_back(static_cast<long>(i));
  }
  return r;
}

std::vector<long> FoldPlan::rows_out(int fold) const {
  std::vector<long> r;
  for (std::size_t i = 0; i < assignment.size(); ++i) {
    if (assignment[i] != fold) r.push_back(static_cast<long>(i));
  }
  return r;
}

FoldPlan make_folds(std::size_t n, int k, std::uint64_t seed, FoldMode mode) {
  if (k < 2) throw DomainError("fold count must be at least 2");
  if (n < 2 * static_cast<std::size_t>(k)) throw DomainError("sample too small for the fold count");
  FoldPlan plan;
  plan.k = k;
  plan.mode = mode;
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = n - 1; i > 0; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % (i + 1));
    std::swap(perm[i], perm[j]);
  }
  plan.assignment.assign(n, 0);
  for (std::size_t pos = 0; pos < n; ++pos) plan.assignment[perm[pos]] = static_cast<int>(pos % k);
  return plan;
}

}  // namespace iie
