#include "iie/simlab.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <exception>
#include <map>
#include <mutex>
#include <numeric>
#include <thread>

#include <boost/math/distributions/normal.hpp>

namespace iie {

std::mt19937_64 rng_stream(std::uint64_t seed, std::uint64_t index, const std::string& name) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : name) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  const auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffULL); };
  const auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
  std::seed_seq seq{lo(seed), hi(seed), lo(index), hi(index), lo(h), hi(h)};
  return std::mt19937_64(seq);
}

void parallel_for(std::size_t count, int threads, const std::function<void(std::size_t)>& body) {
  const std::size_t workers =
      std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), count));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr first;
  std::mutex mtx;
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= count) return;
        try {
          body(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(mtx);
          if (!first) first = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (first) std::rethrow_exception(first);
}

int default_threads() {
  if (const char* env = std::getenv("IIE_THREADS")) {
    const int t = std::atoi(env);
    if (t > 0) return t;
  }
  return 1;
}

std::vector<double> linspace(double lo, double hi, int points) {
  std::vector<double> g;
  if (points == 1) return {lo};
  for (int i = 0; i < points; ++i) g.push_back(lo + (hi - lo) * i / (points - 1));
  return g;
}

// ---------------------------------------------------------------- truth

XQuadrature x_law_quadrature(const DgpSpec& spec, int intervals) {
  if (intervals < 2 || intervals % 2) throw DomainError("Simpson rule needs an even interval count");
  const boost::math::normal_distribution<double> law(spec.x_mean, spec.x_sd);
  XQuadrature q;
  const double hstep = (spec.x_hi - spec.x_lo) / intervals;
  for (int i = 0; i <= intervals; ++i) {
    const double x = spec.x_lo + i * hstep;
    const double c = (i == 0 || i == intervals) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    q.x.push_back(x);
    q.w.push_back(c * hstep / 3.0 * boost::math::pdf(law, x));
  }
  q.w.front() += boost::math::cdf(law, spec.x_lo);
  q.w.back() += boost::math::cdf(boost::math::complement(law, spec.x_hi));
  const double tot = std::accumulate(q.w.begin(), q.w.end(), 0.0);
  for (double& w : q.w) w /= tot;
  return q;
}

Eigen::VectorXd projection_coefficients(const XQuadrature& q, int degree,
                                        const std::function<double(double)>& f) {
  const int p = degree + 1;
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
  for (std::size_t i = 0; i < q.x.size(); ++i) {
    const Eigen::RowVectorXd g = projection_basis(degree, q.x[i]);
    G += q.w[i] * g.transpose() * g;
    b += (q.w[i] * f(q.x[i])) * g.transpose();
  }
  return G.ldlt().solve(b);
}

double projection_value(const Eigen::VectorXd& beta, double x) {
  return projection_basis(static_cast<int>(beta.size()) - 1, x).dot(beta);
}

ProjectionTruth projection_truth(const DgpSpec& spec, int degree, double x, ArmPair arms) {
  const XQuadrature q = x_law_quadrature(spec);
  std::vector<TruthPoint> t;
  t.reserve(q.x.size());
  for (double xi : q.x) t.push_back(truth_at(xi, arms));
  std::size_t k = 0;
  const auto curve = [&](auto field) {
    k = 0;
    return [&, field](double) { return t[k++].*field; };
  };
  ProjectionTruth out;
  out.psi_m1 = projection_value(projection_coefficients(q, degree, curve(&TruthPoint::psi_m1)), x);
  out.psi = projection_value(projection_coefficients(q, degree, curve(&TruthPoint::psi)), x);
  out.psi_r = projection_value(projection_coefficients(q, degree, curve(&TruthPoint::psi_r)), x);
  out.ratio_of_proj = out.psi_m1 / out.psi;
  return out;
}

// ---------------------------------------------------------------- tables

void validate(const TableConfig& cfg) {
  if (cfg.reps < 1) throw ConfigError("reps must be at least 1");
  if (cfg.n < 50) throw ConfigError("n must be at least 50");
  if (cfg.points.empty()) throw ConfigError("at least one query point is required");
  if (cfg.failure_cap < 0.0 || cfg.failure_cap > 1.0) throw ConfigError("failure cap must be in [0, 1]");
  for (int d : cfg.projections) {
    if (d < 1 || d > 3) throw ConfigError("projection degree must be 1, 2 or 3");
  }
}

const McCell& McReport::find(const std::string& table, const std::string& strategy,
                             const std::string& projection, double point,
                             const std::string& estimand) const {
  for (const auto& c : cells) {
    if (c.table == table && c.strategy == strategy && c.projection == projection &&
        c.point == point && c.estimand == estimand) {
      return c;
    }
  }
  throw DomainError("no table cell " + table + "/" + strategy + "/" + projection);
}

namespace {

std::string projection_name(int degree) {
  switch (degree) {
    case 1: return "Linear";
    case 2: return "Quadratic";
    default: return "Cubic";
  }
}

struct CellDef {
  McCell cell;
  bool has_ci = true;
};

struct CellDraw {
  bool ok = false;
  double est = 0.0;
  double lo = 0.0;
  double hi = 0.0;
};

class CellIndex {
 public:
  std::size_t add(McCell c, bool has_ci) {
    defs_.push_back({std::move(c), has_ci});
    return defs_.size() - 1;
  }
  std::vector<CellDef>& defs() { return defs_; }

 private:
  std::vector<CellDef> defs_;
};

void put(std::vector<CellDraw>& d, std::size_t idx, const EstimateReport& r) {
  d[idx] = {true, r.estimate, r.ci_lo, r.ci_hi};
}

void put_point(std::vector<CellDraw>& d, std::size_t idx, double v) { d[idx] = {true, v, v, v}; }

}  // namespace

McReport run_table(const TableConfig& cfg) {
  validate(cfg);
  const ArmPair arms = cfg.arms;
  CellIndex index;
  std::map<std::string, std::size_t> id;
  const auto key = [](const std::string& t, const std::string& e, const std::string& s,
                      const std::string& p, double x) {
    return t + "|" + e + "|" + s + "|" + p + "|" + std::to_string(x);
  };
  const auto define = [&](const std::string& t, const std::string& e, const std::string& s,
                          const std::string& p, double x, double truth, bool ci) {
    McCell c;
    c.table = t;
    c.estimand = e;
    c.strategy = s;
    c.projection = p;
    c.point = x;
    c.n = cfg.n;
    c.truth = truth;
    id[key(t, e, s, p, x)] = index.add(c, ci);
  };
  for (double x : cfg.points) {
    const TruthPoint tp = truth_at(x, arms);
    if (cfg.projection) {
      for (int d : cfg.projections) {
        const ProjectionTruth pt = projection_truth(cfg.dgp, d, x, arms);
        define("projection", "psi_M1", "Plugin", projection_name(d), x, pt.psi_m1, true);
        define("projection", "psi_M1", "Efficient", projection_name(d), x, pt.psi_m1, true);
      }
    }
    if (cfg.dr_learner) {
      define("nonparametric", "psi_M1", "DR-Learner", "", x, tp.psi_m1, true);
      define("nonparametric", "psi_M1", "Plugin", "", x, tp.psi_m1, false);
    }
    if (cfg.proportion_mediated) {
      define("proportion-mediated", "psi", "DR-Learner", "", x, tp.psi, true);
      define("proportion-mediated", "psi_R", "Ratio", "", x, tp.psi_r, true);
      define("proportion-mediated", "psi_R", "Separate", "", x, tp.psi_r, true);
      for (int d : cfg.projections) {
        const ProjectionTruth pt = projection_truth(cfg.dgp, d, x, arms);
        define("proportion-mediated", "psi", "Efficient", projection_name(d), x, pt.psi, true);
        define("proportion-mediated", "psi_R", "Ratio", projection_name(d), x, pt.psi_r, true);
        define("proportion-mediated", "psi_R", "Separate", projection_name(d), x, pt.ratio_of_proj,
               true);
      }
    }
  }
  auto& defs = index.defs();
  const auto at = [&](const std::string& t, const std::string& e, const std::string& s,
                      const std::string& p, double x) { return id.at(key(t, e, s, p, x)); };

  std::vector<std::vector<CellDraw>> draws(cfg.reps, std::vector<CellDraw>(defs.size()));
  const std::vector<double> pts = cfg.points;

  parallel_for(static_cast<std::size_t>(cfg.reps), cfg.threads, [&](std::size_t r) {
    std::vector<CellDraw>& d = draws[r];
    std::mt19937_64 rng = rng_stream(cfg.seed, r, "table");
    const Sample train = dgp_sample(cfg.dgp, cfg.n, rng);
    const Sample test = dgp_sample(cfg.dgp, cfg.n, rng);
    std::shared_ptr<const NuisanceSet> eta;
    PseudoOutcomes m1;
    try {
      eta = fit_nuisances(train, cfg.nuisance);
      m1 = compute_pseudo_outcomes(test, *eta, Estimand::PsiM1, arms);
    } catch (const Error&) {
      return;
    }
    const std::vector<double> v = test.column(0);
    BandwidthPolicy bw = cfg.bandwidth;
    bw.seed = cfg.seed + r;
    const std::vector<double> plug = plugin_values(test, *eta, Estimand::PsiM1, arms);
    if (cfg.projection) {
      for (int deg : cfg.projections) {
        ProjectionSpec spec;
        spec.degree = deg;
        try {
          const ProjectionFit fe = fit_projection(m1.values, v, spec);
          const ProjectionFit fp = fit_projection(plug, v, spec);
          for (double x : pts) {
            put(d, at("projection", "psi_M1", "Efficient", projection_name(deg), x),
                project_predict(fe, x));
            put(d, at("projection", "psi_M1", "Plugin", projection_name(deg), x),
                project_predict(fp, x));
          }
        } catch (const Error&) {
        }
      }
    }
    std::vector<EstimateReport> dr_m1;
    if (cfg.dr_learner || cfg.proportion_mediated) {
      try {
        dr_m1 = smooth_pseudo_outcomes(m1, test, pts, bw);
      } catch (const Error&) {
      }
    }
    if (cfg.dr_learner) {
      for (std::size_t q = 0; q < pts.size(); ++q) {
        if (!dr_m1.empty()) put(d, at("nonparametric", "psi_M1", "DR-Learner", "", pts[q]), dr_m1[q]);
        put_point(d, at("nonparametric", "psi_M1", "Plugin", "", pts[q]),
                  plugin_point(*eta, pts[q], Estimand::PsiM1, arms));
      }
    }
    if (cfg.proportion_mediated) {
      PseudoOutcomes cate;
      try {
        cate = compute_pseudo_outcomes(test, *eta, Estimand::Cate, arms);
      } catch (const Error&) {
        return;
      }
      std::vector<EstimateReport> dr_cate;
      try {
        dr_cate = smooth_pseudo_outcomes(cate, test, pts, bw);
      } catch (const Error&) {
      }
      for (std::size_t q = 0; q < pts.size() && !dr_cate.empty(); ++q) {
        put(d, at("proportion-mediated", "psi", "DR-Learner", "", pts[q]), dr_cate[q]);
        if (dr_m1.empty()) continue;
        try {
          put(d, at("proportion-mediated", "psi_R", "Separate", "", pts[q]),
              ratio_separate(dr_m1[q], dr_cate[q]));
        } catch (const RatioDegenerateError&) {
        }
      }
      PseudoOutcomes lambda;
      bool have_lambda = false;
      try {
        lambda = compute_pseudo_outcomes(test, *eta, Estimand::Ratio, arms);
        have_lambda = true;
        const auto dr_r = smooth_pseudo_outcomes(lambda, test, pts, bw, 0, "ratio");
        for (std::size_t q = 0; q < pts.size(); ++q) {
          put(d, at("proportion-mediated", "psi_R", "Ratio", "", pts[q]), dr_r[q]);
        }
      } catch (const Error&) {
      }
      for (int deg : cfg.projections) {
        ProjectionSpec spec;
        spec.degree = deg;
        try {
          const ProjectionFit fm = fit_projection(m1.values, v, spec);
          const ProjectionFit fc = fit_projection(cate.values, v, spec);
          for (double x : pts) {
            const EstimateReport pm = project_predict(fm, x);
            const EstimateReport pc = project_predict(fc, x, Estimand::Cate);
            put(d, at("proportion-mediated", "psi", "Efficient", projection_name(deg), x), pc);
            if (std::abs(pc.estimate) < kRatioDelta) continue;
            const double ratio = pm.estimate / pc.estimate;
            const double c12 = projection_cross_covariance(fm, m1.values, fc, cate.values, v, spec, x);
            const double var = (pm.se * pm.se - 2.0 * ratio * c12 + ratio * ratio * pc.se * pc.se) /
                               (pc.estimate * pc.estimate);
            put(d, at("proportion-mediated", "psi_R", "Separate", projection_name(deg), x),
                make_report(Estimand::Ratio, "separate", ratio, std::sqrt(std::max(var, 0.0)),
                            Provenance::Fitted, x));
          }
          if (have_lambda) {
            const ProjectionFit fr = fit_projection(lambda.values, v, spec);
            for (double x : pts) {
              put(d, at("proportion-mediated", "psi_R", "Ratio", projection_name(deg), x),
                  project_predict(fr, x, Estimand::Ratio));
            }
          }
        } catch (const Error&) {
        }
      }
    }
  });

  McReport rep;
  rep.reps = cfg.reps;
  rep.seed = cfg.seed;
  for (std::size_t c = 0; c < defs.size(); ++c) {
    McCell cell = defs[c].cell;
    std::vector<double> est;
    int covered = 0;
    for (int r = 0; r < cfg.reps; ++r) {
      const CellDraw& dr = draws[r][c];
      if (!dr.ok || !std::isfinite(dr.est)) continue;
      est.push_back(dr.est);
      if (cell.truth >= dr.lo && cell.truth <= dr.hi) ++covered;
    }
    cell.reps = static_cast<int>(est.size());
    cell.failures = cfg.reps - cell.reps;
    if (!est.empty()) {
      const double m = std::accumulate(est.begin(), est.end(), 0.0) / est.size();
      double var = 0.0, mse = 0.0;
      for (double e : est) {
        var += (e - m) * (e - m);
        mse += (e - cell.truth) * (e - cell.truth);
      }
      cell.bias = m - cell.truth;
      cell.sd = std::sqrt(var / est.size());
      cell.rmse = std::sqrt(mse / est.size());
      cell.coverage = defs[c].has_ci ? 100.0 * covered / est.size()
                                     : std::numeric_limits<double>::quiet_NaN();
      std::vector<double> sorted(est);
      std::nth_element(sorted.begin(), sorted.begin() + sorted.size() / 2, sorted.end());
      cell.median_estimate = sorted[sorted.size() / 2];
    } else {
      cell.bias = cell.sd = cell.rmse = cell.coverage = cell.median_estimate =
          std::numeric_limits<double>::quiet_NaN();
    }
    if (cell.failures > cfg.failure_cap * cfg.reps) rep.failure_cap_exceeded = true;
    rep.cells.push_back(cell);
  }
  return rep;
}

// ---------------------------------------------------------------- convergence

std::vector<ConvergencePanel> default_panels() {
  std::vector<ConvergencePanel> p(4);
  p[0].name = "all-fast";
  p[1].name = "slow-pi";
  p[1].rates.alpha_pi = 0.1;
  p[2].name = "slow-mu";
  p[2].rates.alpha_mu = 0.1;
  p[3].name = "slow-mediator";
  p[3].rates.alpha_med = 0.1;
  return p;
}

void validate(const ConvergenceConfig& cfg) {
  if (cfg.reps < 1) throw ConfigError("reps must be at least 1");
  if (cfg.n_grid.empty()) throw ConfigError("n grid is empty");
  for (std::size_t n : cfg.n_grid) {
    if (n < 50) throw ConfigError("every n must be at least 50");
  }
  if (cfg.panels.empty()) throw ConfigError("no convergence panels");
  if (cfg.grid_points < 2 || !(cfg.grid_hi > cfg.grid_lo)) throw ConfigError("invalid evaluation grid");
}

std::vector<ConvergenceRow> run_convergence(const ConvergenceConfig& cfg) {
  validate(cfg);
  const ArmPair arms = cfg.arms;
  const auto truth = std::make_shared<const DgpNuisances>();
  const std::vector<double> grid = linspace(cfg.grid_lo, cfg.grid_hi, cfg.grid_points);
  std::vector<double> gw(grid.size()), gt(grid.size());
  const boost::math::normal_distribution<double> law(cfg.dgp.x_mean, cfg.dgp.x_sd);
  for (std::size_t g = 0; g < grid.size(); ++g) {
    gw[g] = boost::math::pdf(law, grid[g]);
    gt[g] = truth_at(grid[g], arms).psi_m1;
  }
  const double wsum = std::accumulate(gw.begin(), gw.end(), 0.0);
  for (double& w : gw) w /= wsum;
  const auto sq_error = [&](const std::vector<double>& est) {
    double e = 0.0;
    for (std::size_t g = 0; g < grid.size(); ++g) e += gw[g] * (est[g] - gt[g]) * (est[g] - gt[g]);
    return e;
  };
  const std::size_t panels = cfg.panels.size();
  std::vector<ConvergenceRow> rows;

  for (std::size_t n : cfg.n_grid) {
    const auto sample_for = [&](std::size_t r) {
      std::mt19937_64 rng = rng_stream(cfg.seed, n * 100003ULL + r, "convergence-sample");
      return dgp_sample(cfg.dgp, n, rng);
    };
    const auto synthetic_for = [&](std::size_t p, std::size_t r) {
      std::mt19937_64 rng =
          rng_stream(cfg.seed, n * 100003ULL + r, "convergence-" + cfg.panels[p].name);
      return std::make_shared<const SyntheticNuisanceSet>(truth, n, cfg.panels[p].rates, rng);
    };
    // One bandwidth per n: median oracle CV choice over the pilot replications,
    // shared by the oracle and every DR-Learner.
    BandwidthPolicy pilot = cfg.bandwidth;
    const std::size_t pilots = std::min<std::size_t>(kPilotReps, static_cast<std::size_t>(cfg.reps));
    std::vector<double> hs(pilots);
    for (std::size_t r = 0; r < pilots; ++r) {
      const Sample sp = sample_for(r);
      const PseudoOutcomes op = compute_pseudo_outcomes(sp, *truth, Estimand::PsiM1, arms);
      pilot.seed = cfg.seed + n + r;
      hs[r] = select_bandwidth(op.values, sp.column(0), pilot);
    }
    std::nth_element(hs.begin(), hs.begin() + hs.size() / 2, hs.end());
    const double h = cfg.bandwidth.fixed ? cfg.bandwidth.h : hs[hs.size() / 2];

    std::vector<double> e_oracle(cfg.reps);
    std::vector<std::vector<double>> e_dr(panels, std::vector<double>(cfg.reps));
    std::vector<std::vector<double>> e_plug(panels, std::vector<double>(cfg.reps));
    parallel_for(static_cast<std::size_t>(cfg.reps), cfg.threads, [&](std::size_t r) {
      const Sample s = sample_for(r);
      const std::vector<double> v = s.column(0);
      BandwidthPolicy fixed;
      fixed.fixed = true;
      fixed.h = h;
      const PseudoOutcomes o = compute_pseudo_outcomes(s, *truth, Estimand::PsiM1, arms);
      e_oracle[r] = sq_error(fit_smoother(o.values, v, grid, fixed, false).fitted);
      for (std::size_t p = 0; p < panels; ++p) {
        const auto eta = synthetic_for(p, r);
        const PseudoOutcomes d = compute_pseudo_outcomes(s, *eta, Estimand::PsiM1, arms);
        e_dr[p][r] = sq_error(fit_smoother(d.values, v, grid, fixed, false).fitted);
        std::vector<double> plug(grid.size());
        for (std::size_t g = 0; g < grid.size(); ++g) {
          plug[g] = plugin_point(*eta, grid[g], Estimand::PsiM1, arms);
        }
        e_plug[p][r] = sq_error(plug);
      }
    });
    const auto summarize = [&](const std::string& panel, const std::string& est,
                               const std::vector<double>& e, double h) {
      ConvergenceRow row;
      row.panel = panel;
      row.n = n;
      row.estimator = est;
      row.rmse = std::sqrt(std::accumulate(e.begin(), e.end(), 0.0) / e.size());
      row.scaled_rmse = std::sqrt(static_cast<double>(n)) * row.rmse;
      row.bandwidth = h;
      row.reps = cfg.reps;
      return row;
    };
    for (std::size_t p = 0; p < panels; ++p) {
      rows.push_back(summarize(cfg.panels[p].name, "plugin", e_plug[p],
                               std::numeric_limits<double>::quiet_NaN()));
      rows.push_back(summarize(cfg.panels[p].name, "dr-learner", e_dr[p], h));
      rows.push_back(summarize(cfg.panels[p].name, "oracle", e_oracle, h));
    }
  }
  return rows;
}

// ---------------------------------------------------------------- selection

std::vector<SelectionRow> selection_curves(double sigma, double tau, const std::vector<double>& grid,
                                           ArmPair arms) {
  if (!(sigma > 0.0)) throw DomainError("selection design needs sigma > 0");
  const SelectionNuisances observed(sigma);
  const auto sa = SensitivityAssumption::make(AssumptionKind::A2, tau);
  std::vector<SelectionRow> out;
  for (double x : grid) {
    const NuisancePoint np = observed.at(x);
    SelectionRow r;
    r.x = x;
    r.tau_star = selection_tau(x, sigma);
    r.psi_m1 = truth_at(x, arms).psi_m1;
    r.psi_m1_bar = psi_m1_plugin(np, arms);
    r.recovered = recover_known_selection(np, arms, selection_equality_at(x, sigma));
    const Interval b = bounds_psi_m1_at_x(np, arms, sa);
    r.lb = b.lb;
    r.ub = b.ub;
    out.push_back(r);
  }
  return out;
}

}  // namespace iie
