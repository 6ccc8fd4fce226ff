#include "cli/commands.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>

#include "CLI11.hpp"
#include "json.hpp"

#include "cli/io.hpp"
#include "iie/dgp.hpp"
#include "iie/errors.hpp"
#include "iie/estimators.hpp"
#include "iie/oracle.hpp"
#include "iie/simlab.hpp"

namespace iie::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

using Clock = std::chrono::steady_clock;

class Manifest {
 public:
  Manifest(std::string command, const RunConfig& cfg) : cfg_(cfg), start_(Clock::now()) {
    j_["version"] = kVersion;
    j_["command"] = std::move(command);
    j_["seed"] = cfg.seed;
    j_["config_sha256"] = sha256_hex(to_ini(cfg));
    j_["threads"] = cfg.thread_count();
    j_["outputs"] = json::array();
    fs::create_directories(cfg.output_dir);
  }

  std::string path(const std::string& name) const { return (fs::path(cfg_.output_dir) / name).string(); }

  void output(const CsvTable& t, const std::string& name) {
    t.write_file(path(name));
    j_["outputs"].push_back(name);
  }

  json& operator[](const std::string& key) { return j_[key]; }

  void write(std::ostream& out) {
    j_["wall_time_seconds"] = std::chrono::duration<double>(Clock::now() - start_).count();
    std::ofstream f(path("manifest.json"));
    f << j_.dump(2) << '\n';
    out << "wrote " << j_["outputs"].size() << " table(s) and manifest.json to " << cfg_.output_dir
        << '\n';
  }

 private:
  const RunConfig& cfg_;
  Clock::time_point start_;
  json j_;
};

void add_report(CsvTable& t, const EstimateReport& r, std::size_t n) {
  t.row()
      .add(to_string(r.estimand))
      .add(r.method)
      .add(r.query)
      .add(r.estimate)
      .add(r.se)
      .add(r.ci_lo)
      .add(r.ci_hi)
      .add(r.diag.max_inverse_weight)
      .add(r.diag.sum_abs_weights)
      .add(r.diag.bandwidth)
      .add(to_string(r.provenance))
      .add(n);
}

std::string projection_name(int degree) {
  if (degree == 1) return "projection-linear";
  if (degree == 2) return "projection-quadratic";
  return "projection-degree" + std::to_string(degree);
}

struct CrossFit {
  Sample sample;
  FoldPlan plan;
  std::vector<std::shared_ptr<const NuisanceSet>> fits;
};

Sample load_sample(const RunConfig& cfg) {
  if (cfg.data_path.empty()) throw ConfigError("no dataset: set data.path or pass a file");
  return read_dataset_file(cfg.data_path);
}

CrossFit cross_fit(const RunConfig& cfg, Sample s) {
  CrossFit c{std::move(s), {}, {}};
  if (cfg.v_index >= c.sample.dim()) {
    throw ConfigError("estimator.v_index " + std::to_string(cfg.v_index) + " exceeds covariate count");
  }
  c.plan = make_folds(c.sample.size(), cfg.folds, cfg.seed, cfg.fold_mode);
  c.fits = cross_fit_nuisances(c.sample, c.plan, default_learner(cfg.nuisance()));
  return c;
}

double cross_fit_max_weight(const CrossFit& c, ArmPair arms) {
  double w = 0.0;
  for (int k = 0; k < c.plan.k; ++k) {
    w = std::max(w, max_inverse_weight(c.sample.subset(c.plan.rows_in(k)), *c.fits[k], arms));
  }
  return w;
}

void nuisance_notes(Manifest& m, const CrossFit& c) {
  json notes = json::array();
  for (const auto& f : c.fits) notes.push_back(f->note());
  m["nuisance_fits"] = notes;
}

}  // namespace

int exit_code_for(const std::string& id) {
  if (id == "E_CONFIG" || id == "E_SCHEMA" || id == "E_SCALE" || id == "E_DOMAIN") return kExitConfig;
  if (id == "E_REPLICATION") return kExitReplication;
  if (id == "E_POSITIVITY") return kExitPositivity;
  if (id == "E_VERIFY") return kExitVerify;
  return kExitFailure;
}

// ---------------------------------------------------------------- simulate

int cmd_simulate(const RunConfig& cfg, std::ostream& out) {
  const TableConfig tc = cfg.table();
  validate(tc);
  Manifest m("simulate", cfg);
  const McReport rep = run_table(tc);
  CsvTable t({"Point", "Strategy", "Projection", "Truth", "Bias", "Std", "RMSE", "Coverage", "Table",
              "Estimand", "N", "Reps", "Failures", "Median"});
  for (const McCell& c : rep.cells) {
    t.row()
        .add(c.point)
        .add(c.strategy)
        .add(c.projection)
        .add(c.truth)
        .add(c.bias)
        .add(c.sd)
        .add(c.rmse)
        .add(c.coverage)
        .add(c.table)
        .add(c.estimand)
        .add(c.n)
        .add(c.reps)
        .add(c.failures)
        .add(c.median_estimate);
  }
  m.output(t, "table.csv");
  m["failure_cap_exceeded"] = rep.failure_cap_exceeded;
  m.write(out);
  if (rep.failure_cap_exceeded) {
    throw ReplicationError("replication failures exceeded the cap of " + format_double(tc.failure_cap) +
                           " in at least one cell; see the Failures column of table.csv");
  }
  return kExitOk;
}

// ---------------------------------------------------------------- estimate

int cmd_estimate(const RunConfig& cfg, std::ostream& out) {
  Manifest m("estimate", cfg);
  const CrossFit c = cross_fit(cfg, load_sample(cfg));
  const ArmPair arms = cfg.arms();
  const std::vector<double> v = c.sample.column(cfg.v_index);
  CsvTable t({"estimand", "method", "query", "estimate", "se", "ci_lo", "ci_hi", "max_inverse_weight",
              "sum_abs_weights", "bandwidth", "provenance", "n"});
  for (Estimand e : {Estimand::PsiM1, Estimand::Cate}) {
    const CrossFitResult cf =
        cross_fit_pseudo_outcomes(c.sample, c.plan, c.fits, e, arms, std::nullopt, cfg.positivity);
    EstimateReport avg = one_step(cf.pseudo);
    if (e == Estimand::PsiM1) avg.diag.max_inverse_weight = cross_fit_max_weight(c, arms);
    add_report(t, avg, c.sample.size());
    for (int d : cfg.projections) {
      ProjectionSpec spec;
      spec.degree = d;
      spec.v_index = cfg.v_index;
      const ProjectionFit pf = fit_projection(cf.pseudo.values, v, spec);
      for (double q : cfg.query) {
        add_report(t, project_predict(pf, q, e, projection_name(d), cf.pseudo.provenance),
                   c.sample.size());
      }
    }
    for (const auto& r :
         smooth_cross_fit(cf, c.sample, c.plan, cfg.query, cfg.bandwidth_policy(), cfg.v_index)) {
      add_report(t, r, c.sample.size());
    }
  }
  m.output(t, "estimates.csv");
  nuisance_notes(m, c);
  m["n"] = c.sample.size();
  m.write(out);
  return kExitOk;
}

// ---------------------------------------------------------------- bounds

int cmd_bounds(const RunConfig& cfg, std::ostream& out) {
  Manifest m("bounds", cfg);
  if (cfg.tau.empty()) throw ConfigError("sensitivity.tau is empty");
  Sample s = load_sample(cfg);
  const SensitivityAssumption probe = SensitivityAssumption::make(cfg.assumption, 0.0);
  if (probe.requires_unit_outcome() && !s.outcome_in_unit_interval()) {
    throw ScaleError("assumption " + to_string(cfg.assumption) + " requires outcomes in [0, 1]");
  }
  const CrossFit c = cross_fit(cfg, std::move(s));
  const ArmPair arms = cfg.arms();
  CsvTable avg({"assumption", "tau", "lb", "ub", "se_lb", "se_ub", "ci_lo", "ci_hi", "covariance"});
  CsvTable curve({"assumption", "tau", "query", "lb", "ub", "se_lb", "se_ub", "ci_lo", "ci_hi"});
  std::vector<BoundEstimate> grid;
  const std::string name = to_string(cfg.assumption);
  for (double tau : cfg.tau) {
    const auto sa = SensitivityAssumption::make(cfg.assumption, tau);
    const CrossFitResult lo = cross_fit_pseudo_outcomes(c.sample, c.plan, c.fits, Estimand::BoundLower,
                                                        arms, sa, cfg.positivity);
    const CrossFitResult hi = cross_fit_pseudo_outcomes(c.sample, c.plan, c.fits, Estimand::BoundUpper,
                                                        arms, sa, cfg.positivity);
    const EstimateReport l = one_step(lo.pseudo);
    const EstimateReport u = one_step(hi.pseudo);
    const double n = static_cast<double>(c.sample.size());
    double cov = 0.0;
    for (std::size_t i = 0; i < c.sample.size(); ++i) {
      cov += (lo.pseudo.values[i] - l.estimate) * (hi.pseudo.values[i] - u.estimate);
    }
    cov /= (n - 1.0) * n;
    grid.push_back({tau, l.estimate, u.estimate, l.se, u.se});
    avg.row()
        .add(name)
        .add(tau)
        .add(l.estimate)
        .add(u.estimate)
        .add(l.se)
        .add(u.se)
        .add(l.estimate - kZ975 * l.se)
        .add(u.estimate + kZ975 * u.se)
        .add(cov);
    const auto pol = cfg.bandwidth_policy();
    const auto cl = smooth_cross_fit(lo, c.sample, c.plan, cfg.query, pol, cfg.v_index);
    const auto cu = smooth_cross_fit(hi, c.sample, c.plan, cfg.query, pol, cfg.v_index);
    for (std::size_t q = 0; q < cfg.query.size(); ++q) {
      curve.row()
          .add(name)
          .add(tau)
          .add(cfg.query[q])
          .add(cl[q].estimate)
          .add(cu[q].estimate)
          .add(cl[q].se)
          .add(cu[q].se)
          .add(cl[q].estimate - kZ975 * cl[q].se)
          .add(cu[q].estimate + kZ975 * cu[q].se);
    }
  }
  m.output(avg, "bounds_average.csv");
  m.output(curve, "bounds_curve.csv");
  const auto robust = robustness_tau(grid);
  m["robustness_tau"] = robust ? json(*robust) : json(nullptr);
  double calibrated = 0.0;
  for (int k = 0; k < c.plan.k; ++k) {
    calibrated = std::max(calibrated,
                          calibrate_tau(c.sample.subset(c.plan.rows_in(k)), *c.fits[k], arms.a));
  }
  m["calibrated_tau"] = calibrated;
  nuisance_notes(m, c);
  out << "robustness_tau=" << (robust ? format_double(*robust) : std::string("none"))
      << " calibrated_tau=" << format_double(calibrated) << '\n';
  m.write(out);
  return kExitOk;
}

// ---------------------------------------------------------------- verify

int cmd_verify(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  Manifest m("verify", cfg);
  const BatteryConfig bc = cfg.battery();
  const BatteryResult res = run_battery(bc, cfg.tolerance, cfg.corrupt_term);

  CsvTable rem({"problem", "variant", "lhs", "rhs", "residual", "relative_residual", "passed"});
  CsvTable terms({"problem", "variant", "term", "value"});
  std::map<std::string, int> seen;
  std::vector<std::string> failures;
  for (const auto& r : res.remainders) {
    const int p = seen[r.variant]++;
    rem.row().add(p).add(r.variant).add(r.lhs).add(r.rhs).add(r.residual).add(r.relative_residual).add(
        r.passed);
    for (const auto& term : r.terms) terms.row().add(p).add(r.variant).add(term.name).add(term.value);
    if (!r.passed) {
      std::string name = r.variant;
      for (const auto& term : r.terms) {
        if (!cfg.corrupt_term.empty() &&
            (term.name == cfg.corrupt_term || r.variant + ":" + term.name == cfg.corrupt_term)) {
          name = r.variant + ":" + term.name;
        }
      }
      failures.push_back(name + " (problem " + std::to_string(p) + ")");
    }
  }
  CsvTable cen({"check", "enumerated", "expected", "relative_error", "passed"});
  for (const auto& c : res.centering) {
    cen.row().add(c.name).add(c.enumerated).add(c.expected).add(c.relative_error).add(c.passed);
    if (!c.passed) failures.push_back("centering " + c.name);
  }

  // Descriptive audit: residual of the quoted decomposition against the
  // claimed missing terms.
  CsvTable audit({"problem", "lhs", "rhs", "residual", "missing_terms", "residual_minus_missing",
                  "explained"});
  int explained = 0;
  for (std::size_t i = 0; i < res.audit.size(); ++i) {
    const auto& a = res.audit[i];
    const bool ok = std::abs(a.residual_minus_missing) <= cfg.tolerance * (1.0 + std::abs(a.lhs));
    explained += ok;
    audit.row().add(i).add(a.lhs).add(a.rhs).add(a.residual).add(a.missing_terms).add(
        a.residual_minus_missing).add(ok);
    for (const auto& term : a.terms) terms.row().add(i).add(a.variant).add(term.name).add(term.value);
  }

  CsvTable scaling({"problem", "target", "slope", "in_band"});
  std::mt19937_64 rng = rng_stream(cfg.seed, 0, "verify-scaling");
  const auto problems = battery_problems(bc);
  for (std::size_t i = 0; i < problems.size(); ++i) {
    const auto d = random_direction(problems[i], rng);
    const double s1 = second_order_scaling(problems[i], d, cfg.arms(), ScalingTarget::OneStep).slope;
    const double s0 = second_order_scaling(problems[i], d, cfg.arms(), ScalingTarget::Plugin).slope;
    const bool ok1 = s1 >= 1.8 && s1 <= 2.2;
    const bool ok0 = s0 >= 0.8 && s0 <= 1.2;
    scaling.row().add(i).add(std::string("one-step")).add(s1).add(ok1);
    scaling.row().add(i).add(std::string("plugin")).add(s0).add(ok0);
    if (!ok1) failures.push_back("scaling one-step (problem " + std::to_string(i) + ")");
    if (!ok0) failures.push_back("scaling plugin (problem " + std::to_string(i) + ")");
  }

  m.output(rem, "verify_remainders.csv");
  m.output(terms, "verify_terms.csv");
  m.output(cen, "verify_centering.csv");
  m.output(audit, "audit.csv");
  m.output(scaling, "verify_scaling.csv");
  m["passed"] = failures.empty();
  m["max_remainder_residual"] = res.max_remainder_residual;
  m["max_centering_error"] = res.max_centering_error;
  m["audit_explained"] = explained;
  m["audit_problems"] = res.audit.size();

  out << "remainder checks: " << res.remainders.size() << ", max relative residual "
      << format_double(res.max_remainder_residual) << '\n';
  out << "centering checks: " << res.centering.size() << ", max relative error "
      << format_double(res.max_centering_error) << '\n';
  out << "benkeser-ran audit: missing terms explain the residual on " << explained << " of "
      << res.audit.size() << " problems\n";
  m.write(out);
  if (!failures.empty()) {
    err << "error: E_VERIFY: residual check failed for term " << failures.front();
    if (failures.size() > 1) err << " and " << failures.size() - 1 << " more";
    err << '\n';
    return kExitVerify;
  }
  return kExitOk;
}

// ---------------------------------------------------------------- convergence

int cmd_convergence(const RunConfig& cfg, std::ostream& out) {
  const ConvergenceConfig cc = cfg.convergence();
  validate(cc);
  Manifest m("convergence", cfg);
  CsvTable t({"panel", "n", "estimator", "rmse", "scaled_rmse", "bandwidth", "reps"});
  for (const auto& r : run_convergence(cc)) {
    t.row().add(r.panel).add(r.n).add(r.estimator).add(r.rmse).add(r.scaled_rmse).add(r.bandwidth).add(
        r.reps);
  }
  m.output(t, "convergence.csv");
  m.write(out);
  return kExitOk;
}

// ---------------------------------------------------------------- exports

int cmd_sample(const RunConfig& cfg, const SampleExport& opt, std::ostream& out) {
  std::mt19937_64 rng = rng_stream(cfg.seed, 0, "sample-" + opt.design);
  Sample s;
  if (opt.design == "dgp") {
    s = dgp_sample(DgpSpec{}, opt.n, rng);
  } else if (opt.design == "selection") {
    if (!(opt.sigma > 0.0)) throw ConfigError("sigma must be positive");
    s = sample_from(SelectionNuisances(opt.sigma), DgpSpec{}, opt.n, rng);
  } else {
    throw ConfigError("unknown design '" + opt.design + "'");
  }
  std::string file = opt.file;
  if (file.empty()) {
    fs::create_directories(cfg.output_dir);
    file = (fs::path(cfg.output_dir) / "sample.csv").string();
  }
  std::ofstream f(file, std::ios::binary);
  if (!f) throw ConfigError("cannot write '" + file + "'");
  write_dataset(f, s);
  out << "wrote " << s.size() << " rows to " << file << '\n';
  return kExitOk;
}

int cmd_truth(const RunConfig& cfg, const TruthExport& opt, std::ostream& out) {
  if (opt.points < 2 || !(opt.hi > opt.lo)) throw ConfigError("invalid truth grid");
  Manifest m("truth", cfg);
  CsvTable t({"x", "psi_m1", "psi_m2", "psi_cov", "psi_ide", "psi_total", "prop_med"});
  for (const TruthPoint& p : truth_curves(linspace(opt.lo, opt.hi, opt.points), cfg.arms())) {
    t.row().add(p.x).add(p.psi_m1).add(p.psi_m2).add(p.psi_cov).add(p.psi_ide).add(p.psi).add(p.psi_r);
  }
  m.output(t, "truth.csv");
  m.write(out);
  return kExitOk;
}

// ---------------------------------------------------------------- entry

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Interventional indirect effects: estimation, bounds, simulation and verification"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  std::vector<std::string> overrides;
  std::string output_dir;
  int threads = 0;
  app.add_option("-c,--config", config_path, "INI configuration file");
  app.add_option("-s,--set", overrides, "override a key, e.g. estimator.folds=5 (repeatable)");
  app.add_option("-o,--out", output_dir, "output directory (data.output)");
  app.add_option("-t,--threads", threads, "worker threads (default: IIE_THREADS or 1)")
      ->check(CLI::NonNegativeNumber);

  auto* simulate = app.add_subcommand("simulate", "Monte Carlo tables for the projection, "
                                                  "nonparametric and proportion-mediated estimators");
  auto* estimate = app.add_subcommand("estimate", "cross-fitted estimates on a dataset");
  auto* bounds = app.add_subcommand("bounds", "sensitivity bounds over the tau grid");
  auto* verify = app.add_subcommand("verify", "exact-enumeration verification battery");
  auto* convergence = app.add_subcommand("convergence", "convergence-rate experiment");
  auto* sample = app.add_subcommand("sample", "export a simulated dataset");
  auto* truth = app.add_subcommand("truth", "export the true effect curves");
  auto* config = app.add_subcommand("config", "print the effective configuration");

  std::string data_path;
  estimate->add_option("data", data_path, "dataset CSV (data.path)");
  bounds->add_option("data", data_path, "dataset CSV (data.path)");
  std::string corrupt;
  verify->add_option("--corrupt-term", corrupt, "perturb a named remainder term (test hook)");
  SampleExport se;
  sample->add_option("-n,--n", se.n, "sample size")->check(CLI::PositiveNumber);
  sample->add_option("--design", se.design, "dgp or selection");
  sample->add_option("--sigma", se.sigma, "selection strength");
  sample->add_option("-f,--file", se.file, "output file");
  TruthExport te;
  truth->add_option("--lo", te.lo, "grid start");
  truth->add_option("--hi", te.hi, "grid end");
  truth->add_option("--points", te.points, "grid points");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    RunConfig cfg = config_path.empty() ? RunConfig{} : load_config(config_path);
    apply_overrides(cfg, overrides);
    if (!output_dir.empty()) cfg.output_dir = output_dir;
    if (!data_path.empty()) cfg.data_path = data_path;
    if (!corrupt.empty()) cfg.corrupt_term = corrupt;
    cfg.threads = threads;

    if (*simulate) return cmd_simulate(cfg, out);
    if (*estimate) return cmd_estimate(cfg, out);
    if (*bounds) return cmd_bounds(cfg, out);
    if (*verify) return cmd_verify(cfg, out, err);
    if (*convergence) return cmd_convergence(cfg, out);
    if (*sample) return cmd_sample(cfg, se, out);
    if (*truth) return cmd_truth(cfg, te, out);
    if (*config) {
      out << to_ini(cfg);
      return kExitOk;
    }
    return kExitConfig;
  } catch (const PositivityError& e) {
    err << "error: " << e.id() << ": " << e.what() << "; rows=";
    for (std::size_t i = 0; i < e.rows().size(); ++i) err << (i ? "," : "") << e.rows()[i];
    err << '\n';
    return kExitPositivity;
  } catch (const Error& e) {
    err << "error: " << e.id() << ": " << e.what() << '\n';
    return exit_code_for(e.id());
  } catch (const fs::filesystem_error& e) {
    err << "error: E_CONFIG: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: E_INTERNAL: " << e.what() << '\n';
    return kExitFailure;
  }
}

}  // namespace iie::cli
