#include "cli/config.hpp"

#include <charconv>
#include <cmath>
#include <functional>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>

#include "iie/errors.hpp"

namespace iie::cli {

namespace pt = boost::property_tree;

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& raw) {
  const std::string s = trim(raw);
  T v{};
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw ConfigError("key '" + key + "': cannot parse '" + raw + "'");
  }
  if constexpr (std::is_floating_point_v<T>) {
    if (!std::isfinite(v)) throw ConfigError("key '" + key + "': value must be finite");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& raw) {
  const std::string s = trim(raw);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError("key '" + key + "': expected true or false, got '" + raw + "'");
}

std::vector<std::string> split(const std::string& raw) {
  std::vector<std::string> out;
  if (trim(raw).empty()) return out;
  std::stringstream ss(raw);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

template <typename T>
std::vector<T> parse_list(const std::string& key, const std::string& raw) {
  std::vector<T> out;
  for (const auto& item : split(raw)) out.push_back(parse_number<T>(key, item));
  return out;
}

template <typename T>
std::string join(const std::vector<T>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_floating_point_v<T>) {
      out += format_double(v[i]);
    } else {
      out += std::to_string(v[i]);
    }
  }
  return out;
}

struct Binding {
  std::string key;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;
};

template <typename T>
Binding number(std::string key, T RunConfig::*field) {
  return {key,
          [field](const RunConfig& c) {
            if constexpr (std::is_floating_point_v<T>) {
              return format_double(c.*field);
            } else {
              return std::to_string(c.*field);
            }
          },
          [key, field](RunConfig& c, const std::string& v) { c.*field = parse_number<T>(key, v); }};
}

template <typename T>
Binding list(std::string key, std::vector<T> RunConfig::*field) {
  return {key, [field](const RunConfig& c) { return join(c.*field); },
          [key, field](RunConfig& c, const std::string& v) { c.*field = parse_list<T>(key, v); }};
}

Binding text(std::string key, std::string RunConfig::*field) {
  return {key, [field](const RunConfig& c) { return c.*field; },
          [field](RunConfig& c, const std::string& v) { c.*field = trim(v); }};
}

const std::vector<Binding>& bindings() {
  static const std::vector<Binding> table = {
      number("seed", &RunConfig::seed),
      text("data.path", &RunConfig::data_path),
      text("data.output", &RunConfig::output_dir),
      Binding{"estimator.arms",
              [](const RunConfig& c) {
                return std::to_string(c.arm) + "," + std::to_string(c.arm_prime);
              },
              [](RunConfig& c, const std::string& v) {
                const auto a = parse_list<int>("estimator.arms", v);
                if (a.size() != 2) throw ConfigError("key 'estimator.arms': expected a,a'");
                ArmPair::make(a[0], a[1]);
                c.arm = a[0];
                c.arm_prime = a[1];
              }},
      number("estimator.folds", &RunConfig::folds),
      Binding{"estimator.fold_mode", [](const RunConfig& c) { return to_string(c.fold_mode); },
              [](RunConfig& c, const std::string& v) { c.fold_mode = parse_fold_mode(trim(v)); }},
      list("estimator.query", &RunConfig::query),
      list("estimator.projections", &RunConfig::projections),
      number("estimator.v_index", &RunConfig::v_index),
      Binding{"estimator.basis", [](const RunConfig& c) { return to_string(c.basis); },
              [](RunConfig& c, const std::string& v) { c.basis = parse_basis(trim(v)); }},
      number("estimator.degree", &RunConfig::degree),
      number("estimator.knots", &RunConfig::knots),
      number("estimator.ridge", &RunConfig::ridge),
      number("estimator.floor", &RunConfig::floor),
      number("estimator.positivity", &RunConfig::positivity),
      number("estimator.bandwidth", &RunConfig::bandwidth),
      Binding{"sensitivity.assumption", [](const RunConfig& c) { return to_string(c.assumption); },
              [](RunConfig& c, const std::string& v) { c.assumption = parse_assumption(trim(v)); }},
      list("sensitivity.tau", &RunConfig::tau),
      number("simulate.n", &RunConfig::sim_n),
      number("simulate.reps", &RunConfig::sim_reps),
      list("simulate.points", &RunConfig::sim_points),
      list("simulate.projections", &RunConfig::sim_projections),
      Binding{"simulate.proportion_mediated",
              [](const RunConfig& c) { return std::string(c.proportion_mediated ? "true" : "false"); },
              [](RunConfig& c, const std::string& v) {
                c.proportion_mediated = parse_bool("simulate.proportion_mediated", v);
              }},
      number("simulate.failure_cap", &RunConfig::failure_cap),
      list("simulate.convergence_n", &RunConfig::convergence_n),
      number("simulate.convergence_reps", &RunConfig::convergence_reps),
      number("verify.problems", &RunConfig::problems),
      list("verify.grid_sizes", &RunConfig::grid_sizes),
      number("verify.floor", &RunConfig::verify_floor),
      number("verify.perturbation", &RunConfig::perturbation),
      number("verify.tolerance", &RunConfig::tolerance),
      text("verify.corrupt_term", &RunConfig::corrupt_term),
  };
  return table;
}

const Binding& binding(const std::string& key) {
  for (const auto& b : bindings()) {
    if (b.key == key) return b;
  }
  throw ConfigError("unknown configuration key '" + key + "'");
}

void validate(const RunConfig& c) {
  if (c.folds < 2) throw ConfigError("estimator.folds must be at least 2");
  if (c.degree < 1 || c.degree > 5) throw ConfigError("estimator.degree must be in 1..5");
  if (c.knots < 1) throw ConfigError("estimator.knots must be positive");
  if (c.ridge < 0.0) throw ConfigError("estimator.ridge must be non-negative");
  if (!(c.floor > 0.0 && c.floor < 0.5)) throw ConfigError("estimator.floor must be in (0, 0.5)");
  if (!(c.positivity > 0.0 && c.positivity < 0.5)) {
    throw ConfigError("estimator.positivity must be in (0, 0.5)");
  }
  if (c.bandwidth < 0.0) throw ConfigError("estimator.bandwidth must be non-negative");
  for (int d : c.projections) {
    if (d < 1 || d > 3) throw ConfigError("estimator.projections entries must be 1, 2 or 3");
  }
  for (double t : c.tau) {
    if (!(t >= 0.0 && t < 1.0)) throw ConfigError("sensitivity.tau entries must lie in [0, 1)");
  }
  if (c.problems < 1) throw ConfigError("verify.problems must be positive");
  for (int g : c.grid_sizes) {
    if (g < 1) throw ConfigError("verify.grid_sizes entries must be positive");
  }
  if (c.grid_sizes.empty()) throw ConfigError("verify.grid_sizes is empty");
  if (!(c.tolerance > 0.0)) throw ConfigError("verify.tolerance must be positive");
}

}  // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc() ? std::string(buf, ptr) : std::string("nan");
}

ArmPair RunConfig::arms() const { return ArmPair::make(arm, arm_prime); }

NuisanceConfig RunConfig::nuisance() const {
  NuisanceConfig n;
  for (BasisSpec* b : {&n.propensity, &n.mediator, &n.outcome}) {
    b->kind = basis;
    b->degree = degree;
    b->knots = knots;
    b->ridge = ridge;
  }
  n.floor = floor;
  return n;
}

BandwidthPolicy RunConfig::bandwidth_policy() const {
  BandwidthPolicy p;
  p.seed = seed;
  if (bandwidth > 0.0) {
    p.fixed = true;
    p.h = bandwidth;
  }
  return p;
}

int RunConfig::thread_count() const { return threads > 0 ? threads : default_threads(); }

TableConfig RunConfig::table() const {
  TableConfig t;
  t.n = sim_n;
  t.reps = sim_reps;
  t.seed = seed;
  t.points = sim_points;
  t.projections = sim_projections;
  t.proportion_mediated = proportion_mediated;
  t.failure_cap = failure_cap;
  t.threads = thread_count();
  t.nuisance = nuisance();
  t.bandwidth = bandwidth_policy();
  t.arms = arms();
  return t;
}

ConvergenceConfig RunConfig::convergence() const {
  ConvergenceConfig c;
  c.n_grid = convergence_n;
  c.reps = convergence_reps;
  c.seed = seed;
  c.threads = thread_count();
  c.bandwidth = bandwidth_policy();
  c.arms = arms();
  return c;
}

BatteryConfig RunConfig::battery() const {
  BatteryConfig b;
  b.grid_sizes = grid_sizes;
  b.floor = verify_floor;
  b.perturbation = perturbation;
  b.problems = problems;
  b.seed = seed;
  return b;
}

RunConfig from_ptree(const pt::ptree& tree) {
  RunConfig cfg;
  for (const auto& [name, node] : tree) {
    if (node.empty()) {
      binding(name).set(cfg, node.data());
      continue;
    }
    for (const auto& [key, leaf] : node) {
      if (!leaf.empty()) throw ConfigError("nested key '" + name + "." + key + "' is not allowed");
      binding(name + "." + key).set(cfg, leaf.data());
    }
  }
  validate(cfg);
  return cfg;
}

pt::ptree to_ptree(const RunConfig& cfg) {
  pt::ptree tree;
  for (const auto& b : bindings()) tree.put(pt::ptree::path_type(b.key, '.'), b.get(cfg));
  return tree;
}

RunConfig load_config(const std::string& path) {
  pt::ptree tree;
  try {
    pt::read_ini(path, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError(std::string("cannot read config: ") + e.what());
  }
  return from_ptree(tree);
}

void apply_overrides(RunConfig& cfg, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + o + "' is not key=value");
    binding(trim(o.substr(0, eq))).set(cfg, o.substr(eq + 1));
  }
  validate(cfg);
}

std::string to_ini(const RunConfig& cfg) {
  std::ostringstream os;
  pt::write_ini(os, to_ptree(cfg));
  return os.str();
}

}  // namespace iie::cli
