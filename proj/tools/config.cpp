#include "config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <toml.hpp>

#include "gpesmc/models.hpp"
#include "gpesmc/smc.hpp"

namespace gpesmc::cli {

namespace {

// Reads typed keys from one table and rejects keys nobody asked for.
class Section {
 public:
  Section(const toml::table* table, std::string name) : table_(table), name_(std::move(name)) {}

  template <class T>
  void read(std::string_view key, T& out) {
    if (const toml::node* n = find(key)) out = convert<T>(*n, key);
  }

  template <class T>
  void read(std::string_view key, std::optional<T>& out) {
    if (const toml::node* n = find(key)) out = convert<T>(*n, key);
  }

  void finish() const {
    if (!table_) return;
    for (auto&& [k, v] : *table_) {
      if (!seen_.count(std::string(k.str()))) throw ConfigError("unknown key '" + qualified(k.str()) + "'");
    }
  }

 private:
  const toml::node* find(std::string_view key) {
    if (!table_) return nullptr;
    seen_.insert(std::string(key));
    return table_->get(key);
  }

  [[nodiscard]] std::string qualified(std::string_view key) const {
    return name_.empty() ? std::string(key) : name_ + "." + std::string(key);
  }

  template <class T>
  T convert(const toml::node& n, std::string_view key) const {
    if constexpr (std::is_same_v<T, std::vector<double>>) {
      const toml::array* arr = n.as_array();
      if (!arr) throw ConfigError("'" + qualified(key) + "' must be an array of numbers");
      std::vector<double> out;
      for (const toml::node& e : *arr) {
        const std::optional<double> v = e.is_number() ? e.value<double>() : std::nullopt;
        if (!v) throw ConfigError("'" + qualified(key) + "' must contain only numbers");
        out.push_back(*v);
      }
      return out;
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!n.is_string()) throw ConfigError("'" + qualified(key) + "' must be a string");
      return *n.value<std::string>();
    } else if constexpr (std::is_same_v<T, bool>) {
      if (!n.is_boolean()) throw ConfigError("'" + qualified(key) + "' must be a boolean");
      return *n.value<bool>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!n.is_number()) throw ConfigError("'" + qualified(key) + "' must be a number");
      return *n.value<double>();
    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
      if (!n.is_integer() || *n.value<std::int64_t>() < 0) {
        throw ConfigError("'" + qualified(key) + "' must be a nonnegative integer");
      }
      return static_cast<std::uint64_t>(*n.value<std::int64_t>());
    } else {
      if (!n.is_integer()) throw ConfigError("'" + qualified(key) + "' must be an integer");
      const std::int64_t v = *n.value<std::int64_t>();
      if (v < std::numeric_limits<T>::min() || v > std::numeric_limits<T>::max()) {
        throw ConfigError("'" + qualified(key) + "' is out of range");
      }
      return static_cast<T>(v);
    }
  }

  const toml::table* table_;
  std::string name_;
  std::set<std::string> seen_;
};

const toml::table* subtable(const toml::table& root, std::string_view key) {
  const toml::node* n = root.get(key);
  if (!n) return nullptr;
  if (!n->is_table()) throw ConfigError("'" + std::string(key) + "' must be a table");
  return n->as_table();
}

toml::array to_array(const std::vector<double>& xs) {
  toml::array a;
  for (double x : xs) a.push_back(x);
  return a;
}

}  // namespace

ExperimentConfig parse_config(std::string_view text, std::string_view source) {
  toml::table root;
  try {
    root = toml::parse(text, source);
  } catch (const toml::parse_error& e) {
    std::ostringstream msg;
    msg << source << ':' << e.source().begin.line << ": " << e.description();
    throw ConfigError(msg.str());
  }

  ExperimentConfig c;
  Section top(&root, "");
  top.read("seed", c.seed);

  const std::set<std::string> sections{"model", "gpe", "simulate", "infer", "smooth", "gpe_check"};
  for (auto&& [k, v] : root) {
    const std::string key(k.str());
    if (key != "seed" && !sections.count(key)) throw ConfigError("unknown key '" + key + "'");
  }

  Section model(subtable(root, "model"), "model");
  model.read("name", c.model.name);
  model.read("theta_star", c.model.theta_star);
  model.read("x0", c.model.x0);
  model.read("sigma_eps", c.model.sigma_eps);
  model.finish();

  Section gpe(subtable(root, "gpe"), "gpe");
  gpe.read("max_rejection_attempts", c.gpe.max_rejection_attempts);
  gpe.read("max_bisection_depth", c.gpe.max_bisection_depth);
  gpe.read("max_expected_points", c.gpe.max_expected_points);
  gpe.read("layer_zeta", c.gpe.layer_zeta);
  gpe.finish();

  Section sim(subtable(root, "simulate"), "simulate");
  sim.read("n", c.simulate.n);
  sim.read("step", c.simulate.step);
  sim.read("include_latent", c.simulate.include_latent);
  sim.read("output", c.simulate.output);
  sim.finish();

  Section inf(subtable(root, "infer"), "infer");
  inf.read("data", c.infer.data);
  inf.read("theta0", c.infer.theta0);
  inf.read("iterations", c.infer.iterations);
  inf.read("initial_particles", c.infer.initial_particles);
  inf.read("lag", c.infer.lag);
  inf.read("alpha", c.infer.alpha);
  inf.read("alpha_bar", c.infer.alpha_bar);
  inf.read("proposal", c.infer.proposal);
  inf.read("selection", c.infer.selection);
  inf.read("nm_x_tolerance", c.infer.nm_x_tolerance);
  inf.read("nm_f_tolerance", c.infer.nm_f_tolerance);
  inf.read("nm_max_evaluations", c.infer.nm_max_evaluations);
  inf.read("trace", c.infer.trace);
  inf.read("summary", c.infer.summary);
  inf.finish();

  Section sm(subtable(root, "smooth"), "smooth");
  sm.read("data", c.smooth.data);
  sm.read("method", c.smooth.method);
  sm.read("theta", c.smooth.theta);
  sm.read("particles", c.smooth.particles);
  sm.read("lag", c.smooth.lag);
  sm.read("draws", c.smooth.draws);
  sm.read("output", c.smooth.output);
  sm.finish();

  Section chk(subtable(root, "gpe_check"), "gpe_check");
  chk.read("theta", c.gpe_check.theta);
  chk.read("x", c.gpe_check.x);
  chk.read("x_end", c.gpe_check.x_end);
  chk.read("t", c.gpe_check.t);
  chk.read("draws", c.gpe_check.draws);
  chk.read("coordinates", c.gpe_check.coordinates);
  chk.finish();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str(), path);
}

std::string to_toml(const ExperimentConfig& c) {
  toml::table root;
  if (c.seed) root.insert("seed", static_cast<std::int64_t>(*c.seed));

  toml::table model;
  model.insert("name", c.model.name);
  if (c.model.theta_star) model.insert("theta_star", to_array(*c.model.theta_star));
  if (c.model.x0) model.insert("x0", *c.model.x0);
  model.insert("sigma_eps", c.model.sigma_eps);
  root.insert("model", model);

  toml::table gpe;
  gpe.insert("max_rejection_attempts", c.gpe.max_rejection_attempts);
  gpe.insert("max_bisection_depth", c.gpe.max_bisection_depth);
  gpe.insert("max_expected_points", c.gpe.max_expected_points);
  gpe.insert("layer_zeta", c.gpe.layer_zeta);
  root.insert("gpe", gpe);

  toml::table sim;
  sim.insert("n", c.simulate.n);
  sim.insert("step", c.simulate.step);
  sim.insert("include_latent", c.simulate.include_latent);
  sim.insert("output", c.simulate.output);
  root.insert("simulate", sim);

  toml::table inf;
  inf.insert("data", c.infer.data);
  if (c.infer.theta0) inf.insert("theta0", to_array(*c.infer.theta0));
  inf.insert("iterations", c.infer.iterations);
  inf.insert("initial_particles", c.infer.initial_particles);
  if (c.infer.lag) inf.insert("lag", *c.infer.lag);
  inf.insert("alpha", c.infer.alpha);
  inf.insert("alpha_bar", c.infer.alpha_bar);
  inf.insert("proposal", c.infer.proposal);
  inf.insert("selection", c.infer.selection);
  inf.insert("nm_x_tolerance", c.infer.nm_x_tolerance);
  inf.insert("nm_f_tolerance", c.infer.nm_f_tolerance);
  inf.insert("nm_max_evaluations", c.infer.nm_max_evaluations);
  inf.insert("trace", c.infer.trace);
  inf.insert("summary", c.infer.summary);
  root.insert("infer", inf);

  toml::table sm;
  sm.insert("data", c.smooth.data);
  sm.insert("method", c.smooth.method);
  if (c.smooth.theta) sm.insert("theta", to_array(*c.smooth.theta));
  sm.insert("particles", c.smooth.particles);
  if (c.smooth.lag) sm.insert("lag", *c.smooth.lag);
  sm.insert("draws", c.smooth.draws);
  sm.insert("output", c.smooth.output);
  root.insert("smooth", sm);

  toml::table chk;
  if (c.gpe_check.theta) chk.insert("theta", to_array(*c.gpe_check.theta));
  chk.insert("x", c.gpe_check.x);
  chk.insert("x_end", c.gpe_check.x_end);
  chk.insert("t", c.gpe_check.t);
  chk.insert("draws", c.gpe_check.draws);
  chk.insert("coordinates", c.gpe_check.coordinates);
  root.insert("gpe_check", chk);

  std::ostringstream out;
  out << root << '\n';
  return out.str();
}

void check_references(const ExperimentConfig& c) {
  std::unique_ptr<DiffusionModel> model;
  try {
    model = make_model(c.model.name);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  const auto check_theta = [&](const std::optional<std::vector<double>>& theta, std::string_view key) {
    if (!theta) return;
    try {
      model->validate(Parameters{*theta, c.model.sigma_eps});
    } catch (const std::exception& e) {
      throw ConfigError(std::string(key) + ": " + e.what());
    }
  };
  check_theta(c.model.theta_star, "model.theta_star");
  check_theta(c.infer.theta0, "infer.theta0");
  check_theta(c.smooth.theta, "smooth.theta");
  check_theta(c.gpe_check.theta, "gpe_check.theta");
  if (!(c.model.sigma_eps >= 0.0)) throw ConfigError("model.sigma_eps must be nonnegative");
  if (c.infer.selection != "multinomial" && c.infer.selection != "residual") {
    throw ConfigError("infer.selection must be 'multinomial' or 'residual'");
  }
  if (c.smooth.method != "ffbs" && c.smooth.method != "fixed_lag") {
    throw ConfigError("smooth.method must be 'ffbs' or 'fixed_lag'");
  }
  if (c.gpe_check.coordinates != "original" && c.gpe_check.coordinates != "transformed") {
    throw ConfigError("gpe_check.coordinates must be 'original' or 'transformed'");
  }
  const std::set<std::string> proposals{"student_t", "euler_gaussian", "uniform"};
  if (!c.infer.proposal.empty() && !proposals.count(c.infer.proposal)) {
    throw ConfigError("unknown proposal '" + c.infer.proposal + "'");
  }
}

}  // namespace gpesmc::cli
