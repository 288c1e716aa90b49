#include "commands.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "data_io.hpp"
#include "gpesmc/em.hpp"
#include "gpesmc/gpe.hpp"
#include "gpesmc/models.hpp"
#include "gpesmc/smc.hpp"

namespace gpesmc::cli {

namespace {

using Json = nlohmann::ordered_json;

std::uint64_t seed_of(const ExperimentConfig& config, const RunOptions& options, bool required) {
  if (options.seed) return *options.seed;
  if (config.seed) return *config.seed;
  if (required) throw ConfigError("a seed is required (config key 'seed' or --seed)");
  return 0;
}

GpeSettings gpe_settings(const ExperimentConfig& config) {
  GpeSettings s;
  s.max_rejection_attempts = config.gpe.max_rejection_attempts;
  s.max_bisection_depth = config.gpe.max_bisection_depth;
  s.max_expected_points = config.gpe.max_expected_points;
  s.layers.zeta = config.gpe.layer_zeta;
  if (s.max_rejection_attempts < 1) throw ConfigError("gpe.max_rejection_attempts must be at least 1");
  if (s.max_bisection_depth < 0) throw ConfigError("gpe.max_bisection_depth must be nonnegative");
  if (!(s.max_expected_points > 0.0)) throw ConfigError("gpe.max_expected_points must be positive");
  if (!(s.layers.zeta > 0.0)) throw ConfigError("gpe.layer_zeta must be positive");
  return s;
}

std::vector<double> require_theta(const std::optional<std::vector<double>>& first,
                                  const std::optional<std::vector<double>>& second, std::string_view what) {
  if (first) return *first;
  if (second) return *second;
  throw ConfigError(std::string(what) + " is required");
}

// Writes through a string so a failed run never leaves a half-written file.
void write_file(const std::string& path, const std::string& contents) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::ios_base::failure("cannot open '" + path + "' for writing");
  out << contents;
  out.close();
  if (!out) throw std::ios_base::failure("failed writing '" + path + "'");
}

Json diagnostics_json(const GpeDiagnostics& d) {
  return Json{{"density_draws", d.density_draws},
              {"log_density_draws", d.log_density_draws},
              {"poisson_points", d.poisson_points},
              {"rejections", d.rejections},
              {"layer_invalidations", d.layer_invalidations},
              {"fallback_bisections", d.fallback_bisections}};
}

Json summary_json(const std::vector<double>& xs) {
  const double first = xs.front();
  double shift = 0.0;
  for (double x : xs) shift += x - first;
  const double mean = first + shift / static_cast<double>(xs.size());
  double lo = xs.front(), hi = xs.front(), ss = 0.0;
  for (double x : xs) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
    ss += (x - mean) * (x - mean);
  }
  Json j{{"mean", mean}};
  if (xs.size() > 1) {
    j["se"] = std::sqrt(ss / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
  } else {
    j["se"] = "n/a";
  }
  j["min"] = lo;
  j["max"] = hi;
  return j;
}

std::string data_path(const ExperimentConfig& config) {
  return config.smooth.data.empty() ? config.infer.data : config.smooth.data;
}

}  // namespace

int cmd_simulate(const ExperimentConfig& config, const RunOptions& options, std::ostream& log) {
  check_references(config);
  const std::uint64_t seed = seed_of(config, options, true);
  const auto model = make_model(config.model.name);
  if (!config.model.theta_star) throw ConfigError("model.theta_star is required for simulate");
  if (config.simulate.n < 0) throw ConfigError("simulate.n must be nonnegative");
  const Parameters theta{*config.model.theta_star, config.model.sigma_eps};
  const double x0 = config.model.x0.value_or(model->default_initial_state(theta));
  SimulationSettings settings;
  settings.step = config.simulate.step;
  const SimulatedData sim = simulate_data(*model, theta, config.simulate.n, x0, seed, settings);

  DataSet data{sim.observations, std::nullopt};
  if (config.simulate.include_latent) data.latent = sim.latent;
  std::ostringstream csv;
  write_data_csv(csv, data);
  const std::string path = options.out.value_or(config.simulate.output);
  write_file(path, csv.str());
  log << "wrote " << data.observations.size() << " observations to " << path << '\n';
  return kOk;
}

int cmd_infer(const ExperimentConfig& config, const RunOptions& options, std::ostream& log) {
  check_references(config);
  const std::uint64_t seed = seed_of(config, options, true);
  const auto model = make_model(config.model.name);
  const DataSet data = read_data_csv(config.infer.data);
  if (data.observations.size() < 2) throw ConfigError("infer needs at least two observations");

  EmConfig em;
  em.iterations = config.infer.iterations;
  if (config.infer.initial_particles < 1) throw ConfigError("infer.initial_particles must be at least 1");
  em.initial_particles = static_cast<std::size_t>(config.infer.initial_particles);
  em.lag = config.infer.lag;
  em.alpha = config.infer.alpha;
  em.alpha_bar = config.infer.alpha_bar;
  em.theta0 = require_theta(config.infer.theta0, std::nullopt, "infer.theta0");
  em.sigma_eps = config.model.sigma_eps;
  em.proposal = config.infer.proposal;
  em.scheme = config.infer.selection == "residual" ? SelectionScheme::residual : SelectionScheme::multinomial;
  em.gpe = gpe_settings(config);
  em.nelder_mead.x_tolerance = config.infer.nm_x_tolerance;
  em.nelder_mead.f_tolerance = config.infer.nm_f_tolerance;
  em.nelder_mead.max_evaluations = config.infer.nm_max_evaluations;
  em.threads = options.threads;
  em.timing = options.timing;
  try {
    validate(em, *model);
  } catch (const std::logic_error& e) {
    throw ConfigError(e.what());
  }

  const int n = static_cast<int>(data.observations.size()) - 1;
  const EmTrace trace = mcem_run(*model, data.observations, em, RandomStream(seed), [&](const EmIteration& it) {
    log << "iteration " << it.iteration << ": N=" << it.particles << " theta=";
    for (std::size_t i = 0; i < it.theta.size(); ++i) log << (i ? "," : "") << format_number(it.theta[i]);
    log << " Q=" << format_number(it.q_value) << '\n';
  });

  const std::string trace_path = options.out.value_or(config.infer.trace);
  const std::string summary_path =
      options.out ? std::filesystem::path(*options.out).replace_extension(".json").string() : config.infer.summary;
  std::ostringstream csv;
  write_trace_csv(csv, trace, model->dim());
  write_file(trace_path, csv.str());

  GpeDiagnostics total;
  Json per_iteration = Json::array();
  for (const EmIteration& it : trace.iterations) {
    total += it.diagnostics;
    per_iteration.push_back(Json{{"iter", it.iteration},
                                 {"N", it.particles},
                                 {"Q_value", it.q_value},
                                 {"evaluations", it.evaluations},
                                 {"diagnostics", diagnostics_json(it.diagnostics)}});
  }
  Json summary{{"model", config.model.name},
               {"parameter_names", model->parameter_names()},
               {"seed", seed},
               {"n", n},
               {"lag", em.lag.value_or(default_lag(model->name(), n))},
               {"theta0", em.theta0},
               {"theta", trace.theta},
               {"iterations_completed", trace.iterations.size()},
               {"status", trace.failure ? "failed" : "ok"},
               {"failure", trace.failure ? Json(*trace.failure) : Json(nullptr)},
               {"diagnostics", diagnostics_json(total)},
               {"per_iteration", per_iteration}};
  write_file(summary_path, summary.dump(2) + "\n");
  log << "wrote " << trace_path << " and " << summary_path << '\n';
  if (trace.failure) {
    log << "error: " << *trace.failure << '\n';
    return trace.numerical_failure ? kNumericalError : kConfigError;
  }
  return kOk;
}

int cmd_gpe_check(const ExperimentConfig& config, const RunOptions& options, std::ostream& report) {
  check_references(config);
  const std::uint64_t seed = seed_of(config, options, false);
  const auto model = make_model(config.model.name);
  const GpeCheckSection& c = config.gpe_check;
  if (c.draws < 1) throw ConfigError("gpe_check.draws must be at least 1");
  if (!(c.t > 0.0)) throw ConfigError("gpe_check.t must be positive");
  const std::vector<double> theta = require_theta(c.theta, config.model.theta_star, "gpe_check.theta");
  const auto d = model->bind(Parameters{theta, config.model.sigma_eps});
  const Coordinates coordinates = c.coordinates == "transformed" ? Coordinates::transformed : Coordinates::original;
  if (coordinates == Coordinates::original) {
    const Interval domain = model->state_domain();
    if (!domain.contains(c.x) || !domain.contains(c.x_end)) throw DomainError("gpe_check: endpoint outside the state domain");
  }
  const GpeSettings settings = gpe_settings(config);
  const RandomStream root(seed);
  const auto m = static_cast<std::size_t>(c.draws);
  std::vector<double> density(m), log_density(m);
  std::vector<GpeDiagnostics> diag(m);
  parallel_for(m, options.threads, [&](std::size_t i) {
    density[i] = GpeDraw(GpeKind::density, coordinates, c.x, c.x_end, c.t, root.fork(1, i), settings).value_at(*d, &diag[i]);
    log_density[i] =
        GpeDraw(GpeKind::log_density, coordinates, c.x, c.x_end, c.t, root.fork(2, i), settings).value_at(*d, &diag[i]);
  });
  GpeDiagnostics total;
  for (const GpeDiagnostics& g : diag) total += g;

  const Json out{{"model", config.model.name},
                 {"theta", theta},
                 {"coordinates", c.coordinates},
                 {"x", c.x},
                 {"x_end", c.x_end},
                 {"t", c.t},
                 {"draws", c.draws},
                 {"seed", seed},
                 {"density", summary_json(density)},
                 {"log_density", summary_json(log_density)},
                 {"diagnostics", diagnostics_json(total)}};
  const std::string text = out.dump(2) + "\n";
  if (options.out) {
    write_file(*options.out, text);
  } else {
    report << text;
  }
  return kOk;
}

int cmd_smooth(const ExperimentConfig& config, const RunOptions& options, std::ostream& log) {
  check_references(config);
  const std::uint64_t seed = seed_of(config, options, false);
  const auto model = make_model(config.model.name);
  const DataSet data = read_data_csv(data_path(config));
  const std::vector<double> theta = require_theta(config.smooth.theta, config.infer.theta0, "smooth.theta");
  const std::shared_ptr<const Diffusion> d = model->bind(Parameters{theta, config.model.sigma_eps});
  if (config.smooth.particles < 1) throw ConfigError("smooth.particles must be at least 1");
  if (config.smooth.draws < 1) throw ConfigError("smooth.draws must be at least 1");
  if (config.smooth.lag && *config.smooth.lag < 1) throw ConfigError("smooth.lag must be at least 1");

  FilterSettings fs;
  fs.particles = static_cast<std::size_t>(config.smooth.particles);
  fs.alpha = config.infer.alpha;
  fs.scheme = config.infer.selection == "residual" ? SelectionScheme::residual : SelectionScheme::multinomial;
  fs.gpe = gpe_settings(config);
  fs.threads = options.threads;
  const std::string proposal_name =
      config.infer.proposal.empty() ? std::string(default_proposal_name(model->name())) : config.infer.proposal;
  const auto proposal = make_proposal(proposal_name, d);

  const RandomStream root(seed);
  const std::size_t draws = static_cast<std::size_t>(config.smooth.draws);
  const std::size_t times = data.observations.size();
  std::vector<std::vector<double>> paths(draws, std::vector<double>(times));

  if (config.smooth.method == "ffbs") {
    const FilterHistory history = run_filter(*d, *proposal, data.observations, fs, root.fork(1));
    parallel_for(draws, options.threads, [&](std::size_t m) {
      paths[m] = ffbs_sample(history, *d, root.fork(2, m), fs.gpe);
    });
  } else {
    const int n = static_cast<int>(times) - 1;
    const int lag = config.smooth.lag.value_or(default_lag(model->name(), n));
    ParticleFilter filter(*d, *proposal, data.observations, fs, root.fork(1), std::max(1, std::min(lag, n)));
    const auto harvest = [&] {
      for (int j : finalised_observations(filter.time(), n, lag)) {
        const std::vector<std::size_t> at = filter.lineage(j);
        const std::vector<double> w = filter.current().normalized_weights();
        RandomStream pick = root.fork(2, static_cast<std::uint64_t>(j));
        const std::vector<std::size_t> chosen = select_multinomial(w, draws, pick);
        for (std::size_t m = 0; m < draws; ++m) {
          paths[m][static_cast<std::size_t>(j)] = filter.generation(j).states[at[chosen[m]]];
        }
      }
    };
    harvest();
    while (!filter.done()) {
      filter.step();
      harvest();
    }
  }

  std::ostringstream csv;
  csv << "draw,k,x\n";
  for (std::size_t m = 0; m < draws; ++m) {
    for (std::size_t k = 0; k < times; ++k) csv << m << ',' << data.observations[k].k << ',' << format_number(paths[m][k]) << '\n';
  }
  const std::string path = options.out.value_or(config.smooth.output);
  write_file(path, csv.str());
  log << "wrote " << draws << " smoothed draws of " << times << " states to " << path << '\n';
  return kOk;
}

int report_failure(std::ostream& err) {
  try {
    throw;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kConfigError;
  } catch (const std::logic_error& e) {
    // domain and argument errors stem from the inputs
    err << "invalid input: " << e.what() << '\n';
    return kConfigError;
  } catch (const NumericalFailure& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kNumericalError;
  } catch (const GpeError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kNumericalError;
  } catch (const LayerError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kNumericalError;
  } catch (const BridgeError& e) {
    err << "numerical failure: " << e.what() << '\n';
    return kNumericalError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kIoError;
  }
}

}  // namespace gpesmc::cli
