#include "gpesmc/em.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <ostream>
#include <utility>

namespace gpesmc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kInf = std::numeric_limits<double>::infinity();

constexpr std::uint64_t kTagFilter = 1;
constexpr std::uint64_t kTagDraws = 2;

std::string format_double(double x) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

}  // namespace

NelderMeadResult nelder_mead_maximize(const std::function<double(const std::vector<double>&)>& f,
                                      std::vector<double> x0, const NelderMeadSettings& settings,
                                      std::optional<std::vector<double>> steps) {
  const std::size_t n = x0.size();
  NelderMeadResult result;
  const int max_evals = settings.max_evaluations > 0 ? settings.max_evaluations : static_cast<int>(200 * std::max<std::size_t>(n, 1));
  const int max_iters = settings.max_iterations > 0 ? settings.max_iterations : static_cast<int>(200 * std::max<std::size_t>(n, 1));

  // minimise the negated objective; anything non-finite is worst
  const auto cost = [&](const std::vector<double>& x) {
    ++result.evaluations;
    const double v = f(x);
    return std::isfinite(v) ? -v : kInf;
  };

  if (n == 0) {
    result.x = std::move(x0);
    result.value = f(result.x);
    result.evaluations = 1;
    result.converged = true;
    return result;
  }

  std::vector<std::vector<double>> simplex(n + 1, x0);
  for (std::size_t j = 0; j < n; ++j) {
    const double step = steps ? (*steps)[j] : (x0[j] != 0.0 ? 0.05 * x0[j] : 0.00025);
    simplex[j + 1][j] += step;
  }
  std::vector<double> values(n + 1);
  for (std::size_t j = 0; j <= n; ++j) values[j] = cost(simplex[j]);

  std::vector<std::size_t> order(n + 1);
  const auto sort_simplex = [&] {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    std::vector<std::vector<double>> s(n + 1);
    std::vector<double> v(n + 1);
    for (std::size_t j = 0; j <= n; ++j) {
      s[j] = std::move(simplex[order[j]]);
      v[j] = values[order[j]];
    }
    simplex = std::move(s);
    values = std::move(v);
  };
  const auto along = [&](const std::vector<double>& from, const std::vector<double>& to, double t) {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = from[i] + t * (to[i] - from[i]);
    return x;
  };

  for (;;) {
    sort_simplex();
    double diameter = 0.0, spread = 0.0;
    for (std::size_t j = 1; j <= n; ++j) {
      for (std::size_t i = 0; i < n; ++i) diameter = std::max(diameter, std::abs(simplex[j][i] - simplex[0][i]));
      spread = std::max(spread, std::abs(values[j] - values[0]));
    }
    if (diameter <= settings.x_tolerance && spread <= settings.f_tolerance) {
      result.converged = true;
      break;
    }
    if (result.evaluations >= max_evals || result.iterations >= max_iters) break;
    ++result.iterations;

    std::vector<double> centroid(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      for (std::size_t i = 0; i < n; ++i) centroid[i] += simplex[j][i] / static_cast<double>(n);
    }
    const std::vector<double>& worst = simplex[n];
    std::vector<double> reflected = along(centroid, worst, -1.0);
    const double fr = cost(reflected);
    if (fr < values[0]) {
      std::vector<double> expanded = along(centroid, worst, -2.0);
      const double fe = cost(expanded);
      if (fe < fr) {
        simplex[n] = std::move(expanded);
        values[n] = fe;
      } else {
        simplex[n] = std::move(reflected);
        values[n] = fr;
      }
      continue;
    }
    if (fr < values[n - 1]) {
      simplex[n] = std::move(reflected);
      values[n] = fr;
      continue;
    }
    if (fr < values[n]) {
      std::vector<double> contracted = along(centroid, reflected, 0.5);
      const double fc = cost(contracted);
      if (fc <= fr) {
        simplex[n] = std::move(contracted);
        values[n] = fc;
        continue;
      }
    } else {
      std::vector<double> contracted = along(centroid, worst, 0.5);
      const double fc = cost(contracted);
      if (fc < values[n]) {
        simplex[n] = std::move(contracted);
        values[n] = fc;
        continue;
      }
    }
    for (std::size_t j = 1; j <= n; ++j) {
      simplex[j] = along(simplex[0], simplex[j], 0.5);
      values[j] = cost(simplex[j]);
    }
  }
  result.x = simplex[0];
  result.value = -values[0];
  return result;
}

FrozenQ::FrozenQ(const DiffusionModel& model, double sigma_eps, std::vector<FrozenSegment> segments,
                 std::vector<FrozenMarginal> marginals, unsigned threads)
    : model_(&model),
      sigma_eps_(sigma_eps),
      segments_(std::move(segments)),
      marginals_(std::move(marginals)),
      threads_(threads) {}

double FrozenQ::transition_part(std::span<const double> theta, GpeDiagnostics* diagnostics) const {
  std::unique_ptr<Diffusion> d;
  try {
    d = model_->bind(Parameters{std::vector<double>(theta.begin(), theta.end()), sigma_eps_});
  } catch (const DomainError&) {
    return kNegInf;
  }
  std::vector<double> terms(segments_.size());
  std::vector<GpeDiagnostics> local(segments_.size());
  parallel_for(segments_.size(), threads_, [&](std::size_t s) {
    const FrozenSegment& seg = segments_[s];
    double sum = 0.0;
    try {
      for (const GpeDraw& draw : seg.draws) sum += draw.value_at(*d, &local[s]);
    } catch (const std::runtime_error&) {
      // layer or rejection failure at this parameter
      terms[s] = kNegInf;
      return;
    } catch (const std::domain_error&) {
      terms[s] = kNegInf;
      return;
    }
    terms[s] = seg.weight * (sum / static_cast<double>(seg.draws.size()));
  });
  if (diagnostics) {
    for (const GpeDiagnostics& g : local) *diagnostics += g;
  }
  double total = 0.0;
  for (double t : terms) total += t;
  return std::isnan(total) ? kNegInf : total;
}

double FrozenQ::observation_part(std::span<const double>) const {
  double total = 0.0;
  for (const FrozenMarginal& m : marginals_) total += m.weight * log_observation_density(m.x, m.y, sigma_eps_);
  return total;
}

double FrozenQ::operator()(std::span<const double> theta, GpeDiagnostics* diagnostics) const {
  return transition_part(theta, diagnostics) + observation_part(theta);
}

FrozenQBuild build_frozen_q(const DiffusionModel& model, std::span<const Observation> data,
                            const Parameters& theta_prime, const SmootherSettings& settings, RandomStream stream) {
  if (data.size() < 2) throw std::invalid_argument("smoother: need at least two observations");
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data[i].k != static_cast<int>(i)) throw std::invalid_argument("smoother: observation times must be 0, 1, ..., n");
  }
  if (settings.lag < 1) throw std::invalid_argument("smoother: lag must be at least 1");
  if (settings.alpha_bar < 1) throw std::invalid_argument("smoother: alpha_bar must be at least 1");

  const std::shared_ptr<const Diffusion> d = model.bind(theta_prime);
  const std::string_view name = settings.proposal.empty() ? default_proposal_name(model.name()) : settings.proposal;
  const std::unique_ptr<ProposalKernel> proposal = make_proposal(name, d);
  FilterSettings fs;
  fs.particles = settings.particles;
  fs.alpha = settings.alpha;
  fs.scheme = settings.scheme;
  fs.gpe = settings.gpe;
  fs.threads = settings.threads;

  const int n = static_cast<int>(data.size()) - 1;
  ParticleFilter filter(*d, *proposal, data, fs, stream.fork(kTagFilter), std::min(settings.lag, n));
  std::vector<FrozenSegment> segments;
  std::vector<FrozenMarginal> marginals;

  const auto harvest = [&] {
    const std::vector<int> transitions = finalised_transitions(filter.time(), n, settings.lag);
    const std::vector<int> observations = finalised_observations(filter.time(), n, settings.lag);
    if (transitions.empty() && observations.empty()) return;
    const std::vector<double> w = filter.current().normalized_weights();
    for (int k : transitions) {
      const std::vector<std::size_t> from = filter.lineage(k), to = filter.lineage(k + 1);
      const Generation& gk = filter.generation(k);
      const Generation& gk1 = filter.generation(k + 1);
      // particles sharing a lineage segment share its draws
      std::map<std::pair<std::size_t, std::size_t>, std::size_t> index;
      const std::size_t first = segments.size();
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (w[i] == 0.0) continue;
        const auto [it, inserted] = index.try_emplace({from[i], to[i]}, segments.size());
        if (inserted) segments.push_back({k, 0.0, gk.states[from[i]], gk1.states[to[i]], {}});
        segments[it->second].weight += w[i];
      }
      const RandomStream draws = stream.fork(kTagDraws, static_cast<std::uint64_t>(k));
      for (std::size_t s = first; s < segments.size(); ++s) {
        for (int l = 0; l < settings.alpha_bar; ++l) {
          segments[s].draws.emplace_back(GpeKind::log_density, Coordinates::original, segments[s].x, segments[s].x_next,
                                         1.0, draws.fork(s - first, static_cast<std::uint64_t>(l)), settings.gpe);
        }
      }
    }
    for (int j : observations) {
      const std::vector<std::size_t> at = filter.lineage(j);
      const Generation& gj = filter.generation(j);
      std::map<std::size_t, std::size_t> index;
      for (std::size_t i = 0; i < w.size(); ++i) {
        if (w[i] == 0.0) continue;
        const auto [it, inserted] = index.try_emplace(at[i], marginals.size());
        if (inserted) marginals.push_back({j, 0.0, gj.states[at[i]], data[static_cast<std::size_t>(j)].y});
        marginals[it->second].weight += w[i];
      }
    }
  };

  harvest();
  while (!filter.done()) {
    filter.step();
    harvest();
  }
  return {FrozenQ(model, theta_prime.sigma_eps, std::move(segments), std::move(marginals), settings.threads),
          filter.diagnostics()};
}

std::size_t particles_for_iteration(std::size_t initial, int iteration) {
  if (iteration < 1) throw std::invalid_argument("iterations are numbered from 1");
  return static_cast<std::size_t>(std::ceil(static_cast<double>(initial) * std::sqrt(static_cast<double>(iteration))));
}

int default_lag(std::string_view model_name, int n) {
  if (model_name == "log_growth") return 40;
  if (model_name == "genetics") return 20;
  return std::max(1, static_cast<int>(std::ceil(5.0 * std::log(std::max(n, 1)))));
}

void validate(const EmConfig& config, const DiffusionModel& model) {
  if (config.iterations < 0) throw std::invalid_argument("em: iterations must be nonnegative");
  if (config.initial_particles < 1) throw std::invalid_argument("em: initial particle count must be at least 1");
  if (config.lag && *config.lag < 1) throw std::invalid_argument("em: lag must be at least 1");
  if (config.alpha < 1 || config.alpha_bar < 1) throw std::invalid_argument("em: alpha and alpha_bar must be at least 1");
  if (config.threads < 1) throw std::invalid_argument("em: threads must be at least 1");
  if (!(config.sigma_eps > 0.0)) throw std::invalid_argument("em: sigma_eps must be positive");
  const Parameters theta0{config.theta0, config.sigma_eps};
  model.validate(theta0);
  if (!config.proposal.empty()) (void)make_proposal(config.proposal, model.bind(theta0));
}

EmTrace mcem_run(const DiffusionModel& model, std::span<const Observation> data, const EmConfig& config,
                 RandomStream stream, const std::function<void(const EmIteration&)>& on_iteration) {
  validate(config, model);
  if (data.size() < 2) throw std::invalid_argument("em: need at least two observations");
  const int n = static_cast<int>(data.size()) - 1;
  const int lag = config.lag.value_or(default_lag(model.name(), n));
  const std::vector<bool> positive = model.positive_parameters();
  const std::size_t dim = model.dim();

  // optimise positive components on the log scale
  const auto to_search = [&](const std::vector<double>& theta) {
    std::vector<double> z(theta);
    for (std::size_t i = 0; i < dim; ++i) {
      if (positive[i]) z[i] = std::log(theta[i]);
    }
    return z;
  };
  const auto from_search = [&](const std::vector<double>& z) {
    std::vector<double> theta(z);
    for (std::size_t i = 0; i < dim; ++i) {
      if (positive[i]) theta[i] = std::exp(z[i]);
    }
    return theta;
  };

  EmTrace trace;
  trace.theta = config.theta0;
  for (int j = 1; j <= config.iterations; ++j) {
    const auto started = std::chrono::steady_clock::now();
    try {
      EmIteration it;
      it.iteration = j;
      it.particles = particles_for_iteration(config.initial_particles, j);
      it.lag = lag;
      SmootherSettings ss;
      ss.particles = it.particles;
      ss.lag = lag;
      ss.alpha = config.alpha;
      ss.alpha_bar = config.alpha_bar;
      ss.proposal = config.proposal;
      ss.scheme = config.scheme;
      ss.gpe = config.gpe;
      ss.threads = config.threads;
      const FrozenQBuild build =
          build_frozen_q(model, data, Parameters{trace.theta, config.sigma_eps}, ss, stream.fork(static_cast<std::uint64_t>(j)));
      it.diagnostics = build.filter_diagnostics;

      std::vector<double> steps(dim);
      for (std::size_t i = 0; i < dim; ++i) {
        steps[i] = positive[i] ? std::log(1.05) : (trace.theta[i] != 0.0 ? 0.05 * trace.theta[i] : 0.00025);
      }
      const auto objective = [&](const std::vector<double>& z) { return build.q(from_search(z), &it.diagnostics); };
      const NelderMeadResult best = nelder_mead_maximize(objective, to_search(trace.theta), config.nelder_mead, steps);
      if (!std::isfinite(best.value)) throw NumericalFailure("intermediate quantity is not finite anywhere on the simplex");
      it.theta = from_search(best.x);
      it.q_value = best.value;
      it.evaluations = best.evaluations;
      if (config.timing) {
        it.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
      }
      trace.theta = it.theta;
      trace.iterations.push_back(it);
      if (on_iteration) on_iteration(trace.iterations.back());
    } catch (const std::invalid_argument& e) {
      trace.failure = "iteration " + std::to_string(j) + ": " + e.what();
      trace.numerical_failure = false;
      break;
    } catch (const std::exception& e) {
      trace.failure = "iteration " + std::to_string(j) + ": " + e.what();
      trace.numerical_failure = true;
      break;
    }
  }
  return trace;
}

void write_trace_csv(std::ostream& out, const EmTrace& trace, std::size_t dim) {
  out << "iter,N,lag";
  for (std::size_t i = 1; i <= dim; ++i) out << ",param_" << i;
  out << ",Q_value,wall_ms\n";
  for (const EmIteration& it : trace.iterations) {
    out << it.iteration << ',' << it.particles << ',' << it.lag;
    for (double v : it.theta) out << ',' << format_double(v);
    out << ',' << format_double(it.q_value) << ',';
    if (it.wall_ms) {
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.3f", *it.wall_ms);
      out << buf;
    }
    out << '\n';
  }
}

}  // namespace gpesmc
