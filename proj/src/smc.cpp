#include "gpesmc/smc.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <numbers>
#include <numeric>
#include <string>
#include <thread>

#include <boost/math/distributions/normal.hpp>

namespace gpesmc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

constexpr std::uint64_t kTagSelect = 1;
constexpr std::uint64_t kTagParticle = 2;
constexpr std::uint64_t kTagPropose = 3;
constexpr std::uint64_t kTagGpe = 4;
constexpr std::uint64_t kTagInitial = 5;

double log_mean_exp(std::span<const double> xs) {
  const double top = *std::max_element(xs.begin(), xs.end());
  if (top == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : xs) s += std::exp(x - top);
  return top + std::log(s / static_cast<double>(xs.size()));
}

// Weights proportional to exp(log_weights), scaled so the largest is one.
std::vector<double> relative_weights(std::span<const double> log_weights) {
  const double top = *std::max_element(log_weights.begin(), log_weights.end());
  if (!(top > kNegInf) || std::isnan(top)) throw NumericalFailure("all particle weights are zero");
  std::vector<double> w(log_weights.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(log_weights[i] - top);
  return w;
}

std::size_t sample_index(std::span<const double> cumulative, RandomStream& rng) {
  const double target = rng.uniform() * cumulative.back();
  const auto it = std::upper_bound(cumulative.begin(), cumulative.end(), target);
  auto i = static_cast<std::size_t>(it - cumulative.begin());
  // skip zero-weight entries that share the cumulative value
  while (i + 1 < cumulative.size() && (i == 0 ? cumulative[0] : cumulative[i] - cumulative[i - 1]) == 0.0) ++i;
  return std::min(i, cumulative.size() - 1);
}

std::vector<double> checked_cumulative(std::span<const double> weights) {
  std::vector<double> c(weights.size());
  double s = 0.0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (!(weights[i] >= 0.0) || !std::isfinite(weights[i])) throw NumericalFailure("weights must be finite and nonnegative");
    s += weights[i];
    c[i] = s;
  }
  if (!(s > 0.0)) throw NumericalFailure("all selection weights are zero");
  return c;
}

double truncated_normal(double mean, double sd, const Interval& domain, RandomStream& rng) {
  if (sd == 0.0) {
    if (!domain.contains(mean)) throw DomainError("initial state outside the state domain");
    return mean;
  }
  for (int i = 0; i < 64; ++i) {
    const double x = mean + sd * rng.normal();
    if (domain.contains(x)) return x;
  }
  // inverse CDF on the side with the lighter tail, for accuracy far from the mean
  const boost::math::normal_distribution<double> unit;
  const double a = (domain.lo - mean) / sd;
  const double b = (domain.hi - mean) / sd;
  const double u = rng.uniform();
  double z;
  if (a > 0.0) {
    const double qa = boost::math::cdf(boost::math::complement(unit, a));
    const double qb = std::isfinite(b) ? boost::math::cdf(boost::math::complement(unit, b)) : 0.0;
    z = boost::math::quantile(boost::math::complement(unit, qb + u * (qa - qb)));
  } else {
    const double pa = std::isfinite(a) ? boost::math::cdf(unit, a) : 0.0;
    const double pb = std::isfinite(b) ? boost::math::cdf(unit, b) : 1.0;
    z = boost::math::quantile(unit, pa + u * (pb - pa));
  }
  const double x = std::clamp(mean + sd * z, std::nextafter(domain.lo, domain.hi), std::nextafter(domain.hi, domain.lo));
  return x;
}

}  // namespace

std::vector<std::size_t> select_multinomial(std::span<const double> weights, std::size_t n, RandomStream& rng) {
  const std::vector<double> cumulative = checked_cumulative(weights);
  std::vector<std::size_t> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = sample_index(cumulative, rng);
  return out;
}

std::vector<std::size_t> select_residual(std::span<const double> weights, std::size_t n, RandomStream& rng) {
  const std::vector<double> cumulative = checked_cumulative(weights);
  const double total = cumulative.back();
  std::vector<std::size_t> out;
  out.reserve(n);
  std::vector<double> residual(weights.size());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double expected = static_cast<double>(n) * (weights[i] / total);
    // tolerate rounding just below an integer
    const double copies = std::floor(expected + 1e-9);
    residual[i] = std::max(0.0, expected - copies);
    for (std::size_t c = 0; c < static_cast<std::size_t>(copies) && out.size() < n; ++c) out.push_back(i);
  }
  const std::size_t remaining = n - out.size();
  if (remaining > 0) {
    double sum = 0.0;
    for (double r : residual) sum += r;
    if (!(sum > 0.0)) residual.assign(weights.begin(), weights.end());
    const std::vector<std::size_t> extra = select_multinomial(residual, remaining, rng);
    out.insert(out.end(), extra.begin(), extra.end());
  }
  return out;
}

std::vector<std::size_t> select(SelectionScheme scheme, std::span<const double> weights, std::size_t n,
                                RandomStream& rng) {
  return scheme == SelectionScheme::residual ? select_residual(weights, n, rng) : select_multinomial(weights, n, rng);
}

EulerStudentProposal::EulerStudentProposal(std::shared_ptr<const Diffusion> diffusion, int dof)
    : diffusion_(std::move(diffusion)), dof_(dof) {
  if (dof < 1) throw std::invalid_argument("student_t proposal: degrees of freedom must be positive");
  const double nu = dof;
  log_normaliser_ = std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) - 0.5 * std::log(nu * std::numbers::pi);
}

double EulerStudentProposal::sample(double x, double, RandomStream& rng) const {
  return x + diffusion_->drift(x) + std::abs(diffusion_->diffusion(x)) * rng.student_t(dof_);
}

double EulerStudentProposal::log_density(double x, double x_next, double) const {
  const double scale = std::abs(diffusion_->diffusion(x));
  const double z = (x_next - x - diffusion_->drift(x)) / scale;
  return log_normaliser_ - std::log(scale) - 0.5 * (dof_ + 1.0) * std::log1p(z * z / dof_);
}

EulerGaussianProposal::EulerGaussianProposal(std::shared_ptr<const Diffusion> diffusion)
    : diffusion_(std::move(diffusion)) {}

double EulerGaussianProposal::sample(double x, double, RandomStream& rng) const {
  return x + diffusion_->drift(x) + std::abs(diffusion_->diffusion(x)) * rng.normal();
}

double EulerGaussianProposal::log_density(double x, double x_next, double) const {
  return log_gaussian_kernel(x_next - x - diffusion_->drift(x), 1.0) - std::log(std::abs(diffusion_->diffusion(x)));
}

UniformProposal::UniformProposal(double lo, double hi) : lo_(lo), hi_(hi) {
  if (!(std::isfinite(lo) && std::isfinite(hi) && lo < hi)) throw std::invalid_argument("uniform proposal: needs a bounded interval");
}

double UniformProposal::sample(double, double, RandomStream& rng) const { return lo_ + (hi_ - lo_) * rng.uniform(); }

double UniformProposal::log_density(double, double x_next, double) const {
  return (x_next >= lo_ && x_next <= hi_) ? -std::log(hi_ - lo_) : kNegInf;
}

std::unique_ptr<ProposalKernel> make_proposal(std::string_view name, std::shared_ptr<const Diffusion> diffusion) {
  if (name == "student_t") return std::make_unique<EulerStudentProposal>(std::move(diffusion));
  if (name == "euler_gaussian") return std::make_unique<EulerGaussianProposal>(std::move(diffusion));
  if (name == "uniform") {
    const Interval domain = diffusion->state_domain();
    return std::make_unique<UniformProposal>(domain.lo, domain.hi);
  }
  throw std::invalid_argument("unknown proposal '" + std::string(name) + "'");
}

std::string_view default_proposal_name(std::string_view model_name) {
  if (model_name == "log_growth") return "student_t";
  if (model_name == "genetics") return "uniform";
  return "euler_gaussian";
}

std::vector<double> Generation::normalized_weights() const {
  std::vector<double> w = relative_weights(log_weights);
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  for (double& x : w) x /= total;
  return w;
}

void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn) {
  const unsigned workers = static_cast<unsigned>(std::min<std::size_t>(std::max(1u, threads), n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  const auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n) return;
      try {
        fn(i);
      } catch (...) {
        const std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next.store(n);
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) pool.emplace_back(work);
  for (std::thread& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

Generation initial_generation(const Diffusion& diffusion, const Observation& y0, const FilterSettings& settings,
                              RandomStream stream) {
  if (settings.particles < 1) throw std::invalid_argument("filter: need at least one particle");
  const double sigma_eps = diffusion.parameters().sigma_eps;
  const double mean = settings.initial_mean.value_or(y0.y);
  const double sd = settings.initial_sd.value_or(sigma_eps);
  const Interval domain = diffusion.state_domain();
  Generation g;
  g.k = y0.k;
  g.states.resize(settings.particles);
  g.log_weights.resize(settings.particles);
  for (std::size_t i = 0; i < settings.particles; ++i) {
    RandomStream rng = stream.fork(kTagInitial, i);
    g.states[i] = truncated_normal(mean, sd, domain, rng);
    g.log_weights[i] = log_observation_density(g.states[i], y0.y, sigma_eps);
  }
  (void)relative_weights(g.log_weights);
  return g;
}

Generation gpeaps_step(const Generation& previous, const Observation& y_next, const Diffusion& diffusion,
                       const ProposalKernel& proposal, const FilterSettings& settings, RandomStream stream,
                       GpeDiagnostics* diagnostics) {
  if (settings.alpha < 1) throw std::invalid_argument("filter: alpha must be at least 1");
  const std::size_t n = settings.particles;
  const std::size_t m = previous.states.size();

  std::vector<double> selection_log(m);
  for (std::size_t j = 0; j < m; ++j) {
    selection_log[j] = previous.log_weights[j] + proposal.log_adjustment(previous.states[j], y_next.y);
  }
  RandomStream select_rng = stream.fork(kTagSelect);
  const std::vector<double> selection_weights = relative_weights(selection_log);

  Generation next;
  next.k = y_next.k;
  next.ancestors = select(settings.scheme, selection_weights, n, select_rng);
  next.states.resize(n);
  next.log_weights.resize(n);
  std::vector<GpeDiagnostics> local(n);
  const Interval domain = diffusion.state_domain();
  const double sigma_eps = diffusion.parameters().sigma_eps;

  parallel_for(n, settings.threads, [&](std::size_t i) {
    const RandomStream particle = stream.fork(kTagParticle, i);
    RandomStream propose = particle.fork(kTagPropose);
    const double x = previous.states[next.ancestors[i]];
    const double x_next = proposal.sample(x, y_next.y, propose);
    next.states[i] = x_next;
    if (!domain.contains(x_next)) {
      next.log_weights[i] = kNegInf;
      return;
    }
    std::vector<double> draws(static_cast<std::size_t>(settings.alpha));
    for (int l = 0; l < settings.alpha; ++l) {
      const GpeDraw draw(GpeKind::density, Coordinates::original, x, x_next, 1.0,
                         particle.fork(kTagGpe, static_cast<std::uint64_t>(l)), settings.gpe);
      draws[static_cast<std::size_t>(l)] = draw.log_value_at(diffusion, &local[i]);
    }
    next.log_weights[i] = log_observation_density(x_next, y_next.y, sigma_eps) -
                          proposal.log_adjustment(x, y_next.y) + log_mean_exp(draws) -
                          proposal.log_density(x, x_next, y_next.y);
  });

  if (diagnostics) {
    for (const GpeDiagnostics& d : local) *diagnostics += d;
  }
  const double top = *std::max_element(next.log_weights.begin(), next.log_weights.end());
  if (!(top > kNegInf) || std::isnan(top)) {
    throw NumericalFailure("all particle weights are zero at time " + std::to_string(next.k));
  }
  return next;
}

ParticleFilter::ParticleFilter(const Diffusion& diffusion, const ProposalKernel& proposal,
                               std::span<const Observation> data, FilterSettings settings, RandomStream stream,
                               int window)
    : diffusion_(diffusion),
      proposal_(proposal),
      data_(data),
      settings_(std::move(settings)),
      stream_(stream),
      window_(window) {
  if (data.empty()) throw std::invalid_argument("filter: no observations");
  if (window < 0) throw std::invalid_argument("filter: window must be nonnegative");
  history_.push_back(initial_generation(diffusion_, data_[0], settings_, stream_.fork(0)));
}

void ParticleFilter::step() {
  if (done()) throw std::logic_error("filter: already at the last observation");
  const auto k = static_cast<std::size_t>(time() - data_[0].k) + 1;
  history_.push_back(gpeaps_step(current(), data_[k], diffusion_, proposal_, settings_,
                                 stream_.fork(static_cast<std::uint64_t>(k)), &diagnostics_));
  while (static_cast<int>(history_.size()) > window_ + 1) history_.pop_front();
}

const Generation& ParticleFilter::generation(int k) const {
  const int offset = k - history_.front().k;
  if (offset < 0 || offset >= static_cast<int>(history_.size())) {
    throw std::out_of_range("filter: generation " + std::to_string(k) + " is outside the retained window");
  }
  return history_[static_cast<std::size_t>(offset)];
}

std::vector<std::size_t> ParticleFilter::lineage(int k) const {
  (void)generation(k);
  std::vector<std::size_t> idx(current().states.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (int g = time(); g > k; --g) {
    const Generation& gen = generation(g);
    for (std::size_t& i : idx) i = gen.ancestors[i];
  }
  return idx;
}

std::vector<int> finalised_transitions(int time, int horizon, int lag) {
  if (lag < 1) throw std::invalid_argument("fixed lag must be at least 1");
  std::vector<int> out;
  if (time < horizon) {
    if (time - lag >= 0) out.push_back(time - lag);
  } else if (time == horizon) {
    for (int k = std::max(0, horizon - lag); k < horizon; ++k) out.push_back(k);
  }
  return out;
}

std::vector<int> finalised_observations(int time, int horizon, int lag) {
  if (lag < 1) throw std::invalid_argument("fixed lag must be at least 1");
  std::vector<int> out;
  if (time < horizon) {
    if (time - lag >= 0) out.push_back(time - lag);
  } else if (time == horizon) {
    for (int j = std::max(0, horizon - lag); j <= horizon; ++j) out.push_back(j);
  }
  return out;
}

FixedLagAccumulator::FixedLagAccumulator(int horizon, int lag) : horizon_(horizon), lag_(lag) {
  if (lag < 1) throw std::invalid_argument("fixed lag must be at least 1");
}

void FixedLagAccumulator::update(const ParticleFilter& filter, const Statistic& statistic) {
  const std::vector<int> due = finalised_transitions(filter.time(), horizon_, lag_);
  if (due.empty()) return;
  if (filter.window() < std::min(lag_, horizon_)) throw std::invalid_argument("filter window shorter than the lag");
  const std::vector<double> w = filter.current().normalized_weights();
  for (int k : due) {
    const std::vector<std::size_t> from = filter.lineage(k);
    const std::vector<std::size_t> to = filter.lineage(k + 1);
    const Generation& gk = filter.generation(k);
    const Generation& gk1 = filter.generation(k + 1);
    double term = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      if (w[i] == 0.0) continue;
      term += w[i] * statistic(k, i, gk.states[from[i]], gk1.states[to[i]]);
    }
    total_ += term;
    ++finalised_;
  }
}

FilterHistory run_filter(const Diffusion& diffusion, const ProposalKernel& proposal, std::span<const Observation> data,
                         const FilterSettings& settings, RandomStream stream) {
  ParticleFilter filter(diffusion, proposal, data, settings, stream, 0);
  FilterHistory history;
  history.generations.push_back(filter.current());
  while (!filter.done()) {
    filter.step();
    history.generations.push_back(filter.current());
  }
  history.diagnostics = filter.diagnostics();
  return history;
}

std::vector<double> ffbs_sample(const FilterHistory& history, const Diffusion& diffusion, RandomStream stream,
                                const GpeSettings& settings, GpeDiagnostics* diagnostics) {
  const auto& gens = history.generations;
  if (gens.empty()) throw std::invalid_argument("ffbs: empty filter history");
  const std::size_t n = gens.size() - 1;
  std::vector<double> trajectory(n + 1);

  RandomStream last = stream.fork(n);
  std::vector<double> cumulative = checked_cumulative(relative_weights(gens[n].log_weights));
  trajectory[n] = gens[n].states[sample_index(cumulative, last)];

  for (std::size_t k = n; k-- > 0;) {
    const Generation& g = gens[k];
    const RandomStream step = stream.fork(k);
    std::vector<double> log_backward(g.states.size(), kNegInf);
    for (std::size_t i = 0; i < g.states.size(); ++i) {
      if (g.log_weights[i] == kNegInf) continue;
      const GpeDraw draw(GpeKind::density, Coordinates::original, g.states[i], trajectory[k + 1],
                         static_cast<double>(gens[k + 1].k - g.k), step.fork(kTagGpe, i), settings);
      log_backward[i] = g.log_weights[i] + draw.log_value_at(diffusion, diagnostics);
    }
    const double top = *std::max_element(log_backward.begin(), log_backward.end());
    if (!(top > kNegInf)) {
      throw NumericalFailure("ffbs: all backward weights are zero at time " + std::to_string(g.k));
    }
    RandomStream pick = step.fork(kTagSelect);
    cumulative = checked_cumulative(relative_weights(log_backward));
    trajectory[k] = g.states[sample_index(cumulative, pick)];
  }
  return trajectory;
}

}  // namespace gpesmc
