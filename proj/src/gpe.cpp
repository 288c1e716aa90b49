#include "gpesmc/gpe.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <vector>

namespace gpesmc {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

constexpr std::uint64_t kTagSkeleton = 1;
constexpr std::uint64_t kTagPoisson = 2;
constexpr std::uint64_t kTagPsi = 3;
constexpr std::uint64_t kTagAttempt = 4;
constexpr std::uint64_t kTagMidpoint = 5;
constexpr std::uint64_t kTagLeft = 6;
constexpr std::uint64_t kTagRight = 7;

// log of N_t(u_end - u) exp(A(u_end) - A(u) - l t): the Girsanov factor without the path integral
double log_girsanov_base(const Diffusion& d, double u, double u_end, double t) {
  return log_gaussian_kernel(u_end - u, t) + d.antiderivative(u_end) - d.antiderivative(u) - d.lower_bound() * t;
}

PhiBounds checked_bounds(const Diffusion& d, const PathRange& range, GpeDiagnostics* diagnostics) {
  try {
    const PhiBounds b = d.phi_bounds(range);
    if (!std::isfinite(b.upper) || !(b.lower <= b.upper)) throw LayerError("drift functional bounds are not finite");
    return b;
  } catch (const LayerError&) {
    if (diagnostics) ++diagnostics->layer_invalidations;
    throw;
  }
}

// Generalised Poisson estimator of log E[exp(-int phi)] along a proposal bridge.
double log_poisson_functional(const Diffusion& d, double u, double u_end, double t, const RandomStream& key,
                              const GpeSettings& settings, GpeDiagnostics* diagnostics) {
  BridgeSkeleton skeleton = propose_bridge(d, u, u_end, t, key.fork(kTagSkeleton), settings);
  const PhiBounds b = checked_bounds(d, skeleton.range(), diagnostics);
  const double rate = poisson_rate(b, t, settings);
  double log_value = (rate - b.upper) * t;
  // points of a unit-rate process on [0, t] x [0, inf) with mark below the rate
  RandomStream marks = key.fork(kTagPoisson);
  std::vector<double> times;
  double mark = 0.0;
  for (;;) {
    mark += marks.exponential() / t;
    if (!(mark < rate)) break;
    times.push_back(t * marks.uniform());
  }
  // revealing in time order keeps skeleton insertion cheap
  std::sort(times.begin(), times.end());
  if (diagnostics) diagnostics->poisson_points += times.size();
  for (double s : times) {
    const double factor = (b.upper - d.phi(skeleton.value_at(s))) / rate;
    if (!(factor > 0.0)) return kNegInf;
    log_value += std::log(factor);
  }
  return log_value;
}

std::optional<double> try_log_density(const Diffusion& d, double u, double u_end, double t, const RandomStream& key,
                                      const GpeSettings& settings, GpeDiagnostics* diagnostics) {
  for (int a = 0; a < settings.max_rejection_attempts; ++a) {
    const RandomStream attempt_key = key.fork(kTagAttempt, static_cast<std::uint64_t>(a));
    BridgeProposal p = attempt_diffusion_bridge(d, u, u_end, t, attempt_key, settings, diagnostics);
    if (!p.accepted) continue;
    const double psi = t * attempt_key.fork(kTagPsi).uniform();
    return log_girsanov_base(d, u, u_end, t) - t * d.phi(p.skeleton.value_at(psi));
  }
  return std::nullopt;
}

// Log-density estimate; when rejection sampling stalls the horizon is split at a
// midpoint drawn from the Brownian bridge and the halves composed.
double log_density_tilde(const Diffusion& d, double u, double u_end, double t, const RandomStream& key,
                         const GpeSettings& settings, GpeDiagnostics* diagnostics, int depth) {
  if (const auto v = try_log_density(d, u, u_end, t, key, settings, diagnostics)) return *v;
  if (depth >= settings.max_bisection_depth) {
    throw GpeError("diffusion bridge rejection sampling exceeded its attempt cap");
  }
  if (diagnostics) ++diagnostics->fallback_bisections;
  const double half = 0.5 * t;
  RandomStream mid_stream = key.fork(kTagMidpoint);
  const double z = 0.5 * (u + u_end) + std::sqrt(0.5 * half) * mid_stream.normal();
  const double log_proposal = log_gaussian_kernel(z - u, half) + log_gaussian_kernel(u_end - z, half) -
                              log_gaussian_kernel(u_end - u, t);
  return log_density_tilde(d, u, z, half, key.fork(kTagLeft), settings, diagnostics, depth + 1) +
         log_density_tilde(d, z, u_end, half, key.fork(kTagRight), settings, diagnostics, depth + 1) - log_proposal;
}

double log_density_estimate(const Diffusion& d, double u, double u_end, double t, const RandomStream& key,
                            const GpeSettings& settings, GpeDiagnostics* diagnostics) {
  if (diagnostics) ++diagnostics->density_draws;
  return log_girsanov_base(d, u, u_end, t) + log_poisson_functional(d, u, u_end, t, key, settings, diagnostics);
}

}  // namespace

double poisson_rate(const PhiBounds& bounds, double t, const GpeSettings& settings) {
  const double full = bounds.upper - bounds.lower;
  return std::min(full, settings.max_expected_points / t);
}

GpeDiagnostics& GpeDiagnostics::operator+=(const GpeDiagnostics& other) {
  density_draws += other.density_draws;
  log_density_draws += other.log_density_draws;
  poisson_points += other.poisson_points;
  rejections += other.rejections;
  layer_invalidations += other.layer_invalidations;
  fallback_bisections += other.fallback_bisections;
  return *this;
}

double log_gaussian_kernel(double dx, double t) {
  return -0.5 * std::log(2.0 * std::numbers::pi * t) - dx * dx / (2.0 * t);
}

BridgeSkeleton propose_bridge(const Diffusion& d, double u, double u_end, double t, RandomStream stream,
                              const GpeSettings& settings) {
  switch (d.layer_kind()) {
    case LayerKind::none:
      return BridgeSkeleton::brownian(u, u_end, t, stream);
    case LayerKind::minimum:
      return BridgeSkeleton::with_extremum(u, u_end, t, ExtremumKind::minimum, stream);
    case LayerKind::two_sided:
      return BridgeSkeleton::layered(u, u_end, t, settings.layers, stream);
  }
  throw std::logic_error("unknown layer kind");
}

BridgeProposal attempt_diffusion_bridge(const Diffusion& d, double u, double u_end, double t, RandomStream stream,
                                        const GpeSettings& settings, GpeDiagnostics* diagnostics) {
  BridgeProposal p{propose_bridge(d, u, u_end, t, stream.fork(kTagSkeleton), settings), {}, true};
  p.bounds = checked_bounds(d, p.skeleton.range(), diagnostics);
  const double rate = p.bounds.upper - p.bounds.lower;
  // accept iff no point of a unit-rate marked process lies under the graph of phi - phi_lower
  RandomStream marks = stream.fork(kTagPoisson);
  double mark = 0.0;
  for (;;) {
    mark += marks.exponential() / t;
    if (!(mark < rate)) break;
    const double s = t * marks.uniform();
    if (diagnostics) ++diagnostics->poisson_points;
    if (d.phi(p.skeleton.value_at(s)) - p.bounds.lower > mark) {
      p.accepted = false;
      if (diagnostics) ++diagnostics->rejections;
      break;
    }
  }
  return p;
}

BridgeSkeleton sample_diffusion_bridge_skeleton(const Diffusion& d, double u, double u_end, double t,
                                                RandomStream stream, const GpeSettings& settings,
                                                GpeDiagnostics* diagnostics) {
  for (int a = 0; a < settings.max_rejection_attempts; ++a) {
    BridgeProposal p =
        attempt_diffusion_bridge(d, u, u_end, t, stream.fork(kTagAttempt, static_cast<std::uint64_t>(a)), settings,
                                 diagnostics);
    if (p.accepted) return std::move(p.skeleton);
  }
  throw GpeError("diffusion bridge rejection sampling exceeded its attempt cap");
}

GpeDraw::GpeDraw(GpeKind kind, Coordinates coordinates, double x, double x_end, double t, RandomStream stream,
                 GpeSettings settings)
    : kind_(kind), coordinates_(coordinates), x_(x), x_end_(x_end), t_(t), stream_(stream), settings_(settings) {
  if (!(t > 0.0)) throw std::invalid_argument("gpe: horizon must be positive");
  if (settings.max_rejection_attempts < 1) throw std::invalid_argument("gpe: attempt cap must be at least 1");
}

double GpeDraw::log_value_at(const Diffusion& d, GpeDiagnostics* diagnostics) const {
  double u = x_, u_end = x_end_, log_jacobian = 0.0;
  if (coordinates_ == Coordinates::original) {
    u = d.eta(x_);
    u_end = d.eta(x_end_);
    log_jacobian = std::log(std::abs(d.eta_prime(x_end_)));
  }
  if (kind_ == GpeKind::density) {
    return log_density_estimate(d, u, u_end, t_, stream_, settings_, diagnostics) + log_jacobian;
  }
  if (diagnostics) ++diagnostics->log_density_draws;
  return log_density_tilde(d, u, u_end, t_, stream_, settings_, diagnostics, 0) + log_jacobian;
}

double GpeDraw::value_at(const Diffusion& d, GpeDiagnostics* diagnostics) const {
  const double v = log_value_at(d, diagnostics);
  return kind_ == GpeKind::density ? std::exp(v) : v;
}

namespace {

GpeEstimate make_estimate(GpeKind kind, Coordinates coordinates, const Diffusion& d, double x, double x_end, double t,
                          RandomStream stream, const GpeSettings& settings, GpeDiagnostics* diagnostics) {
  GpeDraw draw(kind, coordinates, x, x_end, t, stream, settings);
  const double value = draw.value_at(d, diagnostics);
  return {value, draw};
}

}  // namespace

GpeEstimate estimate_q_tilde(const Diffusion& d, double u, double u_end, double t, RandomStream stream,
                             const GpeSettings& settings, GpeDiagnostics* diagnostics) {
  return make_estimate(GpeKind::density, Coordinates::transformed, d, u, u_end, t, stream, settings, diagnostics);
}

GpeEstimate estimate_q(const Diffusion& d, double x, double x_end, double t, RandomStream stream,
                       const GpeSettings& settings, GpeDiagnostics* diagnostics) {
  return make_estimate(GpeKind::density, Coordinates::original, d, x, x_end, t, stream, settings, diagnostics);
}

GpeEstimate estimate_log_q_tilde(const Diffusion& d, double u, double u_end, double t, RandomStream stream,
                                 const GpeSettings& settings, GpeDiagnostics* diagnostics) {
  return make_estimate(GpeKind::log_density, Coordinates::transformed, d, u, u_end, t, stream, settings,
                       diagnostics);
}

GpeEstimate estimate_log_q(const Diffusion& d, double x, double x_end, double t, RandomStream stream,
                           const GpeSettings& settings, GpeDiagnostics* diagnostics) {
  return make_estimate(GpeKind::log_density, Coordinates::original, d, x, x_end, t, stream, settings, diagnostics);
}

double reevaluate(const GpeDraw& draw, const Diffusion& d, GpeDiagnostics* diagnostics) {
  return draw.value_at(d, diagnostics);
}

}  // namespace gpesmc
