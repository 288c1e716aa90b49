#include "gpesmc/models.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include <unsupported/Eigen/Polynomials>

#include "gpesmc/random.hpp"

namespace gpesmc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Relative slack added to computed phi bounds to absorb rounding.
constexpr double kBoundSlack = 1e-10;

void require_domain(bool ok, const char* what) {
  if (!ok) throw DomainError(what);
}

// ---------------------------------------------------------------------------
// log-growth

class LogGrowthDiffusion final : public Diffusion {
 public:
  explicit LogGrowthDiffusion(const Parameters& theta)
      : Diffusion(theta),
        kappa_(theta.values[0]),
        capacity_(theta.values[1]),
        sigma_(theta.values[2]),
        a_(sigma_ / 2.0 - kappa_ / sigma_),
        b_(kappa_ / (sigma_ * capacity_)) {}

  Interval state_domain() const override { return {0.0, kInf}; }
  double drift(double x) const override { return kappa_ * x * (1.0 - x / capacity_); }
  double diffusion(double x) const override { return sigma_ * x; }

  double eta(double x) const override {
    require_domain(x > 0.0 && std::isfinite(x), "log_growth: state must be positive");
    return -std::log(x) / sigma_;
  }
  double eta_inv(double u) const override { return std::exp(-sigma_ * u); }
  double eta_prime(double x) const override { return -1.0 / (sigma_ * x); }

  double alpha(double u) const override { return a_ + b_ * std::exp(-sigma_ * u); }
  double alpha_prime(double u) const override { return -sigma_ * b_ * std::exp(-sigma_ * u); }
  double antiderivative(double u) const override { return a_ * u - (b_ / sigma_) * std::exp(-sigma_ * u); }
  double lower_bound() const override { return sigma_ * sigma_ / 8.0 - kappa_ / 2.0; }

  double phi(double u) const override { return phi_at_level(std::exp(-sigma_ * u)); }

  PhiBounds phi_bounds(const PathRange& range) const override {
    if (!std::isfinite(range.lo)) throw LayerError("log_growth: phi bounds need a finite path minimum");
    // phi is a convex function of z = exp(-sigma u), minimal at z = Lambda
    const double z_hi = std::exp(-sigma_ * range.lo);
    const double z_lo = std::isfinite(range.hi) ? std::exp(-sigma_ * range.hi) : 0.0;
    const double at_lo = phi_at_level(z_lo);
    const double at_hi = phi_at_level(z_hi);
    PhiBounds bounds;
    bounds.upper = std::max(at_lo, at_hi) * (1.0 + kBoundSlack);
    bounds.lower = (z_lo <= capacity_ && capacity_ <= z_hi) ? 0.0 : std::min(at_lo, at_hi) * (1.0 - kBoundSlack);
    return bounds;
  }

  LayerKind layer_kind() const override { return LayerKind::minimum; }

 private:
  double phi_at_level(double z) const {
    const double d = b_ * (z - capacity_);
    return 0.5 * d * d;
  }

  double kappa_, capacity_, sigma_;
  double a_, b_;
};

// ---------------------------------------------------------------------------
// genetics

// Logistic map of s = sigma*u with the complement and both logs kept accurate.
struct LogisticPoint {
  double v, one_minus_v, log_v, log_one_minus_v;
};

LogisticPoint logistic_point(double s) {
  if (s >= 0.0) {
    const double e = std::exp(-s);
    const double l1p = std::log1p(e);
    return {1.0 / (1.0 + e), e / (1.0 + e), -l1p, -s - l1p};
  }
  const double e = std::exp(s);
  const double l1p = std::log1p(e);
  return {e / (1.0 + e), 1.0 / (1.0 + e), s - l1p, -l1p};
}

using Poly = std::vector<double>;  // ascending coefficients

Poly poly_mul(const Poly& p, const Poly& q) {
  Poly r(p.size() + q.size() - 1, 0.0);
  for (std::size_t i = 0; i < p.size(); ++i) {
    for (std::size_t j = 0; j < q.size(); ++j) r[i + j] += p[i] * q[j];
  }
  return r;
}

Poly poly_add(const Poly& p, const Poly& q, double scale_q = 1.0) {
  Poly r(std::max(p.size(), q.size()), 0.0);
  for (std::size_t i = 0; i < p.size(); ++i) r[i] += p[i];
  for (std::size_t i = 0; i < q.size(); ++i) r[i] += scale_q * q[i];
  return r;
}

Poly poly_derivative(const Poly& p) {
  if (p.size() <= 1) return {0.0};
  Poly r(p.size() - 1);
  for (std::size_t i = 1; i < p.size(); ++i) r[i - 1] = static_cast<double>(i) * p[i];
  return r;
}

double poly_eval(const Poly& p, double x) {
  double r = 0.0;
  for (auto it = p.rbegin(); it != p.rend(); ++it) r = r * x + *it;
  return r;
}

// Real roots in (0, 1) plus near-real roots, polished by Newton steps.
std::vector<double> roots_in_unit_interval(Poly p) {
  double scale = 0.0;
  for (double c : p) scale = std::max(scale, std::abs(c));
  if (scale == 0.0) return {};
  while (p.size() > 1 && std::abs(p.back()) <= 1e-14 * scale) p.pop_back();
  if (p.size() <= 1) return {};

  Eigen::VectorXd coeffs(static_cast<Eigen::Index>(p.size()));
  for (std::size_t i = 0; i < p.size(); ++i) coeffs[static_cast<Eigen::Index>(i)] = p[i];
  Eigen::PolynomialSolver<double, Eigen::Dynamic> solver(coeffs);

  const Poly dp = poly_derivative(p);
  std::vector<double> out;
  for (const std::complex<double>& r : solver.roots()) {
    // near-real pairs may be a rounded double root; keep them as candidates
    if (std::abs(r.imag()) > 1e-3) continue;
    double x = r.real();
    for (int it = 0; it < 8; ++it) {
      const double d = poly_eval(dp, x);
      if (d == 0.0) break;
      const double next = x - poly_eval(p, x) / d;
      if (!std::isfinite(next) || std::abs(next - x) > 1e-3) break;
      x = next;
    }
    if (x > 0.0 && x < 1.0) out.push_back(x);
  }
  std::sort(out.begin(), out.end());
  return out;
}

class GeneticsDiffusion final : public Diffusion {
 public:
  explicit GeneticsDiffusion(const Parameters& theta)
      : Diffusion(theta), mu_(theta.values[0]), nu_(theta.values[1]), sigma_(theta.values[2]) {
    find_critical_points();
    compute_lower_bound();
  }

  Interval state_domain() const override { return {0.0, 1.0}; }
  double drift(double v) const override { return mu_ - nu_ * v; }
  double diffusion(double v) const override { return sigma_ * v * (1.0 - v); }

  double eta(double v) const override {
    require_domain(v > 0.0 && v < 1.0, "genetics: state must lie in (0, 1)");
    return (std::log(v) - std::log1p(-v)) / sigma_;
  }
  double eta_inv(double u) const override { return logistic_point(sigma_ * u).v; }
  double eta_prime(double v) const override { return 1.0 / (sigma_ * v * (1.0 - v)); }

  double alpha(double u) const override {
    const LogisticPoint p = logistic_point(sigma_ * u);
    const double w = p.v * p.one_minus_v;
    return (mu_ - nu_ * p.v) / (sigma_ * w) - 0.5 * sigma_ * (p.one_minus_v - p.v);
  }

  double alpha_prime(double u) const override {
    const LogisticPoint p = logistic_point(sigma_ * u);
    const double w = p.v * p.one_minus_v;
    return (-nu_ * w - (mu_ - nu_ * p.v) * (p.one_minus_v - p.v)) / w + sigma_ * sigma_ * w;
  }

  double antiderivative(double u) const override {
    const LogisticPoint p = logistic_point(sigma_ * u);
    const double first = mu_ * (-1.0 / p.v + 2.0 * p.log_v + 1.0 / p.one_minus_v - 2.0 * p.log_one_minus_v);
    const double second = nu_ * (p.log_v - p.log_one_minus_v + 1.0 / p.one_minus_v);
    return (first - second) / (sigma_ * sigma_) - 0.5 * (p.log_v + p.log_one_minus_v);
  }

  double lower_bound() const override { return lower_bound_; }

  PhiBounds phi_bounds(const PathRange& range) const override {
    if (!std::isfinite(range.lo) || !std::isfinite(range.hi)) {
      throw LayerError("genetics: phi bounds need a two-sided layer");
    }
    double hi = std::max(curvature(range.lo), curvature(range.hi));
    double lo = std::min(curvature(range.lo), curvature(range.hi));
    for (std::size_t i = 0; i < critical_u_.size(); ++i) {
      if (critical_u_[i] > range.lo && critical_u_[i] < range.hi) {
        hi = std::max(hi, critical_f_[i]);
        lo = std::min(lo, critical_f_[i]);
      }
    }
    if (!std::isfinite(hi)) throw LayerError("genetics: drift functional unbounded on layer");
    PhiBounds bounds;
    bounds.upper = 0.5 * hi - lower_bound_;
    bounds.lower = std::max(0.0, 0.5 * lo - lower_bound_);
    const double slack = kBoundSlack * (1.0 + std::abs(0.5 * hi) + std::abs(lower_bound_));
    bounds.upper += slack;
    bounds.lower = std::max(0.0, bounds.lower - slack);
    return bounds;
  }

  LayerKind layer_kind() const override { return LayerKind::two_sided; }

 private:
  // alpha^2 + alpha'
  double curvature(double u) const {
    const double a = alpha(u);
    return a * a + alpha_prime(u);
  }

  // Stationary points of alpha^2 + alpha' = g(v)/w(v)^2 with g a polynomial in v.
  void find_critical_points() {
    const double s2 = sigma_ * sigma_;
    const Poly w{0.0, 1.0, -1.0};
    const Poly one_minus_2v{1.0, -2.0};
    const Poly drift{mu_, -nu_};
    // alpha * w
    const Poly p1 = poly_add(Poly{mu_ / sigma_, -nu_ / sigma_}, poly_mul(one_minus_2v, w), -0.5 * sigma_);
    // alpha' * w^2
    const Poly inner = poly_add(poly_mul(Poly{-nu_}, w), poly_mul(drift, one_minus_2v), -1.0);
    const Poly p2 = poly_add(poly_mul(inner, w), poly_mul(poly_mul(w, w), w), s2);
    const Poly g = poly_add(poly_mul(p1, p1), p2);
    const Poly h = poly_add(poly_mul(poly_derivative(g), w), poly_mul(g, poly_derivative(w)), -2.0);
    for (double v : roots_in_unit_interval(h)) {
      const double u = (std::log(v) - std::log1p(-v)) / sigma_;
      if (!std::isfinite(u)) continue;
      critical_u_.push_back(u);
      critical_f_.push_back(curvature(u));
    }
  }

  void compute_lower_bound() {
    double lowest = kInf;
    for (double f : critical_f_) lowest = std::min(lowest, f);
    // boundary limits are finite only in degenerate drift configurations
    for (double v : {1e-9, 1.0 - 1e-9}) {
      lowest = std::min(lowest, curvature((std::log(v) - std::log1p(-v)) / sigma_));
    }
    if (!std::isfinite(lowest)) throw DomainError("genetics: alpha^2 + alpha' has no finite lower bound");
    lower_bound_ = 0.5 * lowest - kBoundSlack * (1.0 + std::abs(0.5 * lowest));
  }

  double mu_, nu_, sigma_;
  std::vector<double> critical_u_;
  std::vector<double> critical_f_;
  double lower_bound_ = 0.0;
};

// ---------------------------------------------------------------------------
// constant drift

class ConstantDriftDiffusion final : public Diffusion {
 public:
  explicit ConstantDriftDiffusion(const Parameters& theta) : Diffusion(theta), c_(theta.values[0]) {}

  Interval state_domain() const override { return {}; }
  double drift(double) const override { return c_; }
  double diffusion(double) const override { return 1.0; }
  double eta(double x) const override {
    require_domain(std::isfinite(x), "const_drift: state must be finite");
    return x;
  }
  double eta_inv(double u) const override { return u; }
  double eta_prime(double) const override { return 1.0; }
  double alpha(double) const override { return c_; }
  double alpha_prime(double) const override { return 0.0; }
  double antiderivative(double u) const override { return c_ * u; }
  double lower_bound() const override { return 0.5 * c_ * c_; }
  double phi(double) const override { return 0.0; }
  PhiBounds phi_bounds(const PathRange&) const override { return {0.0, 0.0}; }
  LayerKind layer_kind() const override { return LayerKind::none; }

 private:
  double c_;
};

}  // namespace

double Diffusion::phi(double u) const {
  const double a = alpha(u);
  return 0.5 * (a * a + alpha_prime(u)) - lower_bound();
}

void DiffusionModel::validate(const Parameters& theta) const {
  if (theta.values.size() != dim()) {
    throw DomainError(std::string(name()) + ": expected " + std::to_string(dim()) + " parameters, got " +
                      std::to_string(theta.values.size()));
  }
  const std::vector<bool> positive = positive_parameters();
  for (std::size_t i = 0; i < theta.values.size(); ++i) {
    if (!std::isfinite(theta.values[i])) {
      throw DomainError(std::string(name()) + ": parameter " + parameter_names()[i] + " is not finite");
    }
    if (positive[i] && !(theta.values[i] > 0.0)) {
      throw DomainError(std::string(name()) + ": parameter " + parameter_names()[i] + " must be positive");
    }
  }
  if (!(theta.sigma_eps >= 0.0) || !std::isfinite(theta.sigma_eps)) {
    throw DomainError("sigma_eps must be a finite nonnegative number");
  }
}

std::unique_ptr<Diffusion> DiffusionModel::bind(const Parameters& theta) const {
  validate(theta);
  return make(theta);
}

const std::vector<std::string>& LogGrowthModel::parameter_names() const {
  static const std::vector<std::string> names{"kappa", "Lambda", "sigma"};
  return names;
}

double LogGrowthModel::default_initial_state(const Parameters& theta) const { return theta.values.at(1); }

std::unique_ptr<Diffusion> LogGrowthModel::make(const Parameters& theta) const {
  return std::make_unique<LogGrowthDiffusion>(theta);
}

const std::vector<std::string>& GeneticsModel::parameter_names() const {
  static const std::vector<std::string> names{"mu", "nu", "sigma"};
  return names;
}

std::unique_ptr<Diffusion> GeneticsModel::make(const Parameters& theta) const {
  return std::make_unique<GeneticsDiffusion>(theta);
}

const std::vector<std::string>& ConstantDriftModel::parameter_names() const {
  static const std::vector<std::string> names{"c"};
  return names;
}

std::unique_ptr<Diffusion> ConstantDriftModel::make(const Parameters& theta) const {
  return std::make_unique<ConstantDriftDiffusion>(theta);
}

std::unique_ptr<DiffusionModel> make_model(std::string_view name) {
  if (name == "log_growth") return std::make_unique<LogGrowthModel>();
  if (name == "genetics") return std::make_unique<GeneticsModel>();
  if (name == "const_drift") return std::make_unique<ConstantDriftModel>();
  throw std::invalid_argument("unknown model '" + std::string(name) + "'");
}

double log_observation_density(double x, double y, double sigma_eps) {
  if (sigma_eps == 0.0) return x == y ? 0.0 : -kInf;
  const double z = (y - x) / sigma_eps;
  return -0.5 * z * z - std::log(sigma_eps) - 0.5 * std::log(2.0 * std::numbers::pi);
}

namespace {

double euler_advance(const Diffusion& diffusion, const Interval& domain, double x, double h, int depth,
                     int max_depth, RandomStream& stream) {
  const double z = stream.normal();
  const double next = x + diffusion.drift(x) * h + diffusion.diffusion(x) * std::sqrt(h) * z;
  if (domain.contains(next)) return next;
  if (depth >= max_depth) throw DomainError("simulate_data: Euler step left the state domain after step halving");
  const double mid = euler_advance(diffusion, domain, x, 0.5 * h, depth + 1, max_depth, stream);
  return euler_advance(diffusion, domain, mid, 0.5 * h, depth + 1, max_depth, stream);
}

}  // namespace

SimulatedData simulate_data(const DiffusionModel& model, const Parameters& theta, int n, double x0,
                            std::uint64_t seed, const SimulationSettings& settings) {
  if (n < 0) throw std::invalid_argument("simulate_data: n must be nonnegative");
  if (!(settings.step > 0.0 && settings.step <= 1.0)) throw std::invalid_argument("simulate_data: step must lie in (0, 1]");
  const auto diffusion = model.bind(theta);
  const Interval domain = model.state_domain();
  if (!domain.contains(x0)) throw DomainError("simulate_data: initial state outside the state domain");

  const RandomStream root(seed);
  const RandomStream path_root = root.fork(1);
  const RandomStream noise_root = root.fork(2);
  const int steps = std::max(1, static_cast<int>(std::lround(1.0 / settings.step)));
  const double h = 1.0 / steps;

  SimulatedData data;
  data.latent.reserve(static_cast<std::size_t>(n) + 1);
  data.observations.reserve(static_cast<std::size_t>(n) + 1);
  double x = x0;
  for (int k = 0; k <= n; ++k) {
    if (k > 0) {
      RandomStream stream = path_root.fork(static_cast<std::uint64_t>(k));
      for (int s = 0; s < steps; ++s) {
        x = euler_advance(*diffusion, domain, x, h, 0, settings.max_halvings, stream);
      }
    }
    data.latent.push_back(x);
    RandomStream noise = noise_root.fork(static_cast<std::uint64_t>(k));
    data.observations.push_back({k, x + theta.sigma_eps * noise.normal()});
  }
  return data;
}

}  // namespace gpesmc
