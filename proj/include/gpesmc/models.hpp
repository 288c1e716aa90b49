#ifndef GPESMC_MODELS_HPP
#define GPESMC_MODELS_HPP

#include <cstdint>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gpesmc {

/// Raised when a state or parameter lies outside its domain.
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Raised when a layer does not give finite bounds on the drift functional.
class LayerError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Parameters {
  std::vector<double> values;
  double sigma_eps = 0.1;  // observation noise standard deviation

  friend bool operator==(const Parameters&, const Parameters&) = default;
};

struct Interval {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();

  [[nodiscard]] bool contains(double x) const noexcept { return x > lo && x < hi; }
};

/// Closed range in transformed coordinates proven to contain a bridge path.
struct PathRange {
  double lo = -std::numeric_limits<double>::infinity();
  double hi = std::numeric_limits<double>::infinity();
};

struct PhiBounds {
  double lower = 0.0;
  double upper = 0.0;
};

/// Path information a model needs to bound its drift functional.
enum class LayerKind {
  none,       // drift functional is constant
  minimum,    // transformed drift bounded above; the path minimum suffices
  two_sided,  // needs an interval containing the whole path
};

struct Observation {
  int k = 0;
  double y = 0.0;
};

/**
 * A diffusion model bound to one parameter value.
 *
 * Original coordinates: dX = drift(X) dt + diffusion(X) dW.
 * Transformed coordinates u = eta(x): dU = alpha(U) dt + dW.
 * The drift functional is phi(u) = (alpha^2 + alpha')/2 - lower_bound() >= 0.
 * Immutable; all members are safe to call concurrently.
 */
class Diffusion {
 public:
  explicit Diffusion(Parameters parameters) : parameters_(std::move(parameters)) {}
  virtual ~Diffusion() = default;

  [[nodiscard]] const Parameters& parameters() const noexcept { return parameters_; }

  [[nodiscard]] virtual Interval state_domain() const = 0;
  [[nodiscard]] virtual double drift(double x) const = 0;
  [[nodiscard]] virtual double diffusion(double x) const = 0;

  /// Lamperti transform; throws DomainError outside the state domain.
  [[nodiscard]] virtual double eta(double x) const = 0;
  [[nodiscard]] virtual double eta_inv(double u) const = 0;
  [[nodiscard]] virtual double eta_prime(double x) const = 0;

  [[nodiscard]] virtual double alpha(double u) const = 0;
  [[nodiscard]] virtual double alpha_prime(double u) const = 0;
  /// An antiderivative of alpha; only differences are meaningful.
  [[nodiscard]] virtual double antiderivative(double u) const = 0;
  /// Infimum of (alpha^2 + alpha')/2 over the transformed domain.
  [[nodiscard]] virtual double lower_bound() const = 0;
  [[nodiscard]] virtual double phi(double u) const;
  /// Bounds of phi over a path range; throws LayerError if the range is too weak.
  [[nodiscard]] virtual PhiBounds phi_bounds(const PathRange& range) const = 0;
  [[nodiscard]] virtual LayerKind layer_kind() const = 0;

 private:
  Parameters parameters_;
};

class DiffusionModel {
 public:
  virtual ~DiffusionModel() = default;

  [[nodiscard]] virtual std::string_view name() const = 0;
  [[nodiscard]] virtual const std::vector<std::string>& parameter_names() const = 0;
  [[nodiscard]] std::size_t dim() const { return parameter_names().size(); }
  [[nodiscard]] virtual Interval state_domain() const = 0;
  /// Components constrained to be positive (optimised on the log scale).
  [[nodiscard]] virtual std::vector<bool> positive_parameters() const = 0;
  [[nodiscard]] virtual double default_initial_state(const Parameters& theta) const = 0;

  /// Throws DomainError when the arity or a domain constraint fails.
  void validate(const Parameters& theta) const;
  [[nodiscard]] std::unique_ptr<Diffusion> bind(const Parameters& theta) const;

 protected:
  [[nodiscard]] virtual std::unique_ptr<Diffusion> make(const Parameters& theta) const = 0;
};

/// dX = kappa X (1 - X/Lambda) dt + sigma X dW on (0, inf).
class LogGrowthModel final : public DiffusionModel {
 public:
  [[nodiscard]] std::string_view name() const override { return "log_growth"; }
  [[nodiscard]] const std::vector<std::string>& parameter_names() const override;
  [[nodiscard]] Interval state_domain() const override { return {0.0, std::numeric_limits<double>::infinity()}; }
  [[nodiscard]] std::vector<bool> positive_parameters() const override { return {true, true, true}; }
  [[nodiscard]] double default_initial_state(const Parameters& theta) const override;

 protected:
  [[nodiscard]] std::unique_ptr<Diffusion> make(const Parameters& theta) const override;
};

/// dV = (mu - nu V) dt + sigma V (1 - V) dW on (0, 1).
class GeneticsModel final : public DiffusionModel {
 public:
  [[nodiscard]] std::string_view name() const override { return "genetics"; }
  [[nodiscard]] const std::vector<std::string>& parameter_names() const override;
  [[nodiscard]] Interval state_domain() const override { return {0.0, 1.0}; }
  [[nodiscard]] std::vector<bool> positive_parameters() const override { return {false, false, true}; }
  [[nodiscard]] double default_initial_state(const Parameters&) const override { return 0.5; }

 protected:
  [[nodiscard]] std::unique_ptr<Diffusion> make(const Parameters& theta) const override;
};

/// dX = c dt + dW on the real line; transition density known in closed form.
class ConstantDriftModel final : public DiffusionModel {
 public:
  [[nodiscard]] std::string_view name() const override { return "const_drift"; }
  [[nodiscard]] const std::vector<std::string>& parameter_names() const override;
  [[nodiscard]] Interval state_domain() const override { return {}; }
  [[nodiscard]] std::vector<bool> positive_parameters() const override { return {false}; }
  [[nodiscard]] double default_initial_state(const Parameters&) const override { return 0.0; }

 protected:
  [[nodiscard]] std::unique_ptr<Diffusion> make(const Parameters& theta) const override;
};

/// Looks a model up by its configuration name; throws std::invalid_argument.
[[nodiscard]] std::unique_ptr<DiffusionModel> make_model(std::string_view name);

/// Gaussian observation log-density log N(y; x, sigma_eps^2); sigma_eps = 0 is a point mass.
[[nodiscard]] double log_observation_density(double x, double y, double sigma_eps);

struct SimulationSettings {
  double step = 1e-3;
  int max_halvings = 20;
};

struct SimulatedData {
  std::vector<double> latent;  // X_0..X_n
  std::vector<Observation> observations;
};

/**
 * Euler-Maruyama path at unit-spaced observation times plus Gaussian noise.
 * Steps that leave the state domain are retried as two half steps, recursively,
 * up to max_halvings; beyond that a DomainError is thrown.
 */
[[nodiscard]] SimulatedData simulate_data(const DiffusionModel& model, const Parameters& theta, int n,
                                          double x0, std::uint64_t seed, const SimulationSettings& settings = {});

}  // namespace gpesmc

#endif  // GPESMC_MODELS_HPP
