#ifndef GPESMC_SMC_HPP
#define GPESMC_SMC_HPP

#include <cstddef>
#include <deque>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "gpesmc/gpe.hpp"
#include "gpesmc/models.hpp"
#include "gpesmc/random.hpp"

namespace gpesmc {

/// Raised when all particle weights vanish.
class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class SelectionScheme { multinomial, residual };

/// N iid categorical draws with probabilities proportional to the weights.
[[nodiscard]] std::vector<std::size_t> select_multinomial(std::span<const double> weights, std::size_t n,
                                                          RandomStream& rng);
/// Deterministic floor(N w_i) copies plus multinomial draws on the residuals.
[[nodiscard]] std::vector<std::size_t> select_residual(std::span<const double> weights, std::size_t n,
                                                       RandomStream& rng);
[[nodiscard]] std::vector<std::size_t> select(SelectionScheme scheme, std::span<const double> weights,
                                              std::size_t n, RandomStream& rng);

/// Mutation kernel of the auxiliary particle filter, with adjustment multipliers.
class ProposalKernel {
 public:
  virtual ~ProposalKernel() = default;
  [[nodiscard]] virtual double sample(double x, double y_next, RandomStream& rng) const = 0;
  [[nodiscard]] virtual double log_density(double x, double x_next, double y_next) const = 0;
  [[nodiscard]] virtual double log_adjustment(double /*x*/, double /*y_next*/) const { return 0.0; }
};

/// Student t with `dof` degrees of freedom located at the Euler mean x + mu(x), scale sigma(x).
class EulerStudentProposal final : public ProposalKernel {
 public:
  EulerStudentProposal(std::shared_ptr<const Diffusion> diffusion, int dof = 4);
  double sample(double x, double y_next, RandomStream& rng) const override;
  double log_density(double x, double x_next, double y_next) const override;

 private:
  std::shared_ptr<const Diffusion> diffusion_;
  int dof_;
  double log_normaliser_;
};

/// Gaussian at the Euler mean; the exact transition for the constant-drift model.
class EulerGaussianProposal final : public ProposalKernel {
 public:
  explicit EulerGaussianProposal(std::shared_ptr<const Diffusion> diffusion);
  double sample(double x, double y_next, RandomStream& rng) const override;
  double log_density(double x, double x_next, double y_next) const override;

 private:
  std::shared_ptr<const Diffusion> diffusion_;
};

/// Uniform on a bounded interval, independent of the current state.
class UniformProposal final : public ProposalKernel {
 public:
  UniformProposal(double lo, double hi);
  double sample(double x, double y_next, RandomStream& rng) const override;
  double log_density(double x, double x_next, double y_next) const override;

 private:
  double lo_, hi_;
};

/// Built-in proposals by name: "student_t", "euler_gaussian", "uniform".
[[nodiscard]] std::unique_ptr<ProposalKernel> make_proposal(std::string_view name,
                                                            std::shared_ptr<const Diffusion> diffusion);
/// Proposal used when none is configured: student_t for log_growth, uniform for genetics, else euler_gaussian.
[[nodiscard]] std::string_view default_proposal_name(std::string_view model_name);

struct FilterSettings {
  std::size_t particles = 100;
  int alpha = 1;  // GPE draws per weight
  SelectionScheme scheme = SelectionScheme::multinomial;
  GpeSettings gpe{};
  unsigned threads = 1;
  // prior of X_0; defaults to N(Y_0, sigma_eps^2) truncated to the state domain
  std::optional<double> initial_mean;
  std::optional<double> initial_sd;
};

/// Particle cloud at one time with log-weights and the ancestor of each particle.
struct Generation {
  int k = 0;
  std::vector<double> states;
  std::vector<double> log_weights;
  std::vector<std::size_t> ancestors;  // empty at k = 0

  /// Normalised weights (sum one); throws NumericalFailure if all vanish.
  [[nodiscard]] std::vector<double> normalized_weights() const;
};

/// Draws the initial cloud from the prior of X_0 and weights it by the first observation.
[[nodiscard]] Generation initial_generation(const Diffusion& diffusion, const Observation& y0,
                                            const FilterSettings& settings, RandomStream stream);

/**
 * One step of the GPE-based auxiliary particle filter: select ancestors by
 * weight times adjustment, mutate through the proposal and weight each child by
 * g(x', y) * mean of alpha GPE density draws / (adjustment * proposal density).
 * Children outside the state domain get zero weight.
 */
[[nodiscard]] Generation gpeaps_step(const Generation& previous, const Observation& y_next,
                                     const Diffusion& diffusion, const ProposalKernel& proposal,
                                     const FilterSettings& settings, RandomStream stream,
                                     GpeDiagnostics* diagnostics = nullptr);

/// Runs fn(i) for i in [0, n) on up to `threads` threads; rethrows the first exception.
void parallel_for(std::size_t n, unsigned threads, const std::function<void(std::size_t)>& fn);

/**
 * Particle filter that retains the last `window` + 1 generations, so lineages
 * can be traced back by up to `window` steps.
 */
class ParticleFilter {
 public:
  ParticleFilter(const Diffusion& diffusion, const ProposalKernel& proposal, std::span<const Observation> data,
                 FilterSettings settings, RandomStream stream, int window);

  [[nodiscard]] int time() const noexcept { return current().k; }
  [[nodiscard]] int horizon() const noexcept { return static_cast<int>(data_.size()) - 1; }
  [[nodiscard]] bool done() const noexcept { return time() == horizon(); }
  void step();

  [[nodiscard]] const Generation& current() const noexcept { return history_.back(); }
  [[nodiscard]] const Generation& generation(int k) const;
  /// Index, in generation k, of the ancestor of every current particle.
  [[nodiscard]] std::vector<std::size_t> lineage(int k) const;
  [[nodiscard]] const GpeDiagnostics& diagnostics() const noexcept { return diagnostics_; }
  [[nodiscard]] int window() const noexcept { return window_; }

 private:
  const Diffusion& diffusion_;
  const ProposalKernel& proposal_;
  std::span<const Observation> data_;
  FilterSettings settings_;
  RandomStream stream_;
  int window_;
  std::deque<Generation> history_;
  GpeDiagnostics diagnostics_;
};

/// Transition indices k (segment k -> k+1) whose fixed-lag estimate is final at `time`.
[[nodiscard]] std::vector<int> finalised_transitions(int time, int horizon, int lag);
/// Observation indices j whose fixed-lag marginal is final at `time`.
[[nodiscard]] std::vector<int> finalised_observations(int time, int horizon, int lag);

/**
 * Fixed-lag estimate of sum_k E[s_k(X_k, X_{k+1}) | Y_{0:n}]: the term for k is
 * the self-normalised particle average over the lineages at min(k + lag, n).
 */
class FixedLagAccumulator {
 public:
  using Statistic = std::function<double(int k, std::size_t particle, double x, double x_next)>;

  FixedLagAccumulator(int horizon, int lag);
  /// Finalises every term due at the filter's current time.
  void update(const ParticleFilter& filter, const Statistic& statistic);
  [[nodiscard]] double total() const noexcept { return total_; }
  [[nodiscard]] int finalised() const noexcept { return finalised_; }
  [[nodiscard]] int lag() const noexcept { return lag_; }

 private:
  int horizon_;
  int lag_;
  double total_ = 0.0;
  int finalised_ = 0;
};

/// Filter marginals at every time, as needed by backward simulation.
struct FilterHistory {
  std::vector<Generation> generations;
  GpeDiagnostics diagnostics;
};

[[nodiscard]] FilterHistory run_filter(const Diffusion& diffusion, const ProposalKernel& proposal,
                                       std::span<const Observation> data, const FilterSettings& settings,
                                       RandomStream stream);

/**
 * Backward simulation: draws X_n from the last cloud, then X_k from cloud k
 * with probabilities proportional to w_k^i times a GPE density draw of the
 * transition to the already drawn X_{k+1}.
 */
[[nodiscard]] std::vector<double> ffbs_sample(const FilterHistory& history, const Diffusion& diffusion,
                                              RandomStream stream, const GpeSettings& settings = {},
                                              GpeDiagnostics* diagnostics = nullptr);

}  // namespace gpesmc

#endif  // GPESMC_SMC_HPP
