#ifndef GPESMC_EM_HPP
#define GPESMC_EM_HPP

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gpesmc/gpe.hpp"
#include "gpesmc/models.hpp"
#include "gpesmc/random.hpp"
#include "gpesmc/smc.hpp"

namespace gpesmc {

struct NelderMeadSettings {
  double x_tolerance = 1e-4;  // simplex diameter (max-norm distance to the best vertex)
  double f_tolerance = 1e-4;  // spread of values across the simplex
  int max_evaluations = 0;    // 0 means 200 * dimension
  int max_iterations = 0;     // 0 means 200 * dimension
};

struct NelderMeadResult {
  std::vector<double> x;
  double value = 0.0;
  int evaluations = 0;
  int iterations = 0;
  bool converged = false;
};

/**
 * Maximises f by the downhill simplex method (reflection 1, expansion 2,
 * contraction 0.5, shrink 0.5). Vertex j of the initial simplex moves
 * coordinate j by steps[j]; by default 5% of its value, or 0.00025 when it is
 * zero. Non-finite values count as worst.
 */
[[nodiscard]] NelderMeadResult nelder_mead_maximize(const std::function<double(const std::vector<double>&)>& f,
                                                    std::vector<double> x0, const NelderMeadSettings& settings = {},
                                                    std::optional<std::vector<double>> steps = std::nullopt);

/// Intermediate-quantity contribution of one transition path segment retained by the smoother.
struct FrozenSegment {
  int k = 0;
  double weight = 0.0;  // self-normalised weight at finalisation; per-k weights sum to one
  double x = 0.0, x_next = 0.0;
  std::vector<GpeDraw> draws;  // frozen log-density draws of X_k -> X_{k+1}
};

/// Smoothed marginal of X_j, for the observation term.
struct FrozenMarginal {
  int j = 0;
  double weight = 0.0;
  double x = 0.0;
  double y = 0.0;
};

/**
 * Monte-Carlo intermediate quantity as a deterministic function of the model
 * parameters. The transition part averages frozen log-density draws over the
 * retained segments; the observation part averages log g over the retained
 * marginals. Pure and reentrant; out-of-domain parameters give -inf.
 */
class FrozenQ {
 public:
  FrozenQ(const DiffusionModel& model, double sigma_eps, std::vector<FrozenSegment> segments,
          std::vector<FrozenMarginal> marginals, unsigned threads = 1);

  [[nodiscard]] double transition_part(std::span<const double> theta, GpeDiagnostics* diagnostics = nullptr) const;
  [[nodiscard]] double observation_part(std::span<const double> theta) const;
  [[nodiscard]] double operator()(std::span<const double> theta, GpeDiagnostics* diagnostics = nullptr) const;

  [[nodiscard]] const std::vector<FrozenSegment>& segments() const noexcept { return segments_; }
  [[nodiscard]] const std::vector<FrozenMarginal>& marginals() const noexcept { return marginals_; }
  [[nodiscard]] double sigma_eps() const noexcept { return sigma_eps_; }

 private:
  const DiffusionModel* model_;
  double sigma_eps_;
  std::vector<FrozenSegment> segments_;
  std::vector<FrozenMarginal> marginals_;
  unsigned threads_;
};

/// Settings of one forward smoothing pass that freezes the intermediate quantity.
struct SmootherSettings {
  std::size_t particles = 100;
  int lag = 20;
  int alpha = 1;      // GPE density draws per filter weight
  int alpha_bar = 1;  // GPE log-density draws per retained segment
  std::string proposal;  // empty: the model's default proposal
  SelectionScheme scheme = SelectionScheme::multinomial;
  GpeSettings gpe{};
  unsigned threads = 1;
};

struct FrozenQBuild {
  FrozenQ q;
  GpeDiagnostics filter_diagnostics;
};

/**
 * Runs the fixed-lag particle smoother under theta_prime and freezes the
 * resulting estimate. The filter runs on stream.fork(1), so a ParticleFilter
 * with that stream and the same settings reproduces the pass.
 */
[[nodiscard]] FrozenQBuild build_frozen_q(const DiffusionModel& model, std::span<const Observation> data,
                                          const Parameters& theta_prime, const SmootherSettings& settings,
                                          RandomStream stream);

/// ceil(N0 * sqrt(j)) for iteration j >= 1.
[[nodiscard]] std::size_t particles_for_iteration(std::size_t initial, int iteration);
/// 40 for log_growth, 20 for genetics, otherwise ceil(5 log n) (at least 1).
[[nodiscard]] int default_lag(std::string_view model_name, int n);

struct EmConfig {
  int iterations = 15;
  std::size_t initial_particles = 100;
  std::optional<int> lag;  // default_lag when unset
  int alpha = 1;
  int alpha_bar = 1;
  std::vector<double> theta0;
  double sigma_eps = 0.1;
  std::string proposal;
  SelectionScheme scheme = SelectionScheme::multinomial;
  GpeSettings gpe{};
  NelderMeadSettings nelder_mead{};
  unsigned threads = 1;
  bool timing = false;  // record wall-clock times (breaks byte-identical outputs)
};

struct EmIteration {
  int iteration = 0;
  std::size_t particles = 0;
  int lag = 0;
  std::vector<double> theta;
  double q_value = 0.0;
  std::optional<double> wall_ms;
  int evaluations = 0;
  GpeDiagnostics diagnostics;
};

struct EmTrace {
  std::vector<EmIteration> iterations;
  std::vector<double> theta;  // latest estimate (theta0 when no iteration completed)
  std::optional<std::string> failure;
  bool numerical_failure = false;
};

/// Throws DomainError or std::invalid_argument for an unusable configuration.
void validate(const EmConfig& config, const DiffusionModel& model);

/**
 * Monte-Carlo EM with fresh randomness per iteration. A failing iteration stops
 * the run; the trace then holds the completed iterations and the failure.
 */
[[nodiscard]] EmTrace mcem_run(const DiffusionModel& model, std::span<const Observation> data,
                               const EmConfig& config, RandomStream stream,
                               const std::function<void(const EmIteration&)>& on_iteration = {});

/// CSV with columns iter, N, lag, param_1..param_d, Q_value, wall_ms.
void write_trace_csv(std::ostream& out, const EmTrace& trace, std::size_t dim);

}  // namespace gpesmc

#endif  // GPESMC_EM_HPP
