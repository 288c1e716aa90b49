#ifndef GPESMC_GPE_HPP
#define GPESMC_GPE_HPP

#include <cstdint>
#include <stdexcept>

#include "gpesmc/bridges.hpp"
#include "gpesmc/models.hpp"
#include "gpesmc/random.hpp"

namespace gpesmc {

/// Raised when bridge rejection sampling exhausts its attempts and bisection depth.
class GpeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GpeSettings {
  int max_rejection_attempts = 10000;
  int max_bisection_depth = 6;
  // cap on the expected number of Poisson points in a density estimate
  double max_expected_points = 1000.0;
  LayerSequence layers{};
};

struct GpeDiagnostics {
  std::uint64_t density_draws = 0;
  std::uint64_t log_density_draws = 0;
  std::uint64_t poisson_points = 0;
  std::uint64_t rejections = 0;
  std::uint64_t layer_invalidations = 0;
  std::uint64_t fallback_bisections = 0;

  GpeDiagnostics& operator+=(const GpeDiagnostics& other);
  friend bool operator==(const GpeDiagnostics&, const GpeDiagnostics&) = default;
};

enum class GpeKind { density, log_density };

/// Whether draw endpoints are stored in original or transformed coordinates.
enum class Coordinates { transformed, original };

/**
 * Frozen randomness of one estimator draw.
 *
 * Evaluating at a parameter value replays the estimator with the same keyed
 * streams: the draw is a pure function of the parameter, equals the original
 * value at the sampling parameter and is unbiased at every parameter.
 */
class GpeDraw {
 public:
  GpeDraw(GpeKind kind, Coordinates coordinates, double x, double x_end, double t, RandomStream stream,
          GpeSettings settings);

  [[nodiscard]] GpeKind kind() const noexcept { return kind_; }
  [[nodiscard]] Coordinates coordinates() const noexcept { return coordinates_; }
  [[nodiscard]] double start() const noexcept { return x_; }
  [[nodiscard]] double end() const noexcept { return x_end_; }
  [[nodiscard]] double horizon() const noexcept { return t_; }

  /// Estimate under the given bound parameter (density or log-density, per kind).
  [[nodiscard]] double value_at(const Diffusion& diffusion, GpeDiagnostics* diagnostics = nullptr) const;
  /// Logarithm of the estimate; for log-density draws this equals value_at.
  [[nodiscard]] double log_value_at(const Diffusion& diffusion, GpeDiagnostics* diagnostics = nullptr) const;

 private:
  GpeKind kind_;
  Coordinates coordinates_;
  double x_, x_end_, t_;
  RandomStream stream_;
  GpeSettings settings_;
};

struct GpeEstimate {
  double value;
  GpeDraw draw;
};

/**
 * Poisson rate of the density estimator: phi_upper - phi_lower, capped so
 * that at most max_expected_points points are expected over the horizon.
 */
[[nodiscard]] double poisson_rate(const PhiBounds& bounds, double t, const GpeSettings& settings);

/// log N(dx; 0, t)
[[nodiscard]] double log_gaussian_kernel(double dx, double t);

/// Unbiased estimate of the transformed transition density q~(u -> u_end) over t.
[[nodiscard]] GpeEstimate estimate_q_tilde(const Diffusion& diffusion, double u, double u_end, double t,
                                           RandomStream stream, const GpeSettings& settings = {},
                                           GpeDiagnostics* diagnostics = nullptr);
/// Unbiased estimate of the original-coordinate transition density.
[[nodiscard]] GpeEstimate estimate_q(const Diffusion& diffusion, double x, double x_end, double t,
                                     RandomStream stream, const GpeSettings& settings = {},
                                     GpeDiagnostics* diagnostics = nullptr);
/// Unbiased estimate of log q~(u -> u_end).
[[nodiscard]] GpeEstimate estimate_log_q_tilde(const Diffusion& diffusion, double u, double u_end, double t,
                                               RandomStream stream, const GpeSettings& settings = {},
                                               GpeDiagnostics* diagnostics = nullptr);
/// Unbiased estimate of the original-coordinate log transition density.
[[nodiscard]] GpeEstimate estimate_log_q(const Diffusion& diffusion, double x, double x_end, double t,
                                         RandomStream stream, const GpeSettings& settings = {},
                                         GpeDiagnostics* diagnostics = nullptr);

[[nodiscard]] double reevaluate(const GpeDraw& draw, const Diffusion& diffusion,
                                GpeDiagnostics* diagnostics = nullptr);

/// One Brownian-bridge proposal with its drift-functional bounds and acceptance decision.
struct BridgeProposal {
  BridgeSkeleton skeleton;
  PhiBounds bounds;
  bool accepted;
};

/// Proposal for the diffusion bridge: a layered or extremum-conditioned Brownian bridge.
[[nodiscard]] BridgeSkeleton propose_bridge(const Diffusion& diffusion, double u, double u_end, double t,
                                            RandomStream stream, const GpeSettings& settings = {});

/// A single rejection-sampling attempt for the diffusion bridge.
[[nodiscard]] BridgeProposal attempt_diffusion_bridge(const Diffusion& diffusion, double u, double u_end, double t,
                                                      RandomStream stream, const GpeSettings& settings = {},
                                                      GpeDiagnostics* diagnostics = nullptr);

/// Skeleton of the transformed diffusion bridge by retrospective rejection; throws GpeError at the cap.
[[nodiscard]] BridgeSkeleton sample_diffusion_bridge_skeleton(const Diffusion& diffusion, double u, double u_end,
                                                              double t, RandomStream stream,
                                                              const GpeSettings& settings = {},
                                                              GpeDiagnostics* diagnostics = nullptr);

}  // namespace gpesmc

#endif  // GPESMC_GPE_HPP
