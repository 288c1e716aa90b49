#ifndef GPESMC_BRIDGES_HPP
#define GPESMC_BRIDGES_HPP

#include <array>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

#include "gpesmc/models.hpp"
#include "gpesmc/random.hpp"

namespace gpesmc {

/// Raised when the boundary-crossing series or a conditioned proposal fails to terminate.
class BridgeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ExtremumKind { minimum, maximum };

struct Extremum {
  ExtremumKind kind = ExtremumKind::minimum;
  double value = 0.0;
  double time = 0.0;
};

struct ExtremumDraw {
  double value = 0.0;
  double time = 0.0;
};

/// Interval [lower, upper] proven to contain the whole path; index into the layer sequence.
struct Layer {
  int index = 0;
  double lower = 0.0;
  double upper = 0.0;
};

struct BridgePoint {
  double time = 0.0;
  double value = 0.0;
};

/// Half-widths a_i = i * zeta * sqrt(t) of the nested layers of a centred bridge.
struct LayerSequence {
  double zeta = 0.5;

  [[nodiscard]] double half_width(int i, double t) const;
};

/// Inverse Gaussian variate with the given mean and shape.
[[nodiscard]] double sample_inverse_gaussian(double mean, double shape, RandomStream& rng);

/// P(min of the Brownian bridge x -> x_end over [0, t] <= y), for y <= min(x, x_end).
[[nodiscard]] double bridge_min_cdf(double y, double x, double x_end, double t);

/// Joint draw of the minimum of a Brownian bridge and the time it is attained.
[[nodiscard]] ExtremumDraw sample_bridge_min(double x, double x_end, double t, RandomStream& rng);
[[nodiscard]] ExtremumDraw sample_bridge_max(double x, double x_end, double t, RandomStream& rng);

/**
 * Probability that a Brownian bridge from y1 to y2 over a horizon h stays
 * inside (lower, upper). Uses the image (alternating) series for short
 * horizons and the eigenfunction series for long ones; both are truncated
 * once terms fall below 1e-12, with at most 1000 terms.
 */
[[nodiscard]] double bridge_stay_probability(double y1, double y2, double h, double lower, double upper);
[[nodiscard]] double bridge_stay_probability_image(double y1, double y2, double h, double lower, double upper);
[[nodiscard]] double bridge_stay_probability_spectral(double y1, double y2, double h, double lower, double upper);

/// One minus the stay probability, evaluated without cancellation when leaving is rare.
[[nodiscard]] double bridge_exit_probability(double y1, double y2, double h, double lower, double upper);

/// Probability that the centred 0 -> 0 bridge over [0, t] stays within the first i layers.
[[nodiscard]] double layer_containment_probability(int i, double t, const LayerSequence& layers);

/// Value at an interior time of a bridge segment, and which halves leave the inner band.
struct BandSplit {
  double value = 0.0;
  bool left_leaves = false;
  bool right_leaves = false;
};

/**
 * Draws the value splitting a Brownian bridge from b1 to b2 over h1 + h2 at
 * h1, given that the bridge stays inside (-outer, outer) and, when inner > 0,
 * leaves (-inner, inner). Exact rejection sampling.
 */
[[nodiscard]] BandSplit split_band_segment(double b1, double b2, double h1, double h2, double outer, double inner,
                                           RandomStream& rng);

/**
 * Partially revealed Brownian bridge over [0, t] from x to x_end.
 *
 * Depending on construction the bridge is unconditioned, conditioned on its
 * minimum or maximum (Bessel(3) decomposition either side of the extremum
 * time), or conditioned on the index of the smallest layer containing it.
 * The value at a time s is drawn from a stream keyed by the bits of s, so
 * revealing the same times in the same order always gives identical points.
 */
class BridgeSkeleton {
 public:
  [[nodiscard]] static BridgeSkeleton brownian(double x, double x_end, double t, RandomStream stream);
  [[nodiscard]] static BridgeSkeleton with_extremum(double x, double x_end, double t, ExtremumKind kind,
                                                    RandomStream stream);
  /// Uses a known extremum, which must be consistent with the endpoints.
  [[nodiscard]] static BridgeSkeleton with_extremum(double x, double x_end, double t, const Extremum& extremum,
                                                    RandomStream stream);
  [[nodiscard]] static BridgeSkeleton layered(double x, double x_end, double t, const LayerSequence& layers,
                                              RandomStream stream);

  [[nodiscard]] double horizon() const noexcept { return t_; }
  [[nodiscard]] double start() const noexcept { return x_; }
  [[nodiscard]] double end() const noexcept { return x_end_; }
  [[nodiscard]] const std::optional<Extremum>& extremum() const noexcept { return extremum_; }
  [[nodiscard]] const std::optional<Layer>& layer() const noexcept { return layer_; }

  /// Range proven to contain the whole path.
  [[nodiscard]] PathRange range() const noexcept;
  [[nodiscard]] std::vector<BridgePoint> points() const;
  [[nodiscard]] std::size_t size() const noexcept { return nodes_.size(); }

  /// Reveals (or returns the already revealed) value at time s in [0, t].
  double value_at(double s);
  void refine(std::span<const double> times);

  friend bool operator==(const BridgeSkeleton& a, const BridgeSkeleton& b);

 private:
  enum class Mode { plain, extremum, layered };

  // Constraint on the centred path over one segment between adjacent nodes.
  struct Constraint {
    bool shell = false;  // exits the inner band but stays within the outer one
    double outer = 0.0;
    double inner = 0.0;

    friend bool operator==(const Constraint&, const Constraint&) = default;
  };

  struct Node {
    double time = 0.0;
    std::array<double, 3> coord{};

    friend bool operator==(const Node&, const Node&) = default;
  };

  BridgeSkeleton(double x, double x_end, double t, Mode mode, RandomStream stream);

  [[nodiscard]] double node_value(const Node& node) const noexcept;
  void insert_gaussian(std::size_t right, double s);
  void insert_layered(std::size_t right, double s);

  double x_, x_end_, t_;
  Mode mode_;
  RandomStream stream_;
  std::optional<Extremum> extremum_;
  std::optional<Layer> layer_;
  std::vector<Node> nodes_;              // sorted by time
  std::vector<Constraint> constraints_;  // one per segment, layered mode only
};

}  // namespace gpesmc

#endif  // GPESMC_BRIDGES_HPP
