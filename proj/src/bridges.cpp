#include "gpesmc/bridges.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numbers>

namespace gpesmc {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kSeriesTolerance = 1e-12;
constexpr int kSeriesCap = 1000;
constexpr int kMaxLayerIndex = 1000;
constexpr long kMaxProposals = 10'000'000;

// Stream tags inside a skeleton's stream.
constexpr std::uint64_t kTagExtremum = 0x45585452ULL;
constexpr std::uint64_t kTagLayer = 0x4c415952ULL;
constexpr std::uint64_t kTagPoints = 0x504f4e54ULL;

double clamp_probability(double p) { return std::clamp(p, 0.0, 1.0); }

bool strictly_inside(double y, double lower, double upper) { return y > lower && y < upper; }

}  // namespace

double LayerSequence::half_width(int i, double t) const { return i * zeta * std::sqrt(t); }

double sample_inverse_gaussian(double mean, double shape, RandomStream& rng) {
  const double z = rng.normal();
  const double y = z * z;
  // mean * (1 + r - sqrt(r^2 + 2r)) written without cancellation
  const double r = mean * y / (2.0 * shape);
  const double x = mean / (1.0 + r + std::sqrt(r * r + 2.0 * r));
  return rng.uniform() * (mean + x) <= mean ? x : mean * mean / x;
}

double bridge_min_cdf(double y, double x, double x_end, double t) {
  if (y >= std::min(x, x_end)) return 1.0;
  return std::exp(-2.0 * (x - y) * (x_end - y) / t);
}

ExtremumDraw sample_bridge_min(double x, double x_end, double t, RandomStream& rng) {
  if (!(t > 0.0)) throw std::invalid_argument("sample_bridge_min: horizon must be positive");
  const double d = x - x_end;
  const double u = rng.uniform();
  const double m = std::min(0.5 * (x + x_end - std::sqrt(d * d - 2.0 * t * std::log(u))), std::min(x, x_end));

  // Given m, V = tau / (t - tau) has density proportional to
  // (1 + V) V^{-3/2} exp(-c1 / V - c2 V): a two-component inverse Gaussian mixture.
  const double c1 = (x - m) * (x - m) / (2.0 * t);
  const double c2 = (x_end - m) * (x_end - m) / (2.0 * t);
  if (c1 == 0.0) return {m, 0.0};
  if (c2 == 0.0) return {m, t};
  const double ratio = std::sqrt(c1 / c2);
  double v;
  if (rng.uniform() * (1.0 + ratio) < 1.0) {
    v = sample_inverse_gaussian(ratio, 2.0 * c1, rng);
  } else {
    v = 1.0 / sample_inverse_gaussian(1.0 / ratio, 2.0 * c2, rng);
  }
  double tau = std::isinf(v) ? t : t * v / (1.0 + v);
  tau = std::clamp(tau, 0.0, t);
  return {m, tau};
}

ExtremumDraw sample_bridge_max(double x, double x_end, double t, RandomStream& rng) {
  const ExtremumDraw low = sample_bridge_min(-x, -x_end, t, rng);
  return {-low.value, low.time};
}

double bridge_stay_probability_image(double y1, double y2, double h, double lower, double upper) {
  if (!strictly_inside(y1, lower, upper) || !strictly_inside(y2, lower, upper)) return 0.0;
  const double d = upper - lower;
  double p = 1.0;
  for (int j = 1; j <= kSeriesCap; ++j) {
    const double jd = j * d;
    const double sigma_term = std::exp(-2.0 * (jd + lower - y1) * (jd + lower - y2) / h) +
                              std::exp(-2.0 * (jd - upper + y1) * (jd - upper + y2) / h);
    const double tau_term = std::exp(-2.0 * jd * (jd + y2 - y1) / h) + std::exp(-2.0 * jd * (jd - y2 + y1) / h);
    p += tau_term - sigma_term;
    // both families decrease in j, so the remainder is bounded by the last terms
    if (sigma_term < kSeriesTolerance && tau_term < kSeriesTolerance) return clamp_probability(p);
  }
  throw BridgeError("bridge stay probability: image series did not converge");
}

double bridge_stay_probability_spectral(double y1, double y2, double h, double lower, double upper) {
  if (!strictly_inside(y1, lower, upper) || !strictly_inside(y2, lower, upper)) return 0.0;
  const double d = upper - lower;
  const double dy = y2 - y1;
  // divide the killed transition density by the free one
  const double log_scale = std::log(2.0 / d) + 0.5 * std::log(2.0 * std::numbers::pi * h) + dy * dy / (2.0 * h);
  const double rate = std::numbers::pi * std::numbers::pi * h / (2.0 * d * d);
  double p = 0.0;
  for (int n = 1; n <= kSeriesCap; ++n) {
    const double log_weight = log_scale - rate * n * n;
    const double weight = std::exp(log_weight);
    const double k = n * std::numbers::pi / d;
    p += weight * std::sin(k * (y1 - lower)) * std::sin(k * (y2 - lower));
    if (weight < kSeriesTolerance) return clamp_probability(p);
  }
  throw BridgeError("bridge stay probability: eigenfunction series did not converge");
}

double bridge_stay_probability(double y1, double y2, double h, double lower, double upper) {
  if (!(h > 0.0)) throw std::invalid_argument("bridge stay probability: horizon must be positive");
  const double d = upper - lower;
  if (h > 0.5 * d * d) return bridge_stay_probability_spectral(y1, y2, h, lower, upper);
  return bridge_stay_probability_image(y1, y2, h, lower, upper);
}

double bridge_exit_probability(double y1, double y2, double h, double lower, double upper) {
  if (!(h > 0.0)) throw std::invalid_argument("bridge exit probability: horizon must be positive");
  if (!strictly_inside(y1, lower, upper) || !strictly_inside(y2, lower, upper)) return 1.0;
  const double d = upper - lower;
  if (h > 0.5 * d * d) return 1.0 - bridge_stay_probability_spectral(y1, y2, h, lower, upper);
  // image series without the leading one, accurate when leaving is rare
  double p = 0.0;
  for (int j = 1; j <= kSeriesCap; ++j) {
    const double jd = j * d;
    const double sigma_term = std::exp(-2.0 * (jd + lower - y1) * (jd + lower - y2) / h) +
                              std::exp(-2.0 * (jd - upper + y1) * (jd - upper + y2) / h);
    const double tau_term = std::exp(-2.0 * jd * (jd + y2 - y1) / h) + std::exp(-2.0 * jd * (jd - y2 + y1) / h);
    p += sigma_term - tau_term;
    if (sigma_term < kSeriesTolerance * p && tau_term < kSeriesTolerance * p) return clamp_probability(p);
    if (sigma_term == 0.0 && tau_term == 0.0) return clamp_probability(p);
  }
  throw BridgeError("bridge exit probability: image series did not converge");
}

double layer_containment_probability(int i, double t, const LayerSequence& layers) {
  if (i <= 0) return 0.0;
  const double a = layers.half_width(i, t);
  return bridge_stay_probability(0.0, 0.0, t, -a, a);
}

BridgeSkeleton::BridgeSkeleton(double x, double x_end, double t, Mode mode, RandomStream stream)
    : x_(x), x_end_(x_end), t_(t), mode_(mode), stream_(stream) {
  if (!(t > 0.0) || !std::isfinite(t)) throw std::invalid_argument("bridge: horizon must be positive and finite");
  if (!std::isfinite(x) || !std::isfinite(x_end)) throw std::invalid_argument("bridge: endpoints must be finite");
}

BridgeSkeleton BridgeSkeleton::brownian(double x, double x_end, double t, RandomStream stream) {
  BridgeSkeleton b(x, x_end, t, Mode::plain, stream);
  b.nodes_ = {{0.0, {x, 0.0, 0.0}}, {t, {x_end, 0.0, 0.0}}};
  return b;
}

BridgeSkeleton BridgeSkeleton::with_extremum(double x, double x_end, double t, ExtremumKind kind,
                                             RandomStream stream) {
  RandomStream draw = stream.fork(kTagExtremum);
  const ExtremumDraw e =
      kind == ExtremumKind::minimum ? sample_bridge_min(x, x_end, t, draw) : sample_bridge_max(x, x_end, t, draw);
  return with_extremum(x, x_end, t, Extremum{kind, e.value, e.time}, stream);
}

BridgeSkeleton BridgeSkeleton::with_extremum(double x, double x_end, double t, const Extremum& extremum,
                                             RandomStream stream) {
  BridgeSkeleton b(x, x_end, t, Mode::extremum, stream);
  const double sign = extremum.kind == ExtremumKind::minimum ? 1.0 : -1.0;
  const double gap_start = sign * (x - extremum.value);
  const double gap_end = sign * (x_end - extremum.value);
  if (gap_start < 0.0 || gap_end < 0.0 || extremum.time < 0.0 || extremum.time > t) {
    throw std::invalid_argument("bridge: extremum inconsistent with endpoints");
  }
  b.extremum_ = extremum;
  // each side of the extremum time is a Bessel(3) bridge: the norm of a 3-d Brownian bridge
  b.nodes_.push_back({0.0, {gap_start, 0.0, 0.0}});
  if (extremum.time > 0.0 && extremum.time < t) b.nodes_.push_back({extremum.time, {0.0, 0.0, 0.0}});
  b.nodes_.push_back({t, {gap_end, 0.0, 0.0}});
  return b;
}

BridgeSkeleton BridgeSkeleton::layered(double x, double x_end, double t, const LayerSequence& layers,
                                       RandomStream stream) {
  if (!(layers.zeta > 0.0)) throw std::invalid_argument("bridge: layer spacing must be positive");
  BridgeSkeleton b(x, x_end, t, Mode::layered, stream);
  const double u = stream.fork(kTagLayer).uniform();
  int index = 1;
  while (layer_containment_probability(index, t, layers) < u) {
    if (++index > kMaxLayerIndex) throw BridgeError("bridge: layer index exceeded cap");
  }
  const double outer = layers.half_width(index, t);
  const double inner = layers.half_width(index - 1, t);
  b.layer_ = Layer{index, std::min(x, x_end) - outer, std::max(x, x_end) + outer};
  b.nodes_ = {{0.0, {0.0, 0.0, 0.0}}, {t, {0.0, 0.0, 0.0}}};
  b.constraints_ = {Constraint{index > 1, outer, inner}};
  return b;
}

PathRange BridgeSkeleton::range() const noexcept {
  if (layer_) return {layer_->lower, layer_->upper};
  if (extremum_) {
    if (extremum_->kind == ExtremumKind::minimum) return {extremum_->value, kInf};
    return {-kInf, extremum_->value};
  }
  return {};
}

double BridgeSkeleton::node_value(const Node& node) const noexcept {
  switch (mode_) {
    case Mode::plain:
      return node.coord[0];
    case Mode::extremum: {
      const double r = std::hypot(node.coord[0], node.coord[1], node.coord[2]);
      return extremum_->kind == ExtremumKind::minimum ? extremum_->value + r : extremum_->value - r;
    }
    case Mode::layered:
      return x_ + (x_end_ - x_) * (node.time / t_) + node.coord[0];
  }
  return 0.0;
}

std::vector<BridgePoint> BridgeSkeleton::points() const {
  std::vector<BridgePoint> out;
  out.reserve(nodes_.size());
  for (const Node& n : nodes_) out.push_back({n.time, node_value(n)});
  // endpoints are exact by construction
  out.front().value = x_;
  out.back().value = x_end_;
  return out;
}

double BridgeSkeleton::value_at(double s) {
  if (!(s >= 0.0 && s <= t_)) throw std::out_of_range("bridge: time outside [0, t]");
  if (s == 0.0) return x_;
  if (s == t_) return x_end_;
  const auto it = std::lower_bound(nodes_.begin(), nodes_.end(), s,
                                   [](const Node& n, double time) { return n.time < time; });
  const auto right = static_cast<std::size_t>(it - nodes_.begin());
  if (it->time != s) {
    if (mode_ == Mode::layered) {
      insert_layered(right, s);
    } else {
      insert_gaussian(right, s);
    }
  }
  return node_value(nodes_[right]);
}

BandSplit split_band_segment(double b1, double b2, double h1, double h2, double outer, double inner,
                             RandomStream& rng) {
  const bool shell = inner > 0.0;
  const double mean = b1 + (b2 - b1) * h1 / (h1 + h2);
  const double sd = std::sqrt(h1 * h2 / (h1 + h2));

  // Leaving the inner band is bounded by the single-barrier crossing
  // probabilities, each exp(linear in z); bridge density times their sum is a
  // Gaussian mixture. It is the proposal whenever that bound is below one.
  struct Tilt {
    double slope, log_weight;
  };
  std::array<Tilt, 4> tilts{};
  bool tilted = false;
  if (shell && std::abs(b1) < inner && std::abs(b2) < inner) {
    const double a = inner;
    const std::array<std::pair<double, double>, 4> lin{{{2.0 * (a - b1) / h1, -2.0 * a * (a - b1) / h1},
                                                        {-2.0 * (a + b1) / h1, -2.0 * a * (a + b1) / h1},
                                                        {2.0 * (a - b2) / h2, -2.0 * a * (a - b2) / h2},
                                                        {-2.0 * (a + b2) / h2, -2.0 * a * (a + b2) / h2}}};
    double total = 0.0;
    for (std::size_t j = 0; j < 4; ++j) {
      const auto [slope, offset] = lin[j];
      tilts[j] = {slope, offset + slope * mean + 0.5 * slope * slope * sd * sd};
      total += std::exp(tilts[j].log_weight);
    }
    tilted = total < 1.0;
  }
  double top = tilts[0].log_weight, norm = 0.0;
  for (const Tilt& k : tilts) top = std::max(top, k.log_weight);
  for (const Tilt& k : tilts) norm += std::exp(k.log_weight - top);

  for (long attempt = 0; attempt < kMaxProposals; ++attempt) {
    double z, v;
    if (tilted) {
      double pick = rng.uniform() * norm;
      std::size_t j = 0;
      for (; j < 3 && pick >= std::exp(tilts[j].log_weight - top); ++j) pick -= std::exp(tilts[j].log_weight - top);
      z = mean + tilts[j].slope * sd * sd + sd * rng.normal();
      double bound = 0.0;
      for (const Tilt& k : tilts) bound += std::exp(k.log_weight + k.slope * (z - mean) - 0.5 * k.slope * k.slope * sd * sd);
      v = rng.uniform() * bound;
    } else {
      z = mean + sd * rng.normal();
      v = rng.uniform();
    }
    if (std::abs(z) >= outer) continue;
    const double left_leave_outer = bridge_exit_probability(b1, z, h1, -outer, outer);
    const double right_leave_outer = bridge_exit_probability(z, b2, h2, -outer, outer);
    if (!shell) {
      if (v < (1.0 - left_leave_outer) * (1.0 - right_leave_outer)) return {z, false, false};
      continue;
    }
    const double left_leave_inner = bridge_exit_probability(b1, z, h1, -inner, inner);
    const double right_leave_inner = bridge_exit_probability(z, b2, h2, -inner, inner);
    const double right_in = 1.0 - right_leave_inner, left_in = 1.0 - left_leave_inner;
    // leaves the inner band but not the outer one
    const double left_exit = std::max(0.0, left_leave_inner - left_leave_outer);
    const double right_exit = std::max(0.0, right_leave_inner - right_leave_outer);
    const double only_left = left_exit * right_in;
    const double only_right = left_in * right_exit;
    const double both = left_exit * right_exit;
    if (v < only_left) return {z, true, false};
    if (v < only_left + only_right) return {z, false, true};
    if (v < only_left + only_right + both) return {z, true, true};
  }
  throw BridgeError("bridge: conditioned refinement exceeded the proposal cap");
}

void BridgeSkeleton::refine(std::span<const double> times) {
  for (double s : times) (void)value_at(s);
}

void BridgeSkeleton::insert_gaussian(std::size_t right, double s) {
  const Node& a = nodes_[right - 1];
  const Node& b = nodes_[right];
  const double w = (s - a.time) / (b.time - a.time);
  const double sd = std::sqrt((s - a.time) * (b.time - s) / (b.time - a.time));
  RandomStream rng = stream_.fork(kTagPoints, time_tag(s));
  Node node{s, {}};
  const int dims = mode_ == Mode::extremum ? 3 : 1;
  for (int k = 0; k < dims; ++k) node.coord[k] = a.coord[k] + w * (b.coord[k] - a.coord[k]) + sd * rng.normal();
  nodes_.insert(nodes_.begin() + static_cast<std::ptrdiff_t>(right), node);
}

void BridgeSkeleton::insert_layered(std::size_t right, double s) {
  const double s1 = nodes_[right - 1].time, s2 = nodes_[right].time;
  const double b1 = nodes_[right - 1].coord[0], b2 = nodes_[right].coord[0];
  const Constraint c = constraints_[right - 1];
  const double h1 = s - s1, h2 = s2 - s;
  RandomStream rng = stream_.fork(kTagPoints, time_tag(s));

  const BandSplit split = split_band_segment(b1, b2, h1, h2, c.outer, c.shell ? c.inner : 0.0, rng);
  const Constraint free_half{false, c.shell ? c.inner : c.outer, 0.0};
  const Constraint shell{true, c.outer, c.inner};
  nodes_.insert(nodes_.begin() + static_cast<std::ptrdiff_t>(right), Node{s, {split.value, 0.0, 0.0}});
  constraints_[right - 1] = split.left_leaves ? shell : free_half;
  constraints_.insert(constraints_.begin() + static_cast<std::ptrdiff_t>(right), split.right_leaves ? shell : free_half);
}

bool operator==(const BridgeSkeleton& a, const BridgeSkeleton& b) {
  const auto same_extremum = [](const std::optional<Extremum>& p, const std::optional<Extremum>& q) {
    if (p.has_value() != q.has_value()) return false;
    return !p || (p->kind == q->kind && p->value == q->value && p->time == q->time);
  };
  const auto same_layer = [](const std::optional<Layer>& p, const std::optional<Layer>& q) {
    if (p.has_value() != q.has_value()) return false;
    return !p || (p->index == q->index && p->lower == q->lower && p->upper == q->upper);
  };
  return a.x_ == b.x_ && a.x_end_ == b.x_end_ && a.t_ == b.t_ && a.mode_ == b.mode_ &&
         a.stream_.key() == b.stream_.key() && same_extremum(a.extremum_, b.extremum_) &&
         same_layer(a.layer_, b.layer_) && a.nodes_ == b.nodes_ && a.constraints_ == b.constraints_;
}

}  // namespace gpesmc
