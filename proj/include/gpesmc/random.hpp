#ifndef GPESMC_RANDOM_HPP
#define GPESMC_RANDOM_HPP

#include <cstdint>
#include <limits>

namespace gpesmc {

/// SplitMix64 finaliser; a bijective 64-bit mixer.
std::uint64_t mix64(std::uint64_t z) noexcept;

/// Bit pattern of a time value, used to key refinement streams by time.
std::uint64_t time_tag(double t) noexcept;

/**
 * Counter-based random stream.
 *
 * Output number j of a stream is a pure function of (key, j), and child
 * streams are derived from the parent key alone. Results therefore depend only
 * on how streams are keyed, never on scheduling or on how many numbers other
 * streams consumed. Satisfies UniformRandomBitGenerator.
 */
class RandomStream {
 public:
  using result_type = std::uint64_t;

  explicit RandomStream(std::uint64_t key = 0) noexcept : key_(mix64(key ^ 0x6a09e667f3bcc909ULL)) {}

  /// Independent child stream; does not advance this stream.
  [[nodiscard]] RandomStream fork(std::uint64_t tag) const noexcept;
  [[nodiscard]] RandomStream fork(std::uint64_t a, std::uint64_t b) const noexcept { return fork(a).fork(b); }

  [[nodiscard]] std::uint64_t key() const noexcept { return key_; }
  [[nodiscard]] std::uint64_t position() const noexcept { return counter_; }

  std::uint64_t next_u64() noexcept;
  result_type operator()() noexcept { return next_u64(); }
  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  /// Uniform on the open interval (0, 1).
  double uniform() noexcept;
  /// Standard normal (Box-Muller, two uniforms per call).
  double normal() noexcept;
  /// Exponential with unit rate.
  double exponential() noexcept;
  /// Student t with integer degrees of freedom.
  double student_t(int dof) noexcept;

 private:
  struct Raw {};
  RandomStream(std::uint64_t key, Raw) noexcept : key_(key) {}

  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace gpesmc

#endif  // GPESMC_RANDOM_HPP
