#include "gpesmc/random.hpp"

#include <bit>
#include <cmath>
#include <numbers>

namespace gpesmc {

std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::uint64_t time_tag(double t) noexcept {
  // +0.0 and -0.0 must map to the same stream
  return std::bit_cast<std::uint64_t>(t == 0.0 ? 0.0 : t);
}

RandomStream RandomStream::fork(std::uint64_t tag) const noexcept {
  return RandomStream(mix64(key_ ^ mix64(tag + 0xd1b54a32d192ed03ULL)), Raw{});
}

std::uint64_t RandomStream::next_u64() noexcept {
  const std::uint64_t j = counter_++;
  return mix64(key_ + j * 0x9e3779b97f4a7c15ULL);
}

double RandomStream::uniform() noexcept {
  return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
}

double RandomStream::normal() noexcept {
  const double u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

double RandomStream::exponential() noexcept { return -std::log(uniform()); }

double RandomStream::student_t(int dof) noexcept {
  const double z = normal();
  double chi2 = 0.0;
  // pairs of unit exponentials give chi-square(2) increments
  int remaining = dof;
  while (remaining >= 2) {
    chi2 += 2.0 * exponential();
    remaining -= 2;
  }
  if (remaining == 1) {
    const double w = normal();
    chi2 += w * w;
  }
  return z / std::sqrt(chi2 / dof);
}

}  // namespace gpesmc
