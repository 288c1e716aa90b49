// Test-only oracle: law of a Brownian bridge value at the half-way time given
// its minimum and argmin. Fine-grid bridges (step 1e-4) are kept when their
// continuous minimum and argmin fall in a small bin. Shares no code with the
// library; its output is frozen into tests/fixtures.
//
// Only [0, t/2] is simulated: given the half-way value, the right half is an
// independent bridge and is accepted with its exact probability of staying
// above the left minimum.
//
// usage: bessel_rejection_oracle <out.json> [accepted] [step]

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <string>
#include <vector>

namespace {

struct Xoshiro256 {
  std::array<std::uint64_t, 4> s{};
  explicit Xoshiro256(std::uint64_t seed) {
    for (auto& w : s) {
      seed += 0x9e3779b97f4a7c15ULL;
      std::uint64_t z = seed;
      z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
      z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
      w = z ^ (z >> 31);
    }
  }
  static std::uint64_t rotl(std::uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
  std::uint64_t next() {
    const std::uint64_t result = rotl(s[1] * 5, 7) * 9;
    const std::uint64_t t = s[1] << 17;
    s[2] ^= s[0];
    s[3] ^= s[1];
    s[1] ^= s[2];
    s[0] ^= s[3];
    s[2] ^= t;
    s[3] = rotl(s[3], 45);
    return result;
  }
  double uniform() { return (static_cast<double>(next() >> 11) + 0.5) * 0x1.0p-53; }
  // polar Marsaglia
  double normal() {
    if (has_spare) {
      has_spare = false;
      return spare;
    }
    double u, v, q;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      q = u * u + v * v;
    } while (q >= 1.0);
    const double f = std::sqrt(-2.0 * std::log(q) / q);
    spare = v * f;
    has_spare = true;
    return u * f;
  }
  bool has_spare = false;
  double spare = 0.0;
};

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: %s out.json [accepted] [step]\n", argv[0]);
    return 2;
  }
  const long wanted = argc > 2 ? std::stol(argv[2]) : 10000;
  const double step = argc > 3 ? std::stod(argv[3]) : 1e-4;
  const double x = 0.0, x_end = 0.5, t = 1.0;
  const double m = -0.6, tau = 0.3, half_bin = 0.01;
  const double half = 0.5 * t;
  const int n = static_cast<int>(std::lround(half / step));
  const double h = half / n;
  const double sh = std::sqrt(h);

  Xoshiro256 rng(977);
  std::vector<double> path(n + 1);
  std::vector<double> accepted;
  long tried = 0;
  while (static_cast<long>(accepted.size()) < wanted) {
    ++tried;
    const double mid = 0.5 * (x + x_end) + std::sqrt(t / 4.0) * rng.normal();
    if (mid <= m - half_bin) continue;
    // free Brownian path, then pinned to mid at t/2
    path[0] = x;
    for (int j = 1; j <= n; ++j) path[j] = path[j - 1] + sh * rng.normal();
    const double shift = path[n] - mid;
    double grid_min = path[0];
    for (int j = 1; j <= n; ++j) {
      path[j] -= shift * (static_cast<double>(j) / n);
      grid_min = std::min(grid_min, path[j]);
    }
    if (grid_min < m - half_bin - 0.1 || grid_min > m + half_bin + 0.1) continue;
    // exact continuous minimum inside each candidate grid interval
    double low = grid_min, low_time = 0.0;
    bool found = false;
    const double reach = 8.0 * sh;
    for (int j = 0; j < n; ++j) {
      const double a = path[j], b = path[j + 1];
      if (std::min(a, b) > grid_min + reach) continue;
      const double d = a - b;
      const double im = 0.5 * (a + b - std::sqrt(d * d - 2.0 * h * std::log(rng.uniform())));
      if (!found || im < low) {
        low = im;
        low_time = (j + 0.5) * h;
        found = true;
      }
    }
    if (std::abs(low - m) > half_bin || std::abs(low_time - tau) > half_bin) continue;
    // right half must stay above the minimum
    const double stay = 1.0 - std::exp(-2.0 * (mid - low) * (x_end - low) / half);
    if (rng.uniform() >= stay) continue;
    accepted.push_back(mid);
    if (accepted.size() % 500 == 0) std::fprintf(stderr, "%zu accepted / %ld tried\n", accepted.size(), tried);
  }

  std::ofstream out(argv[1]);
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "{\"x\": %.17g, \"x_end\": %.17g, \"t\": %.17g, \"minimum\": %.17g, \"argmin\": %.17g, "
                "\"half_bin\": %.17g, \"step\": %.17g, \"tried\": %ld, \"midpoint_values\": [",
                x, x_end, t, m, tau, half_bin, step, tried);
  out << buf;
  for (std::size_t i = 0; i < accepted.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%s%.17g", i ? ", " : "", accepted[i]);
    out << buf;
  }
  out << "]}\n";
  return 0;
}
