// Test-only oracle: transition densities of the transformed diffusions,
// estimated by fine-grid Euler-Maruyama in ORIGINAL coordinates followed by a
// kernel density estimate in Lamperti coordinates. Shares no code with the
// library; its output is frozen into tests/fixtures.
//
// usage: euler_kde_oracle <out.json> [paths] [step]

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
};

// Marsaglia-Tsang ziggurat (128 layers) for standard normals.
class Ziggurat {
 public:
  explicit Ziggurat(Xoshiro256& rng) : rng_(rng) {
    const double m1 = 2147483648.0;
    double dn = 3.442619855899, tn = dn;
    const double vn = 9.91256303526217e-3;
    const double q = vn / std::exp(-0.5 * dn * dn);
    kn_[0] = static_cast<std::uint32_t>((dn / q) * m1);
    kn_[1] = 0;
    wn_[0] = q / m1;
    wn_[127] = dn / m1;
    fn_[0] = 1.0;
    fn_[127] = std::exp(-0.5 * dn * dn);
    for (int i = 126; i >= 1; --i) {
      dn = std::sqrt(-2.0 * std::log(vn / dn + std::exp(-0.5 * dn * dn)));
      kn_[i + 1] = static_cast<std::uint32_t>((dn / tn) * m1);
      tn = dn;
      fn_[i] = std::exp(-0.5 * dn * dn);
      wn_[i] = dn / m1;
    }
  }
  double operator()() {
    for (;;) {
      const auto hz = static_cast<std::int32_t>(rng_.next() >> 32);
      const std::uint32_t iz = hz & 127;
      const std::uint32_t ahz = hz < 0 ? static_cast<std::uint32_t>(-(static_cast<std::int64_t>(hz))) : static_cast<std::uint32_t>(hz);
      if (ahz < kn_[iz]) return hz * wn_[iz];
      if (iz == 0) {
        constexpr double r = 3.442619855899;
        double x, y;
        do {
          x = -std::log(rng_.uniform()) / r;
          y = -std::log(rng_.uniform());
        } while (y + y < x * x);
        return hz > 0 ? r + x : -r - x;
      }
      const double x = hz * wn_[iz];
      if (fn_[iz] + rng_.uniform() * (fn_[iz - 1] - fn_[iz]) < std::exp(-0.5 * x * x)) return x;
    }
  }

 private:
  Xoshiro256& rng_;
  std::array<std::uint32_t, 128> kn_{};
  std::array<double, 128> wn_{}, fn_{};
};

struct Case {
  std::string model;
  std::array<double, 3> theta;
  double x0;
  double horizon;
  std::vector<double> offsets;  // u_end - u0
  // original-coordinate SDE
  double (*drift)(double, const std::array<double, 3>&);
  double (*diffusion)(double, const std::array<double, 3>&);
  double (*to_u)(double, const std::array<double, 3>&);
  double (*from_u)(double, const std::array<double, 3>&);
  double lo, hi;  // state domain
};

double lg_drift(double x, const std::array<double, 3>& p) { return p[0] * x * (1.0 - x / p[1]); }
double lg_diff(double x, const std::array<double, 3>& p) { return p[2] * x; }
double lg_to_u(double x, const std::array<double, 3>& p) { return -std::log(x) / p[2]; }
double lg_from_u(double u, const std::array<double, 3>& p) { return std::exp(-p[2] * u); }

double gen_drift(double v, const std::array<double, 3>& p) { return p[0] - p[1] * v; }
double gen_diff(double v, const std::array<double, 3>& p) { return p[2] * v * (1.0 - v); }
double gen_to_u(double v, const std::array<double, 3>& p) { return (std::log(v) - std::log1p(-v)) / p[2]; }
double gen_from_u(double u, const std::array<double, 3>& p) { return 1.0 / (1.0 + std::exp(-p[2] * u)); }

// Fourth-order Gaussian kernel.
double kernel4(double z) {
  return 0.5 * (3.0 - z * z) * std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
}

void run_case(const Case& c, long paths, double step, double bandwidth, std::uint64_t seed,
              std::ofstream& out, bool last) {
  const int steps = static_cast<int>(std::lround(c.horizon / step));
  const double sqrt_step = std::sqrt(step);
  const double u0 = c.to_u(c.x0, c.theta);
  const std::size_t m = c.offsets.size();
  std::vector<double> sum(m, 0.0), sum_sq(m, 0.0);
  long exits = 0;
  Xoshiro256 rng(seed);
  Ziggurat normal(rng);
  for (long p = 0; p < paths; ++p) {
    double x = c.x0;
    bool exited = false;
    for (int s = 0; s < steps; ++s) {
      x += c.drift(x, c.theta) * step + c.diffusion(x, c.theta) * sqrt_step * normal();
      if (!(x > c.lo && x < c.hi)) {
        exited = true;
        break;
      }
    }
    if (exited) {
      ++exits;
      continue;  // contributes zero density to every interior endpoint
    }
    const double u = c.to_u(x, c.theta);
    for (std::size_t j = 0; j < m; ++j) {
      const double k = kernel4((u - (u0 + c.offsets[j])) / bandwidth) / bandwidth;
      sum[j] += k;
      sum_sq[j] += k * k;
    }
    if ((p + 1) % 1000000 == 0) {
      std::fprintf(stderr, "%s: %ld paths\n", c.model.c_str(), p + 1);
    }
  }
  for (std::size_t j = 0; j < m; ++j) {
    const double mean = sum[j] / paths;
    const double var = sum_sq[j] / paths - mean * mean;
    const double se = std::sqrt(var / paths);
    const double u_end = u0 + c.offsets[j];
    char buf[512];
    std::snprintf(buf, sizeof buf,
                  "  {\"model\": \"%s\", \"theta\": [%.17g, %.17g, %.17g], \"t\": %.17g, "
                  "\"x\": %.17g, \"x_end\": %.17g, \"u\": %.17g, \"u_end\": %.17g, "
                  "\"q_tilde\": %.17g, \"se\": %.17g, \"paths\": %ld, \"step\": %.17g, "
                  "\"bandwidth\": %.17g, \"exits\": %ld}%s\n",
                  c.model.c_str(), c.theta[0], c.theta[1], c.theta[2], c.horizon, c.x0,
                  c.from_u(u_end, c.theta), u0, u_end, mean, se, paths, step, bandwidth, exits,
                  (last && j + 1 == m) ? "" : ",");
    out << buf;
    out.flush();
  }
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 2) {
    std::fprintf(stderr, "usage: %s out.json [paths] [step]\n", argv[0]);
    return 2;
  }
  const long paths = argc > 2 ? std::stol(argv[2]) : 10000000L;
  const double step = argc > 3 ? std::stod(argv[3]) : 1e-4;
  const std::vector<Case> cases = {
      {"log_growth", {0.1, 1000.0, 0.1}, 800.0, 1.0, {-1.2, -0.15, 0.9},
       lg_drift, lg_diff, lg_to_u, lg_from_u, 0.0, INFINITY},
      {"genetics", {0.05, 0.1, 1.0}, 0.3, 1.0, {-0.8, 0.3, 1.2},
       gen_drift, gen_diff, gen_to_u, gen_from_u, 0.0, 1.0},
  };
  std::ofstream out(argv[1]);
  out << "[\n";
  for (std::size_t i = 0; i < cases.size(); ++i) {
    run_case(cases[i], paths, step, 0.05, 20240611ULL + i, out, i + 1 == cases.size());
  }
  out << "]\n";
  return 0;
}
