#include <doctest.h>

#include <cmath>
#include <limits>
#include <vector>

#include "gpesmc/models.hpp"
#include "gpesmc/random.hpp"

using namespace gpesmc;

namespace {

Parameters random_theta(const DiffusionModel& model, RandomStream& s) {
  if (model.name() == "log_growth") {
    return {{0.02 + 0.5 * s.uniform(), 100.0 + 2000.0 * s.uniform(), 0.05 + 0.5 * s.uniform()}, 0.1};
  }
  if (model.name() == "genetics") {
    return {{0.01 + 0.2 * s.uniform(), 0.01 + 0.4 * s.uniform(), 0.3 + 1.5 * s.uniform()}, 0.1};
  }
  return {{-2.0 + 4.0 * s.uniform()}, 0.1};
}

double random_state(const DiffusionModel& model, const Diffusion& d, RandomStream& s) {
  if (model.name() == "log_growth") return d.parameters().values[1] * std::exp(2.0 * (s.uniform() - 0.5));
  if (model.name() == "genetics") return 0.01 + 0.98 * s.uniform();
  return -10.0 + 20.0 * s.uniform();
}

// transformed-coordinate window where the model's states are plausible
std::pair<double, double> transformed_window(const DiffusionModel& model, const Diffusion& d) {
  if (model.name() == "log_growth") {
    const double c = d.eta(d.parameters().values[1]);
    return {c - 30.0, c + 30.0};
  }
  if (model.name() == "genetics") {
    const double s = d.parameters().values[2];
    return {-12.0 / s, 12.0 / s};
  }
  return {-20.0, 20.0};
}

const std::vector<std::unique_ptr<DiffusionModel>>& all_models() {
  static const std::vector<std::unique_ptr<DiffusionModel>> models = [] {
    std::vector<std::unique_ptr<DiffusionModel>> m;
    m.push_back(make_model("log_growth"));
    m.push_back(make_model("genetics"));
    m.push_back(make_model("const_drift"));
    return m;
  }();
  return models;
}

}  // namespace

TEST_CASE("transform fixed points") {
  const auto lg = make_model("log_growth")->bind({{0.1, 1000.0, 0.1}, 0.1});
  CHECK(lg->eta(1.0) == 0.0);
  CHECK(lg->eta(std::exp(-0.1)) == doctest::Approx(1.0).epsilon(1e-14));
  const auto gen = make_model("genetics")->bind({{0.05, 0.1, 1.0}, 0.1});
  CHECK(gen->eta(0.5) == 0.0);
  CHECK_THROWS_AS((void)lg->eta(0.0), DomainError);
  CHECK_THROWS_AS((void)lg->eta(-1.0), DomainError);
  CHECK_THROWS_AS((void)gen->eta(1.0), DomainError);
  CHECK_THROWS_AS((void)gen->eta(0.0), DomainError);
}

TEST_CASE("log-growth drift closed forms") {
  const double kappa = 0.1, cap = 1000.0, sigma = 0.1;
  const auto lg = make_model("log_growth")->bind({{kappa, cap, sigma}, 0.1});
  CHECK(lg->alpha(0.0) == doctest::Approx(sigma / 2 - kappa / sigma + kappa / (sigma * cap)).epsilon(1e-14));
  // kappa -> 0 leaves sigma/2
  const auto flat = make_model("log_growth")->bind({{1e-300, cap, sigma}, 0.1});
  for (double u : {-50.0, 0.0, 30.0}) CHECK(flat->alpha(u) == doctest::Approx(sigma / 2).epsilon(1e-14));
}

TEST_CASE("constant-drift model collapses") {
  const auto d = make_model("const_drift")->bind({{0.7}, 0.1});
  for (double u : {-3.0, 0.0, 2.5}) {
    CHECK(d->alpha(u) == 0.7);
    CHECK(d->phi(u) == 0.0);
  }
  CHECK(d->antiderivative(2.0) - d->antiderivative(-1.0) == doctest::Approx(0.7 * 3.0));
  CHECK(d->lower_bound() == doctest::Approx(0.245));
  const PhiBounds b = d->phi_bounds({});
  CHECK(b.lower == 0.0);
  CHECK(b.upper == 0.0);
}

TEST_CASE("parameter validation") {
  const auto lg = make_model("log_growth");
  CHECK_THROWS_AS((void)lg->bind({{0.1, 1000.0}, 0.1}), DomainError);
  CHECK_THROWS_AS((void)lg->bind({{0.1, -1.0, 0.1}, 0.1}), DomainError);
  CHECK_THROWS_AS((void)make_model("genetics")->bind({{0.1, 0.1, 0.0}, 0.1}), DomainError);
  CHECK_NOTHROW((void)make_model("genetics")->bind({{-0.1, -0.1, 1.0}, 0.1}));
  CHECK_THROWS_AS((void)make_model("nonsense"), std::invalid_argument);
}

TEST_CASE("round trip through the transform") {
  RandomStream s(101);
  for (const auto& model : all_models()) {
    for (int i = 0; i < 1000; ++i) {
      const auto d = model->bind(random_theta(*model, s));
      const double x = random_state(*model, *d, s);
      const double back = d->eta_inv(d->eta(x));
      REQUIRE(std::abs(back - x) <= 1e-12 * std::max(1.0, std::abs(x)));
    }
  }
}

TEST_CASE("finite-difference consistency of alpha, alpha' and the antiderivative") {
  RandomStream s(202);
  for (const auto& model : all_models()) {
    for (int i = 0; i < 200; ++i) {
      const auto d = model->bind(random_theta(*model, s));
      const auto [lo, hi] = transformed_window(*model, *d);
      const double u = lo + (hi - lo) * s.uniform();
      const double h = 1e-5;
      const double da = (d->alpha(u + h) - d->alpha(u - h)) / (2 * h);
      const double scale_a = std::max({1.0, std::abs(d->alpha_prime(u)), std::abs(d->alpha(u))});
      CHECK(std::abs(da - d->alpha_prime(u)) <= 1e-6 * scale_a);
      const double dA = (d->antiderivative(u + h) - d->antiderivative(u)) / h;
      const double mid = d->alpha(u + h / 2);
      CHECK(std::abs(dA - mid) <= 1e-6 * std::max({1.0, std::abs(mid), std::abs(d->antiderivative(u)) * 1e-3}));
    }
  }
}

TEST_CASE("log-growth antiderivative matches to 1e-8 relative") {
  const auto d = make_model("log_growth")->bind({{0.1, 1000.0, 0.1}, 0.1});
  for (double u : {-75.0, -69.0, -60.0, -40.0, 0.0}) {
    const double h = 1e-5;
    const double fd = (d->antiderivative(u + h) - d->antiderivative(u)) / h;
    CHECK(std::abs(fd - d->alpha(u + h / 2)) <= 1e-8 * std::max(1.0, std::abs(d->alpha(u + h / 2))) * 
          std::max(1.0, std::abs(d->antiderivative(u)) / 1e3));
  }
}

TEST_CASE("drift functional is nonnegative on a dense grid") {
  RandomStream s(303);
  for (const auto& model : all_models()) {
    for (int i = 0; i < 50; ++i) {
      const auto d = model->bind(random_theta(*model, s));
      const auto [lo, hi] = transformed_window(*model, *d);
      for (int j = 0; j <= 20000; ++j) {
        const double u = lo + (hi - lo) * j / 20000.0;
        REQUIRE(d->phi(u) >= -1e-12);
      }
    }
  }
}

TEST_CASE("lower bound is attained up to slack (genetics)") {
  const auto d = make_model("genetics")->bind({{0.05, 0.1, 1.0}, 0.1});
  double lowest = std::numeric_limits<double>::infinity();
  for (int j = 0; j <= 200000; ++j) lowest = std::min(lowest, d->phi(-15.0 + 30.0 * j / 200000.0));
  CHECK(lowest >= -1e-12);
  CHECK(lowest < 1e-6);
}

TEST_CASE("phi bounds bracket phi over sampled layers") {
  RandomStream s(404);
  for (const auto& model : all_models()) {
    for (int i = 0; i < 100; ++i) {
      const auto d = model->bind(random_theta(*model, s));
      const auto [lo, hi] = transformed_window(*model, *d);
      const double a = lo + (hi - lo) * s.uniform();
      const double b = a + (hi - lo) * 0.2 * s.uniform();
      PathRange range{a, model->name() == "log_growth" ? std::numeric_limits<double>::infinity() : b};
      const PhiBounds bounds = d->phi_bounds(range);
      REQUIRE(std::isfinite(bounds.upper));
      REQUIRE(bounds.lower <= bounds.upper);
      const double top = std::isfinite(range.hi) ? range.hi : a + 60.0 / d->parameters().values.back();
      for (int j = 0; j < 10000; ++j) {
        const double u = j == 0 ? a : (j == 1 ? top : a + (top - a) * s.uniform());
        const double p = d->phi(u);
        REQUIRE(p >= bounds.lower);
        REQUIRE(p <= bounds.upper);
      }
    }
  }
}

TEST_CASE("log-growth phi upper bound agrees with a dense grid search") {
  const auto d = make_model("log_growth")->bind({{0.1, 1000.0, 0.1}, 0.1});
  for (double m : {-75.0, -69.5, -60.0}) {
    const PhiBounds window = d->phi_bounds({m, m + 50.0});
    const PhiBounds open = d->phi_bounds({m, std::numeric_limits<double>::infinity()});
    double prev = -1.0, grid_max = 0.0;
    for (int n = 1000; n <= 4096000; n *= 4) {
      grid_max = 0.0;
      for (int j = 0; j <= n; ++j) grid_max = std::max(grid_max, d->phi(m + 50.0 * j / n));
      if (std::abs(grid_max - prev) < 1e-8) break;
      prev = grid_max;
    }
    CHECK(window.upper >= grid_max);
    CHECK(window.upper - grid_max < 1e-8);
    CHECK(open.upper >= window.upper);
  }
}

TEST_CASE("phi bounds need the declared layer") {
  const auto gen = make_model("genetics")->bind({{0.05, 0.1, 1.0}, 0.1});
  CHECK_THROWS_AS((void)gen->phi_bounds({-1.0, std::numeric_limits<double>::infinity()}), LayerError);
  const auto lg = make_model("log_growth")->bind({{0.1, 1000.0, 0.1}, 0.1});
  CHECK_THROWS_AS((void)lg->phi_bounds({}), LayerError);
}

TEST_CASE("simulate_data") {
  SUBCASE("zero observation noise reproduces the latent path") {
    const auto model = make_model("log_growth");
    const SimulatedData data = simulate_data(*model, {{0.1, 1000.0, 0.1}, 0.0}, 20, 1000.0, 5);
    REQUIRE(data.observations.size() == 21);
    for (std::size_t k = 0; k < data.latent.size(); ++k) {
      CHECK(data.observations[k].k == static_cast<int>(k));
      CHECK(data.observations[k].y == data.latent[k]);
    }
  }
  SUBCASE("constant-drift increments have the N(c, 1) law") {
    const auto model = make_model("const_drift");
    for (double c : {0.0, 0.5}) {
      const int n = 10000;
      const SimulatedData data = simulate_data(*model, {{c}, 0.1}, n, 0.0, 17, {0.1, 20});
      double s = 0, s2 = 0;
      for (int k = 0; k < n; ++k) {
        const double d = data.latent[k + 1] - data.latent[k];
        s += d;
        s2 += d * d;
      }
      const double mean = s / n, var = s2 / n - mean * mean;
      CHECK(std::abs(mean - c) < 3.0 / std::sqrt(n));
      CHECK(std::abs(var - 1.0) < 3.0 * std::sqrt(2.0 / n));
    }
  }
  SUBCASE("genetics paths stay inside (0, 1)") {
    const auto model = make_model("genetics");
    const SimulatedData data = simulate_data(*model, {{0.05, 0.1, 1.0}, 0.1}, 200, 0.5, 9);
    for (double v : data.latent) CHECK((v > 0.0 && v < 1.0));
  }
  SUBCASE("reproducible from the seed") {
    const auto model = make_model("genetics");
    const auto a = simulate_data(*model, {{0.05, 0.1, 1.0}, 0.1}, 50, 0.5, 3);
    const auto b = simulate_data(*model, {{0.05, 0.1, 1.0}, 0.1}, 50, 0.5, 3);
    CHECK(a.latent == b.latent);
  }
}
