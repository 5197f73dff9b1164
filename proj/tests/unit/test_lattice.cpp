#include <doctest.h>

#include <cmath>
#include <stdexcept>

#include "wasep/lattice.hpp"

using namespace wasep;

namespace {

ModelSpec regime(int n) {
  return ModelSpec::make(n, SmoothFunction::fourier(0.0, 1, 0.0, 1.0), SmoothFunction::fourier(0.5, 1, 0.2, 0.0),
                         SmoothFunction::constant(1.0), 0.2, 0.05);
}

}  // namespace

TEST_CASE("smooth function families and derivatives") {
  const auto f = SmoothFunction::fourier(0.5, 2, 0.1, -0.2);
  const double u = 0.137;
  CHECK(f(u) == doctest::Approx(0.5 + 0.1 * std::cos(2 * kTwoPi * u) - 0.2 * std::sin(2 * kTwoPi * u)));
  const double d = 1e-6;
  for (const auto& g : {f, SmoothFunction::fourier_sum(0.1, {0.2, 0.05}, {0.0, 0.1}),
                        SmoothFunction::bump(0.5, 0.2, 0.3, 0.2)})
    CHECK(g.derivative(u + 0.1) == doctest::Approx((g(u + 0.1 + d) - g(u + 0.1 - d)) / (2 * d)).epsilon(1e-6));
  const auto b = SmoothFunction::bump(0.1, 0.3, 0.25, 0.1);
  CHECK(b(0.25) == doctest::Approx(0.4));
  CHECK(b(0.5) == doctest::Approx(0.1));
  CHECK(b(1.24) == doctest::Approx(b(0.24)));
  CHECK(SmoothFunction::constant(2.0).is_constant());
  CHECK_FALSE(f.is_constant());
}

TEST_CASE("model spec validation") {
  CHECK_NOTHROW(regime(64));
  CHECK_THROWS_AS(ModelSpec::make(64, SmoothFunction::constant(0.0), SmoothFunction::constant(0.5),
                                  SmoothFunction::constant(1.0), 0.2, 0.6),
                  std::invalid_argument);
  CHECK_THROWS_AS(ModelSpec::make(64, SmoothFunction::constant(0.0), SmoothFunction::fourier(0.5, 1, 0.48, 0.0),
                                  SmoothFunction::constant(1.0), 0.2, 0.05),
                  std::invalid_argument);
  CHECK_THROWS_AS(ModelSpec::make(64, SmoothFunction::constant(0.0), SmoothFunction::constant(0.5),
                                  SmoothFunction::fourier(0.5, 1, 0.6, 0.0), 0.5, 0.05),
                  std::invalid_argument);
  CHECK_THROWS_AS(ModelSpec::make(4, SmoothFunction::constant(8.0), SmoothFunction::constant(0.5),
                                  SmoothFunction::constant(1.0), 0.2, 0.05),
                  std::invalid_argument);
  CHECK(ModelSpec::make(64, SmoothFunction::constant(0.0), SmoothFunction::constant(0.5),
                        SmoothFunction::fourier(1.0, 1, 0.5, 0.0), 0.2, 0.05)
            .q_bound >= 1.5 - 1e-9);
}

TEST_CASE("configuration bookkeeping and rates") {
  Configuration c(std::vector<std::uint8_t>{1, 0, 1, 1, 0});
  CHECK(c.size() == 5);
  CHECK(c.particle_count() == 3);
  c.move(0, 1);
  CHECK_FALSE(c.occupied(0));
  CHECK(c.occupied(1));
  CHECK(c.as_grid().sum() == 3.0);
  const ModelSpec spec = regime(64);
  for (int x : {0, 16, 40})
    CHECK(jump_rate(spec, x, +1) + jump_rate(spec, x, -1) == doctest::Approx(2.0));
  CHECK(jump_rate(spec, 16, +1) == doctest::Approx(1.0 + 1.0 / 64));
}

TEST_CASE("initial sampling has the product-measure profile") {
  const ModelSpec spec = regime(64);
  RandomStream rng(5);
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(64);
  const int reps = 4000;
  for (int r = 0; r < reps; ++r) mean += sample_initial(spec, rng).as_grid();
  mean /= reps;
  double worst = 0.0;
  for (int x = 0; x < 64; ++x) {
    const double p = spec.initial_profile(x / 64.0);
    worst = std::max(worst, std::abs(mean(x) - p) / std::sqrt(p * (1 - p) / reps));
  }
  CHECK(worst < 4.5);
  RandomStream a(9), b(9);
  CHECK(sample_initial(spec, a) == sample_initial(spec, b));
}

TEST_CASE("initial entropy of product measures") {
  const ModelSpec spec = ModelSpec::make(100, SmoothFunction::constant(0.0), SmoothFunction::constant(0.5),
                                         SmoothFunction::constant(1.0), 0.2, 0.05);
  CHECK(initial_entropy(spec, [](double) { return 0.5; }) == doctest::Approx(0.0));
  const double a = 0.3, b = 0.5;
  const double per_site = a * std::log(a / b) + (1 - a) * std::log((1 - a) / (1 - b));
  CHECK(initial_entropy(spec, [a](double) { return a; }) == doctest::Approx(100 * per_site));
  CHECK_THROWS(initial_entropy(spec, [](double) { return 0.0; }));
}
