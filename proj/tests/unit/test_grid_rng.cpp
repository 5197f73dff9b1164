#include <doctest.h>

#include <cmath>
#include <set>

#include "wasep/grid.hpp"
#include "wasep/rng.hpp"

using namespace wasep;

TEST_CASE("finite differences act exactly on Fourier modes") {
  const Eigen::Index m = 64;
  const double h = 1.0 / m;
  const Grid c = sample_on_grid([](double u) { return std::cos(kTwoPi * u); }, m);
  const Grid lap = laplacian(c, h);
  const double symbol = -2.0 * (1.0 - std::cos(kTwoPi * h)) / (h * h);
  CHECK((lap - symbol * c).cwiseAbs().maxCoeff() < 1e-9);
  const Grid grad = central_gradient(c, h);
  const Grid s = sample_on_grid([](double u) { return std::sin(kTwoPi * u); }, m);
  CHECK((grad + std::sin(kTwoPi * h) / h * s).cwiseAbs().maxCoeff() < 1e-9);
  const Grid fd = forward_difference(c, h);
  CHECK(fd.sum() == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("fourth-order gradient converges at order four") {
  double prev = 0.0;
  for (Eigen::Index m : {32, 64}) {
    const Grid f = sample_on_grid([](double u) { return std::sin(kTwoPi * u); }, m);
    const Grid exact = sample_on_grid([](double u) { return kTwoPi * std::cos(kTwoPi * u); }, m);
    const double err = (central_gradient4(f, 1.0 / m) - exact).cwiseAbs().maxCoeff();
    if (prev > 0) CHECK(prev / err == doctest::Approx(16.0).epsilon(0.05));
    prev = err;
  }
}

TEST_CASE("torus integral is exact for trigonometric polynomials") {
  const Grid f = sample_on_grid([](double u) { return 0.3 + std::cos(kTwoPi * 3 * u) * std::sin(kTwoPi * u); }, 16);
  CHECK(torus_integral(f) == doctest::Approx(0.3).epsilon(1e-14));
}

TEST_CASE("cubic interpolation reproduces smooth data and wraps") {
  const Grid f = sample_on_grid([](double u) { return std::cos(kTwoPi * u); }, 128);
  for (double u : {0.0, 0.013, 0.5, 0.9991, 1.25, -0.3})
    CHECK(interpolate_cubic(f, u) == doctest::Approx(std::cos(kTwoPi * u)).epsilon(1e-6));
  CHECK(wrap_unit(-0.25) == doctest::Approx(0.75));
  CHECK(wrap_unit(1.0) == 0.0);
}

TEST_CASE("random streams are reproducible and derived seeds are distinct") {
  RandomStream a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a() == b());
  std::set<std::uint64_t> seeds;
  for (std::uint64_t i = 0; i < 1000; ++i) seeds.insert(derive_seed(7, i));
  for (std::uint64_t i = 0; i < 1000; ++i) seeds.insert(derive_seed(7, i, 1));
  CHECK(seeds.size() == 2000);
  CHECK(derive_seed(7, 3) == derive_seed(7, 3));
}

TEST_CASE("random stream marginals") {
  RandomStream rng(123);
  const int n = 200000;
  double su = 0, se = 0;
  std::vector<int> counts(6, 0);
  bool in_range = true;
  for (int i = 0; i < n; ++i) {
    const double u = rng.uniform();
    in_range = in_range && u >= 0.0 && u < 1.0;
    su += u;
    se += rng.exponential();
    ++counts[rng.below(6)];
  }
  CHECK(in_range);
  CHECK(su / n == doctest::Approx(0.5).epsilon(0.01));
  CHECK(se / n == doctest::Approx(1.0).epsilon(0.01));
  for (int c : counts) CHECK(std::abs(c - n / 6.0) < 5 * std::sqrt(n / 6.0));
}
