#include <doctest.h>

#include <cmath>
#include <random>

#include <Eigen/Eigenvalues>

#include <boost/math/distributions/binomial.hpp>

#include "wasep/limit.hpp"
#include "wasep/stats.hpp"

using namespace wasep;

namespace {

ModelSpec make(int n, SmoothFunction f, SmoothFunction rho0, double t = 0.2,
               ModelSpec::ProfileCheck check = ModelSpec::ProfileCheck::enforce) {
  return ModelSpec::make(n, std::move(f), std::move(rho0), SmoothFunction::constant(1.0), t, 0.05, check);
}

const SmoothFunction kZero = SmoothFunction::constant(0.0);
const SmoothFunction kHalf = SmoothFunction::constant(0.5);
const SmoothFunction kSine = SmoothFunction::fourier(0.0, 1, 0.0, 1.0);

Grid fn(Eigen::Index m, double (*f)(double)) { return sample_on_grid(f, m); }

}  // namespace

TEST_CASE("jump rates") {
  CHECK(jump_rate(make(100, kSine, kHalf), 25, +1) == doctest::Approx(1.01));
  CHECK(jump_rate(make(100, kZero, kHalf), 37, -1) == 1.0);
  CHECK(jump_rate(make(8, SmoothFunction::constant(4.0), kHalf), 0, -1) == doctest::Approx(0.5));
}

TEST_CASE("degenerate and large initial samples") {
  RandomStream rng(1);
  const auto ones = sample_initial(make(16, kZero, SmoothFunction::constant(1.0), 0.2, ModelSpec::ProfileCheck::skip), rng);
  CHECK(ones.particle_count() == 16);
  const auto zeros = sample_initial(make(16, kZero, kZero, 0.2, ModelSpec::ProfileCheck::skip), rng);
  CHECK(zeros.particle_count() == 0);

  const int n = 100000;
  const boost::math::binomial_distribution<double> bin(n, 0.5);
  const double inside = boost::math::cdf(bin, 51000.0) - boost::math::cdf(bin, 48999.0);
  CHECK(inside >= 0.998);
  const ModelSpec big = make(n, kZero, kHalf);
  int hits = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    RandomStream r(derive_seed(3, s));
    const double frac = sample_initial(big, r).particle_count() / static_cast<double>(n);
    hits += frac >= 0.49 && frac <= 0.51;
  }
  CHECK(hits == 20);
}

TEST_CASE("initial entropy reference values") {
  const ModelSpec spec = make(4, kZero, SmoothFunction::constant(0.25));
  const double per_site = 0.5 * std::log(2.0) + 0.5 * std::log(2.0 / 3.0);
  CHECK(per_site == doctest::Approx(0.14384).epsilon(1e-4));
  CHECK(initial_entropy(spec, [](double) { return 0.5; }) == doctest::Approx(4 * per_site));
  const ModelSpec wavy = make(64, kZero, SmoothFunction::fourier(0.5, 1, 0.2, 0.0));
  const auto shifted = [&](double d) {
    return initial_entropy(wavy, [&](double u) { return wavy.initial_profile(u) + d * std::sin(kTwoPi * u); });
  };
  CHECK(shifted(2e-3) / shifted(1e-3) == doctest::Approx(4.0).epsilon(1e-2));
}

TEST_CASE("a lone particle spends equal time on every site of a 4-ring") {
  const ModelSpec spec = make(4, kZero, kHalf, 500.0);
  RunOptions opts;
  opts.initial = Configuration(std::vector<std::uint8_t>{1, 0, 0, 0});
  const Eigen::MatrixXd frac = run_replicas(
      20, 4, 4,
      [&](ReplicaContext& ctx, Eigen::Ref<Eigen::RowVectorXd> row) {
        SiteStatistics st;
        RunOptions o = opts;
        o.site_statistics = &st;
        run_replica(spec, ctx.seed, EventSchedule({0.0, 500.0}, 500.0), o);
        for (int x = 0; x < 4; ++x) row(x) = st.occupied_time[static_cast<std::size_t>(x)] / (500.0 * 16);
      },
      1);
  for (Eigen::Index x = 0; x < 4; ++x) {
    const Eigen::VectorXd c = frac.col(x);
    const Moments m = two_pass_moments(std::span<const double>(c.data(), 20));
    CHECK(std::abs(m.mean - 0.25) < 3 * std::sqrt(m.variance / 20) + 1e-12);
  }
}

TEST_CASE("attempted right-jump rates match 1 + F/n") {
  const int n = 16;
  const ModelSpec spec = make(n, kSine, kHalf, 200.0);
  SiteStatistics st;
  RunOptions opts;
  opts.site_statistics = &st;
  run_replica(spec, 21, EventSchedule({0.0, 200.0}, 200.0), opts);
  int within = 0;
  for (int x = 0; x < n; ++x) {
    const double time = st.occupied_time[static_cast<std::size_t>(x)];
    const double count = static_cast<double>(st.right_attempts[static_cast<std::size_t>(x)]);
    const double expected = jump_rate(spec, x, +1) * time;
    within += std::abs(count - expected) < 3 * std::sqrt(expected);
  }
  CHECK(within >= n - 1);
}

TEST_CASE("occupation time reference values") {
  const int n = 100;
  const double t = 0.2;
  const ModelSpec spec = make(n, kZero, kHalf, t);
  ObservablePlan plan;
  RunOptions opts;
  opts.observers = make_observer_set(spec, std::make_shared<const DensityField>(DensityField::constant(100, t, 0.5)),
                                     EventSchedule({0.0, t}, t), plan);
  opts.initial = Configuration(std::vector<std::uint8_t>(n, 1));
  CHECK(occupation_time_origin(run_replica(spec, 1, EventSchedule({0.0, t}, t), opts), spec, t) ==
        doctest::Approx(1.0));

  const ModelSpec empty = make(n, kZero, kZero, t, ModelSpec::ProfileCheck::skip);
  RunOptions o2;
  o2.observers = make_observer_set(empty, std::make_shared<const DensityField>(DensityField::constant(100, t, 0.0)),
                                   EventSchedule({0.0, t}, t), plan);
  o2.initial = Configuration::empty(n);
  const TrajectoryRecord r = run_replica(empty, 1, EventSchedule({0.0, t}, t), o2);
  CHECK(r.clock.event_count == 0);
  CHECK(r.origin_integral.back() == 0.0);
  CHECK(occupation_time_origin(r, empty, t) == 0.0);
}

TEST_CASE("hydrodynamic reference values") {
  const ModelSpec heat = make(64, kZero, SmoothFunction::fourier(0.5, 1, 0.1, 0.0), 0.05);
  CHECK(solve_hydro(heat, 128, 0.05)(0.05, 0.0) == doctest::Approx(0.51389).epsilon(1e-4));

  const ModelSpec flat = make(64, SmoothFunction::constant(3.0), SmoothFunction::constant(0.3), 0.05);
  const DensityField c = solve_hydro(flat, 64, 0.05);
  CHECK((c.slice(0.05).array() - 0.3).abs().maxCoeff() < 1e-13);

  const ModelSpec tilt = make(64, kSine, kHalf, 1e-5);
  const Eigen::Index m = 256;
  const DensityField d = solve_hydro(tilt, m, 1e-5);
  const Grid rate = (d.slice(1e-5) - d.slice(0.0)) / 1e-5;
  const Grid expected = sample_on_grid([](double u) { return -M_PI * std::cos(kTwoPi * u); }, m);
  CHECK((rate - expected).cwiseAbs().maxCoeff() < 1e-3);
}

TEST_CASE("semigroup and generator reference values") {
  const Eigen::Index m = 128;
  const ModelSpec tilt = make(64, kSine, SmoothFunction::fourier(0.5, 1, 0.2, 0.0));
  const DensityField rho = solve_hydro(tilt, m, 0.2);
  const SemigroupSolution one = solve_backward(tilt, rho, Grid::Ones(m), 0.2);
  CHECK((one.at(0.0).array() - 1.0).abs().maxCoeff() < 1e-12);

  const Grid c = fn(m, [](double u) { return std::cos(kTwoPi * u); });
  const ModelSpec equi_drift = make(64, kSine, kHalf);
  const ModelSpec equi = make(64, kZero, kHalf);
  const DensityField half = DensityField::constant(m, 0.2, 0.5);
  const Grid a = solve_backward(equi_drift, half, c, 0.2).at(0.15);
  const Grid b = solve_backward(equi, half, c, 0.2).at(0.15);
  CHECK((a - b).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((b - std::exp(-4 * M_PI * M_PI * 0.05) * c).cwiseAbs().maxCoeff() < 1e-3);

  CHECK(apply_generator(tilt, rho.slice(0.1), Grid::Constant(m, 2.0)).cwiseAbs().maxCoeff() < 1e-9);
  const Grid s = fn(m, [](double u) { return std::sin(kTwoPi * u); });
  CHECK((apply_generator(equi_drift, Grid::Constant(m, 0.5), s) - laplacian(s, 1.0 / m)).cwiseAbs().maxCoeff() < 1e-9);
  const ModelSpec unit = make(64, SmoothFunction::constant(1.0), kHalf);
  const Grid lf = apply_generator(unit, Grid::Zero(m), s);
  const Grid exact = fn(m, [](double u) {
    return -4 * M_PI * M_PI * std::sin(kTwoPi * u) + 4 * M_PI * std::cos(kTwoPi * u);
  });
  CHECK((lf - exact).cwiseAbs().maxCoeff() < 0.05);
}

TEST_CASE("field functional reference values") {
  const Configuration ones(std::vector<std::uint8_t>(4, 1));
  CHECK(fluctuation_field(ones, Grid::Constant(4, 0.5), Grid::Ones(4)) == doctest::Approx(1.0));
  CHECK(fluctuation_field(ones, Grid::Constant(4, 0.5), Grid::Zero(4)) == 0.0);
  const Configuration alt(std::vector<std::uint8_t>{1, 0, 1, 0, 1, 0});
  Grid lin(6);
  double brute = 0.0;
  for (int x = 0; x < 6; ++x) {
    lin(x) = x / 6.0;
    brute += (alt[x] - 0.5) * lin(x);
  }
  brute /= std::sqrt(6.0);
  CHECK(brute == doctest::Approx(-0.25 / std::sqrt(6.0)));
  CHECK(fluctuation_field(alt, Grid::Constant(6, 0.5), lin) == doctest::Approx(brute));
  CHECK(w_field(Configuration(std::vector<std::uint8_t>{1}), Grid::Constant(1, 0.25))(0) == doctest::Approx(4.0));
  CHECK(empirical_measure(alt, Grid::Ones(6)) == doctest::Approx(0.5));
  CHECK(empirical_measure(Configuration::empty(6), Grid::Ones(6)) == 0.0);
  const Configuration full(std::vector<std::uint8_t>(1000, 1));
  CHECK(std::abs(empirical_measure(full, fn(1000, [](double u) { return std::cos(kTwoPi * u); }))) < 1e-3);
}

TEST_CASE("covariance reference values") {
  const Eigen::Index m = 128;
  const ModelSpec spec = make(64, kSine, SmoothFunction::fourier(0.5, 1, 0.2, 0.0));
  auto rho = std::make_shared<const DensityField>(solve_hydro(spec, m, 0.2));
  const CovarianceOracle orc(spec, rho);
  const Grid chi0 = rho->slice(0.0).unaryExpr([](double r) { return compressibility(r); });
  CHECK(orc.var_field(Grid::Constant(m, 3.0), 0.2) == doctest::Approx(9.0 * torus_integral(chi0)).epsilon(1e-9));
  const Grid f = fn(m, [](double u) { return std::sqrt(2.0) * std::cos(kTwoPi * u); });
  const Grid g = fn(m, [](double u) { return std::sin(kTwoPi * u) + 0.3 * std::cos(2 * kTwoPi * u); });
  CHECK(orc.var_field(f, 0.0) == doctest::Approx(torus_integral(Grid(chi0.cwiseProduct(f).cwiseProduct(f)))));

  const double pol = 0.25 * (orc.var_field(f + Grid::Ones(m), 0.1) - orc.var_field(f - Grid::Ones(m), 0.1));
  CHECK(orc.cov_field(f, 0.1, Grid::Ones(m), 0.1) == doctest::Approx(pol).epsilon(1e-8));
  CHECK(orc.cov_field(f, 0.07, g, 0.07) == doctest::Approx(orc.gram({{f, 0.07}, {g, 0.07}})(0, 1)));

  const SemigroupSolution p = solve_backward(spec, *rho, g, 0.2);
  const double direct = torus_integral(Grid(chi0.cwiseProduct(f).cwiseProduct(p.at(0.0))));
  CHECK(orc.cov_field(f, 0.0, g, 0.2) == doctest::Approx(direct).epsilon(1e-4));
}

TEST_CASE("covariance Gram of five functions at three times is positive semidefinite") {
  const Eigen::Index m = 64;
  const ModelSpec spec = make(64, kSine, SmoothFunction::fourier(0.5, 1, 0.2, 0.0));
  auto rho = std::make_shared<const DensityField>(solve_hydro(spec, m, 0.2));
  const CovarianceOracle orc(spec, rho);
  RandomStream rng(17);
  std::vector<CovarianceOracle::Member> family;
  for (int i = 0; i < 5; ++i) {
    const double a1 = rng.uniform() - 0.5, b1 = rng.uniform() - 0.5, a2 = rng.uniform() - 0.5, c0 = rng.uniform();
    const Grid f = sample_on_grid(
        [=](double u) { return c0 + a1 * std::cos(kTwoPi * u) + b1 * std::sin(kTwoPi * u) + a2 * std::cos(2 * kTwoPi * u); },
        m);
    for (double t : {0.05, 0.1, 0.2}) family.push_back({f, t});
  }
  const Eigen::MatrixXd k = orc.gram(family);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k);
  CHECK(es.eigenvalues().minCoeff() > -1e-10 * es.eigenvalues().maxCoeff());
}

TEST_CASE("SPDE reference behaviour") {
  const double t = 0.05;
  const Eigen::Index m = 64;
  const ModelSpec frozen = make(64, SmoothFunction::constant(1.0), kZero, t, ModelSpec::ProfileCheck::skip);
  auto empty = std::make_shared<const DensityField>(DensityField::constant(256, t, 0.0));
  const Grid c = fn(m, [](double u) { return std::cos(kTwoPi * u); });
  SpdeOptions o;
  o.m = m;
  o.initial = c;
  o.keep_field = true;
  const SpdePath p = simulate_spde(frozen, empty, EventSchedule({0.0, t}, t), 5, o);
  const Grid exact = fn(m, [](double u) { return std::exp(-4 * M_PI * M_PI * 0.05) * std::cos(kTwoPi * (u - 0.1)); });
  CHECK((Grid(p.field.col(1)) - exact).cwiseAbs().maxCoeff() < 0.01);

  const ModelSpec tilt = make(64, kSine, SmoothFunction::fourier(0.5, 1, 0.2, 0.0), t);
  auto rho = std::make_shared<const DensityField>(solve_hydro(tilt, 256, t));
  o.test_functions = {fn(m, [](double u) { return std::sqrt(2.0) * std::cos(kTwoPi * u); })};
  o.keep_field = false;
  const SpdePath plus = simulate_spde(tilt, rho, EventSchedule({0.0, t}, t), 9, o);
  o.noise_sign = -1.0;
  const SpdePath minus = simulate_spde(tilt, rho, EventSchedule({0.0, t}, t), 9, o);
  o.noise = false;
  const SpdePath none = simulate_spde(tilt, rho, EventSchedule({0.0, t}, t), 9, o);
  CHECK(std::abs(0.5 * (plus.pairings(1, 0) + minus.pairings(1, 0)) - none.pairings(1, 0)) < 1e-12);
  CHECK(plus.pairings(1, 0) != none.pairings(1, 0));
}

TEST_CASE("stationary SPDE variance over 2000 paths") {
  const double t = 0.05;
  const ModelSpec equi = make(64, kZero, kHalf, t);
  SpdeOptions o;
  o.m = 32;
  o.test_functions = {fn(32, [](double u) { return std::sqrt(2.0) * std::cos(kTwoPi * u); })};
  const SpdeSimulator sim(equi, std::make_shared<const DensityField>(DensityField::constant(256, t, 0.5)),
                          EventSchedule({0.0, t}, t), o);
  const Eigen::MatrixXd x = run_replicas(
      2000, 12, 1, [&](ReplicaContext& ctx, Eigen::Ref<Eigen::RowVectorXd> row) { row(0) = sim.simulate(ctx.seed).pairings(1, 0); },
      1);
  CHECK(two_pass_moments(std::span<const double>(x.data(), 2000)).variance == doctest::Approx(0.25).epsilon(0.05));
}

TEST_CASE("SPDE field variance matches the oracle for three test functions") {
  const double t = 0.1;
  const Eigen::Index m = 64;
  const ModelSpec tilt = make(64, kSine, SmoothFunction::fourier(0.5, 1, 0.2, 0.0), t);
  auto rho = std::make_shared<const DensityField>(solve_hydro(tilt, 256, t));
  const CovarianceOracle orc(tilt, rho);
  const std::vector<std::string> names{"fourier:k=1", "sin:k=1", "fourier:k=2"};
  SpdeOptions o;
  o.m = m;
  for (const auto& n : names) o.test_functions.push_back(parse_test_function(n).on_lattice(static_cast<int>(m)));
  const SpdeSimulator sim(tilt, rho, EventSchedule({0.0, t}, t), o);
  const Eigen::MatrixXd x = run_replicas(
      1500, 13, 3, [&](ReplicaContext& ctx, Eigen::Ref<Eigen::RowVectorXd> row) { row = sim.simulate(ctx.seed).pairings.row(1); },
      1);
  for (std::size_t i = 0; i < names.size(); ++i) {
    const Eigen::VectorXd col = x.col(static_cast<Eigen::Index>(i));
    const ObservableSummary s = summarize(std::span<const double>(col.data(), 1500));
    const double target = orc.var_field(parse_test_function(names[i]).on_lattice(256), t);
    CHECK(std::abs(s.variance - target) < 3 * s.variance_std_error);
  }
}

TEST_CASE("harness calibration") {
  const ObservableSummary one = summarize(std::vector<double>(50, 1.0));
  CHECK(one.mean == 1.0);
  CHECK(one.variance == 0.0);
  const Eigen::MatrixXd z = run_replicas(
      4000, 99, 1,
      [](ReplicaContext& ctx, Eigen::Ref<Eigen::RowVectorXd> row) {
        std::normal_distribution<double> d;
        row(0) = d(ctx.aux);
      },
      2);
  const ObservableSummary s = summarize(std::span<const double>(z.data(), 4000), 1);
  CHECK(std::abs(s.mean) < 3 / std::sqrt(4000.0));
  CHECK(s.normality->ks_pvalue > 0.001);
}
