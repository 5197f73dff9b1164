#include <doctest.h>

#include <cmath>

#include <Eigen/Eigenvalues>

#include "wasep/limit.hpp"
#include "wasep/stats.hpp"

using namespace wasep;

namespace {

ModelSpec equilibrium(double t) {
  return ModelSpec::make(256, SmoothFunction::constant(0.0), SmoothFunction::constant(0.5),
                         SmoothFunction::constant(1.0), t, 0.05);
}

std::shared_ptr<const DensityField> flat_density(Eigen::Index m, double t) {
  return std::make_shared<const DensityField>(DensityField::constant(m, t, 0.5));
}

/// Var int_0^t X_s(delta_0) ds for the stationary torus field with chi = 1/4:
/// 2 chi int_0^t (t - r) p_r(0) dr with p_r(0) = 1 + 2 sum_k e^{-4 pi^2 k^2 r}.
double point_variance(double t) {
  double s = t * t / 2;
  for (int k = 1; k < 4000; ++k) {
    const double a = 4 * M_PI * M_PI * k * k;
    s += 2 * (t / a - (1 - std::exp(-a * t)) / (a * a));
  }
  return 2 * 0.25 * s;
}

Grid root2cos(Eigen::Index m) {
  return sample_on_grid([](double u) { return std::sqrt(2.0) * std::cos(kTwoPi * u); }, m);
}

}  // namespace

TEST_CASE("equilibrium field covariance") {
  const CovarianceOracle orc(equilibrium(0.2), flat_density(256, 0.2));
  const Grid f = root2cos(256);
  for (double t : {0.05, 0.2}) CHECK(orc.var_field(f, t) == doctest::Approx(0.25).epsilon(4e-3));
  const double c = orc.cov_field(f, 0.05, f, 0.1);
  CHECK(c == doctest::Approx(0.25 * std::exp(-4 * M_PI * M_PI * 0.05)).epsilon(1e-3));
  CHECK(orc.initial_covariance(f, f) == doctest::Approx(0.25));
  const Grid g = sample_on_grid([](double u) { return std::sqrt(2.0) * std::sin(kTwoPi * u); }, 256);
  CHECK(std::abs(orc.cov_field(f, 0.1, g, 0.1)) < 1e-10);
}

TEST_CASE("gram matrix is symmetric and positive semidefinite") {
  const ModelSpec spec = ModelSpec::make(64, SmoothFunction::fourier(0.0, 1, 0.0, 1.0),
                                         SmoothFunction::fourier(0.5, 1, 0.2, 0.0), SmoothFunction::constant(1.0), 0.1,
                                         0.05);
  auto rho = std::make_shared<const DensityField>(solve_hydro(spec, 128, 0.1));
  const CovarianceOracle orc(spec, rho);
  const Grid f = root2cos(128);
  const Grid g = sample_on_grid([](double u) { return std::sin(kTwoPi * 2 * u); }, 128);
  const Eigen::MatrixXd k = orc.gram({{f, 0.1}, {g, 0.05}, {f, 0.03}});
  CHECK((k - k.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(k);
  CHECK(es.eigenvalues().minCoeff() > -1e-10);
  CHECK(k(0, 0) == doctest::Approx(orc.var_field(f, 0.1)).epsilon(1e-10));
  CHECK(k(0, 2) == doctest::Approx(orc.cov_field(f, 0.03, f, 0.1)).epsilon(1e-8));
}

TEST_CASE("energy identity at equilibrium") {
  const CovarianceOracle orc(equilibrium(0.2), flat_density(128, 0.2));
  for (double t : {0.05, 0.2}) CHECK(energy_balance(orc, root2cos(128), t).relative_defect() < 1e-6);
}

TEST_CASE("quadratic variation at equilibrium") {
  const DensityField rho = DensityField::constant(256, 0.2, 0.5);
  const double qv = quadratic_variation(rho, parse_test_function("fourier:k=1").derivative, 0.2);
  CHECK(qv == doctest::Approx(2 * M_PI * M_PI * 0.2).epsilon(1e-6));
}

TEST_CASE("linear extrapolation") {
  const Extrapolation e = extrapolate_linear({0.2, 0.1, 0.05}, {1.4, 1.2, 1.1});
  CHECK(e.limit == doctest::Approx(1.0));
  CHECK(e.slope == doctest::Approx(2.0));
  CHECK(e.spread < 1e-12);
  CHECK_THROWS(extrapolate_linear({0.1}, {1.0}));
}

TEST_CASE("point-source variance matches the torus heat-kernel series") {
  for (double t : {0.05, 0.2}) {
    const CovarianceOracle orc(equilibrium(t), flat_density(256, t));
    CHECK(var_Z_point(orc, t) == doctest::Approx(point_variance(t)).epsilon(0.02));
  }
}

TEST_CASE("mollified variance: extrapolation and one-pass family") {
  const double t = 0.2;
  const CovarianceOracle orc(equilibrium(t), flat_density(256, t));
  const Extrapolation e = var_Z_extrapolated(orc, t, {0.2, 0.1, 0.05});
  CHECK(e.values[0] < e.values[2]);
  CHECK(e.limit == doctest::Approx(point_variance(t)).epsilon(0.03));
  const auto family = var_Z_family(orc, {Mollifier(0.2), Mollifier(0.1)}, t);
  CHECK(family[1] == doctest::Approx(var_Z(orc, Mollifier(0.1), t).variance).epsilon(1e-10));
  CHECK(var_Z(orc, Mollifier(0.1, 0.0), t).variance == 0.0);
  CHECK(var_Z(orc, Mollifier(0.1), 0.0).variance == 0.0);
}

TEST_CASE("variance scales like 1/q^2 for constant q") {
  const double t = 0.1;
  const ModelSpec doubled = ModelSpec::make(64, SmoothFunction::constant(0.0), SmoothFunction::constant(0.5),
                                            SmoothFunction::constant(2.0), t, 0.05);
  const CovarianceOracle one(ModelSpec::make(64, SmoothFunction::constant(0.0), SmoothFunction::constant(0.5),
                                             SmoothFunction::constant(1.0), t, 0.05),
                             flat_density(64, t));
  const CovarianceOracle two(doubled, flat_density(64, t));
  CHECK(var_Z(two, Mollifier(0.25), t).variance == doctest::Approx(0.25 * var_Z(one, Mollifier(0.25), t).variance));
}

TEST_CASE("tensor Gauss-Legendre converges to the Duhamel value") {
  const double t = 0.2;
  const ModelSpec spec = ModelSpec::make(64, SmoothFunction::constant(0.0), SmoothFunction::constant(0.5),
                                         SmoothFunction::constant(1.0), t, 0.05);
  const CovarianceOracle orc(spec, flat_density(64, t));
  double prev_gap = 1e300;
  VarZResult r;
  for (int k : {8, 16, 32, 64}) {
    r = var_Z(orc, Mollifier(0.4), t, k);
    const double gap = std::abs(r.quadrature_k - r.quadrature_2k);
    CHECK(gap < prev_gap);
    prev_gap = gap;
  }
  CHECK(r.quadrature_converged);
  CHECK(r.quadrature_2k == doctest::Approx(r.variance).epsilon(0.01));
}

TEST_CASE("variance grows like t^{3/2} at short times") {
  std::vector<double> ts{0.05, 0.1, 0.2}, v;
  for (double t : ts) {
    const CovarianceOracle orc(equilibrium(t), flat_density(256, t));
    v.push_back(var_Z_point(orc, t));
  }
  const LogLogFit fit = fit_loglog(ts, v);
  std::vector<double> ref;
  for (double t : ts) ref.push_back(point_variance(t));
  CHECK(fit.slope == doctest::Approx(fit_loglog(ts, ref).slope).epsilon(0.02));
  CHECK(fit.slope > 1.5);
}

TEST_CASE("deterministic SPDE relaxes like the heat semigroup") {
  const double t = 0.05;
  SpdeOptions o;
  o.m = 64;
  o.noise = false;
  o.initial = sample_on_grid([](double u) { return std::cos(kTwoPi * u); }, 64);
  o.test_functions = {root2cos(64)};
  const SpdePath p = simulate_spde(equilibrium(t), flat_density(256, t), EventSchedule({0.0, t}, t), 1, o);
  const double expected = std::exp(-4 * M_PI * M_PI * t) / std::sqrt(2.0);
  CHECK(p.pairings(1, 0) == doctest::Approx(expected).epsilon(5e-3));
  CHECK(p.pairings(0, 0) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("stochastic SPDE preserves the equilibrium variance") {
  const double t = 0.05;
  SpdeOptions o;
  o.m = 32;
  o.test_functions = {root2cos(32)};
  o.z_eps = {0.25};
  const SpdeSimulator sim(equilibrium(t), flat_density(256, t), EventSchedule({0.0, t}, t), o);
  const Eigen::MatrixXd x = run_replicas(
      800, 5, 1, [&](ReplicaContext& ctx, Eigen::Ref<Eigen::RowVectorXd> row) { row(0) = sim.simulate(ctx.seed).pairings(1, 0); },
      1);
  const Moments m = two_pass_moments(std::span<const double>(x.data(), 800));
  CHECK(std::abs(m.variance - 0.25) < 4 * 0.25 * std::sqrt(2.0 / 800));
  CHECK(sim.simulate(3).z(1, 0) == sim.simulate(3).z(1, 0));
}
