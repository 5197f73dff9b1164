#include <doctest.h>

#include <cmath>

#include "wasep/kmc.hpp"
#include "wasep/limit.hpp"
#include "wasep/observables.hpp"
#include "wasep/stats.hpp"

using namespace wasep;

namespace {

ModelSpec flat(int n, double drift, double t) {
  return ModelSpec::make(n, SmoothFunction::constant(drift), SmoothFunction::constant(0.5),
                         SmoothFunction::constant(1.0), t, 0.05);
}

ModelSpec regime(int n, double t) {
  return ModelSpec::make(n, SmoothFunction::fourier(0.0, 1, 0.0, 1.0), SmoothFunction::fourier(0.5, 1, 0.2, 0.0),
                         SmoothFunction::constant(1.0), t, 0.05);
}

}  // namespace

TEST_CASE("event schedule") {
  const EventSchedule s = EventSchedule::uniform(0.2, 0.05, {0.125});
  CHECK(s.size() == 6);
  CHECK(s[0] == 0.0);
  CHECK(s.times().back() == doctest::Approx(0.2));
  CHECK(s.index_of(0.125).value() == 3);
  CHECK_FALSE(s.index_of(0.11).has_value());
  CHECK(EventSchedule({0.1}, 0.2).size() == 2);
  CHECK_THROWS(EventSchedule({0.3}, 0.2));
}

TEST_CASE("replicas conserve particles and are reproducible") {
  const ModelSpec spec = regime(64, 0.05);
  const EventSchedule s = EventSchedule::uniform(0.05, 0.01);
  const TrajectoryRecord a = run_replica(spec, 11, s), b = run_replica(spec, 11, s);
  CHECK(a.final_configuration == b.final_configuration);
  CHECK(a.clock.event_count == b.clock.event_count);
  CHECK(a.final_configuration.particle_count() == a.initial_configuration.particle_count());
  CHECK(a.clock.t_macro() == doctest::Approx(0.05));
  CHECK(a.times.size() == s.size());
  const TrajectoryRecord c = run_replica(spec, 12, s);
  CHECK_FALSE(c.final_configuration == a.final_configuration);
}

TEST_CASE("a tagged particle performs the biased random walk") {
  const int n = 128;
  const double drift = 16.0, t = 0.0025;
  const ModelSpec spec = flat(n, drift, t);
  std::vector<std::uint8_t> eta(n, 0);
  eta[0] = 1;
  RunOptions opts;
  opts.initial = Configuration(eta);
  const EventSchedule s({0.0, t}, t);
  const Eigen::MatrixXd disp = run_replicas(
      4000, 3, 1,
      [&](ReplicaContext& ctx, Eigen::Ref<Eigen::RowVectorXd> row) {
        const Configuration fin = run_replica(spec, ctx.seed, s, opts).final_configuration;
        int x = 0;
        while (!fin.occupied(x)) ++x;
        row(0) = x < n / 2 ? x : x - n;
      },
      1);
  const double micro = t * n * n;
  const Moments mom = two_pass_moments(std::span<const double>(disp.data(), static_cast<std::size_t>(disp.size())));
  const double mean = 2 * drift / n * micro;
  const double var = 2 * micro;
  CHECK(std::abs(mom.mean - mean) < 4 * std::sqrt(var / 4000));
  CHECK(std::abs(mom.variance - var) < 4 * var * std::sqrt(2.0 / 4000));
}

TEST_CASE("site statistics count attempts in both directions") {
  const ModelSpec spec = flat(32, 0.0, 0.05);
  SiteStatistics st;
  RunOptions opts;
  opts.site_statistics = &st;
  const TrajectoryRecord r = run_replica(spec, 4, EventSchedule({0.0, 0.05}, 0.05), opts);
  std::uint64_t right = 0, left = 0;
  for (std::size_t x = 0; x < st.right_attempts.size(); ++x) {
    right += st.right_attempts[x];
    left += st.left_attempts[x];
  }
  CHECK(right + left == r.clock.event_count);
  CHECK(std::abs(static_cast<double>(right) - static_cast<double>(left)) < 5 * std::sqrt(static_cast<double>(right + left)));
  double occupied = 0.0;
  for (double v : st.occupied_time) occupied += v;
  CHECK(occupied == doctest::Approx(r.final_configuration.particle_count() * 0.05 * 32 * 32).epsilon(1e-9));
}

TEST_CASE("frozen full lattice gives deterministic occupation time and Z") {
  const int n = 64;
  const double t = 0.1;
  const ModelSpec spec = flat(n, 0.0, t);
  auto rho = std::make_shared<const DensityField>(DensityField::constant(128, t, 0.5));
  const EventSchedule s = EventSchedule::uniform(t, t / 10);
  ObservablePlan plan;
  plan.z_eps = {0.125};
  plan.z_pointwise = true;
  RunOptions opts;
  opts.observers = make_observer_set(spec, rho, s, plan);
  opts.initial = Configuration(std::vector<std::uint8_t>(n, 1));
  const TrajectoryRecord r = run_replica(spec, 1, s, opts);
  CHECK(occupation_time_origin(r, spec, t) == doctest::Approx(std::sqrt(n) * 0.5 * t));
  CHECK(occupation_time_origin(r, spec, t / 2) == doctest::Approx(std::sqrt(n) * 0.25 * t));
  const double mass = Mollifier(0.125).on_lattice(n).sum();
  const double expected = 0.5 * t * mass / std::sqrt(n);
  CHECK(z_discrete(r, 0.125, t) == doctest::Approx(expected));
  CHECK(z_discrete(r, 0.125, t, ZQuadrature::trapezoid) == doctest::Approx(expected));

  opts.initial = Configuration::empty(n);
  const TrajectoryRecord e = run_replica(spec, 1, s, opts);
  CHECK(occupation_time_origin(e, spec, t) == doctest::Approx(-std::sqrt(n) * 0.5 * t));
  CHECK(e.clock.event_count == 0);
}

TEST_CASE("occupation time requires a density") {
  const ModelSpec spec = flat(16, 0.0, 0.01);
  const TrajectoryRecord r = run_replica(spec, 2, EventSchedule({0.0, 0.01}, 0.01));
  CHECK_THROWS_AS(occupation_time_origin(r, spec, 0.01), std::logic_error);
}

TEST_CASE("origin baseline and inverse weight integral") {
  const ModelSpec spec = ModelSpec::make(32, SmoothFunction::constant(0.0), SmoothFunction::constant(0.5),
                                         SmoothFunction::fourier(1.0, 1, 0.5, 0.0), 0.5, 0.05);
  const auto inv_q = [&](double s) { return 1.0 / spec.time_weight(s); };
  const auto simpson = [&](double a, double b) {
    const int k = 2000;
    const double h = (b - a) / k;
    double acc = inv_q(a) + inv_q(b);
    for (int i = 1; i < k; ++i) acc += inv_q(a + i * h) * (i % 2 ? 4 : 2);
    return acc * h / 3;
  };
  CHECK(inverse_weight_integral(spec, 0.1, 0.11) == doctest::Approx(simpson(0.1, 0.11)).epsilon(1e-12));
  const DensityField rho = DensityField::constant(32, 0.5, 0.5);
  const auto base = origin_baseline(rho, spec, EventSchedule({0.0, 0.25, 0.5}, 0.5));
  CHECK(base[0] == 0.0);
  CHECK(base[1] == doctest::Approx(0.5 * simpson(0.0, 0.25)).epsilon(1e-5));
  CHECK(base[2] == doctest::Approx(0.5 * simpson(0.0, 0.5)).epsilon(1e-5));
}

TEST_CASE("event-exact and trapezoid Z agree as the snapshot grid refines") {
  const ModelSpec spec = regime(64, 0.05);
  auto rho = std::make_shared<const DensityField>(solve_hydro(spec, 128, 0.05));
  const EventSchedule s = EventSchedule::uniform(0.05, 0.05 / 400);
  ObservablePlan plan;
  plan.z_eps = {0.125};
  plan.z_pointwise = true;
  RunOptions opts;
  opts.observers = make_observer_set(spec, rho, s, plan);
  const TrajectoryRecord r = run_replica(spec, 8, s, opts);
  const double exact = z_discrete(r, 0.125, 0.05);
  const double trap = z_discrete(r, 0.125, 0.05, ZQuadrature::trapezoid);
  CHECK(std::abs(exact - trap) < 0.05 * std::abs(occupation_time_origin(r, spec, 0.05)) + 2e-3);
}

TEST_CASE("Dynkin martingale is centred with the predicted variance") {
  const ModelSpec spec = regime(32, 0.05);
  auto rho = std::make_shared<const DensityField>(solve_hydro(spec, 256, 0.05));
  const EventSchedule s = EventSchedule::uniform(0.05, 0.005);
  ObservablePlan plan;
  plan.dynkin = "fourier:k=1";
  auto obs = make_observer_set(spec, rho, s, plan);
  EnsemblePlan ep;
  ep.columns = {dynkin_at(0.05)};
  const EnsembleResult res = run_ensemble(spec, 1500, 77, s, obs, ep, 1);
  const ObservableSummary m = summarize(res.values(dynkin_at(0.05).name));
  const double qv = quadratic_variation(*rho, parse_test_function("fourier:k=1").derivative, 0.05);
  CHECK(std::abs(m.mean) < 4 * m.std_error);
  CHECK(std::abs(m.variance - qv) < 4 * m.variance_std_error + 0.02 * qv);
}
