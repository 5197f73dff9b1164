#include <doctest.h>

#include <cmath>

#include "wasep/verify.hpp"

using namespace wasep;

namespace {

ModelSpec small(double drift) {
  return ModelSpec::make(6, SmoothFunction::fourier(0.0, 1, drift, 0.0), SmoothFunction::constant(0.5),
                         SmoothFunction::constant(1.0), 0.5, 0.05);
}

}  // namespace

TEST_CASE("exact marginal is a probability law and relaxes to uniform without drift") {
  const Configuration init(std::vector<std::uint8_t>{1, 1, 1, 0, 0, 0});
  const auto law = exact_marginal(small(1.0), init, 0.5);
  CHECK(law.size() == 20);
  double total = 0.0;
  for (const auto& [s, p] : law) {
    CHECK(p >= -1e-12);
    total += p;
  }
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  const auto flat = exact_marginal(small(0.0), init, 0.5);
  for (const auto& [s, p] : flat) CHECK(p == doctest::Approx(1.0 / 20).epsilon(1e-6));
  const auto start = exact_marginal(small(1.0), init, 0.0);
  CHECK(start.at(0b000111) == doctest::Approx(1.0));
}

TEST_CASE("two-site exact marginal matches the closed form") {
  const ModelSpec spec = ModelSpec::make(4, SmoothFunction::constant(0.0), SmoothFunction::constant(0.5),
                                         SmoothFunction::constant(1.0), 0.5, 0.05);
  const Configuration one(std::vector<std::uint8_t>{1, 0, 0, 0});
  const double t = 0.01;
  const auto law = exact_marginal(spec, one, t);
  const double tau = t * 16;
  const double p0 = 0.25 * (1 + 2 * std::exp(-2 * tau) + std::exp(-4 * tau));
  CHECK(law.at(0b0001) == doctest::Approx(p0).epsilon(1e-10));
}

TEST_CASE("event estimate and resource guard") {
  const ModelSpec spec = small(1.0);
  CHECK(estimate_events(spec, 10) == doctest::Approx(10 * 2 * 3 * 0.5 * 36));
  ExperimentConfig c;
  c.verify.budget_events = 1e3;
  Verifier v(c);
  CHECK_THROWS_AS(v.run("hydro-limit"), ResourceError);
  CHECK_THROWS_AS(v.run("no-such-suite"), std::invalid_argument);
  CHECK(Verifier::suite_names().size() == 10);
  CHECK(v.tolerance("total_variation") == 0.01);
}

TEST_CASE("pde-convergence suite passes on defaults") {
  Verifier v(ExperimentConfig{});
  const SuiteReport r = v.run("pde-convergence");
  CHECK(r.passed);
  REQUIRE(r.criteria.size() == 1);
  CHECK(r.criteria[0].id == "A2");
  CHECK(to_json(r).at("passed") == true);
}

TEST_CASE("tolerance overrides apply") {
  ExperimentConfig c;
  c.verify.tolerances["var_field_absolute"] = 0.0;
  Verifier v(c);
  CHECK(v.tolerance("var_field_absolute") == 0.0);
  CHECK_FALSE(v.run("pde-convergence").passed);
}
