#include "wasep/verify.hpp"

#include <algorithm>
#include <bit>
#include <chrono>
#include <cmath>
#include <sstream>

#include <unsupported/Eigen/MatrixFunctions>

#include "wasep/limit.hpp"
#include "wasep/observables.hpp"

namespace wasep {

namespace {

constexpr std::uint64_t kSuitePurpose = 0x5355495445ULL;

enum SeedSlot : std::uint64_t {
  kHydroSeed = 1,
  kCltEnsembleSeed,
  kReplacementEnsembleSeed,
  kBruteForceSeed,
  kSpdeSeed,
  kDeterminismSeed,
  kFieldNormalitySeed,
  kGammaNormalitySeed,
  kReplacementBootstrapSeed,
  kHolderBootstrapSeed,
  kSpdeBootstrapSeed,
};

constexpr double kHorizon = 0.2;
constexpr std::size_t kHydroReplicas = 200;
constexpr std::size_t kCltReplicas = 4000;
constexpr std::size_t kReplacementReplicas = 2000;
constexpr std::size_t kBruteForceReplicas = 100000;
constexpr std::size_t kSpdePaths = 1000;
constexpr int kSpdeBootstrap = 200;
constexpr double kBruteForceHorizon = 0.5;
constexpr int kReplacementSnapshots = 160;
const std::vector<double> kReplacementEps{0.05, 0.1, 0.2, 0.4};
const std::vector<double> kHolderLags{0.0125, 0.025, 0.05, 0.1, 0.2};
const std::string kFieldFunction = "fourier:k=1";

std::string fixed(double v, int digits = 4) {
  std::ostringstream os;
  os.precision(digits);
  os << v;
  return os.str();
}

/// F(u) = sin(2 pi u), rho0(u) = 1/2 + 0.2 cos(2 pi u), q = 1, T = 0.2.
ModelSpec acceptance_regime(int n) {
  return ModelSpec::make(n, SmoothFunction::fourier(0.0, 1, 0.0, 1.0), SmoothFunction::fourier(0.5, 1, 0.2, 0.0),
                         SmoothFunction::constant(1.0), kHorizon, 0.05);
}

Grid periodic_box(const Grid& v, int half) {
  const Eigen::Index n = v.size();
  Grid out(n);
  for (Eigen::Index x = 0; x < n; ++x) {
    double s = 0.0;
    for (int d = -half; d <= half; ++d) s += v(((x + d) % n + n) % n);
    out(x) = s / (2 * half + 1);
  }
  return out;
}

std::size_t scaled(std::size_t count, double scale, std::size_t floor) {
  return std::max(floor, static_cast<std::size_t>(std::llround(static_cast<double>(count) * scale)));
}

CriterionResult criterion(std::string id, std::string title) {
  CriterionResult c;
  c.id = std::move(id);
  c.title = std::move(title);
  return c;
}

std::size_t pattern_of(const Configuration& c) {
  std::size_t p = 0;
  for (int x = 0; x < c.size(); ++x)
    if (c.occupied(x)) p |= std::size_t{1} << x;
  return p;
}

}  // namespace

double estimate_events(const ModelSpec& spec, std::size_t replicas) {
  double mass = 0.0;
  constexpr int kPoints = 1024;
  for (int i = 0; i < kPoints; ++i) mass += spec.initial_profile(static_cast<double>(i) / kPoints);
  const double particles = spec.n * mass / kPoints;
  return static_cast<double>(replicas) * 2.0 * particles * spec.horizon * spec.n * spec.n;
}

std::map<std::uint32_t, double> exact_marginal(const ModelSpec& spec, const Configuration& initial, double t) {
  const int n = spec.n;
  if (n > 20) throw std::invalid_argument("exact_marginal: lattice too large for a dense generator");
  const int k = initial.particle_count();
  std::vector<std::uint32_t> states;
  for (std::uint32_t p = 0; p < (1u << n); ++p)
    if (std::popcount(p) == k) states.push_back(p);
  if (states.size() > 4000) throw std::invalid_argument("exact_marginal: particle-number sector too large");
  std::map<std::uint32_t, Eigen::Index> index;
  for (std::size_t i = 0; i < states.size(); ++i) index[states[i]] = static_cast<Eigen::Index>(i);

  const auto size = static_cast<Eigen::Index>(states.size());
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(size, size);
  for (Eigen::Index i = 0; i < size; ++i) {
    const std::uint32_t p = states[static_cast<std::size_t>(i)];
    for (int x = 0; x < n; ++x) {
      if (!(p >> x & 1u)) continue;
      for (int dir : {+1, -1}) {
        const int y = (x + dir + n) % n;
        if (p >> y & 1u) continue;
        const std::uint32_t target = (p & ~(1u << x)) | (1u << y);
        const double rate = jump_rate(spec, x, dir);
        q(i, index.at(target)) += rate;
        q(i, i) -= rate;
      }
    }
  }
  const Eigen::MatrixXd scaled_q = q * (t * n * n);
  const Eigen::MatrixXd transition = scaled_q.exp();
  const Eigen::Index start = index.at(static_cast<std::uint32_t>(pattern_of(initial)));
  std::map<std::uint32_t, double> law;
  for (Eigen::Index j = 0; j < size; ++j) law[states[static_cast<std::size_t>(j)]] = transition(start, j);
  return law;
}

nlohmann::json to_json(const CriterionResult& c) {
  return {{"id", c.id}, {"title", c.title}, {"passed", c.passed}, {"message", c.message}, {"details", c.details}};
}

nlohmann::json to_json(const SuiteReport& r) {
  nlohmann::json criteria = nlohmann::json::array();
  for (const auto& c : r.criteria) criteria.push_back(to_json(c));
  return {{"suite", r.name}, {"passed", r.passed}, {"criteria", criteria}, {"summary", r.summary}};
}

struct Verifier::Impl {
  struct Ensemble {
    ModelSpec spec;
    std::shared_ptr<const DensityField> density;
    EventSchedule schedule;
    EnsembleResult result;
  };

  const Verifier& owner;
  std::map<std::string, std::shared_ptr<const DensityField>> densities;
  std::optional<Ensemble> clt;
  std::optional<Ensemble> replacement;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  explicit Impl(const Verifier& v) : owner(v) {}

  void log(const std::string& suite, const std::string& msg) const {
    if (!owner.options_.log) return;
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    *owner.options_.log << "[" << suite << " +" << fixed(secs, 3) << "s] " << msg << std::endl;
  }

  std::uint64_t seed(SeedSlot slot) const { return derive_seed(owner.config_.run.seed, slot, kSuitePurpose); }
  double scale() const { return owner.config_.verify.replica_scale; }

  void guard(const ModelSpec& spec, std::size_t replicas) const {
    const double events = estimate_events(spec, replicas);
    if (events > owner.config_.verify.budget_events) {
      std::ostringstream os;
      os << "estimated " << events << " events (n = " << spec.n << ", M = " << replicas << ") exceed the budget of "
         << owner.config_.verify.budget_events;
      throw ResourceError(os.str());
    }
  }

  std::shared_ptr<const DensityField> density(const ModelSpec& spec, Eigen::Index m) {
    std::ostringstream key;
    key << spec.drift.describe() << "|" << spec.initial_profile.describe() << "|" << spec.horizon << "|" << m;
    auto& slot = densities[key.str()];
    if (!slot) {
      HydroOptions opts;
      opts.dt = owner.config_.oracle.dt_pde;
      slot = std::make_shared<const DensityField>(solve_hydro(spec, m, spec.horizon, opts));
    }
    return slot;
  }

  Eigen::Index oracle_grid(int n) const {
    const int m = owner.config_.oracle.m;
    return m > 0 ? m : std::max(n, 256);
  }

  CovarianceOracle oracle(const ModelSpec& spec, std::shared_ptr<const DensityField> rho) const {
    OracleOptions opts;
    opts.dt = owner.config_.oracle.dt_pde;
    return CovarianceOracle(spec, std::move(rho), opts);
  }

  Ensemble& clt_ensemble(const std::string& suite) {
    if (clt) return *clt;
    const ModelSpec spec = acceptance_regime(256);
    const std::size_t replicas = scaled(kCltReplicas, scale(), 100);
    guard(spec, replicas);
    auto rho = density(spec, oracle_grid(spec.n));
    const EventSchedule schedule = EventSchedule::uniform(kHorizon, kHorizon / 200.0);
    ObservablePlan plan;
    plan.fields = {kFieldFunction};
    auto observers = make_observer_set(spec, rho, schedule, plan);
    EnsemblePlan ep;
    ep.columns = {field_at(kFieldFunction, kHorizon), gamma_at(spec, kHorizon)};
    log(suite, "simulating n = 256, M = " + std::to_string(replicas) + " (field and occupation-time ensemble)");
    EnsembleResult res = run_ensemble(spec, replicas, seed(kCltEnsembleSeed), schedule, observers, ep, owner.options_.jobs);
    log(suite, "done, " + std::to_string(res.events) + " attempted jumps");
    clt = Ensemble{spec, rho, schedule, std::move(res)};
    return *clt;
  }

  Ensemble& replacement_ensemble(const std::string& suite) {
    if (replacement) return *replacement;
    const ModelSpec spec = acceptance_regime(128);
    const std::size_t replicas = scaled(kReplacementReplicas, scale(), 100);
    guard(spec, replicas);
    auto rho = density(spec, oracle_grid(spec.n));
    const EventSchedule schedule = EventSchedule::uniform(kHorizon, kHorizon / kReplacementSnapshots);
    ObservablePlan plan;
    plan.fields = {kFieldFunction};
    plan.z_eps = kReplacementEps;
    plan.dynkin = kFieldFunction;
    auto observers = make_observer_set(spec, rho, schedule, plan);
    EnsemblePlan ep;
    for (double e : kReplacementEps) ep.columns.push_back(z_at(e, kHorizon));
    for (double t : schedule.times()) ep.columns.push_back(gamma_at(spec, t));
    ep.columns.push_back(dynkin_at(kHorizon));
    log(suite, "simulating n = 128, M = " + std::to_string(replicas) + " (replacement, Hoelder and Dynkin ensemble)");
    EnsembleResult res =
        run_ensemble(spec, replicas, seed(kReplacementEnsembleSeed), schedule, observers, ep, owner.options_.jobs);
    log(suite, "done, " + std::to_string(res.events) + " attempted jumps");
    replacement = Ensemble{spec, rho, schedule, std::move(res)};
    return *replacement;
  }

  // ---- suites -------------------------------------------------------------------------------

  SuiteReport hydro_limit() {
    const std::string suite = "hydro-limit";
    SuiteReport rep;
    rep.name = suite;
    const ModelSpec spec = acceptance_regime(256);
    const std::size_t replicas = scaled(kHydroReplicas, scale(), 20);
    guard(spec, replicas);
    auto rho = density(spec, oracle_grid(spec.n));
    const std::vector<double> times{0.1, 0.2};
    const EventSchedule schedule({0.0, 0.1, 0.2}, kHorizon);
    ObservablePlan plan;
    plan.site_occupations = true;
    auto observers = make_observer_set(spec, rho, schedule, plan);
    const int n = spec.n;
    EnsemblePlan ep;
    for (double t : times) {
      const std::size_t k = *schedule.index_of(t);
      for (int x = 0; x < n; ++x)
        ep.columns.push_back({"eta[" + std::to_string(x) + "][t=" + fixed(t) + "]", [k, x](const TrajectoryRecord& r) {
                                return r.snapshot_values(static_cast<Eigen::Index>(k), x);
                              }});
    }
    log(suite, "simulating n = 256, M = " + std::to_string(replicas));
    const EnsembleResult res = run_ensemble(spec, replicas, seed(kHydroSeed), schedule, observers, ep, owner.options_.jobs);
    const int half = n / 8;
    const double tol = owner.tolerance("hydro_max_error");
    CriterionResult c = criterion("A1", "Hydrodynamic limit: smoothed empirical density vs PDE");
    c.passed = true;
    std::ostringstream msg;
    for (std::size_t i = 0; i < times.size(); ++i) {
      const Grid mean = res.samples.middleCols(static_cast<Eigen::Index>(i) * n, n).colwise().mean().transpose();
      const Grid empirical = periodic_box(mean, half);
      const Grid pde = periodic_box(rho->on_lattice(times[i], n), half);
      const double err = (empirical - pde).cwiseAbs().maxCoeff();
      c.details["max_error"][fixed(times[i])] = err;
      c.passed = c.passed && err < tol;
      msg << "t=" << times[i] << " max|err|=" << fixed(err) << " ";
    }
    c.details["replicas"] = replicas;
    c.details["smoothing_half_width"] = half;
    c.details["threshold"] = tol;
    msg << "(< " << tol << ", M=" << replicas << ")";
    c.message = msg.str();
    rep.summary = c.details;
    rep.criteria.push_back(c);
    return rep;
  }

  SuiteReport pde_convergence() {
    const std::string suite = "pde-convergence";
    SuiteReport rep;
    rep.name = suite;
    CriterionResult c = criterion("A2", "Solver order-2 convergence and oracle energy identity");
    const double t_heat = 0.05;
    const ModelSpec heat = ModelSpec::make(64, SmoothFunction::constant(0.0), SmoothFunction::fourier(0.5, 1, 0.1, 0.0),
                                           SmoothFunction::constant(1.0), t_heat, 0.05);
    std::vector<double> errors;
    for (Eigen::Index m : {32, 64, 128, 256}) {
      const DensityField f = solve_hydro(heat, m, t_heat);
      const Grid exact = sample_on_grid(
          [&](double u) { return 0.5 + 0.1 * std::exp(-4.0 * M_PI * M_PI * t_heat) * std::cos(kTwoPi * u); }, m);
      errors.push_back((f.slice(t_heat) - exact).cwiseAbs().maxCoeff());
    }
    const double ratio_tol = owner.tolerance("pde_ratio_tolerance");
    bool order_ok = true;
    std::vector<double> ratios;
    for (std::size_t i = 0; i + 1 < errors.size(); ++i) {
      ratios.push_back(errors[i] / errors[i + 1]);
      order_ok = order_ok && std::abs(ratios.back() - 4.0) <= ratio_tol;
    }
    c.details["errors"] = errors;
    c.details["ratios"] = ratios;

    const ModelSpec eq = ModelSpec::make(256, SmoothFunction::constant(0.0), SmoothFunction::constant(0.5),
                                         SmoothFunction::constant(1.0), kHorizon, 0.05);
    const Eigen::Index m = oracle_grid(256);
    const CovarianceOracle orc = oracle(eq, density(eq, m));
    const Grid f = parse_test_function(kFieldFunction).on_lattice(static_cast<int>(m));
    const double var_tol = owner.tolerance("var_field_absolute");
    const double energy_tol = owner.tolerance("energy_relative");
    bool oracle_ok = true;
    std::ostringstream var_msg;
    for (double t : {0.05, 0.2}) {
      const double v = orc.var_field(f, t);
      const EnergyBalance e = energy_balance(orc, f, t);
      c.details["var_field"][fixed(t)] = v;
      c.details["energy_defect"][fixed(t)] = e.relative_defect();
      oracle_ok = oracle_ok && std::abs(v - 0.25) <= var_tol && e.relative_defect() <= energy_tol;
      var_msg << " var(" << t << ")=" << fixed(v, 7) << " defect=" << fixed(e.relative_defect(), 2);
    }
    c.passed = order_ok && oracle_ok;
    std::ostringstream msg;
    msg << "ratios";
    for (double r : ratios) msg << " " << fixed(r);
    msg << " (4+-" << ratio_tol << ");" << var_msg.str() << " (0.25+-" << var_tol << ", defect<=" << energy_tol << ")";
    c.message = msg.str();
    rep.summary = c.details;
    rep.criteria.push_back(c);
    return rep;
  }

  SuiteReport field_clt() {
    const std::string suite = "field-clt";
    SuiteReport rep;
    rep.name = suite;
    Ensemble& e = clt_ensemble(suite);
    const auto x = e.result.values(field_at(kFieldFunction, kHorizon).name);
    const ObservableSummary s = summarize(x, seed(kFieldNormalitySeed));
    const CovarianceOracle orc = oracle(e.spec, e.density);
    const Grid f = parse_test_function(kFieldFunction).on_lattice(static_cast<int>(e.density->grid_size()));
    const double target = orc.var_field(f, kHorizon);
    const double rel = std::abs(s.variance - target) / target;
    CriterionResult c = criterion("A3", "Field CLT: Var X_t(f) vs oracle and normality");
    const double rel_tol = owner.tolerance("field_variance_relative");
    const double p_tol = owner.tolerance("ks_pvalue");
    c.passed = rel <= rel_tol && s.normality->ks_pvalue > p_tol;
    c.details = {{"sample", to_json(s)}, {"oracle_variance", target}, {"relative_error", rel}};
    c.message = "var=" + fixed(s.variance) + " oracle=" + fixed(target) + " rel=" + fixed(rel, 3) + " (<=" +
                fixed(rel_tol) + "), KS p=" + fixed(s.normality->ks_pvalue, 3) + " (>" + fixed(p_tol) + ")";
    rep.summary = c.details;
    rep.criteria.push_back(c);
    return rep;
  }

  SuiteReport occupation_gaussian() {
    const std::string suite = "occupation-gaussian";
    SuiteReport rep;
    rep.name = suite;
    Ensemble& e = clt_ensemble(suite);
    const auto g = e.result.values(gamma_column(kHorizon));
    const ObservableSummary s = summarize(g, seed(kGammaNormalitySeed));
    const double p_tol = owner.tolerance("ks_pvalue"), z_tol = owner.tolerance("moment_z");
    CriterionResult c = criterion("A4", "Occupation-time Gaussianity of Gamma_n(0.2)");
    const auto& nr = *s.normality;
    c.passed = nr.ks_pvalue > p_tol && std::abs(nr.skewness_z) < z_tol && std::abs(nr.kurtosis_z) < z_tol;
    c.details = {{"sample", to_json(s)}};
    c.message = "KS p=" + fixed(nr.ks_pvalue, 3) + " (>" + fixed(p_tol) + "), skew z=" + fixed(nr.skewness_z, 3) +
                ", kurt z=" + fixed(nr.kurtosis_z, 3) + " (|z|<" + fixed(z_tol) + ")";
    rep.summary = c.details;
    rep.criteria.push_back(c);
    return rep;
  }

  SuiteReport variance_id() {
    const std::string suite = "variance-id";
    SuiteReport rep;
    rep.name = suite;
    Ensemble& e = clt_ensemble(suite);
    const auto g = e.result.values(gamma_column(kHorizon));
    const ObservableSummary s = summarize(g);
    const CovarianceOracle orc = oracle(e.spec, e.density);
    const auto& ladder = owner.config_.observables.eps_ladder;
    log(suite, "oracle: Duhamel variance on the eps ladder");
    const Extrapolation ex = var_Z_extrapolated(orc, kHorizon, ladder);
    const double point = var_Z_point(orc, kHorizon);
    const double rel = std::abs(s.variance - ex.limit) / ex.limit;
    const double rel_tol = owner.tolerance("gamma_variance_relative");
    CriterionResult c = criterion("A5", "Variance identification: Var Gamma_n vs extrapolated Var Z");
    c.details = {{"sample", to_json(s)},
                 {"ladder", ex.eps},
                 {"oracle_values", ex.values},
                 {"extrapolated", ex.limit},
                 {"pairwise", ex.pairwise},
                 {"ladder_spread", ex.spread},
                 {"point_source_variance", point},
                 {"relative_error", rel}};
    bool ok = rel <= rel_tol;
    std::string msg = "var=" + fixed(s.variance) + " extrapolated=" + fixed(ex.limit) + " rel=" + fixed(rel, 3) +
                      " (<=" + fixed(rel_tol) + ")";

    const int quad_k = owner.config_.oracle.quad_k;
    if (quad_k > 0) {
      log(suite, "oracle: tensor Gauss-Legendre cross-check");
      const VarZResult q = var_Z(orc, Mollifier(ladder.back()), kHorizon, quad_k);
      c.details["quadrature"] = {{"eps", q.eps},
                                 {"duhamel", q.variance},
                                 {"quad_k", q.quad_k},
                                 {"gauss_k", q.quadrature_k},
                                 {"gauss_2k", q.quadrature_2k},
                                 {"converged", q.quadrature_converged}};
    }

    if (owner.config_.verify.spde_check) {
      const std::size_t paths = scaled(kSpdePaths, scale(), 50);
      log(suite, "SPDE cross-check with " + std::to_string(paths) + " paths");
      SpdeOptions so;
      so.m = 128;
      so.z_eps = ladder;
      const SpdeSimulator sim(e.spec, e.density, EventSchedule({0.0, kHorizon}, kHorizon), so);
      const auto ne = static_cast<Eigen::Index>(ladder.size());
      const Eigen::MatrixXd z = run_replicas(
          paths, seed(kSpdeSeed), ne,
          [&](ReplicaContext& ctx, Eigen::Ref<Eigen::RowVectorXd> row) { row = sim.simulate(ctx.seed).z.row(1); },
          owner.options_.jobs);
      const auto extrapolate_rows = [&](const Eigen::MatrixXd& rows) {
        std::vector<double> vars;
        for (Eigen::Index j = 0; j < ne; ++j) {
          const Eigen::VectorXd col = rows.col(j);
          vars.push_back(two_pass_moments(std::span<const double>(col.data(), static_cast<std::size_t>(col.size()))).variance);
        }
        return extrapolate_linear(ladder, vars);
      };
      const Extrapolation spde = extrapolate_rows(z);
      RunningMoments boot;
      Eigen::MatrixXd resample(z.rows(), ne);
      for (int b = 0; b < kSpdeBootstrap; ++b) {
        RandomStream rng(derive_seed(seed(kSpdeBootstrapSeed), static_cast<std::uint64_t>(b)));
        for (Eigen::Index i = 0; i < z.rows(); ++i) resample.row(i) = z.row(rng.below(static_cast<std::uint32_t>(z.rows())));
        boot.push(extrapolate_rows(resample).limit);
      }
      const double se_spde = std::sqrt(boot.variance());
      const double se = std::sqrt(se_spde * se_spde + s.variance_std_error * s.variance_std_error);
      const double k_tol = owner.tolerance("spde_standard_errors");
      const double dev = std::abs(s.variance - spde.limit) / se;
      c.details["spde"] = {{"paths", paths},
                           {"grid", so.m},
                           {"values", spde.values},
                           {"extrapolated", spde.limit},
                           {"standard_error", se_spde},
                           {"combined_standard_error", se},
                           {"deviation_in_se", dev}};
      ok = ok && dev <= k_tol;
      msg += "; SPDE=" + fixed(spde.limit) + " dev=" + fixed(dev, 3) + " SE (<=" + fixed(k_tol) + ")";
    }
    c.passed = ok;
    c.message = msg;
    rep.summary = c.details;
    rep.criteria.push_back(c);
    return rep;
  }

  SuiteReport replacement_scan() {
    const std::string suite = "replacement";
    SuiteReport rep;
    rep.name = suite;
    Ensemble& e = replacement_ensemble(suite);
    const double lambda = owner.config_.observables.lambda;
    const auto gamma = e.result.values(gamma_column(kHorizon));
    const auto rows = static_cast<Eigen::Index>(e.result.replicas);
    Eigen::MatrixXd values(rows, static_cast<Eigen::Index>(kReplacementEps.size()));
    for (std::size_t j = 0; j < kReplacementEps.size(); ++j) {
      const auto z = e.result.values(z_at(kReplacementEps[j], kHorizon).name);
      for (Eigen::Index r = 0; r < rows; ++r)
        values(r, static_cast<Eigen::Index>(j)) = std::pow(std::abs(z[static_cast<std::size_t>(r)] - gamma[static_cast<std::size_t>(r)]), lambda);
    }
    const ScalingResult sr = scaling_regression(kReplacementEps, values, seed(kReplacementBootstrapSeed));
    const double exponent = lambda / 2.0;
    double log_c = 0.0;
    for (std::size_t i = 0; i < sr.x.size(); ++i) log_c += std::log(sr.y[i]) - exponent * std::log(sr.x[i]);
    const double c_fit = std::exp(log_c / static_cast<double>(sr.x.size()));
    const double dom = owner.tolerance("replacement_dominance");
    bool monotone = true, dominated = true;
    for (std::size_t i = 0; i < sr.y.size(); ++i) {
      if (i > 0) monotone = monotone && sr.y[i] > sr.y[i - 1];
      dominated = dominated && sr.y[i] <= dom * c_fit * std::pow(sr.x[i], exponent);
    }
    const double lo = owner.tolerance("replacement_slope_low"), hi = owner.tolerance("replacement_slope_high");
    CriterionResult c = criterion("A6", "Replacement scaling of E|Z^eps - Gamma|^lambda in eps");
    c.passed = monotone && dominated && sr.fit.slope >= lo && sr.fit.slope <= hi;
    c.details = {{"regression", to_json(sr)},   {"lambda", lambda},     {"fitted_constant", c_fit},
                 {"monotone", monotone},         {"dominated", dominated}, {"dominance_factor", dom}};
    c.message = "slope=" + fixed(sr.fit.slope) + " CI [" + fixed(sr.ci_low) + ", " + fixed(sr.ci_high) + "] in [" +
                fixed(lo) + ", " + fixed(hi) + "], monotone=" + (monotone ? "yes" : "no") +
                ", dominated by " + fixed(dom) + " C eps^" + fixed(exponent) + "=" + (dominated ? "yes" : "no");
    rep.summary = c.details;
    rep.criteria.push_back(c);
    return rep;
  }

  SuiteReport holder() {
    const std::string suite = "holder";
    SuiteReport rep;
    rep.name = suite;
    Ensemble& e = replacement_ensemble(suite);
    const double lambda = owner.config_.observables.lambda;
    const auto rows = static_cast<Eigen::Index>(e.result.replicas);
    const std::size_t snaps = e.schedule.size();
    const double dt = e.schedule[1] - e.schedule[0];
    std::vector<Eigen::Index> cols;
    for (double t : e.schedule.times()) cols.push_back(e.result.column(gamma_column(t)));
    Eigen::MatrixXd values = Eigen::MatrixXd::Zero(rows, static_cast<Eigen::Index>(kHolderLags.size()));
    for (std::size_t l = 0; l < kHolderLags.size(); ++l) {
      const auto lag = static_cast<std::size_t>(std::llround(kHolderLags[l] / dt));
      const std::size_t pairs = snaps - lag;
      for (Eigen::Index r = 0; r < rows; ++r) {
        double acc = 0.0;
        for (std::size_t k = 0; k < pairs; ++k)
          acc += std::pow(std::abs(e.result.samples(r, cols[k + lag]) - e.result.samples(r, cols[k])), lambda);
        values(r, static_cast<Eigen::Index>(l)) = acc / static_cast<double>(pairs);
      }
    }
    const ScalingResult sr = scaling_regression(kHolderLags, values, seed(kHolderBootstrapSeed));
    const double lo = owner.tolerance("holder_slope_low"), hi = owner.tolerance("holder_slope_high");
    CriterionResult c = criterion("A7", "Hoelder modulus of Gamma_n: E|Gamma(t) - Gamma(s)|^lambda vs t - s");
    c.passed = sr.fit.slope >= lo && sr.fit.slope <= hi;
    c.details = {{"regression", to_json(sr)}, {"lambda", lambda}, {"bound_exponent", 0.75 * lambda}};
    c.message = "slope=" + fixed(sr.fit.slope) + " CI [" + fixed(sr.ci_low) + ", " + fixed(sr.ci_high) + "] in [" +
                fixed(lo) + ", " + fixed(hi) + "]";
    rep.summary = c.details;
    rep.criteria.push_back(c);
    return rep;
  }

  SuiteReport dynkin() {
    const std::string suite = "dynkin";
    SuiteReport rep;
    rep.name = suite;
    Ensemble& e = replacement_ensemble(suite);
    const auto m = e.result.values(dynkin_at(kHorizon).name);
    const ObservableSummary s = summarize(m);
    const double target = quadratic_variation(*e.density, parse_test_function(kFieldFunction).derivative, kHorizon);
    const double rel = std::abs(s.variance - target) / target;
    const double tol = owner.tolerance("dynkin_relative");
    CriterionResult c = criterion("A9", "Dynkin martingale quadratic variation");
    c.passed = rel <= tol;
    c.details = {{"sample", to_json(s)}, {"quadratic_variation", target}, {"relative_error", rel}};
    c.message = "Var M=" + fixed(s.variance) + " QV=" + fixed(target) + " rel=" + fixed(rel, 3) + " (<=" + fixed(tol) +
                "), mean=" + fixed(s.mean, 3) + " +- " + fixed(s.std_error, 2);
    rep.summary = c.details;
    rep.criteria.push_back(c);
    return rep;
  }

  nlohmann::json brute_force_histogram(std::size_t replicas, std::uint64_t master, int jobs, double& tv) const {
    const ModelSpec spec = ModelSpec::make(6, SmoothFunction::fourier(0.0, 1, 1.0, 0.0), SmoothFunction::constant(0.5),
                                           SmoothFunction::constant(1.0), kBruteForceHorizon, 0.05);
    const Configuration initial(std::vector<std::uint8_t>{1, 1, 1, 0, 0, 0});
    const EventSchedule schedule({0.0, kBruteForceHorizon}, kBruteForceHorizon);
    RunOptions ro;
    ro.initial = initial;
    const Eigen::MatrixXd finals = run_replicas(
        replicas, master, 1,
        [&](ReplicaContext& ctx, Eigen::Ref<Eigen::RowVectorXd> row) {
          row(0) = static_cast<double>(pattern_of(run_replica(spec, ctx.seed, schedule, ro).final_configuration));
        },
        jobs);
    const auto law = exact_marginal(spec, initial, kBruteForceHorizon);
    std::map<std::uint32_t, double> counts;
    for (Eigen::Index r = 0; r < finals.rows(); ++r) counts[static_cast<std::uint32_t>(finals(r, 0))] += 1.0;
    tv = 0.0;
    nlohmann::json table = nlohmann::json::object();
    for (const auto& [state, p] : law) {
      const double freq = counts.count(state) ? counts[state] / static_cast<double>(replicas) : 0.0;
      tv += 0.5 * std::abs(freq - p);
      table[std::to_string(state)] = {{"exact", p}, {"empirical", freq}};
    }
    for (const auto& [state, cnt] : counts)
      if (!law.count(state)) tv += 0.5 * cnt / static_cast<double>(replicas);
    return table;
  }

  SuiteReport brute_force() {
    const std::string suite = "brute-force";
    SuiteReport rep;
    rep.name = suite;
    const std::size_t replicas = scaled(kBruteForceReplicas, scale(), 1000);
    log(suite, "simulating n = 6, K = 3, " + std::to_string(replicas) + " replicas");
    double tv = 0.0;
    const nlohmann::json table = brute_force_histogram(replicas, seed(kBruteForceSeed), owner.options_.jobs, tv);
    const double tol = owner.tolerance("total_variation");
    CriterionResult c = criterion("A8", "Exact-oracle equivalence (n = 6, K = 3, T = 0.5)");
    c.passed = tv < tol;
    c.details = {{"replicas", replicas}, {"total_variation", tv}, {"states", table}};
    c.message = "TV=" + fixed(tv, 3) + " (<" + fixed(tol) + ", " + std::to_string(replicas) + " replicas, " +
                std::to_string(table.size()) + " states)";
    rep.summary = c.details;
    rep.criteria.push_back(c);
    return rep;
  }

  nlohmann::json small_ensemble_summary(int jobs) const {
    const ModelSpec spec = ModelSpec::make(32, SmoothFunction::fourier(0.0, 1, 0.0, 1.0),
                                           SmoothFunction::fourier(0.5, 1, 0.2, 0.0), SmoothFunction::constant(1.0),
                                           0.05, 0.05);
    auto rho = std::make_shared<const DensityField>(solve_hydro(spec, 64, spec.horizon));
    const EventSchedule schedule = EventSchedule::uniform(spec.horizon, spec.horizon / 20.0);
    ObservablePlan plan;
    plan.fields = {kFieldFunction};
    plan.z_eps = {0.125, 0.25};
    plan.dynkin = kFieldFunction;
    auto observers = make_observer_set(spec, rho, schedule, plan);
    EnsemblePlan ep;
    ep.columns = {field_at(kFieldFunction, spec.horizon), gamma_at(spec, spec.horizon), z_at(0.125, spec.horizon),
                  z_at(0.25, spec.horizon), dynkin_at(spec.horizon)};
    const EnsembleResult res = run_ensemble(spec, 128, seed(kDeterminismSeed), schedule, observers, ep, jobs);
    EnsembleSummary sum;
    sum.replicas = res.replicas;
    for (const auto& name : res.names) sum.observables[name] = summarize(res.values(name), seed(kDeterminismSeed), 200);
    sum.manifest = {{"master_seed", owner.config_.run.seed}, {"events", res.events}};
    return sum.to_json();
  }

  SuiteReport determinism() {
    const std::string suite = "determinism";
    SuiteReport rep;
    rep.name = suite;
    log(suite, "re-running a small ensemble and the brute-force histogram with 1 and 2 workers");
    const std::string a = small_ensemble_summary(1).dump();
    const std::string b = small_ensemble_summary(1).dump();
    const std::string c2 = small_ensemble_summary(2).dump();
    double tv1 = 0, tv2 = 0;
    const std::size_t replicas = scaled(20000, scale(), 1000);
    const std::string h1 = brute_force_histogram(replicas, seed(kDeterminismSeed), 1, tv1).dump();
    const std::string h2 = brute_force_histogram(replicas, seed(kDeterminismSeed), 2, tv2).dump();
    CriterionResult c = criterion("A10", "Determinism: identical config and seed give byte-identical summaries");
    const bool rerun = a == b, workers = a == c2, hist = h1 == h2;
    c.passed = rerun && workers && hist;
    c.details = {{"ensemble_rerun_identical", rerun},
                 {"ensemble_workers_identical", workers},
                 {"histogram_workers_identical", hist},
                 {"summary_sha256", sha256_hex(a)}};
    c.message = std::string("rerun ") + (rerun ? "identical" : "DIFFERS") + ", 1 vs 2 workers " +
                (workers ? "identical" : "DIFFERS") + ", histogram " + (hist ? "identical" : "DIFFERS");
    rep.summary = c.details;
    rep.criteria.push_back(c);
    return rep;
  }
};

Verifier::Verifier(ExperimentConfig config, VerifyOptions options)
    : config_(std::move(config)), options_(options), impl_(std::make_unique<Impl>(*this)) {}

Verifier::~Verifier() = default;

const std::vector<std::string>& Verifier::suite_names() {
  static const std::vector<std::string> names{"hydro-limit", "pde-convergence", "field-clt", "occupation-gaussian",
                                              "variance-id", "replacement",     "holder",    "brute-force",
                                              "dynkin",      "determinism"};
  return names;
}

double Verifier::tolerance(const std::string& key) const {
  if (auto it = config_.verify.tolerances.find(key); it != config_.verify.tolerances.end()) return it->second;
  return default_tolerances().at(key);
}

SuiteReport Verifier::run(const std::string& suite) {
  SuiteReport rep;
  if (suite == "hydro-limit") rep = impl_->hydro_limit();
  else if (suite == "pde-convergence") rep = impl_->pde_convergence();
  else if (suite == "field-clt") rep = impl_->field_clt();
  else if (suite == "occupation-gaussian") rep = impl_->occupation_gaussian();
  else if (suite == "variance-id") rep = impl_->variance_id();
  else if (suite == "replacement") rep = impl_->replacement_scan();
  else if (suite == "holder") rep = impl_->holder();
  else if (suite == "brute-force") rep = impl_->brute_force();
  else if (suite == "dynkin") rep = impl_->dynkin();
  else if (suite == "determinism") rep = impl_->determinism();
  else throw std::invalid_argument("unknown suite '" + suite + "'");
  rep.passed = std::all_of(rep.criteria.begin(), rep.criteria.end(), [](const auto& c) { return c.passed; });
  return rep;
}

}  // namespace wasep
