#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "wasep/config.hpp"
#include "wasep/io.hpp"
#include "wasep/kmc.hpp"
#include "wasep/limit.hpp"
#include "wasep/observables.hpp"
#include "wasep/stats.hpp"
#include "wasep/verify.hpp"

namespace {

using namespace wasep;

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  int jobs = 0;
  bool dump_trajectories = false;
  std::vector<std::string> suites;
};

ExperimentConfig load(const CommonOptions& opts) {
  ExperimentConfig cfg = opts.config_path.empty() ? ExperimentConfig{} : parse_config(opts.config_path);
  if (opts.seed) cfg.run.seed = *opts.seed;
  if (opts.dump_trajectories) cfg.run.dump_trajectories = true;
  return cfg;
}

OutputLayout prepare_output(const ExperimentConfig& cfg) {
  OutputLayout out(output_root(), cfg.hash());
  write_json(out.manifest(), make_manifest(cfg));
  return out;
}

/// summary.json holds one entry per subcommand so runs sharing a config hash do not clobber each other.
void write_summary(const OutputLayout& out, const std::string& command, const nlohmann::json& body) {
  nlohmann::json all = nlohmann::json::object();
  if (std::ifstream in(out.summary()); in) {
    try {
      all = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception&) {
      all = nlohmann::json::object();
    }
  }
  all[command] = body;
  write_json(out.summary(), all);
}

nlohmann::json stamp(const ExperimentConfig& cfg, nlohmann::json body) {
  body["config_hash"] = cfg.hash();
  body["master_seed"] = cfg.run.seed;
  return body;
}

void write_samples(const OutputLayout& out, const ExperimentConfig& cfg, const EnsembleResult& res) {
  std::vector<std::string> header{"config_hash", "master_seed", "replica", "replica_seed"};
  header.insert(header.end(), res.names.begin(), res.names.end());
  CsvWriter csv(out.table("samples"), header);
  const std::string hash = cfg.hash(), master = std::to_string(cfg.run.seed);
  for (Eigen::Index r = 0; r < res.samples.rows(); ++r) {
    std::vector<std::string> row{hash, master, std::to_string(r),
                                 std::to_string(derive_seed(cfg.run.seed, static_cast<std::uint64_t>(r)))};
    for (Eigen::Index c = 0; c < res.samples.cols(); ++c) row.push_back(format_double(res.samples(r, c)));
    csv.row(row);
  }
}

int cmd_simulate(const CommonOptions& opts) {
  const ExperimentConfig cfg = load(opts);
  const ModelSpec spec = cfg.model_spec();
  const OutputLayout out = prepare_output(cfg);
  const double t = spec.horizon;
  auto rho = std::make_shared<const DensityField>(solve_hydro(spec, cfg.oracle_grid(), t));
  const EventSchedule schedule = EventSchedule::uniform(t, cfg.snapshot_dt());

  ObservablePlan plan;
  EnsemblePlan ep;
  for (const auto& name : cfg.observables.test_functions) {
    if (auto eps = parse_delta_eps(name)) {
      plan.z_eps.push_back(*eps);
    } else {
      plan.fields.push_back(name);
      if (!plan.dynkin) plan.dynkin = name;
    }
  }
  for (double e : cfg.observables.eps_ladder) plan.z_eps.push_back(e);
  std::sort(plan.z_eps.begin(), plan.z_eps.end());
  plan.z_eps.erase(std::unique(plan.z_eps.begin(), plan.z_eps.end()), plan.z_eps.end());
  auto observers = make_observer_set(spec, rho, schedule, plan);

  ep.columns.push_back(gamma_at(spec, t));
  for (const auto& f : plan.fields) ep.columns.push_back(field_at(f, t));
  for (double e : plan.z_eps) ep.columns.push_back(z_at(e, t));
  if (plan.dynkin) ep.columns.push_back(dynkin_at(t));

  std::mutex dump_mutex;
  if (cfg.run.dump_trajectories) {
    const std::string hash = cfg.hash();
    ep.on_record = [&, hash](const TrajectoryRecord& rec) {
      std::lock_guard lock(dump_mutex);
      write_trajectory_csv(out.table("trajectory_" + std::to_string(rec.seed)), rec, spec, hash, cfg.run.seed);
    };
  }
  std::clog << "simulating n=" << spec.n << " M=" << cfg.run.replicas << " T=" << t << "\n";
  const EnsembleResult res = run_ensemble(spec, cfg.run.replicas, cfg.run.seed, schedule, observers, ep, opts.jobs);

  EnsembleSummary sum;
  sum.replicas = res.replicas;
  for (const auto& name : res.names) {
    std::optional<std::uint64_t> nseed;
    if (res.replicas >= 500) nseed = derive_seed(cfg.run.seed, 0, 0x4e4f524dULL);
    sum.observables[name] = summarize(res.values(name), nseed);
  }
  sum.manifest = stamp(cfg, {{"events", res.events}});
  write_summary(out, "simulate", sum.to_json());
  write_samples(out, cfg, res);
  write_density_csv(out.field("density"), *rho, cfg.hash(), cfg.run.seed, 40);
  std::cout << out.dir().string() << "\n";
  return 0;
}

int cmd_hydro(const CommonOptions& opts) {
  const ExperimentConfig cfg = load(opts);
  const ModelSpec spec = cfg.model_spec();
  const OutputLayout out = prepare_output(cfg);
  HydroOptions ho;
  ho.dt = cfg.oracle.dt_pde;
  const DensityField rho = solve_hydro(spec, cfg.oracle_grid(), spec.horizon, ho);
  write_density_csv(out.field("density"), rho, cfg.hash(), cfg.run.seed, 40);
  write_summary(out, "hydro", stamp(cfg, {{"grid", rho.grid_size()},
                                        {"solver_dt", rho.solver_dt()},
                                        {"mass_drift", rho.mass_drift()},
                                        {"kappa", rho.kappa()},
                                        {"eps1", rho.eps1()}}));
  std::cout << out.dir().string() << "\n";
  return 0;
}

int cmd_oracle(const CommonOptions& opts) {
  const ExperimentConfig cfg = load(opts);
  const ModelSpec spec = cfg.model_spec();
  const OutputLayout out = prepare_output(cfg);
  const double t = spec.horizon;
  auto rho = std::make_shared<const DensityField>(solve_hydro(spec, cfg.oracle_grid(), t));
  OracleOptions oo;
  oo.dt = cfg.oracle.dt_pde;
  const CovarianceOracle orc(spec, rho, oo);
  const auto m = static_cast<int>(rho->grid_size());

  nlohmann::json fields = nlohmann::json::object();
  for (const auto& name : cfg.observables.test_functions) {
    if (parse_delta_eps(name)) continue;
    const TestFunction tf = parse_test_function(name);
    fields[name] = {{"var_field", orc.var_field(tf.on_lattice(m), t)},
                    {"quadratic_variation", quadratic_variation(*rho, tf.derivative, t)}};
  }
  const Extrapolation ex = var_Z_extrapolated(orc, t, cfg.observables.eps_ladder);
  nlohmann::json quad = nlohmann::json::object();
  if (cfg.oracle.quad_k > 0) {
    const VarZResult q = var_Z(orc, Mollifier(cfg.observables.eps_ladder.back()), t, cfg.oracle.quad_k);
    quad = {{"eps", q.eps},          {"duhamel", q.variance},        {"gauss_k", q.quadrature_k},
            {"gauss_2k", q.quadrature_2k}, {"converged", q.quadrature_converged}};
  }
  CsvWriter csv(out.table("var_z"), {"config_hash", "master_seed", "t", "eps", "var_z"});
  for (std::size_t i = 0; i < ex.eps.size(); ++i)
    csv.row(std::vector<std::string>{cfg.hash(), std::to_string(cfg.run.seed), format_double(t), format_double(ex.eps[i]),
                                     format_double(ex.values[i])});
  write_summary(out, "oracle", stamp(cfg, {{"t", t},
                                        {"fields", fields},
                                        {"var_z", {{"eps", ex.eps},
                                                   {"values", ex.values},
                                                   {"extrapolated", ex.limit},
                                                   {"slope", ex.slope},
                                                   {"pairwise", ex.pairwise},
                                                   {"spread", ex.spread}}},
                                        {"var_z_point", var_Z_point(orc, t)},
                                        {"quadrature", quad}}));
  std::cout << out.dir().string() << "\n";
  return 0;
}

int cmd_replacement(const CommonOptions& opts) {
  const ExperimentConfig cfg = load(opts);
  const ModelSpec spec = cfg.model_spec();
  const OutputLayout out = prepare_output(cfg);
  const double t = spec.horizon, lambda = cfg.observables.lambda;
  auto rho = std::make_shared<const DensityField>(solve_hydro(spec, cfg.oracle_grid(), t));
  const EventSchedule schedule = EventSchedule::uniform(t, cfg.snapshot_dt());
  std::vector<double> ladder = cfg.observables.eps_ladder;
  std::sort(ladder.begin(), ladder.end());
  ObservablePlan plan;
  plan.z_eps = ladder;
  auto observers = make_observer_set(spec, rho, schedule, plan);
  EnsemblePlan ep;
  ep.columns.push_back(gamma_at(spec, t));
  for (double e : ladder) ep.columns.push_back(z_at(e, t));
  const EnsembleResult res = run_ensemble(spec, cfg.run.replicas, cfg.run.seed, schedule, observers, ep, opts.jobs);

  const auto gamma = res.values(gamma_column(t));
  Eigen::MatrixXd values(res.samples.rows(), static_cast<Eigen::Index>(ladder.size()));
  for (std::size_t j = 0; j < ladder.size(); ++j) {
    const auto z = res.values(z_at(ladder[j], t).name);
    for (Eigen::Index r = 0; r < values.rows(); ++r)
      values(r, static_cast<Eigen::Index>(j)) =
          std::pow(std::abs(z[static_cast<std::size_t>(r)] - gamma[static_cast<std::size_t>(r)]), lambda);
  }
  const ScalingResult sr = scaling_regression(ladder, values, derive_seed(cfg.run.seed, 0, 0x424f4f54ULL));
  CsvWriter csv(out.table("replacement"), {"config_hash", "master_seed", "eps", "moment"});
  for (std::size_t i = 0; i < sr.x.size(); ++i)
    csv.row(std::vector<std::string>{cfg.hash(), std::to_string(cfg.run.seed), format_double(sr.x[i]),
                                     format_double(sr.y[i])});
  EnsembleSummary sum;
  sum.replicas = res.replicas;
  sum.regressions["replacement"] = sr;
  sum.manifest = stamp(cfg, {{"events", res.events}, {"lambda", lambda}});
  write_summary(out, "replacement-scan", sum.to_json());
  std::cout << "slope " << format_double(sr.fit.slope) << " [" << format_double(sr.ci_low) << ", "
            << format_double(sr.ci_high) << "]\n"
            << out.dir().string() << "\n";
  return 0;
}

int cmd_verify(const CommonOptions& opts) {
  ExperimentConfig cfg = load(opts);
  if (!opts.suites.empty()) cfg.verify.suites = opts.suites;
  if (cfg.verify.suites.empty()) {
    std::cerr << "warning: no verification suite selected; nothing to do\n";
    return 0;
  }
  for (const auto& s : cfg.verify.suites) {
    const auto& known = Verifier::suite_names();
    if (std::find(known.begin(), known.end(), s) == known.end()) throw ConfigError("unknown suite '" + s + "'");
  }
  const OutputLayout out = prepare_output(cfg);
  Verifier verifier(cfg, {opts.jobs, &std::clog});
  nlohmann::json suites = nlohmann::json::object(), summaries = nlohmann::json::object();
  bool all = true;
  for (const auto& s : cfg.verify.suites) {
    const SuiteReport rep = verifier.run(s);
    for (const auto& c : rep.criteria)
      std::cout << (c.passed ? "[PASS] " : "[FAIL] ") << c.id << " " << s << ": " << c.message << std::endl;
    suites[s] = to_json(rep);
    summaries[s] = rep.summary;
    all = all && rep.passed;
  }
  write_json(out.report(), stamp(cfg, {{"passed", all}, {"suites", suites}}));
  write_summary(out, "verify", stamp(cfg, {{"suites", summaries}}));
  std::cout << out.dir().string() << "\n";
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weakly asymmetric exclusion: simulation, limit oracles and verification"};
  app.require_subcommand(1);
  app.set_version_flag("--version", WASEP_VERSION);
  CommonOptions opts;
  const auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opts.config_path, "experiment config (TOML)")->check(CLI::ExistingFile);
    sub->add_option("--seed", opts.seed, "master seed override");
    sub->add_option("--jobs", opts.jobs, "worker threads (default: available parallelism)")->check(CLI::NonNegativeNumber);
  };
  auto* simulate = app.add_subcommand("simulate", "run a replica ensemble and summarise its observables");
  add_common(simulate);
  simulate->add_flag("--dump-trajectories", opts.dump_trajectories, "write one trajectory CSV per replica");
  auto* hydro = app.add_subcommand("hydro", "solve the hydrodynamic equation");
  add_common(hydro);
  auto* oracle = app.add_subcommand("oracle", "evaluate the limiting covariance oracles");
  add_common(oracle);
  auto* verify = app.add_subcommand("verify", "run acceptance suites");
  add_common(verify);
  verify->add_option("--suite", opts.suites, "suite names, comma separated")->delimiter(',');
  auto* replacement = app.add_subcommand("replacement-scan", "E|Z^eps - Gamma|^lambda over the eps ladder");
  add_common(replacement);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*simulate) return cmd_simulate(opts);
    if (*hydro) return cmd_hydro(opts);
    if (*oracle) return cmd_oracle(opts);
    if (*verify) return cmd_verify(opts);
    if (*replacement) return cmd_replacement(opts);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const ResourceError& e) {
    std::cerr << "resource guard: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  }
  return 0;
}
