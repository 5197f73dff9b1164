#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wasep/lattice.hpp"

namespace wasep {

/// Raised for malformed or invalid configuration; the message carries the source line when known.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ModelConfig {
  int n = 128;
  double horizon = 0.2;
  double eps0 = 0.05;
  SmoothFunction drift = SmoothFunction::constant(0.0);
  SmoothFunction initial_profile = SmoothFunction::constant(0.5);
  SmoothFunction time_weight = SmoothFunction::constant(1.0);
};

struct RunConfig {
  std::size_t replicas = 2000;
  std::uint64_t seed = 20240601;
  double dt = 0.0;  ///< snapshot spacing; 0 means T / 200
  bool dump_trajectories = false;
};

struct ObservablesConfig {
  std::vector<std::string> test_functions{"fourier:k=1"};
  std::vector<double> eps_ladder{0.2, 0.1, 0.05};
  double lambda = 1.5;
};

struct OracleConfig {
  int m = 0;          ///< 0 means max(n, 256)
  double dt_pde = 0;  ///< 0 means the largest stable step
  int quad_k = 8;
};

struct VerifyConfig {
  std::vector<std::string> suites;
  double budget_events = 2e11;
  double replica_scale = 1.0;  ///< multiplies every suite's replica count (smoke runs)
  bool spde_check = true;
  std::map<std::string, double> tolerances;  ///< overrides of the named acceptance thresholds
};

struct ExperimentConfig {
  ModelConfig model;
  RunConfig run;
  ObservablesConfig observables;
  OracleConfig oracle;
  VerifyConfig verify;

  /// Validated model; throws ConfigError on violated invariants.
  ModelSpec model_spec() const;
  int oracle_grid() const { return oracle.m > 0 ? oracle.m : std::max(model.n, 256); }
  double snapshot_dt() const { return run.dt > 0 ? run.dt : model.horizon / 200.0; }

  /// Canonical JSON (sorted keys, defaults filled). Equal configs give equal dumps.
  nlohmann::json to_json() const;
  /// First 16 hex digits of SHA-256 of the canonical JSON dump.
  std::string hash() const;
};

/// Default tolerance table; `VerifyConfig::tolerances` may override any of these keys.
const std::map<std::string, double>& default_tolerances();

ExperimentConfig parse_config(const std::filesystem::path& path);
ExperimentConfig parse_config_string(const std::string& text, const std::string& source = "<string>");
/// Inverse of ExperimentConfig::to_json.
ExperimentConfig config_from_json(const nlohmann::json& j);

nlohmann::json function_to_json(const SmoothFunction& f);
SmoothFunction function_from_json(const nlohmann::json& j);

std::string sha256_hex(const std::string& data);

}  // namespace wasep
