#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wasep/config.hpp"
#include "wasep/hydro.hpp"
#include "wasep/stats.hpp"

namespace wasep {

/// A run whose estimated event count exceeds the configured budget.
class ResourceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct CriterionResult {
  std::string id;       ///< "A1" ... "A10"
  std::string title;
  bool passed = false;
  std::string message;  ///< one-line measured-vs-threshold summary
  nlohmann::json details = nlohmann::json::object();
};

struct SuiteReport {
  std::string name;
  bool passed = true;
  std::vector<CriterionResult> criteria;
  nlohmann::json summary = nlohmann::json::object();  ///< deterministic; no timings
};

struct VerifyOptions {
  int jobs = 0;
  std::ostream* log = nullptr;  ///< progress lines (timings go here only)
};

/// Runs the acceptance suites. Ensembles shared between suites are simulated once per Verifier.
class Verifier {
 public:
  explicit Verifier(ExperimentConfig config, VerifyOptions options = {});
  ~Verifier();

  static const std::vector<std::string>& suite_names();

  /// Throws std::invalid_argument for an unknown suite and ResourceError when over budget.
  SuiteReport run(const std::string& suite);

  double tolerance(const std::string& key) const;
  const ExperimentConfig& config() const { return config_; }

 private:
  struct Impl;
  ExperimentConfig config_;
  VerifyOptions options_;
  std::unique_ptr<Impl> impl_;
};

/// M * 2 E[K] * T * n^2 with E[K] = n int rho_0.
double estimate_events(const ModelSpec& spec, std::size_t replicas);

/// The 20-state (fixed particle number) brute-force oracle: law of eta_T from `initial` by
/// dense matrix exponential of the generator restricted to its particle-number sector.
/// Returned as a map from the configuration's bit pattern (bit x = site x) to probability.
std::map<std::uint32_t, double> exact_marginal(const ModelSpec& spec, const Configuration& initial, double t);

nlohmann::json to_json(const CriterionResult& c);
nlohmann::json to_json(const SuiteReport& r);

}  // namespace wasep
