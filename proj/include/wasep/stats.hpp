#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>
#include <nlohmann/json.hpp>

#include "wasep/kmc.hpp"
#include "wasep/observables.hpp"
#include "wasep/rng.hpp"

namespace wasep {

/// One-pass central moments (Welford / Pebay update), mergeable.
class RunningMoments {
 public:
  void push(double x);
  void merge(const RunningMoments& other);

  std::size_t count() const { return n_; }
  double mean() const { return mean_; }
  double variance() const;  ///< unbiased
  double skewness() const;  ///< m3 / m2^{3/2} with population moments
  double excess_kurtosis() const;

 private:
  std::size_t n_ = 0;
  double mean_ = 0.0, m2_ = 0.0, m3_ = 0.0, m4_ = 0.0;
};

struct Moments {
  std::size_t count = 0;
  double mean = 0.0;
  double variance = 0.0;  ///< unbiased
  double skewness = 0.0;
  double excess_kurtosis = 0.0;
};
Moments two_pass_moments(std::span<const double> x);

/// Null distribution of the Kolmogorov-Smirnov distance to a normal with estimated mean and
/// variance (Lilliefors), by parametric bootstrap at a fixed sample size.
class LillieforsTable {
 public:
  LillieforsTable(std::size_t sample_size, int resamples, std::uint64_t seed);
  std::size_t sample_size() const { return sample_size_; }
  int resamples() const { return static_cast<int>(null_.size()); }
  /// (1 + #{D_b >= d}) / (B + 1).
  double p_value(double d) const;

  /// Shared table for (sample_size, resamples, seed).
  static std::shared_ptr<const LillieforsTable> cached(std::size_t sample_size, int resamples, std::uint64_t seed);

 private:
  std::size_t sample_size_;
  std::vector<double> null_;  // sorted
};

/// sup_x |F_M(x) - Phi((x - mean) / sd)| with sample mean and unbiased sd.
double ks_normal_distance(std::span<const double> x);

struct NormalityReport {
  double ks_statistic = 0.0;
  double ks_pvalue = 1.0;
  double skewness_z = 0.0;  ///< skewness / sqrt(6 / M)
  double kurtosis_z = 0.0;  ///< excess kurtosis / sqrt(24 / M)
};

inline constexpr int kDefaultResamples = 1000;

/// Throws std::invalid_argument for fewer than 3 samples or zero variance.
NormalityReport normality_report(std::span<const double> x, std::uint64_t seed, int resamples = kDefaultResamples);

struct LogLogFit {
  double slope = 0.0;
  double intercept = 0.0;  ///< log y = intercept + slope log x
  double r2 = 0.0;
};
/// OLS of log y on log x. Throws std::invalid_argument on nonpositive input or fewer than 2 points.
LogLogFit fit_loglog(std::span<const double> x, std::span<const double> y);

struct ScalingResult {
  LogLogFit fit;
  std::vector<double> x, y;
  double ci_low = 0.0, ci_high = 0.0;
  int resamples = 0;
};

/// Log-log slope of y_i = mean_r values(r, i) against x_i with a percentile bootstrap CI over
/// replicas (rows). Requires at least 3 points.
ScalingResult scaling_regression(std::span<const double> x, const Eigen::MatrixXd& values, std::uint64_t seed,
                                 int resamples = kDefaultResamples, double level = 0.95);

struct ObservableSummary {
  std::size_t count = 0;
  double mean = 0.0, variance = 0.0, std_error = 0.0;
  double variance_std_error = 0.0;  ///< from the fourth central moment
  double skewness = 0.0, excess_kurtosis = 0.0;
  std::optional<NormalityReport> normality;
};
ObservableSummary summarize(std::span<const double> x, std::optional<std::uint64_t> normality_seed = std::nullopt,
                            int resamples = kDefaultResamples);

/// Per-replica context: index, engine seed and an independent auxiliary stream.
struct ReplicaContext {
  std::size_t index;
  std::uint64_t seed;
  RandomStream aux;
};

/// Runs fn for replicas 0..count-1 on `jobs` threads; row r of the result is fn(replica r).
/// Results do not depend on `jobs`. A throwing replica aborts the run with a std::runtime_error
/// naming its index and seed.
Eigen::MatrixXd run_replicas(std::size_t count, std::uint64_t master_seed, Eigen::Index columns,
                             const std::function<void(ReplicaContext&, Eigen::Ref<Eigen::RowVectorXd>)>& fn,
                             int jobs = 0);

/// A named scalar extracted from a finished trajectory.
struct Extractor {
  std::string name;
  std::function<double(const TrajectoryRecord&)> value;
};

struct EnsemblePlan {
  std::vector<Extractor> columns;
  std::function<void(const TrajectoryRecord&)> on_record;  ///< optional, called under a lock
};

struct EnsembleResult {
  std::size_t replicas = 0;
  std::uint64_t master_seed = 0;
  std::vector<std::string> names;
  Eigen::MatrixXd samples;  ///< replicas x columns
  std::uint64_t events = 0;

  Eigen::Index column(const std::string& name) const;
  std::span<const double> values(const std::string& name) const;
};

/// Replica r runs with engine seed derive_seed(seed, r).
EnsembleResult run_ensemble(const ModelSpec& spec, std::size_t replicas, std::uint64_t seed,
                            const EventSchedule& schedule, std::shared_ptr<const ObserverSet> observers,
                            const EnsemblePlan& plan, int jobs = 0);

/// Extractors for the standard observables.
Extractor gamma_at(const ModelSpec& spec, double t);
Extractor field_at(const std::string& test_function, double t);
Extractor z_at(double eps, double t, ZQuadrature quadrature = ZQuadrature::event_exact);
Extractor dynkin_at(double t);

std::string gamma_column(double t);

/// Mean-field summary with manifest. Serialises with sorted keys and no timing data.
struct EnsembleSummary {
  std::size_t replicas = 0;
  std::map<std::string, ObservableSummary> observables;
  std::map<std::string, ScalingResult> regressions;
  nlohmann::json manifest = nlohmann::json::object();
  nlohmann::json extra = nlohmann::json::object();

  nlohmann::json to_json() const;
};

nlohmann::json to_json(const ObservableSummary& s);
nlohmann::json to_json(const ScalingResult& s);

/// Number of worker threads for jobs <= 0.
int default_jobs();

}  // namespace wasep
