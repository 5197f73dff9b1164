#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "wasep/hydro.hpp"
#include "wasep/lattice.hpp"

namespace wasep {

struct SimClock {
  int n = 0;
  double t_micro = 0.0;
  std::uint64_t event_count = 0;  ///< attempted jumps, accepted or not
  double t_macro() const { return t_micro / (static_cast<double>(n) * n); }
};

/// Sorted macroscopic snapshot times in [0, T]; always contains 0.
class EventSchedule {
 public:
  EventSchedule(std::vector<double> times, double horizon);
  /// 0, dt, 2 dt, ..., T plus any `extras`. dt <= 0 selects T / 200.
  static EventSchedule uniform(double horizon, double dt = 0.0, std::vector<double> extras = {});

  const std::vector<double>& times() const { return times_; }
  double horizon() const { return horizon_; }
  std::size_t size() const { return times_.size(); }
  double operator[](std::size_t k) const { return times_[k]; }
  std::optional<std::size_t> index_of(double t) const;

 private:
  std::vector<double> times_;
  double horizon_;
};

/// Event-exact integral of the occupation of the origin weighted by 1/q.
struct OriginAccumulator {
  double occ_integral = 0.0;     ///< int_0^{t} eta(0) / q_s ds, macroscopic time
  double last_flip_time = 0.0;   ///< macroscopic time of the last change of eta(0)
  bool occupied = false;
};

struct SnapshotObserver {
  std::string name;
  std::function<double(const Configuration&, std::size_t snapshot)> evaluate;
};

/// Event-exact integral of sum_x eta_s(x) w_s(x) ds where w is linear in s between snapshots.
struct IntegratedObserver {
  std::string name;
  Eigen::MatrixXd weights;  ///< n x S; column k is w at snapshot k
};

/// Observables attached to a run. Built once per ensemble and shared read-only by replicas.
struct ObserverSet {
  std::shared_ptr<const DensityField> density;
  Eigen::MatrixXd rho_lattice;             ///< n x S, rho_{t_k}(x/n)
  std::vector<double> origin_baseline;     ///< int_0^{t_k} rho_s(0) / q_s ds
  std::vector<SnapshotObserver> snapshot;
  std::vector<IntegratedObserver> integrated;
  /// Per integrated observer: int_0^{t_k} sum_x rho_s(x/n) w_s(x) ds (empty when not centred).
  std::vector<std::vector<double>> integral_baseline;
  std::optional<Grid> dynkin_function;     ///< f(x/n); enables the Dynkin compensator
};

/// Per-site attempt counters for rate diagnostics (microscopic time).
struct SiteStatistics {
  std::vector<std::uint64_t> right_attempts, left_attempts;
  std::vector<double> occupied_time;
};

struct RunOptions {
  std::optional<Configuration> initial;
  std::shared_ptr<const ObserverSet> observers;
  SiteStatistics* site_statistics = nullptr;
};

struct TrajectoryRecord {
  std::uint64_t seed = 0;
  int n = 0;
  std::vector<double> times;
  std::vector<std::uint8_t> eta0;
  std::vector<double> origin_integral;  ///< int_0^{t_k} eta(0)/q ds at each snapshot
  std::vector<std::string> snapshot_names;
  Eigen::MatrixXd snapshot_values;      ///< S x (#snapshot observers)
  std::vector<std::string> integral_names;
  Eigen::MatrixXd integral_values;      ///< S x (#integrated observers), cumulative
  std::vector<double> dynkin_state;        ///< n^{-1/2} sum_x eta(x) f(x/n)
  std::vector<double> dynkin_compensator;  ///< int_0^{t_k} n^2 L_n(n^{-1/2} sum eta f) ds
  SimClock clock;
  Configuration initial_configuration;
  Configuration final_configuration;
  std::shared_ptr<const ObserverSet> observers;

  Eigen::Index snapshot_column(const std::string& name) const;
  Eigen::Index integral_column(const std::string& name) const;
  /// Integrated observer minus its deterministic baseline, at snapshot k.
  double centred_integral(const std::string& name, std::size_t k) const;
  /// M_{t_k} = n^{-1/2} sum eta_{t_k} f - n^{-1/2} sum eta_0 f - compensator.
  double dynkin_martingale(std::size_t k) const;
};

/// Exact simulation of the WASEP generator up to microscopic time T n^2 by rejection: waiting times
/// Exp(2K), a uniformly chosen particle at x attempts x+1 with probability (1 + F(x/n)/n)/2 and
/// x-1 otherwise, and moves only onto an empty site. Throws std::invalid_argument if rates would be
/// negative and std::logic_error if particle conservation is ever violated.
TrajectoryRecord run_replica(const ModelSpec& spec, std::uint64_t seed, const EventSchedule& schedule,
                             const RunOptions& options = {});

/// Gamma_n(t) = sqrt(n) int_0^t (eta_{sn^2}(0) - rho_s(0)) / q_s ds, with t a snapshot time.
/// Throws std::logic_error when no density field is attached to the record.
double occupation_time_origin(const TrajectoryRecord& record, const ModelSpec& spec, double t);

/// int_0^{t_k} rho_s(0) / q_s ds for each snapshot time, by composite 4-point Gauss-Legendre on the
/// density's storage grid.
std::vector<double> origin_baseline(const DensityField& density, const ModelSpec& spec,
                                    const EventSchedule& schedule);

/// int_a^b 1/q_s ds by 4-point Gauss-Legendre (exact for constant q).
double inverse_weight_integral(const ModelSpec& spec, double a, double b);

}  // namespace wasep
