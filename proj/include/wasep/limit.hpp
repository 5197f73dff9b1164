#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "wasep/hydro.hpp"
#include "wasep/kmc.hpp"
#include "wasep/lattice.hpp"
#include "wasep/observables.hpp"

namespace wasep {

struct OracleOptions {
  double dt = 0.0;                 ///< backward RK4 step; 0 picks the largest stable step
  double store_interval = 2.5e-4;  ///< spacing of cached semigroup slices
};

/// Covariances of the limiting Gaussian field: X_0 is the centred Bernoulli field with
/// E[X_0(f) X_0(g)] = int chi(rho_0) f g, and Cov(X_s(f), X_t(g)) = Cov(X_s(f), X_s(P_{s,t} g)).
/// All grid functions live on the density grid.
class CovarianceOracle {
 public:
  CovarianceOracle(const ModelSpec& spec, std::shared_ptr<const DensityField> density,
                   OracleOptions options = {});

  const ModelSpec& spec() const { return spec_; }
  const DensityField& density() const { return *density_; }
  std::shared_ptr<const DensityField> density_ptr() const { return density_; }
  const OracleOptions& options() const { return options_; }
  Eigen::Index grid_size() const { return density_->grid_size(); }
  double h() const { return 1.0 / static_cast<double>(grid_size()); }

  struct Member {
    Grid f;
    double t;
  };
  /// Matrix of Cov(X_{t_i}(f_i), X_{t_j}(f_j)), computed by propagating the whole family
  /// backwards in lockstep and integrating 2 chi(rho_r) D+P f_i D+P f_j on the bonds.
  Eigen::MatrixXd gram(const std::vector<Member>& family) const;

  double var_field(const Grid& f, double t) const;
  /// s <= t.
  double cov_field(const Grid& f, double s, const Grid& g, double t) const;
  /// int chi(rho_0) f g.
  double initial_covariance(const Grid& f, const Grid& g) const;

  /// P_{s,t} f for all s in [0, t], cached by (t, id).
  std::shared_ptr<const SemigroupSolution> semigroup(const std::string& id, const Grid& f, double t) const;

  /// 2 chi(rho_s) at the bond midpoints, times h.
  Grid bond_weights(double s) const;

 private:
  ModelSpec spec_;
  std::shared_ptr<const DensityField> density_;
  OracleOptions options_;
  mutable std::mutex mutex_;
  mutable std::map<std::pair<double, std::string>, std::shared_ptr<const SemigroupSolution>> cache_;
};

/// Pieces of the discrete energy balance for P_{s,t} f: ||f||^2 - ||P_{0,t} f||^2 should equal
/// 2 int_0^t ||D+ P_{r,t} f||^2 dr when F = 0 and rho = 1/2 (norms are h-weighted sums).
struct EnergyBalance {
  double terminal_norm = 0.0;  ///< ||f||^2
  double initial_norm = 0.0;   ///< ||P_{0,t} f||^2
  double dissipation = 0.0;    ///< 2 int_0^t ||D+ P_{r,t} f||^2 dr
  double relative_defect() const {
    return std::abs(terminal_norm - initial_norm - dissipation) / std::abs(terminal_norm - initial_norm);
  }
};
EnergyBalance energy_balance(const CovarianceOracle& oracle, const Grid& f, double t);

/// g_s for the mollifier on the oracle grid.
Grid delta_test_function_on_grid(const CovarianceOracle& oracle, const Mollifier& moll, double s);

struct VarZResult {
  double t = 0.0;
  double eps = 0.0;
  double variance = 0.0;        ///< backward Duhamel route
  int quad_k = 0;
  double quadrature_k = 0.0;    ///< tensor Gauss-Legendre with quad_k nodes per axis
  double quadrature_2k = 0.0;   ///< same with 2 quad_k nodes
  bool quadrature_converged = false;  ///< |k - 2k| <= 1% of the 2k value
};

/// Var(Z_t^eps) = Var(X_0(Psi_0)) + int_0^t int 2 chi (d_u Psi_r)^2 where Psi solves
/// -d_r Psi = L_r Psi + g_r, Psi_t = 0. With quad_k > 0 the double time integral of the field
/// covariance is also evaluated by tensor Gauss-Legendre at quad_k and 2 quad_k nodes.
VarZResult var_Z(const CovarianceOracle& oracle, const Mollifier& moll, double t, int quad_k = 0);

/// Duhamel variances for several mollifiers in one backward pass.
std::vector<double> var_Z_family(const CovarianceOracle& oracle, const std::vector<Mollifier>& molls, double t);

/// Same construction with g_s = delta_0 / q_s on the grid (the eps -> 0 object, for diagnostics).
double var_Z_point(const CovarianceOracle& oracle, double t);

/// Fit V(eps) = a + b eps on the ladder; `limit` = a.
struct Extrapolation {
  std::vector<double> eps;
  std::vector<double> values;
  double limit = 0.0;
  double slope = 0.0;
  std::vector<double> pairwise;  ///< 2 V(eps_i) - V(2 eps_i)-style two-point estimates
  double spread = 0.0;           ///< max relative deviation of pairwise estimates from `limit`
};
Extrapolation extrapolate_linear(std::vector<double> eps, std::vector<double> values);

Extrapolation var_Z_extrapolated(const CovarianceOracle& oracle, double t, const std::vector<double>& ladder);

/// int_0^t int 2 chi(rho_s(u)) f'(u)^2 du ds on the density grid.
double quadratic_variation(const DensityField& density, const std::function<double(double)>& df, double t);

struct SpdeOptions {
  Eigen::Index m = 128;
  double dt = 0.0;           ///< 0 picks 0.25 h^2 adjusted to land on every snapshot
  bool noise = true;
  double noise_sign = 1.0;
  std::optional<Grid> initial;                  ///< explicit X_0 (density per unit length)
  std::vector<Grid> test_functions;             ///< X_t(f) = h sum_j X_j f_j at snapshots
  std::vector<double> z_eps;                    ///< Z^eps by trapezoid every step
  bool keep_field = false;
};

struct SpdePath {
  Eigen::Index m = 0;
  double dt = 0.0;
  std::vector<double> times;
  Eigen::MatrixXd pairings;  ///< S x (#test functions)
  Eigen::MatrixXd z;         ///< S x (#eps), cumulative
  Eigen::MatrixXd field;     ///< m x S when keep_field
};

/// Explicit Euler discretisation of the linear fluctuation equation in divergence form,
/// d X = div(grad X - 2 (1 - 2 rho) F X + sqrt(2 chi(rho)) dW), with i.i.d. bond noise.
/// Coefficient tables are shared by every path simulated from one instance.
class SpdeSimulator {
 public:
  SpdeSimulator(const ModelSpec& spec, std::shared_ptr<const DensityField> density,
                const EventSchedule& schedule, SpdeOptions options);

  SpdePath simulate(std::uint64_t seed) const;
  double dt() const { return dt_; }
  Eigen::Index grid_size() const { return options_.m; }

 private:
  ModelSpec spec_;
  std::shared_ptr<const DensityField> density_;
  EventSchedule schedule_;
  SpdeOptions options_;
  double h_ = 0.0, dt_ = 0.0;
  std::vector<Eigen::Index> steps_per_interval_;
  std::vector<double> table_times_;
  std::vector<Eigen::MatrixXd> tables_;  ///< per table time: m x (2 + #eps): drift, noise, g_eps...
};

SpdePath simulate_spde(const ModelSpec& spec, std::shared_ptr<const DensityField> density,
                       const EventSchedule& schedule, std::uint64_t seed, SpdeOptions options = {});

}  // namespace wasep
