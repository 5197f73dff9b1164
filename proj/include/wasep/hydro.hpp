#pragma once

#include <filesystem>
#include <functional>

#include <Eigen/Core>

#include "wasep/grid.hpp"
#include "wasep/lattice.hpp"

namespace wasep {

/// Solution rho_t(u) of the hydrodynamic equation stored on a uniform space-time grid.
/// Queries are cubic in space and linear in time.
class DensityField {
 public:
  DensityField() = default;
  /// `values` is m x S; column k holds rho at times(k). Times must be uniform and start at 0.
  DensityField(Eigen::VectorXd times, Eigen::MatrixXd values, double solver_dt = 0.0);

  /// A field frozen at `value` on [0, horizon]. No range checks: used for test modes.
  static DensityField constant(Eigen::Index m, double horizon, double value);

  Eigen::Index grid_size() const { return values_.rows(); }
  double horizon() const { return times_(times_.size() - 1); }
  double solver_dt() const { return solver_dt_; }
  const Eigen::VectorXd& times() const { return times_; }
  const Eigen::MatrixXd& values() const { return values_; }

  Grid slice(double t) const;
  double operator()(double t, double u) const;
  /// rho_t(x/n), x = 0..n-1; direct indexing when the grid size is a multiple of n.
  Grid on_lattice(double t, int n) const;

  /// sup_t max_j m |rho_t(u_{j+1}) - rho_t(u_j)|.
  double kappa() const;
  /// min over the stored field of min(rho, 1 - rho).
  double eps1() const;
  /// max_t |mass(t) - mass(0)| / mass(0).
  double mass_drift() const;

  void save(const std::filesystem::path& path) const;
  static DensityField load(const std::filesystem::path& path);

 private:
  std::pair<Eigen::Index, double> locate(double t) const;

  Eigen::VectorXd times_;
  Eigen::MatrixXd values_;
  double solver_dt_ = 0.0;
};

struct HydroOptions {
  double dt = 0.0;                 ///< RK4 step; 0 picks the largest step <= 0.25 h^2
  double store_interval = 2.5e-5;  ///< target spacing of stored time slices
};

/// Solves d_t rho = d_uu rho - 2 d_u{rho(1-rho)F} on the torus by a conservative flux scheme
/// (central interface fluxes) and explicit RK4. Throws std::domain_error on a CFL violation or when
/// rho leaves [1e-6, 1 - 1e-6].
DensityField solve_hydro(const ModelSpec& spec, Eigen::Index m, double t_end,
                         const HydroOptions& options = {});

/// L_t f = f'' + 2 (1 - 2 rho_t) F f' by central differences on the grid of `f`.
Grid apply_generator(const ModelSpec& spec, const Grid& rho_slice, const Grid& f);

/// P_{s,t} f for s on a uniform grid in [0, t], with 4th-order central derivatives.
struct SemigroupSolution {
  double terminal_time = 0.0;
  Eigen::VectorXd times;     ///< ascending, times(0) = 0, times(end) = terminal_time
  Eigen::MatrixXd values;    ///< m x S
  Eigen::MatrixXd gradient;  ///< m x S

  Grid at(double s) const;
  Grid gradient_at(double s) const;
};

struct BackwardOptions {
  double dt = 0.0;
  double store_interval = 2.5e-4;
};

/// Integrates d_s v + L_s v = 0 backwards from v_t = f. Throws on CFL violation, when `t` exceeds
/// the density horizon, or when `f` is not on the density grid.
SemigroupSolution solve_backward(const ModelSpec& spec, const DensityField& rho, const Grid& f,
                                 double t, const BackwardOptions& options = {});

/// Shared stepping machinery for backward problems: advances a block of grid functions (columns)
/// from s to s - dt under dV/d(-s) = L_s V + source(s).
class BackwardStepper {
 public:
  BackwardStepper(const ModelSpec& spec, const DensityField& rho);

  Eigen::Index grid_size() const { return m_; }
  double h() const { return h_; }
  double max_stable_dt() const { return 0.25 * h_ * h_; }

  /// 2 (1 - 2 rho_s) F at the grid nodes.
  Grid drift_coefficient(double s) const;
  Eigen::MatrixXd apply(const Eigen::MatrixXd& v, const Grid& coefficient) const;

  using Source = std::function<Eigen::MatrixXd(double s)>;
  /// One RK4 step from s to s - dt. `source` may be empty.
  void step(Eigen::MatrixXd& v, double s, double dt, const Source& source = {}) const;

  const DensityField& density() const { return *rho_; }

 private:
  const DensityField* rho_;
  Eigen::Index m_;
  double h_;
  Grid drift_nodes_;
};

/// Uniform subdivision of [0, t]: `intervals` store intervals of `steps` solver steps each.
struct TimeGrid {
  Eigen::Index intervals = 1;
  Eigen::Index steps = 1;
  double dt = 0.0;
  double interval() const { return dt * static_cast<double>(steps); }
};
TimeGrid make_time_grid(double t, double max_dt, double store_interval);

}  // namespace wasep
