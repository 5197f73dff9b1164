#pragma once

#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "wasep/grid.hpp"
#include "wasep/hydro.hpp"
#include "wasep/kmc.hpp"
#include "wasep/lattice.hpp"

namespace wasep {

/// phi_eps(u) = phi(u / eps) / eps with phi(u) = c exp(-1/(u(1-u))) on (0, 1), so that
/// phi_eps has unit mass and support (0, eps) on the torus.
class Mollifier {
 public:
  /// `scale` multiplies the bump; 0 gives the identically-zero test mollifier.
  explicit Mollifier(double eps, double scale = 1.0);

  double eps() const { return eps_; }
  double scale() const { return scale_; }
  double operator()(double u) const;
  double derivative(double u) const;
  /// ||phi_eps'||_inf = ||phi'||_inf / eps^2 (times scale).
  double derivative_sup() const;
  /// phi_eps(x/n), x = 0..n-1.
  Grid on_lattice(int n) const;

  /// The unit-mass base bump phi and its derivative.
  static double base(double u);
  static double base_derivative(double u);
  /// Normalisation c, computed once by adaptive Gauss-Kronrod quadrature.
  static double normalization();
  static double base_derivative_sup();

 private:
  double eps_;
  double scale_;
};

/// w(x) = (eta(x) - rho_x) / chi(rho_x). Throws std::domain_error if chi(rho_x) < 1e-9.
Grid w_field(const Configuration& config, const Grid& rho_lattice);

/// X^n(f) = n^{-1/2} sum_x (eta(x) - rho(x/n)) f(x/n).
double fluctuation_field(const Configuration& config, const Grid& rho_lattice, const Grid& f_lattice);

/// n^{-1} sum_x eta(x) f(x/n).
double empirical_measure(const Configuration& config, const Grid& f_lattice);

/// g_s(x/n) = phi_eps(x/n) chi(rho_s(0)) / (q_s chi(rho_s(x/n))) given rho_s on the lattice.
Grid delta_test_function(const ModelSpec& spec, const Mollifier& moll, const Grid& rho_lattice, double s);

/// A named test function and its derivative. Names: "fourier:k=K" (sqrt2 cos 2 pi K u),
/// "sin:k=K" (sqrt2 sin 2 pi K u), "const" (1), "const:c=C".
struct TestFunction {
  std::string name;
  std::function<double(double)> value;
  std::function<double(double)> derivative;

  Grid on_lattice(int n) const { return sample_on_grid(value, n); }
};

/// Throws std::invalid_argument for unknown names. "delta:eps=E" is not a static test function;
/// use `parse_delta_eps` for those.
TestFunction parse_test_function(const std::string& name);
std::optional<double> parse_delta_eps(const std::string& name);
std::string delta_name(double eps);

/// What each replica records.
struct ObservablePlan {
  std::vector<std::string> fields;    ///< static test functions, recorded as "X[name]" at snapshots
  std::vector<double> z_eps;          ///< recorded as integrated "Z[eps=...]"
  bool z_pointwise = false;           ///< also record X_s(g_s) at snapshots as "Xg[eps=...]"
  std::optional<std::string> dynkin;  ///< test function for the Dynkin martingale
  bool site_occupations = false;      ///< "eta[x]" at every snapshot
};

std::string field_column(const std::string& test_function);
std::string z_column(double eps);
std::string z_point_column(double eps);

/// Builds the shared observer set for an ensemble: lattice slices of rho, the origin baseline, the
/// registered observers and their deterministic baselines. Throws std::invalid_argument when
/// eps * n < 4 for any requested eps.
std::shared_ptr<const ObserverSet> make_observer_set(const ModelSpec& spec,
                                                     std::shared_ptr<const DensityField> density,
                                                     const EventSchedule& schedule,
                                                     const ObservablePlan& plan);

enum class ZQuadrature { event_exact, trapezoid };

/// Z_{t,n}^eps = int_0^t X_s^n(g_s) ds at snapshot time t. `event_exact` integrates the
/// piecewise-constant configuration exactly against weights linear between snapshots;
/// `trapezoid` applies the trapezoidal rule to the snapshot values of X_s(g_s).
double z_discrete(const TrajectoryRecord& record, double eps, double t,
                  ZQuadrature quadrature = ZQuadrature::event_exact);

}  // namespace wasep
