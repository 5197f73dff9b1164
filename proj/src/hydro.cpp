#include "wasep/hydro.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace wasep {

namespace {

constexpr double kBlowUpMargin = 1e-6;
constexpr char kDensityMagic[8] = {'W', 'A', 'S', 'E', 'P', 'D', 'F', '1'};

void check_cfl(double dt, double h) {
  if (dt > 0.25 * h * h * (1.0 + 1e-12)) {
    std::ostringstream os;
    os << "CFL violation: dt = " << dt << " exceeds 0.25 h^2 = " << 0.25 * h * h;
    throw std::domain_error(os.str());
  }
}

/// d rho_j / dt = (J_{j+1/2} - J_{j-1/2}) / h with J = d_u rho - 2 rho(1 - rho) F at interfaces.
Grid hydro_rhs(const Grid& rho, const Grid& drift_bonds, double h) {
  const Eigen::Index m = rho.size();
  Grid flux(m);
  for (Eigen::Index j = 0; j < m; ++j) {
    const double next = rho((j + 1) % m);
    const double mid = 0.5 * (rho(j) + next);
    flux(j) = (next - rho(j)) / h - 2.0 * compressibility(mid) * drift_bonds(j);
  }
  Grid out(m);
  out(0) = (flux(0) - flux(m - 1)) / h;
  out.tail(m - 1) = (flux.tail(m - 1) - flux.head(m - 1)) / h;
  return out;
}

}  // namespace

TimeGrid make_time_grid(double t, double max_dt, double store_interval) {
  if (!(t > 0.0)) return TimeGrid{1, 0, 0.0};
  TimeGrid g;
  g.intervals = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::ceil(t / store_interval - 1e-9)));
  const double interval = t / static_cast<double>(g.intervals);
  g.steps = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::ceil(interval / max_dt - 1e-9)));
  g.dt = interval / static_cast<double>(g.steps);
  return g;
}

DensityField::DensityField(Eigen::VectorXd times, Eigen::MatrixXd values, double solver_dt)
    : times_(std::move(times)), values_(std::move(values)), solver_dt_(solver_dt) {
  if (times_.size() == 0 || times_.size() != values_.cols())
    throw std::invalid_argument("DensityField: times and value columns disagree");
  if (times_(0) != 0.0) throw std::invalid_argument("DensityField: time grid must start at 0");
}

DensityField DensityField::constant(Eigen::Index m, double horizon, double value) {
  Eigen::VectorXd times(2);
  times << 0.0, horizon;
  return DensityField(times, Eigen::MatrixXd::Constant(m, 2, value));
}

std::pair<Eigen::Index, double> DensityField::locate(double t) const {
  const Eigen::Index s = times_.size();
  if (s == 1) return {0, 0.0};
  const double span = horizon();
  if (t < -1e-12 * std::max(1.0, span) || t > span * (1.0 + 1e-12) + 1e-14) {
    std::ostringstream os;
    os << "DensityField: time " << t << " outside [0, " << span << "]";
    throw std::out_of_range(os.str());
  }
  const double delta = times_(1) - times_(0);
  auto k = static_cast<Eigen::Index>(std::floor(t / delta));
  k = std::clamp<Eigen::Index>(k, 0, s - 2);
  const double a = std::clamp((t - times_(k)) / delta, 0.0, 1.0);
  return {k, a};
}

Grid DensityField::slice(double t) const {
  const auto [k, a] = locate(t);
  if (times_.size() == 1 || a == 0.0) return values_.col(k);
  return (1.0 - a) * values_.col(k) + a * values_.col(k + 1);
}

double DensityField::operator()(double t, double u) const {
  const auto [k, a] = locate(t);
  const double lo = interpolate_cubic(values_.col(k), u);
  if (times_.size() == 1 || a == 0.0) return lo;
  return (1.0 - a) * lo + a * interpolate_cubic(values_.col(k + 1), u);
}

Grid DensityField::on_lattice(double t, int n) const {
  const Grid s = slice(t);
  Grid out(n);
  const Eigen::Index m = s.size();
  if (m % n == 0) {
    const Eigen::Index stride = m / n;
    for (int x = 0; x < n; ++x) out(x) = s(x * stride);
  } else {
    for (int x = 0; x < n; ++x) out(x) = interpolate_cubic(s, static_cast<double>(x) / n);
  }
  return out;
}

double DensityField::kappa() const {
  const Eigen::Index m = values_.rows();
  double k = 0.0;
  for (Eigen::Index c = 0; c < values_.cols(); ++c) {
    const Grid d = forward_difference(values_.col(c), 1.0 / static_cast<double>(m));
    k = std::max(k, d.cwiseAbs().maxCoeff());
  }
  return k;
}

double DensityField::eps1() const {
  return std::min(values_.minCoeff(), 1.0 - values_.maxCoeff());
}

double DensityField::mass_drift() const {
  const Eigen::RowVectorXd mass = values_.colwise().sum();
  return ((mass.array() - mass(0)).abs() / std::abs(mass(0))).maxCoeff();
}

void DensityField::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  const std::int64_t m = values_.rows(), s = values_.cols();
  out.write(kDensityMagic, sizeof kDensityMagic);
  out.write(reinterpret_cast<const char*>(&m), sizeof m);
  out.write(reinterpret_cast<const char*>(&s), sizeof s);
  out.write(reinterpret_cast<const char*>(&solver_dt_), sizeof solver_dt_);
  out.write(reinterpret_cast<const char*>(times_.data()), static_cast<std::streamsize>(sizeof(double) * s));
  out.write(reinterpret_cast<const char*>(values_.data()),
            static_cast<std::streamsize>(sizeof(double) * m * s));
}

DensityField DensityField::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  char magic[8];
  in.read(magic, sizeof magic);
  if (std::memcmp(magic, kDensityMagic, sizeof magic) != 0)
    throw std::runtime_error(path.string() + " is not a density cache");
  std::int64_t m = 0, s = 0;
  double dt = 0.0;
  in.read(reinterpret_cast<char*>(&m), sizeof m);
  in.read(reinterpret_cast<char*>(&s), sizeof s);
  in.read(reinterpret_cast<char*>(&dt), sizeof dt);
  Eigen::VectorXd times(s);
  Eigen::MatrixXd values(m, s);
  in.read(reinterpret_cast<char*>(times.data()), static_cast<std::streamsize>(sizeof(double) * s));
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(sizeof(double) * m * s));
  if (!in) throw std::runtime_error(path.string() + " is truncated");
  return DensityField(std::move(times), std::move(values), dt);
}

DensityField solve_hydro(const ModelSpec& spec, Eigen::Index m, double t_end,
                         const HydroOptions& options) {
  if (m < 32) throw std::invalid_argument("solve_hydro: grid size must be >= 32");
  const double h = 1.0 / static_cast<double>(m);
  double max_dt = 0.25 * h * h;
  if (options.dt > 0.0) {
    check_cfl(options.dt, h);
    max_dt = options.dt;
  }
  const TimeGrid grid = make_time_grid(t_end, max_dt, options.store_interval);

  Grid drift_bonds(m);
  for (Eigen::Index j = 0; j < m; ++j) drift_bonds(j) = spec.drift((static_cast<double>(j) + 0.5) * h);

  Grid rho = sample_on_grid([&](double u) { return spec.initial_profile(u); }, m);
  Eigen::VectorXd times(grid.intervals + 1);
  Eigen::MatrixXd values(m, grid.intervals + 1);
  times(0) = 0.0;
  values.col(0) = rho;

  const double dt = grid.dt;
  for (Eigen::Index k = 1; k <= grid.intervals; ++k) {
    for (Eigen::Index i = 0; i < grid.steps; ++i) {
      const Grid k1 = hydro_rhs(rho, drift_bonds, h);
      const Grid k2 = hydro_rhs(rho + 0.5 * dt * k1, drift_bonds, h);
      const Grid k3 = hydro_rhs(rho + 0.5 * dt * k2, drift_bonds, h);
      const Grid k4 = hydro_rhs(rho + dt * k3, drift_bonds, h);
      rho += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    if (!(rho.minCoeff() >= kBlowUpMargin && rho.maxCoeff() <= 1.0 - kBlowUpMargin)) {
      std::ostringstream os;
      os << "solve_hydro: density left [1e-6, 1 - 1e-6] before t = " << k * grid.interval();
      throw std::domain_error(os.str());
    }
    times(k) = static_cast<double>(k) * grid.interval();
    values.col(k) = rho;
  }
  times(grid.intervals) = t_end;
  return DensityField(std::move(times), std::move(values), dt);
}

Grid apply_generator(const ModelSpec& spec, const Grid& rho_slice, const Grid& f) {
  const Eigen::Index m = f.size();
  if (rho_slice.size() != m) throw std::invalid_argument("apply_generator: grid size mismatch");
  const double h = 1.0 / static_cast<double>(m);
  const Grid drift = sample_on_grid([&](double u) { return spec.drift(u); }, m);
  const Grid coefficient = 2.0 * (1.0 - 2.0 * rho_slice.array()).matrix().cwiseProduct(drift);
  return laplacian(f, h) + coefficient.cwiseProduct(central_gradient(f, h));
}

BackwardStepper::BackwardStepper(const ModelSpec& spec, const DensityField& rho)
    : rho_(&rho), m_(rho.grid_size()), h_(1.0 / static_cast<double>(rho.grid_size())) {
  drift_nodes_ = sample_on_grid([&](double u) { return spec.drift(u); }, m_);
}

Grid BackwardStepper::drift_coefficient(double s) const {
  return (2.0 * (1.0 - 2.0 * rho_->slice(s).array()) * drift_nodes_.array()).matrix();
}

Eigen::MatrixXd BackwardStepper::apply(const Eigen::MatrixXd& v, const Grid& coefficient) const {
  return laplacian(v, h_) + coefficient.asDiagonal() * central_gradient(v, h_);
}

void BackwardStepper::step(Eigen::MatrixXd& v, double s, double dt, const Source& source) const {
  const Grid b0 = drift_coefficient(s);
  const Grid bh = drift_coefficient(s - 0.5 * dt);
  const Grid b1 = drift_coefficient(s - dt);
  Eigen::MatrixXd k1 = apply(v, b0);
  if (source) k1 += source(s);
  Eigen::MatrixXd k2 = apply(v + 0.5 * dt * k1, bh);
  Eigen::MatrixXd mid_source;
  if (source) {
    mid_source = source(s - 0.5 * dt);
    k2 += mid_source;
  }
  Eigen::MatrixXd k3 = apply(v + 0.5 * dt * k2, bh);
  if (source) k3 += mid_source;
  Eigen::MatrixXd k4 = apply(v + dt * k3, b1);
  if (source) k4 += source(s - dt);
  v += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

Grid SemigroupSolution::at(double s) const {
  const Eigen::Index n = times.size();
  if (n == 1) return values.col(0);
  const double delta = times(1) - times(0);
  auto k = std::clamp<Eigen::Index>(static_cast<Eigen::Index>(std::floor(s / delta)), 0, n - 2);
  const double a = std::clamp((s - times(k)) / delta, 0.0, 1.0);
  return (1.0 - a) * values.col(k) + a * values.col(k + 1);
}

Grid SemigroupSolution::gradient_at(double s) const {
  const Eigen::Index n = times.size();
  if (n == 1) return gradient.col(0);
  const double delta = times(1) - times(0);
  auto k = std::clamp<Eigen::Index>(static_cast<Eigen::Index>(std::floor(s / delta)), 0, n - 2);
  const double a = std::clamp((s - times(k)) / delta, 0.0, 1.0);
  return (1.0 - a) * gradient.col(k) + a * gradient.col(k + 1);
}

SemigroupSolution solve_backward(const ModelSpec& spec, const DensityField& rho, const Grid& f,
                                 double t, const BackwardOptions& options) {
  if (f.size() != rho.grid_size())
    throw std::invalid_argument("solve_backward: terminal function is not on the density grid");
  if (t > rho.horizon() * (1.0 + 1e-12))
    throw std::out_of_range("solve_backward: terminal time beyond the density horizon");
  const BackwardStepper stepper(spec, rho);
  double max_dt = stepper.max_stable_dt();
  if (options.dt > 0.0) {
    check_cfl(options.dt, stepper.h());
    max_dt = options.dt;
  }

  SemigroupSolution sol;
  sol.terminal_time = t;
  const double h = stepper.h();
  if (t <= 0.0) {
    sol.times = Eigen::VectorXd::Zero(1);
    sol.values = f;
    sol.gradient = central_gradient4(f, h);
    return sol;
  }
  const TimeGrid grid = make_time_grid(t, max_dt, options.store_interval);
  const Eigen::Index cols = grid.intervals + 1;
  sol.times = Eigen::VectorXd::LinSpaced(cols, 0.0, t);
  sol.values.resize(f.size(), cols);
  sol.gradient.resize(f.size(), cols);

  Eigen::MatrixXd v = f;
  sol.values.col(cols - 1) = f;
  const Eigen::Index total_steps = grid.intervals * grid.steps;
  for (Eigen::Index k = grid.intervals; k >= 1; --k) {
    for (Eigen::Index i = 0; i < grid.steps; ++i) {
      const Eigen::Index remaining = k * grid.steps - i;
      const double s = t * static_cast<double>(remaining) / static_cast<double>(total_steps);
      stepper.step(v, s, grid.dt);
    }
    sol.values.col(k - 1) = v;
  }
  for (Eigen::Index c = 0; c < cols; ++c) sol.gradient.col(c) = central_gradient4(sol.values.col(c), h);
  return sol;
}

}  // namespace wasep
