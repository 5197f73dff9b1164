#include "wasep/limit.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include <Eigen/Eigenvalues>
#include <boost/math/quadrature/gauss.hpp>

namespace wasep {

namespace {

constexpr double kQuadratureTolerance = 0.01;
constexpr double kSpdeTableInterval = 2.5e-4;

Eigen::Index step_count(double span, double max_dt) {
  return std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::ceil(span / max_dt - 1e-9)));
}

double max_step(const CovarianceOracle& oracle) {
  const double stable = 0.25 * oracle.h() * oracle.h();
  const double dt = oracle.options().dt;
  if (dt > 0.0) {
    if (dt > stable * (1.0 + 1e-12)) throw std::domain_error("oracle: dt exceeds 0.25 h^2");
    return dt;
  }
  return stable;
}

/// Gauss-Legendre nodes and weights on [-1, 1] by the Golub-Welsch eigenvalue method.
std::pair<Eigen::VectorXd, Eigen::VectorXd> gauss_legendre(int k) {
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(k, k);
  for (int j = 1; j < k; ++j) {
    const double beta = j / std::sqrt(4.0 * j * j - 1.0);
    jacobi(j, j - 1) = jacobi(j - 1, j) = beta;
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi);
  return {es.eigenvalues(), 2.0 * es.eigenvectors().row(0).array().square().transpose().matrix()};
}

/// D^T diag(w) D for D the bond differences of the columns of V.
Eigen::MatrixXd bond_product(const Eigen::MatrixXd& v, const Grid& w, double h) {
  const Eigen::MatrixXd d = forward_difference(v, h);
  return d.transpose() * w.asDiagonal() * d;
}

Eigen::VectorXd bond_diagonal(const Eigen::MatrixXd& v, const Grid& w, double h) {
  const Eigen::MatrixXd d = forward_difference(v, h);
  return (d.array().square().colwise() * w.array()).colwise().sum().transpose();
}

/// Integrates -d_r Psi = L_r Psi + source(r) from Psi_t = 0 down to r = 0 and returns
/// int chi(rho_0) Psi_0^2 + int_0^t int 2 chi (D+ Psi)^2 for every column.
Eigen::VectorXd duhamel_variance(const CovarianceOracle& oracle, Eigen::Index columns, double t,
                                 const BackwardStepper::Source& source) {
  const Eigen::Index m = oracle.grid_size();
  const double h = oracle.h();
  if (t <= 0.0) return Eigen::VectorXd::Zero(columns);
  const BackwardStepper stepper(oracle.spec(), oracle.density());
  const Eigen::Index steps = step_count(t, max_step(oracle));
  const double dt = t / static_cast<double>(steps);

  Eigen::MatrixXd psi = Eigen::MatrixXd::Zero(m, columns);
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(columns);
  Eigen::VectorXd prev = Eigen::VectorXd::Zero(columns);
  for (Eigen::Index k = 0; k < steps; ++k) {
    const double s = t * static_cast<double>(steps - k) / static_cast<double>(steps);
    const double next = t * static_cast<double>(steps - k - 1) / static_cast<double>(steps);
    stepper.step(psi, s, dt, source);
    const Eigen::VectorXd cur = bond_diagonal(psi, oracle.bond_weights(next), h);
    acc += 0.5 * dt * (prev + cur);
    prev = cur;
  }
  const Grid rho0 = oracle.density().slice(0.0);
  const Grid w0 = h * rho0.unaryExpr([](double r) { return compressibility(r); });
  acc += (psi.array().square().colwise() * w0.array()).colwise().sum().transpose().matrix();
  return acc;
}

}  // namespace

CovarianceOracle::CovarianceOracle(const ModelSpec& spec, std::shared_ptr<const DensityField> density,
                                   OracleOptions options)
    : spec_(spec), density_(std::move(density)), options_(options) {
  if (!density_) throw std::invalid_argument("CovarianceOracle: density field required");
}

Grid CovarianceOracle::bond_weights(double s) const {
  const Grid rho = density_->slice(s);
  const Eigen::Index m = rho.size();
  Grid w(m);
  for (Eigen::Index j = 0; j < m; ++j) w(j) = 2.0 * compressibility(0.5 * (rho(j) + rho((j + 1) % m))) * h();
  return w;
}

double CovarianceOracle::initial_covariance(const Grid& f, const Grid& g) const {
  const Grid rho0 = density_->slice(0.0);
  double s = 0.0;
  for (Eigen::Index j = 0; j < rho0.size(); ++j) s += compressibility(rho0(j)) * f(j) * g(j);
  return s * h();
}

Eigen::MatrixXd CovarianceOracle::gram(const std::vector<Member>& family) const {
  const Eigen::Index m = grid_size();
  const auto count = static_cast<Eigen::Index>(family.size());
  for (const auto& member : family) {
    if (member.f.size() != m) throw std::invalid_argument("gram: test function is not on the density grid");
    if (member.t < 0.0 || member.t > density_->horizon() * (1.0 + 1e-12))
      throw std::out_of_range("gram: time outside the density horizon");
  }
  std::vector<double> stops{0.0};
  for (const auto& member : family) stops.push_back(member.t);
  std::sort(stops.begin(), stops.end(), std::greater<>());
  stops.erase(std::unique(stops.begin(), stops.end()), stops.end());

  const BackwardStepper stepper(spec_, *density_);
  const double max_dt = max_step(*this);
  const double hh = h();
  Eigen::MatrixXd v = Eigen::MatrixXd::Zero(m, count);
  Eigen::MatrixXd gram = Eigen::MatrixXd::Zero(count, count);

  for (std::size_t i = 0; i < stops.size(); ++i) {
    const double b = stops[i];
    for (Eigen::Index c = 0; c < count; ++c)
      if (family[static_cast<std::size_t>(c)].t == b) v.col(c) = family[static_cast<std::size_t>(c)].f;
    if (i + 1 == stops.size()) break;
    const double a = stops[i + 1];
    const Eigen::Index steps = step_count(b - a, max_dt);
    const double dt = (b - a) / static_cast<double>(steps);
    Eigen::MatrixXd prev = bond_product(v, bond_weights(b), hh);
    for (Eigen::Index k = 0; k < steps; ++k) {
      const double s = b - (b - a) * static_cast<double>(k) / static_cast<double>(steps);
      const double next = k + 1 == steps ? a : b - (b - a) * static_cast<double>(k + 1) / static_cast<double>(steps);
      stepper.step(v, s, dt);
      Eigen::MatrixXd cur = bond_product(v, bond_weights(next), hh);
      gram += 0.5 * dt * (prev + cur);
      prev = std::move(cur);
    }
  }
  const Grid rho0 = density_->slice(0.0);
  const Grid w0 = hh * rho0.unaryExpr([](double r) { return compressibility(r); });
  gram += v.transpose() * w0.asDiagonal() * v;
  return 0.5 * (gram + gram.transpose());
}

double CovarianceOracle::var_field(const Grid& f, double t) const { return gram({{f, t}})(0, 0); }

double CovarianceOracle::cov_field(const Grid& f, double s, const Grid& g, double t) const {
  if (s > t) throw std::invalid_argument("cov_field: requires s <= t");
  return gram({{f, s}, {g, t}})(0, 1);
}

std::shared_ptr<const SemigroupSolution> CovarianceOracle::semigroup(const std::string& id, const Grid& f,
                                                                     double t) const {
  const auto key = std::make_pair(t, id);
  {
    std::lock_guard lock(mutex_);
    if (auto it = cache_.find(key); it != cache_.end()) return it->second;
  }
  BackwardOptions opts;
  opts.dt = options_.dt;
  opts.store_interval = options_.store_interval;
  auto sol = std::make_shared<const SemigroupSolution>(solve_backward(spec_, *density_, f, t, opts));
  std::lock_guard lock(mutex_);
  return cache_.emplace(key, std::move(sol)).first->second;
}

EnergyBalance energy_balance(const CovarianceOracle& oracle, const Grid& f, double t) {
  const double h = oracle.h();
  EnergyBalance e;
  e.terminal_norm = h * f.squaredNorm();
  const BackwardStepper stepper(oracle.spec(), oracle.density());
  const Eigen::Index steps = t > 0.0 ? step_count(t, max_step(oracle)) : 0;
  const double dt = steps > 0 ? t / static_cast<double>(steps) : 0.0;
  const Grid ones = Grid::Constant(f.size(), 2.0 * h);
  Eigen::MatrixXd v = f;
  double prev = bond_diagonal(v, ones, h)(0);
  for (Eigen::Index k = 0; k < steps; ++k) {
    const double s = t * static_cast<double>(steps - k) / static_cast<double>(steps);
    stepper.step(v, s, dt);
    const double cur = bond_diagonal(v, ones, h)(0);
    e.dissipation += 0.5 * dt * (prev + cur);
    prev = cur;
  }
  e.initial_norm = h * v.squaredNorm();
  return e;
}

Grid delta_test_function_on_grid(const CovarianceOracle& oracle, const Mollifier& moll, double s) {
  return delta_test_function(oracle.spec(), moll, oracle.density().slice(s), s);
}

std::vector<double> var_Z_family(const CovarianceOracle& oracle, const std::vector<Mollifier>& molls, double t) {
  const Eigen::Index m = oracle.grid_size();
  const auto count = static_cast<Eigen::Index>(molls.size());
  Eigen::MatrixXd phi(m, count);
  for (Eigen::Index e = 0; e < count; ++e) phi.col(e) = molls[static_cast<std::size_t>(e)].on_lattice(static_cast<int>(m));
  const ModelSpec& spec = oracle.spec();
  const auto source = [&](double s) -> Eigen::MatrixXd {
    const Grid rho = oracle.density().slice(s);
    const double chi0 = compressibility(rho(0));
    const double q = spec.time_weight(s);
    const Grid ratio = rho.unaryExpr([&](double r) { return chi0 / (q * compressibility(r)); });
    return ratio.asDiagonal() * phi;
  };
  const Eigen::VectorXd v = duhamel_variance(oracle, count, t, source);
  return {v.data(), v.data() + v.size()};
}

double var_Z_point(const CovarianceOracle& oracle, double t) {
  const Eigen::Index m = oracle.grid_size();
  const ModelSpec& spec = oracle.spec();
  const auto source = [&](double s) -> Eigen::MatrixXd {
    Eigen::MatrixXd g = Eigen::MatrixXd::Zero(m, 1);
    g(0, 0) = static_cast<double>(m) / spec.time_weight(s);
    return g;
  };
  return duhamel_variance(oracle, 1, t, source)(0);
}

VarZResult var_Z(const CovarianceOracle& oracle, const Mollifier& moll, double t, int quad_k) {
  VarZResult r;
  r.t = t;
  r.eps = moll.eps();
  r.quad_k = quad_k;
  if (t <= 0.0) {
    r.quadrature_converged = true;
    return r;
  }
  r.variance = var_Z_family(oracle, {moll}, t).front();
  if (quad_k <= 0) return r;

  const auto tensor_gauss = [&](int k) {
    const auto [x, w] = gauss_legendre(k);
    std::vector<CovarianceOracle::Member> family;
    Eigen::VectorXd weights(k);
    for (int j = 0; j < k; ++j) {
      const double s = 0.5 * t * (x(j) + 1.0);
      family.push_back({delta_test_function_on_grid(oracle, moll, s), s});
      weights(j) = 0.5 * t * w(j);
    }
    return weights.dot(oracle.gram(family) * weights);
  };
  r.quadrature_k = tensor_gauss(quad_k);
  r.quadrature_2k = tensor_gauss(2 * quad_k);
  r.quadrature_converged =
      std::abs(r.quadrature_k - r.quadrature_2k) <= kQuadratureTolerance * std::abs(r.quadrature_2k);
  return r;
}

Extrapolation extrapolate_linear(std::vector<double> eps, std::vector<double> values) {
  if (eps.size() != values.size() || eps.size() < 2)
    throw std::invalid_argument("extrapolate_linear: need at least two (eps, value) pairs");
  Extrapolation ex;
  const auto k = static_cast<double>(eps.size());
  double se = 0, sv = 0, see = 0, sev = 0;
  for (std::size_t i = 0; i < eps.size(); ++i) {
    se += eps[i];
    sv += values[i];
    see += eps[i] * eps[i];
    sev += eps[i] * values[i];
  }
  const double denom = k * see - se * se;
  if (!(std::abs(denom) > 0.0)) throw std::invalid_argument("extrapolate_linear: eps values must differ");
  ex.slope = (k * sev - se * sv) / denom;
  ex.limit = (sv - ex.slope * se) / k;
  std::vector<std::size_t> order(eps.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return eps[a] < eps[b]; });
  for (std::size_t i = 0; i + 1 < order.size(); ++i) {
    const double e1 = eps[order[i]], e2 = eps[order[i + 1]];
    const double v1 = values[order[i]], v2 = values[order[i + 1]];
    const double a = (e2 * v1 - e1 * v2) / (e2 - e1);
    ex.pairwise.push_back(a);
    ex.spread = std::max(ex.spread, std::abs(a - ex.limit) / std::abs(ex.limit));
  }
  ex.eps = std::move(eps);
  ex.values = std::move(values);
  return ex;
}

Extrapolation var_Z_extrapolated(const CovarianceOracle& oracle, double t, const std::vector<double>& ladder) {
  std::vector<Mollifier> molls;
  for (double e : ladder) molls.emplace_back(e);
  return extrapolate_linear(ladder, var_Z_family(oracle, molls, t));
}

double quadratic_variation(const DensityField& density, const std::function<double(double)>& df, double t) {
  if (t <= 0.0) return 0.0;
  const Eigen::Index m = density.grid_size();
  const Grid d2 = sample_on_grid([&](double u) { return df(u) * df(u); }, m);
  const auto integrand = [&](double s) {
    const Grid rho = density.slice(s);
    double acc = 0.0;
    for (Eigen::Index j = 0; j < m; ++j) acc += 2.0 * compressibility(rho(j)) * d2(j);
    return acc / static_cast<double>(m);
  };
  const Eigen::VectorXd& times = density.times();
  double total = 0.0;
  for (Eigen::Index k = 0; k + 1 < times.size() && times(k) < t; ++k) {
    const double a = times(k), b = std::min(times(k + 1), t);
    total += boost::math::quadrature::gauss<double, 4>::integrate(integrand, a, b);
  }
  return total;
}

SpdeSimulator::SpdeSimulator(const ModelSpec& spec, std::shared_ptr<const DensityField> density,
                             const EventSchedule& schedule, SpdeOptions options)
    : spec_(spec), density_(std::move(density)), schedule_(schedule), options_(std::move(options)) {
  if (!density_) throw std::invalid_argument("simulate_spde: density field required");
  const Eigen::Index m = options_.m;
  if (m < 8) throw std::invalid_argument("simulate_spde: grid too small");
  if (schedule_.horizon() > density_->horizon() * (1.0 + 1e-12))
    throw std::out_of_range("simulate_spde: schedule extends beyond the density horizon");
  h_ = 1.0 / static_cast<double>(m);
  double max_dt = 0.25 * h_ * h_;
  if (options_.dt > 0.0) {
    if (options_.dt > max_dt * (1.0 + 1e-12)) {
      std::ostringstream os;
      os << "simulate_spde: CFL violation, dt = " << options_.dt << " exceeds 0.25 h^2 = " << max_dt;
      throw std::domain_error(os.str());
    }
    max_dt = options_.dt;
  }
  for (std::size_t k = 0; k + 1 < schedule_.size(); ++k) {
    const Eigen::Index steps = step_count(schedule_[k + 1] - schedule_[k], max_dt);
    steps_per_interval_.push_back(steps);
    dt_ = std::max(dt_, (schedule_[k + 1] - schedule_[k]) / static_cast<double>(steps));
  }
  for (const auto& f : options_.test_functions)
    if (f.size() != m) throw std::invalid_argument("simulate_spde: test function not on the SPDE grid");
  if (options_.initial && options_.initial->size() != m)
    throw std::invalid_argument("simulate_spde: initial field not on the SPDE grid");

  std::vector<Mollifier> molls;
  for (double e : options_.z_eps) molls.emplace_back(e);
  const double horizon = schedule_.horizon();
  const Eigen::Index count = step_count(horizon, kSpdeTableInterval);
  const Grid drift_bonds = sample_on_grid([&](double u) { return spec_.drift(wrap_unit(u + 0.5 * h_)); }, m);
  for (Eigen::Index i = 0; i <= count; ++i) {
    const double s = horizon * static_cast<double>(i) / static_cast<double>(count);
    const Grid rho = density_->on_lattice(s, static_cast<int>(m));
    Eigen::MatrixXd table(m, 2 + static_cast<Eigen::Index>(molls.size()));
    for (Eigen::Index j = 0; j < m; ++j) {
      const double rb = 0.5 * (rho(j) + rho((j + 1) % m));
      table(j, 0) = 2.0 * (1.0 - 2.0 * rb) * drift_bonds(j);
      table(j, 1) = std::sqrt(2.0 * std::max(0.0, compressibility(rb)));
    }
    for (std::size_t e = 0; e < molls.size(); ++e)
      table.col(2 + static_cast<Eigen::Index>(e)) = delta_test_function(spec_, molls[e], rho, s);
    table_times_.push_back(s);
    tables_.push_back(std::move(table));
  }
}

SpdePath SpdeSimulator::simulate(std::uint64_t seed) const {
  const Eigen::Index m = options_.m;
  const auto nf = static_cast<Eigen::Index>(options_.test_functions.size());
  const auto ne = static_cast<Eigen::Index>(options_.z_eps.size());
  const auto snaps = static_cast<Eigen::Index>(schedule_.size());
  RandomStream rng(seed);
  std::normal_distribution<double> normal;

  SpdePath path;
  path.m = m;
  path.dt = dt_;
  path.times = schedule_.times();
  path.pairings.resize(snaps, nf);
  path.z = Eigen::MatrixXd::Zero(snaps, ne);
  if (options_.keep_field) path.field.resize(m, snaps);

  Grid x(m);
  if (options_.initial) {
    x = *options_.initial;
  } else {
    const Grid rho0 = density_->on_lattice(0.0, static_cast<int>(m));
    for (Eigen::Index j = 0; j < m; ++j) x(j) = std::sqrt(compressibility(rho0(j)) / h_) * normal(rng);
  }

  const double span = table_times_.back();
  const auto count = static_cast<double>(table_times_.size() - 1);
  Eigen::MatrixXd coef(m, 2 + ne);
  const auto coefficients = [&](double s) {
    const double pos = std::clamp(s / span, 0.0, 1.0) * count;
    const auto i = std::min(static_cast<std::size_t>(pos), table_times_.size() - 2);
    const double a = pos - static_cast<double>(i);
    coef = (1.0 - a) * tables_[i] + a * tables_[i + 1];
  };
  const auto record = [&](Eigen::Index k) {
    for (Eigen::Index f = 0; f < nf; ++f)
      path.pairings(k, f) = h_ * x.dot(options_.test_functions[static_cast<std::size_t>(f)]);
    if (options_.keep_field) path.field.col(k) = x;
  };

  record(0);
  coefficients(0.0);
  Eigen::VectorXd zcur = h_ * (coef.rightCols(ne).transpose() * x);
  Eigen::VectorXd z = Eigen::VectorXd::Zero(ne);
  Grid flux(m);
  const double noise_scale = options_.noise ? options_.noise_sign : 0.0;
  for (std::size_t k = 0; k + 1 < schedule_.size(); ++k) {
    const Eigen::Index steps = steps_per_interval_[k];
    const double t0 = schedule_[k], dt = (schedule_[k + 1] - t0) / static_cast<double>(steps);
    const double noise_amp = noise_scale * std::sqrt(1.0 / (h_ * dt));
    for (Eigen::Index i = 0; i < steps; ++i) {
      // coef holds the coefficients at the current time.
      for (Eigen::Index j = 0; j < m; ++j) {
        const double xn = x((j + 1) % m);
        flux(j) = (xn - x(j)) / h_ - coef(j, 0) * 0.5 * (x(j) + xn);
        if (noise_scale != 0.0) flux(j) += coef(j, 1) * noise_amp * normal(rng);
      }
      x(0) += dt * (flux(0) - flux(m - 1)) / h_;
      x.tail(m - 1) += dt * (flux.tail(m - 1) - flux.head(m - 1)) / h_;
      coefficients(t0 + (schedule_[k + 1] - t0) * static_cast<double>(i + 1) / static_cast<double>(steps));
      if (ne > 0) {
        const Eigen::VectorXd znext = h_ * (coef.rightCols(ne).transpose() * x);
        z += 0.5 * dt * (zcur + znext);
        zcur = znext;
      }
    }
    record(static_cast<Eigen::Index>(k + 1));
    path.z.row(static_cast<Eigen::Index>(k + 1)) = z.transpose();
  }
  return path;
}

SpdePath simulate_spde(const ModelSpec& spec, std::shared_ptr<const DensityField> density,
                       const EventSchedule& schedule, std::uint64_t seed, SpdeOptions options) {
  return SpdeSimulator(spec, std::move(density), schedule, std::move(options)).simulate(seed);
}

}  // namespace wasep
