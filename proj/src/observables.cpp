#include "wasep/observables.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <stdexcept>

#include <boost/math/quadrature/gauss_kronrod.hpp>

namespace wasep {

namespace {

constexpr std::array<double, 4> kNodes = {-0.8611363115940526, -0.3399810435848563,
                                          0.3399810435848563, 0.8611363115940526};
constexpr std::array<double, 4> kWeights = {0.3478548451374538, 0.6521451548625461,
                                            0.6521451548625461, 0.3478548451374538};
constexpr double kChiFloor = 1e-9;
constexpr double kSqrt2 = 1.4142135623730950488;

double unnormalised_bump(double u) {
  if (!(u > 0.0 && u < 1.0)) return 0.0;
  return std::exp(-1.0 / (u * (1.0 - u)));
}

std::string format_number(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

double parse_number(const std::string& text, const std::string& context) {
  double v = 0.0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size())
    throw std::invalid_argument("cannot parse number '" + text + "' in " + context);
  return v;
}

std::optional<std::string> parameter(const std::string& name, const std::string& prefix) {
  if (name.rfind(prefix, 0) != 0) return std::nullopt;
  return name.substr(prefix.size());
}

}  // namespace

Mollifier::Mollifier(double eps, double scale) : eps_(eps), scale_(scale) {
  if (!(eps > 0.0 && eps < 1.0)) throw std::invalid_argument("mollifier: eps must lie in (0, 1)");
}

double Mollifier::normalization() {
  static const double c = [] {
    const double mass =
        boost::math::quadrature::gauss_kronrod<double, 61>::integrate(unnormalised_bump, 0.0, 1.0, 15, 1e-14);
    return 1.0 / mass;
  }();
  return c;
}

double Mollifier::base(double u) { return normalization() * unnormalised_bump(u); }

double Mollifier::base_derivative(double u) {
  if (!(u > 0.0 && u < 1.0)) return 0.0;
  const double p = u * (1.0 - u);
  return base(u) * (1.0 - 2.0 * u) / (p * p);
}

double Mollifier::base_derivative_sup() {
  static const double sup = [] {
    double s = 0.0;
    constexpr int kSamples = 200000;
    for (int i = 1; i < kSamples; ++i) s = std::max(s, std::abs(base_derivative(static_cast<double>(i) / kSamples)));
    return s;
  }();
  return sup;
}

double Mollifier::operator()(double u) const { return scale_ * base(wrap_unit(u) / eps_) / eps_; }

double Mollifier::derivative(double u) const {
  return scale_ * base_derivative(wrap_unit(u) / eps_) / (eps_ * eps_);
}

double Mollifier::derivative_sup() const { return std::abs(scale_) * base_derivative_sup() / (eps_ * eps_); }

Grid Mollifier::on_lattice(int n) const {
  return sample_on_grid([this](double u) { return (*this)(u); }, n);
}

Grid w_field(const Configuration& config, const Grid& rho_lattice) {
  Grid w(config.size());
  for (int x = 0; x < config.size(); ++x) {
    const double chi = compressibility(rho_lattice(x));
    if (chi < kChiFloor) throw std::domain_error("w_field: compressibility below 1e-9, density solver failed");
    w(x) = (config[x] - rho_lattice(x)) / chi;
  }
  return w;
}

double fluctuation_field(const Configuration& config, const Grid& rho_lattice, const Grid& f_lattice) {
  double s = 0.0;
  for (int x = 0; x < config.size(); ++x) s += (config[x] - rho_lattice(x)) * f_lattice(x);
  return s / std::sqrt(static_cast<double>(config.size()));
}

double empirical_measure(const Configuration& config, const Grid& f_lattice) {
  double s = 0.0;
  for (int x = 0; x < config.size(); ++x)
    if (config.occupied(x)) s += f_lattice(x);
  return s / config.size();
}

Grid delta_test_function(const ModelSpec& spec, const Mollifier& moll, const Grid& rho_lattice, double s) {
  const auto n = static_cast<int>(rho_lattice.size());
  const double chi0 = compressibility(rho_lattice(0));
  const double q = spec.time_weight(s);
  Grid g(n);
  for (int x = 0; x < n; ++x) {
    const double phi = moll(static_cast<double>(x) / n);
    if (phi == 0.0) {
      g(x) = 0.0;
      continue;
    }
    const double chi = compressibility(rho_lattice(x));
    if (chi < kChiFloor) throw std::domain_error("delta_test_function: compressibility below 1e-9");
    g(x) = phi * chi0 / (q * chi);
  }
  return g;
}

TestFunction parse_test_function(const std::string& name) {
  if (name == "const") return {name, [](double) { return 1.0; }, [](double) { return 0.0; }};
  if (auto c = parameter(name, "const:c=")) {
    const double v = parse_number(*c, name);
    return {name, [v](double) { return v; }, [](double) { return 0.0; }};
  }
  for (const char* family : {"fourier:k=", "sin:k="}) {
    if (auto k = parameter(name, family)) {
      const double mode = parse_number(*k, name);
      if (mode < 1 || mode != std::floor(mode)) throw std::invalid_argument("test function " + name + ": k must be a positive integer");
      const double w = kTwoPi * mode;
      if (family[0] == 'f')
        return {name, [w](double u) { return kSqrt2 * std::cos(w * u); },
                [w](double u) { return -kSqrt2 * w * std::sin(w * u); }};
      return {name, [w](double u) { return kSqrt2 * std::sin(w * u); },
              [w](double u) { return kSqrt2 * w * std::cos(w * u); }};
    }
  }
  throw std::invalid_argument("unknown test function '" + name + "'");
}

std::optional<double> parse_delta_eps(const std::string& name) {
  if (auto e = parameter(name, "delta:eps=")) return parse_number(*e, name);
  return std::nullopt;
}

std::string delta_name(double eps) { return "delta:eps=" + format_number(eps); }
std::string field_column(const std::string& test_function) { return "X[" + test_function + "]"; }
std::string z_column(double eps) { return "Z[eps=" + format_number(eps) + "]"; }
std::string z_point_column(double eps) { return "Xg[eps=" + format_number(eps) + "]"; }

std::shared_ptr<const ObserverSet> make_observer_set(const ModelSpec& spec,
                                                     std::shared_ptr<const DensityField> density,
                                                     const EventSchedule& schedule,
                                                     const ObservablePlan& plan) {
  if (!density) throw std::invalid_argument("make_observer_set: density field required");
  const int n = spec.n;
  const auto snaps = static_cast<Eigen::Index>(schedule.size());
  auto set = std::make_shared<ObserverSet>();
  set->density = density;
  set->rho_lattice.resize(n, snaps);
  for (Eigen::Index k = 0; k < snaps; ++k)
    set->rho_lattice.col(k) = density->on_lattice(schedule[static_cast<std::size_t>(k)], n);
  set->origin_baseline = origin_baseline(*density, spec, schedule);
  const ObserverSet* raw = set.get();

  for (const auto& name : plan.fields) {
    const Grid f = parse_test_function(name).on_lattice(n);
    set->snapshot.push_back({field_column(name), [raw, f](const Configuration& c, std::size_t k) {
                               return fluctuation_field(c, raw->rho_lattice.col(static_cast<Eigen::Index>(k)), f);
                             }});
  }
  if (plan.site_occupations) {
    for (int x = 0; x < n; ++x)
      set->snapshot.push_back({"eta[" + std::to_string(x) + "]",
                               [x](const Configuration& c, std::size_t) { return static_cast<double>(c[x]); }});
  }

  const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(n));
  for (double eps : plan.z_eps) {
    if (eps * n < 4.0)
      throw std::invalid_argument("mollifier width eps = " + format_number(eps) +
                                  " is unresolved by the lattice (eps * n < 4)");
    const Mollifier moll(eps);
    IntegratedObserver obs{z_column(eps), Eigen::MatrixXd(n, snaps)};
    for (Eigen::Index k = 0; k < snaps; ++k)
      obs.weights.col(k) = inv_sqrt_n * delta_test_function(spec, moll, set->rho_lattice.col(k),
                                                            schedule[static_cast<std::size_t>(k)]);
    if (plan.z_pointwise) {
      const auto col = static_cast<Eigen::Index>(set->integrated.size());
      set->snapshot.push_back({z_point_column(eps), [raw, col](const Configuration& c, std::size_t k) {
                                 const auto kk = static_cast<Eigen::Index>(k);
                                 const auto& w = raw->integrated[static_cast<std::size_t>(col)].weights;
                                 double s = 0.0;
                                 for (int x = 0; x < c.size(); ++x) s += (c[x] - raw->rho_lattice(x, kk)) * w(x, kk);
                                 return s;
                               }});
    }
    set->integrated.push_back(std::move(obs));
  }

  // Deterministic baselines: int_0^{t_k} sum_x rho_s(x/n) w_s(x) ds with w linear between
  // snapshots, by 4-point Gauss-Legendre on every panel between density and snapshot times.
  if (!set->integrated.empty()) {
    std::vector<double> points(density->times().data(), density->times().data() + density->times().size());
    points.insert(points.end(), schedule.times().begin(), schedule.times().end());
    std::sort(points.begin(), points.end());
    points.erase(std::unique(points.begin(), points.end(), [](double a, double b) { return std::abs(a - b) < 1e-14; }),
                 points.end());
    while (!points.empty() && points.back() > schedule.horizon() + 1e-14) points.pop_back();

    const std::size_t count = set->integrated.size();
    set->integral_baseline.assign(count, std::vector<double>(schedule.size(), 0.0));
    std::vector<double> cumulative(count, 0.0);
    std::size_t k = 0;  // current snapshot interval [t_k, t_{k+1}]
    for (std::size_t p = 0; p + 1 < points.size(); ++p) {
      const double a = points[p], b = points[p + 1];
      while (k + 1 < schedule.size() && schedule[k + 1] <= a + 1e-14) {
        ++k;
        for (std::size_t i = 0; i < count; ++i) set->integral_baseline[i][k] = cumulative[i];
      }
      if (k + 1 >= schedule.size()) break;
      const double tk = schedule[k], span = schedule[k + 1] - tk;
      const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
      for (std::size_t g = 0; g < 4; ++g) {
        const double s = mid + half * kNodes[g];
        const double theta = (s - tk) / span;
        const Grid rho = density->on_lattice(s, n);
        for (std::size_t i = 0; i < count; ++i) {
          const auto& w = set->integrated[i].weights;
          const double lo = rho.dot(w.col(static_cast<Eigen::Index>(k)));
          const double hi = rho.dot(w.col(static_cast<Eigen::Index>(k + 1)));
          cumulative[i] += kWeights[g] * half * ((1.0 - theta) * lo + theta * hi);
        }
      }
    }
    while (k + 1 < schedule.size()) {
      ++k;
      for (std::size_t i = 0; i < count; ++i) set->integral_baseline[i][k] = cumulative[i];
    }
  }

  if (plan.dynkin) set->dynkin_function = parse_test_function(*plan.dynkin).on_lattice(n);
  return set;
}

double z_discrete(const TrajectoryRecord& record, double eps, double t, ZQuadrature quadrature) {
  if (eps * record.n < 4.0) throw std::invalid_argument("z_discrete: eps * n < 4, mollifier unresolved");
  const auto& times = record.times;
  const double tol = 1e-9 * std::max(1.0, times.back());
  auto it = std::lower_bound(times.begin(), times.end(), t - tol);
  if (it == times.end() || std::abs(*it - t) > tol) throw std::invalid_argument("z_discrete: t is not a snapshot time");
  const auto k = static_cast<std::size_t>(it - times.begin());
  if (quadrature == ZQuadrature::event_exact) return record.centred_integral(z_column(eps), k);

  const Eigen::Index col = record.snapshot_column(z_point_column(eps));
  double z = 0.0;
  for (std::size_t j = 0; j < k; ++j)
    z += 0.5 * (times[j + 1] - times[j]) *
         (record.snapshot_values(static_cast<Eigen::Index>(j), col) +
          record.snapshot_values(static_cast<Eigen::Index>(j + 1), col));
  return z;
}

}  // namespace wasep
