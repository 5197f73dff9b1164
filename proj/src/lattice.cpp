#include "wasep/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace wasep {

namespace {

constexpr int kValidationPoints = 4096;

double periodic_distance(double u, double center) {
  double d = wrap_unit(u - center);
  return d >= 0.5 ? d - 1.0 : d;
}

}  // namespace

SmoothFunction SmoothFunction::constant(double value) {
  SmoothFunction f;
  f.family_ = Family::constant;
  f.offset_ = value;
  return f;
}

SmoothFunction SmoothFunction::fourier(double offset, int k, double cos_amp, double sin_amp) {
  if (k < 1) throw std::invalid_argument("fourier: mode k must be >= 1");
  SmoothFunction f;
  f.family_ = Family::fourier;
  f.offset_ = offset;
  f.cos_.assign(static_cast<std::size_t>(k), 0.0);
  f.sin_.assign(static_cast<std::size_t>(k), 0.0);
  f.cos_.back() = cos_amp;
  f.sin_.back() = sin_amp;
  return f;
}

SmoothFunction SmoothFunction::fourier_sum(double offset, std::vector<double> cos_amps,
                                           std::vector<double> sin_amps) {
  SmoothFunction f;
  f.family_ = Family::fourier_sum;
  f.offset_ = offset;
  const auto len = std::max(cos_amps.size(), sin_amps.size());
  cos_amps.resize(len, 0.0);
  sin_amps.resize(len, 0.0);
  f.cos_ = std::move(cos_amps);
  f.sin_ = std::move(sin_amps);
  return f;
}

SmoothFunction SmoothFunction::bump(double offset, double amplitude, double center, double width) {
  if (!(width > 0.0 && width <= 0.5)) throw std::invalid_argument("bump: width must lie in (0, 1/2]");
  SmoothFunction f;
  f.family_ = Family::bump;
  f.offset_ = offset;
  f.amplitude_ = amplitude;
  f.center_ = center;
  f.width_ = width;
  return f;
}

double SmoothFunction::operator()(double u) const {
  switch (family_) {
    case Family::constant:
      return offset_;
    case Family::fourier:
    case Family::fourier_sum: {
      double v = offset_;
      for (std::size_t i = 0; i < cos_.size(); ++i) {
        const double arg = kTwoPi * static_cast<double>(i + 1) * u;
        if (cos_[i] != 0.0) v += cos_[i] * std::cos(arg);
        if (sin_[i] != 0.0) v += sin_[i] * std::sin(arg);
      }
      return v;
    }
    case Family::bump: {
      const double z = periodic_distance(u, center_) / width_;
      if (std::abs(z) >= 1.0) return offset_;
      return offset_ + amplitude_ * std::exp(1.0 - 1.0 / (1.0 - z * z));
    }
  }
  return offset_;
}

double SmoothFunction::derivative(double u) const {
  switch (family_) {
    case Family::constant:
      return 0.0;
    case Family::fourier:
    case Family::fourier_sum: {
      double v = 0.0;
      for (std::size_t i = 0; i < cos_.size(); ++i) {
        const double w = kTwoPi * static_cast<double>(i + 1);
        v += -cos_[i] * w * std::sin(w * u) + sin_[i] * w * std::cos(w * u);
      }
      return v;
    }
    case Family::bump: {
      const double z = periodic_distance(u, center_) / width_;
      if (std::abs(z) >= 1.0) return 0.0;
      const double s = 1.0 - z * z;
      return amplitude_ * std::exp(1.0 - 1.0 / s) * (-2.0 * z / (s * s)) / width_;
    }
  }
  return 0.0;
}

bool SmoothFunction::is_constant() const {
  switch (family_) {
    case Family::constant:
      return true;
    case Family::bump:
      return amplitude_ == 0.0;
    default:
      return std::all_of(cos_.begin(), cos_.end(), [](double a) { return a == 0.0; }) &&
             std::all_of(sin_.begin(), sin_.end(), [](double a) { return a == 0.0; });
  }
}

std::string SmoothFunction::describe() const {
  std::ostringstream os;
  os.precision(17);
  switch (family_) {
    case Family::constant:
      os << "constant(" << offset_ << ")";
      break;
    case Family::fourier:
    case Family::fourier_sum:
      os << (family_ == Family::fourier ? "fourier(" : "fourier_sum(") << offset_;
      for (std::size_t i = 0; i < cos_.size(); ++i)
        os << "; k=" << i + 1 << " cos=" << cos_[i] << " sin=" << sin_[i];
      os << ")";
      break;
    case Family::bump:
      os << "bump(" << offset_ << ", " << amplitude_ << ", " << center_ << ", " << width_ << ")";
      break;
  }
  return os.str();
}

ModelSpec ModelSpec::make(int n, SmoothFunction drift, SmoothFunction initial_profile,
                          SmoothFunction time_weight, double horizon, double eps0,
                          ProfileCheck check) {
  if (n < 4) throw std::invalid_argument("model: n must be >= 4");
  if (!(horizon > 0.0)) throw std::invalid_argument("model: T must be positive");
  if (!(eps0 > 0.0 && eps0 < 0.5)) throw std::invalid_argument("model: eps0 must lie in (0, 1/2)");

  ModelSpec spec;
  spec.n = n;
  spec.drift = std::move(drift);
  spec.initial_profile = std::move(initial_profile);
  spec.time_weight = std::move(time_weight);
  spec.horizon = horizon;
  spec.eps0 = eps0;

  if (check == ProfileCheck::enforce) {
    for (int i = 0; i < kValidationPoints; ++i) {
      const double u = static_cast<double>(i) / kValidationPoints;
      const double r = spec.initial_profile(u);
      if (!(r > eps0 && r < 1.0 - eps0)) {
        std::ostringstream os;
        os << "model: rho0(" << u << ") = " << r << " leaves (eps0, 1 - eps0) with eps0 = " << eps0;
        throw std::invalid_argument(os.str());
      }
    }
  }

  double q_min = INFINITY, q_max = -INFINITY;
  for (int i = 0; i <= kValidationPoints; ++i) {
    const double q = spec.time_weight(horizon * i / kValidationPoints);
    q_min = std::min(q_min, q);
    q_max = std::max(q_max, q);
  }
  if (!(q_min > 0.0)) throw std::invalid_argument("model: q must stay positive on [0, T]");
  spec.q_bound = std::max(q_max, 1.0 / q_min);

  if (!(1.0 - spec.drift_sup() / n > 0.0))
    throw std::invalid_argument("model: n too small, 1 - sup|F|/n must be positive");
  return spec;
}

double ModelSpec::drift_sup() const {
  double s = 0.0;
  for (int i = 0; i < kValidationPoints; ++i)
    s = std::max(s, std::abs(drift(static_cast<double>(i) / kValidationPoints)));
  return s;
}

Configuration::Configuration(std::vector<std::uint8_t> eta) : eta_(std::move(eta)) {
  for (auto& v : eta_) {
    if (v > 1) throw std::invalid_argument("configuration entries must be 0 or 1");
  }
  count_ = std::accumulate(eta_.begin(), eta_.end(), 0);
}

Grid Configuration::as_grid() const {
  Grid g(size());
  for (int x = 0; x < size(); ++x) g(x) = eta_[static_cast<std::size_t>(x)];
  return g;
}

Configuration sample_initial(const ModelSpec& spec, RandomStream& rng) {
  std::vector<std::uint8_t> eta(static_cast<std::size_t>(spec.n));
  for (int x = 0; x < spec.n; ++x) {
    const double p = spec.initial_profile(static_cast<double>(x) / spec.n);
    eta[static_cast<std::size_t>(x)] = rng.uniform() < p ? 1 : 0;
  }
  return Configuration(std::move(eta));
}

double initial_entropy(const ModelSpec& spec, const std::function<double(double)>& mu_profile) {
  constexpr double kMargin = 1e-12;
  double h = 0.0;
  for (int x = 0; x < spec.n; ++x) {
    const double u = static_cast<double>(x) / spec.n;
    const double m = mu_profile(u);
    const double p = spec.initial_profile(u);
    if (!(m > kMargin && m < 1.0 - kMargin) || !(p > kMargin && p < 1.0 - kMargin))
      throw std::invalid_argument("initial_entropy: profiles must stay inside (0, 1)");
    h += m * std::log(m / p) + (1.0 - m) * std::log((1.0 - m) / (1.0 - p));
  }
  return h;
}

}  // namespace wasep
