#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "wasep/grid.hpp"
#include "wasep/rng.hpp"

namespace wasep {

/// A smooth function from one of the built-in families. Used for the drift F(u),
/// the initial profile rho0(u) and the time weight q(s).
///
/// Families:
///  - constant:     value
///  - fourier:      offset + a cos(2 pi k u) + b sin(2 pi k u)
///  - fourier_sum:  offset + sum_k a_k cos(2 pi k u) + b_k sin(2 pi k u), k = 1, 2, ...
///  - bump:         offset + amplitude * exp(1 - 1/(1 - (d/width)^2)) for |d| < width, where d is
///                  the periodic distance to `center`; peak value offset + amplitude.
class SmoothFunction {
 public:
  enum class Family { constant, fourier, fourier_sum, bump };

  static SmoothFunction constant(double value);
  static SmoothFunction fourier(double offset, int k, double cos_amp, double sin_amp);
  static SmoothFunction fourier_sum(double offset, std::vector<double> cos_amps,
                                    std::vector<double> sin_amps);
  static SmoothFunction bump(double offset, double amplitude, double center, double width);

  double operator()(double u) const;
  double derivative(double u) const;

  Family family() const { return family_; }
  double offset() const { return offset_; }
  const std::vector<double>& cos_amplitudes() const { return cos_; }
  const std::vector<double>& sin_amplitudes() const { return sin_; }
  double amplitude() const { return amplitude_; }
  double center() const { return center_; }
  double width() const { return width_; }

  bool is_constant() const;
  std::string describe() const;

 private:
  Family family_ = Family::constant;
  double offset_ = 0.0;
  std::vector<double> cos_, sin_;  // index k-1 holds mode k
  double amplitude_ = 0.0, center_ = 0.0, width_ = 0.0;
};

/// Everything that defines one WASEP instance and its scaling regime.
/// Immutable after construction; validation runs in `make`.
struct ModelSpec {
  int n = 128;
  SmoothFunction drift = SmoothFunction::constant(0.0);                 // F
  SmoothFunction initial_profile = SmoothFunction::constant(0.5);       // rho0
  SmoothFunction time_weight = SmoothFunction::constant(1.0);           // q
  double horizon = 0.2;                                                 // T
  double eps0 = 0.05;
  double q_bound = 1.0;                                                 // M_q, computed

  enum class ProfileCheck { enforce, skip };

  /// Validates the invariants (profile margin, q bounds, nonnegative rates) and fills q_bound.
  /// Throws std::invalid_argument naming the violated constraint.
  static ModelSpec make(int n, SmoothFunction drift, SmoothFunction initial_profile,
                        SmoothFunction time_weight, double horizon, double eps0,
                        ProfileCheck check = ProfileCheck::enforce);

  double drift_sup() const;
};

/// Occupation vector eta in {0,1}^n with cached particle count.
class Configuration {
 public:
  Configuration() = default;
  explicit Configuration(std::vector<std::uint8_t> eta);
  static Configuration empty(int n) { return Configuration(std::vector<std::uint8_t>(n, 0)); }

  int size() const { return static_cast<int>(eta_.size()); }
  int particle_count() const { return count_; }
  bool occupied(int x) const { return eta_[static_cast<std::size_t>(x)] != 0; }
  std::uint8_t operator[](int x) const { return eta_[static_cast<std::size_t>(x)]; }
  std::span<const std::uint8_t> sites() const { return eta_; }

  /// Moves the particle at `from` to the empty site `to`.
  void move(int from, int to) {
    eta_[static_cast<std::size_t>(from)] = 0;
    eta_[static_cast<std::size_t>(to)] = 1;
  }

  Grid as_grid() const;

  friend bool operator==(const Configuration&, const Configuration&) = default;

 private:
  std::vector<std::uint8_t> eta_;
  int count_ = 0;
};

/// Rate r_n(x, x + dir) = 1 + dir F(x/n) / n for dir = +1 / -1.
inline double jump_rate(const ModelSpec& spec, int x, int dir) {
  return 1.0 + dir * spec.drift(static_cast<double>(x) / spec.n) / spec.n;
}

/// Bernoulli product measure with parameter rho0(x/n) at site x. Consumes exactly n draws.
Configuration sample_initial(const ModelSpec& spec, RandomStream& rng);

/// Relative entropy (nats) of the product measure with profile `mu_profile` with respect to the
/// product measure with profile rho0. Throws if either profile comes within 1e-12 of {0, 1}.
double initial_entropy(const ModelSpec& spec, const std::function<double(double)>& mu_profile);

}  // namespace wasep
