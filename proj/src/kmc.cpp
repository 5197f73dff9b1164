#include "wasep/kmc.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace wasep {

namespace {

constexpr std::array<double, 4> kGaussNodes = {-0.8611363115940526, -0.3399810435848563,
                                               0.3399810435848563, 0.8611363115940526};
constexpr std::array<double, 4> kGaussWeights = {0.3478548451374538, 0.6521451548625461,
                                                 0.6521451548625461, 0.3478548451374538};
constexpr std::uint64_t kConservationCheckMask = (1ULL << 20) - 1;

template <typename Fn>
double gauss4(Fn&& fn, double a, double b) {
  const double half = 0.5 * (b - a), mid = 0.5 * (a + b);
  double s = 0.0;
  for (std::size_t i = 0; i < 4; ++i) s += kGaussWeights[i] * fn(mid + half * kGaussNodes[i]);
  return s * half;
}

/// Running state of one integrated observer during a replica.
struct IntegratorState {
  const IntegratedObserver* observer;
  std::vector<std::uint8_t> support;
  double a = 0.0, b = 0.0;  // sum eta w at the two ends of the current snapshot interval
  double cumulative = 0.0;
  double last = 0.0;
};

}  // namespace

EventSchedule::EventSchedule(std::vector<double> times, double horizon)
    : times_(std::move(times)), horizon_(horizon) {
  if (!(horizon > 0.0)) throw std::invalid_argument("schedule: horizon must be positive");
  std::sort(times_.begin(), times_.end());
  if (times_.empty() || times_.front() > 0.0) times_.insert(times_.begin(), 0.0);
  for (std::size_t k = 0; k < times_.size(); ++k) {
    if (times_[k] < 0.0 || times_[k] > horizon * (1.0 + 1e-12))
      throw std::invalid_argument("schedule: snapshot time outside [0, T]");
    if (k > 0 && !(times_[k] > times_[k - 1]))
      throw std::invalid_argument("schedule: snapshot times must be strictly increasing");
  }
}

EventSchedule EventSchedule::uniform(double horizon, double dt, std::vector<double> extras) {
  if (dt <= 0.0) dt = horizon / 200.0;
  const auto steps = static_cast<long>(std::llround(horizon / dt));
  std::vector<double> times;
  if (std::abs(static_cast<double>(steps) * dt - horizon) < 1e-9 * horizon) {
    for (long k = 0; k <= steps; ++k) times.push_back(horizon * static_cast<double>(k) / steps);
  } else {
    for (long k = 0; static_cast<double>(k) * dt < horizon; ++k) times.push_back(static_cast<double>(k) * dt);
    times.push_back(horizon);
  }
  for (double e : extras) {
    const bool present = std::any_of(times.begin(), times.end(),
                                     [&](double t) { return std::abs(t - e) <= 1e-12 * horizon; });
    if (!present) times.push_back(e);
  }
  return EventSchedule(std::move(times), horizon);
}

std::optional<std::size_t> EventSchedule::index_of(double t) const {
  const double tol = 1e-9 * std::max(1.0, horizon_);
  auto it = std::lower_bound(times_.begin(), times_.end(), t - tol);
  if (it != times_.end() && std::abs(*it - t) <= tol) return static_cast<std::size_t>(it - times_.begin());
  return std::nullopt;
}

Eigen::Index TrajectoryRecord::snapshot_column(const std::string& name) const {
  auto it = std::find(snapshot_names.begin(), snapshot_names.end(), name);
  if (it == snapshot_names.end()) throw std::out_of_range("no snapshot observable named " + name);
  return it - snapshot_names.begin();
}

Eigen::Index TrajectoryRecord::integral_column(const std::string& name) const {
  auto it = std::find(integral_names.begin(), integral_names.end(), name);
  if (it == integral_names.end()) throw std::out_of_range("no integrated observable named " + name);
  return it - integral_names.begin();
}

double TrajectoryRecord::centred_integral(const std::string& name, std::size_t k) const {
  const Eigen::Index col = integral_column(name);
  double v = integral_values(static_cast<Eigen::Index>(k), col);
  if (observers) {
    const auto& base = observers->integral_baseline;
    if (static_cast<std::size_t>(col) < base.size() && !base[static_cast<std::size_t>(col)].empty())
      v -= base[static_cast<std::size_t>(col)][k];
  }
  return v;
}

double TrajectoryRecord::dynkin_martingale(std::size_t k) const {
  if (dynkin_state.empty()) throw std::logic_error("record has no Dynkin function attached");
  return dynkin_state[k] - dynkin_state[0] - dynkin_compensator[k];
}

double inverse_weight_integral(const ModelSpec& spec, double a, double b) {
  if (b <= a) return 0.0;
  if (spec.time_weight.is_constant()) return (b - a) / spec.time_weight(0.0);
  return gauss4([&](double s) { return 1.0 / spec.time_weight(s); }, a, b);
}

std::vector<double> origin_baseline(const DensityField& density, const ModelSpec& spec,
                                    const EventSchedule& schedule) {
  const Eigen::VectorXd& grid = density.times();
  const auto integrand = [&](double s) { return density(s, 0.0) / spec.time_weight(s); };
  // Breakpoints: density storage times merged with snapshot times, so every panel sees a
  // density that is linear in time.
  std::vector<double> points(grid.data(), grid.data() + grid.size());
  points.insert(points.end(), schedule.times().begin(), schedule.times().end());
  std::sort(points.begin(), points.end());
  points.erase(std::unique(points.begin(), points.end(),
                           [](double x, double y) { return std::abs(x - y) < 1e-14; }),
               points.end());

  std::vector<double> out(schedule.size(), 0.0);
  double cumulative = 0.0;
  std::size_t p = 0;
  for (std::size_t k = 0; k < schedule.size(); ++k) {
    const double target = schedule[k];
    while (p + 1 < points.size() && points[p + 1] <= target + 1e-14) {
      cumulative += gauss4(integrand, points[p], points[p + 1]);
      ++p;
    }
    out[k] = cumulative;
  }
  return out;
}

TrajectoryRecord run_replica(const ModelSpec& spec, std::uint64_t seed, const EventSchedule& schedule,
                             const RunOptions& options) {
  const int n = spec.n;
  if (!(1.0 - spec.drift_sup() / n > 0.0))
    throw std::invalid_argument("run_replica: n too small for nonnegative rates");
  if (schedule.horizon() > spec.horizon * (1.0 + 1e-12))
    throw std::invalid_argument("run_replica: schedule extends beyond the model horizon");

  RandomStream rng(seed);
  Configuration config = options.initial ? *options.initial : sample_initial(spec, rng);
  if (config.size() != n) throw std::invalid_argument("run_replica: initial configuration has wrong size");

  const ObserverSet* obs = options.observers.get();
  const std::size_t snaps = schedule.size();
  const double n2 = static_cast<double>(n) * n;
  const double inv_n2 = 1.0 / n2;

  TrajectoryRecord rec;
  rec.seed = seed;
  rec.n = n;
  rec.times = schedule.times();
  rec.eta0.resize(snaps);
  rec.origin_integral.resize(snaps);
  rec.observers = options.observers;
  rec.initial_configuration = config;
  rec.clock.n = n;

  std::vector<double> p_right(static_cast<std::size_t>(n)), rate_plus(static_cast<std::size_t>(n)),
      rate_minus(static_cast<std::size_t>(n));
  for (int x = 0; x < n; ++x) {
    rate_plus[static_cast<std::size_t>(x)] = jump_rate(spec, x, +1);
    rate_minus[static_cast<std::size_t>(x)] = jump_rate(spec, x, -1);
    p_right[static_cast<std::size_t>(x)] = 0.5 * rate_plus[static_cast<std::size_t>(x)];
  }

  std::vector<int> position;
  position.reserve(static_cast<std::size_t>(config.particle_count()));
  for (int x = 0; x < n; ++x)
    if (config.occupied(x)) position.push_back(x);
  const auto particles = static_cast<std::uint32_t>(position.size());

  // Observers.
  std::vector<IntegratorState> integrators;
  if (obs) {
    rec.snapshot_names.reserve(obs->snapshot.size());
    for (const auto& o : obs->snapshot) rec.snapshot_names.push_back(o.name);
    rec.snapshot_values.resize(static_cast<Eigen::Index>(snaps), static_cast<Eigen::Index>(obs->snapshot.size()));
    rec.integral_values.resize(static_cast<Eigen::Index>(snaps), static_cast<Eigen::Index>(obs->integrated.size()));
    for (const auto& o : obs->integrated) {
      if (o.weights.rows() != n || o.weights.cols() != static_cast<Eigen::Index>(snaps))
        throw std::invalid_argument("integrated observer " + o.name + " does not match lattice/schedule");
      rec.integral_names.push_back(o.name);
      IntegratorState st{&o, std::vector<std::uint8_t>(static_cast<std::size_t>(n), 0)};
      for (int x = 0; x < n; ++x) st.support[static_cast<std::size_t>(x)] = o.weights.row(x).any() ? 1 : 0;
      integrators.push_back(std::move(st));
    }
  }
  std::size_t interval = 0;  // index of the last snapshot taken
  const auto sum_weights = [&](const IntegratedObserver& o, std::size_t k) {
    double s = 0.0;
    for (int p : position) s += o.weights(p, static_cast<Eigen::Index>(k));
    return s;
  };
  const auto flush_integrator = [&](IntegratorState& st, double tau) {
    const double tk = schedule[interval];
    const double span = interval + 1 < snaps ? schedule[interval + 1] - tk : 1.0;
    const double lo = st.last - tk, hi = tau - tk;
    st.cumulative += st.a * (tau - st.last) + (st.b - st.a) * (hi * hi - lo * lo) / (2.0 * span);
    st.last = tau;
  };

  // Dynkin compensator.
  const bool dynkin = obs && obs->dynkin_function.has_value();
  std::vector<double> dfun;
  double drift_sum = 0.0, comp = 0.0, comp_last = 0.0;
  const double drift_scale = std::pow(static_cast<double>(n), 1.5);
  const auto bond_term = [&](int b) {
    const int c = b + 1 == n ? 0 : b + 1;
    const double j = rate_plus[static_cast<std::size_t>(b)] * config[b] * (1 - config[c]) -
                     rate_minus[static_cast<std::size_t>(c)] * config[c] * (1 - config[b]);
    return j * (dfun[static_cast<std::size_t>(c)] - dfun[static_cast<std::size_t>(b)]);
  };
  const auto full_drift = [&] {
    double s = 0.0;
    for (int b = 0; b < n; ++b) s += bond_term(b);
    return s;
  };
  if (dynkin) {
    const Grid& f = *obs->dynkin_function;
    if (f.size() != n) throw std::invalid_argument("dynkin function must live on the lattice");
    dfun.assign(f.data(), f.data() + n);
    drift_sum = full_drift();
    rec.dynkin_state.resize(snaps);
    rec.dynkin_compensator.resize(snaps);
  }

  SiteStatistics* stats = options.site_statistics;
  std::vector<double> occupied_since;
  if (stats) {
    stats->right_attempts.assign(static_cast<std::size_t>(n), 0);
    stats->left_attempts.assign(static_cast<std::size_t>(n), 0);
    stats->occupied_time.assign(static_cast<std::size_t>(n), 0.0);
    occupied_since.assign(static_cast<std::size_t>(n), 0.0);
  }

  OriginAccumulator origin;
  origin.occupied = config.occupied(0);
  const auto flush_origin = [&](double tau) {
    if (origin.occupied) origin.occ_integral += inverse_weight_integral(spec, origin.last_flip_time, tau);
    origin.last_flip_time = tau;
  };

  const auto take_snapshot = [&](std::size_t k) {
    const double tk = schedule[k];
    flush_origin(tk);
    rec.eta0[k] = config[0];
    rec.origin_integral[k] = origin.occ_integral;
    if (!obs) return;
    for (std::size_t i = 0; i < obs->snapshot.size(); ++i)
      rec.snapshot_values(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) =
          obs->snapshot[i].evaluate(config, k);
    for (std::size_t i = 0; i < integrators.size(); ++i) {
      auto& st = integrators[i];
      if (k > 0) flush_integrator(st, tk);
      rec.integral_values(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(i)) = st.cumulative;
    }
    interval = k;
    for (auto& st : integrators) {
      st.a = sum_weights(*st.observer, k);
      st.b = k + 1 < snaps ? sum_weights(*st.observer, k + 1) : st.a;
      st.last = tk;
    }
    if (dynkin) {
      comp += drift_scale * drift_sum * (tk - comp_last);
      comp_last = tk;
      drift_sum = full_drift();
      double state = 0.0;
      for (int p : position) state += dfun[static_cast<std::size_t>(p)];
      rec.dynkin_state[k] = state / std::sqrt(static_cast<double>(n));
      rec.dynkin_compensator[k] = comp;
    }
  };

  const double horizon_micro = schedule.horizon() * n2;
  std::vector<double> snap_micro(snaps);
  for (std::size_t k = 0; k < snaps; ++k) snap_micro[k] = schedule[k] * n2;

  std::size_t next = 0;
  double t = 0.0;
  std::uint64_t events = 0;
  if (particles == 0) {
    for (; next < snaps; ++next) take_snapshot(next);
  }
  const double total_rate = 2.0 * particles;
  while (next < snaps) {
    const double t_next = t + rng.exponential() / total_rate;
    while (next < snaps && snap_micro[next] <= t_next) take_snapshot(next++);
    if (next == snaps || t_next > horizon_micro) break;
    t = t_next;
    ++events;

    const std::uint32_t i = rng.below(particles);
    const int x = position[i];
    const bool right = rng.uniform() < p_right[static_cast<std::size_t>(x)];
    const int y = right ? (x + 1 == n ? 0 : x + 1) : (x == 0 ? n - 1 : x - 1);
    if (stats) ++(right ? stats->right_attempts : stats->left_attempts)[static_cast<std::size_t>(x)];

    if ((events & kConservationCheckMask) == 0) {
      int count = 0;
      for (int s = 0; s < n; ++s) count += config[s];
      if (count != static_cast<int>(particles)) throw std::logic_error("particle number not conserved");
    }
    if (config.occupied(y)) continue;

    const double tau = t * inv_n2;
    for (auto& st : integrators) {
      if (st.support[static_cast<std::size_t>(x)] | st.support[static_cast<std::size_t>(y)]) {
        flush_integrator(st, tau);
        const auto k = static_cast<Eigen::Index>(interval);
        const auto k1 = static_cast<Eigen::Index>(std::min(interval + 1, snaps - 1));
        st.a += st.observer->weights(y, k) - st.observer->weights(x, k);
        st.b += st.observer->weights(y, k1) - st.observer->weights(x, k1);
      }
    }
    if (x == 0 || y == 0) flush_origin(tau);
    if (stats) {
      stats->occupied_time[static_cast<std::size_t>(x)] += t - occupied_since[static_cast<std::size_t>(x)];
      occupied_since[static_cast<std::size_t>(y)] = t;
    }
    if (dynkin) {
      comp += drift_scale * drift_sum * (tau - comp_last);
      comp_last = tau;
      const int b = right ? x : y;  // bond (b, b+1) carries the jump
      const int bl = b == 0 ? n - 1 : b - 1, br = b + 1 == n ? 0 : b + 1;
      drift_sum -= bond_term(bl) + bond_term(b) + bond_term(br);
      config.move(x, y);
      drift_sum += bond_term(bl) + bond_term(b) + bond_term(br);
    } else {
      config.move(x, y);
    }
    position[i] = y;
    if (x == 0 || y == 0) origin.occupied = config.occupied(0);
  }

  if (stats) {
    for (int p : position)
      stats->occupied_time[static_cast<std::size_t>(p)] += horizon_micro - occupied_since[static_cast<std::size_t>(p)];
  }
  rec.clock.t_micro = t;
  rec.clock.event_count = events;
  rec.final_configuration = std::move(config);
  return rec;
}

double occupation_time_origin(const TrajectoryRecord& record, const ModelSpec& spec, double t) {
  if (!record.observers || !record.observers->density)
    throw std::logic_error("occupation_time_origin: no density field attached to the record");
  const auto& times = record.times;
  const double tol = 1e-9 * std::max(1.0, times.back());
  auto it = std::lower_bound(times.begin(), times.end(), t - tol);
  if (it == times.end() || std::abs(*it - t) > tol)
    throw std::invalid_argument("occupation_time_origin: t is not a snapshot time");
  const auto k = static_cast<std::size_t>(it - times.begin());

  double baseline;
  const auto& set = *record.observers;
  if (set.origin_baseline.size() == times.size()) {
    baseline = set.origin_baseline[k];
  } else {
    baseline = origin_baseline(*set.density, spec, EventSchedule(times, times.back()))[k];
  }
  return std::sqrt(static_cast<double>(spec.n)) * (record.origin_integral[k] - baseline);
}

}  // namespace wasep
