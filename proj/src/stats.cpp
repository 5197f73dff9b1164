#include "wasep/stats.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <thread>
#include <tuple>

namespace wasep {

namespace {

constexpr std::uint64_t kLillieforsPurpose = 0x4c494c4cULL;
constexpr std::uint64_t kBootstrapPurpose = 0x424f4f54ULL;
constexpr std::uint64_t kAuxPurpose = 1;

double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::sqrt(2.0)); }

std::size_t snapshot_index(const TrajectoryRecord& rec, double t) {
  const double tol = 1e-9 * std::max(1.0, rec.times.back());
  auto it = std::lower_bound(rec.times.begin(), rec.times.end(), t - tol);
  if (it == rec.times.end() || std::abs(*it - t) > tol) {
    std::ostringstream os;
    os << "time " << t << " is not a snapshot time";
    throw std::invalid_argument(os.str());
  }
  return static_cast<std::size_t>(it - rec.times.begin());
}

std::string format_time(double t) {
  std::ostringstream os;
  os.precision(12);
  os << t;
  return os.str();
}

}  // namespace

void RunningMoments::push(double x) {
  const auto n1 = static_cast<double>(n_);
  ++n_;
  const auto n = static_cast<double>(n_);
  const double delta = x - mean_;
  const double dn = delta / n;
  const double dn2 = dn * dn;
  const double term1 = delta * dn * n1;
  mean_ += dn;
  m4_ += term1 * dn2 * (n * n - 3.0 * n + 3.0) + 6.0 * dn2 * m2_ - 4.0 * dn * m3_;
  m3_ += term1 * dn * (n - 2.0) - 3.0 * dn * m2_;
  m2_ += term1;
}

void RunningMoments::merge(const RunningMoments& o) {
  if (o.n_ == 0) return;
  if (n_ == 0) {
    *this = o;
    return;
  }
  const auto na = static_cast<double>(n_), nb = static_cast<double>(o.n_);
  const double n = na + nb;
  const double d = o.mean_ - mean_;
  const double d2 = d * d;
  const double m2 = m2_ + o.m2_ + d2 * na * nb / n;
  const double m3 = m3_ + o.m3_ + d2 * d * na * nb * (na - nb) / (n * n) + 3.0 * d * (na * o.m2_ - nb * m2_) / n;
  const double m4 = m4_ + o.m4_ + d2 * d2 * na * nb * (na * na - na * nb + nb * nb) / (n * n * n) +
                    6.0 * d2 * (na * na * o.m2_ + nb * nb * m2_) / (n * n) + 4.0 * d * (na * o.m3_ - nb * m3_) / n;
  mean_ += d * nb / n;
  m2_ = m2;
  m3_ = m3;
  m4_ = m4;
  n_ += o.n_;
}

double RunningMoments::variance() const { return n_ > 1 ? m2_ / static_cast<double>(n_ - 1) : 0.0; }

double RunningMoments::skewness() const {
  if (n_ < 2 || m2_ <= 0.0) return 0.0;
  return std::sqrt(static_cast<double>(n_)) * m3_ / std::pow(m2_, 1.5);
}

double RunningMoments::excess_kurtosis() const {
  if (n_ < 2 || m2_ <= 0.0) return 0.0;
  return static_cast<double>(n_) * m4_ / (m2_ * m2_) - 3.0;
}

Moments two_pass_moments(std::span<const double> x) {
  Moments m;
  m.count = x.size();
  if (x.empty()) return m;
  const auto n = static_cast<double>(x.size());
  m.mean = std::accumulate(x.begin(), x.end(), 0.0) / n;
  double c2 = 0, c3 = 0, c4 = 0;
  for (double v : x) {
    const double d = v - m.mean, d2 = d * d;
    c2 += d2;
    c3 += d2 * d;
    c4 += d2 * d2;
  }
  if (x.size() > 1) m.variance = c2 / (n - 1.0);
  if (c2 > 0.0) {
    m.skewness = std::sqrt(n) * c3 / std::pow(c2, 1.5);
    m.excess_kurtosis = n * c4 / (c2 * c2) - 3.0;
  }
  return m;
}

double ks_normal_distance(std::span<const double> x) {
  const Moments m = two_pass_moments(x);
  if (!(m.variance > 0.0)) throw std::invalid_argument("normality test: degenerate (zero) variance");
  std::vector<double> z(x.begin(), x.end());
  std::sort(z.begin(), z.end());
  const double sd = std::sqrt(m.variance);
  const auto n = static_cast<double>(z.size());
  double d = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double f = normal_cdf((z[i] - m.mean) / sd);
    d = std::max({d, static_cast<double>(i + 1) / n - f, f - static_cast<double>(i) / n});
  }
  return d;
}

LillieforsTable::LillieforsTable(std::size_t sample_size, int resamples, std::uint64_t seed)
    : sample_size_(sample_size) {
  if (sample_size < 3 || resamples < 1) throw std::invalid_argument("LillieforsTable: need >= 3 samples and >= 1 resample");
  null_.resize(static_cast<std::size_t>(resamples));
  std::vector<double> buf(sample_size);
  for (int b = 0; b < resamples; ++b) {
    RandomStream rng(derive_seed(seed, static_cast<std::uint64_t>(b), kLillieforsPurpose));
    std::normal_distribution<double> normal;
    for (auto& v : buf) v = normal(rng);
    null_[static_cast<std::size_t>(b)] = ks_normal_distance(buf);
  }
  std::sort(null_.begin(), null_.end());
}

double LillieforsTable::p_value(double d) const {
  const auto above = null_.end() - std::lower_bound(null_.begin(), null_.end(), d);
  return static_cast<double>(1 + above) / static_cast<double>(null_.size() + 1);
}

std::shared_ptr<const LillieforsTable> LillieforsTable::cached(std::size_t sample_size, int resamples,
                                                               std::uint64_t seed) {
  static std::mutex mutex;
  static std::map<std::tuple<std::size_t, int, std::uint64_t>, std::shared_ptr<const LillieforsTable>> tables;
  const auto key = std::make_tuple(sample_size, resamples, seed);
  std::lock_guard lock(mutex);
  auto& slot = tables[key];
  if (!slot) slot = std::make_shared<const LillieforsTable>(sample_size, resamples, seed);
  return slot;
}

NormalityReport normality_report(std::span<const double> x, std::uint64_t seed, int resamples) {
  if (x.size() < 3) throw std::invalid_argument("normality_report: need at least 3 samples");
  const Moments m = two_pass_moments(x);
  if (!(m.variance > 0.0)) throw std::invalid_argument("normality_report: degenerate (zero) variance");
  NormalityReport r;
  const auto n = static_cast<double>(x.size());
  r.ks_statistic = ks_normal_distance(x);
  r.ks_pvalue = LillieforsTable::cached(x.size(), resamples, seed)->p_value(r.ks_statistic);
  r.skewness_z = m.skewness / std::sqrt(6.0 / n);
  r.kurtosis_z = m.excess_kurtosis / std::sqrt(24.0 / n);
  return r;
}

LogLogFit fit_loglog(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw std::invalid_argument("fit_loglog: need >= 2 matching points");
  const auto n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!(x[i] > 0.0 && y[i] > 0.0)) throw std::invalid_argument("fit_loglog: inputs must be positive");
    const double lx = std::log(x[i]), ly = std::log(y[i]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    syy += ly * ly;
  }
  const double vx = sxx - sx * sx / n, vy = syy - sy * sy / n, cxy = sxy - sx * sy / n;
  if (!(vx > 0.0)) throw std::invalid_argument("fit_loglog: x values must differ");
  LogLogFit f;
  f.slope = cxy / vx;
  f.intercept = (sy - f.slope * sx) / n;
  f.r2 = vy > 0.0 ? cxy * cxy / (vx * vy) : 1.0;
  return f;
}

ScalingResult scaling_regression(std::span<const double> x, const Eigen::MatrixXd& values, std::uint64_t seed,
                                 int resamples, double level) {
  if (x.size() < 3) throw std::invalid_argument("scaling_regression: need at least 3 points");
  if (values.cols() != static_cast<Eigen::Index>(x.size()))
    throw std::invalid_argument("scaling_regression: one column of replica values per point");
  const Eigen::Index rows = values.rows();
  if (rows < 2) throw std::invalid_argument("scaling_regression: need at least 2 replicas");
  ScalingResult r;
  r.x.assign(x.begin(), x.end());
  const Eigen::RowVectorXd mean = values.colwise().mean();
  r.y.assign(mean.data(), mean.data() + mean.size());
  r.fit = fit_loglog(r.x, r.y);
  r.resamples = resamples;

  std::vector<double> slopes;
  slopes.reserve(static_cast<std::size_t>(resamples));
  Eigen::RowVectorXd sum(values.cols());
  std::vector<double> ys(x.size());
  for (int b = 0; b < resamples; ++b) {
    RandomStream rng(derive_seed(seed, static_cast<std::uint64_t>(b), kBootstrapPurpose));
    sum.setZero();
    for (Eigen::Index i = 0; i < rows; ++i) sum += values.row(rng.below(static_cast<std::uint32_t>(rows)));
    bool positive = true;
    for (std::size_t j = 0; j < ys.size(); ++j) {
      ys[j] = sum(static_cast<Eigen::Index>(j)) / static_cast<double>(rows);
      positive = positive && ys[j] > 0.0;
    }
    if (positive) slopes.push_back(fit_loglog(r.x, ys).slope);
  }
  if (!slopes.empty()) {
    std::sort(slopes.begin(), slopes.end());
    const auto quantile = [&](double p) {
      const double pos = p * static_cast<double>(slopes.size() - 1);
      const auto i = static_cast<std::size_t>(pos);
      const double a = pos - static_cast<double>(i);
      return i + 1 < slopes.size() ? (1 - a) * slopes[i] + a * slopes[i + 1] : slopes[i];
    };
    r.ci_low = quantile(0.5 * (1.0 - level));
    r.ci_high = quantile(0.5 * (1.0 + level));
  }
  return r;
}

ObservableSummary summarize(std::span<const double> x, std::optional<std::uint64_t> normality_seed, int resamples) {
  ObservableSummary s;
  const Moments m = two_pass_moments(x);
  s.count = m.count;
  s.mean = m.mean;
  s.variance = m.variance;
  s.skewness = m.skewness;
  s.excess_kurtosis = m.excess_kurtosis;
  if (m.count > 0) s.std_error = std::sqrt(m.variance / static_cast<double>(m.count));
  if (m.count > 3) {
    const auto n = static_cast<double>(m.count);
    double c4 = 0.0;
    for (double v : x) c4 += std::pow(v - m.mean, 4);
    c4 /= n;
    const double var_s2 = (c4 - (n - 3.0) / (n - 1.0) * m.variance * m.variance) / n;
    s.variance_std_error = std::sqrt(std::max(0.0, var_s2));
  }
  if (normality_seed && m.variance > 0.0 && m.count >= 3) s.normality = normality_report(x, *normality_seed, resamples);
  return s;
}

int default_jobs() {
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

Eigen::MatrixXd run_replicas(std::size_t count, std::uint64_t master_seed, Eigen::Index columns,
                             const std::function<void(ReplicaContext&, Eigen::Ref<Eigen::RowVectorXd>)>& fn,
                             int jobs) {
  if (jobs <= 0) jobs = default_jobs();
  jobs = static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(jobs), std::max<std::size_t>(count, 1)));
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(count), columns);
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::mutex error_mutex;
  std::size_t error_index = count;
  std::string error_message;

  const auto worker = [&] {
    Eigen::RowVectorXd row(columns);
    for (;;) {
      const std::size_t r = next.fetch_add(1);
      if (r >= count || failed.load()) return;
      ReplicaContext ctx{r, derive_seed(master_seed, r), RandomStream(derive_seed(master_seed, r, kAuxPurpose))};
      try {
        row.setZero();
        fn(ctx, row);
        out.row(static_cast<Eigen::Index>(r)) = row;
      } catch (const std::exception& e) {
        std::lock_guard lock(error_mutex);
        if (r < error_index) {
          error_index = r;
          std::ostringstream os;
          os << "replica " << r << " (seed " << ctx.seed << ") failed: " << e.what();
          error_message = os.str();
        }
        failed.store(true);
      }
    }
  };
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    for (int j = 0; j < jobs; ++j) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  if (failed.load()) throw std::runtime_error(error_message);
  return out;
}

Eigen::Index EnsembleResult::column(const std::string& name) const {
  auto it = std::find(names.begin(), names.end(), name);
  if (it == names.end()) throw std::out_of_range("ensemble has no column " + name);
  return it - names.begin();
}

std::span<const double> EnsembleResult::values(const std::string& name) const {
  const Eigen::Index c = column(name);
  return {samples.data() + c * samples.rows(), static_cast<std::size_t>(samples.rows())};
}

EnsembleResult run_ensemble(const ModelSpec& spec, std::size_t replicas, std::uint64_t seed,
                            const EventSchedule& schedule, std::shared_ptr<const ObserverSet> observers,
                            const EnsemblePlan& plan, int jobs) {
  EnsembleResult res;
  res.replicas = replicas;
  res.master_seed = seed;
  for (const auto& c : plan.columns) res.names.push_back(c.name);
  std::atomic<std::uint64_t> events{0};
  std::mutex record_mutex;
  RunOptions options;
  options.observers = std::move(observers);
  res.samples = run_replicas(
      replicas, seed, static_cast<Eigen::Index>(plan.columns.size()),
      [&](ReplicaContext& ctx, Eigen::Ref<Eigen::RowVectorXd> row) {
        const TrajectoryRecord rec = run_replica(spec, ctx.seed, schedule, options);
        events.fetch_add(rec.clock.event_count);
        for (std::size_t i = 0; i < plan.columns.size(); ++i)
          row(static_cast<Eigen::Index>(i)) = plan.columns[i].value(rec);
        if (plan.on_record) {
          std::lock_guard lock(record_mutex);
          plan.on_record(rec);
        }
      },
      jobs);
  res.events = events.load();
  return res;
}

std::string gamma_column(double t) { return "Gamma[t=" + format_time(t) + "]"; }

Extractor gamma_at(const ModelSpec& spec, double t) {
  return {gamma_column(t), [spec, t](const TrajectoryRecord& rec) { return occupation_time_origin(rec, spec, t); }};
}

Extractor field_at(const std::string& test_function, double t) {
  const std::string col = field_column(test_function);
  return {col + "[t=" + format_time(t) + "]", [col, t](const TrajectoryRecord& rec) {
            return rec.snapshot_values(static_cast<Eigen::Index>(snapshot_index(rec, t)), rec.snapshot_column(col));
          }};
}

Extractor z_at(double eps, double t, ZQuadrature quadrature) {
  const std::string suffix = quadrature == ZQuadrature::trapezoid ? "[trapezoid]" : "";
  return {z_column(eps) + "[t=" + format_time(t) + "]" + suffix,
          [eps, t, quadrature](const TrajectoryRecord& rec) { return z_discrete(rec, eps, t, quadrature); }};
}

Extractor dynkin_at(double t) {
  return {"M[t=" + format_time(t) + "]",
          [t](const TrajectoryRecord& rec) { return rec.dynkin_martingale(snapshot_index(rec, t)); }};
}

nlohmann::json to_json(const ObservableSummary& s) {
  nlohmann::json j = {{"count", s.count},
                      {"mean", s.mean},
                      {"variance", s.variance},
                      {"std_error", s.std_error},
                      {"variance_std_error", s.variance_std_error},
                      {"skewness", s.skewness},
                      {"excess_kurtosis", s.excess_kurtosis}};
  if (s.normality)
    j["normality"] = {{"ks_statistic", s.normality->ks_statistic},
                      {"ks_pvalue", s.normality->ks_pvalue},
                      {"skewness_z", s.normality->skewness_z},
                      {"kurtosis_z", s.normality->kurtosis_z}};
  return j;
}

nlohmann::json to_json(const ScalingResult& s) {
  return {{"slope", s.fit.slope}, {"intercept", s.fit.intercept}, {"r2", s.fit.r2}, {"x", s.x},
          {"y", s.y},         {"ci_low", s.ci_low},             {"ci_high", s.ci_high}, {"resamples", s.resamples}};
}

nlohmann::json EnsembleSummary::to_json() const {
  nlohmann::json j;
  j["replicas"] = replicas;
  j["observables"] = nlohmann::json::object();
  for (const auto& [name, s] : observables) j["observables"][name] = wasep::to_json(s);
  j["regressions"] = nlohmann::json::object();
  for (const auto& [name, s] : regressions) j["regressions"][name] = wasep::to_json(s);
  j["manifest"] = manifest;
  if (!extra.empty()) j["extra"] = extra;
  return j;
}

}  // namespace wasep
