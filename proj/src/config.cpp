#include "wasep/config.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include <openssl/evp.h>
#include <toml.hpp>

namespace wasep {

namespace {

std::string where(const toml::node& node, const std::string& source) {
  std::ostringstream os;
  os << source;
  if (node.source().begin.line > 0) os << ":" << node.source().begin.line;
  return os.str();
}

[[noreturn]] void fail(const toml::node& node, const std::string& source, const std::string& message) {
  throw ConfigError(where(node, source) + ": " + message);
}

/// Walks one table, rejecting keys outside `allowed`.
class Section {
 public:
  Section(const toml::table& table, std::string name, std::string source, std::set<std::string> allowed)
      : table_(table), name_(std::move(name)), source_(std::move(source)) {
    for (auto&& [key, node] : table_) {
      if (!allowed.count(std::string(key.str())))
        fail(node, source_, "unknown key '" + std::string(key.str()) + "' in " + name_);
    }
  }

  const toml::node* find(const std::string& key) const { return table_.get(key); }

  double number(const std::string& key, double fallback) const {
    const toml::node* n = find(key);
    if (!n) return fallback;
    if (auto v = n->value<double>()) return *v;
    fail(*n, source_, name_ + "." + key + " must be a number");
  }

  std::int64_t integer(const std::string& key, std::int64_t fallback) const {
    const toml::node* n = find(key);
    if (!n) return fallback;
    if (auto v = n->as_integer()) return v->get();
    fail(*n, source_, name_ + "." + key + " must be an integer");
  }

  bool boolean(const std::string& key, bool fallback) const {
    const toml::node* n = find(key);
    if (!n) return fallback;
    if (auto v = n->as_boolean()) return v->get();
    fail(*n, source_, name_ + "." + key + " must be a boolean");
  }

  std::vector<double> numbers(const std::string& key, std::vector<double> fallback) const {
    const toml::node* n = find(key);
    if (!n) return fallback;
    const toml::array* arr = n->as_array();
    if (!arr) fail(*n, source_, name_ + "." + key + " must be an array of numbers");
    std::vector<double> out;
    for (auto&& item : *arr) {
      auto v = item.value<double>();
      if (!v) fail(item, source_, name_ + "." + key + " must contain numbers only");
      out.push_back(*v);
    }
    return out;
  }

  std::vector<std::string> strings(const std::string& key, std::vector<std::string> fallback) const {
    const toml::node* n = find(key);
    if (!n) return fallback;
    const toml::array* arr = n->as_array();
    if (!arr) fail(*n, source_, name_ + "." + key + " must be an array of strings");
    std::vector<std::string> out;
    for (auto&& item : *arr) {
      auto v = item.value<std::string>();
      if (!v) fail(item, source_, name_ + "." + key + " must contain strings only");
      out.push_back(*v);
    }
    return out;
  }

  void require(bool ok, const std::string& key, const std::string& message) const {
    if (ok) return;
    const toml::node* n = find(key);
    if (n) fail(*n, source_, name_ + "." + key + " " + message);
    throw ConfigError(source_ + ": " + name_ + "." + key + " " + message);
  }

  const std::string& source() const { return source_; }
  const std::string& name() const { return name_; }

 private:
  const toml::table& table_;
  std::string name_;
  std::string source_;
};

const toml::table* subtable(const toml::table& root, const std::string& key, const std::string& source) {
  const toml::node* n = root.get(key);
  if (!n) return nullptr;
  if (!n->is_table()) fail(*n, source, "'" + key + "' must be a table");
  return n->as_table();
}

SmoothFunction parse_function(const toml::node& node, const std::string& name, const std::string& source) {
  if (auto v = node.value<double>()) return SmoothFunction::constant(*v);
  const toml::table* t = node.as_table();
  if (!t) fail(node, source, name + " must be a number or a table with a 'family' key");
  const toml::node* fam = t->get("family");
  if (!fam || !fam->is_string()) fail(node, source, name + ".family is required");
  const std::string family = fam->value<std::string>().value();
  try {
    if (family == "constant") {
      Section s(*t, name, source, {"family", "value"});
      return SmoothFunction::constant(s.number("value", 0.0));
    }
    if (family == "fourier") {
      Section s(*t, name, source, {"family", "offset", "k", "cos", "sin"});
      return SmoothFunction::fourier(s.number("offset", 0.0), static_cast<int>(s.integer("k", 1)),
                                     s.number("cos", 0.0), s.number("sin", 0.0));
    }
    if (family == "fourier_sum") {
      Section s(*t, name, source, {"family", "offset", "cos", "sin"});
      return SmoothFunction::fourier_sum(s.number("offset", 0.0), s.numbers("cos", {}), s.numbers("sin", {}));
    }
    if (family == "bump") {
      Section s(*t, name, source, {"family", "offset", "amplitude", "center", "width"});
      return SmoothFunction::bump(s.number("offset", 0.0), s.number("amplitude", 0.0), s.number("center", 0.5),
                                  s.number("width", 0.25));
    }
  } catch (const std::invalid_argument& e) {
    fail(node, source, name + ": " + e.what());
  }
  fail(*fam, source, name + ": unknown family '" + family + "' (constant, fourier, fourier_sum, bump)");
}

}  // namespace

const std::map<std::string, double>& default_tolerances() {
  static const std::map<std::string, double> table = {
      {"hydro_max_error", 0.02},       {"pde_ratio_tolerance", 0.5}, {"energy_relative", 1e-6},
      {"var_field_absolute", 1e-3},    {"field_variance_relative", 0.08}, {"ks_pvalue", 0.01},
      {"moment_z", 3.0},               {"gamma_variance_relative", 0.15}, {"spde_standard_errors", 3.0},
      {"replacement_slope_low", 0.5},  {"replacement_slope_high", 1.0},   {"replacement_dominance", 1.25},
      {"holder_slope_low", 0.9},       {"holder_slope_high", 1.35},       {"total_variation", 0.01},
      {"dynkin_relative", 0.10},
  };
  return table;
}

ModelSpec ExperimentConfig::model_spec() const {
  try {
    return ModelSpec::make(model.n, model.drift, model.initial_profile, model.time_weight, model.horizon,
                           model.eps0);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

ExperimentConfig parse_config_string(const std::string& text, const std::string& source) {
  toml::table root;
  try {
    root = toml::parse(text, source);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << source << ":" << e.source().begin.line << ": " << e.description();
    throw ConfigError(os.str());
  }
  const Section top(root, "config", source, {"model", "run", "observables", "oracle", "verify"});
  ExperimentConfig cfg;

  if (const toml::table* t = subtable(root, "model", source)) {
    Section s(*t, "model", source, {"n", "T", "eps0", "F", "rho0", "q"});
    cfg.model.n = static_cast<int>(s.integer("n", cfg.model.n));
    s.require(cfg.model.n >= 4, "n", "must be >= 4");
    cfg.model.horizon = s.number("T", cfg.model.horizon);
    s.require(cfg.model.horizon > 0.0, "T", "must be positive");
    cfg.model.eps0 = s.number("eps0", cfg.model.eps0);
    s.require(cfg.model.eps0 > 0.0 && cfg.model.eps0 < 0.5, "eps0", "must lie in (0, 1/2)");
    if (auto n = s.find("F")) cfg.model.drift = parse_function(*n, "model.F", source);
    if (auto n = s.find("rho0")) cfg.model.initial_profile = parse_function(*n, "model.rho0", source);
    if (auto n = s.find("q")) cfg.model.time_weight = parse_function(*n, "model.q", source);
    try {
      cfg.model_spec();
    } catch (const ConfigError& e) {
      fail(*root.get("model"), source, e.what());
    }
  }
  if (const toml::table* t = subtable(root, "run", source)) {
    Section s(*t, "run", source, {"M", "seed", "dt", "dump_trajectories"});
    const auto m = s.integer("M", static_cast<std::int64_t>(cfg.run.replicas));
    s.require(m >= 2, "M", "must be >= 2");
    cfg.run.replicas = static_cast<std::size_t>(m);
    const auto seed = s.integer("seed", static_cast<std::int64_t>(cfg.run.seed));
    s.require(seed >= 0, "seed", "must be nonnegative");
    cfg.run.seed = static_cast<std::uint64_t>(seed);
    cfg.run.dt = s.number("dt", cfg.run.dt);
    s.require(cfg.run.dt >= 0.0 && cfg.run.dt <= cfg.model.horizon, "dt", "must lie in [0, T]");
    cfg.run.dump_trajectories = s.boolean("dump_trajectories", cfg.run.dump_trajectories);
  }
  if (const toml::table* t = subtable(root, "observables", source)) {
    Section s(*t, "observables", source, {"test_functions", "eps_ladder", "lambda"});
    cfg.observables.test_functions = s.strings("test_functions", cfg.observables.test_functions);
    cfg.observables.eps_ladder = s.numbers("eps_ladder", cfg.observables.eps_ladder);
    s.require(cfg.observables.eps_ladder.size() >= 2, "eps_ladder", "needs at least two widths");
    for (double e : cfg.observables.eps_ladder) s.require(e > 0.0 && e < 1.0, "eps_ladder", "entries must lie in (0, 1)");
    cfg.observables.lambda = s.number("lambda", cfg.observables.lambda);
    s.require(cfg.observables.lambda > 1.0 && cfg.observables.lambda < 2.0, "lambda", "must lie in (1, 2)");
  }
  if (const toml::table* t = subtable(root, "oracle", source)) {
    Section s(*t, "oracle", source, {"m", "dt_pde", "quad_k"});
    cfg.oracle.m = static_cast<int>(s.integer("m", cfg.oracle.m));
    s.require(cfg.oracle.m == 0 || cfg.oracle.m >= 32, "m", "must be 0 (automatic) or >= 32");
    cfg.oracle.dt_pde = s.number("dt_pde", cfg.oracle.dt_pde);
    s.require(cfg.oracle.dt_pde >= 0.0, "dt_pde", "must be nonnegative");
    cfg.oracle.quad_k = static_cast<int>(s.integer("quad_k", cfg.oracle.quad_k));
    s.require(cfg.oracle.quad_k >= 1 && cfg.oracle.quad_k <= 64, "quad_k", "must lie in [1, 64]");
  }
  if (const toml::table* t = subtable(root, "verify", source)) {
    Section s(*t, "verify", source, {"suites", "budget_events", "replica_scale", "spde_check", "tolerances"});
    cfg.verify.suites = s.strings("suites", {});
    cfg.verify.budget_events = s.number("budget_events", cfg.verify.budget_events);
    s.require(cfg.verify.budget_events > 0.0, "budget_events", "must be positive");
    cfg.verify.replica_scale = s.number("replica_scale", cfg.verify.replica_scale);
    s.require(cfg.verify.replica_scale > 0.0, "replica_scale", "must be positive");
    cfg.verify.spde_check = s.boolean("spde_check", cfg.verify.spde_check);
    if (const toml::table* tol = subtable(*t, "tolerances", source)) {
      for (auto&& [key, node] : *tol) {
        const std::string k(key.str());
        if (!default_tolerances().count(k)) fail(node, source, "unknown tolerance '" + k + "'");
        auto v = node.value<double>();
        if (!v) fail(node, source, "verify.tolerances." + k + " must be a number");
        cfg.verify.tolerances[k] = *v;
      }
    }
  }
  return cfg;
}

ExperimentConfig parse_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config_string(text.str(), path.string());
}

nlohmann::json function_to_json(const SmoothFunction& f) {
  using Family = SmoothFunction::Family;
  switch (f.family()) {
    case Family::constant:
      return {{"family", "constant"}, {"value", f.offset()}};
    case Family::fourier: {
      const auto k = f.cos_amplitudes().size();
      return {{"family", "fourier"},
              {"offset", f.offset()},
              {"k", k},
              {"cos", f.cos_amplitudes().back()},
              {"sin", f.sin_amplitudes().back()}};
    }
    case Family::fourier_sum:
      return {{"family", "fourier_sum"}, {"offset", f.offset()}, {"cos", f.cos_amplitudes()}, {"sin", f.sin_amplitudes()}};
    case Family::bump:
      return {{"family", "bump"},
              {"offset", f.offset()},
              {"amplitude", f.amplitude()},
              {"center", f.center()},
              {"width", f.width()}};
  }
  return {};
}

SmoothFunction function_from_json(const nlohmann::json& j) {
  const std::string family = j.at("family");
  if (family == "constant") return SmoothFunction::constant(j.at("value"));
  if (family == "fourier") return SmoothFunction::fourier(j.at("offset"), j.at("k"), j.at("cos"), j.at("sin"));
  if (family == "fourier_sum")
    return SmoothFunction::fourier_sum(j.at("offset"), j.at("cos").get<std::vector<double>>(),
                                       j.at("sin").get<std::vector<double>>());
  if (family == "bump") return SmoothFunction::bump(j.at("offset"), j.at("amplitude"), j.at("center"), j.at("width"));
  throw ConfigError("unknown function family '" + family + "'");
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json tolerances = nlohmann::json::object();
  for (const auto& [k, v] : verify.tolerances) tolerances[k] = v;
  return {
      {"model",
       {{"n", model.n},
        {"T", model.horizon},
        {"eps0", model.eps0},
        {"F", function_to_json(model.drift)},
        {"rho0", function_to_json(model.initial_profile)},
        {"q", function_to_json(model.time_weight)}}},
      {"run", {{"M", run.replicas}, {"seed", run.seed}, {"dt", run.dt}, {"dump_trajectories", run.dump_trajectories}}},
      {"observables",
       {{"test_functions", observables.test_functions},
        {"eps_ladder", observables.eps_ladder},
        {"lambda", observables.lambda}}},
      {"oracle", {{"m", oracle.m}, {"dt_pde", oracle.dt_pde}, {"quad_k", oracle.quad_k}}},
      {"verify",
       {{"suites", verify.suites},
        {"budget_events", verify.budget_events},
        {"replica_scale", verify.replica_scale},
        {"spde_check", verify.spde_check},
        {"tolerances", tolerances}}},
  };
}

ExperimentConfig config_from_json(const nlohmann::json& j) {
  ExperimentConfig c;
  const auto& m = j.at("model");
  c.model.n = m.at("n");
  c.model.horizon = m.at("T");
  c.model.eps0 = m.at("eps0");
  c.model.drift = function_from_json(m.at("F"));
  c.model.initial_profile = function_from_json(m.at("rho0"));
  c.model.time_weight = function_from_json(m.at("q"));
  const auto& r = j.at("run");
  c.run.replicas = r.at("M");
  c.run.seed = r.at("seed");
  c.run.dt = r.at("dt");
  c.run.dump_trajectories = r.at("dump_trajectories");
  const auto& o = j.at("observables");
  c.observables.test_functions = o.at("test_functions").get<std::vector<std::string>>();
  c.observables.eps_ladder = o.at("eps_ladder").get<std::vector<double>>();
  c.observables.lambda = o.at("lambda");
  const auto& p = j.at("oracle");
  c.oracle.m = p.at("m");
  c.oracle.dt_pde = p.at("dt_pde");
  c.oracle.quad_k = p.at("quad_k");
  const auto& v = j.at("verify");
  c.verify.suites = v.at("suites").get<std::vector<std::string>>();
  c.verify.budget_events = v.at("budget_events");
  c.verify.replica_scale = v.at("replica_scale");
  c.verify.spde_check = v.at("spde_check");
  for (const auto& [k, val] : v.at("tolerances").items()) c.verify.tolerances[k] = val.get<double>();
  return c;
}

std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw std::runtime_error("SHA-256 digest failed");
  std::ostringstream os;
  for (unsigned int i = 0; i < len; ++i) os << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return os.str();
}

std::string ExperimentConfig::hash() const { return sha256_hex(to_json().dump()).substr(0, 16); }

}  // namespace wasep
