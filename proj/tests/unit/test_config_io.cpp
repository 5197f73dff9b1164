#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "wasep/config.hpp"
#include "wasep/io.hpp"

using namespace wasep;

namespace {

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("minimal config fills documented defaults") {
  const ExperimentConfig c = parse_config_string("[model]\nn = 128\nT = 0.2\n");
  CHECK(c.model.n == 128);
  CHECK(c.model.horizon == 0.2);
  CHECK(c.model.drift(0.3) == 0.0);
  CHECK(c.model.initial_profile(0.3) == 0.5);
  CHECK(c.model.time_weight(0.3) == 1.0);
  CHECK(c.run.replicas == 2000);
  CHECK(c.observables.lambda == 1.5);
  CHECK(c.verify.suites.empty());
  CHECK(c.hash().size() == 16);
}

TEST_CASE("config validation errors carry line numbers") {
  try {
    parse_config_string("[model]\nn = 64\neps0 = 0.6\n");
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("eps0") != std::string::npos);
    CHECK(std::string(e.what()).find("3") != std::string::npos);
  }
  CHECK_THROWS_AS(parse_config_string("[model]\nn = 64\nbogus = 1\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_string("[nonsense]\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_string("[observables]\nlambda = 2.5\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_string("[model]\nF = { family = \"wavelet\" }\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_string("[model\n"), ConfigError);
  CHECK_THROWS_AS(parse_config_string("[verify.tolerances]\nnot_a_tolerance = 1\n"), ConfigError);
}

TEST_CASE("hash is stable under key reordering and round trips") {
  const std::string a = R"([model]
n = 64
T = 0.1
F = { family = "fourier", k = 1, sin = 1.0 }
rho0 = { family = "fourier", offset = 0.5, k = 1, cos = 0.2 }
[run]
M = 100
seed = 5
[verify]
suites = ["brute-force"]
[verify.tolerances]
total_variation = 0.02
)";
  const std::string b = R"([run]
seed = 5
M = 100
[verify]
suites = ["brute-force"]
tolerances = { total_variation = 0.02 }
[model]
rho0 = { cos = 0.2, k = 1, offset = 0.5, family = "fourier" }
F = { sin = 1.0, family = "fourier", k = 1 }
T = 0.1
n = 64
)";
  const ExperimentConfig ca = parse_config_string(a), cb = parse_config_string(b);
  CHECK(ca.hash() == cb.hash());
  CHECK(ca.to_json().dump() == cb.to_json().dump());
  const ExperimentConfig back = config_from_json(ca.to_json());
  CHECK(back.hash() == ca.hash());
  CHECK(ca.hash() != parse_config_string("[model]\nn = 64\n").hash());
  CHECK(ca.model_spec().drift(0.25) == doctest::Approx(1.0));
  for (const auto& f : {SmoothFunction::bump(0.4, 0.1, 0.3, 0.2), SmoothFunction::fourier_sum(0.5, {0.1}, {0.0, 0.05})})
    CHECK(function_from_json(function_to_json(f)).describe() == f.describe());
}

TEST_CASE("config file parsing") {
  const auto p = std::filesystem::temp_directory_path() / "wasep_cfg_test.toml";
  {
    std::ofstream out(p);
    out << "[model]\nn = 32\n";
  }
  CHECK(parse_config(p).model.n == 32);
  std::filesystem::remove(p);
  CHECK_THROWS_AS(parse_config(p), ConfigError);
}

TEST_CASE("sha256 known answer") {
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("number formatting round trips") {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, -2.5e17, 0.0}) CHECK(std::stod(format_double(v)) == v);
  CHECK(format_double(0.5) == "0.5");
}

TEST_CASE("CSV output follows RFC 4180") {
  const auto p = std::filesystem::temp_directory_path() / "wasep_csv_test.csv";
  {
    CsvWriter w(p, {"a", "b"});
    w.row(std::vector<std::string>{"x,y", "say \"hi\""});
    w.row(std::vector<double>{0.25, 3.0});
    CHECK_THROWS_AS(w.row(std::vector<double>{1.0}), std::invalid_argument);
  }
  CHECK(slurp(p) == "a,b\r\n\"x,y\",\"say \"\"hi\"\"\"\r\n0.25,3\r\n");
  std::filesystem::remove(p);
}

TEST_CASE("output layout and manifest") {
  const auto root = std::filesystem::temp_directory_path() / "wasep_layout_test";
  std::filesystem::remove_all(root);
  const ExperimentConfig c = parse_config_string("[model]\nn = 32\n");
  const OutputLayout out(root, c.hash());
  CHECK(std::filesystem::is_directory(out.dir() / "tables"));
  CHECK(out.table("x").filename() == "x.csv");
  const nlohmann::json m = make_manifest(c);
  CHECK(m.at("config_hash") == c.hash());
  CHECK(m.at("master_seed") == c.run.seed);
  CHECK(m.at("mollifier_constant").get<double>() > 100);
  write_json(out.manifest(), m);
  CHECK(nlohmann::json::parse(slurp(out.manifest())) == m);
  std::filesystem::remove_all(root);
}
