#include "wasep/io.hpp"

#include <charconv>
#include <cstdlib>
#include <stdexcept>

#include <Eigen/Core>

#include "wasep/observables.hpp"

namespace wasep {

std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

CsvWriter::CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header)
    : out_(path, std::ios::binary), columns_(header.size()) {
  if (!out_) throw std::runtime_error("cannot write " + path.string());
  row(header);
}

std::string CsvWriter::escape(const std::string& field) {
  if (field.find_first_of(",\"\r\n") == std::string::npos) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

void CsvWriter::row(const std::vector<std::string>& fields) {
  if (fields.size() != columns_) throw std::invalid_argument("CsvWriter: row width differs from header");
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i) out_ << ',';
    out_ << escape(fields[i]);
  }
  out_ << "\r\n";
}

void CsvWriter::row(const std::vector<double>& values) {
  std::vector<std::string> fields;
  fields.reserve(values.size());
  for (double v : values) fields.push_back(format_double(v));
  row(fields);
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::filesystem::path output_root() {
  if (const char* env = std::getenv("WASEP_OUT_DIR"); env && *env) return env;
  return "out";
}

OutputLayout::OutputLayout(const std::filesystem::path& root, const std::string& config_hash)
    : dir_(root / config_hash) {
  for (const char* sub : {"tables", "fields", "cache"}) std::filesystem::create_directories(dir_ / sub);
}

std::filesystem::path OutputLayout::table(const std::string& name) const { return dir_ / "tables" / (name + ".csv"); }
std::filesystem::path OutputLayout::field(const std::string& name) const { return dir_ / "fields" / (name + ".csv"); }
std::filesystem::path OutputLayout::cache(const std::string& name) const { return dir_ / "cache" / name; }

nlohmann::json make_manifest(const ExperimentConfig& config) {
  return {
      {"config_hash", config.hash()},
      {"config", config.to_json()},
      {"master_seed", config.run.seed},
      {"rng",
       {{"engine", "xoshiro256++"},
        {"seeding", "splitmix64 expansion"},
        {"replica_seed", "derive_seed(master_seed, replica_index, purpose)"}}},
      {"versions",
       {{"wasep", WASEP_VERSION},
        {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                      std::to_string(EIGEN_MINOR_VERSION)},
        {"compiler", __VERSION__},
        {"json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." + std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                     std::to_string(NLOHMANN_JSON_VERSION_PATCH)}}},
      {"mollifier_constant", Mollifier::normalization()},
  };
}

void write_density_csv(const std::filesystem::path& path, const DensityField& density, const std::string& config_hash,
                       std::uint64_t seed, Eigen::Index stride) {
  CsvWriter csv(path, {"config_hash", "seed", "t", "u", "rho"});
  const Eigen::Index m = density.grid_size();
  const std::string seed_text = std::to_string(seed);
  const auto& times = density.times();
  stride = std::max<Eigen::Index>(1, stride);
  for (Eigen::Index k = 0; k < times.size(); ++k) {
    if (k % stride != 0 && k + 1 != times.size()) continue;
    for (Eigen::Index j = 0; j < m; ++j)
      csv.row(std::vector<std::string>{config_hash, seed_text, format_double(times(k)),
                                       format_double(static_cast<double>(j) / static_cast<double>(m)),
                                       format_double(density.values()(j, k))});
  }
}

void write_trajectory_csv(const std::filesystem::path& path, const TrajectoryRecord& record, const ModelSpec& spec,
                          const std::string& config_hash, std::uint64_t master_seed) {
  std::vector<std::string> header{"config_hash", "master_seed", "replica_seed", "t", "eta0", "Gamma"};
  for (const auto& name : record.integral_names) header.push_back(name);
  for (const auto& name : record.snapshot_names) header.push_back(name);
  CsvWriter csv(path, header);
  const bool has_density = record.observers && record.observers->density;
  for (std::size_t k = 0; k < record.times.size(); ++k) {
    std::vector<std::string> row{config_hash, std::to_string(master_seed), std::to_string(record.seed),
                                 format_double(record.times[k]), std::to_string(record.eta0[k])};
    row.push_back(has_density ? format_double(occupation_time_origin(record, spec, record.times[k])) : "");
    for (const auto& name : record.integral_names) row.push_back(format_double(record.centred_integral(name, k)));
    for (Eigen::Index c = 0; c < record.snapshot_values.cols(); ++c)
      row.push_back(format_double(record.snapshot_values(static_cast<Eigen::Index>(k), c)));
    csv.row(row);
  }
}

}  // namespace wasep
