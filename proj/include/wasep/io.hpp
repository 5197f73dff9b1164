#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wasep/config.hpp"
#include "wasep/hydro.hpp"
#include "wasep/kmc.hpp"

namespace wasep {

/// Shortest decimal string that round-trips, '.' separator regardless of locale.
std::string format_double(double v);

/// RFC-4180 writer: CRLF line ends, fields quoted when they contain ',', '"', CR or LF.
class CsvWriter {
 public:
  CsvWriter(const std::filesystem::path& path, const std::vector<std::string>& header);
  void row(const std::vector<std::string>& fields);
  void row(const std::vector<double>& values);

  static std::string escape(const std::string& field);

 private:
  std::ofstream out_;
  std::size_t columns_;
};

/// Writes `j` with sorted keys, two-space indent and a trailing newline.
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

/// $WASEP_OUT_DIR if set, else "out".
std::filesystem::path output_root();

/// out/<hash>/{manifest.json, summary.json, tables/, fields/, cache/}.
class OutputLayout {
 public:
  OutputLayout(const std::filesystem::path& root, const std::string& config_hash);
  const std::filesystem::path& dir() const { return dir_; }
  std::filesystem::path manifest() const { return dir_ / "manifest.json"; }
  std::filesystem::path summary() const { return dir_ / "summary.json"; }
  std::filesystem::path report() const { return dir_ / "report.json"; }
  std::filesystem::path table(const std::string& name) const;
  std::filesystem::path field(const std::string& name) const;
  std::filesystem::path cache(const std::string& name) const;

 private:
  std::filesystem::path dir_;
};

/// Reproducibility metadata: config hash and canonical config, master seed, seed derivation,
/// library versions and the mollifier constant.
nlohmann::json make_manifest(const ExperimentConfig& config);

/// Long-format (config_hash, seed, t, u, rho) export, keeping every `stride`-th stored slice.
void write_density_csv(const std::filesystem::path& path, const DensityField& density, const std::string& config_hash,
                       std::uint64_t seed, Eigen::Index stride = 1);

/// Per-snapshot trajectory table: t, eta0, Gamma, then every snapshot and integrated observable.
void write_trajectory_csv(const std::filesystem::path& path, const TrajectoryRecord& record, const ModelSpec& spec,
                          const std::string& config_hash, std::uint64_t master_seed);

}  // namespace wasep
