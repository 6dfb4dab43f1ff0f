#pragma once

#include "effpop/sde.hpp"

#include <json.hpp>

#include <cstdint>
#include <ostream>
#include <string>

namespace effpop {

inline constexpr const char* kToolVersion = "0.1.0";

/// Reads a run configuration. Files ending in .json are parsed as JSON,
/// everything else as TOML; either way the result is a JSON document.
/// Throws ConfigError with the file position on syntax errors.
nlohmann::json load_config(const std::string& path);

/// Parses TOML text into JSON (tables become objects, arrays stay arrays).
nlohmann::json parse_toml(const std::string& text, const std::string& source = "<string>");

/// FNV-1a 64-bit hash of the canonical (sorted-key, compact) JSON dump, as 16 hex digits.
std::string config_hash(const nlohmann::json& config);

/// Fields mirror SimulationConfig: N, K, dt, t_end, clock, seed, replicates,
/// boundary_policy, max_records, threads. Unknown keys throw ConfigError
/// naming the field path (`where`).
SimulationConfig simulation_config_from_json(const nlohmann::json& j, const std::string& where = "simulation");
nlohmann::json to_json(const SimulationConfig& c);

struct Provenance {
  std::string command;
  std::string config_hash;
  std::uint64_t seed = 0;
};

/// "# effpop <version> command=... config_hash=... seed=..." followed by a newline.
void write_provenance_comment(std::ostream& os, const Provenance& p);
nlohmann::json provenance_json(const Provenance& p);

/// Dense matrix from CSV text (one row per line; '#' comments and blank lines skipped).
Matrix parse_matrix_csv(const std::string& text);
Matrix read_matrix_csv(const std::string& path);

/// Shortest representation that round-trips a double, for CSV output.
std::string format_number(double x);

}  // namespace effpop
