#include "effpop/config.hpp"

#include <toml.hpp>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace effpop {

namespace {

nlohmann::json node_to_json(const toml::node& node) {
  if (const auto* t = node.as_table()) {
    nlohmann::json out = nlohmann::json::object();
    for (const auto& [key, value] : *t) out[std::string(key.str())] = node_to_json(value);
    return out;
  }
  if (const auto* a = node.as_array()) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& value : *a) out.push_back(node_to_json(value));
    return out;
  }
  if (const auto* v = node.as_string()) return v->get();
  if (const auto* v = node.as_integer()) return v->get();
  if (const auto* v = node.as_floating_point()) return v->get();
  if (const auto* v = node.as_boolean()) return v->get();
  std::ostringstream os;
  os << node.source().begin;
  throw ConfigError("unsupported TOML value (dates and times are not used) at " + os.str());
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open '" + path + "'");
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

nlohmann::json parse_toml(const std::string& text, const std::string& source) {
  try {
    const toml::table table = toml::parse(text, source);
    return node_to_json(table);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << source << ":" << e.source().begin.line << ":" << e.source().begin.column << ": " << e.description();
    throw ConfigError(os.str());
  }
}

nlohmann::json load_config(const std::string& path) {
  const std::string text = slurp(path);
  const bool is_json = path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0;
  if (!is_json) return parse_toml(text, path);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::string config_hash(const nlohmann::json& config) {
  const std::string canonical = config.dump();  // object keys are stored sorted
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : canonical) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

SimulationConfig simulation_config_from_json(const nlohmann::json& j, const std::string& where) {
  SimulationConfig c;
  if (j.is_null()) return c;
  if (!j.is_object()) throw ConfigError(where + ": expected a table");
  static const std::set<std::string> known{"N",     "K",    "dt",         "t_end",           "clock",
                                           "seed",  "replicates", "boundary_policy", "max_records", "threads"};
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (!known.count(key)) throw ConfigError(where + "." + key + ": unknown field");
  }
  auto num = [&](const char* key, double& out) {
    if (!j.contains(key)) return;
    if (!j[key].is_number()) throw ConfigError(where + "." + key + ": expected a number");
    out = j[key].get<double>();
  };
  auto count = [&](const char* key, auto& out) {
    if (!j.contains(key)) return;
    if (!j[key].is_number_integer() || j[key].get<long long>() < 0) {
      throw ConfigError(where + "." + key + ": expected a nonnegative integer");
    }
    out = static_cast<std::remove_reference_t<decltype(out)>>(j[key].get<unsigned long long>());
  };
  auto text = [&](const char* key) -> std::string {
    if (!j[key].is_string()) throw ConfigError(where + "." + key + ": expected a string");
    return j[key].get<std::string>();
  };
  num("N", c.N);
  count("K", c.K);
  num("dt", c.dt);
  num("t_end", c.t_end);
  count("seed", c.seed);
  count("replicates", c.replicates);
  count("max_records", c.max_records);
  count("threads", c.threads);
  try {
    if (j.contains("clock")) c.clock = clock_from_string(text("clock"));
    if (j.contains("boundary_policy")) c.boundary = boundary_policy_from_string(text("boundary_policy"));
  } catch (const ConfigError& e) {
    throw ConfigError(where + ": " + e.what());
  }
  if (!(c.N > 0.0)) throw ConfigError(where + ".N: must be positive");
  if (c.K == 0) throw ConfigError(where + ".K: must be positive");
  if (c.dt < 0.0) throw ConfigError(where + ".dt: must be nonnegative");
  return c;
}

nlohmann::json to_json(const SimulationConfig& c) {
  return {{"N", c.N},
          {"K", c.K},
          {"dt", c.dt},
          {"t_end", c.t_end},
          {"clock", to_string(c.clock)},
          {"seed", c.seed},
          {"replicates", c.replicates},
          {"boundary_policy", to_string(c.boundary)},
          {"max_records", c.max_records},
          {"threads", c.threads}};
}

void write_provenance_comment(std::ostream& os, const Provenance& p) {
  os << "# effpop " << kToolVersion << " command=" << p.command << " config_hash=" << p.config_hash
     << " seed=" << p.seed << "\n";
}

nlohmann::json provenance_json(const Provenance& p) {
  return {{"tool", "effpop"}, {"version", kToolVersion}, {"command", p.command},
          {"config_hash", p.config_hash}, {"seed", p.seed}};
}

Matrix parse_matrix_csv(const std::string& text) {
  std::vector<std::vector<double>> rows;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    std::vector<double> row;
    std::istringstream cells(line);
    std::string cell;
    while (std::getline(cells, cell, ',')) {
      const auto b = cell.find_first_not_of(" \t");
      const auto e = cell.find_last_not_of(" \t");
      if (b == std::string::npos) throw ConfigError("CSV line " + std::to_string(line_no) + ": empty cell");
      const std::string s = cell.substr(b, e - b + 1);
      double v = 0.0;
      const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
      if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw ConfigError("CSV line " + std::to_string(line_no) + ": not a number: '" + s + "'");
      }
      row.push_back(v);
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw ConfigError("CSV line " + std::to_string(line_no) + ": ragged row");
    }
    rows.push_back(std::move(row));
  }
  if (rows.empty()) throw ConfigError("CSV matrix is empty");
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = 0; j < rows[i].size(); ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  return m;
}

Matrix read_matrix_csv(const std::string& path) {
  try {
    return parse_matrix_csv(slurp(path));
  } catch (const ConfigError& e) {
    throw ConfigError(path + ": " + e.what());
  }
}

std::string format_number(double x) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, x);
  return std::string(buf, res.ptr);
}

}  // namespace effpop
