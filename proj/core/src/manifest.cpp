#include "qrewrite/manifest.hpp"

#include <cctype>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "qrewrite/errors.hpp"

namespace qrw {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open file: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace

ConfigFile ConfigFile::parse(const std::string& text, const std::string& origin) {
  ConfigFile config;
  config.origin_ = origin;
  std::string current_section;
  std::istringstream stream(text);
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(stream, raw)) {
    ++line_no;
    const std::string line = trim(raw);
    if (line.empty() || line[0] == '#' || line[0] == ';') continue;
    if (line.front() == '[') {
      if (line.back() != ']' || line.size() < 3) {
        throw ConfigError(origin + ":" + std::to_string(line_no) +
                          ": malformed section header: " + line);
      }
      current_section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const std::size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(line_no) +
                        ": expected key = value, got: " + line);
    }
    const std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError(origin + ":" + std::to_string(line_no) + ": empty key");
    }
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
      value = value.substr(1, value.size() - 2);
    }
    config.items_.push_back({current_section, key, value});
  }
  return config;
}

ConfigFile ConfigFile::load_file(const std::string& path) {
  return parse(read_file(path), path);
}

std::optional<std::string> ConfigFile::get(const std::string& section,
                                           const std::string& key) const {
  std::optional<std::string> found;
  for (const auto& item : items_) {
    if (item.section == section && item.key == key) found = item.value;
  }
  return found;
}

std::vector<std::pair<std::string, std::string>> ConfigFile::section(
    const std::string& name) const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& item : items_) {
    if (item.section == name) out.emplace_back(item.key, item.value);
  }
  return out;
}

WorkloadManifest WorkloadManifest::load_file(const std::string& path) {
  const ConfigFile config = ConfigFile::load_file(path);
  const fs::path base = fs::absolute(fs::path(path)).parent_path();

  const auto resolve = [&](const std::string& p) {
    fs::path candidate(p);
    if (candidate.is_relative()) candidate = base / candidate;
    return candidate.lexically_normal().string();
  };

  WorkloadManifest manifest;
  const auto schema = config.get("", "schema");
  if (!schema.has_value() || schema->empty()) {
    throw ConfigError(path + ": manifest needs a top-level `schema = <ddl file>`");
  }
  manifest.schema_path = resolve(*schema);

  const auto seed_spec = config.get("", "seed_spec");
  if (!seed_spec.has_value() || seed_spec->empty()) {
    throw ConfigError(path + ": manifest needs a top-level `seed_spec = <json file>`");
  }
  manifest.seed_spec_path = resolve(*seed_spec);

  std::set<std::string> seen;
  for (const auto& [id, query_path] : config.section("queries")) {
    if (!seen.insert(id).second) {
      throw ConfigError(path + ": duplicate query id: " + id);
    }
    manifest.entries.push_back({id, resolve(query_path)});
  }
  if (manifest.entries.empty()) {
    throw ConfigError(path + ": manifest has no [queries] entries");
  }

  if (!fs::exists(manifest.schema_path)) {
    throw ConfigError(path + ": schema file not found: " + manifest.schema_path);
  }
  if (!fs::exists(manifest.seed_spec_path)) {
    throw ConfigError(path + ": seed spec not found: " + manifest.seed_spec_path);
  }
  for (const auto& entry : manifest.entries) {
    if (!fs::exists(entry.path)) {
      throw ConfigError(path + ": query file not found: " + entry.path + " (" +
                        entry.query_id + ")");
    }
  }
  return manifest;
}

std::vector<Query> WorkloadManifest::load_queries() const {
  std::vector<Query> queries;
  queries.reserve(entries.size());
  for (const auto& entry : entries) {
    const std::string sql = read_file(entry.path);
    if (Query::trimmed_empty(sql)) {
      throw ConfigError("query file is empty: " + entry.path);
    }
    queries.emplace_back(entry.query_id, sql);
  }
  return queries;
}

std::string WorkloadManifest::load_schema() const { return read_file(schema_path); }

SeedSpec WorkloadManifest::load_seed_spec() const {
  return SeedSpec::load_file(seed_spec_path);
}

}  // namespace qrw
