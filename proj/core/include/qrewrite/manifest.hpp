#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qrewrite/seed.hpp"
#include "qrewrite/types.hpp"

namespace qrw {

// INI-subset configuration: [section] headers, key = value lines, full-line
// # or ; comments, optional double quotes around a value. Order within a
// section is preserved; the last duplicate of a key wins for get().
class ConfigFile {
 public:
  static ConfigFile parse(const std::string& text, const std::string& origin);
  static ConfigFile load_file(const std::string& path);

  std::optional<std::string> get(const std::string& section,
                                 const std::string& key) const;
  std::vector<std::pair<std::string, std::string>> section(
      const std::string& name) const;
  const std::string& origin() const { return origin_; }

 private:
  struct Item {
    std::string section;
    std::string key;
    std::string value;
  };
  std::vector<Item> items_;
  std::string origin_;
};

struct ManifestEntry {
  std::string query_id;
  std::string path;  // absolute once loaded
};

// Binds a workload to its schema DDL and row-generator spec. File layout:
//
//   schema = tables.sql
//   seed_spec = rows.json
//   [queries]
//   q1 = sql/q1.sql
//
// Relative paths resolve against the manifest's directory; every path must
// exist at load time and query ids must be unique.
struct WorkloadManifest {
  std::vector<ManifestEntry> entries;
  std::string schema_path;
  std::string seed_spec_path;

  static WorkloadManifest load_file(const std::string& path);

  std::vector<Query> load_queries() const;
  std::string load_schema() const;
  SeedSpec load_seed_spec() const;
};

}  // namespace qrw
