#include "qrewrite/seed.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "qrewrite/errors.hpp"
#include "qrewrite/sql_text.hpp"

namespace qrw {

using nlohmann::json;

std::uint64_t SplitMix64::next() {
  state_ += 0x9E3779B97F4A7C15ULL;
  std::uint64_t z = state_;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

double SplitMix64::next_unit() {
  return static_cast<double>(next() >> 11) * 0x1.0p-53;
}

std::int64_t SplitMix64::next_range(std::int64_t lo, std::int64_t hi) {
  if (hi < lo) throw std::invalid_argument("empty range");
  const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
  return lo + static_cast<std::int64_t>(next() % span);
}

SeedSpec SeedSpec::parse(const std::string& json_text, const std::string& origin) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw ConfigError(origin + ": bad seed spec: " + e.what());
  }
  SeedSpec spec;
  if (!doc.contains("tables") || !doc["tables"].is_array()) {
    throw ConfigError(origin + ": seed spec needs a \"tables\" array");
  }
  for (const auto& t : doc["tables"]) {
    SeedTable table;
    table.name = t.at("name").get<std::string>();
    table.rows = t.value("rows", 0ULL);
    if (!t.contains("columns") || !t["columns"].is_array() || t["columns"].empty()) {
      throw ConfigError(origin + ": table " + table.name + " needs columns");
    }
    for (const auto& c : t["columns"]) {
      SeedColumn column;
      column.name = c.at("name").get<std::string>();
      column.kind = c.value("kind", "int");
      column.min = c.value("min", 0.0);
      column.max = c.value("max", 100.0);
      column.prefix = c.value("prefix", "v");
      column.null_rate = c.value("null_rate", 0.0);
      column.duplicate_rate = c.value("duplicate_rate", 0.0);
      if (c.contains("values")) {
        column.values = c["values"].get<std::vector<std::string>>();
      }
      if (column.kind != "serial" && column.kind != "int" && column.kind != "float" &&
          column.kind != "choice" && column.kind != "text") {
        throw ConfigError(origin + ": unknown column kind " + column.kind);
      }
      if (column.kind == "choice" && column.values.empty()) {
        throw ConfigError(origin + ": choice column " + column.name + " needs values");
      }
      table.columns.push_back(std::move(column));
    }
    spec.tables.push_back(std::move(table));
  }
  return spec;
}

SeedSpec SeedSpec::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open seed spec: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  return parse(buffer.str(), path);
}

std::vector<InstancePlan> default_instance_plans() {
  return {{1, 1.0}, {2, 1.0}, {3, 0.0}};
}

void run_script(DbSession& session, const std::string& script) {
  std::string statement;
  bool in_string = false;
  for (std::size_t i = 0; i < script.size(); ++i) {
    const char c = script[i];
    if (c == '\'') in_string = !in_string;
    if (c == ';' && !in_string) {
      bool blank = true;
      for (char s : statement) {
        if (std::isspace(static_cast<unsigned char>(s)) == 0) blank = false;
      }
      if (!blank) {
        const ExecOutcome outcome = session.execute(statement, 0.0);
        if (!outcome.ok) {
          throw std::runtime_error("script statement failed: " +
                                   outcome.error.value_or("unknown error") +
                                   "\nstatement: " + statement);
        }
      }
      statement.clear();
    } else {
      statement.push_back(c);
    }
  }
  bool blank = true;
  for (char s : statement) {
    if (std::isspace(static_cast<unsigned char>(s)) == 0) blank = false;
  }
  if (!blank) {
    const ExecOutcome outcome = session.execute(statement, 0.0);
    if (!outcome.ok) {
      throw std::runtime_error("script statement failed: " +
                               outcome.error.value_or("unknown error") +
                               "\nstatement: " + statement);
    }
  }
}

namespace {

std::string escape_sql_string(const std::string& raw) {
  std::string out = "'";
  for (char c : raw) {
    if (c == '\'') out += "''";
    else out.push_back(c);
  }
  out.push_back('\'');
  return out;
}

// One column's value stream. Deterministic given (seed, table, column).
class ColumnStream {
 public:
  ColumnStream(const SeedColumn& column, std::uint64_t seed,
               const std::string& table_name)
      : column_(column),
        rng_(seed ^ fnv1a64(table_name + "." + column.name)),
        serial_(0) {}

  // Returns a SQL literal (already quoted/escaped) or "NULL".
  std::string next_literal() {
    if (column_.kind == "serial") {
      ++serial_;
      return std::to_string(serial_);
    }
    if (column_.null_rate > 0.0 && rng_.next_unit() < column_.null_rate) {
      return "NULL";
    }
    if (column_.duplicate_rate > 0.0 && !history_.empty() &&
        rng_.next_unit() < column_.duplicate_rate) {
      const std::size_t pick =
          static_cast<std::size_t>(rng_.next_range(0, static_cast<std::int64_t>(history_.size()) - 1));
      return history_[pick];
    }
    std::string literal = fresh_literal();
    if (column_.duplicate_rate > 0.0 && history_.size() < 64) {
      history_.push_back(literal);
    }
    return literal;
  }

 private:
  std::string fresh_literal() {
    if (column_.kind == "int") {
      return std::to_string(rng_.next_range(static_cast<std::int64_t>(column_.min),
                                            static_cast<std::int64_t>(column_.max)));
    }
    if (column_.kind == "float") {
      const double v = column_.min + rng_.next_unit() * (column_.max - column_.min);
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.6f", v);
      return buf;
    }
    if (column_.kind == "choice") {
      const std::size_t pick = static_cast<std::size_t>(
          rng_.next_range(0, static_cast<std::int64_t>(column_.values.size()) - 1));
      return escape_sql_string(column_.values[pick]);
    }
    // text
    return escape_sql_string(column_.prefix +
                             std::to_string(rng_.next_range(0, 9999)));
  }

  const SeedColumn& column_;
  SplitMix64 rng_;
  std::int64_t serial_;
  std::vector<std::string> history_;
};

}  // namespace

void seed_instance(DbSession& session, const std::string& schema_ddl,
                   const SeedSpec& spec, std::uint64_t seed, double row_scale) {
  run_script(session, schema_ddl);

  for (const auto& table : spec.tables) {
    const std::size_t rows =
        static_cast<std::size_t>(std::llround(static_cast<double>(table.rows) * row_scale));
    if (rows == 0) continue;

    std::vector<ColumnStream> streams;
    streams.reserve(table.columns.size());
    for (const auto& column : table.columns) {
      streams.emplace_back(column, seed, table.name);
    }

    std::string column_list;
    for (const auto& column : table.columns) {
      if (!column_list.empty()) column_list += ", ";
      column_list += column.name;
    }

    constexpr std::size_t kBatch = 500;
    std::size_t emitted = 0;
    while (emitted < rows) {
      std::string insert = "insert into " + table.name + " (" + column_list + ") values ";
      const std::size_t batch = std::min(kBatch, rows - emitted);
      for (std::size_t r = 0; r < batch; ++r) {
        if (r > 0) insert += ", ";
        insert += "(";
        for (std::size_t c = 0; c < streams.size(); ++c) {
          if (c > 0) insert += ", ";
          insert += streams[c].next_literal();
        }
        insert += ")";
      }
      const ExecOutcome outcome = session.execute(insert, 0.0);
      if (!outcome.ok) {
        throw std::runtime_error("seeding " + table.name + " failed: " +
                                 outcome.error.value_or("unknown error"));
      }
      emitted += batch;
    }
  }

  const ExecOutcome analyzed = session.execute("analyze", 0.0);
  if (!analyzed.ok) {
    throw std::runtime_error("analyze failed: " +
                             analyzed.error.value_or("unknown error"));
  }
}

std::vector<SeededInstance> build_instances(const DbTarget& base,
                                            const std::string& schema_ddl,
                                            const SeedSpec& spec,
                                            const std::vector<InstancePlan>& plans) {
  std::vector<SeededInstance> targets;
  for (const auto& plan : plans) {
    DbTarget instance = base;
    instance.role = DbTarget::Role::EquivalenceSample;
    const std::string suffix = "_s" + std::to_string(plan.seed);

    if (base.engine == "sqlite") {
      std::string path = base.database;
      const std::size_t dot = path.rfind(".db");
      if (dot != std::string::npos && dot == path.size() - 3) {
        path = path.substr(0, dot) + suffix + ".db";
      } else {
        path += suffix;
      }
      instance.database = path;
      std::remove(path.c_str());
      const auto engine = make_engine(instance);
      const auto session = engine->open();
      seed_instance(*session, schema_ddl, spec, plan.seed, plan.row_scale);
    } else if (base.engine == "postgres") {
      const std::string dbname = base.database + suffix;
      for (char c : dbname) {
        if (std::isalnum(static_cast<unsigned char>(c)) == 0 && c != '_') {
          throw ConfigError("instance database name must be a plain identifier: " +
                            dbname);
        }
      }
      DbTarget admin = base;
      admin.database = "postgres";
      const auto admin_engine = make_engine(admin);
      const auto admin_session = admin_engine->open();
      ExecOutcome dropped =
          admin_session->execute("drop database if exists " + dbname, 0.0);
      if (!dropped.ok) {
        throw std::runtime_error("drop database failed: " +
                                 dropped.error.value_or("unknown error"));
      }
      ExecOutcome created = admin_session->execute("create database " + dbname, 0.0);
      if (!created.ok) {
        throw std::runtime_error("create database failed: " +
                                 created.error.value_or("unknown error"));
      }
      instance.database = dbname;
      const auto engine = make_engine(instance);
      const auto session = engine->open();
      seed_instance(*session, schema_ddl, spec, plan.seed, plan.row_scale);
    } else {
      throw ConfigError("unknown database engine: " + base.engine);
    }
    targets.push_back({std::move(instance), plan.seed});
  }
  return targets;
}

}  // namespace qrw
