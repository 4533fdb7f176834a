#include <sqlite3.h>

#include <chrono>
#include <cmath>
#include <cstring>
#include <map>
#include <memory>
#include <sstream>
#include <stdexcept>

#include "qrewrite/db.hpp"
#include "qrewrite/errors.hpp"

namespace qrw {

std::unique_ptr<DbEngine> make_sqlite_engine(const DbTarget& target);

namespace {

struct Deadline {
  std::chrono::steady_clock::time_point at;
};

int deadline_hit(void* ctx) {
  const auto* deadline = static_cast<Deadline*>(ctx);
  return std::chrono::steady_clock::now() > deadline->at ? 1 : 0;
}

struct StmtCloser {
  void operator()(sqlite3_stmt* stmt) const { sqlite3_finalize(stmt); }
};
using StmtPtr = std::unique_ptr<sqlite3_stmt, StmtCloser>;

std::string hex_blob(const void* data, int size) {
  static const char* kHex = "0123456789abcdef";
  const auto* bytes = static_cast<const unsigned char*>(data);
  std::string out = "x'";
  for (int i = 0; i < size; ++i) {
    out.push_back(kHex[bytes[i] >> 4]);
    out.push_back(kHex[bytes[i] & 0xF]);
  }
  out.push_back('\'');
  return out;
}

class SqliteSession : public DbSession {
 public:
  explicit SqliteSession(const std::string& path) {
    if (path.empty() || path == ":memory:") {
      throw ConfigError("sqlite target needs a file path (sessions reconnect, "
                        "so a private in-memory database would vanish)");
    }
    const int rc = sqlite3_open_v2(
        path.c_str(), &db_, SQLITE_OPEN_READWRITE | SQLITE_OPEN_CREATE, nullptr);
    if (rc != SQLITE_OK) {
      const std::string message =
          db_ != nullptr ? sqlite3_errmsg(db_) : sqlite3_errstr(rc);
      if (db_ != nullptr) sqlite3_close(db_);
      throw ConnectionError("cannot open sqlite database " + path + ": " + message);
    }
    sqlite3_busy_timeout(db_, 10000);
  }

  ~SqliteSession() override {
    if (db_ != nullptr) sqlite3_close(db_);
  }

  ExplainResult explain(const std::string& sql) override {
    ExplainResult out;
    {
      sqlite3_stmt* raw = nullptr;
      const int rc = sqlite3_prepare_v2(db_, sql.c_str(), -1, &raw, nullptr);
      StmtPtr stmt(raw);
      if (rc != SQLITE_OK) {
        out.ok = false;
        out.error_message = sqlite3_errmsg(db_);
        return out;
      }
    }
    out.ok = true;
    out.total_cost = estimate_cost(sql);
    return out;
  }

  ExecOutcome execute(const std::string& sql, double timeout_s) override {
    ExecOutcome out;
    sqlite3_stmt* raw = nullptr;
    const int prc = sqlite3_prepare_v2(db_, sql.c_str(), -1, &raw, nullptr);
    StmtPtr stmt(raw);
    if (prc != SQLITE_OK) {
      out.error = sqlite3_errmsg(db_);
      return out;
    }

    Deadline deadline{std::chrono::steady_clock::now() +
                      std::chrono::duration_cast<std::chrono::steady_clock::duration>(
                          std::chrono::duration<double>(timeout_s))};
    if (timeout_s > 0) sqlite3_progress_handler(db_, 1000, deadline_hit, &deadline);

    const int ncols = sqlite3_column_count(stmt.get());
    for (int c = 0; c < ncols; ++c) {
      const char* name = sqlite3_column_name(stmt.get(), c);
      out.table.columns.push_back(name != nullptr ? name : "");
    }

    int rc = SQLITE_OK;
    for (;;) {
      rc = sqlite3_step(stmt.get());
      if (rc != SQLITE_ROW) break;
      std::vector<std::optional<std::string>> row;
      row.reserve(static_cast<std::size_t>(ncols));
      for (int c = 0; c < ncols; ++c) {
        switch (sqlite3_column_type(stmt.get(), c)) {
          case SQLITE_NULL:
            row.emplace_back(std::nullopt);
            break;
          case SQLITE_INTEGER:
            row.emplace_back(std::to_string(sqlite3_column_int64(stmt.get(), c)));
            break;
          case SQLITE_FLOAT:
            row.emplace_back(
                dbtext::canonical_double(sqlite3_column_double(stmt.get(), c)));
            break;
          case SQLITE_BLOB:
            row.emplace_back(hex_blob(sqlite3_column_blob(stmt.get(), c),
                                      sqlite3_column_bytes(stmt.get(), c)));
            break;
          default: {
            const unsigned char* text = sqlite3_column_text(stmt.get(), c);
            row.emplace_back(text != nullptr
                                 ? std::string(reinterpret_cast<const char*>(text))
                                 : std::string());
            break;
          }
        }
      }
      out.table.rows.push_back(std::move(row));
    }
    if (timeout_s > 0) sqlite3_progress_handler(db_, 0, nullptr, nullptr);

    if (rc == SQLITE_DONE) {
      out.ok = true;
    } else if (rc == SQLITE_INTERRUPT) {
      out.timed_out = true;
      out.error = "interrupted: execution exceeded the timeout";
      out.table = ResultTable{};
    } else {
      out.error = sqlite3_errmsg(db_);
      out.table = ResultTable{};
    }
    return out;
  }

  const char* dialect() const override { return "sqlite"; }

 private:
  // Deterministic planner-derived cost: compiled opcode count plus, per
  // EXPLAIN QUERY PLAN access line, the (ANALYZE-estimated) rows touched —
  // full row count for SCAN, log2 for SEARCH. Makes scans grow with table
  // size and index lookups beat them, which is all the pipeline needs.
  double estimate_cost(const std::string& sql) {
    double cost = 0.0;
    {
      sqlite3_stmt* raw = nullptr;
      const std::string probe = "EXPLAIN " + sql;
      if (sqlite3_prepare_v2(db_, probe.c_str(), -1, &raw, nullptr) == SQLITE_OK) {
        StmtPtr stmt(raw);
        while (sqlite3_step(stmt.get()) == SQLITE_ROW) cost += 1.0;
      }
    }
    const std::map<std::string, double> rowcounts = stat1_rowcounts();
    {
      sqlite3_stmt* raw = nullptr;
      const std::string probe = "EXPLAIN QUERY PLAN " + sql;
      if (sqlite3_prepare_v2(db_, probe.c_str(), -1, &raw, nullptr) == SQLITE_OK) {
        StmtPtr stmt(raw);
        while (sqlite3_step(stmt.get()) == SQLITE_ROW) {
          const unsigned char* text = sqlite3_column_text(stmt.get(), 3);
          if (text == nullptr) continue;
          cost += access_cost(reinterpret_cast<const char*>(text), rowcounts);
        }
      }
    }
    return cost;
  }

  std::map<std::string, double> stat1_rowcounts() {
    std::map<std::string, double> counts;
    sqlite3_stmt* raw = nullptr;
    if (sqlite3_prepare_v2(db_, "select tbl, stat from sqlite_stat1", -1, &raw,
                           nullptr) != SQLITE_OK) {
      return counts;  // never analyzed; defaults apply
    }
    StmtPtr stmt(raw);
    while (sqlite3_step(stmt.get()) == SQLITE_ROW) {
      const unsigned char* tbl = sqlite3_column_text(stmt.get(), 0);
      const unsigned char* stat = sqlite3_column_text(stmt.get(), 1);
      if (tbl == nullptr || stat == nullptr) continue;
      std::istringstream in(reinterpret_cast<const char*>(stat));
      double rows = 0.0;
      if (in >> rows) {
        auto [it, inserted] =
            counts.emplace(reinterpret_cast<const char*>(tbl), rows);
        if (!inserted && rows > it->second) it->second = rows;
      }
    }
    return counts;
  }

  static double access_cost(const std::string& detail,
                            const std::map<std::string, double>& rowcounts) {
    std::istringstream in(detail);
    std::string op;
    std::string name;
    if (!(in >> op)) return 0.0;
    if (op != "SCAN" && op != "SEARCH") return 0.0;
    if (!(in >> name)) return 0.0;
    if (name == "CONSTANT") return 1.0;  // "SCAN CONSTANT ROW"
    auto it = rowcounts.find(name);
    const double rows = it != rowcounts.end() ? std::max(it->second, 1.0) : 1000.0;
    if (op == "SEARCH") return std::log2(rows + 2.0) + 1.0;
    return rows;
  }

  sqlite3* db_ = nullptr;
};

class SqliteEngine : public DbEngine {
 public:
  explicit SqliteEngine(DbTarget target) : target_(std::move(target)) {
    if (target_.database.empty() || target_.database == ":memory:") {
      throw ConfigError("sqlite target needs a file path (sessions reconnect, "
                        "so a private in-memory database would vanish)");
    }
  }
  std::unique_ptr<DbSession> open() override {
    return std::make_unique<SqliteSession>(target_.database);
  }
  const DbTarget& target() const override { return target_; }
  const char* dialect() const override { return "sqlite"; }

 private:
  DbTarget target_;
};

}  // namespace

std::unique_ptr<DbEngine> make_sqlite_engine(const DbTarget& target) {
  return std::make_unique<SqliteEngine>(target);
}

}  // namespace qrw
