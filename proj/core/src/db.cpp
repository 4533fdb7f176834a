#include "qrewrite/db.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "qrewrite/errors.hpp"
#include "qrewrite/pg_client.hpp"

namespace qrw {

using nlohmann::json;

std::unique_ptr<DbEngine> make_sqlite_engine(const DbTarget& target);

namespace dbtext {

std::string canonical_double(double value) {
  if (std::isnan(value)) return "NaN";
  if (std::isinf(value)) return value > 0 ? "Infinity" : "-Infinity";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", value);
  // "-0" and "0" are the same value.
  if (buf[0] == '-' && buf[1] == '0' && buf[2] == '\0') return "0";
  return buf;
}

std::string trim_decimal(const std::string& text) {
  if (text.find('.') == std::string::npos) return text;
  std::size_t end = text.size();
  while (end > 0 && text[end - 1] == '0') --end;
  if (end > 0 && text[end - 1] == '.') --end;
  std::string out = text.substr(0, end);
  if (out.empty() || out == "-") out = "0";
  return out;
}

}  // namespace dbtext

namespace {

constexpr double kTimeoutSqlstateMargin = 60.0;

std::string password_from_env(const DbTarget& target) {
  if (target.password_env.empty()) return "";
  const char* value = std::getenv(target.password_env.c_str());
  return value != nullptr ? value : "";
}

PgParams pg_params(const DbTarget& target) {
  PgParams params;
  params.host = target.host;
  params.port = target.port;
  params.user = target.user;
  params.database = target.database;
  params.password = password_from_env(target);
  return params;
}

std::optional<std::string> canonical_pg_cell(const std::optional<std::string>& raw,
                                             std::uint32_t type_oid) {
  if (!raw) return std::nullopt;
  switch (type_oid) {
    case pgoid::kFloat4:
    case pgoid::kFloat8: {
      try {
        return dbtext::canonical_double(std::stod(*raw));
      } catch (const std::exception&) {
        return raw;  // NaN/Infinity spellings fall through verbatim
      }
    }
    case pgoid::kNumeric:
      return dbtext::trim_decimal(*raw);
    default:
      return raw;
  }
}

class PostgresSession : public DbSession {
 public:
  explicit PostgresSession(const DbTarget& target)
      : target_(target), conn_(pg_params(target)) {}

  ExplainResult explain(const std::string& sql) override {
    const PgResult result = conn_.exec("EXPLAIN (FORMAT JSON) " + sql);
    ExplainResult out;
    if (!result.ok()) {
      out.ok = false;
      out.error_message = result.error->message;
      return out;
    }
    if (result.rows.empty() || result.rows[0].empty() || !result.rows[0][0]) {
      out.ok = false;
      out.error_message = "EXPLAIN returned no plan";
      return out;
    }
    try {
      const json plan = json::parse(*result.rows[0][0]);
      out.total_cost = plan.at(0).at("Plan").at("Total Cost").get<double>();
      out.ok = true;
    } catch (const json::exception& e) {
      out.ok = false;
      out.error_message = std::string("unparsable EXPLAIN output: ") + e.what();
    }
    return out;
  }

  ExecOutcome execute(const std::string& sql, double timeout_s) override {
    ExecOutcome out;
    const long timeout_ms = timeout_s > 0 ? static_cast<long>(timeout_s * 1000.0) : 0;
    conn_.set_read_timeout(timeout_s > 0 ? timeout_s + kTimeoutSqlstateMargin : 300.0);
    const PgResult set_result =
        conn_.exec("SET statement_timeout = " + std::to_string(timeout_ms));
    if (!set_result.ok()) {
      out.error = set_result.error->message;
      return out;
    }
    const PgResult result = conn_.exec(sql);
    if (!result.ok()) {
      if (result.error->sqlstate == "57014") {
        out.timed_out = true;
        out.error = result.error->message;
        return out;
      }
      out.error = result.error->message;
      return out;
    }
    out.ok = true;
    out.table.columns = result.columns;
    out.table.rows.reserve(result.rows.size());
    for (const auto& row : result.rows) {
      std::vector<std::optional<std::string>> cells;
      cells.reserve(row.size());
      for (std::size_t c = 0; c < row.size(); ++c) {
        cells.push_back(canonical_pg_cell(
            row[c], c < result.type_oids.size() ? result.type_oids[c] : 0));
      }
      out.table.rows.push_back(std::move(cells));
    }
    return out;
  }

  const char* dialect() const override { return "postgres"; }

  PgConnection& raw() { return conn_; }

 private:
  DbTarget target_;
  PgConnection conn_;
};

class PostgresEngine : public DbEngine {
 public:
  explicit PostgresEngine(DbTarget target) : target_(std::move(target)) {}
  std::unique_ptr<DbSession> open() override {
    return std::make_unique<PostgresSession>(target_);
  }
  const DbTarget& target() const override { return target_; }
  const char* dialect() const override { return "postgres"; }

 private:
  DbTarget target_;
};

}  // namespace

std::unique_ptr<DbEngine> make_engine(const DbTarget& target) {
  if (target.engine == "postgres") return std::make_unique<PostgresEngine>(target);
  if (target.engine == "sqlite") return make_sqlite_engine(target);
  throw ConfigError("unknown database engine: " + target.engine);
}

void CacheResetHook::invoke() const {
  if (command.empty()) return;
  const int rc = std::system(command.c_str());
  if (rc != 0) {
    throw ConnectionError("cache-reset hook failed with status " + std::to_string(rc));
  }
}

LatencyMeasurement run_timed(DbEngine& engine, const std::string& sql,
                             int repetitions, double timeout_s,
                             const CacheResetHook& hook) {
  if (repetitions < 1) throw std::invalid_argument("repetitions must be >= 1");
  {
    const auto probe = engine.open();
    const ExplainResult plan = probe->explain(sql);
    if (!plan.ok) {
      throw std::invalid_argument("run_timed precondition: explain failed: " +
                                  plan.error_message.value_or("unknown error"));
    }
  }

  LatencyMeasurement measurement;
  measurement.cache_reset_between_runs = !hook.command.empty();
  for (int i = 0; i < repetitions; ++i) {
    hook.invoke();
    const auto session = engine.open();
    const auto start = std::chrono::steady_clock::now();
    const ExecOutcome outcome = session->execute(sql, timeout_s);
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (outcome.timed_out) {
      measurement.runs.push_back(timeout_s);
      measurement.timed_out = true;
    } else if (!outcome.ok) {
      throw std::runtime_error("timed run failed: " +
                               outcome.error.value_or("unknown error"));
    } else {
      measurement.runs.push_back(elapsed);
    }
  }
  double sum = 0.0;
  for (double r : measurement.runs) sum += r;
  measurement.mean = sum / static_cast<double>(measurement.runs.size());
  return measurement;
}

ResultTable execute_rows(DbSession& session, const std::string& sql, double timeout_s) {
  const ExecOutcome outcome = session.execute(sql, timeout_s);
  if (outcome.timed_out) {
    throw TimeoutError("query exceeded " + std::to_string(timeout_s) + "s: " +
                       outcome.error.value_or(""));
  }
  if (!outcome.ok) {
    throw std::runtime_error("query failed: " + outcome.error.value_or("unknown error"));
  }
  return outcome.table;
}

}  // namespace qrw
