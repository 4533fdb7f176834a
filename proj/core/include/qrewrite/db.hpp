#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace qrw {

struct DbTarget {
  enum class Role { Benchmark, EquivalenceSample };

  std::string engine = "postgres";  // "postgres" | "sqlite"
  std::string host = "127.0.0.1";   // postgres only; '/'-prefixed = socket dir
  int port = 5432;
  std::string database;      // postgres dbname, or sqlite file path
  std::string user = "postgres";
  std::string password_env;  // env var holding the password; never the secret itself
  Role role = Role::Benchmark;
};

struct ExplainResult {
  bool ok = false;
  std::optional<double> total_cost;
  std::optional<std::string> error_message;  // engine text, verbatim
};

struct ResultTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::optional<std::string>>> rows;  // nullopt = SQL NULL
};

// Execution result where SQL failures and timeouts are data, not exceptions.
struct ExecOutcome {
  bool ok = false;
  ResultTable table;
  std::optional<std::string> error;
  bool timed_out = false;
};

struct LatencyMeasurement {
  std::vector<double> runs;  // seconds, one per repetition
  double mean = 0.0;
  bool cache_reset_between_runs = false;
  bool timed_out = false;  // some run hit the timeout (clamped to it)
};

// One open database session. Implementations throw ConnectionError for
// transport problems only; SQL-level failures are returned as data.
class DbSession {
 public:
  virtual ~DbSession() = default;

  // Plans without executing. On failure carries the engine's message
  // verbatim (it feeds the syntax-correction prompt).
  virtual ExplainResult explain(const std::string& sql) = 0;

  // Executes with a timeout, materializing canonical text cells: NULL kept
  // distinct from empty string, floats at 12 significant digits.
  virtual ExecOutcome execute(const std::string& sql, double timeout_s) = 0;

  virtual const char* dialect() const = 0;
};

// Factory for sessions against one database.
class DbEngine {
 public:
  virtual ~DbEngine() = default;
  virtual std::unique_ptr<DbSession> open() = 0;
  virtual const DbTarget& target() const = 0;
  virtual const char* dialect() const = 0;
};

std::unique_ptr<DbEngine> make_engine(const DbTarget& target);

// Shell command run before each timed repetition; empty = no-op.
struct CacheResetHook {
  std::string command;
  void invoke() const;
};

// Times `sql` over `repetitions` fresh sessions: per run, invoke the hook,
// connect, execute with the timeout, record wall seconds. A timed-out run
// records the timeout value and flags the measurement. Precondition
// (explain ok) is checked once, without invoking the hook.
LatencyMeasurement run_timed(DbEngine& engine, const std::string& sql,
                             int repetitions, double timeout_s,
                             const CacheResetHook& hook);

// Strict variant of DbSession::execute: throws TimeoutError on timeout and
// std::runtime_error on SQL failure.
ResultTable execute_rows(DbSession& session, const std::string& sql, double timeout_s);

namespace dbtext {
// Canonical float rendering used by every engine adapter.
std::string canonical_double(double value);
// Trims trailing fractional zeros from a decimal string ("1.2300" -> "1.23").
std::string trim_decimal(const std::string& text);
}  // namespace dbtext

}  // namespace qrw
