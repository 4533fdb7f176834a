#include "qrewrite/evaluator.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <stdexcept>

#include "qrewrite/errors.hpp"
#include "qrewrite/sql_text.hpp"

namespace qrw {

const char* to_string(SpeedupMode mode) {
  switch (mode) {
    case SpeedupMode::Latency: return "latency";
    case SpeedupMode::ExplainCost: return "explain_cost";
  }
  return "unknown";
}

const char* to_string(SpeedupClass cls) {
  switch (cls) {
    case SpeedupClass::Regression: return "regression";
    case SpeedupClass::Neutral: return "neutral";
    case SpeedupClass::Improved: return "improved";
  }
  return "unknown";
}

SpeedupMode speedup_mode_from_string(const std::string& name) {
  if (name == "latency") return SpeedupMode::Latency;
  if (name == "explain_cost") return SpeedupMode::ExplainCost;
  throw ConfigError("unknown speedup mode: " + name + " (latency|explain_cost)");
}

namespace {

bool word_at(const std::string& text, std::size_t pos, const char* word) {
  const std::size_t len = std::strlen(word);
  if (pos + len > text.size()) return false;
  for (std::size_t i = 0; i < len; ++i) {
    if (std::tolower(static_cast<unsigned char>(text[pos + i])) != word[i]) return false;
  }
  if (pos > 0) {
    const char before = text[pos - 1];
    if (std::isalnum(static_cast<unsigned char>(before)) || before == '_') return false;
  }
  if (pos + len < text.size()) {
    const char after = text[pos + len];
    if (std::isalnum(static_cast<unsigned char>(after)) || after == '_') return false;
  }
  return true;
}

}  // namespace

bool has_outer_order_by(const std::string& sql) {
  int depth = 0;
  std::size_t i = 0;
  const std::size_t n = sql.size();
  bool pending_order = false;  // saw depth-0 ORDER, awaiting BY
  while (i < n) {
    const char c = sql[i];
    if (c == '\'') {
      ++i;
      while (i < n) {
        if (sql[i] == '\'') {
          if (i + 1 < n && sql[i + 1] == '\'') { i += 2; continue; }
          ++i;
          break;
        }
        ++i;
      }
      pending_order = false;
      continue;
    }
    if (c == '"') {
      ++i;
      while (i < n) {
        if (sql[i] == '"') {
          if (i + 1 < n && sql[i + 1] == '"') { i += 2; continue; }
          ++i;
          break;
        }
        ++i;
      }
      pending_order = false;
      continue;
    }
    if (c == '-' && i + 1 < n && sql[i + 1] == '-') {
      while (i < n && sql[i] != '\n') ++i;
      continue;
    }
    if (c == '/' && i + 1 < n && sql[i + 1] == '*') {
      int nest = 1;
      i += 2;
      while (i < n && nest > 0) {
        if (sql[i] == '/' && i + 1 < n && sql[i + 1] == '*') { nest++; i += 2; }
        else if (sql[i] == '*' && i + 1 < n && sql[i + 1] == '/') { nest--; i += 2; }
        else ++i;
      }
      continue;
    }
    if (c == '(') { depth++; pending_order = false; ++i; continue; }
    if (c == ')') { if (depth > 0) depth--; pending_order = false; ++i; continue; }
    if (std::isspace(static_cast<unsigned char>(c))) { ++i; continue; }

    if (depth == 0 && pending_order && word_at(sql, i, "by")) return true;
    if (depth == 0 && word_at(sql, i, "order")) {
      pending_order = true;
      i += 5;
      continue;
    }
    pending_order = false;
    // skip the rest of this word or symbol
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '_') {
      while (i < n && (std::isalnum(static_cast<unsigned char>(sql[i])) || sql[i] == '_')) ++i;
    } else {
      ++i;
    }
  }
  return false;
}

namespace {

std::string cell_text(const std::optional<std::string>& cell) {
  return cell.has_value() ? *cell : std::string("NULL");
}

std::string row_text(const std::vector<std::optional<std::string>>& row) {
  std::string out = "(";
  for (std::size_t i = 0; i < row.size(); ++i) {
    if (i > 0) out += ", ";
    out += cell_text(row[i]);
  }
  out += ")";
  if (out.size() > 160) out = out.substr(0, 157) + "...";
  return out;
}

// Collision-free row key for multiset comparison: NULL and the string
// "NULL" must stay distinct.
std::string row_key(const std::vector<std::optional<std::string>>& row) {
  std::string key;
  for (const auto& cell : row) {
    if (cell.has_value()) {
      key += 'V';
      key += *cell;
    } else {
      key += 'N';
    }
    key += '\x1f';
  }
  return key;
}

std::string lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

// Empty result = the tables agree on this instance.
std::string compare_tables(const ResultTable& a, const ResultTable& b, bool ordered) {
  if (a.columns.size() != b.columns.size()) {
    return "column count " + std::to_string(a.columns.size()) + " vs " +
           std::to_string(b.columns.size());
  }
  for (std::size_t i = 0; i < a.columns.size(); ++i) {
    if (lower(a.columns[i]) != lower(b.columns[i])) {
      return "column " + std::to_string(i + 1) + " named " + a.columns[i] + " vs " +
             b.columns[i];
    }
  }
  if (a.rows.size() != b.rows.size()) {
    return "row count " + std::to_string(a.rows.size()) + " vs " +
           std::to_string(b.rows.size());
  }
  if (ordered) {
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
      if (row_key(a.rows[i]) != row_key(b.rows[i])) {
        return "row " + std::to_string(i + 1) + " differs: " + row_text(a.rows[i]) +
               " vs " + row_text(b.rows[i]);
      }
    }
    return "";
  }
  std::vector<std::string> ka, kb;
  ka.reserve(a.rows.size());
  kb.reserve(b.rows.size());
  for (const auto& row : a.rows) ka.push_back(row_key(row));
  for (const auto& row : b.rows) kb.push_back(row_key(row));
  std::sort(ka.begin(), ka.end());
  std::sort(kb.begin(), kb.end());
  for (std::size_t i = 0; i < ka.size(); ++i) {
    if (ka[i] != kb[i]) {
      // recover a printable row for the message
      for (const auto& row : a.rows) {
        if (row_key(row) == ka[i]) return "multiset differs near " + row_text(row);
      }
      for (const auto& row : b.rows) {
        if (row_key(row) == kb[i]) return "multiset differs near " + row_text(row);
      }
      return "multisets differ";
    }
  }
  return "";
}

}  // namespace

DifferentialVerdict check_equivalence(const std::string& q, const std::string& q_prime,
                                      const std::vector<SeededInstance>& instances,
                                      const EvaluatorOptions& options) {
  DifferentialVerdict verdict;

  if (canonicalize_sql(q) == canonicalize_sql(q_prime)) {
    verdict.equivalent = true;
    return verdict;
  }

  const bool ordered_q = has_outer_order_by(q);
  const bool ordered_p = has_outer_order_by(q_prime);
  verdict.ordering_uncertain = (ordered_q != ordered_p);
  const bool ordered = ordered_q && ordered_p;

  for (const auto& instance : instances) {
    const auto engine = make_engine(instance.target);
    const auto session = engine->open();
    const ExecOutcome left = session->execute(q, options.equivalence_timeout_s);
    const ExecOutcome right = session->execute(q_prime, options.equivalence_timeout_s);
    verdict.instances_tested++;

    EquivalenceWitness witness;
    witness.instance_seed = instance.seed;
    witness.instance = instance.target.database;

    if (left.timed_out || right.timed_out) {
      witness.diff = std::string(left.timed_out ? "original" : "rewrite") +
                     " timed out after " +
                     std::to_string(options.equivalence_timeout_s) + "s";
      verdict.witness = std::move(witness);
      return verdict;
    }
    if (left.ok != right.ok) {
      witness.diff = left.ok
                         ? "rewrite failed: " + right.error.value_or("unknown error")
                         : "original failed: " + left.error.value_or("unknown error");
      verdict.witness = std::move(witness);
      return verdict;
    }
    if (!left.ok) {
      // Both failed: identical failure is identical observable behavior.
      if (left.error != right.error) {
        witness.diff = "different errors: " + left.error.value_or("") + " vs " +
                       right.error.value_or("");
        verdict.witness = std::move(witness);
        return verdict;
      }
      continue;
    }
    const std::string diff = compare_tables(left.table, right.table, ordered);
    if (!diff.empty()) {
      witness.diff = diff;
      verdict.witness = std::move(witness);
      return verdict;
    }
  }

  verdict.equivalent = true;
  return verdict;
}

PerformanceVerdict measure_speedup(const std::string& q, const std::string& q_prime,
                                   SpeedupMode mode, DbEngine& benchmark,
                                   const EvaluatorOptions& options) {
  PerformanceVerdict verdict;
  verdict.mode = mode;

  if (mode == SpeedupMode::ExplainCost) {
    const auto session = benchmark.open();
    const ExplainResult original = session->explain(q);
    const ExplainResult rewrite = session->explain(q_prime);
    if (!original.ok || !original.total_cost.has_value()) {
      throw std::runtime_error("explain failed for original: " +
                               original.error_message.value_or("no cost"));
    }
    if (!rewrite.ok || !rewrite.total_cost.has_value()) {
      throw std::runtime_error("explain failed for rewrite: " +
                               rewrite.error_message.value_or("no cost"));
    }
    verdict.original_metric = std::max(*original.total_cost, 1e-9);
    verdict.rewrite_metric = std::max(*rewrite.total_cost, 1e-9);
  } else {
    const LatencyMeasurement original =
        run_timed(benchmark, q, options.repetitions, options.original_timeout_s,
                  options.cache_reset);
    const double rewrite_timeout =
        std::min(options.rewrite_timeout_cap_s,
                 std::max(options.rewrite_timeout_floor_s,
                          original.mean * options.rewrite_timeout_factor));
    const LatencyMeasurement rewrite =
        run_timed(benchmark, q_prime, options.repetitions, rewrite_timeout,
                  options.cache_reset);
    verdict.original_metric = std::max(original.mean, 1e-9);
    verdict.rewrite_metric = std::max(rewrite.mean, 1e-9);
    if (rewrite.timed_out) {
      verdict.rewrite_timed_out = true;
      verdict.rewrite_metric = rewrite_timeout;
      verdict.speedup = verdict.original_metric / rewrite_timeout;
      verdict.classification = SpeedupClass::Regression;
      return verdict;
    }
  }

  verdict.speedup = verdict.original_metric / verdict.rewrite_metric;
  if (verdict.rewrite_metric > 1.05 * verdict.original_metric) {
    verdict.classification = SpeedupClass::Regression;
  } else if (verdict.speedup > options.theta) {
    verdict.classification = SpeedupClass::Improved;
  } else {
    verdict.classification = SpeedupClass::Neutral;
  }
  return verdict;
}

}  // namespace qrw
