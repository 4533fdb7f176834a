#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "qrewrite/sql_text.hpp"

namespace qrw {

struct Query {
  std::string id;
  std::string sql;
  std::string canonical_sql;
  std::optional<std::vector<double>> embedding;

  Query() = default;
  Query(std::string id_, std::string sql_)
      : id(std::move(id_)), sql(std::move(sql_)) {
    if (trimmed_empty(sql)) throw std::invalid_argument("query sql is empty");
    canonical_sql = canonicalize_sql(sql);
  }

  static bool trimmed_empty(const std::string& s) {
    for (char c : s) {
      if (c != ' ' && c != '\t' && c != '\n' && c != '\r') return false;
    }
    return true;
  }
};

enum class RewriteStage { Suggested, SemanticallyCorrected, SyntaxCorrected };

const char* to_string(RewriteStage stage);

// A candidate rewrite of one source query. Correction stages only move
// forward and every correction bumps the revision by exactly one.
struct CandidateRewrite {
  std::string source_id;
  std::string sql;
  RewriteStage stage = RewriteStage::Suggested;
  int revision = 0;

  CandidateRewrite() = default;
  CandidateRewrite(std::string source_id_, std::string sql_)
      : source_id(std::move(source_id_)), sql(std::move(sql_)) {}

  void advance(RewriteStage next, std::string new_sql) {
    if (static_cast<int>(next) < static_cast<int>(stage)) {
      throw std::logic_error("rewrite stage may only move forward");
    }
    stage = next;
    sql = std::move(new_sql);
    ++revision;
  }
};

// The natural-language rules an LLM reported applying, with optional
// per-rule applicability conditions (parallel to rules when present).
struct Explanation {
  std::vector<std::string> rules;
  std::vector<std::string> conditions;

  bool conditions_aligned() const {
    return conditions.empty() || conditions.size() == rules.size();
  }

  // A rule leaks when it names a table/column token of the source query.
  // Single-character tokens (typically aliases) are ignored: they collide
  // with ordinary English too often to be meaningful evidence.
  bool leaks_identifiers(const Query& source) const {
    std::vector<std::string> ids;
    for (auto& id : extract_identifiers(source.sql)) {
      if (id.size() >= 2) ids.push_back(id);
    }
    for (const auto& rule : rules) {
      if (mentions_any_identifier(rule, ids)) return true;
    }
    return false;
  }
};

struct RewriteOutcome {
  Query query;
  CandidateRewrite rewrite;
  Explanation explanation;
  bool equivalent = false;
  double speedup = 1.0;  // ratio original/rewrite; 1.0 = fallback to original
  bool accepted = false;

  bool consistent(double theta) const {
    if (speedup <= 0.0) return false;
    if (accepted && !(equivalent && speedup > theta)) return false;
    if (accepted && explanation.rules.empty()) return false;
    return true;
  }
};

inline const char* to_string(RewriteStage stage) {
  switch (stage) {
    case RewriteStage::Suggested: return "suggested";
    case RewriteStage::SemanticallyCorrected: return "semantically_corrected";
    case RewriteStage::SyntaxCorrected: return "syntax_corrected";
  }
  return "unknown";
}

}  // namespace qrw
