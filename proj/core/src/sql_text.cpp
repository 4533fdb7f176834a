#include "qrewrite/sql_text.hpp"

#include <cctype>
#include <unordered_set>

namespace qrw {
namespace {

bool is_word_start(char c) {
  return std::isalpha(static_cast<unsigned char>(c)) != 0 || c == '_';
}

bool is_word_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) != 0 || c == '_' || c == '$';
}

char lower_ch(char c) {
  return static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
}

std::string lower_copy(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) out.push_back(lower_ch(c));
  return out;
}

// Copies a quoted region verbatim, starting at the opening quote.
// Doubling the quote character escapes it. Returns the index just
// past the closing quote (or the end for an unterminated region).
std::size_t copy_quoted(std::string_view sql, std::size_t i, char quote,
                        std::string& out) {
  out.push_back(sql[i]);
  ++i;
  while (i < sql.size()) {
    out.push_back(sql[i]);
    if (sql[i] == quote) {
      if (i + 1 < sql.size() && sql[i + 1] == quote) {
        out.push_back(sql[i + 1]);
        i += 2;
        continue;
      }
      return i + 1;
    }
    ++i;
  }
  return i;
}

// Skips a quoted region without copying; same escape rules.
std::size_t skip_quoted(std::string_view sql, std::size_t i, char quote) {
  ++i;
  while (i < sql.size()) {
    if (sql[i] == quote) {
      if (i + 1 < sql.size() && sql[i + 1] == quote) {
        i += 2;
        continue;
      }
      return i + 1;
    }
    ++i;
  }
  return i;
}

// Returns the index just past a comment starting at i, or i if none starts there.
std::size_t skip_comment(std::string_view sql, std::size_t i) {
  if (sql[i] == '-' && i + 1 < sql.size() && sql[i + 1] == '-') {
    i += 2;
    while (i < sql.size() && sql[i] != '\n') ++i;
    return i;
  }
  if (sql[i] == '/' && i + 1 < sql.size() && sql[i + 1] == '*') {
    int depth = 1;
    i += 2;
    while (i < sql.size() && depth > 0) {
      if (sql[i] == '/' && i + 1 < sql.size() && sql[i + 1] == '*') {
        ++depth;
        i += 2;
      } else if (sql[i] == '*' && i + 1 < sql.size() && sql[i + 1] == '/') {
        --depth;
        i += 2;
      } else {
        ++i;
      }
    }
    return i;
  }
  return i;
}

}  // namespace

bool sqltext::is_keyword(std::string_view t) {
  static const std::unordered_set<std::string_view> kKeywords = {
      "abs",       "add",        "all",        "alter",     "analyze",
      "and",       "any",        "array",      "as",        "asc",
      "avg",       "begin",      "between",    "bigint",    "boolean",
      "by",        "bytea",      "case",       "cast",      "ceil",
      "char",      "check",      "coalesce",   "column",    "commit",
      "concat",    "constraint", "count",      "create",    "cross",
      "current_date", "current_time", "current_timestamp", "date", "day",
      "decimal",   "default",    "delete",     "desc",      "distinct",
      "double",    "drop",       "else",       "end",       "escape",
      "except",    "exists",     "explain",    "extract",   "false",
      "fetch",     "filter",     "first",      "float",     "floor",
      "following", "for",        "foreign",    "from",      "full",
      "grant",     "greatest",   "group",      "having",    "hour",
      "if",        "ilike",      "in",         "index",     "inner",
      "insert",    "int",        "integer",    "intersect", "interval",
      "into",      "is",         "join",       "key",       "last",
      "lateral",   "least",      "left",       "length",    "like",
      "limit",     "lower",      "materialized", "max",     "min",
      "minute",    "month",      "natural",    "next",      "not",
      "now",       "nowait",     "null",       "nullif",    "nulls",
      "numeric",   "of",         "offset",     "on",        "only",
      "or",        "order",      "outer",      "over",      "partition",
      "preceding", "precision",  "primary",    "real",      "recursive",
      "references","replace",    "returning",  "revoke",    "right",
      "rollback",  "round",      "row",        "rows",      "second",
      "select",    "sequence",   "serial",     "set",       "share",
      "similar",   "smallint",   "some",       "substring", "sum",
      "table",     "tablesample","temp",       "temporary", "text",
      "then",      "time",       "timestamp",  "to",        "transaction",
      "trim",      "true",       "unbounded",  "union",     "unique",
      "update",    "upper",      "using",      "vacuum",    "values",
      "varchar",   "verbose",    "view",       "when",      "where",
      "window",    "with",       "year",
  };
  return kKeywords.count(t) > 0;
}

std::string canonicalize_sql(std::string_view sql) {
  std::string out;
  out.reserve(sql.size());
  auto pend_space = [&out] {
    if (!out.empty() && out.back() != ' ') out.push_back(' ');
  };

  std::size_t i = 0;
  while (i < sql.size()) {
    const char c = sql[i];
    const std::size_t past_comment = skip_comment(sql, i);
    if (past_comment != i) {
      i = past_comment;
      pend_space();
      continue;
    }
    if (c == '\'' || c == '"') {
      i = copy_quoted(sql, i, c, out);
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c)) != 0) {
      pend_space();
      ++i;
      continue;
    }
    if (is_word_start(c)) {
      const std::size_t start = i;
      while (i < sql.size() && is_word_char(sql[i])) ++i;
      const std::string_view word = sql.substr(start, i - start);
      const std::string lowered = lower_copy(word);
      if (sqltext::is_keyword(lowered)) {
        out += lowered;
      } else {
        out += word;
      }
      continue;
    }
    out.push_back(c);
    ++i;
  }

  while (!out.empty() && (out.back() == ' ' || out.back() == ';')) out.pop_back();
  return out;
}

std::vector<std::string> extract_identifiers(std::string_view sql) {
  std::vector<std::string> ids;
  std::unordered_set<std::string> seen;
  auto emit = [&](std::string id) {
    if (id.empty()) return;
    if (seen.insert(id).second) ids.push_back(std::move(id));
  };

  std::size_t i = 0;
  while (i < sql.size()) {
    const std::size_t past_comment = skip_comment(sql, i);
    if (past_comment != i) {
      i = past_comment;
      continue;
    }
    const char c = sql[i];
    if (c == '\'') {
      i = skip_quoted(sql, i, c);
      continue;
    }
    if (c == '"') {
      // Quoted identifier: the region content is one identifier.
      std::string content;
      ++i;
      while (i < sql.size()) {
        if (sql[i] == '"') {
          if (i + 1 < sql.size() && sql[i + 1] == '"') {
            content.push_back('"');
            i += 2;
            continue;
          }
          ++i;
          break;
        }
        content.push_back(sql[i]);
        ++i;
      }
      emit(lower_copy(content));
      continue;
    }
    if (is_word_start(c)) {
      const std::size_t start = i;
      while (i < sql.size() && is_word_char(sql[i])) ++i;
      std::string lowered = lower_copy(sql.substr(start, i - start));
      if (!sqltext::is_keyword(lowered)) emit(std::move(lowered));
      continue;
    }
    ++i;
  }
  return ids;
}

bool mentions_any_identifier(std::string_view text,
                             const std::vector<std::string>& identifiers) {
  if (identifiers.empty() || text.empty()) return false;
  const std::string haystack = lower_copy(text);
  for (const auto& raw : identifiers) {
    const std::string id = lower_copy(raw);
    if (id.empty()) continue;
    std::size_t pos = 0;
    while ((pos = haystack.find(id, pos)) != std::string::npos) {
      const bool left_ok = pos == 0 || !is_word_char(haystack[pos - 1]);
      const std::size_t end = pos + id.size();
      const bool right_ok = end >= haystack.size() || !is_word_char(haystack[end]);
      if (left_ok && right_ok) return true;
      ++pos;
    }
  }
  return false;
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 14695981039346656037ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  return h;
}

std::string digest_hex(std::string_view bytes) {
  static const char* kHex = "0123456789abcdef";
  std::uint64_t h = fnv1a64(bytes);
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = kHex[h & 0xF];
    h >>= 4;
  }
  return out;
}

}  // namespace qrw
