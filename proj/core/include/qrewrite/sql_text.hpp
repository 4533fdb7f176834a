#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace qrw {

// Normalizes a SQL statement for textual comparison and digesting:
// collapses runs of whitespace to single spaces, lowercases everything
// outside single-quoted string literals, strips SQL comments and any
// trailing semicolons. Quoted literal content is preserved byte for
// byte. Idempotent: canonicalize_sql(canonicalize_sql(s)) == canonicalize_sql(s).
std::string canonicalize_sql(std::string_view sql);

// Extracts candidate identifiers (lowercased) from a SQL statement:
// word tokens outside string literals that are not SQL keywords.
// Used to detect query-specific names leaking into rule text.
std::vector<std::string> extract_identifiers(std::string_view sql);

// True when `text` mentions any of `identifiers` as a standalone word,
// case-insensitively. String-literal content inside `text` counts too;
// a rule that quotes a table name still leaks it.
bool mentions_any_identifier(std::string_view text,
                             const std::vector<std::string>& identifiers);

// 64-bit FNV-1a over raw bytes.
std::uint64_t fnv1a64(std::string_view bytes);

// fnv1a64 rendered as fixed-width lowercase hex, used as prompt digest.
std::string digest_hex(std::string_view bytes);

namespace sqltext {

// True for tokens in the keyword list used by canonicalize_sql. Exposed
// so identifier extraction and tests share one definition.
bool is_keyword(std::string_view lowercased_token);

}  // namespace sqltext

}  // namespace qrw
