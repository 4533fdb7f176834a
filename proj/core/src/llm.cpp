#include "qrewrite/llm.hpp"

#include <cctype>
#include <chrono>
#include <cstring>
#include <stdexcept>
#include <thread>

#include "qrewrite/errors.hpp"
#include "qrewrite/sql_text.hpp"

namespace qrw {
namespace {

std::string lower_copy(const std::string& s) {
  std::string out = s;
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b])) != 0) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1])) != 0) --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::string current;
  for (char c : text) {
    if (c == '\n') {
      lines.push_back(current);
      current.clear();
    } else if (c != '\r') {
      current.push_back(c);
    }
  }
  lines.push_back(current);
  return lines;
}

const std::string& require_text(const Bindings& b, const char* slot) {
  auto it = b.text.find(slot);
  if (it == b.text.end() || it->second.empty()) {
    throw MissingSlot(std::string("unbound template slot: ") + slot);
  }
  return it->second;
}

const std::vector<std::string>& require_list(const Bindings& b, const char* slot) {
  auto it = b.lists.find(slot);
  if (it == b.lists.end() || it->second.empty()) {
    throw MissingSlot(std::string("unbound or empty list slot: ") + slot);
  }
  return it->second;
}

std::string rewrite_instruction() {
  return "Rewrite this query to improve performance. Describe the rewrite rules "
         "you are using (you must not include any specific query details in the "
         "rules, e.g., table names, column names, etc). Be concise.";
}

// True when `line`, already trimmed and lowercased, opens a SQL statement.
bool opens_sql(const std::string& line) {
  for (const char* kw : {"select", "with"}) {
    const std::size_t n = std::strlen(kw);
    if (line.compare(0, n, kw) == 0 &&
        (line.size() == n ||
         (std::isalnum(static_cast<unsigned char>(line[n])) == 0 && line[n] != '_'))) {
      return true;
    }
  }
  return false;
}

// Returns the content of a bullet or "1." style list line, or nullopt.
std::optional<std::string> list_item(const std::string& raw) {
  std::string line = trim(raw);
  if (line.empty()) return std::nullopt;
  if (line[0] == '-' || line[0] == '*') {
    if (line.size() > 1 && line[1] == ' ') return trim(line.substr(2));
    return std::nullopt;
  }
  if (line.size() >= 3 && line.compare(0, 3, "\xe2\x80\xa2") == 0) {
    return trim(line.substr(3));
  }
  std::size_t i = 0;
  while (i < line.size() && std::isdigit(static_cast<unsigned char>(line[i])) != 0) ++i;
  if (i > 0 && i < line.size() && (line[i] == '.' || line[i] == ')')) {
    return trim(line.substr(i + 1));
  }
  return std::nullopt;
}

bool is_fence(const std::string& raw) { return trim(raw).compare(0, 3, "```") == 0; }

}  // namespace

const char* to_string(TemplateId id) {
  switch (id) {
    case TemplateId::ZeroShotRewrite: return "zero_shot_rewrite";
    case TemplateId::HintedRewrite: return "hinted_rewrite";
    case TemplateId::GroupPredict: return "group_predict";
    case TemplateId::SemanticCheck: return "semantic_check";
    case TemplateId::SemanticFix: return "semantic_fix";
    case TemplateId::ConditionElicit: return "condition_elicit";
    case TemplateId::SyntaxFix: return "syntax_fix";
  }
  return "unknown";
}

std::optional<TemplateId> template_from_string(const std::string& name) {
  for (TemplateId id :
       {TemplateId::ZeroShotRewrite, TemplateId::HintedRewrite, TemplateId::GroupPredict,
        TemplateId::SemanticCheck, TemplateId::SemanticFix, TemplateId::ConditionElicit,
        TemplateId::SyntaxFix}) {
    if (name == to_string(id)) return id;
  }
  return std::nullopt;
}

const char* to_string(Role role) {
  switch (role) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "unknown";
}

bool Conversation::well_formed() const {
  if (turns.empty()) return false;
  std::size_t i = 0;
  if (turns[0].role == Role::System) i = 1;
  if (i >= turns.size()) return false;
  Role expect = Role::User;
  for (; i < turns.size(); ++i) {
    if (turns[i].role != expect) return false;
    expect = expect == Role::User ? Role::Assistant : Role::User;
  }
  return true;
}

std::string conversation_text(const Conversation& conv) {
  std::string out;
  for (const auto& turn : conv.turns) {
    out += to_string(turn.role);
    out += '\n';
    out += turn.text;
    out += '\n';
  }
  return out;
}

std::string conversation_digest(const Conversation& conv) {
  return digest_hex(conversation_text(conv));
}

Conversation render(TemplateId id, const Bindings& bindings) {
  Conversation conv;
  conv.template_id = id;
  std::string text;
  switch (id) {
    case TemplateId::ZeroShotRewrite: {
      text = require_text(bindings, "query") + "\n" + rewrite_instruction();
      break;
    }
    case TemplateId::HintedRewrite: {
      text = require_text(bindings, "query") + "\n" + rewrite_instruction() +
             "\nHere are some hints that you might consider when rewriting the query:";
      for (const auto& hint : require_list(bindings, "hints")) {
        text += "\n" + hint;
      }
      break;
    }
    case TemplateId::GroupPredict: {
      text = require_text(bindings, "rule") +
             "\nPlease select the rewrite rule that is strictly the same as the "
             "above rule and give your explanation (just give one answer). If not, "
             "please select the first item \"Unseen rule\".\nOptions:\n1. Unseen rule";
      int option = 2;
      for (const auto& candidate : require_list(bindings, "candidates")) {
        text += "\n" + std::to_string(option) + ". " + candidate;
        ++option;
      }
      break;
    }
    case TemplateId::SemanticCheck: {
      text = "q1:" + require_text(bindings, "original") + "\nq2:" +
             require_text(bindings, "candidate") +
             "\nq1 is the original query, q2 is the rewritten query of q1.\n"
             "For q1, break it down step by step and then describe what it does in "
             "one sentence. Do the same for q2.\n"
             "Give an example, using tables, to show that these two queries are not "
             "equivalent if there's any such case. Otherwise, just say they are "
             "equivalent.";
      break;
    }
    case TemplateId::SemanticFix: {
      text = "Based on your analysis, which part of q2 should be modified so that "
             "it becomes equivalent to q1? Show the modified version of q2.";
      break;
    }
    case TemplateId::ConditionElicit: {
      text = require_text(bindings, "rule") +
             "\nSpecify the conditions for applying the rule. Be concise.";
      break;
    }
    case TemplateId::SyntaxFix: {
      text = "q1:" + require_text(bindings, "original") + "\nq2:" +
             require_text(bindings, "candidate") +
             "\nq1 is the original query, q2 is the rewritten query of q1. Running "
             "q2 failed with this error:\n" +
             require_text(bindings, "error") +
             "\nFix q2 so that it runs without errors and stays equivalent to q1. "
             "Return only the corrected SQL.";
      break;
    }
  }
  conv.add(Role::User, std::move(text));
  return conv;
}

ParsedRewrite parse_rewrite_response(const std::string& text) {
  if (trim(text).empty()) throw std::invalid_argument("empty LLM reply");
  const std::vector<std::string> lines = split_lines(text);

  std::string sql;
  std::size_t sql_end = 0;  // index one past the last SQL line
  bool found = false;

  for (std::size_t i = 0; i < lines.size() && !found; ++i) {
    if (!is_fence(lines[i])) continue;
    std::string block;
    std::size_t j = i + 1;
    for (; j < lines.size() && !is_fence(lines[j]); ++j) {
      if (!block.empty()) block += '\n';
      block += lines[j];
    }
    if (!trim(block).empty()) {
      sql = trim(block);
      sql_end = j < lines.size() ? j + 1 : j;
      found = true;
    } else {
      i = j;  // empty block: keep scanning past it
    }
  }

  if (!found) {
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (!opens_sql(lower_copy(trim(lines[i])))) continue;
      std::string block;
      std::size_t j = i;
      for (; j < lines.size(); ++j) {
        if (trim(lines[j]).empty() || list_item(lines[j]) || is_fence(lines[j])) break;
        if (!block.empty()) block += '\n';
        block += lines[j];
      }
      sql = trim(block);
      sql_end = j;
      found = true;
      break;
    }
  }

  if (!found || sql.empty()) throw NoSqlFound("reply contains no SQL statement");

  ParsedRewrite out;
  out.sql = sql;
  for (std::size_t i = sql_end; i < lines.size(); ++i) {
    if (auto item = list_item(lines[i]); item && !item->empty()) {
      out.rules.push_back(*item);
    }
  }
  return out;
}

EquivalenceVerdict parse_equivalence_verdict(const std::string& text) {
  EquivalenceVerdict verdict;
  verdict.payload = text;
  const std::string lower = lower_copy(text);
  static const char* kWord = "equivalent";
  const std::size_t word_len = std::strlen(kWord);

  bool affirmed = false;
  std::size_t pos = 0;
  while ((pos = lower.find(kWord, pos)) != std::string::npos) {
    // Negation: "not ..."/"n't ..." shortly before, or a fused negative prefix.
    const std::size_t window_begin = pos > 32 ? pos - 32 : 0;
    const std::string window = lower.substr(window_begin, pos - window_begin);
    const bool fused_negative =
        (pos >= 2 && lower.compare(pos - 2, 2, "in") == 0) ||
        (pos >= 3 && lower.compare(pos - 3, 3, "non") == 0) ||
        (pos >= 4 && lower.compare(pos - 4, 4, "non-") == 0);
    if (fused_negative || window.find("not ") != std::string::npos ||
        window.find("n't ") != std::string::npos) {
      verdict.equivalent = false;
      return verdict;
    }
    std::size_t after = pos + word_len;
    while (after < lower.size() && lower[after] == ' ') ++after;
    if (after >= lower.size() || lower[after] != '?') affirmed = true;
    pos += word_len;
  }

  verdict.equivalent = affirmed;
  return verdict;
}

void UsageLedger::add(const UsageRecord& record) {
  std::lock_guard<std::mutex> lock(mu_);
  ++totals_.calls;
  totals_.tokens_in += record.tokens_in;
  totals_.tokens_out += record.tokens_out;
  totals_.cost += record.cost;
  totals_.latency_s += record.latency_s;
  ++totals_.calls_by_template[to_string(record.template_id)];
}

UsageTotals UsageLedger::totals() const {
  std::lock_guard<std::mutex> lock(mu_);
  return totals_;
}

LlmClient::LlmClient(std::shared_ptr<LlmBackend> backend, LlmRates rates,
                     std::shared_ptr<UsageLedger> ledger, int max_retries,
                     double backoff_s)
    : backend_(std::move(backend)),
      rates_(rates),
      ledger_(std::move(ledger)),
      max_retries_(max_retries),
      backoff_s_(backoff_s) {
  if (!backend_) throw ConfigError("LLM backend not configured");
  if (!ledger_) ledger_ = std::make_shared<UsageLedger>();
  if (rates_.in_per_1k < 0 || rates_.out_per_1k < 0) {
    throw ConfigError("negative LLM token rates");
  }
}

CompletionResult LlmClient::complete(const Conversation& conversation,
                                     BudgetScope& scope) {
  if (conversation.turns.empty()) throw std::invalid_argument("empty conversation");
  if (!conversation.well_formed()) {
    throw std::invalid_argument("conversation turns out of order");
  }
  if (scope.exhausted()) throw BudgetExhausted("budget exhausted before LLM call");

  int attempt = 0;
  for (;;) {
    try {
      const BackendReply reply = backend_->complete(conversation);
      UsageRecord usage;
      usage.template_id = conversation.template_id;
      usage.tokens_in = reply.tokens_in;
      usage.tokens_out = reply.tokens_out;
      usage.cost = static_cast<double>(reply.tokens_in) * rates_.in_per_1k / 1000.0 +
                   static_cast<double>(reply.tokens_out) * rates_.out_per_1k / 1000.0;
      usage.latency_s = reply.latency_s;
      ledger_->add(usage);
      scope.debit_money(usage.cost);
      scope.debit_time(usage.latency_s);
      scope.note_llm_call();
      return {reply.text, usage};
    } catch (const TransportError&) {
      ++attempt;
      if (attempt > max_retries_) throw;
      if (backoff_s_ > 0) {
        std::this_thread::sleep_for(
            std::chrono::duration<double>(backoff_s_ * attempt));
      }
    }
  }
}

}  // namespace qrw
