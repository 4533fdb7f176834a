#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "qrewrite/budget.hpp"

namespace qrw {

enum class Role { System, User, Assistant };

enum class TemplateId {
  ZeroShotRewrite,
  HintedRewrite,
  GroupPredict,
  SemanticCheck,
  SemanticFix,
  ConditionElicit,
  SyntaxFix,
};

const char* to_string(TemplateId id);
std::optional<TemplateId> template_from_string(const std::string& name);
const char* to_string(Role role);

struct Turn {
  Role role;
  std::string text;
};

// One LLM exchange. Turns must alternate User/Assistant after any leading
// System turn; a conversation is never sent empty.
struct Conversation {
  TemplateId template_id = TemplateId::ZeroShotRewrite;
  std::vector<Turn> turns;

  void add(Role role, std::string text) { turns.push_back({role, std::move(text)}); }
  bool well_formed() const;
};

// Canonical byte serialization of a conversation, the basis for scripted
// replay keys. Stable across processes.
std::string conversation_text(const Conversation& conv);
std::string conversation_digest(const Conversation& conv);

// Slot bindings for render(). Hints and grouping candidates are list slots;
// everything else is a single text slot.
struct Bindings {
  std::map<std::string, std::string> text;
  std::map<std::string, std::vector<std::string>> lists;

  static Bindings one(const std::string& key, std::string value) {
    Bindings b;
    b.text[key] = std::move(value);
    return b;
  }
};

// Renders a template into a single-User-turn conversation. Throws
// MissingSlot when a required slot is unbound or a required list is empty.
Conversation render(TemplateId id, const Bindings& bindings);

struct ParsedRewrite {
  std::string sql;
  std::vector<std::string> rules;
};

// Extracts the candidate SQL (first fenced block, else first line starting
// with select/with) and the bulleted/enumerated one-line rules after it.
// Throws NoSqlFound when the reply has no SQL at all.
ParsedRewrite parse_rewrite_response(const std::string& text);

struct EquivalenceVerdict {
  bool equivalent = false;
  std::string payload;  // full reply, kept as counterexample material
};

// "not equivalent" anywhere wins; an unhedged "equivalent" affirms;
// anything else is ambiguous and defaults to not-equivalent.
EquivalenceVerdict parse_equivalence_verdict(const std::string& text);

struct UsageRecord {
  TemplateId template_id = TemplateId::ZeroShotRewrite;
  std::uint64_t tokens_in = 0;
  std::uint64_t tokens_out = 0;
  double cost = 0.0;
  double latency_s = 0.0;
};

struct UsageTotals {
  std::uint64_t calls = 0;
  std::uint64_t tokens_in = 0;
  std::uint64_t tokens_out = 0;
  double cost = 0.0;
  double latency_s = 0.0;
  std::map<std::string, std::uint64_t> calls_by_template;
};

class UsageLedger {
 public:
  void add(const UsageRecord& record);
  UsageTotals totals() const;

 private:
  mutable std::mutex mu_;
  UsageTotals totals_;
};

struct BackendReply {
  std::string text;
  std::uint64_t tokens_in = 0;
  std::uint64_t tokens_out = 0;
  double latency_s = 0.0;
};

class LlmBackend {
 public:
  virtual ~LlmBackend() = default;
  virtual BackendReply complete(const Conversation& conversation) = 0;
  virtual const char* name() const = 0;
};

// Replays a transcript of line-delimited JSON records
// {template_id, prompt_digest, reply[, tokens_in, tokens_out, latency_s]}.
// Lookup tries the exact (template_id, digest) queue first, then the
// template's wildcard queue (prompt_digest "*"), consuming one record per
// call in file order. A miss throws ScriptMiss naming the key.
class ScriptedBackend : public LlmBackend {
 public:
  static std::unique_ptr<ScriptedBackend> from_file(const std::string& path);
  static std::unique_ptr<ScriptedBackend> from_string(const std::string& jsonl);

  BackendReply complete(const Conversation& conversation) override;
  const char* name() const override { return "scripted"; }

  std::size_t remaining() const;

 private:
  struct Entry {
    std::string reply;
    std::uint64_t tokens_in = 0;
    std::uint64_t tokens_out = 0;
    double latency_s = 0.0;
  };
  // key: template name + '\n' + digest ("*" = wildcard)
  std::map<std::string, std::deque<Entry>> queues_;
  std::mutex mu_;

  void load(const std::string& jsonl, const std::string& origin);
};

struct LiveBackendConfig {
  std::string base_url;                       // e.g. https://api.example.com
  std::string path = "/v1/chat/completions";  // chat-completion endpoint
  std::string model;
  std::string api_key_env = "LLM_API_KEY";
  std::optional<double> temperature;  // absent = provider default
  double timeout_s = 120.0;
};

// Chat-completion HTTP backend. The API key is read from the environment
// variable named in the config; it never appears in config files or flags.
class LiveBackend : public LlmBackend {
 public:
  explicit LiveBackend(LiveBackendConfig config);
  BackendReply complete(const Conversation& conversation) override;
  const char* name() const override { return "live"; }

 private:
  LiveBackendConfig config_;
  std::string api_key_;
};

struct LlmRates {
  double in_per_1k = 0.0;
  double out_per_1k = 0.0;
};

struct CompletionResult {
  std::string text;
  UsageRecord usage;
};

// Front door for every LLM call: retries transport errors (2 retries with
// backoff), prices the call, debits the budget scope, and records usage.
class LlmClient {
 public:
  LlmClient(std::shared_ptr<LlmBackend> backend, LlmRates rates,
            std::shared_ptr<UsageLedger> ledger, int max_retries = 2,
            double backoff_s = 0.2);

  CompletionResult complete(const Conversation& conversation, BudgetScope& scope);

  UsageLedger& ledger() { return *ledger_; }
  LlmBackend& backend() { return *backend_; }

 private:
  std::shared_ptr<LlmBackend> backend_;
  LlmRates rates_;
  std::shared_ptr<UsageLedger> ledger_;
  int max_retries_;
  double backoff_s_;
};

}  // namespace qrw
