#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "qrewrite/embedding.hpp"
#include "qrewrite/llm.hpp"
#include "qrewrite/types.hpp"

namespace qrw {

// Geometric mean of positive values, overflow-safe for long inputs.
// Throws std::invalid_argument on an empty list or non-positive entries.
double geometric_mean(const std::vector<double>& values);

struct Nlr2 {
  std::string rule_id;
  std::string description;
  std::string condition;  // empty = not elicited
  std::string source_query_id;
  std::string group_id;  // empty = parked, awaiting group arbitration
  std::vector<double> observed_speedups;
};

struct RuleGroup {
  std::string group_id;
  std::string representative;  // rule_id, always a member
  std::vector<std::string> members;
  double benefit = 1.0;
};

struct QueryRecord {
  std::string query_id;
  std::vector<double> embedding;
  std::vector<std::string> rules;  // rules with an accepted rewrite for this query
};

// Decides which existing group a new rule belongs to. Candidates are
// (group_id, representative description) pairs from distinct groups;
// empty return = none of them (start a new group).
class GroupArbiter {
 public:
  virtual ~GroupArbiter() = default;
  virtual std::string predict(
      const std::string& rule_description,
      const std::vector<std::pair<std::string, std::string>>& candidates) = 0;
};

// LLM-backed arbitration: renders the group-prediction prompt and maps the
// reply back to a candidate by normalized containment, then by leading
// option number. "Unseen rule" or anything unmatched picks a new group
// (over-splitting is recoverable; wrong merging is not).
class LlmGroupArbiter : public GroupArbiter {
 public:
  LlmGroupArbiter(LlmClient& client, BudgetScope& scope)
      : client_(client), scope_(scope) {}
  std::string predict(
      const std::string& rule_description,
      const std::vector<std::pair<std::string, std::string>>& candidates) override;

  // Reply-to-candidate matching, exposed for direct testing.
  static std::string match_reply(
      const std::string& reply,
      const std::vector<std::pair<std::string, std::string>>& candidates);

 private:
  LlmClient& client_;
  BudgetScope& scope_;
};

struct AddRuleResult {
  std::string rule_id;
  std::string group_id;  // empty when parked
  bool created_rule = false;
  bool created_group = false;
  bool parked = false;
};

struct HintChoice {
  std::string rule_id;
  std::string description;
  std::string group_id;
  double score = 0.0;
  std::string from_query_id;  // neighbor the rule was taken from
};

struct HintSelection {
  std::vector<HintChoice> hints;  // descending score, one per group
  std::vector<std::pair<std::string, double>> neighbor_weights;  // query_id, weight
};

struct RepoStats {
  std::size_t rules = 0;
  std::size_t groups = 0;
  std::size_t parked = 0;
  std::size_t query_records = 0;
};

struct RepoOptions {
  std::size_t grouping_candidates = 3;  // proposed groups per arbitration
};

// The self-growing store of natural-language rewrite rules: groups
// semantically equivalent rules, tracks per-group benefit as the geometric
// mean of observed speedups, and picks the best hints for a new query.
// Single-writer, multi-reader.
class Nlr2Repository {
 public:
  explicit Nlr2Repository(std::shared_ptr<EmbeddingProvider> provider,
                          RepoOptions options = {});

  // Embeds the rule, proposes up to grouping_candidates groups by
  // deduplicated kNN, and arbitrates. Arbitration failure parks the rule
  // for a later retry; embedding failures propagate. Re-adding the same
  // description for the same source query appends the observation instead.
  AddRuleResult add_rule(const std::string& description, const std::string& condition,
                         const std::string& source_query_id, double speedup,
                         GroupArbiter& arbiter);

  // Returns the chosen group_id, or nullopt for a new group.
  std::optional<std::string> predict_group(
      const std::string& description,
      const std::vector<std::pair<std::string, std::string>>& candidates,
      GroupArbiter& arbiter) const;

  // Appends an observation and returns the recomputed benefit (for a
  // parked rule: the geometric mean of its own observations).
  double update_benefit(const std::string& rule_id, double speedup);

  // Remembers that `rule_ids` produced an accepted rewrite for this query.
  void record_query(const std::string& query_id, const std::vector<double>& embedding,
                    const std::vector<std::string>& rule_ids);

  // Retries arbitration for parked rules; returns how many got grouped.
  std::size_t retry_parked(GroupArbiter& arbiter);

  // Scores rule groups over the query's nearest recorded neighbors and
  // returns at most k_groups hints, one rule per group, each taken from
  // the most similar neighbor that used the group. Empty repository or an
  // un-embedded query yields an empty selection.
  HintSelection select_hints(const std::vector<double>& query_embedding,
                             std::size_t k_neighbors, std::size_t k_groups) const;

  std::optional<Nlr2> rule(const std::string& rule_id) const;
  std::optional<RuleGroup> group(const std::string& group_id) const;
  std::vector<RuleGroup> groups_by_benefit() const;  // descending benefit
  std::vector<Nlr2> all_rules() const;
  bool has_rule_text(const std::string& description) const;
  RepoStats stats() const;

  void save(const std::string& path) const;
  static std::shared_ptr<Nlr2Repository> load(
      const std::string& path, std::shared_ptr<EmbeddingProvider> provider,
      RepoOptions options = {});

  // Re-groups every foreign rule through the local arbitration pipeline
  // and remaps imported query records. Returns the number of rules added.
  std::size_t import_merge(const Nlr2Repository& other, GroupArbiter& arbiter);

  EmbeddingProvider& provider() { return *provider_; }

 private:
  AddRuleResult add_rule_locked(const std::string& description,
                                const std::string& condition,
                                const std::string& source_query_id,
                                const std::vector<double>& speedups,
                                GroupArbiter& arbiter);
  void recompute_benefit_locked(const std::string& group_id);
  std::vector<std::pair<std::string, std::string>> propose_candidates_locked(
      const std::vector<double>& embedding) const;
  std::string next_rule_id_locked();
  std::string next_group_id_locked();

  mutable std::mutex mu_;
  std::shared_ptr<EmbeddingProvider> provider_;
  RepoOptions options_;

  std::map<std::string, Nlr2> rules_;
  std::map<std::string, RuleGroup> groups_;
  std::map<std::string, QueryRecord> query_records_;
  std::map<std::string, std::vector<double>> rule_embeddings_;
  std::vector<std::string> rule_order_;   // insertion order of rule ids
  std::vector<std::string> group_order_;  // insertion order of group ids
  std::unique_ptr<VectorIndex> rule_index_;
  std::unique_ptr<VectorIndex> query_index_;
  std::size_t next_rule_ = 1;
  std::size_t next_group_ = 1;
};

}  // namespace qrw
