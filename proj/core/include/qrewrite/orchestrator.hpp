#pragma once

#include <cstddef>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "qrewrite/budget.hpp"
#include "qrewrite/corrector.hpp"
#include "qrewrite/db.hpp"
#include "qrewrite/evaluator.hpp"
#include "qrewrite/llm.hpp"
#include "qrewrite/rule_repo.hpp"
#include "qrewrite/seed.hpp"
#include "qrewrite/types.hpp"

namespace qrw {

struct RunConfig {
  std::size_t zero_shot_rounds = 4;  // rounds before hints activate
  std::size_t max_total_rounds = 5;
  double theta = 1.05;  // minimum desirable speedup for acceptance
  SpeedupMode mode = SpeedupMode::Latency;
  std::size_t k_neighbors = 5;
  std::size_t k_groups = 3;
  std::size_t max_iter = 5;  // per correction loop
  double per_query_seconds = 30.0;
  double budget_seconds = Budget::kUnlimited;
  double budget_money = Budget::kUnlimited;
  // Keep accepted queries in the pending set so later rounds may find a
  // faster rewrite (replacement only on strictly higher speedup).
  bool requeue_accepted = false;
  std::size_t workers = 1;
  EvaluatorOptions evaluator;  // theta is synced from the field above at run start

  void validate() const;  // throws ConfigError on invariant breaks
};

// Compact, deterministic digest of one correction loop for the report;
// the full iteration texts stay in memory only.
struct CorrectionSummary {
  std::size_t iterations_used = 0;
  bool converged = false;
  std::string note;
};

struct QueryFailure {
  std::string query_id;
  // no-candidate | syntax-stuck | inequivalent | regression |
  // no-improvement | budget | error
  std::string diagnosis;
  std::string detail;
};

struct QueryAudit {
  std::string query_id;
  std::size_t attempts = 0;  // rounds that reached the suggest step
  CorrectionSummary semantic;  // from the last attempt
  CorrectionSummary syntax;
};

struct RoundSummary {
  std::size_t index = 0;  // 1-based
  bool hinted = false;
  std::size_t attempted = 0;
  std::size_t newly_accepted = 0;
  std::size_t parked_retried = 0;
  std::size_t hints_offered = 0;  // hint lines across all queries this round
};

struct RunReport {
  std::vector<RewriteOutcome> outcomes;  // one per input query, workload order
  std::vector<QueryFailure> failures;    // final diagnosis per unaccepted query
  std::vector<QueryAudit> audits;        // workload order
  std::vector<RoundSummary> rounds;
  UsageTotals usage;
  RepoStats repo;
  bool truncated = false;  // run-wide budget ran out
  bool converged = false;  // accepted set stopped changing across a round
  std::size_t queries_total = 0;
  std::size_t queries_accepted = 0;
  SpeedupMode mode = SpeedupMode::Latency;
  double theta = 1.05;
};

// Drives the rewrite rounds: suggest (zero-shot, later hinted), elicit
// conditions for new rules, correct in two stages, test equivalence
// differentially, measure speedup, and feed accepted observations back
// into the rule repository. Terminates when the accepted set stops
// changing across a full round, the budget runs out, the round cap is
// reached, or no query remains pending.
class Orchestrator {
 public:
  Orchestrator(RunConfig config, LlmClient& llm, Nlr2Repository& repo,
               DbEngine& benchmark, std::vector<SeededInstance> samples);

  RunReport rewrite_workload(const std::vector<Query>& queries);

 private:
  struct Attempt {
    bool accepted = false;
    // The model handed back the original query: the query resolves to the
    // fallback (speedup 1.0) and leaves the pending set.
    bool identity_fallback = false;
    RewriteOutcome outcome;  // meaningful only when accepted
    std::string diagnosis;
    std::string detail;
    CorrectionSummary semantic;
    CorrectionSummary syntax;
  };

  Attempt process_query(const Query& query, const HintSelection& hints,
                        Budget& global);

  RunConfig config_;
  LlmClient& llm_;
  Nlr2Repository& repo_;
  DbEngine& benchmark_;
  std::vector<SeededInstance> samples_;
  std::mutex timing_mu_;  // latency measurements serialize run-wide
};

}  // namespace qrw
