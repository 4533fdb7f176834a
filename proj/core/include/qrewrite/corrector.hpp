#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "qrewrite/budget.hpp"
#include "qrewrite/db.hpp"
#include "qrewrite/llm.hpp"
#include "qrewrite/types.hpp"

namespace qrw {

enum class CorrectionStage { Semantic, Syntax };

const char* to_string(CorrectionStage stage);

struct CorrectionIteration {
  std::string candidate_sql;
  std::string verdict_or_error;  // check reply (semantic) or explain error (syntax)
  std::string revised_sql;       // equals candidate_sql when nothing changed
};

// Audit record of one correction loop. converged means the loop's own check
// passed: the model affirmed equivalence, or EXPLAIN accepted the SQL.
struct CorrectionTrace {
  CorrectionStage stage = CorrectionStage::Semantic;
  std::vector<CorrectionIteration> iterations;
  bool converged = false;
  std::size_t iterations_used = 0;
  std::string note;  // set when the loop ended for a reason other than its check
};

struct CorrectorOptions {
  std::size_t max_iter = 5;
  // The semantic conversation grows across iterations; past this many
  // characters it restarts from just the original and the latest candidate.
  std::size_t conversation_char_budget = 48000;
};

struct CorrectionResult {
  CandidateRewrite candidate;
  CorrectionTrace semantic;
  CorrectionTrace syntax;
};

// Two-stage counterexample-guided correction. The semantic loop keeps one
// growing conversation per candidate: check, then (when the model finds a
// counterexample) ask for a repaired q2, then check again. The syntax loop
// probes EXPLAIN and feeds the engine's error text back verbatim. Stages
// never interleave, and a semantically unconverged candidate still enters
// the syntax stage: the differential tester is the final arbiter.
class Corrector {
 public:
  Corrector(LlmClient& llm, BudgetScope& scope, CorrectorOptions options = {});

  std::pair<CandidateRewrite, CorrectionTrace> correct_semantics(
      const Query& original, CandidateRewrite candidate);

  std::pair<CandidateRewrite, CorrectionTrace> correct_syntax(
      const Query& original, CandidateRewrite candidate, DbSession& target);

  CorrectionResult correct(const Query& original, CandidateRewrite candidate,
                           DbSession& target);

 private:
  LlmClient& llm_;
  BudgetScope& scope_;
  CorrectorOptions options_;
};

}  // namespace qrw
