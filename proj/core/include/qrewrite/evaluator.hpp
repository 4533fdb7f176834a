#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "qrewrite/db.hpp"
#include "qrewrite/seed.hpp"

namespace qrw {

struct EquivalenceWitness {
  std::uint64_t instance_seed = 0;
  std::string instance;  // database the disagreement showed up on
  std::string diff;      // short human-readable difference
};

// Outcome of differential testing over the seeded sample instances.
// Not a proof: equivalent means no instance produced a witness.
struct DifferentialVerdict {
  bool equivalent = false;
  std::optional<EquivalenceWitness> witness;
  std::size_t instances_tested = 0;
  // The two queries disagree about having a top-level ORDER BY; rows were
  // compared as multisets, which can miss pure ordering differences.
  bool ordering_uncertain = false;
};

enum class SpeedupMode { Latency, ExplainCost };
enum class SpeedupClass { Regression, Neutral, Improved };

const char* to_string(SpeedupMode mode);
const char* to_string(SpeedupClass cls);

SpeedupMode speedup_mode_from_string(const std::string& name);

struct PerformanceVerdict {
  SpeedupMode mode = SpeedupMode::Latency;
  double original_metric = 0.0;  // seconds or plan cost
  double rewrite_metric = 0.0;
  double speedup = 1.0;          // original / rewrite
  SpeedupClass classification = SpeedupClass::Neutral;
  bool rewrite_timed_out = false;
};

struct EvaluatorOptions {
  double theta = 1.05;              // Improved needs speedup above this
  int repetitions = 3;              // timed runs per query
  double equivalence_timeout_s = 30.0;
  double original_timeout_s = 300.0;
  // The rewrite's statement timeout scales with the measured original:
  // factor x original mean, floored and capped.
  double rewrite_timeout_factor = 10.0;
  double rewrite_timeout_floor_s = 1.0;
  double rewrite_timeout_cap_s = 300.0;
  CacheResetHook cache_reset;
};

// True when the query's outermost block carries an ORDER BY: lexical scan
// at paren depth zero, quote- and comment-aware. Subqueries and CTE bodies
// sit inside parentheses, so their ORDER BY never triggers this.
bool has_outer_order_by(const std::string& sql);

// Runs both queries on every seeded instance and compares observable
// behavior: canonical result tables (ordered when both queries order their
// output, multisets otherwise), or the error text when both fail the same
// way. Column count must match and names compare case-insensitively. Any
// timeout makes the verdict non-equivalent. Symmetric in q and q_prime;
// canonically identical queries short-circuit without touching a database.
DifferentialVerdict check_equivalence(const std::string& q, const std::string& q_prime,
                                      const std::vector<SeededInstance>& instances,
                                      const EvaluatorOptions& options = {});

// Measures original/rewrite on the benchmark target. Latency mode times
// both with repeated runs (cache reset between runs); ExplainCost mode
// compares plan costs from one session. A rewrite that times out is a
// Regression with speedup = original / timeout bound. Call this only for
// rewrites that passed the equivalence check.
PerformanceVerdict measure_speedup(const std::string& q, const std::string& q_prime,
                                   SpeedupMode mode, DbEngine& benchmark,
                                   const EvaluatorOptions& options = {});

}  // namespace qrw
