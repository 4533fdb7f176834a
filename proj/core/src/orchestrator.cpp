#include "qrewrite/orchestrator.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cstdio>
#include <set>
#include <thread>

#include "qrewrite/errors.hpp"
#include "qrewrite/sql_text.hpp"

namespace qrw {

void RunConfig::validate() const {
  if (max_total_rounds == 0) throw ConfigError("max_total_rounds must be positive");
  if (zero_shot_rounds > max_total_rounds) {
    throw ConfigError("zero_shot_rounds must not exceed max_total_rounds");
  }
  if (theta < 1.0) throw ConfigError("theta must be at least 1");
  if (workers == 0) throw ConfigError("workers must be positive");
  if (evaluator.repetitions < 1) throw ConfigError("repetitions must be positive");
  if (per_query_seconds < 0) throw ConfigError("per-query budget must not be negative");
}

namespace {

std::string trim_copy(const std::string& s) {
  std::size_t b = 0;
  std::size_t e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
      .count();
}

std::string format_ratio(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

CorrectionSummary summarize(const CorrectionTrace& trace) {
  return {trace.iterations_used, trace.converged, trace.note};
}

}  // namespace

Orchestrator::Orchestrator(RunConfig config, LlmClient& llm, Nlr2Repository& repo,
                           DbEngine& benchmark, std::vector<SeededInstance> samples)
    : config_(std::move(config)),
      llm_(llm),
      repo_(repo),
      benchmark_(benchmark),
      samples_(std::move(samples)) {}

Orchestrator::Attempt Orchestrator::process_query(const Query& query,
                                                  const HintSelection& hints,
                                                  Budget& global) {
  Attempt att;
  BudgetScope scope(global, config_.per_query_seconds);

  try {
    Bindings bindings;
    bindings.text["query"] = query.sql;
    TemplateId suggest_template = TemplateId::ZeroShotRewrite;
    if (!hints.hints.empty()) {
      // Hinted round with a populated repository; otherwise this quietly
      // stays a zero-shot prompt.
      suggest_template = TemplateId::HintedRewrite;
      std::vector<std::string> lines;
      for (const auto& hint : hints.hints) lines.push_back(hint.description);
      bindings.lists["hints"] = lines;
    }

    const CompletionResult suggestion =
        llm_.complete(render(suggest_template, bindings), scope);

    ParsedRewrite parsed;
    try {
      parsed = parse_rewrite_response(suggestion.text);
    } catch (const NoSqlFound&) {
      att.diagnosis = "no-candidate";
      att.detail = "the suggestion contained no SQL";
      return att;
    }

    if (canonicalize_sql(parsed.sql) == query.canonical_sql) {
      att.identity_fallback = true;
      att.diagnosis = "no-improvement";
      att.detail = "the suggestion equals the original query";
      return att;
    }

    CandidateRewrite candidate(query.id, parsed.sql);
    Explanation explanation;
    for (const auto& rule : parsed.rules) {
      const std::string text = trim_copy(rule);
      if (text.empty()) continue;
      if (std::find(explanation.rules.begin(), explanation.rules.end(), text) !=
          explanation.rules.end()) {
        continue;
      }
      explanation.rules.push_back(text);
    }
    for (const auto& rule : explanation.rules) {
      std::string condition;
      if (!repo_.has_rule_text(rule)) {
        const CompletionResult elicited = llm_.complete(
            render(TemplateId::ConditionElicit, Bindings::one("rule", rule)), scope);
        condition = trim_copy(elicited.text);
      }
      explanation.conditions.push_back(condition);
    }

    const auto probe_session = benchmark_.open();
    CorrectorOptions copts;
    copts.max_iter = config_.max_iter;
    Corrector corrector(llm_, scope, copts);
    CorrectionResult corrected = corrector.correct(query, candidate, *probe_session);
    att.semantic = summarize(corrected.semantic);
    att.syntax = summarize(corrected.syntax);
    candidate = std::move(corrected.candidate);

    if (!corrected.syntax.converged) {
      att.diagnosis = scope.exhausted() ? "budget" : "syntax-stuck";
      att.detail = corrected.syntax.iterations.empty()
                       ? corrected.syntax.note
                       : corrected.syntax.iterations.back().verdict_or_error;
      return att;
    }

    if (canonicalize_sql(candidate.sql) == query.canonical_sql) {
      att.identity_fallback = true;
      att.diagnosis = "no-improvement";
      att.detail = "correction converged back to the original query";
      return att;
    }

    const auto eq_start = std::chrono::steady_clock::now();
    const DifferentialVerdict equivalence =
        check_equivalence(query.sql, candidate.sql, samples_, config_.evaluator);
    scope.debit_time(seconds_since(eq_start));
    scope.note_db_run();

    if (!equivalence.equivalent) {
      att.diagnosis = "inequivalent";
      att.detail = equivalence.witness.has_value()
                       ? equivalence.witness->diff + " (instance " +
                             equivalence.witness->instance + ")"
                       : "differential test failed";
      return att;
    }

    PerformanceVerdict perf;
    {
      std::unique_lock<std::mutex> timing_lock(timing_mu_, std::defer_lock);
      if (config_.mode == SpeedupMode::Latency) timing_lock.lock();
      const auto perf_start = std::chrono::steady_clock::now();
      perf = measure_speedup(query.sql, candidate.sql, config_.mode, benchmark_,
                             config_.evaluator);
      scope.debit_time(seconds_since(perf_start));
      scope.note_db_run();
    }

    // Every equivalent rewrite feeds the repository, improvement or not:
    // the observed speedup is evidence about the rules either way.
    LlmGroupArbiter arbiter(llm_, scope);
    std::vector<std::string> rule_ids;
    for (std::size_t i = 0; i < explanation.rules.size(); ++i) {
      try {
        const AddRuleResult added =
            repo_.add_rule(explanation.rules[i], explanation.conditions[i],
                           query.id, perf.speedup, arbiter);
        rule_ids.push_back(added.rule_id);
      } catch (const std::exception&) {
        // rule embedding failed; the rewrite itself is unaffected
      }
    }

    RewriteOutcome outcome;
    outcome.query = query;
    outcome.rewrite = candidate;
    outcome.explanation = explanation;
    outcome.equivalent = true;
    outcome.speedup = perf.speedup;
    outcome.accepted = perf.speedup > config_.theta;

    if (outcome.accepted) {
      if (query.embedding.has_value()) {
        repo_.record_query(query.id, *query.embedding, rule_ids);
      }
      att.accepted = true;
      att.outcome = std::move(outcome);
      return att;
    }

    att.diagnosis = perf.classification == SpeedupClass::Regression
                        ? "regression"
                        : "no-improvement";
    att.detail = "speedup " + format_ratio(perf.speedup) + " at theta " +
                 format_ratio(config_.theta);
    return att;
  } catch (const BudgetExhausted& e) {
    att.diagnosis = "budget";
    att.detail = e.what();
    return att;
  } catch (const std::exception& e) {
    att.diagnosis = scope.exhausted() ? "budget" : "error";
    att.detail = e.what();
    return att;
  }
}

RunReport Orchestrator::rewrite_workload(const std::vector<Query>& queries) {
  config_.validate();
  if (queries.empty()) throw ConfigError("workload is empty");
  config_.evaluator.theta = config_.theta;

  Budget global(config_.budget_seconds, config_.budget_money);

  std::vector<Query> workload = queries;
  for (auto& q : workload) {
    if (!q.embedding.has_value()) {
      q.embedding = repo_.provider().embed(q.canonical_sql);
    }
  }

  RunReport report;
  report.queries_total = workload.size();
  report.mode = config_.mode;
  report.theta = config_.theta;

  std::map<std::string, RewriteOutcome> accepted;
  std::map<std::string, QueryFailure> last_failure;
  std::map<std::string, QueryAudit> audits;
  for (const auto& q : workload) audits[q.id].query_id = q.id;

  std::vector<std::size_t> pending(workload.size());
  for (std::size_t i = 0; i < workload.size(); ++i) pending[i] = i;

  // The stagnation break compares accepted sets across rounds; it can only
  // fire once something has been accepted, else a slow workload would stop
  // after one fruitless round instead of using its remaining rounds.
  std::set<std::pair<std::string, std::string>> prev_res;

  for (std::size_t round = 1; round <= config_.max_total_rounds; ++round) {
    if (pending.empty()) break;
    if (global.exhausted()) {
      report.truncated = true;
      break;
    }

    const bool hinted = round > config_.zero_shot_rounds;
    RoundSummary summary;
    summary.index = round;
    summary.hinted = hinted;

    {
      BudgetScope maintenance(global, config_.per_query_seconds);
      LlmGroupArbiter arbiter(llm_, maintenance);
      try {
        summary.parked_retried = repo_.retry_parked(arbiter);
      } catch (const std::exception&) {
        // parked rules just stay parked
      }
    }

    // Strict round barrier: every pending query's hints are chosen before
    // any query of this round runs, so round r sees only rounds < r.
    std::map<std::string, HintSelection> hints;
    if (hinted) {
      for (std::size_t idx : pending) {
        const Query& q = workload[idx];
        HintSelection selection =
            repo_.select_hints(*q.embedding, config_.k_neighbors, config_.k_groups);
        summary.hints_offered += selection.hints.size();
        hints[q.id] = std::move(selection);
      }
    }

    std::vector<std::optional<Attempt>> attempts(pending.size());
    const HintSelection no_hints;
    auto run_one = [&](std::size_t position) {
      const Query& q = workload[pending[position]];
      const auto hit = hints.find(q.id);
      attempts[position] =
          process_query(q, hit == hints.end() ? no_hints : hit->second, global);
    };

    const std::size_t width = std::min<std::size_t>(config_.workers, pending.size());
    if (width <= 1) {
      for (std::size_t p = 0; p < pending.size(); ++p) {
        if (global.exhausted()) break;
        run_one(p);
      }
    } else {
      std::atomic<std::size_t> cursor{0};
      std::vector<std::thread> pool;
      pool.reserve(width);
      for (std::size_t w = 0; w < width; ++w) {
        pool.emplace_back([&] {
          while (true) {
            const std::size_t p = cursor.fetch_add(1);
            if (p >= pending.size()) break;
            if (global.exhausted()) break;
            run_one(p);
          }
        });
      }
      for (auto& t : pool) t.join();
    }

    std::vector<std::size_t> still_pending;
    for (std::size_t p = 0; p < pending.size(); ++p) {
      const std::size_t idx = pending[p];
      const Query& q = workload[idx];
      if (!attempts[p].has_value()) {
        last_failure[q.id] = {q.id, "budget", "run budget exhausted before this query's turn"};
        still_pending.push_back(idx);
        continue;
      }
      Attempt& att = *attempts[p];
      summary.attempted++;
      QueryAudit& audit = audits[q.id];
      audit.attempts++;
      audit.semantic = att.semantic;
      audit.syntax = att.syntax;

      if (att.accepted) {
        auto it = accepted.find(q.id);
        if (it == accepted.end() || att.outcome.speedup > it->second.speedup) {
          accepted[q.id] = att.outcome;
        }
        summary.newly_accepted++;
        if (config_.requeue_accepted) still_pending.push_back(idx);
        continue;
      }

      last_failure[q.id] = {q.id, att.diagnosis, att.detail};
      if (!att.identity_fallback) still_pending.push_back(idx);
    }
    pending = std::move(still_pending);
    report.rounds.push_back(summary);

    if (global.exhausted()) {
      report.truncated = true;
      break;
    }

    std::set<std::pair<std::string, std::string>> res;
    for (const auto& [id, outcome] : accepted) {
      res.insert({id, canonicalize_sql(outcome.rewrite.sql)});
    }
    if (!res.empty() && res == prev_res) {
      report.converged = true;
      break;
    }
    prev_res = std::move(res);
  }

  for (const auto& q : workload) {
    const auto it = accepted.find(q.id);
    if (it != accepted.end()) {
      report.outcomes.push_back(it->second);
      report.queries_accepted++;
    } else {
      RewriteOutcome fallback;
      fallback.query = q;
      fallback.rewrite = CandidateRewrite(q.id, q.sql);
      fallback.equivalent = true;
      fallback.speedup = 1.0;
      fallback.accepted = false;
      report.outcomes.push_back(std::move(fallback));
      const auto fit = last_failure.find(q.id);
      if (fit != last_failure.end()) {
        report.failures.push_back(fit->second);
      } else {
        report.failures.push_back(
            {q.id, "budget", "run budget exhausted before the first attempt"});
      }
    }
    report.audits.push_back(audits[q.id]);
  }

  report.usage = llm_.ledger().totals();
  report.repo = repo_.stats();
  return report;
}

}  // namespace qrw
