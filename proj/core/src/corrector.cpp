#include "qrewrite/corrector.hpp"

#include "qrewrite/errors.hpp"

namespace qrw {

const char* to_string(CorrectionStage stage) {
  switch (stage) {
    case CorrectionStage::Semantic: return "semantic";
    case CorrectionStage::Syntax: return "syntax";
  }
  return "unknown";
}

Corrector::Corrector(LlmClient& llm, BudgetScope& scope, CorrectorOptions options)
    : llm_(llm), scope_(scope), options_(options) {}

namespace {

Conversation seed_check(const Query& original, const std::string& candidate_sql) {
  Bindings b;
  b.text["original"] = original.sql;
  b.text["candidate"] = candidate_sql;
  return render(TemplateId::SemanticCheck, b);
}

}  // namespace

std::pair<CandidateRewrite, CorrectionTrace> Corrector::correct_semantics(
    const Query& original, CandidateRewrite candidate) {
  if (Query::trimmed_empty(candidate.sql)) {
    throw std::invalid_argument("candidate sql is empty");
  }

  CorrectionTrace trace;
  trace.stage = CorrectionStage::Semantic;

  Conversation conv = seed_check(original, candidate.sql);
  const std::string fix_question = render(TemplateId::SemanticFix, Bindings{}).turns[0].text;

  for (std::size_t iter = 1; iter <= options_.max_iter; ++iter) {
    trace.iterations_used = iter;
    CorrectionIteration entry;
    entry.candidate_sql = candidate.sql;
    entry.revised_sql = candidate.sql;

    // The pending turn's template names the call for transcripts.
    conv.template_id = TemplateId::SemanticCheck;
    CompletionResult check;
    try {
      check = llm_.complete(conv, scope_);
    } catch (const BudgetExhausted& e) {
      entry.verdict_or_error = std::string("budget exhausted: ") + e.what();
      trace.iterations.push_back(std::move(entry));
      trace.note = "budget exhausted during equivalence check";
      return {std::move(candidate), std::move(trace)};
    }
    entry.verdict_or_error = check.text;
    conv.add(Role::Assistant, check.text);

    const EquivalenceVerdict verdict = parse_equivalence_verdict(check.text);
    if (verdict.equivalent) {
      trace.iterations.push_back(std::move(entry));
      trace.converged = true;
      if (candidate.stage < RewriteStage::SemanticallyCorrected) {
        candidate.stage = RewriteStage::SemanticallyCorrected;
      }
      return {std::move(candidate), std::move(trace)};
    }

    conv.add(Role::User, fix_question);
    conv.template_id = TemplateId::SemanticFix;
    CompletionResult fix;
    try {
      fix = llm_.complete(conv, scope_);
    } catch (const BudgetExhausted& e) {
      entry.verdict_or_error += "\n[budget exhausted before fix: " + std::string(e.what()) + "]";
      trace.iterations.push_back(std::move(entry));
      trace.note = "budget exhausted during fix";
      return {std::move(candidate), std::move(trace)};
    }
    conv.add(Role::Assistant, fix.text);

    std::string revised;
    try {
      revised = parse_rewrite_response(fix.text).sql;
    } catch (const NoSqlFound&) {
      trace.iterations.push_back(std::move(entry));
      trace.note = "fix reply contained no SQL";
      return {std::move(candidate), std::move(trace)};
    }

    entry.revised_sql = revised;
    trace.iterations.push_back(std::move(entry));
    candidate.advance(RewriteStage::SemanticallyCorrected, revised);

    if (iter < options_.max_iter) {
      const std::string next_check = seed_check(original, candidate.sql).turns[0].text;
      if (conversation_text(conv).size() + next_check.size() >
          options_.conversation_char_budget) {
        conv = seed_check(original, candidate.sql);
      } else {
        conv.add(Role::User, next_check);
      }
    }
  }

  return {std::move(candidate), std::move(trace)};
}

std::pair<CandidateRewrite, CorrectionTrace> Corrector::correct_syntax(
    const Query& original, CandidateRewrite candidate, DbSession& target) {
  CorrectionTrace trace;
  trace.stage = CorrectionStage::Syntax;

  for (std::size_t iter = 1; iter <= options_.max_iter; ++iter) {
    trace.iterations_used = iter;
    CorrectionIteration entry;
    entry.candidate_sql = candidate.sql;
    entry.revised_sql = candidate.sql;

    const ExplainResult probe = target.explain(candidate.sql);
    if (probe.ok) {
      entry.verdict_or_error = "ok";
      trace.iterations.push_back(std::move(entry));
      trace.converged = true;
      if (candidate.stage < RewriteStage::SyntaxCorrected) {
        candidate.stage = RewriteStage::SyntaxCorrected;
      }
      return {std::move(candidate), std::move(trace)};
    }
    entry.verdict_or_error = probe.error_message.value_or("unknown error");

    Bindings b;
    b.text["original"] = original.sql;
    b.text["candidate"] = candidate.sql;
    b.text["error"] = entry.verdict_or_error;
    Conversation conv = render(TemplateId::SyntaxFix, b);

    CompletionResult fix;
    try {
      fix = llm_.complete(conv, scope_);
    } catch (const BudgetExhausted& e) {
      entry.verdict_or_error += "\n[budget exhausted before fix: " + std::string(e.what()) + "]";
      trace.iterations.push_back(std::move(entry));
      trace.note = "budget exhausted during fix";
      return {std::move(candidate), std::move(trace)};
    }

    std::string revised;
    try {
      revised = parse_rewrite_response(fix.text).sql;
    } catch (const NoSqlFound&) {
      trace.iterations.push_back(std::move(entry));
      trace.note = "fix reply contained no SQL";
      return {std::move(candidate), std::move(trace)};
    }

    entry.revised_sql = revised;
    trace.iterations.push_back(std::move(entry));
    candidate.advance(RewriteStage::SyntaxCorrected, revised);
  }

  return {std::move(candidate), std::move(trace)};
}

CorrectionResult Corrector::correct(const Query& original, CandidateRewrite candidate,
                                    DbSession& target) {
  CorrectionResult result;
  auto semantic = correct_semantics(original, std::move(candidate));
  result.semantic = std::move(semantic.second);
  auto syntax = correct_syntax(original, std::move(semantic.first), target);
  result.syntax = std::move(syntax.second);
  result.candidate = std::move(syntax.first);
  return result;
}

}  // namespace qrw
