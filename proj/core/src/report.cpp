#include "qrewrite/report.hpp"

#include <cstdio>

#include <nlohmann/json.hpp>

namespace qrw {

using nlohmann::json;

namespace {

json correction_json(const CorrectionSummary& s) {
  return json{{"iterations_used", s.iterations_used},
              {"converged", s.converged},
              {"note", s.note}};
}

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", digits, v);
  return buf;
}

struct Bucket {
  const char* label;
  double threshold;
};

constexpr Bucket kBuckets[] = {
    {">10%", 1.10}, {">50%", 1.50}, {">2x", 2.0}, {">10x", 10.0}, {">100x", 100.0},
};

}  // namespace

std::string render_report_json(const RunReport& report) {
  json doc;
  doc["schema_version"] = kReportSchemaVersion;
  doc["mode"] = to_string(report.mode);
  doc["theta"] = report.theta;
  doc["truncated"] = report.truncated;
  doc["converged"] = report.converged;
  doc["queries_total"] = report.queries_total;
  doc["queries_accepted"] = report.queries_accepted;

  doc["rounds"] = json::array();
  for (const auto& r : report.rounds) {
    doc["rounds"].push_back(json{{"index", r.index},
                                 {"hinted", r.hinted},
                                 {"attempted", r.attempted},
                                 {"newly_accepted", r.newly_accepted},
                                 {"parked_retried", r.parked_retried},
                                 {"hints_offered", r.hints_offered}});
  }

  doc["outcomes"] = json::array();
  for (const auto& o : report.outcomes) {
    doc["outcomes"].push_back(json{{"query_id", o.query.id},
                                   {"original_sql", o.query.sql},
                                   {"rewritten_sql", o.rewrite.sql},
                                   {"stage", to_string(o.rewrite.stage)},
                                   {"revision", o.rewrite.revision},
                                   {"equivalent", o.equivalent},
                                   {"speedup", o.speedup},
                                   {"accepted", o.accepted},
                                   {"rules", o.explanation.rules},
                                   {"conditions", o.explanation.conditions}});
  }

  doc["failures"] = json::array();
  for (const auto& f : report.failures) {
    doc["failures"].push_back(json{
        {"query_id", f.query_id}, {"diagnosis", f.diagnosis}, {"detail", f.detail}});
  }

  doc["audits"] = json::array();
  for (const auto& a : report.audits) {
    doc["audits"].push_back(json{{"query_id", a.query_id},
                                 {"attempts", a.attempts},
                                 {"semantic", correction_json(a.semantic)},
                                 {"syntax", correction_json(a.syntax)}});
  }

  doc["usage"] = json{{"calls", report.usage.calls},
                      {"tokens_in", report.usage.tokens_in},
                      {"tokens_out", report.usage.tokens_out},
                      {"cost", report.usage.cost},
                      {"latency_s", report.usage.latency_s},
                      {"calls_by_template", report.usage.calls_by_template}};

  doc["repo"] = json{{"rules", report.repo.rules},
                     {"groups", report.repo.groups},
                     {"parked", report.repo.parked},
                     {"query_records", report.repo.query_records}};

  return doc.dump(2) + "\n";
}

std::string render_report_markdown(const RunReport& report) {
  std::string md;
  md += "# Query rewrite report\n\n";
  md += "- mode: " + std::string(to_string(report.mode)) +
        ", acceptance threshold: speedup > " + fixed(report.theta, 2) + "\n";
  md += "- queries: " + std::to_string(report.queries_total) + " total, " +
        std::to_string(report.queries_accepted) + " accepted\n";
  md += std::string("- run state: ") +
        (report.truncated ? "truncated (budget exhausted)"
                          : (report.converged ? "converged" : "completed")) +
        "\n\n";

  md += "## Rounds\n\n";
  md += "| Round | Prompting | Attempted | Newly accepted | Hints offered |\n";
  md += "|------:|-----------|----------:|---------------:|--------------:|\n";
  for (const auto& r : report.rounds) {
    md += "| " + std::to_string(r.index) + " | " +
          (r.hinted ? "hinted" : "zero-shot") + " | " + std::to_string(r.attempted) +
          " | " + std::to_string(r.newly_accepted) + " | " +
          std::to_string(r.hints_offered) + " |\n";
  }

  md += "\n## Speedup distribution\n\n";
  md += "| Speedup over | Queries | Share of workload |\n";
  md += "|--------------|--------:|------------------:|\n";
  for (const Bucket& bucket : kBuckets) {
    std::size_t count = 0;
    for (const auto& o : report.outcomes) {
      if (o.speedup > bucket.threshold) count++;
    }
    const double share =
        report.queries_total == 0
            ? 0.0
            : 100.0 * static_cast<double>(count) / static_cast<double>(report.queries_total);
    md += "| " + std::string(bucket.label) + " | " + std::to_string(count) + " | " +
          fixed(share, 1) + "% |\n";
  }

  md += "\n## Per-query results\n\n";
  md += "| Query | Accepted | Speedup | Rules | Diagnosis |\n";
  md += "|-------|----------|--------:|------:|-----------|\n";
  for (const auto& o : report.outcomes) {
    std::string diagnosis = "";
    for (const auto& f : report.failures) {
      if (f.query_id == o.query.id) {
        diagnosis = f.diagnosis;
        break;
      }
    }
    md += "| " + o.query.id + " | " + (o.accepted ? "yes" : "no") + " | " +
          fixed(o.speedup, 2) + " | " + std::to_string(o.explanation.rules.size()) +
          " | " + diagnosis + " |\n";
  }

  md += "\n## Repository and usage\n\n";
  md += "- rules: " + std::to_string(report.repo.rules) + " (" +
        std::to_string(report.repo.parked) + " parked), groups: " +
        std::to_string(report.repo.groups) +
        ", query records: " + std::to_string(report.repo.query_records) + "\n";
  md += "- LLM calls: " + std::to_string(report.usage.calls) +
        ", tokens in/out: " + std::to_string(report.usage.tokens_in) + "/" +
        std::to_string(report.usage.tokens_out) + ", cost: " +
        fixed(report.usage.cost, 4) + "\n";
  return md;
}

}  // namespace qrw
