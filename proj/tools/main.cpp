// qrewrite: LLM-driven SQL query rewriting from the command line.
//
//   qrewrite rewrite --manifest workload.toml [--config run.toml] ...
//   qrewrite repo export|import|inspect ...
//
// Secrets (LLM API key, database password) are read from environment
// variables named in the config; they never appear in flags or files.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qrewrite/budget.hpp"
#include "qrewrite/db.hpp"
#include "qrewrite/embedding.hpp"
#include "qrewrite/errors.hpp"
#include "qrewrite/evaluator.hpp"
#include "qrewrite/llm.hpp"
#include "qrewrite/manifest.hpp"
#include "qrewrite/orchestrator.hpp"
#include "qrewrite/report.hpp"
#include "qrewrite/rule_repo.hpp"
#include "qrewrite/seed.hpp"
#include "qrewrite/types.hpp"

namespace fs = std::filesystem;
using namespace qrw;

namespace {

// Flag-or-config resolution: an explicitly set flag wins, then the config
// file's [run] section, then the built-in default.
class Settings {
 public:
  Settings(const CLI::App& cmd, const ConfigFile* config) : cmd_(cmd), config_(config) {}

  std::string text(const char* flag, const char* key, const std::string& fallback,
                   const std::string* flag_value) const {
    if (cmd_.count(flag) > 0 && flag_value) return *flag_value;
    if (config_) {
      if (auto v = config_->get("run", key)) return *v;
    }
    return fallback;
  }

  double number(const char* flag, const char* key, double fallback,
                const double* flag_value) const {
    if (cmd_.count(flag) > 0 && flag_value) return *flag_value;
    if (config_) {
      if (auto v = config_->get("run", key)) return parse_double(*v, key);
    }
    return fallback;
  }

  std::size_t count(const char* flag, const char* key, std::size_t fallback,
                    const std::size_t* flag_value) const {
    if (cmd_.count(flag) > 0 && flag_value) return *flag_value;
    if (config_) {
      if (auto v = config_->get("run", key)) {
        const double d = parse_double(*v, key);
        if (d < 0 || d != static_cast<double>(static_cast<std::size_t>(d))) {
          throw ConfigError(std::string("config key ") + key +
                            " must be a non-negative integer, got: " + *v);
        }
        return static_cast<std::size_t>(d);
      }
    }
    return fallback;
  }

 private:
  static double parse_double(const std::string& text, const char* key) {
    try {
      std::size_t used = 0;
      const double value = std::stod(text, &used);
      if (used != text.size()) throw std::invalid_argument("trailing junk");
      return value;
    } catch (const std::exception&) {
      throw ConfigError(std::string("config key ") + key + " is not a number: " + text);
    }
  }

  const CLI::App& cmd_;
  const ConfigFile* config_;
};

std::optional<std::string> config_get(const ConfigFile* config, const std::string& section,
                                      const std::string& key) {
  if (!config) return std::nullopt;
  return config->get(section, key);
}

DbTarget database_from_config(const ConfigFile* config) {
  DbTarget target;
  if (auto v = config_get(config, "database", "engine")) target.engine = *v;
  if (auto v = config_get(config, "database", "host")) target.host = *v;
  if (auto v = config_get(config, "database", "port")) target.port = std::stoi(*v);
  if (auto v = config_get(config, "database", "database")) target.database = *v;
  if (auto v = config_get(config, "database", "user")) target.user = *v;
  if (auto v = config_get(config, "database", "password_env")) target.password_env = *v;
  if (target.database.empty()) {
    throw ConfigError("no database configured ([database] database = ...)");
  }
  return target;
}

std::shared_ptr<EmbeddingProvider> embedding_from_config(const ConfigFile* config) {
  const std::string provider =
      config_get(config, "embedding", "provider").value_or("hashing");
  if (provider == "hashing") {
    std::size_t dim = 64;
    if (auto v = config_get(config, "embedding", "dim")) dim = std::stoul(*v);
    return std::make_shared<HashingEmbeddingProvider>(dim);
  }
  if (provider == "http") {
    HttpEmbeddingConfig http;
    if (auto v = config_get(config, "embedding", "base_url")) http.base_url = *v;
    if (auto v = config_get(config, "embedding", "path")) http.path = *v;
    if (auto v = config_get(config, "embedding", "dim")) http.dim = std::stoul(*v);
    if (auto v = config_get(config, "embedding", "timeout_s")) http.timeout_s = std::stod(*v);
    if (http.base_url.empty()) {
      throw ConfigError("http embedding provider needs [embedding] base_url");
    }
    return std::make_shared<HttpEmbeddingProvider>(http);
  }
  throw ConfigError("unknown embedding provider: " + provider + " (hashing|http)");
}

std::shared_ptr<LlmBackend> llm_backend(const std::string& kind,
                                        const std::string& transcript,
                                        const ConfigFile* config) {
  if (kind == "scripted") {
    if (transcript.empty()) {
      throw ConfigError("--llm scripted needs --transcript (or [run] transcript)");
    }
    return ScriptedBackend::from_file(transcript);
  }
  if (kind == "live") {
    LiveBackendConfig live;
    if (auto v = config_get(config, "llm", "base_url")) live.base_url = *v;
    if (auto v = config_get(config, "llm", "path")) live.path = *v;
    if (auto v = config_get(config, "llm", "model")) live.model = *v;
    if (auto v = config_get(config, "llm", "api_key_env")) live.api_key_env = *v;
    if (auto v = config_get(config, "llm", "temperature")) live.temperature = std::stod(*v);
    if (auto v = config_get(config, "llm", "timeout_s")) live.timeout_s = std::stod(*v);
    if (live.base_url.empty() || live.model.empty()) {
      throw ConfigError("live LLM backend needs [llm] base_url and model");
    }
    return std::make_shared<LiveBackend>(live);
  }
  throw ConfigError("unknown LLM backend: " + kind + " (live|scripted)");
}

LlmRates llm_rates(const ConfigFile* config) {
  LlmRates rates;
  if (auto v = config_get(config, "llm", "rate_in_per_1k")) rates.in_per_1k = std::stod(*v);
  if (auto v = config_get(config, "llm", "rate_out_per_1k")) rates.out_per_1k = std::stod(*v);
  return rates;
}

std::shared_ptr<Nlr2Repository> open_repo(const std::string& path,
                                          std::shared_ptr<EmbeddingProvider> provider) {
  if (!path.empty() && fs::exists(path)) {
    return Nlr2Repository::load(path, std::move(provider));
  }
  return std::make_shared<Nlr2Repository>(std::move(provider));
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << content;
  if (!out.good()) throw ConfigError("short write to " + path.string());
}

int cmd_rewrite(const CLI::App& cmd, const std::string& manifest_path,
                const std::string& config_path, const std::string& mode_flag,
                const std::string& llm_flag, const std::string& transcript_flag,
                const std::size_t& rounds_flag, const std::size_t& zero_shot_flag,
                const double& theta_flag, const double& budget_seconds_flag,
                const double& budget_money_flag, const std::string& repo_flag,
                const std::string& out_dir_flag, const std::size_t& workers_flag) {
  std::optional<ConfigFile> config;
  if (!config_path.empty()) config = ConfigFile::load_file(config_path);
  const ConfigFile* cfg = config ? &*config : nullptr;

  // Everything below can fail; no output file is touched until the run ends.
  const WorkloadManifest manifest = WorkloadManifest::load_file(manifest_path);
  const std::vector<Query> queries = manifest.load_queries();
  const std::string schema = manifest.load_schema();
  const SeedSpec seed_spec = manifest.load_seed_spec();

  const Settings settings(cmd, cfg);
  std::string mode_text = settings.text("--mode", "mode", "latency", &mode_flag);
  if (mode_text == "explain-cost") mode_text = "explain_cost";

  RunConfig run;
  run.mode = speedup_mode_from_string(mode_text);
  run.max_total_rounds = settings.count("--rounds", "rounds", 5, &rounds_flag);
  run.zero_shot_rounds =
      settings.count("--zero-shot-rounds", "zero_shot_rounds", 4, &zero_shot_flag);
  if (run.zero_shot_rounds > run.max_total_rounds) {
    run.zero_shot_rounds = run.max_total_rounds;
  }
  run.theta = settings.number("--theta", "theta", 1.05, &theta_flag);
  run.budget_seconds = settings.number("--budget-seconds", "budget_seconds",
                                       Budget::kUnlimited, &budget_seconds_flag);
  run.budget_money = settings.number("--budget-money", "budget_money",
                                     Budget::kUnlimited, &budget_money_flag);
  run.workers = settings.count("--workers", "workers", 1, &workers_flag);
  run.per_query_seconds = settings.number("", "per_query_seconds", 30.0, nullptr);
  run.k_neighbors = settings.count("", "k_neighbors", 5, nullptr);
  run.k_groups = settings.count("", "k_groups", 3, nullptr);
  run.max_iter = settings.count("", "max_iter", 5, nullptr);
  run.requeue_accepted = settings.text("", "requeue_accepted", "false", nullptr) == "true";
  run.evaluator.repetitions =
      static_cast<int>(settings.count("", "repetitions", 3, nullptr));
  run.evaluator.equivalence_timeout_s =
      settings.number("", "equivalence_timeout_s", 30.0, nullptr);
  run.evaluator.original_timeout_s =
      settings.number("", "original_timeout_s", 300.0, nullptr);
  run.evaluator.rewrite_timeout_cap_s =
      settings.number("", "rewrite_timeout_cap_s", 300.0, nullptr);
  run.evaluator.cache_reset.command = settings.text("", "cache_reset", "", nullptr);
  run.validate();

  const std::string llm_kind = settings.text("--llm", "llm", "live", &llm_flag);
  const std::string transcript =
      settings.text("--transcript", "transcript", "", &transcript_flag);
  const std::string repo_path = settings.text("--repo", "repo", "", &repo_flag);
  const std::string out_dir = settings.text("--out-dir", "out_dir", ".", &out_dir_flag);

  auto ledger = std::make_shared<UsageLedger>();
  LlmClient llm(llm_backend(llm_kind, transcript, cfg), llm_rates(cfg), ledger);

  auto provider = embedding_from_config(cfg);
  auto repo = open_repo(repo_path, provider);

  const DbTarget bench_target = database_from_config(cfg);
  auto benchmark = make_engine(bench_target);
  benchmark->open();  // fail fast on connection problems

  DbTarget sample_base = bench_target;
  if (auto v = config_get(cfg, "database", "sample_database")) sample_base.database = *v;
  const std::vector<SeededInstance> samples =
      build_instances(sample_base, schema, seed_spec, default_instance_plans());

  Orchestrator orchestrator(run, llm, *repo, *benchmark, samples);
  const RunReport report = orchestrator.rewrite_workload(queries);

  fs::create_directories(out_dir);
  write_file(fs::path(out_dir) / "report.json", render_report_json(report));
  write_file(fs::path(out_dir) / "report.md", render_report_markdown(report));

  std::map<std::string, fs::path> source_dirs;
  for (const auto& entry : manifest.entries) {
    source_dirs[entry.query_id] = fs::path(entry.path).parent_path();
  }
  for (const auto& outcome : report.outcomes) {
    if (!outcome.accepted) continue;
    const fs::path dir = source_dirs.at(outcome.query.id);
    write_file(dir / (outcome.query.id + ".rewritten.sql"), outcome.rewrite.sql + "\n");
  }

  if (!repo_path.empty()) repo->save(repo_path);

  std::printf("%zu/%zu queries accepted; %s\n", report.queries_accepted,
              report.queries_total,
              report.truncated  ? "run truncated (budget exhausted)"
              : report.converged ? "run converged"
                                 : "run completed");
  std::printf("report: %s\n", (fs::path(out_dir) / "report.json").string().c_str());
  return 0;
}

int cmd_repo_export(const std::string& repo_path, const std::string& out_path) {
  auto provider = std::make_shared<HashingEmbeddingProvider>();
  auto repo = Nlr2Repository::load(repo_path, provider);
  repo->save(out_path);
  const RepoStats stats = repo->stats();
  std::printf("exported %zu rules in %zu groups to %s\n", stats.rules, stats.groups,
              out_path.c_str());
  return 0;
}

int cmd_repo_import(const std::string& repo_path, const std::string& foreign_path,
                    const std::string& llm_kind, const std::string& transcript,
                    const std::string& config_path) {
  std::optional<ConfigFile> config;
  if (!config_path.empty()) config = ConfigFile::load_file(config_path);
  const ConfigFile* cfg = config ? &*config : nullptr;

  auto provider = embedding_from_config(cfg);
  auto repo = open_repo(repo_path, provider);
  auto foreign = Nlr2Repository::load(foreign_path, provider);

  auto ledger = std::make_shared<UsageLedger>();
  LlmClient llm(llm_backend(llm_kind, transcript, cfg), llm_rates(cfg), ledger);
  Budget budget(Budget::kUnlimited, Budget::kUnlimited);
  BudgetScope scope(budget, Budget::kUnlimited);
  LlmGroupArbiter arbiter(llm, scope);

  const std::size_t added = repo->import_merge(*foreign, arbiter);
  repo->save(repo_path);
  const RepoStats stats = repo->stats();
  std::printf("imported %zu rules; repository now holds %zu rules in %zu groups\n",
              added, stats.rules, stats.groups);
  return 0;
}

int cmd_repo_inspect(const std::string& repo_path) {
  auto provider = std::make_shared<HashingEmbeddingProvider>();
  auto repo = Nlr2Repository::load(repo_path, provider);
  const RepoStats stats = repo->stats();
  std::printf("rules=%zu groups=%zu parked=%zu query_records=%zu\n", stats.rules,
              stats.groups, stats.parked, stats.query_records);
  for (const RuleGroup& group : repo->groups_by_benefit()) {
    std::string representative;
    if (auto rule = repo->rule(group.representative)) representative = rule->description;
    std::printf("%s members=%zu benefit=%.4f  %s\n", group.group_id.c_str(),
                group.members.size(), group.benefit, representative.c_str());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"LLM-driven SQL query rewriting"};
  app.require_subcommand(1);

  // rewrite
  auto* rewrite = app.add_subcommand("rewrite", "Rewrite a workload of SQL queries");
  std::string manifest_path, config_path, mode_flag = "latency", llm_flag = "live";
  std::string transcript_flag, repo_flag, out_dir_flag = ".";
  std::size_t rounds_flag = 5, zero_shot_flag = 4, workers_flag = 1;
  double theta_flag = 1.05, budget_seconds_flag = 0, budget_money_flag = 0;
  rewrite->add_option("--manifest", manifest_path, "Workload manifest file")->required();
  rewrite->add_option("--config", config_path, "Run configuration file");
  rewrite->add_option("--mode", mode_flag, "latency|explain-cost")
      ->check(CLI::IsMember({"latency", "explain-cost", "explain_cost"}));
  rewrite->add_option("--llm", llm_flag, "live|scripted")
      ->check(CLI::IsMember({"live", "scripted"}));
  rewrite->add_option("--transcript", transcript_flag, "Scripted-LLM transcript (JSONL)");
  rewrite->add_option("--rounds", rounds_flag, "Maximum rewrite rounds");
  rewrite->add_option("--zero-shot-rounds", zero_shot_flag, "Rounds before hints activate");
  rewrite->add_option("--theta", theta_flag, "Minimum desirable speedup");
  rewrite->add_option("--budget-seconds", budget_seconds_flag, "Run time budget");
  rewrite->add_option("--budget-money", budget_money_flag, "Run money budget");
  rewrite->add_option("--repo", repo_flag, "Rule repository file (loaded and saved)");
  rewrite->add_option("--out-dir", out_dir_flag, "Directory for report.json/report.md");
  rewrite->add_option("--workers", workers_flag, "Parallel query workers");

  // repo export|import|inspect
  auto* repo_cmd = app.add_subcommand("repo", "Manage the rewrite-rule repository");
  repo_cmd->require_subcommand(1);
  std::string repo_file, repo_out, repo_in, repo_llm = "live", repo_transcript,
              repo_config;

  auto* repo_export = repo_cmd->add_subcommand("export", "Write the repository as JSONL");
  repo_export->add_option("repo", repo_file, "Repository file")->required();
  repo_export->add_option("out", repo_out, "Destination file")->required();

  auto* repo_import =
      repo_cmd->add_subcommand("import", "Merge a foreign repository, re-grouping its rules");
  repo_import->add_option("repo", repo_file, "Local repository file")->required();
  repo_import->add_option("foreign", repo_in, "Foreign repository file")->required();
  repo_import->add_option("--llm", repo_llm, "live|scripted")
      ->check(CLI::IsMember({"live", "scripted"}));
  repo_import->add_option("--transcript", repo_transcript, "Scripted transcript (JSONL)");
  repo_import->add_option("--config", repo_config, "Configuration file for [llm]/[embedding]");

  auto* repo_inspect =
      repo_cmd->add_subcommand("inspect", "Print groups sorted by benefit");
  repo_inspect->add_option("repo", repo_file, "Repository file")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (rewrite->parsed()) {
      return cmd_rewrite(*rewrite, manifest_path, config_path, mode_flag, llm_flag,
                         transcript_flag, rounds_flag, zero_shot_flag, theta_flag,
                         budget_seconds_flag, budget_money_flag, repo_flag, out_dir_flag,
                         workers_flag);
    }
    if (repo_export->parsed()) return cmd_repo_export(repo_file, repo_out);
    if (repo_import->parsed()) {
      return cmd_repo_import(repo_file, repo_in, repo_llm, repo_transcript, repo_config);
    }
    if (repo_inspect->parsed()) return cmd_repo_inspect(repo_file);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const ConnectionError& e) {
    std::fprintf(stderr, "connection error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
