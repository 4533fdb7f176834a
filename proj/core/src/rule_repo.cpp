#include "qrewrite/rule_repo.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

#include "qrewrite/errors.hpp"

namespace qrw {

using nlohmann::json;

namespace {

// Lowercase, punctuation folded to spaces, whitespace collapsed. The basis
// for "same rule text" checks and reply-to-candidate matching.
std::string normalize_text(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (char c : text) {
    if (std::isalnum(static_cast<unsigned char>(c)) != 0) {
      if (pending_space && !out.empty()) out.push_back(' ');
      pending_space = false;
      out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    } else {
      pending_space = true;
    }
  }
  return out;
}

std::vector<std::string> tokenize(const std::string& normalized) {
  std::vector<std::string> tokens;
  std::istringstream in(normalized);
  std::string token;
  while (in >> token) tokens.push_back(token);
  return tokens;
}

std::string format_id(char prefix, std::size_t n) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%c%04zu", prefix, n);
  return buf;
}

std::size_t parse_id_number(const std::string& id) {
  if (id.size() < 2) return 0;
  std::size_t value = 0;
  for (std::size_t i = 1; i < id.size(); ++i) {
    if (std::isdigit(static_cast<unsigned char>(id[i])) == 0) return 0;
    value = value * 10 + static_cast<std::size_t>(id[i] - '0');
  }
  return value;
}

}  // namespace

double geometric_mean(const std::vector<double>& values) {
  if (values.empty()) {
    throw std::invalid_argument("geometric mean of an empty list");
  }
  // Track the running product as mantissa * 2^exponent so that long
  // observation lists cannot overflow or underflow.
  double mantissa = 1.0;
  long exponent = 0;
  for (double v : values) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw std::invalid_argument("geometric mean needs positive finite values");
    }
    mantissa *= v;
    int e = 0;
    mantissa = std::frexp(mantissa, &e);
    exponent += e;
  }
  const double n = static_cast<double>(values.size());
  return std::pow(mantissa, 1.0 / n) *
         std::exp2(static_cast<double>(exponent) / n);
}

std::string LlmGroupArbiter::match_reply(
    const std::string& reply,
    const std::vector<std::pair<std::string, std::string>>& candidates) {
  const std::string norm = normalize_text(reply);

  std::size_t best_pos = std::string::npos;
  int best = -1;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const std::string norm_candidate = normalize_text(candidates[i].second);
    if (norm_candidate.empty()) continue;
    const std::size_t pos = norm.find(norm_candidate);
    if (pos != std::string::npos && pos < best_pos) {
      best_pos = pos;
      best = static_cast<int>(i);
    }
  }
  const std::size_t unseen_pos = norm.find("unseen rule");

  if (best >= 0 && best_pos <= unseen_pos) return candidates[static_cast<std::size_t>(best)].first;
  if (unseen_pos != std::string::npos) return "";
  if (best >= 0) return candidates[static_cast<std::size_t>(best)].first;

  const std::vector<std::string> tokens = tokenize(norm);
  std::string digits;
  if (!tokens.empty() &&
      std::all_of(tokens[0].begin(), tokens[0].end(),
                  [](char c) { return std::isdigit(static_cast<unsigned char>(c)) != 0; })) {
    digits = tokens[0];
  } else if (tokens.size() >= 2 && tokens[0] == "option" &&
             std::all_of(tokens[1].begin(), tokens[1].end(), [](char c) {
               return std::isdigit(static_cast<unsigned char>(c)) != 0;
             })) {
    digits = tokens[1];
  }
  if (!digits.empty() && digits.size() <= 4) {
    const std::size_t option = static_cast<std::size_t>(std::stoul(digits));
    if (option >= 2 && option <= candidates.size() + 1) {
      return candidates[option - 2].first;
    }
  }
  return "";
}

std::string LlmGroupArbiter::predict(
    const std::string& rule_description,
    const std::vector<std::pair<std::string, std::string>>& candidates) {
  if (candidates.empty()) return "";
  Bindings bindings;
  bindings.text["rule"] = rule_description;
  std::vector<std::string> representatives;
  representatives.reserve(candidates.size());
  for (const auto& [group_id, description] : candidates) {
    representatives.push_back(description);
  }
  bindings.lists["candidates"] = representatives;
  const Conversation conv = render(TemplateId::GroupPredict, bindings);
  const CompletionResult result = client_.complete(conv, scope_);
  return match_reply(result.text, candidates);
}

Nlr2Repository::Nlr2Repository(std::shared_ptr<EmbeddingProvider> provider,
                               RepoOptions options)
    : provider_(std::move(provider)), options_(options) {
  if (!provider_) throw ConfigError("rule repository needs an embedding provider");
  if (options_.grouping_candidates == 0) {
    throw ConfigError("grouping_candidates must be positive");
  }
}

std::string Nlr2Repository::next_rule_id_locked() {
  return format_id('r', next_rule_++);
}

std::string Nlr2Repository::next_group_id_locked() {
  return format_id('g', next_group_++);
}

void Nlr2Repository::recompute_benefit_locked(const std::string& group_id) {
  RuleGroup& group = groups_.at(group_id);
  std::vector<double> observations;
  for (const auto& member : group.members) {
    const Nlr2& rule = rules_.at(member);
    observations.insert(observations.end(), rule.observed_speedups.begin(),
                        rule.observed_speedups.end());
  }
  group.benefit = geometric_mean(observations);
}

std::vector<std::pair<std::string, std::string>>
Nlr2Repository::propose_candidates_locked(const std::vector<double>& embedding) const {
  std::vector<std::pair<std::string, std::string>> candidates;
  if (!rule_index_ || rule_index_->size() == 0) return candidates;
  const auto neighbors =
      rule_index_->knn(embedding, options_.grouping_candidates, /*dedup=*/true);
  for (const auto& neighbor : neighbors) {
    const std::string& group_id = rules_.at(neighbor.id).group_id;
    const RuleGroup& group = groups_.at(group_id);
    candidates.emplace_back(group_id, rules_.at(group.representative).description);
  }
  return candidates;
}

AddRuleResult Nlr2Repository::add_rule_locked(const std::string& description,
                                              const std::string& condition,
                                              const std::string& source_query_id,
                                              const std::vector<double>& speedups,
                                              GroupArbiter& arbiter) {
  if (normalize_text(description).empty()) {
    throw std::invalid_argument("rule description is empty");
  }
  for (double s : speedups) {
    if (!(s > 0.0)) throw std::invalid_argument("rule speedup must be positive");
  }
  if (speedups.empty()) throw std::invalid_argument("rule needs an observation");

  const std::string norm = normalize_text(description);
  for (const auto& id : rule_order_) {
    Nlr2& existing = rules_.at(id);
    if (existing.source_query_id == source_query_id &&
        normalize_text(existing.description) == norm) {
      existing.observed_speedups.insert(existing.observed_speedups.end(),
                                        speedups.begin(), speedups.end());
      if (existing.condition.empty() && !condition.empty()) {
        existing.condition = condition;
      }
      if (!existing.group_id.empty()) recompute_benefit_locked(existing.group_id);
      AddRuleResult result;
      result.rule_id = id;
      result.group_id = existing.group_id;
      result.parked = existing.group_id.empty();
      return result;
    }
  }

  const std::vector<double> embedding = provider_->embed(description);
  const auto candidates = propose_candidates_locked(embedding);

  bool parked = false;
  std::string chosen_group;
  if (!candidates.empty()) {
    try {
      const std::string predicted = arbiter.predict(description, candidates);
      if (!predicted.empty() && groups_.count(predicted) != 0) {
        chosen_group = predicted;
      }
    } catch (const TransportError&) {
      parked = true;
    } catch (const BudgetExhausted&) {
      parked = true;
    }
  }

  AddRuleResult result;
  result.rule_id = next_rule_id_locked();
  result.created_rule = true;

  Nlr2 rule;
  rule.rule_id = result.rule_id;
  rule.description = description;
  rule.condition = condition;
  rule.source_query_id = source_query_id;
  rule.observed_speedups = speedups;
  rules_[result.rule_id] = std::move(rule);
  rule_order_.push_back(result.rule_id);
  rule_embeddings_[result.rule_id] = embedding;

  if (parked) {
    result.parked = true;
    return result;
  }

  if (chosen_group.empty()) {
    chosen_group = next_group_id_locked();
    RuleGroup group;
    group.group_id = chosen_group;
    group.representative = result.rule_id;
    group.members = {result.rule_id};
    groups_[chosen_group] = std::move(group);
    group_order_.push_back(chosen_group);
    result.created_group = true;
  } else {
    groups_.at(chosen_group).members.push_back(result.rule_id);
  }
  rules_.at(result.rule_id).group_id = chosen_group;
  result.group_id = chosen_group;
  recompute_benefit_locked(chosen_group);

  if (!rule_index_) rule_index_ = std::make_unique<VectorIndex>(embedding.size());
  rule_index_->insert({result.rule_id, embedding, chosen_group});
  return result;
}

AddRuleResult Nlr2Repository::add_rule(const std::string& description,
                                       const std::string& condition,
                                       const std::string& source_query_id,
                                       double speedup, GroupArbiter& arbiter) {
  std::lock_guard<std::mutex> lock(mu_);
  return add_rule_locked(description, condition, source_query_id, {speedup}, arbiter);
}

std::optional<std::string> Nlr2Repository::predict_group(
    const std::string& description,
    const std::vector<std::pair<std::string, std::string>>& candidates,
    GroupArbiter& arbiter) const {
  if (candidates.empty()) return std::nullopt;
  const std::string predicted = arbiter.predict(description, candidates);
  if (predicted.empty()) return std::nullopt;
  std::lock_guard<std::mutex> lock(mu_);
  if (groups_.count(predicted) == 0) return std::nullopt;
  return predicted;
}

double Nlr2Repository::update_benefit(const std::string& rule_id, double speedup) {
  if (!(speedup > 0.0)) throw std::invalid_argument("speedup must be positive");
  std::lock_guard<std::mutex> lock(mu_);
  auto it = rules_.find(rule_id);
  if (it == rules_.end()) throw UnknownRule("no such rule: " + rule_id);
  it->second.observed_speedups.push_back(speedup);
  if (it->second.group_id.empty()) {
    return geometric_mean(it->second.observed_speedups);
  }
  recompute_benefit_locked(it->second.group_id);
  return groups_.at(it->second.group_id).benefit;
}

void Nlr2Repository::record_query(const std::string& query_id,
                                  const std::vector<double>& embedding,
                                  const std::vector<std::string>& rule_ids) {
  std::lock_guard<std::mutex> lock(mu_);
  for (const auto& id : rule_ids) {
    if (rules_.count(id) == 0) throw UnknownRule("no such rule: " + id);
  }
  auto it = query_records_.find(query_id);
  if (it != query_records_.end()) {
    for (const auto& id : rule_ids) {
      auto& rules = it->second.rules;
      if (std::find(rules.begin(), rules.end(), id) == rules.end()) {
        rules.push_back(id);
      }
    }
    return;
  }
  QueryRecord record{query_id, embedding, {}};
  for (const auto& id : rule_ids) {
    if (std::find(record.rules.begin(), record.rules.end(), id) == record.rules.end()) {
      record.rules.push_back(id);
    }
  }
  query_records_[query_id] = record;
  if (!query_index_) query_index_ = std::make_unique<VectorIndex>(embedding.size());
  query_index_->insert({query_id, embedding, std::nullopt});
}

std::size_t Nlr2Repository::retry_parked(GroupArbiter& arbiter) {
  std::lock_guard<std::mutex> lock(mu_);
  std::size_t grouped = 0;
  for (const auto& id : rule_order_) {
    Nlr2& rule = rules_.at(id);
    if (!rule.group_id.empty()) continue;
    const auto& embedding = rule_embeddings_.at(id);
    const auto candidates = propose_candidates_locked(embedding);
    std::string chosen;
    if (!candidates.empty()) {
      try {
        const std::string predicted = arbiter.predict(rule.description, candidates);
        if (!predicted.empty() && groups_.count(predicted) != 0) chosen = predicted;
      } catch (const TransportError&) {
        continue;
      } catch (const BudgetExhausted&) {
        continue;
      }
    }
    if (chosen.empty()) {
      chosen = next_group_id_locked();
      RuleGroup group;
      group.group_id = chosen;
      group.representative = id;
      group.members = {id};
      groups_[chosen] = std::move(group);
      group_order_.push_back(chosen);
    } else {
      groups_.at(chosen).members.push_back(id);
    }
    rule.group_id = chosen;
    recompute_benefit_locked(chosen);
    if (!rule_index_) rule_index_ = std::make_unique<VectorIndex>(embedding.size());
    rule_index_->insert({id, embedding, chosen});
    ++grouped;
  }
  return grouped;
}

HintSelection Nlr2Repository::select_hints(const std::vector<double>& query_embedding,
                                           std::size_t k_neighbors,
                                           std::size_t k_groups) const {
  std::lock_guard<std::mutex> lock(mu_);
  HintSelection selection;
  if (query_embedding.empty() || !query_index_ || query_index_->size() == 0 ||
      k_neighbors == 0 || k_groups == 0) {
    return selection;
  }

  const auto neighbors = query_index_->knn(query_embedding, k_neighbors, false);
  if (neighbors.empty()) return selection;

  std::size_t zero_count = 0;
  for (const auto& n : neighbors) {
    if (n.distance == 0.0) ++zero_count;
  }
  std::vector<double> weights(neighbors.size(), 0.0);
  if (zero_count > 0) {
    for (std::size_t i = 0; i < neighbors.size(); ++i) {
      weights[i] = neighbors[i].distance == 0.0
                       ? 1.0 / static_cast<double>(zero_count)
                       : 0.0;
    }
  } else {
    double denom = 0.0;
    for (const auto& n : neighbors) denom += 1.0 / n.distance;
    for (std::size_t i = 0; i < neighbors.size(); ++i) {
      weights[i] = (1.0 / neighbors[i].distance) / denom;
    }
  }
  for (std::size_t i = 0; i < neighbors.size(); ++i) {
    selection.neighbor_weights.emplace_back(neighbors[i].id, weights[i]);
  }

  std::map<std::string, double> scores;
  for (std::size_t i = 0; i < neighbors.size(); ++i) {
    const QueryRecord& record = query_records_.at(neighbors[i].id);
    std::set<std::string> touched;
    for (const auto& rule_id : record.rules) {
      const std::string& group_id = rules_.at(rule_id).group_id;
      if (!group_id.empty()) touched.insert(group_id);
    }
    for (const auto& group_id : touched) {
      scores[group_id] += weights[i] * groups_.at(group_id).benefit;
    }
  }
  if (scores.empty()) return selection;

  std::vector<std::pair<std::string, double>> ranked(scores.begin(), scores.end());
  std::map<std::string, std::size_t> group_age;
  for (std::size_t i = 0; i < group_order_.size(); ++i) group_age[group_order_[i]] = i;
  std::sort(ranked.begin(), ranked.end(),
            [&group_age](const auto& a, const auto& b) {
              if (a.second != b.second) return a.second > b.second;
              return group_age.at(a.first) < group_age.at(b.first);
            });

  for (const auto& [group_id, score] : ranked) {
    if (selection.hints.size() >= k_groups) break;
    // The rule linked to the most similar neighbor that touches this group.
    for (const auto& neighbor : neighbors) {
      const QueryRecord& record = query_records_.at(neighbor.id);
      const std::string* chosen = nullptr;
      for (const auto& rule_id : record.rules) {
        if (rules_.at(rule_id).group_id == group_id) {
          chosen = &rule_id;
          break;
        }
      }
      if (chosen != nullptr) {
        HintChoice choice;
        choice.rule_id = *chosen;
        choice.description = rules_.at(*chosen).description;
        choice.group_id = group_id;
        choice.score = score;
        choice.from_query_id = neighbor.id;
        selection.hints.push_back(std::move(choice));
        break;
      }
    }
  }
  return selection;
}

std::optional<Nlr2> Nlr2Repository::rule(const std::string& rule_id) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = rules_.find(rule_id);
  if (it == rules_.end()) return std::nullopt;
  return it->second;
}

std::optional<RuleGroup> Nlr2Repository::group(const std::string& group_id) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = groups_.find(group_id);
  if (it == groups_.end()) return std::nullopt;
  return it->second;
}

std::vector<RuleGroup> Nlr2Repository::groups_by_benefit() const {
  std::lock_guard<std::mutex> lock(mu_);
  std::vector<RuleGroup> out;
  out.reserve(group_order_.size());
  for (const auto& id : group_order_) out.push_back(groups_.at(id));
  std::stable_sort(out.begin(), out.end(), [](const RuleGroup& a, const RuleGroup& b) {
    return a.benefit > b.benefit;
  });
  return out;
}

std::vector<Nlr2> Nlr2Repository::all_rules() const {
  std::lock_guard<std::mutex> lock(mu_);
  std::vector<Nlr2> out;
  out.reserve(rule_order_.size());
  for (const auto& id : rule_order_) out.push_back(rules_.at(id));
  return out;
}

bool Nlr2Repository::has_rule_text(const std::string& description) const {
  std::lock_guard<std::mutex> lock(mu_);
  const std::string norm = normalize_text(description);
  for (const auto& [id, rule] : rules_) {
    if (normalize_text(rule.description) == norm) return true;
  }
  return false;
}

RepoStats Nlr2Repository::stats() const {
  std::lock_guard<std::mutex> lock(mu_);
  RepoStats stats;
  stats.rules = rules_.size();
  stats.groups = groups_.size();
  stats.query_records = query_records_.size();
  for (const auto& [id, rule] : rules_) {
    if (rule.group_id.empty()) ++stats.parked;
  }
  return stats;
}

void Nlr2Repository::save(const std::string& path) const {
  std::lock_guard<std::mutex> lock(mu_);
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write repository file: " + path);
  for (const auto& id : rule_order_) {
    const Nlr2& rule = rules_.at(id);
    json record = {{"kind", "rule"},
                   {"rule_id", rule.rule_id},
                   {"description", rule.description},
                   {"condition", rule.condition},
                   {"source_query_id", rule.source_query_id},
                   {"group_id", rule.group_id},
                   {"observed_speedups", rule.observed_speedups},
                   {"embedding", rule_embeddings_.at(id)}};
    out << record.dump() << '\n';
  }
  for (const auto& id : group_order_) {
    const RuleGroup& group = groups_.at(id);
    json record = {{"kind", "group"},
                   {"group_id", group.group_id},
                   {"representative", group.representative},
                   {"members", group.members},
                   {"benefit", group.benefit}};
    out << record.dump() << '\n';
  }
  for (const auto& [query_id, record] : query_records_) {
    json row = {{"kind", "query_record"},
                {"query_id", record.query_id},
                {"embedding", record.embedding},
                {"rules", record.rules}};
    out << row.dump() << '\n';
  }
}

std::shared_ptr<Nlr2Repository> Nlr2Repository::load(
    const std::string& path, std::shared_ptr<EmbeddingProvider> provider,
    RepoOptions options) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open repository file: " + path);
  auto repo = std::make_shared<Nlr2Repository>(std::move(provider), options);
  std::lock_guard<std::mutex> lock(repo->mu_);

  std::string line;
  int line_no = 0;
  std::vector<json> group_rows;
  std::vector<json> query_rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json row;
    try {
      row = json::parse(line);
    } catch (const json::exception& e) {
      throw ConfigError(path + ":" + std::to_string(line_no) +
                        ": bad repository line: " + e.what());
    }
    const std::string kind = row.value("kind", "");
    if (kind == "rule") {
      Nlr2 rule;
      rule.rule_id = row.at("rule_id").get<std::string>();
      rule.description = row.at("description").get<std::string>();
      rule.condition = row.value("condition", "");
      rule.source_query_id = row.value("source_query_id", "");
      rule.group_id = row.value("group_id", "");
      rule.observed_speedups = row.at("observed_speedups").get<std::vector<double>>();
      const auto embedding = row.at("embedding").get<std::vector<double>>();
      repo->rule_embeddings_[rule.rule_id] = embedding;
      repo->rule_order_.push_back(rule.rule_id);
      repo->next_rule_ = std::max(repo->next_rule_, parse_id_number(rule.rule_id) + 1);
      repo->rules_[rule.rule_id] = std::move(rule);
    } else if (kind == "group") {
      group_rows.push_back(std::move(row));
    } else if (kind == "query_record") {
      query_rows.push_back(std::move(row));
    } else {
      throw ConfigError(path + ":" + std::to_string(line_no) +
                        ": unknown record kind: " + kind);
    }
  }

  for (const auto& row : group_rows) {
    RuleGroup group;
    group.group_id = row.at("group_id").get<std::string>();
    group.representative = row.at("representative").get<std::string>();
    group.members = row.at("members").get<std::vector<std::string>>();
    group.benefit = row.value("benefit", 1.0);
    if (group.members.empty()) {
      throw ConfigError("repository group has no members: " + group.group_id);
    }
    repo->next_group_ = std::max(repo->next_group_, parse_id_number(group.group_id) + 1);
    repo->group_order_.push_back(group.group_id);
    repo->groups_[group.group_id] = std::move(group);
  }

  // Consistency: every grouped rule's group exists and lists it; benefits
  // are recomputed from observations rather than trusted.
  for (const auto& id : repo->rule_order_) {
    const Nlr2& rule = repo->rules_.at(id);
    if (rule.group_id.empty()) continue;
    auto it = repo->groups_.find(rule.group_id);
    if (it == repo->groups_.end()) {
      throw ConfigError("rule " + id + " references missing group " + rule.group_id);
    }
    const auto& members = it->second.members;
    if (std::find(members.begin(), members.end(), id) == members.end()) {
      throw ConfigError("group " + rule.group_id + " does not list member " + id);
    }
  }
  for (const auto& gid : repo->group_order_) {
    repo->recompute_benefit_locked(gid);
    const RuleGroup& group = repo->groups_.at(gid);
    if (std::find(group.members.begin(), group.members.end(), group.representative) ==
        group.members.end()) {
      throw ConfigError("group " + gid + " representative is not a member");
    }
  }

  for (const auto& id : repo->rule_order_) {
    const Nlr2& rule = repo->rules_.at(id);
    if (rule.group_id.empty()) continue;
    const auto& embedding = repo->rule_embeddings_.at(id);
    if (!repo->rule_index_) {
      repo->rule_index_ = std::make_unique<VectorIndex>(embedding.size());
    }
    repo->rule_index_->insert({id, embedding, rule.group_id});
  }
  for (const auto& row : query_rows) {
    QueryRecord record;
    record.query_id = row.at("query_id").get<std::string>();
    record.embedding = row.at("embedding").get<std::vector<double>>();
    record.rules = row.at("rules").get<std::vector<std::string>>();
    for (const auto& rule_id : record.rules) {
      if (repo->rules_.count(rule_id) == 0) {
        throw ConfigError("query record " + record.query_id +
                          " references missing rule " + rule_id);
      }
    }
    if (!repo->query_index_) {
      repo->query_index_ = std::make_unique<VectorIndex>(record.embedding.size());
    }
    repo->query_index_->insert({record.query_id, record.embedding, std::nullopt});
    repo->query_records_[record.query_id] = std::move(record);
  }
  return repo;
}

std::size_t Nlr2Repository::import_merge(const Nlr2Repository& other,
                                         GroupArbiter& arbiter) {
  const std::vector<Nlr2> foreign_rules = other.all_rules();
  std::vector<QueryRecord> foreign_records;
  {
    std::lock_guard<std::mutex> lock(other.mu_);
    for (const auto& [id, record] : other.query_records_) {
      foreign_records.push_back(record);
    }
  }

  std::lock_guard<std::mutex> lock(mu_);
  std::map<std::string, std::string> id_map;
  std::size_t created = 0;
  for (const auto& foreign : foreign_rules) {
    const AddRuleResult result =
        add_rule_locked(foreign.description, foreign.condition,
                        foreign.source_query_id, foreign.observed_speedups, arbiter);
    id_map[foreign.rule_id] = result.rule_id;
    if (result.created_rule) ++created;
  }
  for (const auto& record : foreign_records) {
    std::vector<std::string> mapped;
    for (const auto& rule_id : record.rules) {
      auto it = id_map.find(rule_id);
      if (it != id_map.end()) mapped.push_back(it->second);
    }
    if (mapped.empty()) continue;
    auto it = query_records_.find(record.query_id);
    if (it != query_records_.end()) {
      for (const auto& id : mapped) {
        auto& rules = it->second.rules;
        if (std::find(rules.begin(), rules.end(), id) == rules.end()) {
          rules.push_back(id);
        }
      }
      continue;
    }
    QueryRecord local{record.query_id, record.embedding, mapped};
    if (!query_index_) {
      query_index_ = std::make_unique<VectorIndex>(record.embedding.size());
    }
    query_index_->insert({record.query_id, record.embedding, std::nullopt});
    query_records_[record.query_id] = std::move(local);
  }
  return created;
}

}  // namespace qrw
