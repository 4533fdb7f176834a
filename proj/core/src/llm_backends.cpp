#include <chrono>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "qrewrite/errors.hpp"
#include "qrewrite/llm.hpp"

namespace qrw {

using nlohmann::json;

std::unique_ptr<ScriptedBackend> ScriptedBackend::from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open transcript file: " + path);
  std::stringstream buffer;
  buffer << in.rdbuf();
  auto backend = std::unique_ptr<ScriptedBackend>(new ScriptedBackend());
  backend->load(buffer.str(), path);
  return backend;
}

std::unique_ptr<ScriptedBackend> ScriptedBackend::from_string(const std::string& jsonl) {
  auto backend = std::unique_ptr<ScriptedBackend>(new ScriptedBackend());
  backend->load(jsonl, "<inline transcript>");
  return backend;
}

void ScriptedBackend::load(const std::string& jsonl, const std::string& origin) {
  std::istringstream in(jsonl);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::string trimmed = line;
    while (!trimmed.empty() && (trimmed.back() == '\r' || trimmed.back() == ' ')) {
      trimmed.pop_back();
    }
    if (trimmed.empty()) continue;
    json record;
    try {
      record = json::parse(trimmed);
    } catch (const json::exception& e) {
      throw ConfigError(origin + ":" + std::to_string(line_no) +
                        ": bad transcript line: " + e.what());
    }
    if (!record.contains("template_id") || !record.contains("prompt_digest") ||
        !record.contains("reply")) {
      throw ConfigError(origin + ":" + std::to_string(line_no) +
                        ": transcript record needs template_id, prompt_digest, reply");
    }
    const std::string template_name = record["template_id"].get<std::string>();
    if (!template_from_string(template_name)) {
      throw ConfigError(origin + ":" + std::to_string(line_no) +
                        ": unknown template_id: " + template_name);
    }
    Entry entry;
    entry.reply = record["reply"].get<std::string>();
    entry.tokens_in = record.value("tokens_in", 0ULL);
    entry.tokens_out = record.value("tokens_out", 0ULL);
    entry.latency_s = record.value("latency_s", 0.0);
    const std::string key =
        template_name + "\n" + record["prompt_digest"].get<std::string>();
    queues_[key].push_back(std::move(entry));
  }
}

BackendReply ScriptedBackend::complete(const Conversation& conversation) {
  const std::string template_name = to_string(conversation.template_id);
  const std::string digest = conversation_digest(conversation);
  std::lock_guard<std::mutex> lock(mu_);
  for (const std::string& key : {template_name + "\n" + digest, template_name + "\n*"}) {
    auto it = queues_.find(key);
    if (it == queues_.end() || it->second.empty()) continue;
    Entry entry = std::move(it->second.front());
    it->second.pop_front();
    return {std::move(entry.reply), entry.tokens_in, entry.tokens_out, entry.latency_s};
  }
  throw ScriptMiss("no scripted reply for template=" + template_name +
                   " digest=" + digest);
}

std::size_t ScriptedBackend::remaining() const {
  std::size_t total = 0;
  for (const auto& [key, queue] : queues_) total += queue.size();
  return total;
}

LiveBackend::LiveBackend(LiveBackendConfig config) : config_(std::move(config)) {
  if (config_.base_url.empty()) throw ConfigError("live LLM base_url not set");
  if (config_.model.empty()) throw ConfigError("live LLM model not set");
  const char* key = std::getenv(config_.api_key_env.c_str());
  if (key == nullptr || *key == '\0') {
    throw ConfigError("environment variable " + config_.api_key_env +
                      " is not set (required for the live LLM backend)");
  }
  api_key_ = key;
}

BackendReply LiveBackend::complete(const Conversation& conversation) {
  json messages = json::array();
  for (const auto& turn : conversation.turns) {
    messages.push_back({{"role", to_string(turn.role)}, {"content", turn.text}});
  }
  json body = {{"model", config_.model}, {"messages", messages}};
  if (config_.temperature) body["temperature"] = *config_.temperature;

  httplib::Client client(config_.base_url);
  client.set_connection_timeout(std::chrono::duration<double>(config_.timeout_s));
  client.set_read_timeout(std::chrono::duration<double>(config_.timeout_s));
  client.set_default_headers({{"Authorization", "Bearer " + api_key_}});

  const auto start = std::chrono::steady_clock::now();
  httplib::Result result = client.Post(config_.path, body.dump(), "application/json");
  const double latency =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  if (!result) {
    throw TransportError("LLM request failed: " + httplib::to_string(result.error()));
  }
  if (result->status != 200) {
    throw TransportError("LLM request returned HTTP " + std::to_string(result->status) +
                         ": " + result->body.substr(0, 200));
  }

  try {
    const json reply = json::parse(result->body);
    BackendReply out;
    out.text = reply.at("choices").at(0).at("message").at("content").get<std::string>();
    if (reply.contains("usage")) {
      out.tokens_in = reply["usage"].value("prompt_tokens", 0ULL);
      out.tokens_out = reply["usage"].value("completion_tokens", 0ULL);
    }
    out.latency_s = latency;
    return out;
  } catch (const json::exception& e) {
    throw ProviderError(std::string("malformed LLM response: ") + e.what());
  }
}

}  // namespace qrw
