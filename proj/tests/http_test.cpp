// Drives the live chat-completion backend and the embedding endpoint
// client against in-process HTTP servers, pinning the wire format, the
// error taxonomy, and the client's retry and pricing behavior.
#include <doctest.h>

#include <atomic>
#include <cstdlib>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "qrewrite/budget.hpp"
#include "qrewrite/embedding.hpp"
#include "qrewrite/errors.hpp"
#include "qrewrite/llm.hpp"
#include "test_util.hpp"

using namespace qrw;
using nlohmann::json;

namespace {

// In-process server on an ephemeral localhost port. Register handlers
// before start(); the destructor stops the accept loop and joins.
struct LocalServer {
  httplib::Server server;
  int port = 0;
  std::thread thread;

  void start() {
    port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }

  std::string url() const { return "http://127.0.0.1:" + std::to_string(port); }

  void shutdown() {
    server.stop();
    if (thread.joinable()) thread.join();
  }

  ~LocalServer() { shutdown(); }
};

// Requests observed by a handler. Handlers run on the server thread, so
// every access goes through the mutex.
struct Seen {
  std::mutex mu;
  std::vector<std::string> bodies;
  std::vector<std::string> auth_headers;

  void record(const httplib::Request& req) {
    std::lock_guard<std::mutex> lock(mu);
    bodies.push_back(req.body);
    auth_headers.push_back(req.get_header_value("Authorization"));
  }
  std::size_t count() {
    std::lock_guard<std::mutex> lock(mu);
    return bodies.size();
  }
  json body_json(std::size_t i) {
    std::lock_guard<std::mutex> lock(mu);
    return json::parse(bodies.at(i));
  }
  std::string auth(std::size_t i) {
    std::lock_guard<std::mutex> lock(mu);
    return auth_headers.at(i);
  }
};

// Sets an environment variable for the guard's lifetime, restoring the
// prior value (or absence) on destruction.
struct EnvGuard {
  std::string name;
  bool had_old = false;
  std::string old_value;

  EnvGuard(std::string n, const char* value) : name(std::move(n)) {
    if (const char* old = std::getenv(name.c_str())) {
      had_old = true;
      old_value = old;
    }
    if (value) {
      ::setenv(name.c_str(), value, 1);
    } else {
      ::unsetenv(name.c_str());
    }
  }
  ~EnvGuard() {
    if (had_old) {
      ::setenv(name.c_str(), old_value.c_str(), 1);
    } else {
      ::unsetenv(name.c_str());
    }
  }
};

constexpr const char* kKeyVar = "QRW_TEST_LLM_KEY";

std::string completion_reply(const std::string& content, std::uint64_t tokens_in,
                             std::uint64_t tokens_out) {
  json reply = {
      {"choices", json::array({json{{"message", json{{"content", content}}}}})},
      {"usage", {{"prompt_tokens", tokens_in}, {"completion_tokens", tokens_out}}},
  };
  return reply.dump();
}

LiveBackendConfig live_config(const std::string& base_url) {
  LiveBackendConfig config;
  config.base_url = base_url;
  config.model = "tiny-model";
  config.api_key_env = kKeyVar;
  config.timeout_s = 10.0;
  return config;
}

Conversation check_conversation() {
  Conversation conv;
  conv.template_id = TemplateId::SemanticCheck;
  conv.add(Role::System, "be terse");
  conv.add(Role::User, "compare these queries");
  return conv;
}

}  // namespace

TEST_CASE("the live backend posts a chat completion and parses the reply") {
  EnvGuard key(kKeyVar, "sk-local-test");
  Seen seen;
  LocalServer srv;
  srv.server.Post("/v1/chat/completions",
                  [&](const httplib::Request& req, httplib::Response& res) {
                    seen.record(req);
                    res.set_content(completion_reply("they are equivalent", 12, 7),
                                    "application/json");
                  });
  srv.start();

  LiveBackend backend(live_config(srv.url()));
  const BackendReply reply = backend.complete(check_conversation());

  CHECK(reply.text == "they are equivalent");
  CHECK(reply.tokens_in == 12);
  CHECK(reply.tokens_out == 7);
  CHECK(reply.latency_s > 0.0);

  REQUIRE(seen.count() == 1);
  CHECK(seen.auth(0) == "Bearer sk-local-test");
  const json body = seen.body_json(0);
  CHECK(body.at("model") == "tiny-model");
  CHECK_FALSE(body.contains("temperature"));
  REQUIRE(body.at("messages").size() == 2);
  CHECK(body["messages"][0]["role"] == "system");
  CHECK(body["messages"][0]["content"] == "be terse");
  CHECK(body["messages"][1]["role"] == "user");
  CHECK(body["messages"][1]["content"] == "compare these queries");
}

TEST_CASE("the sampling temperature is forwarded only when configured") {
  EnvGuard key(kKeyVar, "sk-local-test");
  Seen seen;
  LocalServer srv;
  srv.server.Post("/v1/chat/completions",
                  [&](const httplib::Request& req, httplib::Response& res) {
                    seen.record(req);
                    res.set_content(completion_reply("ok", 1, 1), "application/json");
                  });
  srv.start();

  LiveBackendConfig with_temp = live_config(srv.url());
  with_temp.temperature = 0.25;
  LiveBackend(with_temp).complete(check_conversation());
  LiveBackend(live_config(srv.url())).complete(check_conversation());

  REQUIRE(seen.count() == 2);
  CHECK(seen.body_json(0).at("temperature").get<double>() == doctest::Approx(0.25));
  CHECK_FALSE(seen.body_json(1).contains("temperature"));
}

TEST_CASE("live backend configuration is validated before any request") {
  SUBCASE("base_url is required") {
    LiveBackendConfig config;
    config.model = "tiny-model";
    CHECK_THROWS_WITH_AS(LiveBackend{config}, "live LLM base_url not set", ConfigError);
  }
  SUBCASE("model is required") {
    LiveBackendConfig config;
    config.base_url = "http://127.0.0.1:1";
    CHECK_THROWS_WITH_AS(LiveBackend{config}, "live LLM model not set", ConfigError);
  }
  SUBCASE("a missing api key env var is rejected") {
    EnvGuard key(kKeyVar, nullptr);
    CHECK_THROWS_WITH_AS(
        LiveBackend(live_config("http://127.0.0.1:1")),
        "environment variable QRW_TEST_LLM_KEY is not set (required for the live "
        "LLM backend)",
        ConfigError);
  }
  SUBCASE("an empty api key env var counts as unset") {
    EnvGuard key(kKeyVar, "");
    CHECK_THROWS_AS(LiveBackend(live_config("http://127.0.0.1:1")), ConfigError);
  }
}

TEST_CASE("http failures surface as transport errors") {
  EnvGuard key(kKeyVar, "sk-local-test");

  SUBCASE("a non-200 status carries the code and a capped body excerpt") {
    LocalServer srv;
    srv.server.Post("/v1/chat/completions",
                    [&](const httplib::Request&, httplib::Response& res) {
                      res.status = 503;
                      res.set_content("overloaded " + std::string(300, 'x'),
                                      "text/plain");
                    });
    srv.start();

    LiveBackend backend(live_config(srv.url()));
    try {
      backend.complete(check_conversation());
      FAIL("expected TransportError");
    } catch (const TransportError& e) {
      const std::string msg = e.what();
      CHECK(msg.rfind("LLM request returned HTTP 503: ", 0) == 0);
      CHECK(msg.find("overloaded") != std::string::npos);
      // the excerpt stops at 200 bytes of the response body
      CHECK(msg.find(std::string(189, 'x')) != std::string::npos);
      CHECK(msg.find(std::string(190, 'x')) == std::string::npos);
    }
  }

  SUBCASE("a connection failure names the transport error") {
    LocalServer srv;
    srv.start();
    const std::string dead_url = srv.url();
    srv.shutdown();

    LiveBackend backend(live_config(dead_url));
    try {
      backend.complete(check_conversation());
      FAIL("expected TransportError");
    } catch (const TransportError& e) {
      CHECK(std::string(e.what()).rfind("LLM request failed: ", 0) == 0);
    }
  }
}

TEST_CASE("the client retries transport failures and prices the usage") {
  EnvGuard key(kKeyVar, "sk-local-test");
  std::atomic<int> requests{0};
  LocalServer srv;
  srv.server.Post("/v1/chat/completions",
                  [&](const httplib::Request&, httplib::Response& res) {
                    if (requests.fetch_add(1) == 0) {
                      res.status = 500;
                      res.set_content("transient", "text/plain");
                      return;
                    }
                    res.set_content(completion_reply("after retry", 1000, 500),
                                    "application/json");
                  });
  srv.start();

  auto backend = std::make_shared<LiveBackend>(live_config(srv.url()));
  auto ledger = std::make_shared<UsageLedger>();
  LlmClient client(backend, LlmRates{0.5, 2.0}, ledger, 2, 0.01);
  Budget global(1e6, 1e6);
  BudgetScope scope(global, 1e6);

  Conversation conv;
  conv.template_id = TemplateId::GroupPredict;
  conv.add(Role::User, "pick a group");
  const CompletionResult result = client.complete(conv, scope);

  CHECK(result.text == "after retry");
  CHECK(requests.load() == 2);
  CHECK(result.usage.tokens_in == 1000);
  CHECK(result.usage.tokens_out == 500);
  CHECK(result.usage.cost == doctest::Approx(1.5));

  const UsageTotals totals = ledger->totals();
  CHECK(totals.calls == 1);  // the failed attempt is never priced
  CHECK(totals.tokens_in == 1000);
  CHECK(totals.tokens_out == 500);
  CHECK(totals.cost == doctest::Approx(1.5));
  CHECK(totals.calls_by_template.at("group_predict") == 1);

  CHECK(global.money_remaining() == doctest::Approx(1e6 - 1.5));
  CHECK(global.llm_calls_made() == 1);
}

TEST_CASE("retries stop after the configured number of attempts") {
  EnvGuard key(kKeyVar, "sk-local-test");
  std::atomic<int> requests{0};
  LocalServer srv;
  srv.server.Post("/v1/chat/completions",
                  [&](const httplib::Request&, httplib::Response& res) {
                    requests.fetch_add(1);
                    res.status = 500;
                    res.set_content("still broken", "text/plain");
                  });
  srv.start();

  auto backend = std::make_shared<LiveBackend>(live_config(srv.url()));
  auto ledger = std::make_shared<UsageLedger>();
  LlmClient client(backend, LlmRates{}, ledger, 2, 0.01);
  Budget global(1e6, 1e6);
  BudgetScope scope(global, 1e6);

  Conversation conv;
  conv.template_id = TemplateId::ZeroShotRewrite;
  conv.add(Role::User, "rewrite this");
  CHECK_THROWS_AS(client.complete(conv, scope), TransportError);
  CHECK(requests.load() == 3);  // initial attempt + 2 retries
  CHECK(ledger->totals().calls == 0);
}

TEST_CASE("malformed completion replies are provider errors and are not retried") {
  EnvGuard key(kKeyVar, "sk-local-test");
  std::string payload;
  SUBCASE("a non-json body") { payload = "not json at all"; }
  SUBCASE("a json body without choices") { payload = R"({"object":"chat"})"; }
  SUBCASE("an empty choices array") { payload = R"({"choices":[]})"; }

  std::atomic<int> requests{0};
  LocalServer srv;
  srv.server.Post("/v1/chat/completions",
                  [&](const httplib::Request&, httplib::Response& res) {
                    requests.fetch_add(1);
                    res.set_content(payload, "application/json");
                  });
  srv.start();

  auto backend = std::make_shared<LiveBackend>(live_config(srv.url()));
  auto ledger = std::make_shared<UsageLedger>();
  LlmClient client(backend, LlmRates{}, ledger, 2, 0.01);
  Budget global(1e6, 1e6);
  BudgetScope scope(global, 1e6);

  Conversation conv;
  conv.template_id = TemplateId::SyntaxFix;
  conv.add(Role::User, "fix this");

  try {
    client.complete(conv, scope);
    FAIL("expected ProviderError");
  } catch (const ProviderError& e) {
    CHECK(std::string(e.what()).rfind("malformed LLM response: ", 0) == 0);
  }
  CHECK(requests.load() == 1);
  CHECK(ledger->totals().calls == 0);
}

TEST_CASE("the embedding endpoint client round-trips batches") {
  Seen seen;
  LocalServer srv;
  // one vector per requested text: row i is {i+1} so order is observable
  srv.server.Post("/embed", [&](const httplib::Request& req, httplib::Response& res) {
    seen.record(req);
    const json request = json::parse(req.body);
    json vectors = json::array();
    for (std::size_t i = 0; i < request.at("texts").size(); ++i) {
      vectors.push_back(json::array({static_cast<double>(i + 1)}));
    }
    res.set_content(json{{"vectors", vectors}}.dump(), "application/json");
  });
  srv.start();

  HttpEmbeddingConfig config;
  config.base_url = srv.url();
  HttpEmbeddingProvider provider(config);

  const auto vectors = provider.embed_batch({"alpha", "beta"});
  REQUIRE(vectors.size() == 2);
  CHECK(vectors[0] == std::vector<double>{1.0});
  CHECK(vectors[1] == std::vector<double>{2.0});

  REQUIRE(seen.count() == 1);
  CHECK(seen.body_json(0) == json{{"texts", {"alpha", "beta"}}});

  // the single-text wrapper goes through the same endpoint
  CHECK(provider.embed("gamma") == std::vector<double>{1.0});

  // with an expected dimension configured, a one-element vector is rejected
  HttpEmbeddingConfig strict = config;
  strict.dim = 3;
  HttpEmbeddingProvider strict_provider(strict);
  CHECK_THROWS_WITH_AS(strict_provider.embed("delta"),
                       "provider returned wrong dimension", ProviderError);
}

TEST_CASE("embedding endpoint failures are provider errors") {
  SUBCASE("a short batch is rejected") {
    LocalServer srv;
    srv.server.Post("/embed", [&](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"vectors":[[1.0]]})", "application/json");
    });
    srv.start();
    HttpEmbeddingConfig config;
    config.base_url = srv.url();
    HttpEmbeddingProvider provider(config);
    CHECK_THROWS_WITH_AS(provider.embed_batch({"a", "b"}),
                         "embedding endpoint returned wrong batch size",
                         ProviderError);
  }

  SUBCASE("a non-200 status names the code") {
    LocalServer srv;
    srv.server.Post("/embed", [&](const httplib::Request&, httplib::Response& res) {
      res.status = 503;
      res.set_content("down", "text/plain");
    });
    srv.start();
    HttpEmbeddingConfig config;
    config.base_url = srv.url();
    HttpEmbeddingProvider provider(config);
    CHECK_THROWS_WITH_AS(provider.embed_batch({"a"}),
                         "embedding endpoint returned HTTP 503", ProviderError);
  }

  SUBCASE("a malformed body is reported") {
    LocalServer srv;
    srv.server.Post("/embed", [&](const httplib::Request&, httplib::Response& res) {
      res.set_content("nope", "application/json");
    });
    srv.start();
    HttpEmbeddingConfig config;
    config.base_url = srv.url();
    HttpEmbeddingProvider provider(config);
    try {
      provider.embed_batch({"a"});
      FAIL("expected ProviderError");
    } catch (const ProviderError& e) {
      CHECK(std::string(e.what()).rfind("malformed embedding response: ", 0) == 0);
    }
  }

  SUBCASE("a missing vectors field is malformed") {
    LocalServer srv;
    srv.server.Post("/embed", [&](const httplib::Request&, httplib::Response& res) {
      res.set_content(R"({"rows":[[1.0]]})", "application/json");
    });
    srv.start();
    HttpEmbeddingConfig config;
    config.base_url = srv.url();
    HttpEmbeddingProvider provider(config);
    CHECK_THROWS_AS(provider.embed_batch({"a"}), ProviderError);
  }

  SUBCASE("a connection failure is reported with its cause") {
    LocalServer srv;
    srv.start();
    HttpEmbeddingConfig config;
    config.base_url = srv.url();
    srv.shutdown();
    HttpEmbeddingProvider provider(config);
    try {
      provider.embed_batch({"a"});
      FAIL("expected ProviderError");
    } catch (const ProviderError& e) {
      CHECK(std::string(e.what()).rfind("embedding request failed: ", 0) == 0);
    }
  }

  SUBCASE("a base_url is required") {
    CHECK_THROWS_WITH_AS(HttpEmbeddingProvider(HttpEmbeddingConfig{}),
                         "embedding base_url not set", ConfigError);
  }
}
