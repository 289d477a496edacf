#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <atomic>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "pave/backend.hpp"

using namespace pave;

namespace {

CompletionRequest staged_request(const std::string& stage) {
  CompletionRequest request;
  request.system_text = "[stage:" + stage + "] system half";
  request.user_text = "user half";
  return request;
}

struct LocalServer {
  httplib::Server server;
  int port = 0;
  std::thread thread;

  LocalServer() {
    port = server.bind_to_any_port("127.0.0.1");
    REQUIRE(port > 0);
    thread = std::thread([this] { server.listen_after_bind(); });
    server.wait_until_ready();
  }
  ~LocalServer() {
    server.stop();
    thread.join();
  }

  std::string base_url() const {
    return "http://127.0.0.1:" + std::to_string(port) + "/v1";
  }
};

std::string completion_body(const std::string& content) {
  const nlohmann::json body = {
      {"choices", {{{"message", {{"role", "assistant"}, {"content", content}}}}}},
      {"usage", {{"prompt_tokens", 12}, {"completion_tokens", 5}}},
  };
  return body.dump();
}

}  // namespace

TEST_CASE("scripted backend pops per stage queues in order") {
  ScriptedBackend backend;
  backend.enqueue("draft", "first");
  backend.enqueue("draft", "second");
  backend.enqueue("score", "SUPPORT: 0.5");

  CHECK(backend.pending("draft") == 2);
  CHECK(backend.complete(staged_request("draft")).text == "first");
  CHECK(backend.complete(staged_request("score")).text == "SUPPORT: 0.5");
  CHECK(backend.complete(staged_request("draft")).text == "second");
  CHECK(backend.pending("draft") == 0);
  CHECK(backend.calls_made() == 3);
}

TEST_CASE("scripted backend reports exhaustion with the stage name") {
  ScriptedBackend backend;
  try {
    backend.complete(staged_request("revise"));
    FAIL("expected exhaustion");
  } catch (const BackendError& e) {
    CHECK(e.error_class() == BackendErrorClass::script_exhausted);
    CHECK(std::string(e.what()).find("revise") != std::string::npos);
  }
  CHECK(backend.calls_made() == 1);  // failures count too
}

TEST_CASE("scripted backend rejects untagged requests") {
  ScriptedBackend backend;
  backend.enqueue("draft", "text");
  CompletionRequest request;
  request.system_text = "no tag here";
  CHECK_THROWS_AS(backend.complete(request), BackendError);
}

TEST_CASE("stage tag extraction") {
  CHECK(ScriptedBackend::stage_tag_of(staged_request("decompose")) ==
        "decompose");
  CompletionRequest request;
  request.system_text = "plain";
  CHECK(ScriptedBackend::stage_tag_of(request).empty());
}

TEST_CASE("scripted errors replay once then the queue continues") {
  ScriptedBackend backend;
  backend.enqueue_error("draft", BackendErrorClass::timeout);
  backend.enqueue("draft", "after the error");

  CHECK_THROWS_AS(backend.complete(staged_request("draft")), BackendError);
  CHECK(backend.complete(staged_request("draft")).text == "after the error");
}

TEST_CASE("retry succeeds after a retryable error with doubling backoff") {
  ScriptedBackend backend;
  backend.enqueue_error("draft", BackendErrorClass::timeout);
  backend.enqueue_error("draft", BackendErrorClass::rate_limited);
  backend.enqueue("draft", "made it");

  std::vector<int> sleeps;
  const RetryResult result =
      complete_with_retry(backend, staged_request("draft"), RetryPolicy{},
                          [&sleeps](int ms) { sleeps.push_back(ms); });
  CHECK(result.response.text == "made it");
  CHECK(result.attempts == 3);
  CHECK(sleeps == std::vector<int>{250, 500});
  CHECK(backend.calls_made() == 3);
}

TEST_CASE("retry respects a custom backoff base") {
  ScriptedBackend backend;
  backend.enqueue_error("draft", BackendErrorClass::server_error);
  backend.enqueue("draft", "ok");

  RetryPolicy policy;
  policy.base_backoff_ms = 100;
  std::vector<int> sleeps;
  complete_with_retry(backend, staged_request("draft"), policy,
                      [&sleeps](int ms) { sleeps.push_back(ms); });
  CHECK(sleeps == std::vector<int>{100});
}

TEST_CASE("non retryable classes surface immediately") {
  ScriptedBackend backend;
  backend.enqueue_error("draft", BackendErrorClass::auth_error);
  backend.enqueue("draft", "never reached");

  std::vector<int> sleeps;
  try {
    complete_with_retry(backend, staged_request("draft"), RetryPolicy{},
                        [&sleeps](int ms) { sleeps.push_back(ms); });
    FAIL("expected auth error");
  } catch (const BackendError& e) {
    CHECK(e.error_class() == BackendErrorClass::auth_error);
  }
  CHECK(sleeps.empty());
  CHECK(backend.pending("draft") == 1);
}

TEST_CASE("retry exhaustion rethrows the last error") {
  ScriptedBackend backend;
  for (int i = 0; i < 3; ++i) {
    backend.enqueue_error("draft", BackendErrorClass::timeout);
  }
  std::vector<int> sleeps;
  try {
    complete_with_retry(backend, staged_request("draft"), RetryPolicy{},
                        [&sleeps](int ms) { sleeps.push_back(ms); });
    FAIL("expected exhaustion");
  } catch (const BackendError& e) {
    CHECK(e.error_class() == BackendErrorClass::timeout);
  }
  CHECK(sleeps == std::vector<int>{250, 500});
  CHECK(backend.calls_made() == 3);
}

TEST_CASE("http backend rejects unparseable base urls") {
  HttpBackendConfig config;
  config.base_url = "ftp://example.test/v1";
  CHECK_THROWS_AS(HttpBackend{config}, std::invalid_argument);
}

TEST_CASE("http backend round trips an openai shaped completion") {
  LocalServer local;
  nlohmann::json seen_body;
  std::string seen_auth;
  local.server.Post("/v1/chat/completions",
                    [&](const httplib::Request& req, httplib::Response& res) {
                      seen_body = nlohmann::json::parse(req.body);
                      seen_auth = req.get_header_value("Authorization");
                      res.set_content(completion_body("ANSWER: maybe"),
                                      "application/json");
                    });

  HttpBackendConfig config;
  config.base_url = local.base_url();
  config.model = "test-model";
  config.api_key = "sk-local";
  HttpBackend backend(config);

  CompletionRequest request;
  request.system_text = "[stage:draft] be terse";
  request.user_text = "Question: is it raining?";
  request.temperature = 0.25;
  request.max_output_tokens = 64;
  request.seed = 7;

  const CompletionResponse response = backend.complete(request);
  CHECK(response.text == "ANSWER: maybe");
  CHECK(response.input_token_count == 12);
  CHECK(response.output_token_count == 5);
  CHECK(response.latency_ms >= 0);

  CHECK(seen_auth == "Bearer sk-local");
  CHECK(seen_body.at("model") == "test-model");
  CHECK(seen_body.at("temperature") == doctest::Approx(0.25));
  CHECK(seen_body.at("max_tokens") == 64);
  CHECK(seen_body.at("seed") == 7);
  REQUIRE(seen_body.at("messages").size() == 2);
  CHECK(seen_body.at("messages")[0].at("role") == "system");
  CHECK(seen_body.at("messages")[1].at("role") == "user");
}

TEST_CASE("http backend maps status codes to error classes") {
  LocalServer local;
  std::atomic<int> status{429};
  local.server.Post("/v1/chat/completions",
                    [&](const httplib::Request&, httplib::Response& res) {
                      res.status = status.load();
                      res.set_content("busy", "text/plain");
                    });

  HttpBackendConfig config;
  config.base_url = local.base_url();
  config.model = "test-model";
  config.api_key = "sk-local";
  HttpBackend backend(config);

  const auto expect_class = [&](int code, BackendErrorClass expected) {
    status = code;
    try {
      backend.complete(CompletionRequest{});
      FAIL("expected error for status " << code);
    } catch (const BackendError& e) {
      CHECK(e.error_class() == expected);
    }
  };
  expect_class(429, BackendErrorClass::rate_limited);
  expect_class(401, BackendErrorClass::auth_error);
  expect_class(403, BackendErrorClass::auth_error);
  expect_class(408, BackendErrorClass::timeout);
  expect_class(500, BackendErrorClass::server_error);
}

TEST_CASE("http backend flags malformed completion bodies") {
  LocalServer local;
  std::atomic<bool> send_garbage{true};
  local.server.Post("/v1/chat/completions",
                    [&](const httplib::Request&, httplib::Response& res) {
                      if (send_garbage.load()) {
                        res.set_content("not json at all", "text/plain");
                      } else {
                        res.set_content("{\"choices\": []}", "application/json");
                      }
                    });

  HttpBackendConfig config;
  config.base_url = local.base_url();
  config.model = "m";
  config.api_key = "k";
  HttpBackend backend(config);

  CHECK_THROWS_AS(backend.complete(CompletionRequest{}), BackendError);
  send_garbage = false;
  try {
    backend.complete(CompletionRequest{});
    FAIL("expected empty choices error");
  } catch (const BackendError& e) {
    CHECK(e.error_class() == BackendErrorClass::server_error);
    CHECK(std::string(e.what()).find("choices") != std::string::npos);
  }
}

TEST_CASE("retry recovers across http rate limiting") {
  LocalServer local;
  std::atomic<int> hits{0};
  local.server.Post("/v1/chat/completions",
                    [&](const httplib::Request&, httplib::Response& res) {
                      if (hits.fetch_add(1) < 2) {
                        res.status = 429;
                        res.set_content("slow down", "text/plain");
                        return;
                      }
                      res.set_content(completion_body("recovered"),
                                      "application/json");
                    });

  HttpBackendConfig config;
  config.base_url = local.base_url();
  config.model = "m";
  config.api_key = "k";
  HttpBackend backend(config);

  std::vector<int> sleeps;
  const RetryResult result =
      complete_with_retry(backend, CompletionRequest{}, RetryPolicy{},
                          [&sleeps](int ms) { sleeps.push_back(ms); });
  CHECK(result.response.text == "recovered");
  CHECK(result.attempts == 3);
  CHECK(sleeps == std::vector<int>{250, 500});
  CHECK(backend.calls_made() == 3);
}
