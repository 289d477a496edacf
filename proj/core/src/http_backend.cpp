#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include "pave/backend.hpp"

#include <chrono>
#include <memory>
#include <regex>

#include <nlohmann/json.hpp>

namespace pave {

namespace {

BackendErrorClass classify_status(int status) {
  if (status == 401 || status == 403) return BackendErrorClass::auth_error;
  if (status == 408) return BackendErrorClass::timeout;
  if (status == 429) return BackendErrorClass::rate_limited;
  return BackendErrorClass::server_error;
}

}  // namespace

HttpBackend::HttpBackend(HttpBackendConfig config)
    : config_(std::move(config)) {
  static const std::regex url_re(R"((https?)://([^/:]+)(?::(\d+))?(.*))");
  std::smatch m;
  if (!std::regex_match(config_.base_url, m, url_re)) {
    throw std::invalid_argument("unparseable base_url: " + config_.base_url);
  }
  use_tls_ = m[1] == "https";
  host_ = m[2];
  port_ = m[3].matched ? std::stoi(m[3]) : (use_tls_ ? 443 : 80);
  path_prefix_ = m[4];
  while (!path_prefix_.empty() && path_prefix_.back() == '/') {
    path_prefix_.pop_back();
  }
}

CompletionResponse HttpBackend::do_complete(const CompletionRequest& request) {
  nlohmann::json body = {
      {"model", config_.model},
      {"messages",
       {{{"role", "system"}, {"content", request.system_text}},
        {{"role", "user"}, {"content", request.user_text}}}},
      {"temperature", request.temperature},
      {"max_tokens", request.max_output_tokens},
  };
  if (request.seed) body["seed"] = *request.seed;

  httplib::Headers headers = {
      {"Authorization", "Bearer " + config_.api_key},
  };

  const auto started = std::chrono::steady_clock::now();
  httplib::Result result;
  const std::string path = path_prefix_ + "/chat/completions";
  if (use_tls_) {
    httplib::SSLClient client(host_, port_);
    client.set_connection_timeout(config_.timeout_seconds, 0);
    client.set_read_timeout(config_.timeout_seconds, 0);
    client.set_write_timeout(config_.timeout_seconds, 0);
    result = client.Post(path, headers, body.dump(), "application/json");
  } else {
    httplib::Client client(host_, port_);
    client.set_connection_timeout(config_.timeout_seconds, 0);
    client.set_read_timeout(config_.timeout_seconds, 0);
    client.set_write_timeout(config_.timeout_seconds, 0);
    result = client.Post(path, headers, body.dump(), "application/json");
  }
  const auto elapsed_ms =
      std::chrono::duration_cast<std::chrono::milliseconds>(
          std::chrono::steady_clock::now() - started)
          .count();

  if (!result) {
    const auto err = result.error();
    const bool timed_out = err == httplib::Error::ConnectionTimeout ||
                           err == httplib::Error::Read ||
                           err == httplib::Error::Write;
    throw BackendError(timed_out ? BackendErrorClass::timeout
                                 : BackendErrorClass::server_error,
                       "http transport failure: " + httplib::to_string(err));
  }
  if (result->status != 200) {
    std::string detail = result->body.substr(0, 300);
    throw BackendError(classify_status(result->status),
                       "http status " + std::to_string(result->status) +
                           " from " + host_ + ": " + detail);
  }

  nlohmann::json parsed;
  try {
    parsed = nlohmann::json::parse(result->body);
  } catch (const nlohmann::json::exception& e) {
    throw BackendError(BackendErrorClass::server_error,
                       std::string("unparseable completion body: ") + e.what());
  }
  if (!parsed.contains("choices") || parsed["choices"].empty()) {
    throw BackendError(BackendErrorClass::server_error,
                       "completion body carries no choices");
  }

  CompletionResponse response;
  const auto& message = parsed["choices"][0]["message"];
  if (message.contains("content") && message["content"].is_string()) {
    response.text = message["content"].get<std::string>();
  }
  if (parsed.contains("usage")) {
    response.input_token_count = parsed["usage"].value("prompt_tokens", 0L);
    response.output_token_count =
        parsed["usage"].value("completion_tokens", 0L);
  }
  response.latency_ms = elapsed_ms;
  return response;
}

}  // namespace pave
