// Completion backends: a live OpenAI-compatible HTTP client and a scripted
// replay backend for offline runs, behind one interface with retry support.
#pragma once

#include <atomic>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>

namespace pave {

struct CompletionRequest {
  std::string system_text;
  std::string user_text;
  double temperature = 0.0;
  int max_output_tokens = 256;
  std::optional<long> seed;
};

struct CompletionResponse {
  std::string text;
  long input_token_count = 0;  // 0 when the endpoint reports no usage
  long output_token_count = 0;
  long latency_ms = 0;
};

enum class BackendErrorClass {
  timeout,
  rate_limited,
  server_error,
  auth_error,
  script_exhausted,
};

const char* to_string(BackendErrorClass cls);

class BackendError : public std::runtime_error {
 public:
  BackendError(BackendErrorClass cls, const std::string& what)
      : std::runtime_error(what), cls_(cls) {}

  BackendErrorClass error_class() const { return cls_; }

 private:
  BackendErrorClass cls_;
};

// Implementations must be safe for concurrent complete() calls.
class Backend {
 public:
  virtual ~Backend() = default;

  CompletionResponse complete(const CompletionRequest& request) {
    calls_.fetch_add(1, std::memory_order_relaxed);
    return do_complete(request);
  }

  // Per-run call counter; counts every complete() invocation, including ones
  // that fail.
  long calls_made() const { return calls_.load(std::memory_order_relaxed); }

 protected:
  virtual CompletionResponse do_complete(const CompletionRequest& request) = 0;

 private:
  std::atomic<long> calls_{0};
};

struct RetryPolicy {
  int max_attempts = 3;
  int base_backoff_ms = 250;
  std::set<BackendErrorClass> retry_on{BackendErrorClass::timeout,
                                       BackendErrorClass::rate_limited,
                                       BackendErrorClass::server_error};
};

struct RetryResult {
  CompletionResponse response;
  int attempts = 0;
};

// Retries only the classes in policy.retry_on, sleeping
// base_backoff_ms * 2^(attempt-1) between attempts, and surfaces the last
// error after max_attempts. sleep_ms is injectable for tests.
RetryResult complete_with_retry(Backend& backend,
                                const CompletionRequest& request,
                                const RetryPolicy& policy,
                                const std::function<void(int)>& sleep_ms = {});

// Replays queued responses matched by the "[stage:<name>]" tag that the
// prompting layer embeds in the system text, so each stage can be scripted
// independently of call order. Bit-deterministic: identical queues plus an
// identical request sequence produce identical responses.
class ScriptedBackend final : public Backend {
 public:
  void enqueue(std::string_view stage, std::string text);
  void enqueue_error(std::string_view stage, BackendErrorClass cls);
  std::size_t pending(std::string_view stage) const;

  static std::string stage_tag_of(const CompletionRequest& request);

 protected:
  CompletionResponse do_complete(const CompletionRequest& request) override;

 private:
  struct Entry {
    std::optional<BackendErrorClass> error;
    std::string text;
  };

  mutable std::mutex mu_;
  std::map<std::string, std::deque<Entry>, std::less<>> queues_;
};

struct HttpBackendConfig {
  std::string base_url;  // e.g. https://api.openai.com/v1
  std::string model;
  std::string api_key;
  int timeout_seconds = 120;
};

// POSTs {base_url}/chat/completions with the usual messages array and reads
// the first choice's message content.
class HttpBackend final : public Backend {
 public:
  explicit HttpBackend(HttpBackendConfig config);

 protected:
  CompletionResponse do_complete(const CompletionRequest& request) override;

 private:
  HttpBackendConfig config_;
  bool use_tls_ = true;
  std::string host_;
  int port_ = 443;
  std::string path_prefix_;
};

}  // namespace pave
