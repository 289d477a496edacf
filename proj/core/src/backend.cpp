#include "pave/backend.hpp"

#include <chrono>
#include <thread>

namespace pave {

const char* to_string(BackendErrorClass cls) {
  switch (cls) {
    case BackendErrorClass::timeout: return "timeout";
    case BackendErrorClass::rate_limited: return "rate_limited";
    case BackendErrorClass::server_error: return "server_error";
    case BackendErrorClass::auth_error: return "auth_error";
    case BackendErrorClass::script_exhausted: return "script_exhausted";
  }
  return "unknown";
}

RetryResult complete_with_retry(Backend& backend,
                                const CompletionRequest& request,
                                const RetryPolicy& policy,
                                const std::function<void(int)>& sleep_ms) {
  const int max_attempts = policy.max_attempts < 1 ? 1 : policy.max_attempts;
  for (int attempt = 1;; ++attempt) {
    try {
      return RetryResult{backend.complete(request), attempt};
    } catch (const BackendError& e) {
      const bool retryable = policy.retry_on.count(e.error_class()) > 0;
      if (!retryable || attempt >= max_attempts) throw;
      const int delay = policy.base_backoff_ms << (attempt - 1);
      if (sleep_ms) {
        sleep_ms(delay);
      } else {
        std::this_thread::sleep_for(std::chrono::milliseconds(delay));
      }
    }
  }
}

void ScriptedBackend::enqueue(std::string_view stage, std::string text) {
  std::lock_guard lock(mu_);
  queues_[std::string(stage)].push_back(Entry{std::nullopt, std::move(text)});
}

void ScriptedBackend::enqueue_error(std::string_view stage,
                                    BackendErrorClass cls) {
  std::lock_guard lock(mu_);
  queues_[std::string(stage)].push_back(Entry{cls, {}});
}

std::size_t ScriptedBackend::pending(std::string_view stage) const {
  std::lock_guard lock(mu_);
  auto it = queues_.find(stage);
  return it == queues_.end() ? 0 : it->second.size();
}

std::string ScriptedBackend::stage_tag_of(const CompletionRequest& request) {
  static constexpr std::string_view kMarker = "[stage:";
  const std::size_t start = request.system_text.find(kMarker);
  if (start == std::string::npos) return {};
  const std::size_t name_start = start + kMarker.size();
  const std::size_t end = request.system_text.find(']', name_start);
  if (end == std::string::npos) return {};
  return request.system_text.substr(name_start, end - name_start);
}

CompletionResponse ScriptedBackend::do_complete(
    const CompletionRequest& request) {
  const std::string stage = stage_tag_of(request);
  if (stage.empty()) {
    throw BackendError(BackendErrorClass::script_exhausted,
                       "scripted backend: request carries no [stage:...] tag");
  }
  Entry entry;
  {
    std::lock_guard lock(mu_);
    auto it = queues_.find(stage);
    if (it == queues_.end() || it->second.empty()) {
      throw BackendError(
          BackendErrorClass::script_exhausted,
          "scripted backend: no queued response for stage '" + stage + "'");
    }
    entry = std::move(it->second.front());
    it->second.pop_front();
  }
  if (entry.error) {
    throw BackendError(*entry.error,
                       std::string("scripted error: ") + to_string(*entry.error));
  }
  CompletionResponse response;
  response.text = std::move(entry.text);
  return response;
}

}  // namespace pave
