#pragma once

#include <atomic>
#include <chrono>
#include <functional>
#include <memory>
#include <mutex>
#include <thread>
#include <utility>

#include "persim/backend.hpp"
#include "persim/errors.hpp"
#include "persim/rng.hpp"

namespace persim {

struct RetryPolicy {
  int max_attempts = 4;
  std::chrono::milliseconds base_delay{500};
  std::chrono::milliseconds max_delay{8000};
};

// Retries transient failures (TransientBackendError) with exponential
// backoff and equal jitter; everything else surfaces immediately. The jitter
// stream only shapes delays, never responses.
class RetryBackend final : public ChatBackend {
 public:
  RetryBackend(std::shared_ptr<ChatBackend> inner, RetryPolicy policy,
               std::function<void(std::chrono::milliseconds)> sleep_fn = {})
      : inner_(std::move(inner)),
        policy_(policy),
        sleep_fn_(std::move(sleep_fn)),
        jitter_(0x5eedULL) {
    if (policy_.max_attempts < 1) throw Error("max_attempts must be >= 1");
    if (!sleep_fn_)
      sleep_fn_ = [](std::chrono::milliseconds d) { std::this_thread::sleep_for(d); };
  }

  CompletionResult complete(const CompletionRequest& request) override {
    for (int attempt = 1;; ++attempt) {
      try {
        CompletionResult result = inner_->complete(request);
        last_attempts_.store(attempt);
        return result;
      } catch (const TransientBackendError& e) {
        if (attempt >= policy_.max_attempts) {
          last_attempts_.store(attempt);
          throw RetryExhaustedError("giving up after " + std::to_string(attempt) +
                                        " attempts: " + e.what(),
                                    attempt);
        }
        sleep_fn_(backoff_delay(attempt));
      }
    }
  }

  BackendKind kind() const override { return inner_->kind(); }

  /// Attempts consumed by the most recently completed call (any thread).
  int last_attempts() const { return last_attempts_.load(); }

 private:
  std::chrono::milliseconds backoff_delay(int attempt) {
    auto base = policy_.base_delay.count();
    for (int i = 1; i < attempt && base < policy_.max_delay.count(); ++i)
      base *= 2;
    if (base > policy_.max_delay.count()) base = policy_.max_delay.count();
    std::lock_guard<std::mutex> lock(mutex_);
    auto half = base / 2;
    return std::chrono::milliseconds(
        half + static_cast<long long>(jitter_.bounded(
                   static_cast<std::uint64_t>(base - half + 1))));
  }

  std::shared_ptr<ChatBackend> inner_;
  RetryPolicy policy_;
  std::function<void(std::chrono::milliseconds)> sleep_fn_;
  std::mutex mutex_;
  SplitMix64 jitter_;
  std::atomic<int> last_attempts_{0};
};

inline std::shared_ptr<RetryBackend> with_retry(
    std::shared_ptr<ChatBackend> inner, RetryPolicy policy = {},
    std::function<void(std::chrono::milliseconds)> sleep_fn = {}) {
  return std::make_shared<RetryBackend>(std::move(inner), policy,
                                        std::move(sleep_fn));
}

}  // namespace persim
