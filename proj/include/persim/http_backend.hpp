#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <deque>
#include <mutex>
#include <string>

#include "httplib.h"
#include "json.hpp"
#include "persim/backend.hpp"
#include "persim/errors.hpp"

namespace persim {

struct LiveConfig {
  std::string api_base = "https://api.openai.com/v1";
  std::string api_key;
  std::string model_name = "gpt-4o-mini";
  std::chrono::milliseconds timeout{60000};
  int max_in_flight = 4;
  int requests_per_minute = 0;  // 0 = unlimited
};

// Reads PERSIM_API_KEY / PERSIM_API_BASE / PERSIM_MODEL.
inline LiveConfig live_config_from_env() {
  LiveConfig cfg;
  if (const char* v = std::getenv("PERSIM_API_KEY")) cfg.api_key = v;
  if (const char* v = std::getenv("PERSIM_API_BASE"); v && *v) cfg.api_base = v;
  if (const char* v = std::getenv("PERSIM_MODEL"); v && *v) cfg.model_name = v;
  return cfg;
}

// Caps concurrent requests and, optionally, request starts per rolling
// 60-second window.
class RateLimiter {
 public:
  RateLimiter(int max_in_flight, int per_minute)
      : max_in_flight_(max_in_flight), per_minute_(per_minute) {}

  void acquire() {
    std::unique_lock<std::mutex> lock(mutex_);
    auto ready = [&] {
      if (max_in_flight_ > 0 && in_flight_ >= max_in_flight_) return false;
      if (per_minute_ > 0) {
        prune();
        if (static_cast<int>(starts_.size()) >= per_minute_) return false;
      }
      return true;
    };
    while (!ready()) {
      if (per_minute_ > 0 && !starts_.empty())
        cv_.wait_until(lock, starts_.front() + std::chrono::seconds(60));
      else
        cv_.wait(lock);
    }
    ++in_flight_;
    if (per_minute_ > 0) starts_.push_back(std::chrono::steady_clock::now());
  }

  void release() {
    {
      std::lock_guard<std::mutex> lock(mutex_);
      --in_flight_;
    }
    cv_.notify_all();
  }

 private:
  void prune() {
    auto cutoff = std::chrono::steady_clock::now() - std::chrono::seconds(60);
    while (!starts_.empty() && starts_.front() < cutoff) starts_.pop_front();
  }

  std::mutex mutex_;
  std::condition_variable cv_;
  int max_in_flight_;
  int per_minute_;
  int in_flight_ = 0;
  std::deque<std::chrono::steady_clock::time_point> starts_;
};

// OpenAI-compatible chat-completions client: POST {api_base}/chat/completions
// with a bearer credential. Messages go on the wire exactly as passed in.
// Transient failures (transport errors, HTTP 408/429/5xx) raise
// TransientBackendError; wrap with RetryBackend for backoff.
class LiveBackend final : public ChatBackend {
 public:
  explicit LiveBackend(LiveConfig config)
      : cfg_(std::move(config)),
        limiter_(cfg_.max_in_flight, cfg_.requests_per_minute) {
    auto scheme_end = cfg_.api_base.find("://");
    if (scheme_end == std::string::npos)
      throw Error("api_base must include a scheme: " + cfg_.api_base);
    auto path_start = cfg_.api_base.find('/', scheme_end + 3);
    if (path_start == std::string::npos) {
      origin_ = cfg_.api_base;
    } else {
      origin_ = cfg_.api_base.substr(0, path_start);
      path_prefix_ = cfg_.api_base.substr(path_start);
      while (!path_prefix_.empty() && path_prefix_.back() == '/')
        path_prefix_.pop_back();
    }
  }

  CompletionResult complete(const CompletionRequest& request) override {
    validate_request(request);
    nlohmann::json payload;
    payload["model"] =
        request.model_name.empty() ? cfg_.model_name : request.model_name;
    payload["messages"] = request.messages;
    payload["temperature"] = request.temperature;
    payload["max_tokens"] = request.max_output_tokens;
    if (request.seed) payload["seed"] = *request.seed;

    limiter_.acquire();
    httplib::Result res = [&] {
      struct Release {
        RateLimiter& l;
        ~Release() { l.release(); }
      } release{limiter_};
      httplib::Client client(origin_);
      auto secs = std::chrono::duration_cast<std::chrono::seconds>(cfg_.timeout);
      auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(
          cfg_.timeout - secs);
      client.set_connection_timeout(secs.count(), usecs.count());
      client.set_read_timeout(secs.count(), usecs.count());
      client.set_write_timeout(secs.count(), usecs.count());
      httplib::Headers headers;
      if (!cfg_.api_key.empty())
        headers.emplace("Authorization", "Bearer " + cfg_.api_key);
      return client.Post(path_prefix_ + "/chat/completions", headers,
                         payload.dump(), "application/json");
    }();

    if (!res)
      throw TransientBackendError("http transport error: " +
                                  httplib::to_string(res.error()));
    if (res->status == 408 || res->status == 429 || res->status >= 500)
      throw TransientBackendError(
          "HTTP " + std::to_string(res->status) + ": " + snippet(res->body),
          res->status);
    if (res->status < 200 || res->status >= 300)
      throw BackendError("HTTP " + std::to_string(res->status) + ": " +
                         snippet(res->body));

    nlohmann::json body;
    try {
      body = nlohmann::json::parse(res->body);
    } catch (const nlohmann::json::exception& ex) {
      throw BackendError(std::string("malformed completion response: ") +
                         ex.what());
    }
    CompletionResult result;
    result.backend_kind = BackendKind::Live;
    try {
      result.text =
          body.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const nlohmann::json::exception&) {
      throw BackendError("completion response missing choices[0].message.content: " +
                         snippet(res->body));
    }
    if (body.contains("usage") && body.at("usage").is_object()) {
      const auto& usage = body.at("usage");
      result.prompt_tokens = usage.value("prompt_tokens", 0);
      result.output_tokens = usage.value("completion_tokens", 0);
    }
    return result;
  }

  BackendKind kind() const override { return BackendKind::Live; }

 private:
  static std::string snippet(const std::string& body) {
    return body.substr(0, 200);
  }

  LiveConfig cfg_;
  RateLimiter limiter_;
  std::string origin_;
  std::string path_prefix_;
};

}  // namespace persim
