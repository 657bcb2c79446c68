#pragma once

#include <openssl/evp.h>

#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "persim/errors.hpp"
#include "persim/jsonl.hpp"
#include "persim/strings.hpp"

namespace persim {

enum class Role { System, User, Assistant };

inline std::string_view to_string(Role r) {
  switch (r) {
    case Role::System: return "system";
    case Role::User: return "user";
    case Role::Assistant: return "assistant";
  }
  return "user";
}

inline Role parse_role(std::string_view s) {
  if (s == "system") return Role::System;
  if (s == "user") return Role::User;
  if (s == "assistant") return Role::Assistant;
  throw Error("unknown chat role \"" + std::string(s) + "\"");
}

struct ChatMessage {
  Role role = Role::User;
  std::string content;
  bool operator==(const ChatMessage&) const = default;
};

struct CompletionRequest {
  std::vector<ChatMessage> messages;
  double temperature = 0.7;
  int max_output_tokens = 1024;
  std::optional<std::int64_t> seed;
  std::string model_name;
  bool operator==(const CompletionRequest&) const = default;
};

enum class BackendKind { Live, Scripted, Replay };

inline std::string_view to_string(BackendKind k) {
  switch (k) {
    case BackendKind::Live: return "live";
    case BackendKind::Scripted: return "scripted";
    case BackendKind::Replay: return "replay";
  }
  return "scripted";
}

inline BackendKind parse_backend_kind(std::string_view s) {
  if (s == "live") return BackendKind::Live;
  if (s == "scripted") return BackendKind::Scripted;
  if (s == "replay") return BackendKind::Replay;
  throw Error("unknown backend kind \"" + std::string(s) + "\"");
}

struct CompletionResult {
  std::string text;
  int prompt_tokens = 0;  // 0 when the backend does not report usage
  int output_tokens = 0;
  BackendKind backend_kind = BackendKind::Scripted;
  bool operator==(const CompletionResult&) const = default;
};

inline void validate_request(const CompletionRequest& r) {
  if (r.messages.empty()) throw Error("completion request has no messages");
  if (r.temperature < 0.0 || r.temperature > 2.0)
    throw Error("temperature out of range [0,2]");
  if (r.max_output_tokens < 1) throw Error("max_output_tokens must be positive");
  for (std::size_t i = 0; i < r.messages.size(); ++i) {
    const auto& m = r.messages[i];
    if (m.role == Role::System && i != 0)
      throw Error("system message only allowed in first position");
    if (m.role != Role::System && m.content.empty())
      throw Error("empty content in " + std::string(to_string(m.role)) +
                  " message");
  }
}

// JSON wire shapes, shared by cassettes and the HTTP payload builder.
inline void to_json(nlohmann::json& j, const ChatMessage& m) {
  j = {{"role", std::string(to_string(m.role))}, {"content", m.content}};
}
inline void from_json(const nlohmann::json& j, ChatMessage& m) {
  m.role = parse_role(j.at("role").get<std::string>());
  m.content = j.at("content").get<std::string>();
}
inline void to_json(nlohmann::json& j, const CompletionRequest& r) {
  j = {{"messages", r.messages},
       {"temperature", r.temperature},
       {"max_output_tokens", r.max_output_tokens},
       {"model_name", r.model_name}};
  if (r.seed)
    j["seed"] = *r.seed;
  else
    j["seed"] = nullptr;
}
inline void from_json(const nlohmann::json& j, CompletionRequest& r) {
  r.messages = j.at("messages").get<std::vector<ChatMessage>>();
  r.temperature = j.at("temperature").get<double>();
  r.max_output_tokens = j.at("max_output_tokens").get<int>();
  r.model_name = j.at("model_name").get<std::string>();
  if (j.contains("seed") && !j.at("seed").is_null())
    r.seed = j.at("seed").get<std::int64_t>();
  else
    r.seed.reset();
}
inline void to_json(nlohmann::json& j, const CompletionResult& r) {
  j = {{"text", r.text},
       {"prompt_tokens", r.prompt_tokens},
       {"output_tokens", r.output_tokens},
       {"backend_kind", std::string(to_string(r.backend_kind))}};
}
inline void from_json(const nlohmann::json& j, CompletionResult& r) {
  r.text = j.at("text").get<std::string>();
  r.prompt_tokens = j.at("prompt_tokens").get<int>();
  r.output_tokens = j.at("output_tokens").get<int>();
  r.backend_kind = parse_backend_kind(j.at("backend_kind").get<std::string>());
}

inline std::string sha256_hex(std::string_view data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error("sha256 digest failed");
  static const char hex[] = "0123456789abcdef";
  std::string out;
  out.reserve(len * 2);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 0xF]);
  }
  return out;
}

// Stable 256-bit request fingerprint over (model_name, temperature, seed,
// ordered messages). Deliberately insensitive to max_output_tokens so output
// budget tweaks do not invalidate recorded cassettes.
inline std::string fingerprint(const CompletionRequest& r) {
  nlohmann::json j;
  j["model"] = r.model_name;
  j["temperature"] = r.temperature;
  if (r.seed)
    j["seed"] = *r.seed;
  else
    j["seed"] = nullptr;
  j["messages"] = r.messages;
  return sha256_hex(j.dump());
}

/// Uniform chat-completion interface. Implementations must tolerate
/// concurrent complete() calls.
class ChatBackend {
 public:
  virtual ~ChatBackend() = default;
  virtual CompletionResult complete(const CompletionRequest& request) = 0;
  virtual BackendKind kind() const = 0;
};

/// One rule of a rule-matched script: fires when every `when` substring
/// occurs in the request (system prompt and messages concatenated).
struct ScriptRule {
  std::vector<std::string> when;
  std::string text;
  std::string behavior;  // "" for fixed text, or "rank_first_3"
};

// Deterministic backend for tests and offline runs. Two modes:
//   sequence — responses returned in order, independent of request content;
//   rules    — first matching rule wins; non-consuming, so concurrent and
//              reordered calls still get identical answers.
// The "rank_first_3" behavior answers a re-ranking prompt with the first
// three "[item_id]" candidates found in the last message, which lets one
// generic rule serve arbitrarily many personas.
class ScriptedBackend final : public ChatBackend {
 public:
  explicit ScriptedBackend(std::vector<std::string> responses)
      : sequential_(true), sequence_(std::move(responses)) {}
  explicit ScriptedBackend(std::vector<ScriptRule> rules)
      : sequential_(false), rules_(std::move(rules)) {}

  static std::unique_ptr<ScriptedBackend> from_file(const std::string& path) {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& ex) {
      throw Error("invalid script file " + path + ": " + ex.what());
    }
    std::string mode = j.value("mode", "rules");
    if (mode == "sequence") {
      auto responses = j.at("responses").get<std::vector<std::string>>();
      return std::make_unique<ScriptedBackend>(std::move(responses));
    }
    if (mode != "rules")
      throw Error("script mode must be \"sequence\" or \"rules\"");
    std::vector<ScriptRule> rules;
    for (const auto& rj : j.at("rules")) {
      ScriptRule rule;
      if (rj.contains("when")) {
        if (rj.at("when").is_string())
          rule.when.push_back(rj.at("when").get<std::string>());
        else
          rule.when = rj.at("when").get<std::vector<std::string>>();
      }
      rule.text = rj.value("text", "");
      rule.behavior = rj.value("behavior", "");
      if (rule.text.empty() && rule.behavior.empty())
        throw Error("script rule needs \"text\" or \"behavior\"");
      rules.push_back(std::move(rule));
    }
    return std::make_unique<ScriptedBackend>(std::move(rules));
  }

  CompletionResult complete(const CompletionRequest& request) override {
    validate_request(request);
    if (sequential_) {
      std::lock_guard<std::mutex> lock(mutex_);
      if (next_ >= sequence_.size())
        throw ScriptError("script exhausted after " +
                          std::to_string(sequence_.size()) + " responses");
      return make_result(sequence_[next_++]);
    }
    std::string full_text;
    for (const auto& m : request.messages) {
      full_text += to_string(m.role);
      full_text += ": ";
      full_text += m.content;
      full_text += "\n";
    }
    for (const auto& rule : rules_) {
      bool match = true;
      for (const auto& needle : rule.when)
        if (!contains(full_text, needle)) {
          match = false;
          break;
        }
      if (!match) continue;
      if (rule.behavior.empty()) return make_result(rule.text);
      if (rule.behavior == "rank_first_3")
        return make_result(rank_first(request, 3));
      throw ScriptError("unknown script behavior \"" + rule.behavior + "\"");
    }
    const std::string& last = request.messages.back().content;
    throw ScriptError("no script rule matches request: \"" +
                      last.substr(0, 120) + (last.size() > 120 ? "..." : "") +
                      "\"");
  }

  BackendKind kind() const override { return BackendKind::Scripted; }

 private:
  static CompletionResult make_result(std::string text) {
    return CompletionResult{std::move(text), 0, 0, BackendKind::Scripted};
  }

  static std::string rank_first(const CompletionRequest& request, int k) {
    // Not line-anchored: the first digest entry continues the
    // "Retrieved Items: " label line.
    static const std::regex line_re(R"(\d+\.\s*\[([^\]\s]+)\])");
    std::vector<std::string> ids;
    const std::string& body = request.messages.back().content;
    std::size_t pos = 0;
    while (pos <= body.size() && static_cast<int>(ids.size()) < k) {
      std::size_t eol = body.find('\n', pos);
      std::string line = body.substr(pos, eol == std::string::npos ? std::string::npos
                                                                   : eol - pos);
      std::smatch m;
      if (std::regex_search(line, m, line_re)) ids.push_back(m[1].str());
      if (eol == std::string::npos) break;
      pos = eol + 1;
    }
    if (ids.empty())
      throw ScriptError("rank_first_3: no numbered [item_id] candidates in request");
    std::string out;
    for (std::size_t i = 0; i < ids.size(); ++i)
      out += std::to_string(i + 1) + ". " + ids[i] + " - scripted pick " +
             std::to_string(i + 1) + "\n";
    return out;
  }

  bool sequential_;
  std::vector<std::string> sequence_;
  std::vector<ScriptRule> rules_;
  std::mutex mutex_;
  std::size_t next_ = 0;
};

}  // namespace persim
