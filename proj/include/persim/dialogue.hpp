#pragma once

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "json.hpp"
#include "persim/backend.hpp"
#include "persim/errors.hpp"
#include "persim/persona.hpp"
#include "persim/prompts.hpp"
#include "persim/rng.hpp"
#include "persim/strings.hpp"

namespace persim {

enum class Scenario { SessionA, SessionB, CrossTaskB };

inline const std::array<Scenario, 3>& all_scenarios() {
  static const std::array<Scenario, 3> scenarios = {
      Scenario::SessionA, Scenario::SessionB, Scenario::CrossTaskB};
  return scenarios;
}

inline std::string_view to_string(Scenario s) {
  switch (s) {
    case Scenario::SessionA: return "SessionA";
    case Scenario::SessionB: return "SessionB";
    case Scenario::CrossTaskB: return "CrossTaskB";
  }
  return "SessionA";
}

inline Scenario parse_scenario(std::string_view s) {
  if (s == "SessionA") return Scenario::SessionA;
  if (s == "SessionB") return Scenario::SessionB;
  if (s == "CrossTaskB") return Scenario::CrossTaskB;
  throw Error("unknown scenario \"" + std::string(s) + "\"");
}

enum class Speaker { User, Agent };

inline std::string_view to_string(Speaker s) {
  return s == Speaker::User ? "user" : "agent";
}

inline Speaker parse_speaker(std::string_view s) {
  if (s == "user") return Speaker::User;
  if (s == "agent") return Speaker::Agent;
  throw Error("unknown utterance role \"" + std::string(s) + "\"");
}

struct Utterance {
  Speaker role = Speaker::User;
  std::string text;
  int turn_index = 0;
  bool operator==(const Utterance&) const = default;
};

struct QAPair {
  Utterance question;  // role == Agent
  Utterance answer;    // role == User, turn_index == question.turn_index + 1
  bool operator==(const QAPair&) const = default;
};

/// Record of one reference interview: the user's opening query followed by
/// alternating agent questions and user answers.
struct Transcript {
  std::string session_id;
  std::string persona_id;
  Utterance opening_query;  // role == User, turn 0
  std::vector<QAPair> qa_pairs;
  Scenario task_label = Scenario::SessionA;

  std::vector<Utterance> utterances() const {
    std::vector<Utterance> flat;
    flat.reserve(1 + 2 * qa_pairs.size());
    flat.push_back(opening_query);
    for (const auto& pair : qa_pairs) {
      flat.push_back(pair.question);
      flat.push_back(pair.answer);
    }
    return flat;
  }

  bool operator==(const Transcript&) const = default;
};

inline nlohmann::json transcript_to_json(const Transcript& t) {
  nlohmann::json utterances = nlohmann::json::array();
  for (const auto& u : t.utterances())
    utterances.push_back({{"role", std::string(to_string(u.role))},
                          {"text", u.text},
                          {"turn_index", u.turn_index}});
  return {{"session_id", t.session_id},
          {"persona_id", t.persona_id},
          {"task_label", std::string(to_string(t.task_label))},
          {"utterances", utterances}};
}

inline Transcript transcript_from_json(const nlohmann::json& j) {
  Transcript t;
  t.session_id = j.at("session_id").get<std::string>();
  t.persona_id = j.at("persona_id").get<std::string>();
  t.task_label = parse_scenario(j.at("task_label").get<std::string>());
  const auto& arr = j.at("utterances");
  if (!arr.is_array() || arr.empty())
    throw Error("transcript needs at least the opening utterance");
  std::vector<Utterance> flat;
  for (const auto& uj : arr)
    flat.push_back({parse_speaker(uj.at("role").get<std::string>()),
                    uj.at("text").get<std::string>(),
                    uj.at("turn_index").get<int>()});
  if (flat.size() % 2 == 0)
    throw Error("transcript has a dangling agent question");
  for (std::size_t i = 0; i < flat.size(); ++i) {
    Speaker expected = (i % 2 == 0) ? Speaker::User : Speaker::Agent;
    if (flat[i].role != expected)
      throw Error("transcript roles do not alternate at turn " +
                  std::to_string(i));
    if (flat[i].turn_index != static_cast<int>(i))
      throw Error("transcript turn_index mismatch at turn " + std::to_string(i));
    if (flat[i].text.empty())
      throw Error("empty utterance at turn " + std::to_string(i));
  }
  t.opening_query = flat[0];
  for (std::size_t i = 1; i + 1 < flat.size(); i += 2)
    t.qa_pairs.push_back({flat[i], flat[i + 1]});
  return t;
}

struct Subtask {
  std::string name;
  std::string description;
};

inline std::vector<Subtask> default_subtasks() {
  return {
      {"Product Discovery",
       "identify and suggest relevant products based on user preferences"},
      {"Price Comparison",
       "provide competitive price analysis across multiple vendors"},
      {"Personalized Recommendations",
       "tailor suggestions based on user history, preferences, and context"}};
}

inline std::string default_dataset_description() {
  return "A multi-field product catalog spanning Electronics; Home and "
         "Kitchen; Grocery and Gourmet Food; Clothing, Shoes and Jewelry; "
         "and Health and Household, with title, brand, price, features, and "
         "description per item.";
}

struct InterviewConfig {
  int n_pairs = 4;
  // Cap on counted turns (one utterance = one turn; the opening user query
  // is turn 0 and exempt). Defaults give at most 8 counted turns.
  int max_turns = 8;
  double simulation_temperature = 0.7;
  std::string task_description = "assist users in their shopping journey";
  std::vector<Subtask> subtasks = default_subtasks();
  std::string dataset_description = default_dataset_description();
  std::string model_name;
  std::optional<std::uint64_t> seed_base;  // request seeds derived when set
  int max_output_tokens = 1024;

  void validate() const {
    if (n_pairs < 0) throw Error("n_pairs must be >= 0");
    if (max_turns < 0) throw Error("max_turns must be >= 0");
    if (simulation_temperature < 0 || simulation_temperature > 2)
      throw Error("simulation_temperature out of range [0,2]");
    if (2 * n_pairs > max_turns)
      throw Error("turn budget exceeded: " + std::to_string(n_pairs) +
                  " QA pairs need " + std::to_string(2 * n_pairs) +
                  " turns, cap is " + std::to_string(max_turns));
  }
};

inline std::string number_word(std::size_t n) {
  static const std::array<std::string_view, 10> words = {
      "zero", "one", "two",   "three", "four",
      "five", "six", "seven", "eight", "nine"};
  return n < words.size() ? std::string(words[n]) : std::to_string(n);
}

// Renders the shopping-assistant system prompt with the subtask list
// substituted. Constant text is byte-stable across calls.
inline std::string render_agent_prompt(const std::string& task_description,
                                       const std::vector<Subtask>& subtasks) {
  if (subtasks.empty()) throw Error("subtask list must be non-empty");
  std::string rendered;
  for (std::size_t i = 0; i < subtasks.size(); ++i) {
    if (i) rendered += "; ";
    if (i + 1 == subtasks.size() && subtasks.size() > 1) rendered += "and ";
    rendered += "(" + std::to_string(i + 1) + ") " + subtasks[i].name +
                " — " + subtasks[i].description;
  }
  std::string out(prompts::kShoppingAssistant);
  out = replace_all(std::move(out), "{task description}", task_description);
  out = replace_all(std::move(out), "{subtask count}",
                    number_word(subtasks.size()));
  out = replace_all(std::move(out), "{subtasks}", rendered);
  return out;
}

// "User: ...\nAgent: ..." rendering fed into the downstream prompt slots.
inline std::string render_transcript_digest(const Transcript& t) {
  std::string out;
  for (const auto& u : t.utterances()) {
    out += (u.role == Speaker::User ? "User: " : "Agent: ");
    out += u.text;
    out += "\n";
  }
  if (!out.empty()) out.pop_back();
  return out;
}

/// Interview failure carrying whatever transcript had been completed; the
/// pending agent question, if any, is dropped (a partial pair never enters
/// qa_pairs).
class InterviewError : public Error {
 public:
  InterviewError(const std::string& what, Transcript partial)
      : Error(what), partial_(std::move(partial)) {}
  const Transcript& partial_transcript() const { return partial_; }

 private:
  Transcript partial_;
};

namespace detail {

inline CompletionRequest interview_request(std::vector<ChatMessage> messages,
                                           const InterviewConfig& cfg,
                                           const std::string& persona_id,
                                           std::string_view stage_tag) {
  CompletionRequest request;
  request.messages = std::move(messages);
  request.temperature = cfg.simulation_temperature;
  request.max_output_tokens = cfg.max_output_tokens;
  request.model_name = cfg.model_name;
  if (cfg.seed_base)
    request.seed = static_cast<std::int64_t>(
        derive_seed(*cfg.seed_base, {persona_id, stage_tag}));
  return request;
}

}  // namespace detail

// Returns the opening user utterance. A preset persona.opening_query is
// returned verbatim without touching the backend; otherwise the user
// simulator is asked in character.
inline Utterance generate_opening_query(ChatBackend& user_backend,
                                        const Persona& persona,
                                        const InterviewConfig& cfg) {
  if (!persona.opening_query.empty())
    return Utterance{Speaker::User, persona.opening_query, 0};
  std::vector<ChatMessage> messages = {
      {Role::System, persona.system_prompt},
      {Role::User,
       "Work task: " + cfg.task_description +
           ". State your opening request to the shopping assistant in one or "
           "two sentences, in character, going straight to what you are "
           "looking for."}};
  auto result = user_backend.complete(detail::interview_request(
      std::move(messages), cfg, persona.profile.user_id, "opening"));
  std::string text = trim(result.text);
  if (text.empty()) throw Error("user simulator returned an empty opening query");
  return Utterance{Speaker::User, std::move(text), 0};
}

// Runs the structured reference interview: the opening user query followed by
// exactly cfg.n_pairs question/answer pairs. Each agent question sees the
// task, subtask and dataset descriptions plus the full history; each user
// answer sees the persona system prompt plus the full history. Backend
// failures raise InterviewError carrying the partial transcript.
inline Transcript conduct_interview(ChatBackend& agent_backend,
                                    ChatBackend& user_backend,
                                    const Persona& persona,
                                    const InterviewConfig& cfg,
                                    Scenario label = Scenario::SessionA,
                                    std::string session_id = {},
                                    std::optional<Utterance> opening = {}) {
  cfg.validate();
  Transcript transcript;
  transcript.persona_id = persona.profile.user_id;
  transcript.task_label = label;
  transcript.session_id = session_id.empty()
                              ? persona.profile.user_id + "." +
                                    std::string(to_string(label))
                              : std::move(session_id);
  transcript.opening_query =
      opening ? std::move(*opening)
              : generate_opening_query(user_backend, persona, cfg);

  std::string agent_system =
      render_agent_prompt(cfg.task_description, cfg.subtasks);
  if (!cfg.dataset_description.empty())
    agent_system += "\n\nDataset: " + cfg.dataset_description;

  auto history_for = [&transcript](Role self_is, const std::string& system,
                                   const Utterance* pending) {
    // Each side sees its own prior utterances as assistant turns and the
    // other side's as user turns.
    std::vector<ChatMessage> messages = {{Role::System, system}};
    auto push = [&](const Utterance& u) {
      bool own = (self_is == Role::Assistant) == (u.role == Speaker::Agent);
      messages.push_back({own ? Role::Assistant : Role::User, u.text});
    };
    for (const auto& u : transcript.utterances()) push(u);
    if (pending) push(*pending);
    return messages;
  };

  for (int i = 0; i < cfg.n_pairs; ++i) {
    Utterance question;
    try {
      auto result = agent_backend.complete(detail::interview_request(
          history_for(Role::Assistant, agent_system, nullptr), cfg,
          persona.profile.user_id,
          std::string(to_string(label)) + ".q" + std::to_string(i)));
      question = {Speaker::Agent, trim(result.text), 2 * i + 1};
    } catch (const Error& e) {
      throw InterviewError(
          "agent question " + std::to_string(i + 1) + " failed: " + e.what(),
          transcript);
    }
    if (question.text.empty())
      throw InterviewError(
          "agent returned an empty question (pair " + std::to_string(i + 1) + ")",
          transcript);

    Utterance answer;
    try {
      auto result = user_backend.complete(detail::interview_request(
          history_for(Role::User, persona.system_prompt, &question), cfg,
          persona.profile.user_id,
          std::string(to_string(label)) + ".a" + std::to_string(i)));
      answer = {Speaker::User, trim(result.text), 2 * i + 2};
    } catch (const Error& e) {
      // The pending question is dropped: partial pairs never enter qa_pairs.
      throw InterviewError(
          "user answer " + std::to_string(i + 1) + " failed: " + e.what(),
          transcript);
    }
    if (answer.text.empty())
      throw InterviewError(
          "user returned an empty answer (pair " + std::to_string(i + 1) + ")",
          transcript);
    transcript.qa_pairs.push_back({std::move(question), std::move(answer)});
  }
  return transcript;
}

}  // namespace persim
