#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "json.hpp"
#include "persim/backend.hpp"
#include "persim/corpus.hpp"
#include "persim/dialogue.hpp"
#include "persim/errors.hpp"
#include "persim/persona.hpp"
#include "persim/prompts.hpp"
#include "persim/strings.hpp"

namespace persim {

/// Search phrase with the under-5-words rule enforced.
struct QueryPhrase {
  std::string text;
  int word_count = 0;
  bool truncated = false;  // set iff enforcement cut words
  bool operator==(const QueryPhrase&) const = default;
};

// Normalizes a model-produced phrase (strip wrapping quotes and trailing
// punctuation, collapse whitespace) and hard-truncates to 5 words rather
// than re-prompting, flagging the truncation in provenance.
inline QueryPhrase enforce_query_phrase(std::string_view raw) {
  std::string text = trim(raw);
  while (text.size() >= 2 && (text.front() == '"' || text.front() == '\'') &&
         text.back() == text.front()) {
    text = trim(text.substr(1, text.size() - 2));
  }
  while (!text.empty() && (text.back() == '.' || text.back() == '!' ||
                           text.back() == '?' || text.back() == ',' ||
                           text.back() == ';' || text.back() == ':')) {
    text.pop_back();
  }
  auto words = split_words(text);
  QueryPhrase phrase;
  if (words.size() > 5) {
    words.resize(5);
    phrase.truncated = true;
  }
  phrase.text = join(words, " ");
  phrase.word_count = static_cast<int>(words.size());
  return phrase;
}

struct RankedItem {
  ProductItem item;
  int rank = 0;  // 1-based, contiguous
  std::string justification;
  bool operator==(const RankedItem&) const = default;
};

struct RecommendationList {
  Scenario scenario = Scenario::SessionA;
  QueryPhrase query;
  std::vector<RankedItem> items;  // at most 3
  std::vector<std::string> candidate_ids;
  bool operator==(const RecommendationList&) const = default;
};

struct SessionResult {
  Transcript transcript;
  RecommendationList recommendations;
  std::vector<std::string> relevant_labels;
  std::vector<std::string> flags;  // provenance notes, e.g. "no_prior_context"
  bool operator==(const SessionResult&) const = default;
};

inline nlohmann::json session_result_to_json(const SessionResult& r) {
  nlohmann::json items = nlohmann::json::array();
  for (const auto& ri : r.recommendations.items) {
    nlohmann::json ij = {{"item_id", ri.item.item_id},
                         {"rank", ri.rank},
                         {"justification", ri.justification},
                         {"title", ri.item.title},
                         {"brand", ri.item.brand}};
    if (ri.item.price)
      ij["price"] = *ri.item.price;
    else
      ij["price"] = nullptr;
    items.push_back(std::move(ij));
  }
  return {{"scenario", std::string(to_string(r.recommendations.scenario))},
          {"persona_id", r.transcript.persona_id},
          {"transcript", transcript_to_json(r.transcript)},
          {"query",
           {{"text", r.recommendations.query.text},
            {"word_count", r.recommendations.query.word_count},
            {"truncated", r.recommendations.query.truncated}}},
          {"candidate_ids", r.recommendations.candidate_ids},
          {"items", items},
          {"relevant_labels", r.relevant_labels},
          {"flags", r.flags}};
}

inline SessionResult session_result_from_json(const nlohmann::json& j) {
  SessionResult r;
  r.transcript = transcript_from_json(j.at("transcript"));
  r.recommendations.scenario = parse_scenario(j.at("scenario").get<std::string>());
  const auto& qj = j.at("query");
  r.recommendations.query = {qj.at("text").get<std::string>(),
                             qj.at("word_count").get<int>(),
                             qj.at("truncated").get<bool>()};
  r.recommendations.candidate_ids =
      j.at("candidate_ids").get<std::vector<std::string>>();
  std::unordered_set<std::string> candidates(
      r.recommendations.candidate_ids.begin(),
      r.recommendations.candidate_ids.end());
  for (const auto& ij : j.at("items")) {
    RankedItem ri;
    ri.item.item_id = ij.at("item_id").get<std::string>();
    ri.item.title = ij.value("title", std::string());
    ri.item.brand = ij.value("brand", std::string());
    if (ij.contains("price") && !ij.at("price").is_null())
      ri.item.price = ij.at("price").get<double>();
    ri.rank = ij.at("rank").get<int>();
    ri.justification = ij.at("justification").get<std::string>();
    if (!candidates.count(ri.item.item_id))
      throw Error("recommended item \"" + ri.item.item_id +
                  "\" is not among candidate_ids");
    r.recommendations.items.push_back(std::move(ri));
  }
  r.relevant_labels = j.at("relevant_labels").get<std::vector<std::string>>();
  r.flags = j.value("flags", std::vector<std::string>{});
  return r;
}

/// Session A carry-over injected into Session B / cross-task prompts.
struct PriorContext {
  std::string transcript_digest;  // may be empty (labels only)
  std::vector<std::string> relevant_labels;

  std::string render() const {
    std::string out;
    if (!transcript_digest.empty())
      out += "Previous session:\n" + transcript_digest;
    if (!relevant_labels.empty()) {
      if (!out.empty()) out += "\n";
      out += "Previously relevant item ids: " + join(relevant_labels, ", ");
    }
    return out;
  }
};

struct PipelineConfig {
  InterviewConfig interview;
  std::size_t k_per_query = 10;
  std::size_t pool_cap = 20;

  void validate() const {
    interview.validate();
    if (k_per_query == 0) throw Error("k_per_query must be >= 1");
    if (pool_cap == 0) throw Error("pool_cap must be >= 1");
  }
};

namespace detail {

inline CompletionRequest pipeline_request(std::vector<ChatMessage> messages,
                                          const PipelineConfig& cfg,
                                          const std::string& persona_id,
                                          std::string_view stage_tag) {
  return interview_request(std::move(messages), cfg.interview, persona_id,
                           stage_tag);
}

}  // namespace detail

// Prompts the backend with the query-formulation template and enforces the
// phrase rule on its output. `prior` appends Session A context to the
// reference-interview slot.
inline QueryPhrase formulate_query(const Persona& persona,
                                   const Transcript& transcript,
                                   ChatBackend& backend,
                                   const PipelineConfig& cfg,
                                   const PriorContext* prior = nullptr) {
  std::string interview = render_transcript_digest(transcript);
  if (prior) {
    std::string block = prior->render();
    if (!block.empty()) interview += "\n" + block;
  }
  std::string prompt(prompts::kQueryFormulation);
  prompt = replace_all(std::move(prompt), "{user_profile}",
                       render_profile_digest(persona.profile));
  prompt = replace_all(std::move(prompt), "{reference_interview}", interview);
  auto result = backend.complete(detail::pipeline_request(
      {{Role::User, prompt}}, cfg, persona.profile.user_id,
      std::string(to_string(transcript.task_label)) + ".query"));
  QueryPhrase phrase = enforce_query_phrase(result.text);
  if (phrase.text.empty())
    throw Error("query formulation produced an empty phrase");
  return phrase;
}

// Retrieval keys for a session: the formulated phrase plus each QA answer.
// Agent questions carry no user preference signal and are skipped.
inline std::vector<std::string> retrieval_keys(const Transcript& transcript,
                                               const QueryPhrase* phrase) {
  std::vector<std::string> keys;
  if (phrase && !phrase->text.empty()) keys.push_back(phrase->text);
  for (const auto& pair : transcript.qa_pairs) keys.push_back(pair.answer.text);
  return keys;
}

// One search per retrieval key, merged by max score per item, ordered by
// merged score descending then item_id, capped at pool_cap.
inline std::vector<ScoredItem> batch_retrieve(
    const CorpusIndex& index, const std::vector<std::string>& keys,
    std::size_t k_per_query, std::size_t pool_cap) {
  std::map<std::string, ScoredItem> best;  // item_id -> best-scored hit
  for (const auto& key : keys) {
    for (auto& hit : index.search(key, k_per_query)) {
      auto it = best.find(hit.item.item_id);
      if (it == best.end())
        best.emplace(hit.item.item_id, std::move(hit));
      else if (hit.score > it->second.score)
        it->second.score = hit.score;
    }
  }
  std::vector<ScoredItem> pool;
  pool.reserve(best.size());
  for (auto& [id, hit] : best) pool.push_back(std::move(hit));
  std::sort(pool.begin(), pool.end(), [](const ScoredItem& a, const ScoredItem& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.item.item_id < b.item.item_id;
  });
  if (pool.size() > pool_cap) pool.resize(pool_cap);
  return pool;
}

inline std::vector<ScoredItem> batch_retrieve(const CorpusIndex& index,
                                              const Transcript& transcript,
                                              const QueryPhrase* phrase,
                                              std::size_t k_per_query,
                                              std::size_t pool_cap) {
  return batch_retrieve(index, retrieval_keys(transcript, phrase), k_per_query,
                        pool_cap);
}

// Numbered candidate digest substituted into the re-ranking prompt:
// "1. [item_id] title (brand, $price) features..."
inline std::string render_candidate_digest(const std::vector<ScoredItem>& pool) {
  std::string out;
  for (std::size_t i = 0; i < pool.size(); ++i) {
    const ProductItem& item = pool[i].item;
    out += std::to_string(i + 1) + ". [" + item.item_id + "] " + item.title;
    out += " (";
    out += item.brand.empty() ? "unbranded" : item.brand;
    out += item.price ? ", $" + format_price(*item.price) : ", price n/a";
    out += ")";
    if (!item.features.empty()) {
      std::string feats = join(item.features, "; ");
      if (feats.size() > 160) feats = feats.substr(0, 160) + "...";
      out += " " + feats;
    }
    out += "\n";
  }
  if (!out.empty()) out.pop_back();
  return out;
}

struct ParsedRankEntry {
  std::string item_id;
  std::string justification;
};

// Parses "1. <item_id> - <justification>" lines (dash, en/em dash or colon
// separators; optional [brackets] around the id). Lines that do not parse
// are skipped; an empty result is the caller's parse-failure signal.
inline std::vector<ParsedRankEntry> parse_rank_response(const std::string& raw) {
  static const std::regex entry_re(
      R"(^\s*\d+[.)]\s*\[?([A-Za-z0-9_:\-]+)\]?\s*(?:-|\xE2\x80\x93|\xE2\x80\x94|:)\s*(.+?)\s*$)");
  std::vector<ParsedRankEntry> entries;
  std::size_t pos = 0;
  while (pos <= raw.size()) {
    std::size_t eol = raw.find('\n', pos);
    std::string line =
        raw.substr(pos, eol == std::string::npos ? std::string::npos : eol - pos);
    std::smatch m;
    if (std::regex_match(line, m, entry_re))
      entries.push_back({m[1].str(), m[2].str()});
    if (eol == std::string::npos) break;
    pos = eol + 1;
  }
  return entries;
}

// Re-ranks retrieved candidates with the backend. The response must be a
// numbered list using only candidate item ids; hallucinated ids are dropped.
// A response with no parseable line earns one corrective re-prompt before
// failing with the raw text attached.
inline std::vector<RankedItem> batch_rank(const std::vector<ScoredItem>& candidates,
                                          const Persona& persona,
                                          const std::string& reference_interview,
                                          ChatBackend& backend,
                                          const PipelineConfig& cfg,
                                          std::string_view stage_tag) {
  if (candidates.empty()) throw Error("batch_rank requires candidates");
  std::string prompt(prompts::kReRanking);
  prompt = replace_all(std::move(prompt), "{user_profile}",
                       render_profile_digest(persona.profile));
  prompt = replace_all(std::move(prompt), "{reference_interview}",
                       reference_interview);
  prompt = replace_all(std::move(prompt), "{retrieved_items}",
                       render_candidate_digest(candidates));

  std::vector<ChatMessage> messages = {{Role::User, prompt}};
  auto result = backend.complete(detail::pipeline_request(
      messages, cfg, persona.profile.user_id, std::string(stage_tag)));
  auto entries = parse_rank_response(result.text);
  if (entries.empty()) {
    messages.push_back({Role::Assistant, result.text});
    messages.push_back(
        {Role::User,
         "Your reply was not in the required format. Reply only with up to 3 "
         "lines, each exactly \"<rank>. <item_id> - <one-line justification>\", "
         "using only the listed item ids."});
    result = backend.complete(detail::pipeline_request(
        std::move(messages), cfg, persona.profile.user_id,
        std::string(stage_tag) + ".retry"));
    entries = parse_rank_response(result.text);
    if (entries.empty())
      throw Error("ranking response unparseable after re-prompt; raw: \"" +
                  result.text.substr(0, 200) + "\"");
  }

  std::unordered_map<std::string, const ProductItem*> by_id;
  for (const auto& c : candidates) by_id.emplace(c.item.item_id, &c.item);
  std::vector<RankedItem> ranked;
  for (const auto& entry : entries) {
    auto it = by_id.find(entry.item_id);
    if (it == by_id.end()) continue;  // hallucinated id: dropped
    ranked.push_back({*it->second, static_cast<int>(ranked.size()) + 1,
                      entry.justification});
  }
  if (ranked.empty())
    throw Error("ranking response named no candidate item ids; raw: \"" +
                result.text.substr(0, 200) + "\"");
  return ranked;
}

// De-duplicates by item_id keeping the first occurrence, reassigns contiguous
// 1-based ranks, truncates to the top 3. Idempotent.
inline std::vector<RankedItem> aggregate_and_finalize(
    std::vector<RankedItem> ranked) {
  std::unordered_set<std::string> seen;
  std::vector<RankedItem> out;
  for (auto& item : ranked) {
    if (!seen.insert(item.item.item_id).second) continue;
    item.rank = static_cast<int>(out.size()) + 1;
    out.push_back(std::move(item));
    if (out.size() == 3) break;
  }
  return out;
}

namespace detail {

inline std::vector<std::string> pool_ids(const std::vector<ScoredItem>& pool) {
  std::vector<std::string> ids;
  ids.reserve(pool.size());
  for (const auto& hit : pool) ids.push_back(hit.item.item_id);
  return ids;
}

inline std::vector<std::string> label_ids(const std::vector<RankedItem>& items) {
  std::vector<std::string> ids;
  ids.reserve(items.size());
  for (const auto& ri : items) ids.push_back(ri.item.item_id);
  return ids;
}

template <typename Fn>
auto stage(const char* name, Fn&& fn) {
  try {
    return fn();
  } catch (const StageError&) {
    throw;
  } catch (const Error& e) {
    throw StageError(name, e.what());
  }
}

inline std::string preset_query(const Persona& persona, const char* trait_key) {
  auto it = persona.profile.behavioral_traits.find(trait_key);
  return it == persona.profile.behavioral_traits.end() ? std::string()
                                                       : it->second;
}

// Assembles the common tail of every scenario: retrieve, rank, finalize.
inline SessionResult finish_scenario(const Persona& persona,
                                     const CorpusIndex& index,
                                     ChatBackend& agent_backend,
                                     const PipelineConfig& cfg,
                                     Transcript transcript, QueryPhrase phrase,
                                     std::vector<std::string> keys,
                                     const std::string& reference_interview,
                                     std::vector<std::string> flags) {
  Scenario scenario = transcript.task_label;
  std::vector<ScoredItem> pool = stage("retrieval", [&] {
    return batch_retrieve(index, keys, cfg.k_per_query, cfg.pool_cap);
  });

  SessionResult result;
  result.transcript = std::move(transcript);
  result.recommendations.scenario = scenario;
  result.recommendations.query = std::move(phrase);
  result.recommendations.candidate_ids = pool_ids(pool);
  result.flags = std::move(flags);
  if (pool.empty()) {
    result.flags.push_back("empty_retrieval_pool");
    return result;
  }

  auto ranked = stage("ranking", [&] {
    return batch_rank(pool, persona, reference_interview, agent_backend, cfg,
                      std::string(to_string(scenario)) + ".rank");
  });
  result.recommendations.items = aggregate_and_finalize(std::move(ranked));
  // Accepted recommendations double as the relevant labels carried into
  // later tasks; no extra user feedback is available by construction.
  result.relevant_labels = label_ids(result.recommendations.items);
  return result;
}

}  // namespace detail

// Session A: interview, formulate a query, retrieve, re-rank, finalize.
// An empty retrieval pool yields an empty recommendation list, not an error.
inline SessionResult run_session_a(const Persona& persona,
                                   const CorpusIndex& index,
                                   ChatBackend& agent_backend,
                                   ChatBackend& user_backend,
                                   const PipelineConfig& cfg) {
  cfg.validate();
  Transcript transcript = detail::stage("interview", [&] {
    return conduct_interview(agent_backend, user_backend, persona,
                             cfg.interview, Scenario::SessionA);
  });
  QueryPhrase phrase = detail::stage("query_formulation", [&] {
    return formulate_query(persona, transcript, agent_backend, cfg);
  });
  auto keys = retrieval_keys(transcript, &phrase);
  std::string reference = render_transcript_digest(transcript);
  return detail::finish_scenario(persona, index, agent_backend, cfg,
                                 std::move(transcript), std::move(phrase),
                                 std::move(keys), reference, {});
}

// Session B: a fresh interview for the follow-up need; the query-formulation
// and re-ranking prompts additionally carry Session A's transcript digest and
// relevant labels. When Session A produced no recommendations the prior block
// is omitted and the omission flagged.
inline SessionResult run_session_b(const Persona& persona,
                                   const SessionResult& session_a,
                                   const CorpusIndex& index,
                                   ChatBackend& agent_backend,
                                   ChatBackend& user_backend,
                                   const PipelineConfig& cfg) {
  cfg.validate();
  std::vector<std::string> flags;
  std::optional<PriorContext> prior;
  if (!session_a.recommendations.items.empty()) {
    prior = PriorContext{render_transcript_digest(session_a.transcript),
                         session_a.relevant_labels};
  } else {
    flags.push_back("no_prior_context");
  }

  std::optional<Utterance> opening;
  std::string preset = detail::preset_query(persona, "session_b_query");
  if (!preset.empty()) {
    opening = Utterance{Speaker::User, preset, 0};
  } else {
    // The persona-level preset belongs to Session A; ask for a follow-up.
    opening = detail::stage("opening_query", [&] {
      std::vector<ChatMessage> messages = {
          {Role::System, persona.system_prompt},
          {Role::User,
           "You are returning for a follow-up shopping need related to your "
           "earlier visit.\nEarlier visit:\n" +
               render_transcript_digest(session_a.transcript) +
               "\nState your new request in one sentence, in character."}};
      auto result = user_backend.complete(detail::pipeline_request(
          std::move(messages), cfg, persona.profile.user_id, "SessionB.opening"));
      std::string text = trim(result.text);
      if (text.empty())
        throw Error("user simulator returned an empty follow-up query");
      return Utterance{Speaker::User, std::move(text), 0};
    });
  }

  Transcript transcript = detail::stage("interview", [&] {
    return conduct_interview(agent_backend, user_backend, persona,
                             cfg.interview, Scenario::SessionB, {}, opening);
  });
  QueryPhrase phrase = detail::stage("query_formulation", [&] {
    return formulate_query(persona, transcript, agent_backend, cfg,
                           prior ? &*prior : nullptr);
  });
  std::string reference = render_transcript_digest(transcript);
  if (prior) reference += "\n" + prior->render();
  auto keys = retrieval_keys(transcript, &phrase);
  return detail::finish_scenario(persona, index, agent_backend, cfg,
                                 std::move(transcript), std::move(phrase),
                                 std::move(keys), reference, std::move(flags));
}

// Cross-task recommendation: no new elicitation. The new sub-task is a single
// user query; retrieval reuses task A's QA answers plus that query, and
// ranking conditions on task A's relevant labels and the query.
inline SessionResult run_cross_task(const Persona& persona,
                                    const SessionResult& task_a,
                                    const CorpusIndex& index,
                                    ChatBackend& agent_backend,
                                    ChatBackend& user_backend,
                                    const PipelineConfig& cfg) {
  cfg.validate();
  std::vector<std::string> flags;
  Utterance query;
  std::string preset = detail::preset_query(persona, "cross_task_query");
  if (!preset.empty()) {
    query = Utterance{Speaker::User, preset, 0};
  } else {
    query = detail::stage("opening_query", [&] {
      std::vector<ChatMessage> messages = {
          {Role::System, persona.system_prompt},
          {Role::User,
           "In the same visit, you now have a different shopping need (a new "
           "sub-task). State it as a single request in one sentence, in "
           "character."}};
      auto result = user_backend.complete(detail::pipeline_request(
          std::move(messages), cfg, persona.profile.user_id,
          "CrossTaskB.opening"));
      std::string text = trim(result.text);
      if (text.empty())
        throw Error("user simulator returned an empty cross-task query");
      return Utterance{Speaker::User, std::move(text), 0};
    });
  }

  Transcript transcript;
  transcript.session_id =
      persona.profile.user_id + "." + std::string(to_string(Scenario::CrossTaskB));
  transcript.persona_id = persona.profile.user_id;
  transcript.task_label = Scenario::CrossTaskB;
  transcript.opening_query = query;

  // The stored phrase is the new query put through the same 5-word rule;
  // retrieval uses the full query text.
  QueryPhrase phrase = enforce_query_phrase(query.text);
  std::vector<std::string> keys;
  keys.push_back(query.text);
  for (const auto& pair : task_a.transcript.qa_pairs)
    keys.push_back(pair.answer.text);

  std::string reference = "Current request: " + query.text;
  if (!task_a.relevant_labels.empty()) {
    PriorContext prior{std::string(), task_a.relevant_labels};
    reference += "\n" + prior.render();
  } else {
    flags.push_back("no_prior_labels");
  }
  return detail::finish_scenario(persona, index, agent_backend, cfg,
                                 std::move(transcript), std::move(phrase),
                                 std::move(keys), reference, std::move(flags));
}

}  // namespace persim
