#pragma once

#include <algorithm>
#include <array>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <regex>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "persim/backend.hpp"
#include "persim/errors.hpp"
#include "persim/jsonl.hpp"
#include "persim/persona.hpp"
#include "persim/prompts.hpp"
#include "persim/recommend.hpp"
#include "persim/strings.hpp"

namespace persim {

enum class Metric { Relevance, Diversity, Novelty };

inline const std::array<Metric, 3>& all_metrics() {
  static const std::array<Metric, 3> metrics = {
      Metric::Relevance, Metric::Diversity, Metric::Novelty};
  return metrics;
}

inline std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::Relevance: return "relevance";
    case Metric::Diversity: return "diversity";
    case Metric::Novelty: return "novelty";
  }
  return "relevance";
}

/// Integer Likert scores in [1,5] for one judged recommendation list.
struct MetricScores {
  int relevance = 0;
  int diversity = 0;
  int novelty = 0;
  std::map<std::string, std::string> justifications;

  int get(Metric m) const {
    switch (m) {
      case Metric::Relevance: return relevance;
      case Metric::Diversity: return diversity;
      case Metric::Novelty: return novelty;
    }
    return 0;
  }

  bool operator==(const MetricScores&) const = default;
};

namespace detail {

inline void set_score(MetricScores& s, const std::string& metric, int value) {
  if (metric == "relevance") s.relevance = value;
  else if (metric == "diversity") s.diversity = value;
  else s.novelty = value;
}

inline int checked_score(const std::string& metric, long value) {
  if (value < 1 || value > 5)
    throw ParseError(metric + " out of range [1,5]: " + std::to_string(value));
  return static_cast<int>(value);
}

inline std::string strip_code_fences(const std::string& raw) {
  std::string out;
  std::size_t pos = 0;
  while (pos <= raw.size()) {
    std::size_t eol = raw.find('\n', pos);
    std::string line =
        raw.substr(pos, eol == std::string::npos ? std::string::npos : eol - pos);
    if (trim(line).rfind("```", 0) != 0) {
      out += line;
      out += "\n";
    }
    if (eol == std::string::npos) break;
    pos = eol + 1;
  }
  return trim(out);
}

}  // namespace detail

// Parses judge output in either accepted format:
//   labeled lines  — "relevance: <1-5>" etc., optional trailing
//                    " - justification"; or
//   flat JSON      — {"relevance": n, "diversity": n, "novelty": n} with an
//                    optional "justifications" object.
// Scores must be integers in [1,5]; fractional values are rejected, not
// rounded. Throws ParseError describing the first violation.
inline MetricScores parse_judge_scores(const std::string& raw) {
  std::string text = detail::strip_code_fences(raw);
  if (text.empty()) throw ParseError("empty judge output");
  MetricScores scores;

  if (text.front() == '{') {
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& ex) {
      throw ParseError(std::string("invalid JSON judge output: ") + ex.what());
    }
    if (!j.is_object()) throw ParseError("judge JSON must be an object");
    for (Metric m : all_metrics()) {
      std::string key(to_string(m));
      if (!j.contains(key)) throw ParseError("missing metric: " + key);
      const auto& v = j.at(key);
      // nlohmann keeps 4 and 4.0 distinct; only true integers pass.
      if (!v.is_number_integer())
        throw ParseError(key + " must be an integer Likert score");
      detail::set_score(scores, key,
                        detail::checked_score(key, v.get<long>()));
    }
    if (j.contains("justifications") && j.at("justifications").is_object())
      for (const auto& [key, value] : j.at("justifications").items())
        if (value.is_string()) scores.justifications[key] = value.get<std::string>();
    return scores;
  }

  static const std::regex line_re(
      R"(^\s*[-*]?\s*(?:\*\*)?(relevance|diversity|novelty)(?:\*\*)?\s*[:=]\s*(\S+)\s*(?:(?:-|\xE2\x80\x93|\xE2\x80\x94|\()\s*(.*?)\)?\s*)?$)",
      std::regex::icase);
  static const std::regex int_re(R"(^[+-]?\d+$)");
  std::array<bool, 3> seen = {false, false, false};
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t eol = text.find('\n', pos);
    std::string line =
        text.substr(pos, eol == std::string::npos ? std::string::npos : eol - pos);
    std::smatch m;
    if (std::regex_match(line, m, line_re)) {
      std::string metric = to_lower_ascii(m[1].str());
      std::string value = m[2].str();
      int idx = metric == "relevance" ? 0 : metric == "diversity" ? 1 : 2;
      if (!seen[idx]) {  // first occurrence wins
        if (!std::regex_match(value, int_re))
          throw ParseError(metric + " is not an integer Likert score: \"" +
                           value + "\"");
        detail::set_score(scores, metric,
                          detail::checked_score(metric, std::stol(value)));
        if (m[3].matched && !m[3].str().empty())
          scores.justifications[metric] = trim(m[3].str());
        seen[idx] = true;
      }
    }
    if (eol == std::string::npos) break;
    pos = eol + 1;
  }
  for (Metric m : all_metrics())
    if (!seen[static_cast<int>(m)])
      throw ParseError("missing metric: " + std::string(to_string(m)));
  return scores;
}

// Digest of a recommendation list as shown to the judge. The scenario header
// lets scripted judges key their scores on it.
inline std::string render_recommendation_digest(const RecommendationList& list) {
  std::string out = "Scenario: " + std::string(to_string(list.scenario));
  out += "\nQuery: " + list.query.text;
  for (const auto& ri : list.items) {
    const ProductItem& item = ri.item;
    out += "\n" + std::to_string(ri.rank) + ". [" + item.item_id + "] " +
           item.title;
    out += " (";
    out += item.brand.empty() ? "unbranded" : item.brand;
    out += item.price ? ", $" + format_price(*item.price) : ", price n/a";
    out += ") - " + ri.justification;
  }
  return out;
}

struct JudgeConfig {
  double temperature = 0.0;  // deterministic judging
  std::string model_name;
  std::optional<std::uint64_t> seed_base;
  int max_output_tokens = 512;
};

inline std::string render_judge_prompt(const Persona& persona,
                                       const RecommendationList& list) {
  std::string prompt(prompts::kJudge);
  prompt = replace_all(std::move(prompt), "{user_profile}",
                       render_profile_digest(persona.profile));
  prompt = replace_all(std::move(prompt), "{recommendations}",
                       render_recommendation_digest(list));
  return prompt;
}

// Judges one recommendation list on relevance/diversity/novelty. A malformed
// or out-of-range reply earns one corrective re-prompt; a second failure
// raises with the raw text attached.
inline MetricScores judge_list(const Persona& persona,
                               const RecommendationList& list,
                               ChatBackend& judge_backend,
                               const JudgeConfig& cfg = {}) {
  if (list.items.empty())
    throw Error("cannot judge an empty recommendation list");
  CompletionRequest request;
  request.messages = {{Role::User, render_judge_prompt(persona, list)}};
  request.temperature = cfg.temperature;
  request.max_output_tokens = cfg.max_output_tokens;
  request.model_name = cfg.model_name;
  if (cfg.seed_base)
    request.seed = static_cast<std::int64_t>(derive_seed(
        *cfg.seed_base, {list.query.text, to_string(list.scenario), "judge"}));

  auto result = judge_backend.complete(request);
  try {
    return parse_judge_scores(result.text);
  } catch (const ParseError& first) {
    auto messages = request.messages;
    messages.push_back({Role::Assistant, result.text});
    messages.push_back(
        {Role::User,
         "Your reply was not in the required format (" +
             std::string(first.what()) +
             "). Reply with exactly three lines: \"relevance: <1-5>\", "
             "\"diversity: <1-5>\", \"novelty: <1-5>\"."});
    CompletionRequest retry = request;
    retry.messages = std::move(messages);
    if (retry.seed) retry.seed = *retry.seed + 1;
    result = judge_backend.complete(retry);
    try {
      return parse_judge_scores(result.text);
    } catch (const ParseError& second) {
      throw Error("judge output invalid after re-prompt: " +
                  std::string(second.what()) + "; raw: \"" +
                  result.text.substr(0, 200) + "\"");
    }
  }
}

/// One judged (persona, scenario) cell. Failures are first-class records so
/// aggregate denominators stay auditable.
struct TrialRecord {
  std::string persona_id;
  Scenario scenario = Scenario::SessionA;
  bool failed = false;
  std::string error;                   // set when failed
  std::optional<MetricScores> scores;  // set when not failed
  std::string recommendation_ref;      // file or label the scores refer to
  std::string judged_at;               // injected run timestamp
};

inline nlohmann::json trial_to_json(const TrialRecord& t) {
  nlohmann::json j = {{"persona_id", t.persona_id},
                      {"scenario", std::string(to_string(t.scenario))},
                      {"failed", t.failed},
                      {"recommendation_ref", t.recommendation_ref},
                      {"judged_at", t.judged_at}};
  if (t.failed) {
    j["error"] = t.error;
  } else {
    j["scores"] = {{"relevance", t.scores->relevance},
                   {"diversity", t.scores->diversity},
                   {"novelty", t.scores->novelty}};
    if (!t.scores->justifications.empty())
      j["justifications"] = t.scores->justifications;
  }
  return j;
}

inline TrialRecord trial_from_json(const nlohmann::json& j) {
  TrialRecord t;
  t.persona_id = j.at("persona_id").get<std::string>();
  t.scenario = parse_scenario(j.at("scenario").get<std::string>());
  t.failed = j.at("failed").get<bool>();
  t.recommendation_ref = j.value("recommendation_ref", std::string());
  t.judged_at = j.value("judged_at", std::string());
  if (t.failed) {
    t.error = j.value("error", std::string());
  } else {
    MetricScores s;
    const auto& sj = j.at("scores");
    s.relevance = detail::checked_score("relevance", sj.at("relevance").get<long>());
    s.diversity = detail::checked_score("diversity", sj.at("diversity").get<long>());
    s.novelty = detail::checked_score("novelty", sj.at("novelty").get<long>());
    if (j.contains("justifications"))
      s.justifications =
          j.at("justifications").get<std::map<std::string, std::string>>();
    t.scores = std::move(s);
  }
  return t;
}

struct JudgeInput {
  RecommendationList list;
  std::string ref;  // provenance reference stored on the trial
};

// persona_id -> scenario -> judged input.
using ScenarioResults = std::map<std::string, std::map<Scenario, JudgeInput>>;

// Judges every (persona, scenario) cell, in a deterministic order independent
// of scheduling: personas in the given order, scenarios in enum order.
// Produces exactly |personas| x |scenarios| records; judge failures and empty
// recommendation lists become failed records, never silent drops.
inline std::vector<TrialRecord> run_trials(const std::vector<Persona>& personas,
                                           const ScenarioResults& results,
                                           ChatBackend& judge_backend,
                                           int parallelism,
                                           const JudgeConfig& cfg = {},
                                           const std::string& judged_at = {}) {
  if (parallelism < 1) throw Error("parallelism must be >= 1");
  std::vector<Scenario> scenarios;
  for (const auto& [id, by_scenario] : results)
    for (const auto& [scenario, input] : by_scenario)
      if (std::find(scenarios.begin(), scenarios.end(), scenario) ==
          scenarios.end())
        scenarios.push_back(scenario);
  std::sort(scenarios.begin(), scenarios.end());
  for (const auto& persona : personas) {
    auto it = results.find(persona.profile.user_id);
    for (Scenario s : scenarios)
      if (it == results.end() || !it->second.count(s))
        throw Error("persona \"" + persona.profile.user_id +
                    "\" is missing scenario " + std::string(to_string(s)));
  }

  struct Task {
    const Persona* persona;
    Scenario scenario;
    const JudgeInput* input;
  };
  std::vector<Task> tasks;
  for (const auto& persona : personas) {
    const auto& by_scenario = results.at(persona.profile.user_id);
    for (Scenario s : scenarios)
      tasks.push_back({&persona, s, &by_scenario.at(s)});
  }

  std::vector<TrialRecord> records(tasks.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < tasks.size();
         i = next.fetch_add(1)) {
      const Task& task = tasks[i];
      TrialRecord record;
      record.persona_id = task.persona->profile.user_id;
      record.scenario = task.scenario;
      record.recommendation_ref = task.input->ref;
      record.judged_at = judged_at;
      try {
        record.scores = judge_list(*task.persona, task.input->list,
                                   judge_backend, cfg);
      } catch (const std::exception& e) {
        record.failed = true;
        record.error = e.what();
      }
      records[i] = std::move(record);
    }
  };
  if (parallelism == 1 || tasks.size() <= 1) {
    worker();
  } else {
    std::vector<std::thread> threads;
    int n = std::min<int>(parallelism, static_cast<int>(tasks.size()));
    for (int i = 0; i < n; ++i) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }
  return records;
}

enum class Normalization { Raw, SessionZscore };

inline std::string_view to_string(Normalization n) {
  return n == Normalization::Raw ? "raw" : "session_zscore";
}

inline Normalization parse_normalization(std::string_view s) {
  if (s == "raw") return Normalization::Raw;
  if (s == "session_zscore") return Normalization::SessionZscore;
  throw Error("unknown normalization \"" + std::string(s) + "\"");
}

struct MetricAggregate {
  double mean = 0.0;
  double stddev = 0.0;  // sample (n-1); 0 when n < 2
  std::size_t count = 0;
};

struct RunMetadata {
  std::uint64_t seed = 0;
  std::string backend_kind;
  std::string model_name;
  std::string timestamp;
};

struct AggregateReport {
  Normalization normalization = Normalization::Raw;
  // Scenario -> metric -> aggregate, in enum order.
  std::map<Scenario, std::map<Metric, MetricAggregate>> cells;
  std::map<Scenario, std::size_t> failed;
  std::size_t total_trials = 0;
  RunMetadata metadata;
};

namespace detail {

inline MetricAggregate aggregate_values(const std::vector<double>& values) {
  MetricAggregate agg;
  agg.count = values.size();
  if (values.empty()) return agg;
  double sum = 0.0;
  for (double v : values) sum += v;
  agg.mean = sum / static_cast<double>(values.size());
  if (values.size() > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - agg.mean) * (v - agg.mean);
    agg.stddev = std::sqrt(ss / static_cast<double>(values.size() - 1));
  }
  return agg;
}

}  // namespace detail

// Aggregates trials per (scenario, metric). Raw mode reports arithmetic means
// and sample standard deviations of the 1-5 scores. SessionZscore mode first
// standardizes every score against its scenario's pooled mean/stddev (all
// three metrics pooled), reporting in standardized units; the two modes are
// never mixed. Failed trials are excluded from the statistics but counted.
inline AggregateReport aggregate(const std::vector<TrialRecord>& trials,
                                 Normalization normalization = Normalization::Raw,
                                 RunMetadata metadata = {}) {
  AggregateReport report;
  report.normalization = normalization;
  report.metadata = std::move(metadata);
  report.total_trials = trials.size();

  std::map<Scenario, std::map<Metric, std::vector<double>>> values;
  for (const auto& trial : trials) {
    if (trial.failed) {
      ++report.failed[trial.scenario];
      continue;
    }
    report.failed.emplace(trial.scenario, 0);
    for (Metric m : all_metrics()) {
      int score = trial.scores->get(m);
      if (score < 1 || score > 5)
        throw Error("trial for \"" + trial.persona_id + "\" carries an out-of-range " +
                    std::string(to_string(m)) + " score");
      values[trial.scenario][m].push_back(static_cast<double>(score));
    }
  }
  if (values.empty()) throw Error("all trials failed; nothing to aggregate");

  if (normalization == Normalization::SessionZscore) {
    for (auto& [scenario, by_metric] : values) {
      std::vector<double> pooled;
      for (auto& [metric, vals] : by_metric)
        pooled.insert(pooled.end(), vals.begin(), vals.end());
      MetricAggregate pool_stats = detail::aggregate_values(pooled);
      for (auto& [metric, vals] : by_metric)
        for (double& v : vals)
          v = pool_stats.stddev > 0 ? (v - pool_stats.mean) / pool_stats.stddev
                                    : 0.0;
    }
  }

  for (auto& [scenario, by_metric] : values)
    for (auto& [metric, vals] : by_metric) {
      MetricAggregate agg = detail::aggregate_values(vals);
      if (normalization == Normalization::Raw &&
          (agg.mean < 1.0 || agg.mean > 5.0))
        throw Error("raw mean out of [1,5]");
      report.cells[scenario][metric] = agg;
    }
  return report;
}

namespace detail {

inline std::string format_stat(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

}  // namespace detail

inline nlohmann::json report_to_json(const AggregateReport& report) {
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& [scenario, by_metric] : report.cells)
    for (const auto& [metric, agg] : by_metric)
      cells.push_back({{"scenario", std::string(to_string(scenario))},
                       {"metric", std::string(to_string(metric))},
                       {"mean", agg.mean},
                       {"stddev", agg.stddev},
                       {"count", agg.count}});
  nlohmann::json failed = nlohmann::json::object();
  for (const auto& [scenario, count] : report.failed)
    failed[std::string(to_string(scenario))] = count;
  return {{"normalization", std::string(to_string(report.normalization))},
          {"total_trials", report.total_trials},
          {"failed", failed},
          {"metadata",
           {{"seed", report.metadata.seed},
            {"backend_kind", report.metadata.backend_kind},
            {"model_name", report.metadata.model_name},
            {"timestamp", report.metadata.timestamp}}},
          {"cells", cells}};
}

// Writes report.json, report.csv (scenario,metric,mean,stddev,count) and
// plotdata.csv (one row per scenario, metric means to two decimals, laid out
// for a grouped bar chart). Byte-deterministic: timestamps come from run
// metadata, never from the clock.
inline void emit_report(const AggregateReport& report,
                        const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  auto path = [&](const char* name) {
    return (std::filesystem::path(out_dir) / name).string();
  };

  write_text_file(path("report.json"), report_to_json(report).dump(2) + "\n");

  std::string csv = "scenario,metric,mean,stddev,count\n";
  for (const auto& [scenario, by_metric] : report.cells)
    for (const auto& [metric, agg] : by_metric)
      csv += std::string(to_string(scenario)) + "," +
             std::string(to_string(metric)) + "," + detail::format_stat(agg.mean) +
             "," + detail::format_stat(agg.stddev) + "," +
             std::to_string(agg.count) + "\n";
  write_text_file(path("report.csv"), csv);

  std::string plot = "scenario,relevance,diversity,novelty\n";
  for (const auto& [scenario, by_metric] : report.cells) {
    plot += std::string(to_string(scenario));
    for (Metric m : all_metrics()) {
      auto it = by_metric.find(m);
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.2f", it == by_metric.end() ? 0.0 : it->second.mean);
      plot += ",";
      plot += buf;
    }
    plot += "\n";
  }
  write_text_file(path("plotdata.csv"), plot);
}

}  // namespace persim
