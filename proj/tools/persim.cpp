// persim — command-line driver for the personalization evaluation harness.
//
// Subcommands: corpus ingest, personas sample, run, eval, report, record,
// replay. Exit codes: 0 success, 1 partial failures, 2 usage or validation
// error. Config precedence: command-line flags > environment variables
// (PERSIM_API_KEY, PERSIM_API_BASE, PERSIM_MODEL) > --config file > defaults.

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "persim/persim.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Options {
  std::string config_path;
  std::string corpus_path;
  std::string profiles_path;
  std::string personas_path;
  std::string out_dir;
  std::uint64_t seed = 0;
  std::size_t per_gender = 60;
  std::string strata = "gender,age_range";
  int n_pairs = 4;
  int max_turns = 8;
  std::string scenarios = "SessionA,SessionB,CrossTaskB";
  std::string backend = "live";
  std::string cassette;
  std::string record_cassette;
  int parallelism = 1;
  std::string model_name;
  std::string api_base;
  std::string api_key;
  double temperature = 0.7;
  double judge_temperature = 0.0;
  int max_output_tokens = 1024;
  int retry_max_attempts = 4;
  int retry_base_delay_ms = 500;
  int retry_max_delay_ms = 8000;
  double k1 = 1.2;
  double bm25_b = 0.75;
  persim::IndexConfig index_config;  // field weights only settable via config
  int k_per_query = 10;
  int pool_cap = 20;
  int timeout_ms = 60000;
  std::string timestamp;
  int requests_per_minute = 0;
  int max_in_flight = 4;
  std::string normalization = "raw";
  bool force = false;
};

// CLI11 option handles, used to decide whether a flag was given explicitly
// (explicit flags beat environment variables and config file values). The
// same config key may be bound on several subcommands; only the parsed one
// carries a count.
struct OptionRefs {
  std::map<std::string, std::vector<CLI::Option*>> by_key;
  void add(const std::string& key, CLI::Option* option) {
    by_key[key].push_back(option);
  }
  bool given(const std::string& key) const {
    auto it = by_key.find(key);
    if (it == by_key.end()) return false;
    for (const CLI::Option* option : it->second)
      if (option->count() > 0) return true;
    return false;
  }
};

void apply_config_file(Options& opt, const OptionRefs& refs) {
  if (opt.config_path.empty()) return;
  json cfg;
  try {
    cfg = json::parse(persim::read_text_file(opt.config_path));
  } catch (const json::exception& ex) {
    throw persim::Error("invalid config file " + opt.config_path + ": " +
                        ex.what());
  }
  if (!cfg.is_object()) throw persim::Error("config file must be a JSON object");

  auto set_string = [&](const char* key, std::string& target) {
    if (cfg.contains(key) && !refs.given(key)) target = cfg.at(key).get<std::string>();
  };
  auto set_int = [&](const char* key, auto& target) {
    if (cfg.contains(key) && !refs.given(key))
      target = cfg.at(key).get<std::decay_t<decltype(target)>>();
  };

  static const std::set<std::string> known = {
      "corpus_path",   "profiles_path",  "personas_path",
      "out_dir",       "seed",           "per_gender",
      "strata",        "n_pairs",        "max_turns",
      "scenarios",     "backend",        "parallelism",
      "model_name",    "api_base",       "api_key",
      "temperature",   "judge_temperature", "max_output_tokens",
      "retry",         "index",          "k_per_query",
      "pool_cap",      "timeout_ms",     "timestamp",
      "requests_per_minute", "max_in_flight", "normalization"};
  for (const auto& [key, value] : cfg.items())
    if (!known.count(key))
      throw persim::Error("unknown config key \"" + key + "\"");

  set_string("corpus_path", opt.corpus_path);
  set_string("profiles_path", opt.profiles_path);
  set_string("personas_path", opt.personas_path);
  set_string("out_dir", opt.out_dir);
  set_int("seed", opt.seed);
  set_int("per_gender", opt.per_gender);
  if (cfg.contains("strata") && !refs.given("strata"))
    opt.strata = persim::join(cfg.at("strata").get<std::vector<std::string>>(), ",");
  set_int("n_pairs", opt.n_pairs);
  set_int("max_turns", opt.max_turns);
  if (cfg.contains("scenarios") && !refs.given("scenarios"))
    opt.scenarios =
        persim::join(cfg.at("scenarios").get<std::vector<std::string>>(), ",");
  set_string("backend", opt.backend);
  set_int("parallelism", opt.parallelism);
  set_string("model_name", opt.model_name);
  set_string("api_base", opt.api_base);
  set_string("api_key", opt.api_key);
  set_int("temperature", opt.temperature);
  set_int("judge_temperature", opt.judge_temperature);
  set_int("max_output_tokens", opt.max_output_tokens);
  if (cfg.contains("retry")) {
    const auto& r = cfg.at("retry");
    for (const auto& [key, value] : r.items())
      if (key != "max_attempts" && key != "base_delay_ms" && key != "max_delay_ms")
        throw persim::Error("unknown config key \"retry." + key + "\"");
    if (r.contains("max_attempts")) opt.retry_max_attempts = r.at("max_attempts");
    if (r.contains("base_delay_ms")) opt.retry_base_delay_ms = r.at("base_delay_ms");
    if (r.contains("max_delay_ms")) opt.retry_max_delay_ms = r.at("max_delay_ms");
  }
  if (cfg.contains("index")) {
    const auto& ix = cfg.at("index");
    for (const auto& [key, value] : ix.items())
      if (key != "k1" && key != "b" && key != "field_weights")
        throw persim::Error("unknown config key \"index." + key + "\"");
    if (ix.contains("k1") && !refs.given("k1")) opt.k1 = ix.at("k1");
    if (ix.contains("b") && !refs.given("b")) opt.bm25_b = ix.at("b");
    if (ix.contains("field_weights")) {
      static const std::map<std::string, int> field_slots = {
          {"title", 0}, {"brand", 1}, {"category", 2},
          {"features", 3}, {"description", 4}};
      for (const auto& [key, value] : ix.at("field_weights").items()) {
        auto it = field_slots.find(key);
        if (it == field_slots.end())
          throw persim::Error("unknown config key \"index.field_weights." + key +
                              "\"");
        opt.index_config.field_weights[it->second] = value.get<double>();
      }
    }
  }
  set_int("k_per_query", opt.k_per_query);
  set_int("pool_cap", opt.pool_cap);
  set_int("timeout_ms", opt.timeout_ms);
  set_string("timestamp", opt.timestamp);
  set_int("requests_per_minute", opt.requests_per_minute);
  set_int("max_in_flight", opt.max_in_flight);
  set_string("normalization", opt.normalization);
}

void apply_env(Options& opt, const OptionRefs& refs) {
  if (const char* v = std::getenv("PERSIM_API_KEY"); v && *v) opt.api_key = v;
  if (const char* v = std::getenv("PERSIM_API_BASE"); v && *v && !refs.given("api_base"))
    opt.api_base = v;
  if (const char* v = std::getenv("PERSIM_MODEL"); v && *v && !refs.given("model_name"))
    opt.model_name = v;
}

void resolve(Options& opt, const OptionRefs& refs) {
  apply_config_file(opt, refs);
  apply_env(opt, refs);
  if (opt.model_name.empty()) opt.model_name = "gpt-4o-mini";
  if (opt.api_base.empty()) opt.api_base = "https://api.openai.com/v1";
  opt.index_config.k1 = opt.k1;
  opt.index_config.b = opt.bm25_b;
  opt.index_config.validate();
}

std::vector<persim::Scenario> parse_scenarios(const std::string& csv) {
  std::set<persim::Scenario> set;
  std::string current;
  auto flush = [&] {
    std::string name = persim::trim(current);
    current.clear();
    if (!name.empty()) set.insert(persim::parse_scenario(name));
  };
  for (char c : csv) {
    if (c == ',') flush();
    else current.push_back(c);
  }
  flush();
  if (set.empty()) throw persim::Error("no scenarios requested");
  std::vector<persim::Scenario> out;
  for (persim::Scenario s : persim::all_scenarios())
    if (set.count(s)) out.push_back(s);
  return out;
}

std::vector<std::string> parse_strata(const std::string& csv) {
  std::vector<std::string> out;
  std::string current;
  for (char c : csv) {
    if (c == ',') {
      if (!persim::trim(current).empty()) out.push_back(persim::trim(current));
      current.clear();
    } else {
      current.push_back(c);
    }
  }
  if (!persim::trim(current).empty()) out.push_back(persim::trim(current));
  return out;
}

// Advisory single-process lock per out_dir.
class OutDirLock {
 public:
  explicit OutDirLock(const std::string& out_dir)
      : path_((fs::path(out_dir) / ".persim.lock").string()) {
    int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd < 0)
      throw persim::Error("out_dir is locked by another process: " + path_ +
                          " exists (remove it if stale)");
    std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
    ::close(fd);
  }
  ~OutDirLock() { ::unlink(path_.c_str()); }
  OutDirLock(const OutDirLock&) = delete;
  OutDirLock& operator=(const OutDirLock&) = delete;

 private:
  std::string path_;
};

std::string now_iso8601_utc() {
  std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct BackendBundle {
  std::shared_ptr<persim::ChatBackend> backend;
  std::string kind_label;
};

BackendBundle make_backend(const Options& opt, const std::string& cassette_path) {
  BackendBundle bundle;
  std::shared_ptr<persim::ChatBackend> inner;
  if (opt.backend == "live") {
    persim::LiveConfig cfg;
    cfg.api_base = opt.api_base;
    cfg.api_key = opt.api_key;
    cfg.model_name = opt.model_name;
    cfg.timeout = std::chrono::milliseconds(opt.timeout_ms);
    cfg.max_in_flight = opt.max_in_flight;
    cfg.requests_per_minute = opt.requests_per_minute;
    persim::RetryPolicy policy{opt.retry_max_attempts,
                               std::chrono::milliseconds(opt.retry_base_delay_ms),
                               std::chrono::milliseconds(opt.retry_max_delay_ms)};
    inner = persim::with_retry(std::make_shared<persim::LiveBackend>(cfg), policy);
    bundle.kind_label = "live";
  } else if (opt.backend.rfind("scripted:", 0) == 0) {
    inner = persim::ScriptedBackend::from_file(opt.backend.substr(9));
    bundle.kind_label = "scripted";
  } else if (opt.backend.rfind("replay:", 0) == 0) {
    inner = persim::ReplayBackend::from_file(opt.backend.substr(7));
    bundle.kind_label = "replay";
  } else {
    throw persim::Error(
        "backend must be \"live\", \"scripted:<path>\" or \"replay:<path>\", got \"" +
        opt.backend + "\"");
  }
  if (!cassette_path.empty())
    inner = std::make_shared<persim::RecordingBackend>(inner, cassette_path);
  bundle.backend = std::move(inner);
  return bundle;
}

persim::PipelineConfig pipeline_config(const Options& opt) {
  persim::PipelineConfig cfg;
  cfg.interview.n_pairs = opt.n_pairs;
  cfg.interview.max_turns = opt.max_turns;
  cfg.interview.simulation_temperature = opt.temperature;
  cfg.interview.model_name = opt.model_name;
  cfg.interview.seed_base = opt.seed;
  cfg.interview.max_output_tokens = opt.max_output_tokens;
  cfg.k_per_query = static_cast<std::size_t>(opt.k_per_query);
  cfg.pool_cap = static_cast<std::size_t>(opt.pool_cap);
  cfg.validate();
  return cfg;
}

std::string result_path(const std::string& out_dir, const std::string& persona_id,
                        persim::Scenario scenario) {
  return (fs::path(out_dir) /
          (persona_id + "." + std::string(persim::to_string(scenario)) + ".json"))
      .string();
}

void require_path(const std::string& value, const char* flag) {
  if (value.empty())
    throw persim::Error(std::string(flag) + " is required (flag or config)");
}

int cmd_corpus_ingest(const Options& opt) {
  require_path(opt.corpus_path, "--corpus");
  auto items = persim::ingest_file(opt.corpus_path);
  std::map<std::string, std::size_t> per_domain;
  for (const auto& item : items) ++per_domain[item.domain];
  std::cout << items.size() << " items\n";
  for (const auto& [domain, count] : per_domain)
    std::cout << "  " << domain << ": " << count << "\n";
  if (items.empty()) std::cout << "  (corpus is empty)\n";
  return 0;
}

int cmd_personas_sample(const Options& opt) {
  require_path(opt.profiles_path, "--profiles");
  require_path(opt.out_dir, "--out-dir");
  auto profiles = persim::load_profiles_file(opt.profiles_path);
  auto complete = persim::filter_complete(profiles);
  std::vector<persim::GenderAllocation> allocations;
  auto sampled = persim::stratified_sample(complete, opt.per_gender, opt.seed,
                                           parse_strata(opt.strata), &allocations);
  fs::create_directories(opt.out_dir);
  std::string path = (fs::path(opt.out_dir) / "personas.jsonl").string();
  auto out = persim::open_output(path);
  persim::save_profiles(out, sampled);
  std::cout << "sampled " << sampled.size() << " personas ("
            << complete.size() << " complete of " << profiles.size()
            << " profiles) -> " << path << "\n";
  for (const auto& alloc : allocations) {
    std::cout << "  " << persim::to_string(alloc.gender) << " (population "
              << alloc.population << ")\n";
    for (const auto& stratum : alloc.strata)
      std::cout << "    " << (stratum.label.empty() ? "(all)" : stratum.label)
                << ": " << stratum.quota << " of " << stratum.population << "\n";
  }
  return 0;
}

struct RunFailure {
  std::string persona_id;
  std::string scenario;
  std::string error;
};

int cmd_run(const Options& opt, const BackendBundle& bundle) {
  require_path(opt.corpus_path, "--corpus");
  require_path(opt.personas_path, "--personas");
  require_path(opt.out_dir, "--out-dir");
  auto items = persim::ingest_file(opt.corpus_path);
  persim::CorpusIndex index(std::move(items), opt.index_config);
  auto profiles = persim::load_profiles_file(opt.personas_path);
  auto scenarios = parse_scenarios(opt.scenarios);
  fs::create_directories(opt.out_dir);
  OutDirLock lock(opt.out_dir);

  persim::PipelineConfig cfg = pipeline_config(opt);
  persim::ChatBackend& backend = *bundle.backend;

  std::atomic<int> written{0}, skipped{0};
  std::vector<std::vector<RunFailure>> failures(profiles.size());

  auto process_persona = [&](std::size_t pi) {
    const auto& profile = profiles[pi];
    persim::Persona persona;
    try {
      persona = persim::make_persona(profile);
    } catch (const persim::Error& e) {
      for (persim::Scenario s : scenarios)
        failures[pi].push_back({profile.user_id,
                                std::string(persim::to_string(s)),
                                std::string("persona: ") + e.what()});
      return;
    }

    bool needs_session_a =
        std::find(scenarios.begin(), scenarios.end(), persim::Scenario::SessionA) !=
        scenarios.end();
    bool needs_dependents = scenarios.size() > 1 || !needs_session_a;
    std::optional<persim::SessionResult> session_a;

    auto write_result = [&](persim::Scenario s, const persim::SessionResult& r) {
      persim::write_text_file(result_path(opt.out_dir, profile.user_id, s),
                              persim::session_result_to_json(r).dump(2) + "\n");
      ++written;
    };
    auto load_result = [&](persim::Scenario s) {
      return persim::session_result_from_json(json::parse(
          persim::read_text_file(result_path(opt.out_dir, profile.user_id, s))));
    };

    for (persim::Scenario scenario : scenarios) {
      std::string path = result_path(opt.out_dir, profile.user_id, scenario);
      bool exists = fs::exists(path);
      try {
        if (scenario == persim::Scenario::SessionA) {
          if (exists && !opt.force) {
            ++skipped;
            if (needs_dependents) session_a = load_result(scenario);
          } else {
            session_a = persim::run_session_a(persona, index, backend, backend, cfg);
            write_result(scenario, *session_a);
          }
          continue;
        }
        if (exists && !opt.force) {
          ++skipped;
          continue;
        }
        if (!session_a) {
          // SessionA was not requested this invocation: fall back to a
          // previous run's result file.
          std::string a_path =
              result_path(opt.out_dir, profile.user_id, persim::Scenario::SessionA);
          if (!fs::exists(a_path))
            throw persim::Error("SessionA result missing (run SessionA first)");
          session_a = load_result(persim::Scenario::SessionA);
        }
        persim::SessionResult result =
            scenario == persim::Scenario::SessionB
                ? persim::run_session_b(persona, *session_a, index, backend,
                                        backend, cfg)
                : persim::run_cross_task(persona, *session_a, index, backend,
                                         backend, cfg);
        write_result(scenario, result);
      } catch (const std::exception& e) {
        failures[pi].push_back({profile.user_id,
                                std::string(persim::to_string(scenario)),
                                e.what()});
      }
    }
  };

  if (opt.parallelism <= 1 || profiles.size() <= 1) {
    for (std::size_t i = 0; i < profiles.size(); ++i) process_persona(i);
  } else {
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
      for (std::size_t i = next.fetch_add(1); i < profiles.size();
           i = next.fetch_add(1))
        process_persona(i);
    };
    std::vector<std::thread> threads;
    int n = std::min<int>(opt.parallelism, static_cast<int>(profiles.size()));
    for (int i = 0; i < n; ++i) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
  }

  std::size_t failed = 0;
  for (const auto& per_persona : failures) failed += per_persona.size();
  if (failed > 0) {
    auto out = persim::open_output(
        (fs::path(opt.out_dir) / "run_failures.jsonl").string());
    for (const auto& per_persona : failures)
      for (const auto& f : per_persona) {
        json j = {{"persona_id", f.persona_id},
                  {"scenario", f.scenario},
                  {"error", f.error}};
        out << j.dump() << "\n";
        std::cerr << "persim: " << f.persona_id << "/" << f.scenario << ": "
                  << f.error << "\n";
      }
  }
  std::cout << "wrote " << written << " result files, skipped " << skipped
            << ", failed " << failed << "\n";
  return failed > 0 ? 1 : 0;
}

int cmd_eval(const Options& opt, const BackendBundle& bundle) {
  require_path(opt.out_dir, "--out-dir");
  std::string personas_path =
      opt.personas_path.empty()
          ? (fs::path(opt.out_dir) / "personas.jsonl").string()
          : opt.personas_path;
  auto profiles = persim::load_profiles_file(personas_path);
  auto scenarios = parse_scenarios(opt.scenarios);
  fs::create_directories(opt.out_dir);
  OutDirLock lock(opt.out_dir);

  std::vector<persim::Persona> personas;
  persim::ScenarioResults results;
  for (const auto& profile : profiles) {
    personas.push_back(persim::make_persona(profile));
    for (persim::Scenario scenario : scenarios) {
      std::string path = result_path(opt.out_dir, profile.user_id, scenario);
      if (!fs::exists(path))
        throw persim::Error("missing result file " + path +
                            " (run the pipeline first)");
      auto result = persim::session_result_from_json(
          json::parse(persim::read_text_file(path)));
      results[profile.user_id][scenario] = {result.recommendations,
                                            fs::path(path).filename().string()};
    }
  }

  persim::JudgeConfig judge_cfg;
  judge_cfg.temperature = opt.judge_temperature;
  judge_cfg.model_name = opt.model_name;
  judge_cfg.seed_base = opt.seed;
  std::string timestamp = opt.timestamp;
  if (timestamp.empty())
    timestamp = bundle.kind_label == "live" ? now_iso8601_utc()
                                            : "1970-01-01T00:00:00Z";

  auto trials = persim::run_trials(personas, results, *bundle.backend,
                                   opt.parallelism, judge_cfg, timestamp);

  auto out =
      persim::open_output((fs::path(opt.out_dir) / "trials.jsonl").string());
  std::size_t failed = 0;
  for (const auto& trial : trials) {
    out << persim::trial_to_json(trial).dump() << "\n";
    if (trial.failed) ++failed;
  }
  json meta = {{"seed", opt.seed},
               {"backend_kind", bundle.kind_label},
               {"model_name", opt.model_name},
               {"timestamp", timestamp}};
  persim::write_text_file((fs::path(opt.out_dir) / "run_meta.json").string(),
                          meta.dump(2) + "\n");
  std::cout << "judged " << trials.size() << " trials (" << failed
            << " failed) -> trials.jsonl\n";
  return failed > 0 ? 1 : 0;
}

int cmd_report(const Options& opt) {
  require_path(opt.out_dir, "--out-dir");
  std::string trials_path = (fs::path(opt.out_dir) / "trials.jsonl").string();
  if (!fs::exists(trials_path))
    throw persim::Error("missing " + trials_path + " (run eval first)");
  std::vector<persim::TrialRecord> trials;
  {
    auto in = persim::open_input(trials_path);
    persim::for_each_jsonl(in, [&](std::size_t, const json& j) {
      trials.push_back(persim::trial_from_json(j));
    });
  }
  if (trials.empty()) throw persim::Error("trials.jsonl is empty");
  OutDirLock lock(opt.out_dir);

  persim::RunMetadata meta;
  std::string meta_path = (fs::path(opt.out_dir) / "run_meta.json").string();
  if (fs::exists(meta_path)) {
    json mj = json::parse(persim::read_text_file(meta_path));
    meta.seed = mj.value("seed", 0ull);
    meta.backend_kind = mj.value("backend_kind", "");
    meta.model_name = mj.value("model_name", "");
    meta.timestamp = mj.value("timestamp", "");
  }
  auto report = persim::aggregate(
      trials, persim::parse_normalization(opt.normalization), meta);
  persim::emit_report(report, opt.out_dir);
  for (const auto& [scenario, by_metric] : report.cells)
    for (const auto& [metric, agg] : by_metric) {
      char line[160];
      std::snprintf(line, sizeof line, "%s %s: mean %.2f (stddev %.2f, n=%zu)",
                    std::string(persim::to_string(scenario)).c_str(),
                    std::string(persim::to_string(metric)).c_str(), agg.mean,
                    agg.stddev, agg.count);
      std::cout << line << "\n";
    }
  std::cout << "wrote report.json, report.csv, plotdata.csv -> " << opt.out_dir
            << "\n";
  return 0;
}

// record/replay drive the full run -> eval -> report pipeline against one
// shared backend so the cassette covers every completion call. Both force a
// fresh compute: resumed (skipped) scenarios would leave cassette gaps.
int cmd_record_or_replay(Options opt, bool replay) {
  if (opt.cassette.empty()) throw persim::Error("--cassette is required");
  opt.force = true;
  BackendBundle bundle;
  if (replay) {
    opt.backend = "replay:" + opt.cassette;
    bundle = make_backend(opt, "");
  } else {
    bundle = make_backend(opt, opt.cassette);
  }
  int rc_run = cmd_run(opt, bundle);
  int rc_eval = cmd_eval(opt, bundle);
  int rc_report = cmd_report(opt);
  return std::max({rc_run, rc_eval, rc_report});
}

void add_backend_options(CLI::App* cmd, Options& opt, OptionRefs& refs) {
  refs.add("backend", cmd->add_option("--backend", opt.backend,
                                      "live | scripted:<path> | replay:<path>"));
  refs.add("model_name", cmd->add_option("--model", opt.model_name, "Model name"));
  refs.add("api_base", cmd->add_option("--api-base", opt.api_base,
                                       "Completion endpoint base URL"));
  refs.add("timeout_ms",
           cmd->add_option("--timeout-ms", opt.timeout_ms, "Per-request timeout"));
  refs.add("parallelism", cmd->add_option("--parallelism", opt.parallelism,
                                          "Worker thread count"));
  refs.add("requests_per_minute",
           cmd->add_option("--requests-per-minute", opt.requests_per_minute,
                           "Live rate limit (0=off)"));
  refs.add("max_in_flight", cmd->add_option("--max-in-flight", opt.max_in_flight,
                                            "Live in-flight request cap"));
}

void add_pipeline_options(CLI::App* cmd, Options& opt, OptionRefs& refs) {
  refs.add("seed", cmd->add_option("--seed", opt.seed, "Run seed"));
  refs.add("scenarios",
           cmd->add_option("--scenarios", opt.scenarios,
                           "Comma list of SessionA,SessionB,CrossTaskB"));
  refs.add("n_pairs",
           cmd->add_option("--n-pairs", opt.n_pairs, "QA pairs per interview"));
  refs.add("max_turns",
           cmd->add_option("--max-turns", opt.max_turns, "Counted-turn cap"));
  refs.add("temperature", cmd->add_option("--temperature", opt.temperature,
                                          "Simulation temperature"));
  refs.add("judge_temperature",
           cmd->add_option("--judge-temperature", opt.judge_temperature,
                           "Judge temperature"));
  refs.add("max_output_tokens",
           cmd->add_option("--max-output-tokens", opt.max_output_tokens,
                           "Completion output budget"));
  refs.add("k_per_query", cmd->add_option("--k-per-query", opt.k_per_query,
                                          "Search depth per retrieval key"));
  refs.add("pool_cap", cmd->add_option("--pool-cap", opt.pool_cap,
                                       "Merged candidate pool cap"));
  refs.add("k1", cmd->add_option("--k1", opt.k1, "BM25 k1"));
  refs.add("b", cmd->add_option("--b", opt.bm25_b, "BM25 b"));
  refs.add("timestamp", cmd->add_option("--timestamp", opt.timestamp,
                                        "Injected judged_at timestamp"));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"persim: dynamic evaluation harness for personalized shopping agents"};
  app.require_subcommand(1);
  Options opt;
  OptionRefs refs;

  auto add_config = [&](CLI::App* cmd) {
    cmd->add_option("--config", opt.config_path, "JSON config file");
  };

  // corpus ingest
  auto* corpus = app.add_subcommand("corpus", "Corpus utilities");
  corpus->require_subcommand(1);
  auto* ingest_cmd = corpus->add_subcommand("ingest", "Validate a corpus file");
  add_config(ingest_cmd);
  refs.add("corpus_path", ingest_cmd->add_option("path,--corpus", opt.corpus_path,
                                                 "Corpus JSONL file"));

  // personas sample
  auto* personas = app.add_subcommand("personas", "Persona utilities");
  personas->require_subcommand(1);
  auto* sample_cmd =
      personas->add_subcommand("sample", "Filter and stratified-sample profiles");
  add_config(sample_cmd);
  refs.add("profiles_path", sample_cmd->add_option("--profiles", opt.profiles_path,
                                                   "Profiles JSONL file"));
  refs.add("out_dir",
           sample_cmd->add_option("--out-dir", opt.out_dir, "Output directory"));
  refs.add("per_gender", sample_cmd->add_option("--per-gender", opt.per_gender,
                                                "Personas per gender"));
  refs.add("seed", sample_cmd->add_option("--seed", opt.seed, "Sample seed"));
  refs.add("strata", sample_cmd->add_option("--strata", opt.strata,
                                            "Comma list of strata keys"));

  // run
  auto* run_cmd = app.add_subcommand("run", "Run scenarios per persona");
  add_config(run_cmd);
  refs.add("corpus_path",
           run_cmd->add_option("--corpus", opt.corpus_path, "Corpus JSONL file"));
  refs.add("personas_path", run_cmd->add_option("--personas", opt.personas_path,
                                                "Personas JSONL file"));
  refs.add("out_dir",
           run_cmd->add_option("--out-dir", opt.out_dir, "Output directory"));
  run_cmd->add_flag("--force", opt.force, "Recompute existing result files");
  run_cmd->add_option("--record", opt.record_cassette,
                      "Record completions to this cassette");
  add_backend_options(run_cmd, opt, refs);
  add_pipeline_options(run_cmd, opt, refs);

  // eval
  auto* eval_cmd = app.add_subcommand("eval", "Judge result files into trials.jsonl");
  add_config(eval_cmd);
  refs.add("personas_path", eval_cmd->add_option("--personas", opt.personas_path,
                                                 "Personas JSONL file"));
  refs.add("out_dir",
           eval_cmd->add_option("--out-dir", opt.out_dir, "Output directory"));
  eval_cmd->add_option("--record", opt.record_cassette,
                       "Record judge completions to this cassette");
  add_backend_options(eval_cmd, opt, refs);
  add_pipeline_options(eval_cmd, opt, refs);

  // report
  auto* report_cmd = app.add_subcommand("report", "Aggregate trials into reports");
  add_config(report_cmd);
  refs.add("out_dir",
           report_cmd->add_option("--out-dir", opt.out_dir, "Output directory"));
  refs.add("normalization",
           report_cmd->add_option("--normalization", opt.normalization,
                                  "raw | session_zscore"));

  // record / replay
  auto* record_cmd =
      app.add_subcommand("record", "Run + eval + report, recording a cassette");
  auto* replay_cmd =
      app.add_subcommand("replay", "Run + eval + report from a cassette");
  for (CLI::App* cmd : {record_cmd, replay_cmd}) {
    add_config(cmd);
    cmd->add_option("--cassette", opt.cassette, "Cassette path")->required();
    refs.add("corpus_path",
             cmd->add_option("--corpus", opt.corpus_path, "Corpus JSONL file"));
    refs.add("personas_path", cmd->add_option("--personas", opt.personas_path,
                                              "Personas JSONL file"));
    refs.add("out_dir",
             cmd->add_option("--out-dir", opt.out_dir, "Output directory"));
    refs.add("normalization",
             cmd->add_option("--normalization", opt.normalization,
                             "raw | session_zscore"));
    add_backend_options(cmd, opt, refs);
    add_pipeline_options(cmd, opt, refs);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    resolve(opt, refs);
    if (ingest_cmd->parsed()) return cmd_corpus_ingest(opt);
    if (sample_cmd->parsed()) return cmd_personas_sample(opt);
    if (run_cmd->parsed())
      return cmd_run(opt, make_backend(opt, opt.record_cassette));
    if (eval_cmd->parsed())
      return cmd_eval(opt, make_backend(opt, opt.record_cassette));
    if (report_cmd->parsed()) return cmd_report(opt);
    if (record_cmd->parsed()) return cmd_record_or_replay(opt, false);
    if (replay_cmd->parsed()) return cmd_record_or_replay(opt, true);
  } catch (const std::exception& e) {
    std::cerr << "persim: " << e.what() << "\n";
    return 2;
  }
  return 2;
}
