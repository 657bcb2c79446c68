#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "json.hpp"
#include "persim/backend.hpp"
#include "persim/errors.hpp"
#include "persim/jsonl.hpp"

namespace persim {

struct CassetteEntry {
  std::string fingerprint;
  CompletionRequest request;
  CompletionResult response;
  bool operator==(const CassetteEntry&) const = default;
};

// Fingerprint-keyed store of completion exchanges. The file format is
// line-delimited JSON ({fingerprint, request, response} per line) and
// round-trips losslessly.
class Cassette {
 public:
  void put(CassetteEntry entry) {
    auto it = by_fingerprint_.find(entry.fingerprint);
    if (it != by_fingerprint_.end()) {
      if (!(entries_[it->second].response == entry.response))
        throw Error("conflicting responses for fingerprint " + entry.fingerprint);
      return;
    }
    by_fingerprint_.emplace(entry.fingerprint, entries_.size());
    entries_.push_back(std::move(entry));
  }

  const CompletionResult* find(const std::string& fingerprint) const {
    auto it = by_fingerprint_.find(fingerprint);
    return it == by_fingerprint_.end() ? nullptr : &entries_[it->second].response;
  }

  std::size_t size() const { return entries_.size(); }
  const std::vector<CassetteEntry>& entries() const { return entries_; }

  static Cassette load(std::istream& in) {
    Cassette cassette;
    for_each_jsonl(in, [&](std::size_t lineno, const nlohmann::json& j) {
      CassetteEntry entry;
      try {
        entry.fingerprint = j.at("fingerprint").get<std::string>();
        entry.request = j.at("request").get<CompletionRequest>();
        entry.response = j.at("response").get<CompletionResult>();
      } catch (const nlohmann::json::exception& ex) {
        throw ParseError(std::string("invalid cassette entry: ") + ex.what(),
                         lineno);
      }
      if (cassette.by_fingerprint_.count(entry.fingerprint))
        throw ParseError("duplicate fingerprint " + entry.fingerprint, lineno);
      cassette.put(std::move(entry));
    });
    return cassette;
  }

  static Cassette load_file(const std::string& path) {
    auto in = open_input(path);
    return load(in);
  }

  void save(std::ostream& out) const {
    for (const auto& entry : entries_) out << entry_line(entry);
  }

  void save_file(const std::string& path) const {
    auto out = open_output(path);
    save(out);
  }

  static std::string entry_line(const CassetteEntry& entry) {
    nlohmann::json j = {{"fingerprint", entry.fingerprint},
                        {"request", entry.request},
                        {"response", entry.response}};
    return j.dump() + "\n";
  }

 private:
  std::vector<CassetteEntry> entries_;
  std::unordered_map<std::string, std::size_t> by_fingerprint_;
};

// Serves recorded responses by fingerprint. Matching ignores call order, so
// reordered or concurrent trials replay correctly. A miss fails loudly.
class ReplayBackend final : public ChatBackend {
 public:
  explicit ReplayBackend(Cassette cassette) : cassette_(std::move(cassette)) {}

  static std::unique_ptr<ReplayBackend> from_file(const std::string& path) {
    return std::make_unique<ReplayBackend>(Cassette::load_file(path));
  }

  CompletionResult complete(const CompletionRequest& request) override {
    validate_request(request);
    std::string fp = fingerprint(request);
    if (const CompletionResult* hit = cassette_.find(fp)) return *hit;
    const std::string& last = request.messages.back().content;
    throw ReplayMissError("no cassette entry for fingerprint " + fp +
                          " (model \"" + request.model_name +
                          "\", last message: \"" + last.substr(0, 120) +
                          (last.size() > 120 ? "..." : "") + "\")");
  }

  BackendKind kind() const override { return BackendKind::Replay; }

  const Cassette& cassette() const { return cassette_; }

 private:
  Cassette cassette_;
};

// Memoizing recorder: first sight of a fingerprint goes to the inner backend
// and is appended to the cassette file (flushed per entry, so interrupted
// runs keep what they recorded); repeats are served from the cassette. An
// existing cassette file is loaded on construction, which makes re-recording
// resumable and keeps a recorded run self-consistent even when the inner
// backend is nondeterministic.
class RecordingBackend final : public ChatBackend {
 public:
  RecordingBackend(std::shared_ptr<ChatBackend> inner, std::string path)
      : inner_(std::move(inner)), path_(std::move(path)) {
    if (std::filesystem::exists(path_)) cassette_ = Cassette::load_file(path_);
    out_.open(path_, std::ios::binary | std::ios::app);
    if (!out_) throw Error("cannot write " + path_);
  }

  CompletionResult complete(const CompletionRequest& request) override {
    validate_request(request);
    std::string fp = fingerprint(request);
    {
      std::lock_guard<std::mutex> lock(mutex_);
      if (const CompletionResult* hit = cassette_.find(fp)) return *hit;
    }
    CompletionResult response = inner_->complete(request);
    std::lock_guard<std::mutex> lock(mutex_);
    if (const CompletionResult* hit = cassette_.find(fp)) return *hit;
    CassetteEntry entry{fp, request, response};
    out_ << Cassette::entry_line(entry);
    out_.flush();
    if (!out_) throw Error("write failed: " + path_);
    cassette_.put(std::move(entry));
    return response;
  }

  BackendKind kind() const override { return inner_->kind(); }

  std::size_t recorded() const { return cassette_.size(); }

 private:
  std::shared_ptr<ChatBackend> inner_;
  std::string path_;
  Cassette cassette_;
  std::ofstream out_;
  std::mutex mutex_;
};

}  // namespace persim
