#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "persim/errors.hpp"
#include "persim/jsonl.hpp"
#include "persim/strings.hpp"

namespace persim {

// The closed product-domain set.
inline const std::array<std::string_view, 5>& product_domains() {
  static const std::array<std::string_view, 5> domains = {
      "Electronics", "Home and Kitchen", "Grocery and Gourmet Food",
      "Clothing, Shoes and Jewelry", "Health and Household"};
  return domains;
}

inline bool is_valid_domain(std::string_view s) {
  for (auto d : product_domains())
    if (d == s) return true;
  return false;
}

struct ProductItem {
  std::string item_id;
  std::string title;
  std::string brand;  // optional
  std::string domain;
  std::optional<double> price;  // currency units
  std::vector<std::string> features;
  std::string description;
  std::optional<double> average_rating;  // in [0,5]
  bool operator==(const ProductItem&) const = default;
};

inline ProductItem item_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error("item record must be a JSON object");
  ProductItem item;
  if (!j.contains("item_id") || !j.at("item_id").is_string() ||
      j.at("item_id").get<std::string>().empty())
    throw Error("missing or empty \"item_id\"");
  item.item_id = j.at("item_id").get<std::string>();
  if (!j.contains("title") || !j.at("title").is_string() ||
      j.at("title").get<std::string>().empty())
    throw Error("missing or empty \"title\"");
  item.title = j.at("title").get<std::string>();
  if (j.contains("brand") && j.at("brand").is_string())
    item.brand = j.at("brand").get<std::string>();
  if (!j.contains("domain") || !j.at("domain").is_string())
    throw Error("missing \"domain\"");
  item.domain = j.at("domain").get<std::string>();
  if (!is_valid_domain(item.domain))
    throw Error("unknown domain \"" + item.domain + "\"");
  if (j.contains("price") && !j.at("price").is_null()) {
    if (!j.at("price").is_number()) throw Error("\"price\" must be a number");
    item.price = j.at("price").get<double>();
    if (*item.price < 0) throw Error("negative price");
  }
  if (j.contains("features")) {
    if (!j.at("features").is_array()) throw Error("\"features\" must be an array");
    for (const auto& f : j.at("features")) {
      if (!f.is_string()) throw Error("\"features\" entries must be strings");
      item.features.push_back(f.get<std::string>());
    }
  }
  if (j.contains("description") && j.at("description").is_string())
    item.description = j.at("description").get<std::string>();
  if (j.contains("average_rating") && !j.at("average_rating").is_null()) {
    if (!j.at("average_rating").is_number())
      throw Error("\"average_rating\" must be a number");
    item.average_rating = j.at("average_rating").get<double>();
    if (*item.average_rating < 0 || *item.average_rating > 5)
      throw Error("average_rating out of range [0,5]");
  }
  return item;
}

inline nlohmann::json item_to_json(const ProductItem& item) {
  nlohmann::json j;
  j["item_id"] = item.item_id;
  j["title"] = item.title;
  j["brand"] = item.brand;
  j["domain"] = item.domain;
  if (item.price)
    j["price"] = *item.price;
  else
    j["price"] = nullptr;
  j["features"] = item.features;
  j["description"] = item.description;
  if (item.average_rating)
    j["average_rating"] = *item.average_rating;
  else
    j["average_rating"] = nullptr;
  return j;
}

// Line-delimited item ingest; rejects malformed lines (with line number) and
// duplicate item ids (naming the id).
inline std::vector<ProductItem> ingest(std::istream& in) {
  std::vector<ProductItem> items;
  std::unordered_set<std::string> seen;
  for_each_jsonl(in, [&](std::size_t lineno, const nlohmann::json& j) {
    ProductItem item;
    try {
      item = item_from_json(j);
    } catch (const Error& e) {
      throw ParseError(e.what(), lineno);
    }
    if (!seen.insert(item.item_id).second)
      throw ParseError("duplicate item_id \"" + item.item_id + "\"", lineno);
    items.push_back(std::move(item));
  });
  return items;
}

inline std::vector<ProductItem> ingest_file(const std::string& path) {
  auto in = open_input(path);
  return ingest(in);
}

// Tokenizer: ASCII letters and digits are token characters (lowercased);
// bytes >= 0x80 are kept verbatim so non-ASCII words survive; everything
// else splits. No stemming, no stopwords. Byte-deterministic by design so
// index and oracle scores agree exactly across platforms.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string cur;
  for (unsigned char c : text) {
    if ((c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c >= 0x80) {
      cur.push_back(static_cast<char>(c));
    } else if (c >= 'A' && c <= 'Z') {
      cur.push_back(static_cast<char>(c - 'A' + 'a'));
    } else {
      if (!cur.empty()) {
        tokens.push_back(cur);
        cur.clear();
      }
    }
  }
  if (!cur.empty()) tokens.push_back(cur);
  return tokens;
}

// Indexed fields, in the canonical accumulation order shared with the
// brute-force oracle (floating-point sums must add in the same order).
enum class Field : int { Title = 0, Brand, Category, Features, Description };

inline constexpr std::array<Field, 5> kFieldOrder = {
    Field::Title, Field::Brand, Field::Category, Field::Features,
    Field::Description};

inline std::string_view field_name(Field f) {
  switch (f) {
    case Field::Title: return "title";
    case Field::Brand: return "brand";
    case Field::Category: return "category";
    case Field::Features: return "features";
    case Field::Description: return "description";
  }
  return "title";
}

inline std::string field_text(const ProductItem& item, Field f) {
  switch (f) {
    case Field::Title: return item.title;
    case Field::Brand: return item.brand;
    case Field::Category: return item.domain;
    case Field::Features: return join(item.features, " ");
    case Field::Description: return item.description;
  }
  return {};
}

struct IndexConfig {
  double k1 = 1.2;
  double b = 0.75;
  // Weight per field, ordered as kFieldOrder: title, brand, category,
  // features, description.
  std::array<double, 5> field_weights = {2.0, 1.5, 1.0, 1.5, 1.0};

  void validate() const {
    if (k1 <= 0) throw Error("k1 must be positive");
    if (b < 0 || b > 1) throw Error("b must be in [0,1]");
    for (double w : field_weights)
      if (w <= 0) throw Error("field weights must be positive");
  }
};

struct ScoredItem {
  ProductItem item;
  double score = 0.0;
};

// Immutable multi-field inverted index with weighted per-field BM25 scoring:
//   score(d, q) = sum over query token occurrences, then fields f of
//     w_f * idf_f(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len/avglen))
// with idf_f(t) = ln(1 + (N - df + 0.5) / (df + 0.5)), so every contribution
// is positive. Ties break by item_id ascending, making search a pure function
// of (corpus, config, query, k).
class CorpusIndex {
 public:
  explicit CorpusIndex(std::vector<ProductItem> items, IndexConfig config = {})
      : items_(std::move(items)), cfg_(config) {
    cfg_.validate();
    for (Field f : kFieldOrder) {
      FieldData& data = fields_[static_cast<int>(f)];
      data.lengths.resize(items_.size(), 0);
      std::uint64_t total = 0;
      for (std::uint32_t doc = 0; doc < items_.size(); ++doc) {
        auto tokens = tokenize(field_text(items_[doc], f));
        data.lengths[doc] = static_cast<std::uint32_t>(tokens.size());
        total += tokens.size();
        std::unordered_map<std::string, std::uint32_t> tf;
        for (auto& t : tokens) ++tf[t];
        for (auto& [term, count] : tf)
          data.postings[term].emplace_back(doc, count);
      }
      data.avg_length =
          items_.empty() ? 0.0 : static_cast<double>(total) / items_.size();
    }
  }

  std::size_t doc_count() const { return items_.size(); }
  bool empty() const { return items_.empty(); }
  const std::vector<ProductItem>& items() const { return items_; }
  const IndexConfig& config() const { return cfg_; }

  std::size_t doc_frequency(Field f, const std::string& token) const {
    const auto& postings = fields_[static_cast<int>(f)].postings;
    auto it = postings.find(token);
    return it == postings.end() ? 0 : it->second.size();
  }

  std::size_t term_frequency(Field f, const std::string& token,
                             std::size_t doc) const {
    const auto& postings = fields_[static_cast<int>(f)].postings;
    auto it = postings.find(token);
    if (it == postings.end()) return 0;
    for (auto [d, tf] : it->second)
      if (d == doc) return tf;
    return 0;
  }

  std::size_t field_length(Field f, std::size_t doc) const {
    return fields_[static_cast<int>(f)].lengths.at(doc);
  }

  double avg_field_length(Field f) const {
    return fields_[static_cast<int>(f)].avg_length;
  }

  // Top-k by summed weighted BM25, descending score, ties by item_id
  // ascending. A query that tokenizes to nothing yields an empty result.
  // Per-document accumulation order is query token (query order) then field
  // (kFieldOrder); the test oracle adds in the same order.
  std::vector<ScoredItem> search(std::string_view query_text,
                                 std::size_t k) const {
    if (k == 0) throw Error("k must be >= 1");
    std::vector<ScoredItem> out;
    auto tokens = tokenize(query_text);
    if (tokens.empty() || items_.empty()) return out;

    std::unordered_map<std::uint32_t, double> scores;
    const double n_docs = static_cast<double>(items_.size());
    for (const auto& token : tokens) {
      for (Field f : kFieldOrder) {
        const FieldData& data = fields_[static_cast<int>(f)];
        auto it = data.postings.find(token);
        if (it == data.postings.end()) continue;
        const double df = static_cast<double>(it->second.size());
        const double idf = std::log(1.0 + (n_docs - df + 0.5) / (df + 0.5));
        const double weight = cfg_.field_weights[static_cast<int>(f)];
        for (auto [doc, tf] : it->second) {
          const double len = static_cast<double>(data.lengths[doc]);
          const double norm =
              tf + cfg_.k1 * (1.0 - cfg_.b + cfg_.b * len / data.avg_length);
          scores[doc] += weight * idf * (tf * (cfg_.k1 + 1.0)) / norm;
        }
      }
    }

    out.reserve(scores.size());
    for (const auto& [doc, score] : scores)
      out.push_back({items_[doc], score});
    std::sort(out.begin(), out.end(), [](const ScoredItem& a, const ScoredItem& b) {
      if (a.score != b.score) return a.score > b.score;
      return a.item.item_id < b.item.item_id;
    });
    if (out.size() > k) out.resize(k);
    return out;
  }

 private:
  struct FieldData {
    std::unordered_map<std::string,
                       std::vector<std::pair<std::uint32_t, std::uint32_t>>>
        postings;  // term -> (doc, tf), docs ascending by construction
    std::vector<std::uint32_t> lengths;
    double avg_length = 0.0;
  };

  std::vector<ProductItem> items_;
  IndexConfig cfg_;
  std::array<FieldData, 5> fields_;
};

inline CorpusIndex build_index(std::vector<ProductItem> items,
                               IndexConfig config = {}) {
  return CorpusIndex(std::move(items), config);
}

}  // namespace persim
