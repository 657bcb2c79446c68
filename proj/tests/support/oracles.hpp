#pragma once

// Test-only oracles, independent of the implementation paths they check.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "persim/corpus.hpp"
#include "persim/persona.hpp"
#include "persim/profile.hpp"

namespace persim::testing {

inline std::string fixtures_dir() { return PERSIM_FIXTURES_DIR; }

// Brute-force weighted BM25 over the raw items: every document is scored by
// direct tokenization, no inverted index. Adds contributions in the same
// (query token, field) order as CorpusIndex::search so float sums agree
// bitwise; everything else (df counting, lengths) is recomputed from scratch.
inline std::vector<ScoredItem> brute_force_search(
    const std::vector<ProductItem>& items, const IndexConfig& cfg,
    std::string_view query, std::size_t k) {
  auto query_tokens = tokenize(query);
  if (query_tokens.empty() || items.empty()) return {};

  // Raw per-field token lists per document.
  std::vector<std::vector<std::vector<std::string>>> doc_tokens(items.size());
  for (std::size_t d = 0; d < items.size(); ++d)
    for (Field f : kFieldOrder)
      doc_tokens[d].push_back(tokenize(field_text(items[d], f)));

  auto tf_of = [&](std::size_t d, Field f, const std::string& term) {
    std::size_t count = 0;
    for (const auto& t : doc_tokens[d][static_cast<int>(f)])
      if (t == term) ++count;
    return count;
  };
  auto df_of = [&](Field f, const std::string& term) {
    std::size_t count = 0;
    for (std::size_t d = 0; d < items.size(); ++d)
      if (tf_of(d, f, term) > 0) ++count;
    return count;
  };
  auto avg_len = [&](Field f) {
    double total = 0;
    for (std::size_t d = 0; d < items.size(); ++d)
      total += static_cast<double>(doc_tokens[d][static_cast<int>(f)].size());
    return total / static_cast<double>(items.size());
  };

  const double n_docs = static_cast<double>(items.size());
  std::vector<ScoredItem> scored;
  for (std::size_t d = 0; d < items.size(); ++d) {
    double score = 0.0;
    bool matched = false;
    for (const auto& term : query_tokens) {
      for (Field f : kFieldOrder) {
        double tf = static_cast<double>(tf_of(d, f, term));
        if (tf == 0) continue;
        double df = static_cast<double>(df_of(f, term));
        double idf = std::log(1.0 + (n_docs - df + 0.5) / (df + 0.5));
        double len = static_cast<double>(doc_tokens[d][static_cast<int>(f)].size());
        double norm = tf + cfg.k1 * (1.0 - cfg.b + cfg.b * len / avg_len(f));
        score += cfg.field_weights[static_cast<int>(f)] * idf *
                 (tf * (cfg.k1 + 1.0)) / norm;
        matched = true;
      }
    }
    if (matched) scored.push_back({items[d], score});
  }
  std::sort(scored.begin(), scored.end(),
            [](const ScoredItem& a, const ScoredItem& b) {
              if (a.score != b.score) return a.score > b.score;
              return a.item.item_id < b.item.item_id;
            });
  if (scored.size() > k) scored.resize(k);
  return scored;
}

// Independent largest-remainder apportionment: repeatedly hands the next
// seat to the stratum with the largest remainder (earliest label on ties),
// instead of sorting as the implementation does.
inline std::map<std::string, std::size_t> largest_remainder_oracle(
    const std::map<std::string, std::size_t>& populations, std::size_t total) {
  std::map<std::string, std::size_t> quotas;
  std::size_t pop_sum = 0;
  for (const auto& [label, pop] : populations) pop_sum += pop;
  if (pop_sum == 0 || total == 0) {
    for (const auto& [label, pop] : populations) quotas[label] = 0;
    return quotas;
  }
  std::map<std::string, std::size_t> remainders;
  std::size_t assigned = 0;
  for (const auto& [label, pop] : populations) {
    std::size_t scaled = total * pop;
    quotas[label] = scaled / pop_sum;
    remainders[label] = scaled % pop_sum;
    assigned += quotas[label];
  }
  while (assigned < total) {
    std::string best;
    std::size_t best_rem = 0;
    bool found = false;
    for (const auto& [label, rem] : remainders) {
      if (!found || rem > best_rem) {
        best = label;
        best_rem = rem;
        found = true;
      }
    }
    ++quotas[best];
    remainders[best] = 0;
    ++assigned;
  }
  return quotas;
}

inline UserProfileRecord make_profile(
    std::string user_id, Gender gender, std::string age_range,
    std::string occupation, std::string price = "mid-range",
    std::vector<std::string> interests = {"home goods"},
    std::string tone = "concise and direct") {
  UserProfileRecord rec;
  rec.user_id = std::move(user_id);
  rec.gender = gender;
  rec.age_range = std::move(age_range);
  rec.occupation = std::move(occupation);
  rec.price_sensitivity = std::move(price);
  rec.shopping_interests = std::move(interests);
  rec.behavioral_traits["tone and style"] = std::move(tone);
  return rec;
}

inline Persona make_test_persona(const std::string& user_id,
                                 const std::string& opening = {}) {
  auto rec = make_profile(user_id, Gender::Female, "25-34", "graduate student",
                          "price-conscious", {"skincare", "wellness"});
  if (!opening.empty()) rec.behavioral_traits["opening_query"] = opening;
  return make_persona(std::move(rec));
}

}  // namespace persim::testing
