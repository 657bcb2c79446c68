#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "persim/errors.hpp"
#include "persim/profile.hpp"
#include "persim/rng.hpp"

namespace persim {

struct StratumAllocation {
  std::string label;           // joined non-gender strata key values
  std::size_t population = 0;  // candidates in this stratum
  std::size_t quota = 0;       // records drawn from it
};

struct GenderAllocation {
  Gender gender = Gender::Other;
  std::size_t population = 0;
  std::vector<StratumAllocation> strata;
};

// Value of a strata key on a record. Structured fields resolve by name;
// anything else falls through to behavioral_traits (missing trait -> "").
inline std::string strata_field_value(const UserProfileRecord& rec,
                                      std::string_view key) {
  if (key == "gender") return std::string(to_string(rec.gender));
  if (key == "age_range") return rec.age_range;
  if (key == "occupation") return rec.occupation;
  if (key == "price_sensitivity") return rec.price_sensitivity;
  auto it = rec.behavioral_traits.find(std::string(key));
  return it == rec.behavioral_traits.end() ? std::string() : it->second;
}

namespace detail {

// Largest-remainder apportionment of `total` over `populations` (exact
// integer arithmetic). Remainder ties break by position, which callers
// arrange to be stratum label ascending.
inline std::vector<std::size_t> largest_remainder_quotas(
    const std::vector<std::size_t>& populations, std::size_t total) {
  std::size_t pop_sum = std::accumulate(populations.begin(), populations.end(),
                                        std::size_t{0});
  std::vector<std::size_t> quotas(populations.size(), 0);
  if (pop_sum == 0 || total == 0) return quotas;
  std::vector<std::size_t> remainders(populations.size(), 0);
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < populations.size(); ++i) {
    std::uint64_t scaled = static_cast<std::uint64_t>(total) * populations[i];
    quotas[i] = static_cast<std::size_t>(scaled / pop_sum);
    remainders[i] = static_cast<std::size_t>(scaled % pop_sum);
    assigned += quotas[i];
  }
  std::vector<std::size_t> order(populations.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return remainders[a] > remainders[b];
  });
  for (std::size_t i = 0; assigned < total; ++i) {
    ++quotas[order[i]];
    ++assigned;
  }
  return quotas;
}

// Partial Fisher-Yates: the first `count` positions of a shuffled copy of
// `indices`, returned in ascending order so output order is input order.
inline std::vector<std::size_t> sample_indices(std::vector<std::size_t> indices,
                                               std::size_t count,
                                               SplitMix64& rng) {
  for (std::size_t i = 0; i < count && i + 1 < indices.size(); ++i) {
    std::size_t j = i + static_cast<std::size_t>(rng.bounded(indices.size() - i));
    std::swap(indices[i], indices[j]);
  }
  indices.resize(count);
  std::sort(indices.begin(), indices.end());
  return indices;
}

}  // namespace detail

// Draws exactly `per_gender` records for each of the female and male genders,
// allocating within each gender proportionally to the population of each
// stratum (largest-remainder rounding, remainder ties broken by stratum label
// ascending). Identical inputs produce identical output order: female block
// first, strata by label ascending, records in input order within a stratum.
// Records with gender Other are never drawn. Throws when a gender cannot
// cover its quota, naming the gender and shortfall.
inline std::vector<UserProfileRecord> stratified_sample(
    const std::vector<UserProfileRecord>& records, std::size_t per_gender,
    std::uint64_t seed, const std::vector<std::string>& strata_keys,
    std::vector<GenderAllocation>* allocations_out = nullptr) {
  if (strata_keys.empty()) throw Error("strata_keys must be non-empty");
  if (allocations_out) allocations_out->clear();

  std::vector<UserProfileRecord> out;
  for (Gender gender : {Gender::Female, Gender::Male}) {
    // Group candidate record indices by stratum label (std::map gives
    // label-ascending iteration).
    std::map<std::string, std::vector<std::size_t>> strata;
    std::size_t population = 0;
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (records[i].gender != gender) continue;
      std::string label;
      bool first = true;
      for (const auto& key : strata_keys) {
        if (key == "gender") continue;  // the outer quota dimension
        if (!first) label += "|";
        label += strata_field_value(records[i], key);
        first = false;
      }
      strata[label].push_back(i);
      ++population;
    }
    if (population < per_gender)
      throw Error("insufficient population for gender \"" +
                  std::string(to_string(gender)) + "\": need " +
                  std::to_string(per_gender) + ", have " +
                  std::to_string(population) + " (shortfall " +
                  std::to_string(per_gender - population) + ")");

    std::vector<std::string> labels;
    std::vector<std::size_t> populations;
    for (const auto& [label, members] : strata) {
      labels.push_back(label);
      populations.push_back(members.size());
    }
    auto quotas = detail::largest_remainder_quotas(populations, per_gender);

    GenderAllocation alloc;
    alloc.gender = gender;
    alloc.population = population;
    for (std::size_t s = 0; s < labels.size(); ++s) {
      const auto& members = strata[labels[s]];
      SplitMix64 rng(derive_seed(
          seed, {"stratified_sample", to_string(gender), labels[s]}));
      for (std::size_t idx : detail::sample_indices(members, quotas[s], rng))
        out.push_back(records[idx]);
      alloc.strata.push_back({labels[s], populations[s], quotas[s]});
    }
    if (allocations_out) allocations_out->push_back(std::move(alloc));
  }
  return out;
}

}  // namespace persim
