#include <catch2/catch_amalgamated.hpp>

#include <map>
#include <set>

#include "persim/profile.hpp"
#include "persim/rng.hpp"
#include "persim/sampling.hpp"
#include "support/oracles.hpp"

using namespace persim;
using persim::testing::make_profile;

namespace {

const std::vector<std::string> kDefaultStrata = {"gender", "age_range"};

std::vector<UserProfileRecord> fixture_population() {
  return filter_complete(
      load_profiles_file(persim::testing::fixtures_dir() + "/profiles.jsonl"));
}

std::map<std::string, std::size_t> stratum_counts(
    const std::vector<UserProfileRecord>& records, Gender gender) {
  std::map<std::string, std::size_t> counts;
  for (const auto& rec : records)
    if (rec.gender == gender) ++counts[rec.age_range];
  return counts;
}

}  // namespace

TEST_CASE("stratified_sample: the 444-record population yields 60+60") {
  auto population = fixture_population();
  auto sample = stratified_sample(population, 60, 20260809, kDefaultStrata);
  REQUIRE(sample.size() == 120);
  CHECK(stratum_counts(sample, Gender::Female) !=
        std::map<std::string, std::size_t>{});
  std::size_t female = 0, male = 0;
  for (const auto& rec : sample) {
    if (rec.gender == Gender::Female) ++female;
    if (rec.gender == Gender::Male) ++male;
  }
  CHECK(female == 60);
  CHECK(male == 60);
}

TEST_CASE("stratified_sample: per_gender=0 yields the empty list") {
  auto population = fixture_population();
  CHECK(stratified_sample(population, 0, 1, kDefaultStrata).empty());
}

TEST_CASE("uniform 40/40 population over 4 buckets gives exactly 5 per cell") {
  std::vector<UserProfileRecord> population;
  const char* buckets[4] = {"18-24", "25-34", "35-44", "45-55"};
  int id = 0;
  for (Gender g : {Gender::Female, Gender::Male})
    for (const char* bucket : buckets)
      for (int i = 0; i < 10; ++i)
        population.push_back(make_profile("u" + std::to_string(id++), g, bucket,
                                          "worker"));
  for (std::uint64_t seed : {1ull, 7ull, 99ull}) {
    auto sample = stratified_sample(population, 20, seed, kDefaultStrata);
    REQUIRE(sample.size() == 40);
    for (Gender g : {Gender::Female, Gender::Male}) {
      auto counts = stratum_counts(sample, g);
      // Proportionality oracle: 20 * 10/40 = 5 per bucket, exactly.
      REQUIRE(counts.size() == 4);
      for (const auto& [bucket, count] : counts) CHECK(count == 5);
    }
  }
}

TEST_CASE("per-stratum quotas match the largest-remainder oracle") {
  SplitMix64 rng(123);
  for (int trial = 0; trial < 25; ++trial) {
    // Random skewed population.
    std::vector<UserProfileRecord> population;
    const auto& buckets = age_buckets();
    int id = 0;
    for (Gender g : {Gender::Female, Gender::Male})
      for (auto bucket : buckets) {
        std::size_t n = 1 + rng.bounded(12);
        for (std::size_t i = 0; i < n; ++i)
          population.push_back(make_profile("u" + std::to_string(id++), g,
                                            std::string(bucket), "worker"));
      }
    std::size_t per_gender = 1 + rng.bounded(5);

    std::vector<GenderAllocation> allocations;
    auto sample = stratified_sample(population, per_gender, rng.next(),
                                    kDefaultStrata, &allocations);
    REQUIRE(allocations.size() == 2);
    for (const auto& alloc : allocations) {
      std::map<std::string, std::size_t> populations;
      for (const auto& s : alloc.strata) populations[s.label] = s.population;
      auto expected =
          persim::testing::largest_remainder_oracle(populations, per_gender);
      for (const auto& s : alloc.strata) CHECK(s.quota == expected.at(s.label));
      // Drawn records agree with the declared quotas.
      auto counts = stratum_counts(sample, alloc.gender);
      for (const auto& s : alloc.strata) {
        auto it = counts.find(s.label);
        CHECK((it == counts.end() ? 0 : it->second) == s.quota);
      }
    }
  }
}

TEST_CASE("identical seed reproduces the identical sample, in order") {
  auto population = fixture_population();
  auto a = stratified_sample(population, 60, 42, kDefaultStrata);
  auto b = stratified_sample(population, 60, 42, kDefaultStrata);
  CHECK(a == b);
}

TEST_CASE("different seeds keep stratum counts, possibly changing members") {
  auto population = fixture_population();
  std::vector<GenderAllocation> alloc1, alloc2;
  auto a = stratified_sample(population, 30, 1, kDefaultStrata, &alloc1);
  auto b = stratified_sample(population, 30, 2, kDefaultStrata, &alloc2);
  REQUIRE(alloc1.size() == alloc2.size());
  for (std::size_t g = 0; g < alloc1.size(); ++g) {
    REQUIRE(alloc1[g].strata.size() == alloc2[g].strata.size());
    for (std::size_t s = 0; s < alloc1[g].strata.size(); ++s) {
      CHECK(alloc1[g].strata[s].label == alloc2[g].strata[s].label);
      CHECK(alloc1[g].strata[s].quota == alloc2[g].strata[s].quota);
    }
  }
  CHECK(a.size() == b.size());
}

TEST_CASE("sample is a sub-multiset of the population without duplicates") {
  auto population = fixture_population();
  auto sample = stratified_sample(population, 60, 7, kDefaultStrata);
  std::set<std::string> population_ids, sample_ids;
  for (const auto& rec : population) population_ids.insert(rec.user_id);
  for (const auto& rec : sample) {
    CHECK(population_ids.count(rec.user_id) == 1);
    CHECK(sample_ids.insert(rec.user_id).second);  // no duplicates
  }
}

TEST_CASE("insufficient population names the gender and shortfall") {
  std::vector<UserProfileRecord> population = {
      make_profile("f1", Gender::Female, "25-34", "x"),
      make_profile("f2", Gender::Female, "35-44", "x"),
      make_profile("m1", Gender::Male, "56+", "x")};
  try {
    stratified_sample(population, 2, 1, kDefaultStrata);
    FAIL("expected Error");
  } catch (const Error& e) {
    std::string what = e.what();
    CHECK(what.find("male") != std::string::npos);
    CHECK(what.find("shortfall 1") != std::string::npos);
  }
}

TEST_CASE("empty strata_keys are rejected") {
  auto population = fixture_population();
  CHECK_THROWS_AS(stratified_sample(population, 1, 1, {}), Error);
}

TEST_CASE("records with gender other are never drawn") {
  std::vector<UserProfileRecord> population = {
      make_profile("f1", Gender::Female, "25-34", "x"),
      make_profile("o1", Gender::Other, "25-34", "x"),
      make_profile("m1", Gender::Male, "25-34", "x")};
  auto sample = stratified_sample(population, 1, 3, kDefaultStrata);
  REQUIRE(sample.size() == 2);
  for (const auto& rec : sample) CHECK(rec.gender != Gender::Other);
}

TEST_CASE("trait keys can act as strata") {
  std::vector<UserProfileRecord> population;
  for (int i = 0; i < 8; ++i) {
    auto rec = make_profile("u" + std::to_string(i),
                            i % 2 ? Gender::Male : Gender::Female, "25-34", "x");
    rec.behavioral_traits["review awareness"] = (i < 4) ? "high" : "low";
    population.push_back(rec);
  }
  std::vector<GenderAllocation> allocations;
  auto sample = stratified_sample(population, 2, 5,
                                  {"gender", "review awareness"}, &allocations);
  CHECK(sample.size() == 4);
  for (const auto& alloc : allocations) {
    REQUIRE(alloc.strata.size() == 2);
    CHECK(alloc.strata[0].label == "high");
    CHECK(alloc.strata[1].label == "low");
  }
}
