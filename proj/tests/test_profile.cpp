#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "persim/persona.hpp"
#include "persim/profile.hpp"
#include "persim/rng.hpp"
#include "support/oracles.hpp"

using namespace persim;
using persim::testing::make_profile;

TEST_CASE("load_profiles: empty stream yields empty list") {
  std::istringstream in("");
  CHECK(load_profiles(in).empty());
}

TEST_CASE("load_profiles: well-formed lines in input order") {
  std::string lines =
      R"({"user_id":"u1","gender":"female","age_range":"25-34","occupation":"teacher","price_sensitivity":"mid","shopping_interests":["tea"],"brand_preferences":["Bigelow"],"traits":{"tone and style":"warm"}})"
      "\n"
      R"({"user_id":"u2","gender":"male","age_range":"56+","occupation":"retired","price_sensitivity":"value","shopping_interests":["snacks"],"brand_preferences":[],"traits":{}})"
      "\n"
      R"({"user_id":"u3","gender":"female","age_range":"18-24","occupation":"barista","price_sensitivity":"budget","shopping_interests":[],"brand_preferences":[],"traits":{}})"
      "\n";
  std::istringstream in(lines);
  auto records = load_profiles(in);
  REQUIRE(records.size() == 3);
  // Hand-parsed oracle of the same three lines.
  CHECK(records[0].user_id == "u1");
  CHECK(records[0].gender == Gender::Female);
  CHECK(records[0].age_range == "25-34");
  CHECK(records[0].occupation == "teacher");
  CHECK(records[0].shopping_interests == std::vector<std::string>{"tea"});
  CHECK(records[0].brand_preferences == std::vector<std::string>{"Bigelow"});
  CHECK(records[0].behavioral_traits.at("tone and style") == "warm");
  CHECK(records[1].user_id == "u2");
  CHECK(records[1].gender == Gender::Male);
  CHECK(records[2].user_id == "u3");
}

TEST_CASE("load_profiles: line missing user_id names line 1") {
  std::istringstream in(R"({"gender":"female","age_range":"25-34"})" "\n");
  try {
    load_profiles(in);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 1);
    CHECK(std::string(e.what()).find("user_id") != std::string::npos);
  }
}

TEST_CASE("load_profiles: duplicate user_id rejected") {
  std::string line =
      R"({"user_id":"dup","gender":"female","age_range":"25-34"})" "\n";
  std::istringstream in(line + line);
  try {
    load_profiles(in);
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(e.line() == 2);
    CHECK(std::string(e.what()).find("dup") != std::string::npos);
  }
}

TEST_CASE("load_profiles: unknown age bucket rejected") {
  std::istringstream in(R"({"user_id":"u1","age_range":"99-100"})" "\n");
  CHECK_THROWS_AS(load_profiles(in), ParseError);
}

TEST_CASE("unknown top-level keys fold into traits and round-trip") {
  nlohmann::json j = {{"user_id", "u9"},       {"gender", "male"},
                      {"age_range", "35-44"},  {"occupation", "chef"},
                      {"loyalty_tier", "gold"}, {"visits", 12}};
  auto rec = profile_from_json(j);
  CHECK(rec.behavioral_traits.at("loyalty_tier") == "gold");
  CHECK(rec.behavioral_traits.at("visits") == "12");
  auto rec2 = profile_from_json(profile_to_json(rec));
  CHECK(rec2 == rec);
}

TEST_CASE("profile serialization round-trips randomized records") {
  SplitMix64 rng(41);
  const auto& buckets = age_buckets();
  for (int i = 0; i < 50; ++i) {
    UserProfileRecord rec;
    rec.user_id = "r" + std::to_string(i);
    rec.gender = static_cast<Gender>(rng.bounded(3));
    rec.age_range = std::string(buckets[rng.bounded(buckets.size())]);
    rec.occupation =
        (rng.bounded(4) == 0) ? "" : "worker " + std::to_string(rng.next() % 100);
    rec.price_sensitivity = "tier " + std::to_string(rng.bounded(5));
    for (std::uint64_t k = 0; k < rng.bounded(4); ++k)
      rec.shopping_interests.push_back("interest" + std::to_string(k));
    for (std::uint64_t k = 0; k < rng.bounded(3); ++k)
      rec.brand_preferences.push_back("brand" + std::to_string(k));
    rec.behavioral_traits["tone and style"] = "tone" + std::to_string(rng.bounded(3));
    rec.behavioral_traits["quirk"] = std::to_string(rng.next());
    CHECK(profile_from_json(profile_to_json(rec)) == rec);
  }
}

TEST_CASE("filter_complete: synthetic population mirrors the expected counts") {
  auto records =
      load_profiles_file(persim::testing::fixtures_dir() + "/profiles.jsonl");
  REQUIRE(records.size() == 500);
  auto complete = filter_complete(records);
  CHECK(complete.size() == 444);
  std::size_t female = 0, male = 0;
  for (const auto& rec : complete) {
    if (rec.gender == Gender::Female) ++female;
    if (rec.gender == Gender::Male) ++male;
  }
  CHECK(female == 377);
  CHECK(male == 67);
}

TEST_CASE("filter_complete: all records lacking occupation yield empty list") {
  std::vector<UserProfileRecord> records = {
      make_profile("a", Gender::Female, "25-34", ""),
      make_profile("b", Gender::Male, "56+", "   ")};
  CHECK(filter_complete(records).empty());
}

TEST_CASE("filter_complete: keeps the 6 complete of 10 in original order") {
  std::vector<UserProfileRecord> records;
  // Hand-built: indices 1, 4, 6, 9 lack occupation.
  for (int i = 0; i < 10; ++i) {
    bool missing = (i == 1 || i == 4 || i == 6 || i == 9);
    records.push_back(make_profile("u" + std::to_string(i), Gender::Female,
                                   "25-34", missing ? "" : "teacher"));
  }
  auto kept = filter_complete(records);
  REQUIRE(kept.size() == 6);
  std::vector<std::string> ids;
  for (const auto& rec : kept) ids.push_back(rec.user_id);
  CHECK(ids == std::vector<std::string>{"u0", "u2", "u3", "u5", "u7", "u8"});
}

TEST_CASE("filter_complete is idempotent") {
  auto records =
      load_profiles_file(persim::testing::fixtures_dir() + "/profiles.jsonl");
  auto once = filter_complete(records);
  CHECK(filter_complete(once) == once);
}

TEST_CASE("render_user_prompt substitutes the persona fields") {
  auto rec = make_profile("pa", Gender::Female, "25-34", "graduate student",
                          "price-conscious", {"skincare", "wellness"},
                          "enthusiastic and practical");
  std::string prompt = render_user_prompt(rec);
  CHECK(prompt.find("graduate student") != std::string::npos);
  CHECK(prompt.find("25-34-year-old female") != std::string::npos);
  CHECK(prompt.find("skincare, wellness") != std::string::npos);
  CHECK(prompt.find("enthusiastic and practical") != std::string::npos);
}

TEST_CASE("render_user_prompt: missing values name the placeholder") {
  auto rec = make_profile("pa", Gender::Female, "25-34", "");
  try {
    render_user_prompt(rec);
    FAIL("expected Error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("occupation") != std::string::npos);
  }
  auto rec2 = make_profile("pb", Gender::Male, "56+", "retired");
  rec2.behavioral_traits.erase("tone and style");
  try {
    render_user_prompt(rec2);
    FAIL("expected Error");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("tone and style") != std::string::npos);
  }
}

TEST_CASE("render_user_prompt is deterministic") {
  auto rec = make_profile("pa", Gender::Female, "25-34", "graduate student");
  CHECK(render_user_prompt(rec) == render_user_prompt(rec));
}

TEST_CASE("render_user_prompt never emits brace characters") {
  SplitMix64 rng(7);
  for (int i = 0; i < 40; ++i) {
    auto rec = make_profile(
        "p" + std::to_string(i), Gender::Male, "35-44",
        "curly {brace} occupation " + std::to_string(rng.next() % 10),
        "likes {deals}", {"misc {x}"}, "dry {humor}");
    std::string prompt = render_user_prompt(rec);
    CHECK(prompt.find('{') == std::string::npos);
    CHECK(prompt.find('}') == std::string::npos);
  }
}

TEST_CASE("make_persona picks up a preset opening query from traits") {
  auto rec = make_profile("pa", Gender::Female, "25-34", "graduate student");
  rec.behavioral_traits["opening_query"] = "Looking for a kettle";
  auto persona = make_persona(rec);
  CHECK(persona.opening_query == "Looking for a kettle");
  CHECK(persona.system_prompt == render_user_prompt(rec));
}
