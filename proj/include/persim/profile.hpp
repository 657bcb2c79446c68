#pragma once

#include <array>
#include <map>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "json.hpp"
#include "persim/errors.hpp"
#include "persim/jsonl.hpp"
#include "persim/strings.hpp"

namespace persim {

enum class Gender { Female, Male, Other };

inline std::string_view to_string(Gender g) {
  switch (g) {
    case Gender::Female: return "female";
    case Gender::Male: return "male";
    case Gender::Other: return "other";
  }
  return "other";
}

// "female" and "male" parse exactly (ASCII case-insensitive); every other
// value, including the empty string, folds to Other so richer upstream data
// never blocks ingest.
inline Gender parse_gender(std::string_view s) {
  std::string lower = to_lower_ascii(trim(s));
  if (lower == "female") return Gender::Female;
  if (lower == "male") return Gender::Male;
  return Gender::Other;
}

// The closed age-bucket set accepted in profile records.
inline const std::array<std::string_view, 5>& age_buckets() {
  static const std::array<std::string_view, 5> buckets = {
      "18-24", "25-34", "35-44", "45-55", "56+"};
  return buckets;
}

inline bool is_valid_age_bucket(std::string_view s) {
  for (auto b : age_buckets())
    if (b == s) return true;
  return false;
}

/// Demographic and behavioral shopper profile, one JSONL record per user.
struct UserProfileRecord {
  std::string user_id;
  Gender gender = Gender::Other;
  std::string age_range;
  std::string occupation;         // empty means missing
  std::string price_sensitivity;  // free text
  std::vector<std::string> shopping_interests;
  std::vector<std::string> brand_preferences;
  // Free-text traits (diversity preference, tone and style, ...). Unknown
  // top-level keys from the input record are folded in here, so records
  // round-trip without loss. Ordered map keeps serialization stable.
  std::map<std::string, std::string> behavioral_traits;

  bool operator==(const UserProfileRecord&) const = default;
};

namespace detail {

inline std::string json_to_trait_value(const nlohmann::json& v) {
  return v.is_string() ? v.get<std::string>() : v.dump();
}

inline std::vector<std::string> string_array(const nlohmann::json& j,
                                             const std::string& key) {
  std::vector<std::string> out;
  const auto& arr = j.at(key);
  if (!arr.is_array()) throw Error("\"" + key + "\" must be an array");
  for (std::size_t i = 0; i < arr.size(); ++i) {
    if (!arr[i].is_string())
      throw Error("\"" + key + "\"[" + std::to_string(i) + "] must be a string");
    out.push_back(arr[i].get<std::string>());
  }
  return out;
}

}  // namespace detail

inline UserProfileRecord profile_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error("profile record must be a JSON object");
  UserProfileRecord rec;
  if (!j.contains("user_id") || !j.at("user_id").is_string() ||
      j.at("user_id").get<std::string>().empty())
    throw Error("missing or empty \"user_id\"");
  rec.user_id = j.at("user_id").get<std::string>();

  if (j.contains("gender") && !j.at("gender").is_null())
    rec.gender = parse_gender(j.at("gender").get<std::string>());

  if (!j.contains("age_range") || !j.at("age_range").is_string())
    throw Error("missing \"age_range\"");
  rec.age_range = j.at("age_range").get<std::string>();
  if (!is_valid_age_bucket(rec.age_range))
    throw Error("unknown age_range \"" + rec.age_range + "\"");

  if (j.contains("occupation") && j.at("occupation").is_string())
    rec.occupation = j.at("occupation").get<std::string>();
  if (j.contains("price_sensitivity") && j.at("price_sensitivity").is_string())
    rec.price_sensitivity = j.at("price_sensitivity").get<std::string>();
  if (j.contains("shopping_interests"))
    rec.shopping_interests = detail::string_array(j, "shopping_interests");
  if (j.contains("brand_preferences"))
    rec.brand_preferences = detail::string_array(j, "brand_preferences");

  if (j.contains("traits")) {
    if (!j.at("traits").is_object()) throw Error("\"traits\" must be an object");
    for (const auto& [key, value] : j.at("traits").items())
      rec.behavioral_traits[key] = detail::json_to_trait_value(value);
  }

  // Unknown top-level keys are preserved as traits rather than rejected.
  static const std::unordered_set<std::string> known = {
      "user_id",           "gender",          "age_range",
      "occupation",        "price_sensitivity", "shopping_interests",
      "brand_preferences", "traits"};
  for (const auto& [key, value] : j.items())
    if (!known.count(key))
      rec.behavioral_traits[key] = detail::json_to_trait_value(value);

  return rec;
}

inline nlohmann::json profile_to_json(const UserProfileRecord& rec) {
  nlohmann::json j;
  j["user_id"] = rec.user_id;
  j["gender"] = std::string(to_string(rec.gender));
  j["age_range"] = rec.age_range;
  j["occupation"] = rec.occupation;
  j["price_sensitivity"] = rec.price_sensitivity;
  j["shopping_interests"] = rec.shopping_interests;
  j["brand_preferences"] = rec.brand_preferences;
  j["traits"] = rec.behavioral_traits;
  return j;
}

// Reads line-delimited profile records, preserving input order. Malformed
// lines and duplicate user ids abort with the offending line number.
inline std::vector<UserProfileRecord> load_profiles(std::istream& in) {
  std::vector<UserProfileRecord> records;
  std::unordered_set<std::string> seen;
  for_each_jsonl(in, [&](std::size_t lineno, const nlohmann::json& j) {
    UserProfileRecord rec;
    try {
      rec = profile_from_json(j);
    } catch (const Error& e) {
      throw ParseError(e.what(), lineno);
    }
    if (!seen.insert(rec.user_id).second)
      throw ParseError("duplicate user_id \"" + rec.user_id + "\"", lineno);
    records.push_back(std::move(rec));
  });
  return records;
}

inline std::vector<UserProfileRecord> load_profiles_file(const std::string& path) {
  auto in = open_input(path);
  return load_profiles(in);
}

inline void save_profiles(std::ostream& out,
                          const std::vector<UserProfileRecord>& records) {
  for (const auto& rec : records) out << profile_to_json(rec).dump() << "\n";
}

// Keeps exactly the records whose occupation is present and non-blank,
// preserving order. Idempotent.
inline std::vector<UserProfileRecord> filter_complete(
    const std::vector<UserProfileRecord>& records) {
  std::vector<UserProfileRecord> out;
  out.reserve(records.size());
  for (const auto& rec : records)
    if (!trim(rec.occupation).empty()) out.push_back(rec);
  return out;
}

}  // namespace persim
