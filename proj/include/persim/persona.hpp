#pragma once

#include <string>
#include <utility>
#include <vector>

#include "persim/errors.hpp"
#include "persim/profile.hpp"
#include "persim/prompts.hpp"
#include "persim/strings.hpp"

namespace persim {

/// A simulated shopper: profile plus the rendered system prompt that puts a
/// completion backend in character. Immutable once built.
struct Persona {
  UserProfileRecord profile;
  std::string system_prompt;
  std::string opening_query;  // empty when the simulator must generate it
};

namespace detail {

inline std::string require_placeholder_value(std::string_view name,
                                             std::string value) {
  value = trim(value);
  if (value.empty())
    throw Error("missing placeholder value: " + std::string(name));
  // Brace characters would read as unexpanded placeholders downstream.
  return strip_braces(value);
}

}  // namespace detail

// Renders the user-simulation system prompt for a profile. Every placeholder
// must have a non-blank value; the result carries no brace characters.
inline std::string render_user_prompt(const UserProfileRecord& profile) {
  std::string age = detail::require_placeholder_value("age", profile.age_range);
  std::string gender = detail::require_placeholder_value(
      "gender", std::string(to_string(profile.gender)));
  std::string occupation =
      detail::require_placeholder_value("occupation", profile.occupation);
  std::string price = detail::require_placeholder_value(
      "price sensitivity", profile.price_sensitivity);
  std::string interests = detail::require_placeholder_value(
      "shopping interests", join(profile.shopping_interests, ", "));
  auto tone_it = profile.behavioral_traits.find("tone and style");
  std::string tone = detail::require_placeholder_value(
      "tone and style",
      tone_it == profile.behavioral_traits.end() ? "" : tone_it->second);

  std::string out(prompts::kUserSimulation);
  out = replace_all(std::move(out), "{age}", age);
  out = replace_all(std::move(out), "{gender}", gender);
  out = replace_all(std::move(out), "{occupation}", occupation);
  out = replace_all(std::move(out), "{price sensitivity}", price);
  out = replace_all(std::move(out), "{shopping interests}", interests);
  out = replace_all(std::move(out), "{tone and style}", tone);
  return out;
}

// Builds a Persona from a complete profile. A preset opening query may be
// supplied via the "opening_query" trait (preset queries are returned
// verbatim by generate_opening_query, without a backend call).
inline Persona make_persona(UserProfileRecord profile) {
  std::string prompt = render_user_prompt(profile);
  std::string opening;
  auto it = profile.behavioral_traits.find("opening_query");
  if (it != profile.behavioral_traits.end()) opening = it->second;
  return Persona{std::move(profile), std::move(prompt), std::move(opening)};
}

// One-line profile summary substituted into the {user_profile} slot of the
// query-formulation, re-ranking and judge prompts.
inline std::string render_profile_digest(const UserProfileRecord& profile) {
  std::string out;
  out += "gender: " + std::string(to_string(profile.gender));
  out += "; age: " + profile.age_range;
  out += "; occupation: " + profile.occupation;
  if (!profile.price_sensitivity.empty())
    out += "; price sensitivity: " + profile.price_sensitivity;
  if (!profile.shopping_interests.empty())
    out += "; shopping interests: " + join(profile.shopping_interests, ", ");
  if (!profile.brand_preferences.empty())
    out += "; brand preferences: " + join(profile.brand_preferences, ", ");
  for (const auto& [key, value] : profile.behavioral_traits) {
    // Preset queries are pipeline inputs, not profile attributes.
    if (key == "opening_query" || key == "session_b_query" ||
        key == "cross_task_query")
      continue;
    out += "; " + key + ": " + value;
  }
  return out;
}

}  // namespace persim
