#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

namespace fsvqa {

/// Option label for a 0-based index: a..z, aa, ab, ... (bijective base 26).
std::string choice_label(std::size_t index);

/// "Question: Is this a picture of a) x or b) y? Answer: " for two names;
/// three or more are joined with ", ". Throws ConfigError for fewer than two.
std::string build_mc_prompt(std::span<const std::string> names);

struct ParsedAnswer {
  std::size_t option;
  friend bool operator==(const ParsedAnswer&, const ParsedAnswer&) = default;
};

struct UnparsedAnswer {
  std::string raw;
  friend bool operator==(const UnparsedAnswer&, const UnparsedAnswer&) = default;
};

using ZeroShotAnswer = std::variant<ParsedAnswer, UnparsedAnswer>;

/// Maps decoded VQA text to an option index. Up to 26 options only the first
/// character counts; beyond that the leading run of letters is matched
/// against the full label set.
ZeroShotAnswer parse_zero_shot_answer(std::string_view text, std::size_t n_choices);

/// Fraction of answers equal to the truth; unparsed answers count as wrong.
double zero_shot_accuracy(std::span<const ZeroShotAnswer> answers, std::span<const std::size_t> truth);

}  // namespace fsvqa
