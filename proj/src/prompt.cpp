#include "fsvqa/prompt.hpp"

#include <algorithm>
#include <cctype>

#include "fsvqa/errors.hpp"

namespace fsvqa {

namespace {

bool is_letter(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }

std::string trimmed_lower(std::string_view text) {
  auto is_space = [](char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; };
  auto first = std::find_if_not(text.begin(), text.end(), is_space);
  auto last = std::find_if_not(text.rbegin(), std::string_view::reverse_iterator(first), is_space).base();
  std::string out(first, last);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](char c) { return static_cast<char>(std::tolower(static_cast<unsigned char>(c))); });
  return out;
}

}  // namespace

std::string choice_label(std::size_t index) {
  std::string out;
  std::size_t n = index + 1;
  while (n > 0) {
    --n;
    out.push_back(static_cast<char>('a' + n % 26));
    n /= 26;
  }
  std::reverse(out.begin(), out.end());
  return out;
}

std::string build_mc_prompt(std::span<const std::string> names) {
  if (names.size() < 2) {
    throw ConfigError("a multiple-choice prompt needs at least two class names, got " +
                      std::to_string(names.size()));
  }
  const std::string_view sep = names.size() == 2 ? " or " : ", ";
  std::string out = "Question: Is this a picture of ";
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (i) out += sep;
    out += choice_label(i);
    out += ") ";
    out += names[i];
  }
  out += "? Answer: ";
  return out;
}

ZeroShotAnswer parse_zero_shot_answer(std::string_view text, std::size_t n_choices) {
  const auto norm = trimmed_lower(text);
  if (norm.empty() || n_choices == 0) return UnparsedAnswer{std::string(text)};

  if (n_choices <= 26) {
    const char c = norm.front();
    if (c >= 'a' && static_cast<std::size_t>(c - 'a') < n_choices) {
      return ParsedAnswer{static_cast<std::size_t>(c - 'a')};
    }
    return UnparsedAnswer{std::string(text)};
  }

  auto end = std::find_if_not(norm.begin(), norm.end(), is_letter);
  std::string_view run(norm.data(), static_cast<std::size_t>(end - norm.begin()));
  if (run.empty()) return UnparsedAnswer{std::string(text)};

  // Inverse of choice_label.
  std::size_t value = 0;
  for (char c : run) {
    value = value * 26 + static_cast<std::size_t>(c - 'a') + 1;
    if (value > n_choices) return UnparsedAnswer{std::string(text)};
  }
  return ParsedAnswer{value - 1};
}

double zero_shot_accuracy(std::span<const ZeroShotAnswer> answers, std::span<const std::size_t> truth) {
  if (answers.size() != truth.size()) {
    throw ConfigError("zero_shot_accuracy: " + std::to_string(answers.size()) + " answers vs " +
                      std::to_string(truth.size()) + " labels");
  }
  if (answers.empty()) return 0.0;
  std::size_t correct = 0;
  for (std::size_t i = 0; i < answers.size(); ++i) {
    if (const auto* p = std::get_if<ParsedAnswer>(&answers[i]); p && p->option == truth[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(answers.size());
}

}  // namespace fsvqa
