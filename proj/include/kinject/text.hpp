#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace kinject {

struct RawToken {
  std::string text;   // case-folded, surrounding punctuation removed
  std::size_t begin;  // byte offsets of the kept text in the source
  std::size_t end;
};

// Whitespace split, ASCII case fold, strip leading/trailing ASCII
// punctuation. Tokens that are pure punctuation disappear. Non-ASCII bytes
// pass through unchanged.
std::vector<RawToken> normalize(std::string_view text);
std::vector<std::string> normalize_words(std::string_view text);

std::string join_words(std::span<const std::string> words, std::string_view sep = " ");
std::vector<std::string> split(std::string_view text, char sep);

}  // namespace kinject
