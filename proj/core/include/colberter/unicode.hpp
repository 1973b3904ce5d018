#pragma once

#include <cstddef>
#include <string>
#include <string_view>

namespace colberter::unicode {

struct Decoded {
  char32_t codepoint;
  std::size_t length;  // bytes consumed, >= 1
};

/// Decodes the UTF-8 sequence starting at `pos`. Ill-formed input decodes to
/// U+FFFD and consumes a single byte.
Decoded decode(std::string_view text, std::size_t pos);

void append_utf8(std::string& out, char32_t codepoint);

/// Unicode White_Space property.
bool is_whitespace(char32_t codepoint);

/// General category P* (punctuation) or S* (symbol).
bool is_punctuation(char32_t codepoint);

/// Simple (1:1) lowercase mapping; codepoints without one map to themselves.
char32_t to_lower(char32_t codepoint);
std::string to_lower(std::string_view utf8);

std::size_t codepoint_count(std::string_view utf8);

}  // namespace colberter::unicode
