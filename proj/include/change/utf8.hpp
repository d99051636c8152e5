#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace change {

// Splits a UTF-8 string into codepoint substrings. Invalid lead/continuation
// bytes are passed through as single-byte "characters" rather than rejected.
std::vector<std::string> utf8_chars(std::string_view s);

// Number of codepoints in s.
std::size_t utf8_length(std::string_view s);

// True when s is exactly one codepoint.
bool is_single_char(std::string_view s);

std::string join(const std::vector<std::string>& parts);

}  // namespace change
