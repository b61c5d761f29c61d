#pragma once

#include <string>
#include <string_view>

namespace qac::utf8 {

// Malformed sequences decode as U+FFFD, one per offending byte.
std::u32string decode(std::string_view text);
std::string encode(std::u32string_view code_points);
std::string encode(char32_t code_point);

/// Number of code points in `text`.
std::size_t length(std::string_view text);

/// First `count` code points of `text` (whole string when shorter).
std::string prefix(std::string_view text, std::size_t count);

}  // namespace qac::utf8
