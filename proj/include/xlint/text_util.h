#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace xlint {

// Shortest decimal text that parses back to exactly `value`.
std::string FormatNumber(double value);

// Parses the whole of `text` as a decimal real; nullopt on any trailing junk.
std::optional<double> ParseNumber(std::string_view text);

// ASCII-only case folding; bytes >= 0x80 pass through unchanged.
std::string ToLower(std::string_view text);

std::string_view Trim(std::string_view text);

std::vector<std::string> SplitWhitespace(std::string_view text);

// 64-bit FNV-1a, rendered as 16 lowercase hex digits.
std::string Fnv1aHex(std::string_view bytes);

}  // namespace xlint
