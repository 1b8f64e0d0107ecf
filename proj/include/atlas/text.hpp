#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

namespace atlas::cleanse {

/// Case-folds, strips combining marks after canonical decomposition,
/// collapses whitespace runs to one space and trims. Input is UTF-8.
std::string normalize_name(std::string_view s);

/// Unicode scalar values of a UTF-8 string (invalid bytes become U+FFFD).
std::u32string to_code_points(std::string_view utf8);

/// Unit-cost edit distance over code points.
std::size_t levenshtein(std::string_view a, std::string_view b);
std::size_t levenshtein(const std::u32string& a, const std::u32string& b);

/// 1 - d / max(|a|, |b|); 1 when both are empty.
double name_similarity(std::string_view a, std::string_view b);

}  // namespace atlas::cleanse
