#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace ph::text {

/// Lowercased maximal runs of ASCII letters. Everything else separates tokens.
std::vector<std::string> alpha_tokens(std::string_view s);

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);
bool iequals(std::string_view a, std::string_view b);
bool istarts_with(std::string_view s, std::string_view prefix);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
std::vector<std::string> split_lines(std::string_view s);

/// Porter suffix-stripping stemmer (reference C variant). Input is expected
/// to be a lowercase alphabetic token; other input is returned unchanged.
std::string porter_stem(std::string_view word);

/// Small English function-word list used to keep topic stems meaningful.
bool is_stopword(std::string_view lower_token);

/// Heuristic detection of a model declining a request.
bool looks_like_refusal(std::string_view reply);

}  // namespace ph::text
