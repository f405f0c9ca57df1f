#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace imix::text {

// Splits on Unicode White_Space code points (UTF-8 input). Invalid UTF-8
// bytes are kept as part of tokens.
std::vector<std::string_view> split_whitespace(std::string_view s);

// ASCII lowercase; non-ASCII bytes pass through unchanged.
std::string ascii_lower(std::string_view s);

// Lowercased whitespace tokens, owning.
std::vector<std::string> lower_tokens(std::string_view s);

// Lowercase, strip, collapse internal whitespace runs to a single space.
std::string normalize_answer(std::string_view s);

bool ends_with(std::string_view s, std::string_view suffix);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

// Escapes control characters for human-readable echoes ("\n" -> "\\n").
std::string escape_visible(std::string_view s);

}  // namespace imix::text
