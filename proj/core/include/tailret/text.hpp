#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace tailret {

struct NormalizationOptions {
  bool case_fold = false;
  bool collapse_whitespace = true;

  bool operator==(const NormalizationOptions&) const = default;
};

// Ordered lowercase word tokens.
struct TokenStream {
  std::vector<std::string> tokens;

  std::size_t size() const { return tokens.size(); }
  bool empty() const { return tokens.empty(); }
  bool operator==(const TokenStream&) const = default;
};

bool is_valid_utf8(std::string_view text);

// NFC, then optional whitespace collapse (runs of Unicode whitespace become
// one ASCII space, ends trimmed) and optional case folding.
std::string normalize_text(std::string_view text, const NormalizationOptions& options = {});

// NFC + full Unicode case folding. The single matching rule used for answer
// strings and entity checks everywhere.
std::string case_fold(std::string_view text);

// Lowercase tokens split on non-alphanumeric boundaries (Unicode aware).
TokenStream tokenize(std::string_view text);

// needle_folded must already be case folded.
bool contains_folded(std::string_view haystack_folded, std::string_view needle_folded);

std::u32string to_utf32(std::string_view text);
std::string to_utf8(std::u32string_view text);

std::string join(const std::vector<std::string>& parts, std::string_view separator);

}  // namespace tailret
