#include "tailret/text.hpp"

#include <unicode/normalizer2.h>
#include <unicode/uchar.h>
#include <unicode/unistr.h>
#include <unicode/utf8.h>

#include "tailret/errors.hpp"

namespace tailret {
namespace {

icu::UnicodeString from_utf8(std::string_view text) {
  return icu::UnicodeString::fromUTF8(
      icu::StringPiece(text.data(), static_cast<int32_t>(text.size())));
}

std::string utf8_of(const icu::UnicodeString& us) {
  std::string out;
  us.toUTF8String(out);
  return out;
}

icu::UnicodeString nfc(const icu::UnicodeString& us) {
  UErrorCode status = U_ZERO_ERROR;
  const icu::Normalizer2* normalizer = icu::Normalizer2::getNFCInstance(status);
  if (U_FAILURE(status)) throw Error("ICU NFC normalizer unavailable");
  icu::UnicodeString out = normalizer->normalize(us, status);
  if (U_FAILURE(status)) throw Error("NFC normalization failed");
  return out;
}

void append_utf8(std::string& out, UChar32 c) {
  char buf[U8_MAX_LENGTH];
  int32_t len = 0;
  UBool error = false;
  U8_APPEND(reinterpret_cast<uint8_t*>(buf), len, U8_MAX_LENGTH, c, error);
  if (error) throw Error("cannot encode code point as UTF-8");
  out.append(buf, static_cast<std::size_t>(len));
}

}  // namespace

bool is_valid_utf8(std::string_view text) {
  const auto* s = reinterpret_cast<const uint8_t*>(text.data());
  const auto n = static_cast<int32_t>(text.size());
  int32_t i = 0;
  while (i < n) {
    UChar32 c;
    U8_NEXT(s, i, n, c);
    if (c < 0) return false;
  }
  return true;
}

std::string normalize_text(std::string_view text, const NormalizationOptions& options) {
  icu::UnicodeString us = nfc(from_utf8(text));
  if (options.case_fold) us = nfc(us.foldCase(U_FOLD_CASE_DEFAULT));
  std::string composed = utf8_of(us);
  if (!options.collapse_whitespace) return composed;

  std::string out;
  out.reserve(composed.size());
  const auto* s = reinterpret_cast<const uint8_t*>(composed.data());
  const auto n = static_cast<int32_t>(composed.size());
  bool pending_space = false;
  int32_t i = 0;
  while (i < n) {
    UChar32 c;
    U8_NEXT(s, i, n, c);
    if (u_isUWhiteSpace(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    append_utf8(out, c);
  }
  return out;
}

std::string case_fold(std::string_view text) {
  icu::UnicodeString us = nfc(from_utf8(text));
  us.foldCase(U_FOLD_CASE_DEFAULT);
  return utf8_of(nfc(us));
}

TokenStream tokenize(std::string_view text) {
  TokenStream stream;
  if (text.empty()) return stream;
  const std::string folded = case_fold(text);
  const auto* s = reinterpret_cast<const uint8_t*>(folded.data());
  const auto n = static_cast<int32_t>(folded.size());
  std::string current;
  int32_t i = 0;
  while (i < n) {
    UChar32 c;
    U8_NEXT(s, i, n, c);
    if (c >= 0 && u_isalnum(c)) {
      append_utf8(current, c);
    } else if (!current.empty()) {
      stream.tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) stream.tokens.push_back(std::move(current));
  return stream;
}

bool contains_folded(std::string_view haystack_folded, std::string_view needle_folded) {
  if (needle_folded.empty()) return false;
  return haystack_folded.find(needle_folded) != std::string_view::npos;
}

std::u32string to_utf32(std::string_view text) {
  std::u32string out;
  const auto* s = reinterpret_cast<const uint8_t*>(text.data());
  const auto n = static_cast<int32_t>(text.size());
  int32_t i = 0;
  while (i < n) {
    UChar32 c;
    U8_NEXT(s, i, n, c);
    out.push_back(c < 0 ? U'�' : static_cast<char32_t>(c));
  }
  return out;
}

std::string to_utf8(std::u32string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char32_t c : text) append_utf8(out, static_cast<UChar32>(c));
  return out;
}

std::string join(const std::vector<std::string>& parts, std::string_view separator) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out.append(separator);
    out.append(parts[i]);
  }
  return out;
}

}  // namespace tailret
