#pragma once

#include <cctype>
#include <cstdint>
#include <string>
#include <string_view>

namespace mhqa::text {

// Normalizer version; bump whenever the rules below change so fixtures can pin them.
inline constexpr int kNormalizerVersion = 1;

inline bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
inline bool is_punct(char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; }

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

// Lowercase ASCII, drop ASCII punctuation, collapse whitespace runs to one
// space, trim. Bytes >= 0x80 pass through untouched.
inline std::string normalize_answer(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  bool pending_space = false;
  for (char c : s) {
    if (is_space(c)) {
      pending_space = !out.empty();
      continue;
    }
    if (is_punct(c)) continue;
    if (pending_space) {
      out.push_back(' ');
      pending_space = false;
    }
    out.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return out;
}

// Collapses whitespace only; used where case and punctuation are significant.
inline std::string collapse_whitespace(std::string_view s) {
  std::string out;
  bool pending_space = false;
  for (char c : trim(s)) {
    if (is_space(c)) {
      pending_space = true;
      continue;
    }
    if (pending_space) out.push_back(' ');
    pending_space = false;
    out.push_back(c);
  }
  return out;
}

inline std::string_view last_nonempty_line(std::string_view s) {
  s = trim(s);
  auto pos = s.rfind('\n');
  return pos == std::string_view::npos ? s : trim(s.substr(pos + 1));
}

// 64-bit FNV-1a. Stable across platforms, used for seeding and toy token ids.
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace mhqa::text
