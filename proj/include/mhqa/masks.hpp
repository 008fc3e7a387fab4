#pragma once

// Attention masks with the convention 0 = attention permitted, 1 = blocked.
// Indices are 0-based; "row i may see column j" iff i >= j, or both lie in
// the first c positions (the prompt prefix).

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "mhqa/errors.hpp"

namespace mhqa {

class AttnMask {
 public:
  std::size_t n() const { return n_; }
  std::size_t context_length() const { return c_; }

  std::uint8_t at(std::size_t i, std::size_t j) const { return cells_[i * n_ + j]; }
  bool allowed(std::size_t i, std::size_t j) const { return at(i, j) == 0; }
  bool blocked(std::size_t i, std::size_t j) const { return at(i, j) != 0; }

  const std::vector<std::uint8_t>& cells() const { return cells_; }

  bool operator==(const AttnMask&) const = default;

  friend AttnMask build_prefix_mask(std::size_t n, std::size_t c);

 private:
  AttnMask(std::size_t n, std::size_t c) : n_(n), c_(c), cells_(n * n, 1) {}

  std::size_t n_ = 0;
  std::size_t c_ = 0;
  std::vector<std::uint8_t> cells_;
};

inline AttnMask build_prefix_mask(std::size_t n, std::size_t c) {
  if (n == 0) throw DomainError("mask length must be >= 1");
  if (c > n) {
    throw DomainError("context length " + std::to_string(c) + " exceeds sequence length " +
                      std::to_string(n));
  }
  AttnMask m(n, c);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i >= j || (i < c && j < c)) m.cells_[i * n + j] = 0;
    }
  }
  return m;
}

inline AttnMask build_causal_mask(std::size_t n) { return build_prefix_mask(n, 0); }

// Packed fixture encoding: u32 n, u32 c (little-endian), then n*n bits in
// row-major order, LSB-first within each byte, bit set = blocked. Decoding
// rejects payloads that disagree with the header.
inline std::vector<std::uint8_t> to_bytes(const AttnMask& m) {
  std::vector<std::uint8_t> out;
  auto put_u32 = [&](std::uint32_t v) {
    for (int k = 0; k < 4; ++k) out.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
  };
  put_u32(static_cast<std::uint32_t>(m.n()));
  put_u32(static_cast<std::uint32_t>(m.context_length()));
  const auto total = m.n() * m.n();
  out.resize(8 + (total + 7) / 8, 0);
  for (std::size_t k = 0; k < total; ++k) {
    if (m.cells()[k]) out[8 + k / 8] |= static_cast<std::uint8_t>(1u << (k % 8));
  }
  return out;
}

inline AttnMask mask_from_bytes(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8) throw FormatError("mask fixture shorter than its header");
  auto get_u32 = [&](std::size_t at) {
    std::uint32_t v = 0;
    for (int k = 0; k < 4; ++k) v |= static_cast<std::uint32_t>(bytes[at + k]) << (8 * k);
    return v;
  };
  const std::size_t n = get_u32(0);
  const std::size_t c = get_u32(4);
  if (n == 0 || c > n) throw FormatError("mask fixture header out of range");
  const auto total = n * n;
  if (bytes.size() != 8 + (total + 7) / 8) throw FormatError("mask fixture payload size mismatch");
  auto m = build_prefix_mask(n, c);
  for (std::size_t k = 0; k < total; ++k) {
    if (((bytes[8 + k / 8] >> (k % 8)) & 1u) != m.cells()[k]) {
      throw FormatError("mask fixture bit " + std::to_string(k) + " contradicts its (n, c) header");
    }
  }
  return m;
}

}  // namespace mhqa
