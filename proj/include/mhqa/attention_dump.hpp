#pragma once

// MHAD attention dump, little-endian throughout:
//
//   "MHAD"            4 bytes
//   version           u32 (= 1)
//   n_layers          u32
//   n_heads           u32
//   seq_len           u32
//   n_rows            u32
//   mode              u8   (0 = AnswerRows, 1 = Full)
//   row positions     n_rows x u32
//   values            f32, [layer][head][row][key], contiguous

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mhqa/errors.hpp"

namespace mhqa {

enum class DumpMode : std::uint8_t { AnswerRows = 0, Full = 1 };

inline constexpr std::uint32_t kDumpVersion = 1;

class AttentionDump {
 public:
  AttentionDump() = default;

  // Validates shape; `values` must hold n_layers * n_heads * rows * seq_len floats.
  AttentionDump(std::uint32_t n_layers, std::uint32_t n_heads, std::uint32_t seq_len, DumpMode mode,
                std::vector<std::uint32_t> row_positions, std::vector<float> values)
      : n_layers_(n_layers),
        n_heads_(n_heads),
        seq_len_(seq_len),
        mode_(mode),
        row_positions_(std::move(row_positions)),
        values_(std::move(values)) {
    if (mode_ != DumpMode::AnswerRows && mode_ != DumpMode::Full) throw FormatError("unknown dump mode");
    const std::uint64_t expected = std::uint64_t{n_layers_} * n_heads_ * row_positions_.size() * seq_len_;
    if (values_.size() != expected) {
      throw FormatError("dump holds " + std::to_string(values_.size()) + " values, shape needs " +
                        std::to_string(expected));
    }
    row_of_.assign(seq_len_, -1);
    for (std::size_t r = 0; r < row_positions_.size(); ++r) {
      const auto pos = row_positions_[r];
      if (pos >= seq_len_) throw FormatError("stored row position " + std::to_string(pos) + " >= seq_len");
      if (row_of_[pos] != -1) throw FormatError("row position " + std::to_string(pos) + " stored twice");
      row_of_[pos] = static_cast<long>(r);
    }
    if (mode_ == DumpMode::Full && row_positions_.size() != seq_len_) {
      throw FormatError("full-mode dump must store every row");
    }
  }

  std::uint32_t n_layers() const { return n_layers_; }
  std::uint32_t n_heads() const { return n_heads_; }
  std::uint32_t seq_len() const { return seq_len_; }
  std::size_t n_rows() const { return row_positions_.size(); }
  DumpMode mode() const { return mode_; }
  const std::vector<std::uint32_t>& row_positions() const { return row_positions_; }
  const std::vector<float>& values() const { return values_; }

  // Stored-row index of a token position.
  std::optional<std::size_t> stored_row(std::size_t token) const {
    if (token >= row_of_.size() || row_of_[token] < 0) return std::nullopt;
    return static_cast<std::size_t>(row_of_[token]);
  }

  std::span<const float> row(std::size_t layer, std::size_t head, std::size_t stored) const {
    const auto offset = ((layer * n_heads_ + head) * n_rows() + stored) * seq_len_;
    return {values_.data() + offset, seq_len_};
  }

  // Attention row of a token; throws MissingRowError when it was not stored.
  std::span<const float> row_for_token(std::size_t layer, std::size_t head, std::size_t token) const {
    auto r = stored_row(token);
    if (!r) throw MissingRowError(token);
    return row(layer, head, *r);
  }

  bool operator==(const AttentionDump& o) const {
    return n_layers_ == o.n_layers_ && n_heads_ == o.n_heads_ && seq_len_ == o.seq_len_ &&
           mode_ == o.mode_ && row_positions_ == o.row_positions_ && values_ == o.values_;
  }

 private:
  std::uint32_t n_layers_ = 0;
  std::uint32_t n_heads_ = 0;
  std::uint32_t seq_len_ = 0;
  DumpMode mode_ = DumpMode::AnswerRows;
  std::vector<std::uint32_t> row_positions_;
  std::vector<float> values_;
  std::vector<long> row_of_;
};

namespace detail {

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) out.push_back(static_cast<std::uint8_t>(v >> (8 * k)));
}

inline std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 |
         static_cast<std::uint32_t>(p[2]) << 16 | static_cast<std::uint32_t>(p[3]) << 24;
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_dump(const AttentionDump& d) {
  std::vector<std::uint8_t> out;
  out.reserve(25 + 4 * (d.n_rows() + d.values().size()));
  for (char c : {'M', 'H', 'A', 'D'}) out.push_back(static_cast<std::uint8_t>(c));
  detail::put_u32(out, kDumpVersion);
  detail::put_u32(out, d.n_layers());
  detail::put_u32(out, d.n_heads());
  detail::put_u32(out, d.seq_len());
  detail::put_u32(out, static_cast<std::uint32_t>(d.n_rows()));
  out.push_back(static_cast<std::uint8_t>(d.mode()));
  for (auto p : d.row_positions()) detail::put_u32(out, p);
  for (float v : d.values()) detail::put_u32(out, std::bit_cast<std::uint32_t>(v));
  return out;
}

inline AttentionDump decode_dump(std::span<const std::uint8_t> bytes) {
  constexpr std::size_t kHeader = 25;
  if (bytes.size() < kHeader) throw FormatError("dump shorter than its header");
  if (std::memcmp(bytes.data(), "MHAD", 4) != 0) throw FormatError("bad dump magic");
  const auto* p = bytes.data();
  const auto version = detail::get_u32(p + 4);
  if (version != kDumpVersion) throw FormatError("unsupported dump version " + std::to_string(version));
  const auto n_layers = detail::get_u32(p + 8);
  const auto n_heads = detail::get_u32(p + 12);
  const auto seq_len = detail::get_u32(p + 16);
  const auto n_rows = detail::get_u32(p + 20);
  const auto mode = p[24];
  if (mode > 1) throw FormatError("unknown dump mode byte " + std::to_string(mode));

  const std::uint64_t n_values = std::uint64_t{n_layers} * n_heads * n_rows * seq_len;
  const std::uint64_t expected = kHeader + 4 * (std::uint64_t{n_rows} + n_values);
  if (bytes.size() != expected) {
    throw FormatError("dump is " + std::to_string(bytes.size()) + " bytes, header implies " +
                      std::to_string(expected));
  }
  std::vector<std::uint32_t> rows(n_rows);
  const auto* cursor = p + kHeader;
  for (auto& r : rows) {
    r = detail::get_u32(cursor);
    cursor += 4;
  }
  std::vector<float> values(n_values);
  for (auto& v : values) {
    v = std::bit_cast<float>(detail::get_u32(cursor));
    cursor += 4;
  }
  return AttentionDump(n_layers, n_heads, seq_len, static_cast<DumpMode>(mode), std::move(rows),
                       std::move(values));
}

inline void write_dump(const std::string& path, const AttentionDump& d) {
  const auto bytes = encode_dump(d);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write dump '" + path + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw FormatError("short write to '" + path + "'");
}

inline AttentionDump read_dump(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open dump '" + path + "'");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return decode_dump(bytes);
}

}  // namespace mhqa
