#pragma once

#include <algorithm>
#include <cstddef>
#include <fstream>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "mhqa/errors.hpp"

namespace mhqa {

// Half-open token span [begin, end).
struct TokenBlock {
  std::string name;
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool contains(std::size_t t) const { return t >= begin && t < end; }
  bool operator==(const TokenBlock&) const = default;
};

inline bool is_doc_block(std::string_view name) { return name.starts_with("doc_"); }

// Token-level layout of one prompt plus its generated tokens.
struct BlockMap {
  std::vector<TokenBlock> blocks;                  // prompt blocks, ascending
  std::vector<std::string> doc_ids;                // one per doc_* block, same order
  std::vector<std::size_t> pred_token_indices;     // absolute positions of generated tokens
  std::vector<std::size_t> answer_token_indices;   // subset of pred_token_indices

  const TokenBlock& block(std::string_view name) const {
    for (const auto& b : blocks) {
      if (b.name == name) return b;
    }
    throw UsageError("block map has no block named '" + std::string(name) + "'");
  }

  std::vector<const TokenBlock*> doc_blocks() const {
    std::vector<const TokenBlock*> out;
    for (const auto& b : blocks) {
      if (is_doc_block(b.name)) out.push_back(&b);
    }
    return out;
  }

  std::size_t n_docs() const { return doc_ids.size(); }

  bool operator==(const BlockMap&) const = default;

  // Throws FormatError on a broken structural invariant.
  void validate() const {
    std::size_t prev_end = 0;
    std::size_t n_doc_blocks = 0;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
      const auto& b = blocks[i];
      if (b.end < b.begin) throw FormatError("block '" + b.name + "' has end < begin");
      if (i > 0 && b.begin < prev_end) {
        throw FormatError("block '" + b.name + "' overlaps or precedes its predecessor");
      }
      prev_end = b.end;
      if (is_doc_block(b.name)) ++n_doc_blocks;
    }
    if (n_doc_blocks != doc_ids.size()) {
      throw FormatError("doc block count " + std::to_string(n_doc_blocks) + " != doc_id count " +
                        std::to_string(doc_ids.size()));
    }
    for (auto a : answer_token_indices) {
      if (std::find(pred_token_indices.begin(), pred_token_indices.end(), a) ==
          pred_token_indices.end()) {
        throw FormatError("answer token " + std::to_string(a) + " is not a prediction token");
      }
    }
  }
};

inline nlohmann::json to_json(const BlockMap& m) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : m.blocks) blocks.push_back({{"name", b.name}, {"start", b.begin}, {"end", b.end}});
  return {{"blocks", std::move(blocks)},
          {"doc_ids", m.doc_ids},
          {"pred_token_indices", m.pred_token_indices},
          {"answer_token_indices", m.answer_token_indices}};
}

inline BlockMap block_map_from_json(const nlohmann::json& j) {
  BlockMap m;
  try {
    for (const auto& b : j.at("blocks")) {
      m.blocks.push_back({b.at("name").get<std::string>(), b.at("start").get<std::size_t>(),
                          b.at("end").get<std::size_t>()});
    }
    m.doc_ids = j.at("doc_ids").get<std::vector<std::string>>();
    m.pred_token_indices = j.at("pred_token_indices").get<std::vector<std::size_t>>();
    m.answer_token_indices = j.at("answer_token_indices").get<std::vector<std::size_t>>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("block map sidecar: ") + e.what());
  }
  m.validate();
  return m;
}

inline BlockMap read_block_map(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open block map '" + path + "'");
  try {
    return block_map_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError("block map '" + path + "': " + e.what());
  }
}

inline void write_block_map(const std::string& path, const BlockMap& m) {
  std::ofstream out(path);
  if (!out) throw FormatError("cannot write block map '" + path + "'");
  out << to_json(m).dump(1) << '\n';
}

}  // namespace mhqa
