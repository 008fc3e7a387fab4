#pragma once

// On-disk naming of run artifacts and the generation record that ties a
// prompt to its dump. Extractors writing dumps for `analyze` must follow the
// same names.
//
//   plans/<strategy-file>.jsonl        one PermutationPlan per line
//   <dump_dir>/<stem>.mhad             AttentionDump
//   <dump_dir>/<stem>.blocks.json      BlockMap
//   generations.jsonl                  GenerationRecord per line

#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "mhqa/errors.hpp"
#include "mhqa/permute.hpp"
#include "mhqa/promptkit.hpp"

namespace mhqa {

// Keeps [A-Za-z0-9._-]; every other byte becomes '_'.
inline std::string safe_file_component(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '.' ||
                    c == '_' || c == '-';
    out.push_back(ok ? c : '_');
  }
  return out;
}

inline std::string plan_file_name(const Strategy& s) { return safe_file_component(to_string(s)) + ".jsonl"; }

inline std::string dump_stem(std::string_view qid, const Strategy& s) {
  return safe_file_component(qid) + "__" + safe_file_component(to_string(s));
}

struct GenerationRecord {
  std::string qid;
  Strategy strategy;
  PromptMode mode = PromptMode::AnswerOnly;
  std::string text;

  bool operator==(const GenerationRecord&) const = default;
};

inline nlohmann::json to_json(const GenerationRecord& g) {
  return {{"qid", g.qid}, {"strategy", to_string(g.strategy)}, {"mode", to_string(g.mode)}, {"text", g.text}};
}

inline GenerationRecord generation_from_json(const nlohmann::json& j) {
  try {
    GenerationRecord g;
    g.qid = j.at("qid").get<std::string>();
    g.strategy = parse_strategy(j.at("strategy").get<std::string>());
    g.mode = j.contains("mode") ? parse_prompt_mode(j.at("mode").get<std::string>()) : PromptMode::AnswerOnly;
    g.text = j.at("text").get<std::string>();
    return g;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("generation record: ") + e.what());
  }
}

}  // namespace mhqa
