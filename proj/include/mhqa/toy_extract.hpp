#pragma once

// Runs the toy model over an assembled prompt and produces what a real
// extractor would: generation text, an MHAD dump and a token-level block map.

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mhqa/attention_dump.hpp"
#include "mhqa/attnstats.hpp"
#include "mhqa/blockmap.hpp"
#include "mhqa/masks.hpp"
#include "mhqa/promptkit.hpp"
#include "mhqa/toylm.hpp"

namespace mhqa::toy {

enum class GenerationSource {
  Reference,  // teacher-force the reference answer in the mode's output format
  Greedy,     // decode from the toy model; rarely contains the answer
};

struct ExtractOptions {
  bool prefix_mask = false;  // bidirectional attention over the prompt
  GenerationSource source = GenerationSource::Reference;
  std::size_t max_new_tokens = 6;
  DumpMode dump_mode = DumpMode::AnswerRows;
};

struct Extraction {
  std::string generation;
  AttentionDump dump;
  BlockMap map;
  bool answer_located = false;  // false: answer tokens fell back to all prediction tokens
};

inline Extraction extract(const ToyModel& model, const PromptText& prompt, const std::string& answer,
                          const ExtractOptions& opts = {}) {
  const ToyTokenizer tok(model.config().vocab_size);
  const auto prompt_tokens = tok.encode(prompt.text);
  std::vector<std::uint32_t> ids;
  std::vector<std::pair<std::size_t, std::size_t>> offsets;
  for (const auto& t : prompt_tokens) {
    ids.push_back(t.id);
    offsets.emplace_back(t.begin, t.end);
  }
  const auto prompt_len = ids.size();

  Extraction ex;
  std::vector<ToyToken> gen_tokens;
  if (opts.source == GenerationSource::Reference) {
    ex.generation = prompt.mode == PromptMode::AnswerOnly ? answer + "}"
                                                          : "The answer is \\boxed{" + answer + "}.";
    gen_tokens = tok.encode(ex.generation);
  } else {
    for (auto id : greedy_generate(model, ids, opts.max_new_tokens, opts.prefix_mask)) {
      if (!ex.generation.empty()) ex.generation.push_back(' ');
      const auto begin = ex.generation.size();
      ex.generation += ToyTokenizer::piece_for(id);
      gen_tokens.push_back({id, begin, ex.generation.size()});
    }
  }

  ex.map.blocks = to_token_blocks(prompt.char_blocks, offsets);
  ex.map.doc_ids = prompt.doc_ids;
  std::vector<std::string> token_texts;
  std::size_t prev_end = 0;
  for (std::size_t i = 0; i < gen_tokens.size(); ++i) {
    ids.push_back(gen_tokens[i].id);
    ex.map.pred_token_indices.push_back(prompt_len + i);
    token_texts.push_back(ex.generation.substr(prev_end, gen_tokens[i].end - prev_end));
    prev_end = gen_tokens[i].end;
  }
  ex.map.answer_token_indices = locate_answer_tokens(token_texts, ex.map.pred_token_indices, answer);
  ex.answer_located = !ex.map.answer_token_indices.empty();
  if (!ex.answer_located) ex.map.answer_token_indices = ex.map.pred_token_indices;
  ex.map.validate();

  const auto mask = build_prefix_mask(ids.size(), opts.prefix_mask ? prompt_len : 0);
  ForwardOptions fo;
  if (opts.dump_mode == DumpMode::AnswerRows) {
    for (auto p : ex.map.pred_token_indices) fo.keep_rows.push_back(static_cast<std::uint32_t>(p));
  }
  ex.dump = to_dump(model.forward(ids, mask, fo), opts.dump_mode);
  return ex;
}

}  // namespace mhqa::toy
