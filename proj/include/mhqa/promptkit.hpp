#pragma once

// Prompt assembly. The core only knows character spans; whoever owns the
// tokenizer converts them with to_token_blocks().

#include <cstddef>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mhqa/blockmap.hpp"
#include "mhqa/corpus.hpp"
#include "mhqa/errors.hpp"
#include "mhqa/permute.hpp"

namespace mhqa {

enum class PromptMode { AnswerOnly, CoT };

inline std::string_view to_string(PromptMode m) { return m == PromptMode::AnswerOnly ? "answer_only" : "cot"; }

inline PromptMode parse_prompt_mode(std::string_view s) {
  if (s == "answer_only" || s == "ao") return PromptMode::AnswerOnly;
  if (s == "cot") return PromptMode::CoT;
  throw UsageError("unknown prompt mode '" + std::string(s) + "' (expected answer_only|cot)");
}

// Rendering template. `doc_format` and `question_format` substitute
// {index}, {title}, {body} and {question}.
struct PromptTemplate {
  std::string version = "mhqa-prompt-1";
  std::string instruction =
      "Answer the question using only the provided search results (some of which might be irrelevant).";
  std::string section_separator = "\n\n";
  std::string doc_separator = "\n";
  std::string doc_format = "Document [{index}] (Title: {title}) {body}";
  std::string question_format = "Question: {question}";
  std::string answer_only_suffix = "\n\\boxed{";
  std::string cot_suffix =
      "\nLet's think step by step. Give the final answer in the format \\boxed{<answer>}.";
};

struct CharBlock {
  std::string name;
  std::size_t begin = 0;  // inclusive
  std::size_t end = 0;    // exclusive

  bool operator==(const CharBlock&) const = default;
};

struct PromptText {
  std::string qid;
  std::string strategy;
  PromptMode mode = PromptMode::AnswerOnly;
  std::string template_version;
  std::string text;
  std::vector<CharBlock> char_blocks;  // instruction, doc_1..doc_n, question
  std::vector<std::string> doc_ids;    // parallel to the doc_* blocks

  std::string_view span(const CharBlock& b) const {
    return std::string_view(text).substr(b.begin, b.end - b.begin);
  }

  bool operator==(const PromptText&) const = default;
};

namespace detail {

inline std::string substitute(std::string_view format,
                              std::initializer_list<std::pair<std::string_view, std::string_view>> vars) {
  std::string out;
  out.reserve(format.size() + 64);
  std::size_t i = 0;
  while (i < format.size()) {
    if (format[i] == '{') {
      bool matched = false;
      for (const auto& [key, value] : vars) {
        if (format.substr(i + 1).starts_with(key) && i + 1 + key.size() < format.size() &&
            format[i + 1 + key.size()] == '}') {
          out.append(value);
          i += key.size() + 2;
          matched = true;
          break;
        }
      }
      if (matched) continue;
    }
    out.push_back(format[i++]);
  }
  return out;
}

}  // namespace detail

inline std::string render_document(const PromptTemplate& t, std::size_t index, const Document& d) {
  const auto idx = std::to_string(index);
  return detail::substitute(t.doc_format, {{"index", idx}, {"title", d.title}, {"body", d.body}});
}

namespace detail {

inline PromptText assemble_with_question(const QuestionInstance& q, const PermutationPlan& plan,
                                         PromptMode mode, std::string_view question,
                                         const PromptTemplate& t) {
  if (plan.qid != q.qid) {
    throw UsageError("plan for '" + plan.qid + "' used with question '" + q.qid + "'");
  }
  PromptText p;
  p.qid = q.qid;
  p.strategy = to_string(plan.strategy);
  p.mode = mode;
  p.template_version = t.version;

  auto append_block = [&](std::string name, const std::string& body) {
    const auto begin = p.text.size();
    p.text += body;
    p.char_blocks.push_back({std::move(name), begin, p.text.size()});
  };

  append_block("instruction", t.instruction);
  if (!plan.order.empty()) {
    p.text += t.section_separator;
    for (std::size_t k = 0; k < plan.order.size(); ++k) {
      const auto* d = q.find(plan.order[k]);
      if (d == nullptr) {
        throw UsageError("plan for '" + q.qid + "' names unknown document '" + plan.order[k] + "'");
      }
      if (k > 0) p.text += t.doc_separator;
      append_block("doc_" + std::to_string(k + 1), render_document(t, k + 1, *d));
      p.doc_ids.push_back(d->doc_id);
    }
  }
  p.text += t.section_separator;
  append_block("question", substitute(t.question_format, {{"question", question}}));
  p.text += mode == PromptMode::AnswerOnly ? t.answer_only_suffix : t.cot_suffix;
  return p;
}

}  // namespace detail

inline PromptText assemble(const QuestionInstance& q, const PermutationPlan& plan, PromptMode mode,
                           const PromptTemplate& t = {}) {
  return detail::assemble_with_question(q, plan, mode, q.question, t);
}

// Closed-book probe of the first hop: no documents, hop-1 sub-question in place of the question.
inline PromptText assemble_first_hop_probe(const QuestionInstance& q, PromptMode mode,
                                           const PromptTemplate& t = {}) {
  if (q.decomposition.empty()) throw UsageError("question '" + q.qid + "' has no decomposition");
  PermutationPlan empty;
  empty.qid = q.qid;
  auto p = detail::assemble_with_question(q, empty, mode, q.decomposition.front(), t);
  p.strategy = "first_hop_probe";
  return p;
}

// Maps character blocks onto tokens given each token's [start, end) character
// offsets. A token joins the block it overlaps most (later block on ties);
// runs of tokens outside every block become gap_<k> blocks so the result tiles
// [0, offsets.size()).
inline std::vector<TokenBlock> to_token_blocks(const std::vector<CharBlock>& char_blocks,
                                               const std::vector<std::pair<std::size_t, std::size_t>>& offsets) {
  constexpr std::size_t kNone = static_cast<std::size_t>(-1);
  std::vector<std::size_t> owner(offsets.size(), kNone);
  for (std::size_t t = 0; t < offsets.size(); ++t) {
    const auto [s, e] = offsets[t];
    std::size_t best = 0;
    for (std::size_t b = 0; b < char_blocks.size(); ++b) {
      const auto lo = std::max(s, char_blocks[b].begin);
      const auto hi = std::min(e, char_blocks[b].end);
      if (hi > lo && hi - lo >= best) {
        best = hi - lo;
        owner[t] = b;
      }
    }
  }
  std::vector<TokenBlock> out;
  std::size_t gap_count = 0;
  for (std::size_t t = 0; t < offsets.size(); ++t) {
    const std::string name = owner[t] == kNone ? "" : char_blocks[owner[t]].name;
    const bool same = !out.empty() && out.back().end == t &&
                      (owner[t] == kNone ? out.back().name.starts_with("gap_") : out.back().name == name);
    if (same) {
      out.back().end = t + 1;
    } else {
      out.push_back({owner[t] == kNone ? "gap_" + std::to_string(++gap_count) : name, t, t + 1});
    }
  }
  return out;
}

inline nlohmann::json to_json(const PromptText& p) {
  nlohmann::json blocks = nlohmann::json::array();
  for (const auto& b : p.char_blocks) blocks.push_back({{"name", b.name}, {"start", b.begin}, {"end", b.end}});
  return {{"qid", p.qid},
          {"strategy", p.strategy},
          {"mode", to_string(p.mode)},
          {"template_version", p.template_version},
          {"text", p.text},
          {"char_blocks", std::move(blocks)},
          {"doc_ids", p.doc_ids}};
}

inline PromptText prompt_from_json(const nlohmann::json& j) {
  try {
    PromptText p;
    p.qid = j.at("qid").get<std::string>();
    p.strategy = j.at("strategy").get<std::string>();
    p.mode = parse_prompt_mode(j.at("mode").get<std::string>());
    p.template_version = j.value("template_version", std::string{});
    p.text = j.at("text").get<std::string>();
    for (const auto& b : j.at("char_blocks")) {
      p.char_blocks.push_back({b.at("name").get<std::string>(), b.at("start").get<std::size_t>(),
                               b.at("end").get<std::size_t>()});
    }
    p.doc_ids = j.at("doc_ids").get<std::vector<std::string>>();
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("prompt record: ") + e.what());
  }
}

}  // namespace mhqa
