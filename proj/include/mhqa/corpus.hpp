#pragma once

// Loading MuSiQue and 2WikiMultihopQA records into a uniform representation.
//
// MuSiQue files are JSON lines. 2WikiMultihopQA files may be either the
// official single JSON array or JSON lines; for arrays, reported "line"
// numbers are 1-based record positions.

#include <algorithm>
#include <array>
#include <cstddef>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "mhqa/errors.hpp"
#include "mhqa/text.hpp"

namespace mhqa {

struct Document {
  std::string doc_id;
  std::string title;
  std::string body;
  bool is_gold = false;
  std::optional<int> hop_index;  // 1-based position in the reasoning chain; set iff is_gold

  bool operator==(const Document&) const = default;
};

struct QuestionInstance {
  std::string qid;
  std::string question;
  std::string answer;
  std::vector<std::string> answer_aliases;  // primary answer first
  std::vector<Document> documents;          // dataset order
  int n_hops = 0;
  std::vector<std::string> decomposition;  // one single-hop question per hop

  // Gold documents sorted by hop index (hop 1 first).
  std::vector<const Document*> gold_chain() const {
    std::vector<const Document*> chain;
    for (const auto& d : documents) {
      if (d.is_gold) chain.push_back(&d);
    }
    std::sort(chain.begin(), chain.end(),
              [](const Document* a, const Document* b) { return *a->hop_index < *b->hop_index; });
    return chain;
  }

  const Document* find(std::string_view doc_id) const {
    for (const auto& d : documents) {
      if (d.doc_id == doc_id) return &d;
    }
    return nullptr;
  }

  bool operator==(const QuestionInstance&) const = default;
};

struct DatasetStats {
  std::size_t n_instances = 0;
  std::map<int, std::size_t> hop_histogram;
  double mean_documents = 0.0;
};

enum class MusiqueSplit { Train, Dev };
enum class TwoWikiSubset { Compositional, Inference };

inline constexpr std::size_t kMaxMusiqueDocuments = 20;
inline constexpr std::size_t kMaxTwoWikiDocuments = 10;

struct LoadIssue {
  std::size_t line = 0;
  std::string qid;  // empty when the record id could not be read
  std::string reason;
};

struct LoadOptions {
  // Skip invalid records instead of throwing. Skips are reported via on_skip.
  bool permissive = false;
  std::function<void(const LoadIssue&)> on_skip;
};

inline MusiqueSplit parse_musique_split(std::string_view s) {
  if (s == "train") return MusiqueSplit::Train;
  if (s == "dev") return MusiqueSplit::Dev;
  throw UsageError("unknown MuSiQue split '" + std::string(s) + "' (expected train|dev)");
}

inline TwoWikiSubset parse_twowiki_subset(std::string_view s) {
  if (s == "compositional") return TwoWikiSubset::Compositional;
  if (s == "inference") return TwoWikiSubset::Inference;
  throw UsageError("unknown 2WikiMultihopQA subset '" + std::string(s) +
                   "' (expected compositional|inference)");
}

inline std::string_view to_string(TwoWikiSubset s) {
  return s == TwoWikiSubset::Compositional ? "compositional" : "inference";
}

// Checks the QuestionInstance invariants; throws ValidationError.
inline void validate(const QuestionInstance& q, std::size_t max_documents) {
  if (q.n_hops < 2 || q.n_hops > 4) {
    throw ValidationError(q.qid, "n_hops must be in {2,3,4}, got " + std::to_string(q.n_hops));
  }
  if (q.documents.size() > max_documents) {
    throw ValidationError(q.qid, "document pool of " + std::to_string(q.documents.size()) +
                                     " exceeds " + std::to_string(max_documents));
  }
  if (q.decomposition.size() != static_cast<std::size_t>(q.n_hops)) {
    throw ValidationError(q.qid, "decomposition length differs from n_hops");
  }
  std::set<std::string> ids;
  std::set<int> hops;
  std::size_t gold = 0;
  for (const auto& d : q.documents) {
    if (!ids.insert(d.doc_id).second) throw ValidationError(q.qid, "duplicate doc_id " + d.doc_id);
    if (d.body.empty()) throw ValidationError(q.qid, "document " + d.doc_id + " has empty body");
    if (d.is_gold != d.hop_index.has_value()) {
      throw ValidationError(q.qid, "document " + d.doc_id + " gold flag and hop index disagree");
    }
    if (d.is_gold) {
      ++gold;
      if (*d.hop_index < 1 || *d.hop_index > q.n_hops || !hops.insert(*d.hop_index).second) {
        throw ValidationError(q.qid, "invalid or duplicate hop index " +
                                         std::to_string(*d.hop_index));
      }
    }
  }
  if (gold != static_cast<std::size_t>(q.n_hops)) {
    throw ValidationError(q.qid, std::to_string(gold) + " gold documents for a " +
                                     std::to_string(q.n_hops) + "-hop question");
  }
}

namespace detail {

using nlohmann::json;

inline const json& require(const json& obj, std::string_view field, std::size_t line) {
  if (!obj.is_object()) throw ParseError(std::string(field), line, "record is not an object");
  auto it = obj.find(field);
  if (it == obj.end() || it->is_null()) throw ParseError(std::string(field), line, "missing");
  return *it;
}

inline std::string require_string(const json& obj, std::string_view field, std::size_t line) {
  const auto& v = require(obj, field, line);
  if (!v.is_string()) throw ParseError(std::string(field), line, "expected a string");
  return v.get<std::string>();
}

inline const json& require_array(const json& obj, std::string_view field, std::size_t line) {
  const auto& v = require(obj, field, line);
  if (!v.is_array()) throw ParseError(std::string(field), line, "expected an array");
  return v;
}

inline std::vector<std::string> make_aliases(const std::string& answer, const json* extra) {
  std::vector<std::string> aliases{answer};
  if (extra != nullptr && extra->is_array()) {
    for (const auto& a : *extra) {
      if (!a.is_string()) continue;
      auto s = a.get<std::string>();
      if (std::find(aliases.begin(), aliases.end(), s) == aliases.end()) aliases.push_back(s);
    }
  }
  return aliases;
}

inline std::optional<QuestionInstance> musique_from_json(const json& rec, std::size_t line) {
  QuestionInstance q;
  q.qid = require_string(rec, "id", line);
  if (auto it = rec.find("answerable"); it != rec.end() && it->is_boolean() && !it->get<bool>()) {
    return std::nullopt;
  }
  q.question = require_string(rec, "question", line);
  q.answer = require_string(rec, "answer", line);
  auto aliases = rec.find("answer_aliases");
  q.answer_aliases = make_aliases(q.answer, aliases == rec.end() ? nullptr : &*aliases);

  const auto& paragraphs = require_array(rec, "paragraphs", line);
  std::map<long long, std::size_t> by_idx;
  for (std::size_t pos = 0; pos < paragraphs.size(); ++pos) {
    const auto& p = paragraphs[pos];
    Document d;
    long long idx = static_cast<long long>(pos);
    if (auto it = p.find("idx"); it != p.end() && it->is_number_integer()) idx = it->get<long long>();
    d.doc_id = std::to_string(idx);
    d.title = require_string(p, "title", line);
    d.body = require_string(p, "paragraph_text", line);
    const auto& sup = require(p, "is_supporting", line);
    if (!sup.is_boolean()) throw ParseError("is_supporting", line, "expected a boolean");
    d.is_gold = sup.get<bool>();
    by_idx[idx] = pos;
    q.documents.push_back(std::move(d));
  }

  const auto& decomposition = require_array(rec, "question_decomposition", line);
  q.n_hops = static_cast<int>(decomposition.size());
  bool all_linked = !decomposition.empty();
  for (const auto& step : decomposition) {
    q.decomposition.push_back(require_string(step, "question", line));
    auto it = step.find("paragraph_support_idx");
    if (it == step.end() || !it->is_number_integer()) all_linked = false;
  }

  const std::size_t n_supporting = static_cast<std::size_t>(
      std::count_if(q.documents.begin(), q.documents.end(), [](const Document& d) { return d.is_gold; }));
  if (n_supporting != decomposition.size()) {
    throw ValidationError(q.qid, std::to_string(n_supporting) + " supporting paragraphs for " +
                                     std::to_string(decomposition.size()) + " hops");
  }

  if (all_linked) {
    // Hop order follows the decomposition, whatever order the paragraphs are listed in.
    for (std::size_t k = 0; k < decomposition.size(); ++k) {
      const auto idx = decomposition[k]["paragraph_support_idx"].get<long long>();
      auto it = by_idx.find(idx);
      if (it == by_idx.end()) {
        throw ValidationError(q.qid, "hop " + std::to_string(k + 1) + " cites unknown paragraph " +
                                         std::to_string(idx));
      }
      auto& d = q.documents[it->second];
      if (!d.is_gold) {
        throw ValidationError(q.qid, "hop " + std::to_string(k + 1) +
                                         " cites a paragraph not marked supporting");
      }
      if (d.hop_index) throw ValidationError(q.qid, "two hops cite paragraph " + d.doc_id);
      d.hop_index = static_cast<int>(k + 1);
    }
  } else {
    int hop = 0;
    for (auto& d : q.documents) {
      if (d.is_gold) d.hop_index = ++hop;
    }
  }
  validate(q, kMaxMusiqueDocuments);
  return q;
}

inline std::optional<QuestionInstance> twowiki_from_json(const json& rec, std::size_t line,
                                                         TwoWikiSubset subset) {
  const std::string id_field = rec.contains("_id") ? "_id" : "id";
  QuestionInstance q;
  q.qid = require_string(rec, id_field, line);
  if (require_string(rec, "type", line) != to_string(subset)) return std::nullopt;
  q.question = require_string(rec, "question", line);
  q.answer = require_string(rec, "answer", line);
  auto aliases = rec.find("answer_aliases");
  q.answer_aliases = make_aliases(q.answer, aliases == rec.end() ? nullptr : &*aliases);
  q.n_hops = 2;

  const auto& context = require_array(rec, "context", line);
  for (std::size_t pos = 0; pos < context.size(); ++pos) {
    const auto& entry = context[pos];
    if (!entry.is_array() || entry.size() != 2 || !entry[0].is_string() || !entry[1].is_array()) {
      throw ParseError("context", line, "entry " + std::to_string(pos) + " is not [title, [sentences]]");
    }
    Document d;
    d.doc_id = std::to_string(pos);
    d.title = entry[0].get<std::string>();
    std::string body;
    for (const auto& s : entry[1]) {
      if (!s.is_string()) throw ParseError("context", line, "non-string sentence");
      auto piece = text::trim(s.get_ref<const std::string&>());
      if (piece.empty()) continue;
      if (!body.empty()) body.push_back(' ');
      body.append(piece);
    }
    d.body = std::move(body);
    q.documents.push_back(std::move(d));
  }

  // Distinct supporting titles, in first-mention order.
  std::vector<std::string> gold_titles;
  for (const auto& fact : require_array(rec, "supporting_facts", line)) {
    if (!fact.is_array() || fact.empty() || !fact[0].is_string()) {
      throw ParseError("supporting_facts", line, "entry is not [title, sentence_id]");
    }
    auto t = fact[0].get<std::string>();
    if (std::find(gold_titles.begin(), gold_titles.end(), t) == gold_titles.end()) {
      gold_titles.push_back(std::move(t));
    }
  }
  if (gold_titles.size() != 2) {
    throw ValidationError(q.qid, std::to_string(gold_titles.size()) +
                                     " supporting documents; 2WikiMultihopQA records must be 2-hop");
  }

  // Evidence triples give the chain order (subject of triple k is hop k's page) when they line up.
  std::vector<std::array<std::string, 3>> triples;
  if (auto ev = rec.find("evidences"); ev != rec.end() && ev->is_array()) {
    for (const auto& t : *ev) {
      if (t.is_array() && t.size() == 3 && t[0].is_string() && t[1].is_string() && t[2].is_string()) {
        triples.push_back({t[0].get<std::string>(), t[1].get<std::string>(), t[2].get<std::string>()});
      }
    }
  }
  if (triples.size() == 2 && triples[0][0] == gold_titles[1] && triples[1][0] == gold_titles[0]) {
    std::swap(gold_titles[0], gold_titles[1]);
  }
  for (std::size_t k = 0; k < 2; ++k) {
    if (triples.size() == 2) {
      q.decomposition.push_back("What is the " + triples[k][1] + " of " + triples[k][0] + "?");
    } else {
      q.decomposition.push_back("What does the document titled " + gold_titles[k] + " state?");
    }
  }

  for (std::size_t k = 0; k < gold_titles.size(); ++k) {
    auto it = std::find_if(q.documents.begin(), q.documents.end(), [&](const Document& d) {
      return d.title == gold_titles[k] && !d.is_gold;
    });
    if (it == q.documents.end()) {
      throw ValidationError(q.qid, "supporting title '" + gold_titles[k] + "' not in context");
    }
    it->is_gold = true;
    it->hop_index = static_cast<int>(k + 1);
  }
  validate(q, kMaxTwoWikiDocuments);
  return q;
}

template <typename Convert>
std::vector<QuestionInstance> load_lines(std::istream& in, const LoadOptions& opts, Convert convert) {
  std::vector<QuestionInstance> out;
  std::string raw;
  std::size_t line = 0;
  auto skip = [&](std::string qid, std::string reason) {
    if (opts.on_skip) opts.on_skip(LoadIssue{line, std::move(qid), std::move(reason)});
  };
  auto handle = [&](const json& rec) {
    try {
      if (auto q = convert(rec, line)) out.push_back(std::move(*q));
    } catch (const ValidationError& e) {
      if (!opts.permissive) throw;
      skip(e.qid(), e.what());
    } catch (const ParseError& e) {
      if (!opts.permissive) throw;
      skip("", e.what());
    }
  };

  // Official 2Wiki files are one JSON array.
  in >> std::ws;
  if (in.peek() == '[') {
    json all;
    try {
      all = json::parse(in);
    } catch (const json::parse_error& e) {
      throw ParseError("<document>", 1, e.what());
    }
    for (const auto& rec : all) {
      ++line;
      handle(rec);
    }
    return out;
  }

  while (std::getline(in, raw)) {
    ++line;
    if (text::trim(raw).empty()) continue;
    json rec;
    try {
      rec = json::parse(raw);
    } catch (const json::parse_error& e) {
      if (!opts.permissive) throw ParseError("<record>", line, e.what());
      skip("", e.what());
      continue;
    }
    handle(rec);
  }
  return out;
}

inline std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open dataset file '" + path + "'");
  return in;
}

}  // namespace detail

inline std::vector<QuestionInstance> load_musique(std::istream& in, MusiqueSplit /*split*/,
                                                  const LoadOptions& opts = {}) {
  return detail::load_lines(in, opts, [](const nlohmann::json& rec, std::size_t line) {
    return detail::musique_from_json(rec, line);
  });
}

// Loads one split of the answerable MuSiQue set. Records flagged
// answerable=false are dropped without error.
inline std::vector<QuestionInstance> load_musique(const std::string& path, MusiqueSplit split,
                                                  const LoadOptions& opts = {}) {
  auto in = detail::open_input(path);
  return load_musique(in, split, opts);
}

// Keeps only records whose `type` equals the requested subset.
inline std::vector<QuestionInstance> load_2wiki(std::istream& in, TwoWikiSubset subset,
                                                const LoadOptions& opts = {}) {
  return detail::load_lines(in, opts, [subset](const nlohmann::json& rec, std::size_t line) {
    return detail::twowiki_from_json(rec, line, subset);
  });
}

inline std::vector<QuestionInstance> load_2wiki(const std::string& path, TwoWikiSubset subset,
                                                const LoadOptions& opts = {}) {
  auto in = detail::open_input(path);
  return load_2wiki(in, subset, opts);
}

inline std::vector<QuestionInstance> load_2wiki(const std::string& path, std::string_view subset,
                                                const LoadOptions& opts = {}) {
  return load_2wiki(path, parse_twowiki_subset(subset), opts);
}

inline DatasetStats stats(const std::vector<QuestionInstance>& instances) {
  DatasetStats s;
  s.n_instances = instances.size();
  std::size_t docs = 0;
  for (const auto& q : instances) {
    ++s.hop_histogram[q.n_hops];
    docs += q.documents.size();
  }
  if (!instances.empty()) s.mean_documents = static_cast<double>(docs) / instances.size();
  return s;
}

// Re-emits an instance in the MuSiQue record layout. Numeric doc ids are kept
// as paragraph idx; other ids fall back to the list position.
inline nlohmann::json to_musique_json(const QuestionInstance& q) {
  using nlohmann::json;
  auto idx_of = [](const Document& d, std::size_t pos) -> long long {
    try {
      std::size_t used = 0;
      long long v = std::stoll(d.doc_id, &used);
      if (used == d.doc_id.size()) return v;
    } catch (const std::exception&) {
    }
    return static_cast<long long>(pos);
  };
  json paragraphs = json::array();
  std::map<int, long long> hop_to_idx;
  for (std::size_t pos = 0; pos < q.documents.size(); ++pos) {
    const auto& d = q.documents[pos];
    const auto idx = idx_of(d, pos);
    paragraphs.push_back({{"idx", idx},
                          {"title", d.title},
                          {"paragraph_text", d.body},
                          {"is_supporting", d.is_gold}});
    if (d.hop_index) hop_to_idx[*d.hop_index] = idx;
  }
  json decomposition = json::array();
  for (std::size_t k = 0; k < q.decomposition.size(); ++k) {
    json step = {{"question", q.decomposition[k]}};
    if (auto it = hop_to_idx.find(static_cast<int>(k + 1)); it != hop_to_idx.end()) {
      step["paragraph_support_idx"] = it->second;
    }
    decomposition.push_back(std::move(step));
  }
  json aliases = json::array();
  for (std::size_t i = 1; i < q.answer_aliases.size(); ++i) aliases.push_back(q.answer_aliases[i]);
  return {{"id", q.qid},
          {"paragraphs", std::move(paragraphs)},
          {"question", q.question},
          {"question_decomposition", std::move(decomposition)},
          {"answer", q.answer},
          {"answer_aliases", std::move(aliases)},
          {"answerable", true}};
}

}  // namespace mhqa
