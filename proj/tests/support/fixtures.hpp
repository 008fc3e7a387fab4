#pragma once

// Test-only builders and independent oracles. Nothing here calls the code
// paths it is used to check.

#include <cmath>
#include <cstdint>
#include <sstream>
#include <string>
#include <vector>

#include "mhqa/mhqa.hpp"

namespace mhqa::fixture {

// Builds an instance from a layout such as "n g2 n g1 g3": g<k> is the gold
// document of hop k, n a noise document. Doc ids are the tokens themselves,
// with noise numbered n1, n2, ... in order of appearance.
inline QuestionInstance make_instance(const std::string& layout, const std::string& qid = "q") {
  QuestionInstance q;
  q.qid = qid;
  q.question = "Who is the question about?";
  q.answer = "Answer Person";
  q.answer_aliases = {q.answer};
  std::istringstream in(layout);
  std::string tok;
  int noise = 0;
  while (in >> tok) {
    Document d;
    if (tok[0] == 'g') {
      d.doc_id = tok;
      d.is_gold = true;
      d.hop_index = std::stoi(tok.substr(1));
      ++q.n_hops;
    } else {
      d.doc_id = "n" + std::to_string(++noise);
    }
    d.title = "Title " + d.doc_id;
    d.body = "Body text of " + d.doc_id + ".";
    q.documents.push_back(std::move(d));
  }
  for (int k = 1; k <= q.n_hops; ++k) q.decomposition.push_back("Sub-question " + std::to_string(k) + "?");
  return q;
}

// Random valid instance: 2-4 hops, up to 20 documents, gold at random slots.
inline QuestionInstance random_instance(Rng& rng, const std::string& qid) {
  const int hops = 2 + static_cast<int>(rng.below(3));
  const auto noise = static_cast<std::size_t>(rng.below(21 - static_cast<std::uint64_t>(hops)));
  std::vector<std::string> slots;
  for (int k = 1; k <= hops; ++k) slots.push_back("g" + std::to_string(k));
  for (std::size_t k = 0; k < noise; ++k) slots.push_back("n");
  rng.shuffle(std::span<std::string>(slots));
  std::string layout;
  for (const auto& s : slots) layout += s + " ";
  return make_instance(layout, qid);
}

struct DumpFixture {
  AttentionDump dump;
  BlockMap map;
};

// Random row-stochastic dump with a random block partition of the prompt and
// `n_pred` trailing prediction tokens whose rows are stored.
inline DumpFixture random_dump(Rng& rng, std::size_t n_layers, std::size_t n_heads, std::size_t seq_len,
                               std::size_t n_pred, DumpMode mode = DumpMode::AnswerRows) {
  DumpFixture f;
  const auto prompt_len = seq_len - n_pred;
  // instruction, random doc blocks, question
  std::size_t cursor = 0;
  auto take = [&](std::string name, std::size_t len) {
    f.map.blocks.push_back({std::move(name), cursor, cursor + len});
    cursor += len;
  };
  take("instruction", 1);
  std::size_t doc = 0;
  while (cursor + 1 < prompt_len) {
    const auto room = prompt_len - 1 - cursor;
    const auto len = 1 + static_cast<std::size_t>(rng.below(std::min<std::size_t>(room, 6)));
    take("doc_" + std::to_string(++doc), len);
    f.map.doc_ids.push_back("d" + std::to_string(doc));
  }
  take("question", prompt_len - cursor);
  for (std::size_t t = prompt_len; t < seq_len; ++t) f.map.pred_token_indices.push_back(t);
  for (auto t : f.map.pred_token_indices) {
    if (rng.below(2) == 0 || f.map.answer_token_indices.empty()) f.map.answer_token_indices.push_back(t);
  }

  std::vector<std::uint32_t> rows;
  if (mode == DumpMode::Full) {
    for (std::size_t t = 0; t < seq_len; ++t) rows.push_back(static_cast<std::uint32_t>(t));
  } else {
    for (auto t : f.map.pred_token_indices) rows.push_back(static_cast<std::uint32_t>(t));
  }
  std::vector<float> values;
  values.reserve(n_layers * n_heads * rows.size() * seq_len);
  for (std::size_t l = 0; l < n_layers; ++l) {
    for (std::size_t h = 0; h < n_heads; ++h) {
      for (auto r : rows) {
        // causal support: keys 0..r
        std::vector<double> w(seq_len, 0.0);
        double z = 0.0;
        for (std::size_t k = 0; k <= r; ++k) {
          w[k] = std::exp(2.0 * rng.normal());
          z += w[k];
        }
        for (auto x : w) values.push_back(static_cast<float>(x / z));
      }
    }
  }
  f.dump = AttentionDump(static_cast<std::uint32_t>(n_layers), static_cast<std::uint32_t>(n_heads),
                         static_cast<std::uint32_t>(seq_len), mode, std::move(rows), std::move(values));
  return f;
}

// Raw attention value read straight from the flat value array.
inline double naive_attention(const AttentionDump& d, std::size_t layer, std::size_t head, std::size_t query,
                              std::size_t key) {
  std::size_t r = 0;
  while (r < d.row_positions().size() && d.row_positions()[r] != query) ++r;
  if (r == d.row_positions().size()) throw std::logic_error("oracle: row not stored");
  const std::size_t idx = ((layer * d.n_heads() + head) * d.row_positions().size() + r) * d.seq_len() + key;
  return static_cast<double>(d.values()[idx]);
}

inline double naive_grouped_attention(const AttentionDump& d, const std::vector<std::size_t>& xs,
                                      const std::vector<std::size_t>& ys, std::size_t layer, std::size_t head) {
  double s = 0.0;
  for (auto x : xs) {
    for (auto y : ys) s += naive_attention(d, layer, head, x, y);
  }
  return s / static_cast<double>(xs.size());
}

// IC by the definition: triple loop over heads, answer tokens, document tokens.
inline std::vector<double> naive_ic(const AttentionDump& d, const BlockMap& m) {
  std::vector<const TokenBlock*> docs;
  for (const auto& b : m.blocks) {
    if (b.name.rfind("doc_", 0) == 0) docs.push_back(&b);
  }
  std::vector<double> ic(d.n_layers() * docs.size(), 0.0);
  const auto& A = m.answer_token_indices;
  for (std::size_t l = 0; l < d.n_layers(); ++l) {
    for (std::size_t k = 0; k < docs.size(); ++k) {
      double s = 0.0;
      for (std::size_t h = 0; h < d.n_heads(); ++h) {
        for (auto a : A) {
          for (auto t = docs[k]->begin; t < docs[k]->end; ++t) s += naive_attention(d, l, h, a, t);
        }
      }
      ic[l * docs.size() + k] = s / (static_cast<double>(A.size()) * d.n_heads());
    }
  }
  return ic;
}

inline double relative_error(double got, double want) {
  const double scale = std::max(std::abs(want), 1e-300);
  return std::abs(got - want) / scale;
}

// Definitional Spearman for tie-free data: 1 - 6 sum d^2 / (n (n^2 - 1)).
inline double spearman_definition(const std::vector<double>& x, const std::vector<double>& y) {
  const auto n = x.size();
  auto rank = [&](const std::vector<double>& v, std::size_t i) {
    std::size_t r = 1;
    for (std::size_t j = 0; j < n; ++j) r += v[j] < v[i] ? 1 : 0;
    return static_cast<double>(r);
  };
  double d2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = rank(x, i) - rank(y, i);
    d2 += d * d;
  }
  const double nn = static_cast<double>(n);
  return 1.0 - 6.0 * d2 / (nn * (nn * nn - 1.0));
}

// Definitional Kendall tau for tie-free data: (concordant - discordant) / C(n, 2).
inline double kendall_definition(const std::vector<double>& x, const std::vector<double>& y) {
  const auto n = x.size();
  long c = 0, dsc = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      ((x[i] - x[j]) * (y[i] - y[j]) > 0 ? c : dsc) += 1;
    }
  }
  return static_cast<double>(c - dsc) / (static_cast<double>(n * (n - 1)) / 2.0);
}

// Planted rerank pool: each candidate is correct with a per-question
// probability; peaks ~ N(2.22, 0.4) when correct, N(1.72, 0.4) otherwise.
inline std::vector<Candidate> synthetic_pool(std::uint64_t seed, std::size_t n_questions, std::size_t k,
                                             double correct_mean = 2.22, double incorrect_mean = 1.72,
                                             double stddev = 0.4) {
  Rng rng(seed);
  std::vector<Candidate> out;
  out.reserve(n_questions * k);
  for (std::size_t q = 0; q < n_questions; ++q) {
    const std::string qid = "syn" + std::to_string(q);
    const double p_correct = 0.6 * rng.uniform();
    for (std::size_t s = 0; s < k; ++s) {
      Candidate c;
      c.qid = qid;
      c.sample_index = s;
      c.plan.qid = qid;
      c.plan.strategy = Strategy::random(s);
      c.record.qid = qid;
      c.record.strategy = c.plan.strategy;
      c.record.correct = rng.uniform() < p_correct;
      const double pk = rng.normal(c.record.correct ? correct_mean : incorrect_mean, stddev);
      c.profile.n_layers = 1;
      c.profile.n_docs = 20;
      c.profile.peak_ic_norm = pk;
      c.profile.peak_ic_raw = pk / 20.0;
      out.push_back(std::move(c));
    }
  }
  return out;
}

}  // namespace mhqa::fixture
