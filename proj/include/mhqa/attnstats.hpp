#pragma once

// Grouped attention, normalization checks and Information Contribution (IC)
// profiles over MHAD dumps.
//
//   GA(X, Y)  = 1/|X| * sum_{x in X} sum_{y in Y} attn(x, y)
//   IC_l(d)   = 1/(|A| |H|) * sum_{h in H} sum_{a in A} GA_{l,h}({a}, d)
//
// Prediction tokens are never grouped: each one is its own unit.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "mhqa/attention_dump.hpp"
#include "mhqa/blockmap.hpp"
#include "mhqa/errors.hpp"
#include "mhqa/permute.hpp"
#include "mhqa/text.hpp"

namespace mhqa {

namespace detail {

inline std::vector<std::size_t> as_set(std::span<const std::size_t> tokens) {
  std::vector<std::size_t> s(tokens.begin(), tokens.end());
  std::sort(s.begin(), s.end());
  s.erase(std::unique(s.begin(), s.end()), s.end());
  return s;
}

inline void check_layer_head(const AttentionDump& dump, std::size_t layer, std::size_t head) {
  if (layer >= dump.n_layers() || head >= dump.n_heads()) {
    throw DomainError("layer/head (" + std::to_string(layer) + ", " + std::to_string(head) +
                      ") outside dump shape (" + std::to_string(dump.n_layers()) + ", " +
                      std::to_string(dump.n_heads()) + ")");
  }
}

}  // namespace detail

inline std::vector<std::size_t> tokens_of(const TokenBlock& b) {
  std::vector<std::size_t> out;
  for (auto t = b.begin; t < b.end; ++t) out.push_back(t);
  return out;
}

// GA between explicit token sets. Sets are deduplicated, so order and repeats
// do not matter.
inline double grouped_attention(const AttentionDump& dump, std::span<const std::size_t> x_tokens,
                                std::span<const std::size_t> y_tokens, std::size_t layer, std::size_t head) {
  detail::check_layer_head(dump, layer, head);
  const auto xs = detail::as_set(x_tokens);
  if (xs.empty()) throw DomainError("grouped attention needs a non-empty source set X");
  const auto ys = detail::as_set(y_tokens);
  if (!ys.empty() && ys.back() >= dump.seq_len()) {
    throw DomainError("target token " + std::to_string(ys.back()) + " outside sequence");
  }
  double total = 0.0;
  for (auto x : xs) {
    const auto row = dump.row_for_token(layer, head, x);
    for (auto y : ys) total += row[y];
  }
  return total / static_cast<double>(xs.size());
}

inline double grouped_attention(const AttentionDump& dump, const BlockMap& map, std::span<const std::size_t> x_tokens,
                                std::string_view y_block, std::size_t layer, std::size_t head) {
  const auto ys = tokens_of(map.block(y_block));
  return grouped_attention(dump, x_tokens, ys, layer, head);
}

inline double grouped_attention(const AttentionDump& dump, const BlockMap& map, std::string_view x_block,
                                std::string_view y_block, std::size_t layer, std::size_t head) {
  const auto xs = tokens_of(map.block(x_block));
  return grouped_attention(dump, map, xs, y_block, layer, head);
}

// Target partition used for normalization: every prompt block plus each
// prediction token as a singleton. Throws CoverageError if it does not tile
// [0, seq_len).
inline std::vector<std::vector<std::size_t>> target_partition(const BlockMap& map, std::size_t seq_len,
                                                              std::vector<std::string>* names = nullptr) {
  std::vector<int> cover(seq_len, 0);
  std::vector<std::size_t> overlaps;
  std::vector<std::vector<std::size_t>> parts;
  auto mark = [&](std::size_t t) {
    if (t >= seq_len) {
      overlaps.push_back(t);
      return;
    }
    if (++cover[t] == 2) overlaps.push_back(t);
  };
  for (const auto& b : map.blocks) {
    parts.push_back(tokens_of(b));
    if (names) names->push_back(b.name);
    for (auto t = b.begin; t < b.end; ++t) mark(t);
  }
  for (auto t : map.pred_token_indices) {
    parts.push_back({t});
    if (names) names->push_back("pred@" + std::to_string(t));
    mark(t);
  }
  std::vector<TokenGap> gaps;
  for (std::size_t t = 0; t < seq_len; ++t) {
    if (cover[t] != 0) continue;
    if (!gaps.empty() && gaps.back().end == t) {
      gaps.back().end = t + 1;
    } else {
      gaps.push_back({t, t + 1});
    }
  }
  if (!gaps.empty() || !overlaps.empty()) throw CoverageError(std::move(gaps), std::move(overlaps));
  return parts;
}

struct NormalizationEntry {
  std::string unit;  // block name, or "pred@<t>" for a prediction token
  double sum = 0.0;
  double deviation = 0.0;
  bool flagged = false;
};

struct NormalizationReport {
  std::size_t layer = 0;
  std::size_t head = 0;
  double tolerance = 0.0;
  std::vector<NormalizationEntry> entries;

  double max_deviation() const {
    double m = 0.0;
    for (const auto& e : entries) m = std::max(m, e.deviation);
    return m;
  }
  std::size_t n_flagged() const {
    return static_cast<std::size_t>(std::count_if(entries.begin(), entries.end(),
                                                  [](const NormalizationEntry& e) { return e.flagged; }));
  }
};

// Sum over the target partition of GA(X, Y) for every source unit X whose
// rows are all stored: whole blocks (Full mode) and single prediction tokens.
inline NormalizationReport check_normalization(const AttentionDump& dump, const BlockMap& map, std::size_t layer,
                                               std::size_t head, double tolerance = 1e-3) {
  detail::check_layer_head(dump, layer, head);
  std::vector<std::string> target_names;
  const auto targets = target_partition(map, dump.seq_len(), &target_names);

  NormalizationReport report{layer, head, tolerance, {}};
  auto add = [&](std::string unit, const std::vector<std::size_t>& xs) {
    if (xs.empty()) return;
    for (auto x : xs) {
      if (!dump.stored_row(x)) return;
    }
    double sum = 0.0;
    for (const auto& y : targets) sum += grouped_attention(dump, xs, y, layer, head);
    const double dev = std::abs(sum - 1.0);
    report.entries.push_back({std::move(unit), sum, dev, dev > tolerance});
  };
  for (std::size_t i = 0; i < targets.size(); ++i) add(target_names[i], targets[i]);
  return report;
}

// IC values for one prompt: ic[layer * n_docs + doc].
struct ICProfile {
  std::size_t n_layers = 0;
  std::size_t n_docs = 0;
  std::vector<std::string> doc_ids;
  std::vector<double> ic;
  double peak_ic_raw = 0.0;
  double peak_ic_norm = 0.0;  // peak_ic_raw * n_docs
  std::size_t argmax_layer = 0;
  std::size_t argmax_doc = 0;

  double at(std::size_t layer, std::size_t doc) const { return ic[layer * n_docs + doc]; }

  bool operator==(const ICProfile&) const = default;
};

inline void finalize_peak(ICProfile& p) {
  p.peak_ic_raw = 0.0;
  p.argmax_layer = p.argmax_doc = 0;
  bool first = true;
  for (std::size_t l = 0; l < p.n_layers; ++l) {
    for (std::size_t d = 0; d < p.n_docs; ++d) {
      if (first || p.at(l, d) > p.peak_ic_raw) {
        p.peak_ic_raw = p.at(l, d);
        p.argmax_layer = l;
        p.argmax_doc = d;
        first = false;
      }
    }
  }
  p.peak_ic_norm = p.peak_ic_raw * static_cast<double>(p.n_docs);
}

// One pass over each answer row, bucketing keys by owning document.
inline ICProfile ic_profile(const AttentionDump& dump, const BlockMap& map) {
  const auto answers = detail::as_set(map.answer_token_indices);
  if (answers.empty()) throw DomainError("IC needs at least one answer token");
  std::vector<std::size_t> stored;
  for (auto a : answers) {
    auto r = dump.stored_row(a);
    if (!r) throw MissingRowError(a);
    stored.push_back(*r);
  }
  const auto docs = map.doc_blocks();
  std::vector<long> owner(dump.seq_len(), -1);
  for (std::size_t d = 0; d < docs.size(); ++d) {
    if (docs[d]->end > dump.seq_len()) throw DomainError("doc block '" + docs[d]->name + "' exceeds seq_len");
    for (auto t = docs[d]->begin; t < docs[d]->end; ++t) owner[t] = static_cast<long>(d);
  }

  ICProfile p;
  p.n_layers = dump.n_layers();
  p.n_docs = docs.size();
  p.doc_ids = map.doc_ids;
  p.ic.assign(p.n_layers * p.n_docs, 0.0);
  const double scale = 1.0 / (static_cast<double>(answers.size()) * dump.n_heads());
  std::vector<double> acc(p.n_docs);
  for (std::size_t l = 0; l < p.n_layers; ++l) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t h = 0; h < dump.n_heads(); ++h) {
      for (auto r : stored) {
        const auto row = dump.row(l, h, r);
        for (std::size_t k = 0; k < row.size(); ++k) {
          if (owner[k] >= 0) acc[static_cast<std::size_t>(owner[k])] += row[k];
        }
      }
    }
    for (std::size_t d = 0; d < p.n_docs; ++d) p.ic[l * p.n_docs + d] = acc[d] * scale;
  }
  finalize_peak(p);
  return p;
}

inline nlohmann::json to_json(const ICProfile& p) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t l = 0; l < p.n_layers; ++l) {
    rows.push_back(std::vector<double>(p.ic.begin() + static_cast<long>(l * p.n_docs),
                                       p.ic.begin() + static_cast<long>((l + 1) * p.n_docs)));
  }
  return {{"n_layers", p.n_layers},
          {"doc_ids", p.doc_ids},
          {"ic", std::move(rows)},
          {"peak_ic_raw", p.peak_ic_raw},
          {"peak_ic_norm", p.peak_ic_norm},
          {"argmax", {{"layer", p.argmax_layer}, {"doc", p.argmax_doc}}}};
}

inline ICProfile profile_from_json(const nlohmann::json& j) {
  try {
    ICProfile p;
    p.doc_ids = j.at("doc_ids").get<std::vector<std::string>>();
    p.n_docs = p.doc_ids.size();
    const auto& rows = j.at("ic");
    p.n_layers = rows.size();
    for (const auto& r : rows) {
      auto v = r.get<std::vector<double>>();
      if (v.size() != p.n_docs) throw FormatError("IC row width differs from doc count");
      p.ic.insert(p.ic.end(), v.begin(), v.end());
    }
    finalize_peak(p);
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("profile record: ") + e.what());
  }
}

struct ICCurveRow {
  std::size_t layer;
  std::size_t doc_index;
  std::string doc_id;
  double ic;
};

// Flat (layer, doc) rows for plotting, in layer-major order.
inline std::vector<ICCurveRow> ic_curve_rows(const ICProfile& p) {
  std::vector<ICCurveRow> rows;
  for (std::size_t l = 0; l < p.n_layers; ++l) {
    for (std::size_t d = 0; d < p.n_docs; ++d) rows.push_back({l, d, p.doc_ids[d], p.at(l, d)});
  }
  return rows;
}

// Locates the answer inside generated tokens. `token_texts[i]` is the surface
// text of prediction token `pred_indices[i]` including any leading
// whitespace. The longest common substring of the normalized answer and the
// normalized generation wins, later occurrences on ties; matches shorter than
// `min_fraction` of the answer are rejected (empty result).
inline std::vector<std::size_t> locate_answer_tokens(const std::vector<std::string>& token_texts,
                                                     const std::vector<std::size_t>& pred_indices,
                                                     std::string_view answer, double min_fraction = 0.5) {
  if (token_texts.size() != pred_indices.size()) {
    throw UsageError("token text count differs from prediction index count");
  }
  const auto target = text::normalize_answer(answer);
  if (target.empty()) return {};

  // Normalized generation with a per-character owning token.
  std::string gen;
  std::vector<std::size_t> owner;
  bool pending_space = false;
  for (std::size_t i = 0; i < token_texts.size(); ++i) {
    for (char c : token_texts[i]) {
      if (text::is_space(c)) {
        pending_space = !gen.empty();
        continue;
      }
      if (text::is_punct(c)) continue;
      if (pending_space) {
        gen.push_back(' ');
        owner.push_back(i);
        pending_space = false;
      }
      gen.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
      owner.push_back(i);
    }
  }

  std::size_t best_len = 0;
  std::size_t best_end = 0;
  std::vector<std::size_t> prev(target.size() + 1, 0), cur(target.size() + 1, 0);
  for (std::size_t i = 1; i <= gen.size(); ++i) {
    for (std::size_t j = 1; j <= target.size(); ++j) {
      cur[j] = gen[i - 1] == target[j - 1] ? prev[j - 1] + 1 : 0;
      if (cur[j] > 0 && cur[j] >= best_len) {
        best_len = cur[j];
        best_end = i;
      }
    }
    std::swap(prev, cur);
  }
  std::size_t begin = best_end - best_len;
  std::size_t end = best_end;
  while (begin < end && gen[begin] == ' ') ++begin;
  while (end > begin && gen[end - 1] == ' ') --end;
  const auto needed = static_cast<std::size_t>(std::ceil(min_fraction * static_cast<double>(target.size())));
  if (end == begin || end - begin < std::max<std::size_t>(needed, 1)) return {};

  std::vector<std::size_t> out;
  for (auto k = begin; k < end; ++k) {
    const auto tok = pred_indices[owner[k]];
    if (out.empty() || out.back() != tok) out.push_back(tok);
  }
  return out;
}

// Mean per-layer IC of each gold hop and of the strongest noise document.
struct LayerCurves {
  std::size_t n_samples = 0;
  std::vector<std::vector<double>> gold_by_hop;  // [hop-1][layer]
  std::vector<double> noise_max;                 // [layer]
};

struct PositionSample {
  ICProfile profile;
  PermutationPlan plan;
};

inline LayerCurves mean_layer_curves(std::span<const PositionSample> samples) {
  LayerCurves c;
  std::vector<std::vector<std::size_t>> gold_counts;
  std::vector<std::size_t> noise_counts;
  for (const auto& s : samples) {
    const auto& p = s.profile;
    ++c.n_samples;
    if (c.noise_max.size() < p.n_layers) {
      c.noise_max.resize(p.n_layers, 0.0);
      noise_counts.resize(p.n_layers, 0);
    }
    if (c.gold_by_hop.size() < s.plan.gold_chain.size()) {
      c.gold_by_hop.resize(s.plan.gold_chain.size());
      gold_counts.resize(s.plan.gold_chain.size());
    }
    for (std::size_t l = 0; l < p.n_layers; ++l) {
      std::optional<double> noise;
      for (std::size_t d = 0; d < p.n_docs; ++d) {
        const auto& id = p.doc_ids[d];
        auto hop = std::find(s.plan.gold_chain.begin(), s.plan.gold_chain.end(), id);
        if (hop == s.plan.gold_chain.end()) {
          noise = std::max(noise.value_or(p.at(l, d)), p.at(l, d));
          continue;
        }
        const auto k = static_cast<std::size_t>(hop - s.plan.gold_chain.begin());
        if (c.gold_by_hop[k].size() < p.n_layers) {
          c.gold_by_hop[k].resize(p.n_layers, 0.0);
          gold_counts[k].resize(p.n_layers, 0);
        }
        c.gold_by_hop[k][l] += p.at(l, d);
        ++gold_counts[k][l];
      }
      if (noise) {
        c.noise_max[l] += *noise;
        ++noise_counts[l];
      }
    }
  }
  for (std::size_t k = 0; k < c.gold_by_hop.size(); ++k) {
    for (std::size_t l = 0; l < c.gold_by_hop[k].size(); ++l) {
      if (gold_counts[k][l]) c.gold_by_hop[k][l] /= static_cast<double>(gold_counts[k][l]);
    }
  }
  for (std::size_t l = 0; l < c.noise_max.size(); ++l) {
    if (noise_counts[l]) c.noise_max[l] /= static_cast<double>(noise_counts[l]);
  }
  return c;
}

struct PositionSummary {
  std::size_t n_profiles = 0;
  std::map<std::size_t, std::size_t> argmax_position;  // context position -> count
  std::map<std::size_t, std::size_t> argmax_from_end;  // 0 = last document
  // Per question, the plan with the highest peak_ic_norm: where its last-hop document sits.
  std::map<std::size_t, std::size_t> best_last_hop_position;
  std::map<std::size_t, std::size_t> best_last_hop_from_end;
  LayerCurves curves;

  static double mass(const std::map<std::size_t, std::size_t>& hist, std::size_t key) {
    std::size_t total = 0;
    for (const auto& [k, v] : hist) total += v;
    auto it = hist.find(key);
    return total == 0 || it == hist.end() ? 0.0 : static_cast<double>(it->second) / total;
  }
};

inline PositionSummary position_stats(std::span<const PositionSample> samples) {
  PositionSummary s;
  if (samples.empty()) return s;
  std::map<std::string, const PositionSample*> best;
  for (const auto& smp : samples) {
    const auto& p = smp.profile;
    ++s.n_profiles;
    if (p.n_docs > 0) {
      ++s.argmax_position[p.argmax_doc];
      ++s.argmax_from_end[p.n_docs - 1 - p.argmax_doc];
    }
    auto [it, inserted] = best.try_emplace(smp.plan.qid, &smp);
    if (!inserted && p.peak_ic_norm > it->second->profile.peak_ic_norm) it->second = &smp;
  }
  for (const auto& [qid, smp] : best) {
    if (smp->plan.gold_chain.empty()) continue;
    const auto pos = smp->plan.position_of(smp->plan.gold_chain.back());
    if (pos < 0) continue;
    ++s.best_last_hop_position[static_cast<std::size_t>(pos)];
    ++s.best_last_hop_from_end[smp->plan.order.size() - 1 - static_cast<std::size_t>(pos)];
  }
  s.curves = mean_layer_curves(samples);
  return s;
}

}  // namespace mhqa
