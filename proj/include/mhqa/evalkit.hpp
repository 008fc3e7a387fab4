#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iomanip>
#include <map>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mhqa/corpus.hpp"
#include "mhqa/errors.hpp"
#include "mhqa/permute.hpp"
#include "mhqa/text.hpp"

namespace mhqa {

enum class AnswerMode { AnswerOnly, CoT, Finetuned };
enum class ScoreMethod { BoxedFirst, BoxedLast, LastLineContainment, ExactMatch };

inline std::string_view to_string(AnswerMode m) {
  switch (m) {
    case AnswerMode::AnswerOnly: return "answer_only";
    case AnswerMode::CoT: return "cot";
    case AnswerMode::Finetuned: return "finetuned";
  }
  return "?";
}

inline AnswerMode parse_answer_mode(std::string_view s) {
  if (s == "answer_only" || s == "ao") return AnswerMode::AnswerOnly;
  if (s == "cot") return AnswerMode::CoT;
  if (s == "finetuned" || s == "ft") return AnswerMode::Finetuned;
  throw UsageError("unknown answer mode '" + std::string(s) + "' (expected answer_only|cot|finetuned)");
}

inline std::string_view to_string(ScoreMethod m) {
  switch (m) {
    case ScoreMethod::BoxedFirst: return "boxed_first";
    case ScoreMethod::BoxedLast: return "boxed_last";
    case ScoreMethod::LastLineContainment: return "last_line_containment";
    case ScoreMethod::ExactMatch: return "exact_match";
  }
  return "?";
}

namespace detail {

inline constexpr std::string_view kBoxed = "\\boxed{";

// Content of a brace group whose opening '{' ends just before `from`, or
// nullopt if it never closes.
inline std::optional<std::string_view> balanced_group(std::string_view s, std::size_t from) {
  int depth = 1;
  for (std::size_t i = from; i < s.size(); ++i) {
    if (s[i] == '{') {
      ++depth;
    } else if (s[i] == '}' && --depth == 0) {
      return s.substr(from, i - from);
    }
  }
  return std::nullopt;
}

}  // namespace detail

// AnswerOnly: the generation starts inside a forced "\boxed{", so the answer
// runs to the matching '}' (first line if it never closes). CoT: last closed
// \boxed{...}. Finetuned: the whole trimmed generation.
inline std::optional<std::string> extract_answer(std::string_view generation, AnswerMode mode) {
  auto nonempty = [](std::string_view s) -> std::optional<std::string> {
    s = text::trim(s);
    if (s.empty()) return std::nullopt;
    return std::string(s);
  };
  switch (mode) {
    case AnswerMode::Finetuned:
      return nonempty(generation);
    case AnswerMode::AnswerOnly: {
      auto g = generation;
      if (text::trim(g).starts_with(detail::kBoxed)) {
        g = text::trim(g).substr(detail::kBoxed.size());
      }
      if (auto inner = detail::balanced_group(g, 0)) return nonempty(*inner);
      const auto nl = g.find('\n');
      return nonempty(g.substr(0, nl));
    }
    case AnswerMode::CoT: {
      std::optional<std::string_view> last;
      for (auto pos = generation.find(detail::kBoxed); pos != std::string_view::npos;
           pos = generation.find(detail::kBoxed, pos + 1)) {
        if (auto inner = detail::balanced_group(generation, pos + detail::kBoxed.size())) last = inner;
      }
      if (!last) return std::nullopt;
      return nonempty(*last);
    }
  }
  return std::nullopt;
}

struct EvalRecord {
  std::string qid;
  Strategy strategy;
  int n_hops = 0;
  std::string raw_generation;
  std::optional<std::string> extracted;
  ScoreMethod method = ScoreMethod::ExactMatch;
  bool correct = false;
};

struct ScoreOptions {
  bool use_aliases = false;
};

inline EvalRecord score(std::string_view generation, std::string_view reference,
                        std::span<const std::string> aliases, AnswerMode mode, const ScoreOptions& opts = {}) {
  if (text::normalize_answer(reference).empty()) throw DomainError("reference answer is empty");
  std::vector<std::string> refs{text::normalize_answer(reference)};
  if (opts.use_aliases) {
    for (const auto& a : aliases) {
      auto n = text::normalize_answer(a);
      if (!n.empty()) refs.push_back(std::move(n));
    }
  }
  EvalRecord r;
  r.raw_generation = std::string(generation);
  r.extracted = extract_answer(generation, mode);
  auto exact = [&](const std::string& s) {
    const auto n = text::normalize_answer(s);
    return std::find(refs.begin(), refs.end(), n) != refs.end();
  };
  if (mode == AnswerMode::Finetuned) {
    r.method = ScoreMethod::ExactMatch;
    r.correct = r.extracted && exact(*r.extracted);
    return r;
  }
  if (r.extracted) {
    r.method = mode == AnswerMode::AnswerOnly ? ScoreMethod::BoxedFirst : ScoreMethod::BoxedLast;
    r.correct = exact(*r.extracted);
    return r;
  }
  r.method = ScoreMethod::LastLineContainment;
  const auto line = text::normalize_answer(text::last_nonempty_line(generation));
  r.correct = std::any_of(refs.begin(), refs.end(),
                          [&](const std::string& ref) { return line.find(ref) != std::string::npos; });
  return r;
}

inline EvalRecord score(const QuestionInstance& q, const Strategy& strategy, std::string_view generation,
                        AnswerMode mode, const ScoreOptions& opts = {}) {
  auto r = score(generation, q.answer, q.answer_aliases, mode, opts);
  r.qid = q.qid;
  r.strategy = strategy;
  r.n_hops = q.n_hops;
  return r;
}

inline nlohmann::json to_json(const EvalRecord& r) {
  nlohmann::json j = {{"qid", r.qid},
                      {"strategy", to_string(r.strategy)},
                      {"n_hops", r.n_hops},
                      {"method", to_string(r.method)},
                      {"correct", r.correct}};
  j["extracted"] = r.extracted ? nlohmann::json(*r.extracted) : nlohmann::json(nullptr);
  return j;
}

struct Tally {
  std::size_t correct = 0;
  std::size_t total = 0;

  double accuracy() const { return total == 0 ? 0.0 : 100.0 * static_cast<double>(correct) / total; }
};

struct ResultsTable {
  std::map<Strategy, Tally> overall;
  std::map<Strategy, std::map<int, Tally>> by_hops;

  bool has(const Strategy& s) const { return overall.count(s) != 0; }

  double accuracy(const Strategy& s) const {
    auto it = overall.find(s);
    if (it == overall.end()) throw UsageError("no records for strategy " + to_string(s));
    return it->second.accuracy();
  }

  // Accuracy(s) - Accuracy(original), in points; nullopt if either is missing.
  std::optional<double> delta(const Strategy& s) const {
    if (!has(s) || !has(Strategy::original())) return std::nullopt;
    return accuracy(s) - accuracy(Strategy::original());
  }
  std::optional<double> delta_forward() const { return delta(Strategy::forward()); }
  std::optional<double> delta_backward() const { return delta(Strategy::backward()); }

  // (gap, accuracy) for every forward_gap strategy, ascending gap.
  std::vector<std::pair<std::uint64_t, double>> gap_sweep() const {
    std::vector<std::pair<std::uint64_t, double>> out;
    for (const auto& [s, t] : overall) {
      if (s.kind == Strategy::Kind::ForwardGap) out.emplace_back(s.param, t.accuracy());
    }
    return out;
  }
};

inline ResultsTable aggregate(std::span<const EvalRecord> records) {
  ResultsTable t;
  for (const auto& r : records) {
    auto& all = t.overall[r.strategy];
    auto& hop = t.by_hops[r.strategy][r.n_hops];
    ++all.total;
    ++hop.total;
    if (r.correct) {
      ++all.correct;
      ++hop.correct;
    }
  }
  return t;
}

// Fixed-width text rendering: one row per strategy, per-hop columns, deltas vs original.
inline std::string format_table(const ResultsTable& t) {
  std::vector<int> hops;
  for (const auto& [s, m] : t.by_hops) {
    for (const auto& [h, _] : m) {
      if (std::find(hops.begin(), hops.end(), h) == hops.end()) hops.push_back(h);
    }
  }
  std::sort(hops.begin(), hops.end());
  std::ostringstream os;
  os << std::fixed << std::setprecision(2);
  os << std::left << std::setw(18) << "strategy" << std::right << std::setw(8) << "n" << std::setw(9) << "acc"
     << std::setw(9) << "delta";
  for (int h : hops) os << std::setw(9) << (std::to_string(h) + "-hop");
  os << '\n';
  for (const auto& [s, tally] : t.overall) {
    os << std::left << std::setw(18) << to_string(s) << std::right << std::setw(8) << tally.total << std::setw(9)
       << tally.accuracy();
    if (auto d = t.delta(s); d && s != Strategy::original()) {
      os << std::setw(9) << std::showpos << *d << std::noshowpos;
    } else {
      os << std::setw(9) << "-";
    }
    for (int h : hops) {
      const auto& m = t.by_hops.at(s);
      auto it = m.find(h);
      if (it == m.end()) {
        os << std::setw(9) << "-";
      } else {
        os << std::setw(9) << it->second.accuracy();
      }
    }
    os << '\n';
  }
  return os.str();
}

// One structured row per strategy.
inline std::vector<nlohmann::json> table_rows(const ResultsTable& t) {
  std::vector<nlohmann::json> rows;
  for (const auto& [s, tally] : t.overall) {
    nlohmann::json per_hop = nlohmann::json::object();
    for (const auto& [h, ht] : t.by_hops.at(s)) {
      per_hop[std::to_string(h)] = {{"n", ht.total}, {"correct", ht.correct}, {"accuracy", ht.accuracy()}};
    }
    nlohmann::json row = {{"strategy", to_string(s)},
                          {"n", tally.total},
                          {"correct", tally.correct},
                          {"accuracy", tally.accuracy()},
                          {"per_hop", std::move(per_hop)}};
    auto d = t.delta(s);
    row["delta_vs_original"] = d ? nlohmann::json(*d) : nlohmann::json(nullptr);
    rows.push_back(std::move(row));
  }
  return rows;
}

// Average ranks (1-based), ties share the mean of their positions.
inline std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[idx[k]] = r;
    i = j + 1;
  }
  return ranks;
}

// Spearman's rho as the Pearson correlation of average ranks. nullopt when
// undefined (n < 2 or a constant input).
inline std::optional<double> spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw UsageError("spearman: inputs differ in length");
  const auto n = x.size();
  if (n < 2) return std::nullopt;
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double mean = (static_cast<double>(n) + 1.0) / 2.0;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    sxy += (rx[i] - mean) * (ry[i] - mean);
    sxx += (rx[i] - mean) * (rx[i] - mean);
    syy += (ry[i] - mean) * (ry[i] - mean);
  }
  if (sxx == 0.0 || syy == 0.0) return std::nullopt;
  return sxy / std::sqrt(sxx * syy);
}

// Kendall's tau-b. nullopt when undefined.
inline std::optional<double> kendall_tau_b(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw UsageError("kendall: inputs differ in length");
  const auto n = x.size();
  if (n < 2) return std::nullopt;
  long long concordant_minus_discordant = 0;
  long long n0 = 0, tx = 0, ty = 0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      ++n0;
      const double dx = x[i] - x[j];
      const double dy = y[i] - y[j];
      if (dx == 0.0) ++tx;
      if (dy == 0.0) ++ty;
      if (dx == 0.0 || dy == 0.0) continue;
      concordant_minus_discordant += (dx > 0) == (dy > 0) ? 1 : -1;
    }
  }
  const double denom = std::sqrt(static_cast<double>(n0 - tx) * static_cast<double>(n0 - ty));
  if (denom == 0.0) return std::nullopt;
  return static_cast<double>(concordant_minus_discordant) / denom;
}

struct RankCorrelation {
  double mean_spearman = 0.0;
  double mean_kendall = 0.0;
  std::size_t n_used = 0;
  std::size_t n_skipped = 0;  // length < 2 or undefined correlation
};

using OrderPair = std::pair<std::vector<double>, std::vector<double>>;

inline RankCorrelation rank_correlation(std::span<const OrderPair> orders) {
  RankCorrelation rc;
  double sum_rho = 0.0, sum_tau = 0.0;
  for (const auto& [observed, chain] : orders) {
    if (observed.size() != chain.size()) throw UsageError("rank_correlation: pair lengths differ");
    const auto rho = spearman(observed, chain);
    const auto tau = kendall_tau_b(observed, chain);
    if (!rho || !tau) {
      ++rc.n_skipped;
      continue;
    }
    sum_rho += *rho;
    sum_tau += *tau;
    ++rc.n_used;
  }
  if (rc.n_used) {
    rc.mean_spearman = sum_rho / static_cast<double>(rc.n_used);
    rc.mean_kendall = sum_tau / static_cast<double>(rc.n_used);
  }
  return rc;
}

// Per instance: (context positions of gold docs listed in hop order, hop
// numbers 1..n). With `reversed`, the reference order is n..1.
inline std::vector<OrderPair> gold_order_pairs(std::span<const QuestionInstance> instances, bool reversed = false) {
  std::vector<OrderPair> out;
  out.reserve(instances.size());
  for (const auto& q : instances) {
    OrderPair p;
    const auto chain = q.gold_chain();
    for (std::size_t k = 0; k < chain.size(); ++k) {
      const auto pos = std::find_if(q.documents.begin(), q.documents.end(),
                                    [&](const Document& d) { return &d == chain[k]; }) -
                       q.documents.begin();
      p.first.push_back(static_cast<double>(pos));
      p.second.push_back(static_cast<double>(reversed ? chain.size() - k : k + 1));
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace mhqa
