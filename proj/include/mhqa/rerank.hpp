#pragma once

// Peak-IC answer selection: among K permutations of one question, keep the
// answer produced under the permutation whose IC profile peaks highest.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mhqa/attnstats.hpp"
#include "mhqa/errors.hpp"
#include "mhqa/evalkit.hpp"
#include "mhqa/permute.hpp"

namespace mhqa {

enum class PeakMetric { Normalized, Raw };

inline constexpr std::size_t kMusiqueShuffles = 20;
inline constexpr std::size_t kTwoWikiShuffles = 10;

struct Candidate {
  std::string qid;
  std::size_t sample_index = 0;  // which of the K shuffles
  PermutationPlan plan;
  EvalRecord record;
  ICProfile profile;
};

inline double peak(const Candidate& c, PeakMetric m) {
  return m == PeakMetric::Normalized ? c.profile.peak_ic_norm : c.profile.peak_ic_raw;
}

namespace detail {

// Descending peak, then ascending sample index.
inline bool ranks_before(const Candidate& a, const Candidate& b, PeakMetric m) {
  const double pa = peak(a, m), pb = peak(b, m);
  if (pa != pb) return pa > pb;
  return a.sample_index < b.sample_index;
}

}  // namespace detail

inline const Candidate& select(std::span<const Candidate> candidates, PeakMetric metric = PeakMetric::Normalized) {
  if (candidates.empty()) throw DomainError("select needs at least one candidate");
  const Candidate* best = &candidates.front();
  for (const auto& c : candidates) {
    if (c.qid != best->qid || c.plan.qid != c.qid || c.record.qid != c.qid) {
      throw UsageError("candidates mix questions ('" + best->qid + "' and '" + c.qid + "')");
    }
    if (detail::ranks_before(c, *best, metric)) best = &c;
  }
  return *best;
}

inline std::map<std::string, std::vector<Candidate>> group_by_question(std::span<const Candidate> candidates) {
  std::map<std::string, std::vector<Candidate>> groups;
  for (const auto& c : candidates) groups[c.qid].push_back(c);
  return groups;
}

struct RankCurve {
  std::vector<double> accuracy;  // percent, index 0 = highest peak
  std::size_t n_questions = 0;
  std::size_t n_dropped = 0;  // questions without exactly K candidates
};

// Accuracy of the rank-r candidate across questions, r = 1..K by descending peak.
inline RankCurve rank_accuracy_curve(const std::map<std::string, std::vector<Candidate>>& groups, std::size_t k,
                                     PeakMetric metric = PeakMetric::Normalized) {
  RankCurve curve;
  std::vector<std::size_t> correct(k, 0);
  for (const auto& [qid, group] : groups) {
    if (group.size() != k) {
      ++curve.n_dropped;
      continue;
    }
    auto sorted = group;
    std::sort(sorted.begin(), sorted.end(),
              [&](const Candidate& a, const Candidate& b) { return detail::ranks_before(a, b, metric); });
    for (std::size_t r = 0; r < k; ++r) correct[r] += sorted[r].record.correct ? 1 : 0;
    ++curve.n_questions;
  }
  curve.accuracy.resize(k, 0.0);
  if (curve.n_questions) {
    for (std::size_t r = 0; r < k; ++r) curve.accuracy[r] = 100.0 * correct[r] / curve.n_questions;
  }
  return curve;
}

struct SelectionAudit {
  std::string qid;
  std::size_t chosen_sample = 0;
  double peak = 0.0;
  bool correct = false;
};

struct RerankReport {
  std::vector<SelectionAudit> audit;
  double rerank_accuracy = 0.0;  // percent over questions
  double base_accuracy = 0.0;    // mean accuracy over all candidates
  std::vector<double> per_sample_accuracy;  // by sample index
  RankCurve curve;
};

inline RerankReport rerank(std::span<const Candidate> candidates, std::size_t k,
                           PeakMetric metric = PeakMetric::Normalized) {
  RerankReport rep;
  const auto groups = group_by_question(candidates);
  std::size_t chosen_correct = 0;
  for (const auto& [qid, group] : groups) {
    const auto& best = select(group, metric);
    rep.audit.push_back({qid, best.sample_index, peak(best, metric), best.record.correct});
    chosen_correct += best.record.correct ? 1 : 0;
  }
  std::map<std::size_t, Tally> by_index;
  Tally all;
  for (const auto& c : candidates) {
    auto& t = by_index[c.sample_index];
    ++t.total;
    ++all.total;
    if (c.record.correct) {
      ++t.correct;
      ++all.correct;
    }
  }
  if (!groups.empty()) rep.rerank_accuracy = 100.0 * chosen_correct / groups.size();
  rep.base_accuracy = all.accuracy();
  for (const auto& [idx, t] : by_index) {
    if (rep.per_sample_accuracy.size() <= idx) rep.per_sample_accuracy.resize(idx + 1, 0.0);
    rep.per_sample_accuracy[idx] = t.accuracy();
  }
  rep.curve = rank_accuracy_curve(groups, k, metric);
  return rep;
}

inline nlohmann::json to_json(const SelectionAudit& a) {
  return {{"qid", a.qid}, {"chosen_sample", a.chosen_sample}, {"peak", a.peak}, {"correct", a.correct}};
}

// Weighted least-squares non-increasing fit (pool adjacent violators).
inline std::vector<double> antitonic_fit(std::span<const double> values, std::span<const double> weights = {}) {
  struct Pool {
    double mean;
    double weight;
    std::size_t count;
  };
  std::vector<Pool> pools;
  for (std::size_t i = 0; i < values.size(); ++i) {
    pools.push_back({values[i], weights.empty() ? 1.0 : weights[i], 1});
    while (pools.size() > 1 && pools[pools.size() - 2].mean < pools.back().mean) {
      auto top = pools.back();
      pools.pop_back();
      auto& prev = pools.back();
      const double w = prev.weight + top.weight;
      prev.mean = (prev.mean * prev.weight + top.mean * top.weight) / w;
      prev.weight = w;
      prev.count += top.count;
    }
  }
  std::vector<double> fit;
  for (const auto& p : pools) fit.insert(fit.end(), p.count, p.mean);
  return fit;
}

struct TrendTest {
  std::vector<double> fit;
  double max_residual = 0.0;  // percent points
  double tolerance = 0.0;     // percent points
  bool decreasing = false;    // fit strictly drops from first to last rank
  bool passed = false;
};

// Accepts a rank-accuracy curve as non-increasing when every point lies within
// `z` binomial standard errors of its antitonic fit and the fit actually drops.
inline TrendTest isotonic_trend_test(const RankCurve& curve, double z = 3.0) {
  TrendTest t;
  t.fit = antitonic_fit(curve.accuracy);
  if (curve.accuracy.empty() || curve.n_questions == 0) return t;
  double pbar = 0.0;
  for (double a : curve.accuracy) pbar += a / 100.0;
  pbar /= static_cast<double>(curve.accuracy.size());
  t.tolerance = z * 100.0 * std::sqrt(std::max(pbar * (1.0 - pbar), 1e-12) / curve.n_questions);
  for (std::size_t i = 0; i < curve.accuracy.size(); ++i) {
    t.max_residual = std::max(t.max_residual, std::abs(curve.accuracy[i] - t.fit[i]));
  }
  t.decreasing = t.fit.front() > t.fit.back();
  t.passed = t.decreasing && t.max_residual <= t.tolerance;
  return t;
}

}  // namespace mhqa
