#pragma once

#include <algorithm>
#include <charconv>
#include <compare>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "mhqa/corpus.hpp"
#include "mhqa/errors.hpp"
#include "mhqa/random.hpp"
#include "mhqa/text.hpp"

namespace mhqa {

struct Strategy {
  enum class Kind { Original, Forward, Backward, ForwardGap, RemoveFirst, Random };

  Kind kind = Kind::Original;
  std::uint64_t param = 0;  // gap for ForwardGap, seed for Random, else 0

  static constexpr Strategy original() { return {Kind::Original, 0}; }
  static constexpr Strategy forward() { return {Kind::Forward, 0}; }
  static constexpr Strategy backward() { return {Kind::Backward, 0}; }
  static constexpr Strategy forward_gap(std::uint64_t gap) { return {Kind::ForwardGap, gap}; }
  static constexpr Strategy remove_first() { return {Kind::RemoveFirst, 0}; }
  static constexpr Strategy random(std::uint64_t seed) { return {Kind::Random, seed}; }

  auto operator<=>(const Strategy&) const = default;
};

// Canonical names: original, forward, backward, forward_gap:<i>, remove_first, random:<seed>.
inline std::string to_string(const Strategy& s) {
  switch (s.kind) {
    case Strategy::Kind::Original: return "original";
    case Strategy::Kind::Forward: return "forward";
    case Strategy::Kind::Backward: return "backward";
    case Strategy::Kind::ForwardGap: return "forward_gap:" + std::to_string(s.param);
    case Strategy::Kind::RemoveFirst: return "remove_first";
    case Strategy::Kind::Random: return "random:" + std::to_string(s.param);
  }
  return "?";
}

inline Strategy parse_strategy(std::string_view name) {
  auto number = [&](std::string_view digits) {
    std::uint64_t v = 0;
    auto [ptr, ec] = std::from_chars(digits.data(), digits.data() + digits.size(), v);
    if (ec != std::errc{} || ptr != digits.data() + digits.size() || digits.empty()) {
      throw UsageError("bad numeric parameter in strategy '" + std::string(name) + "'");
    }
    return v;
  };
  if (name == "original") return Strategy::original();
  if (name == "forward") return Strategy::forward();
  if (name == "backward") return Strategy::backward();
  if (name == "remove_first") return Strategy::remove_first();
  if (name.starts_with("forward_gap:")) return Strategy::forward_gap(number(name.substr(12)));
  if (name.starts_with("forward_")) return Strategy::forward_gap(number(name.substr(8)));
  if (name.starts_with("random:")) return Strategy::random(number(name.substr(7)));
  throw UsageError("unknown strategy '" + std::string(name) + "'");
}

struct PermutationPlan {
  std::string qid;
  Strategy strategy;
  std::vector<std::string> order;    // doc ids as they appear in the context
  std::vector<std::string> removed;  // non-empty only for RemoveFirst
  std::vector<std::string> gold_chain;  // gold doc ids in hop order, including removed ones

  // Context position of a doc id, or -1 when absent.
  long position_of(std::string_view doc_id) const {
    auto it = std::find(order.begin(), order.end(), doc_id);
    return it == order.end() ? -1 : static_cast<long>(it - order.begin());
  }

  bool operator==(const PermutationPlan&) const = default;
};

// Per-question shuffle seed: global seed mixed with a stable hash of the qid.
inline std::uint64_t question_seed(std::uint64_t seed, std::string_view qid) {
  return splitmix64(seed ^ splitmix64(text::fnv1a64(qid)));
}

inline PermutationPlan make_plan(const QuestionInstance& q, const Strategy& strategy) {
  PermutationPlan plan;
  plan.qid = q.qid;
  plan.strategy = strategy;
  const auto chain = q.gold_chain();
  for (const auto* d : chain) plan.gold_chain.push_back(d->doc_id);

  std::vector<std::string> dataset_order;
  for (const auto& d : q.documents) dataset_order.push_back(d.doc_id);

  switch (strategy.kind) {
    case Strategy::Kind::Original:
      plan.order = std::move(dataset_order);
      break;

    case Strategy::Kind::Forward:
    case Strategy::Kind::Backward: {
      // Only gold slots are rewritten; noise keeps its positions.
      plan.order = std::move(dataset_order);
      std::vector<std::string> gold_ids = plan.gold_chain;
      if (strategy.kind == Strategy::Kind::Backward) std::reverse(gold_ids.begin(), gold_ids.end());
      std::size_t next = 0;
      for (std::size_t pos = 0; pos < q.documents.size(); ++pos) {
        if (q.documents[pos].is_gold) plan.order[pos] = gold_ids[next++];
      }
      break;
    }

    case Strategy::Kind::ForwardGap: {
      std::vector<std::string> noise;
      for (const auto& d : q.documents) {
        if (!d.is_gold) noise.push_back(d.doc_id);
      }
      const std::size_t gap = strategy.param;
      const std::size_t required = gap * (chain.size() - 1);
      if (noise.size() < required) throw PlanningError(q.qid, required, noise.size());
      // The first `required` noise docs fill the gaps; the rest lead the context.
      plan.order.assign(noise.begin() + static_cast<long>(required), noise.end());
      std::size_t next = 0;
      for (std::size_t hop = 0; hop < chain.size(); ++hop) {
        if (hop > 0) {
          for (std::size_t k = 0; k < gap; ++k) plan.order.push_back(noise[next++]);
        }
        plan.order.push_back(plan.gold_chain[hop]);
      }
      break;
    }

    case Strategy::Kind::RemoveFirst: {
      const auto& first = plan.gold_chain.front();
      for (auto& id : dataset_order) {
        if (id == first) {
          plan.removed.push_back(id);
        } else {
          plan.order.push_back(std::move(id));
        }
      }
      break;
    }

    case Strategy::Kind::Random: {
      plan.order = std::move(dataset_order);
      Rng rng(question_seed(strategy.param, q.qid));
      rng.shuffle(std::span<std::string>(plan.order));
      break;
    }
  }
  return plan;
}

// `count` seeded shuffles: random:seed, random:seed+1, ...
inline std::vector<Strategy> random_strategies(std::uint64_t seed, std::size_t count) {
  std::vector<Strategy> out;
  for (std::size_t k = 0; k < count; ++k) out.push_back(Strategy::random(seed + k));
  return out;
}

inline nlohmann::json to_json(const PermutationPlan& p) {
  return {{"qid", p.qid},
          {"strategy", to_string(p.strategy)},
          {"order", p.order},
          {"removed", p.removed},
          {"gold_chain", p.gold_chain}};
}

inline PermutationPlan plan_from_json(const nlohmann::json& j) {
  try {
    PermutationPlan p;
    p.qid = j.at("qid").get<std::string>();
    p.strategy = parse_strategy(j.at("strategy").get<std::string>());
    p.order = j.at("order").get<std::vector<std::string>>();
    p.removed = j.value("removed", std::vector<std::string>{});
    p.gold_chain = j.value("gold_chain", std::vector<std::string>{});
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("plan record: ") + e.what());
  }
}

}  // namespace mhqa
