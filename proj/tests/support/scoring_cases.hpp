#pragma once

// Hand-labelled extraction and scoring cases shared by the unit and
// acceptance suites. Expected values were written out by hand, not produced
// by running the scorer.

#include <optional>
#include <string>
#include <vector>

#include "mhqa/evalkit.hpp"

namespace mhqa::fixture {

struct ScoringCase {
  const char* name;
  std::string generation;
  std::string reference;
  std::vector<std::string> aliases;
  AnswerMode mode;
  bool use_aliases;
  std::optional<std::string> extracted;
  ScoreMethod method;
  bool correct;
};

inline std::vector<ScoringCase> scoring_cases() {
  using M = AnswerMode;
  using S = ScoreMethod;
  const std::optional<std::string> none;
  return {
      {"cot_single_box", "so the answer is \\boxed{Paris}.", "Paris", {}, M::CoT, false, "Paris", S::BoxedLast, true},
      {"cot_last_box_wins", "\\boxed{A} then later \\boxed{B}", "B", {}, M::CoT, false, "B", S::BoxedLast, true},
      {"cot_last_box_wrong", "\\boxed{Oslo} no wait \\boxed{Bergen}", "Oslo", {}, M::CoT, false, "Bergen",
       S::BoxedLast, false},
      {"cot_nested_braces", "\\boxed{f{x}}", "fx", {}, M::CoT, false, "f{x}", S::BoxedLast, true},
      {"cot_unclosed_last_box", "\\boxed{Rome} and \\boxed{Mil", "Rome", {}, M::CoT, false, "Rome", S::BoxedLast,
       true},
      {"cot_fallback_containment", "Reasoning first.\nThe answer is Oslo.", "Oslo", {}, M::CoT, false, none,
       S::LastLineContainment, true},
      {"cot_fallback_only_last_line", "It is Oslo.\nI am not sure.", "Oslo", {}, M::CoT, false, none,
       S::LastLineContainment, false},
      {"cot_fallback_trailing_blank", "The answer is Oslo.\n\n  \n", "Oslo", {}, M::CoT, false, none,
       S::LastLineContainment, true},
      {"cot_empty_box_fallback", "\\boxed{ }\nOslo", "Oslo", {}, M::CoT, false, none, S::LastLineContainment, true},
      {"ao_forced_box", "Paris}", "Paris", {}, M::AnswerOnly, false, "Paris", S::BoxedFirst, true},
      {"ao_first_group_only", "Paris} or \\boxed{Lyon}", "Paris", {}, M::AnswerOnly, false, "Paris", S::BoxedFirst,
       true},
      {"ao_repeated_marker", "\\boxed{Lyon}", "Lyon", {}, M::AnswerOnly, false, "Lyon", S::BoxedFirst, true},
      {"ao_unclosed_first_line", "Barack Obama\nmore text", "barack obama", {}, M::AnswerOnly, false, "Barack Obama",
       S::BoxedFirst, true},
      {"ao_nested", "{1,2}}", "12", {}, M::AnswerOnly, false, "{1,2}", S::BoxedFirst, true},
      {"em_case_insensitive", "paris}", "Paris", {}, M::AnswerOnly, false, "paris", S::BoxedFirst, true},
      {"em_strict", "the city of Paris}", "Paris", {}, M::AnswerOnly, false, "the city of Paris", S::BoxedFirst,
       false},
      {"em_punct_and_space", "  U.S.   Navy }", "US Navy", {}, M::AnswerOnly, false, "U.S.   Navy", S::BoxedFirst,
       true},
      {"alias_enabled", "Burma}", "Myanmar", {"Myanmar", "Burma"}, M::AnswerOnly, true, "Burma", S::BoxedFirst,
       true},
      {"alias_disabled", "Burma}", "Myanmar", {"Myanmar", "Burma"}, M::AnswerOnly, false, "Burma", S::BoxedFirst,
       false},
      {"finetuned_exact", "  Marie Curie\n", "marie curie", {}, M::Finetuned, false, "Marie Curie", S::ExactMatch,
       true},
  };
}

}  // namespace mhqa::fixture
