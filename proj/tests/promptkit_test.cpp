#include <gtest/gtest.h>

#include "mhqa/promptkit.hpp"
#include "support/fixtures.hpp"

using namespace mhqa;
using mhqa::fixture::make_instance;

TEST(Prompt, AnswerOnlyEndsWithOpenBoxedMarker) {
  const auto q = make_instance("g1 g2");
  const auto p = assemble(q, make_plan(q, Strategy::original()), PromptMode::AnswerOnly);
  EXPECT_TRUE(p.text.ends_with("\\boxed{"));
  EXPECT_TRUE(p.text.starts_with("Answer the question using only the provided search results"));
  ASSERT_EQ(p.char_blocks.size(), 4u);
  EXPECT_EQ(p.char_blocks[0].name, "instruction");
  EXPECT_EQ(p.char_blocks[1].name, "doc_1");
  EXPECT_EQ(p.char_blocks[2].name, "doc_2");
  EXPECT_EQ(p.char_blocks[3].name, "question");
  EXPECT_EQ(p.span(p.char_blocks[1]), "Document [1] (Title: Title g1) Body text of g1.");
  EXPECT_EQ(p.span(p.char_blocks[3]), "Question: Who is the question about?");
  EXPECT_EQ(p.doc_ids, (std::vector<std::string>{"g1", "g2"}));
}

TEST(Prompt, CotAsksForBoxedAnswer) {
  const auto q = make_instance("g1 g2");
  const auto p = assemble(q, make_plan(q, Strategy::original()), PromptMode::CoT);
  EXPECT_NE(p.text.find("\\boxed{<answer>}"), std::string::npos);
  EXPECT_FALSE(p.text.ends_with("\\boxed{"));
}

TEST(Prompt, EmptyPlanHasNoDocumentBlocks) {
  const auto q = make_instance("g1 g2");
  PermutationPlan empty;
  empty.qid = q.qid;
  const auto p = assemble(q, empty, PromptMode::AnswerOnly);
  ASSERT_EQ(p.char_blocks.size(), 2u);
  EXPECT_EQ(p.char_blocks[1].name, "question");
  EXPECT_TRUE(p.doc_ids.empty());
}

TEST(Prompt, FirstHopProbeUsesSubQuestion) {
  const auto q = make_instance("g2 n g1");
  const auto p = assemble_first_hop_probe(q, PromptMode::AnswerOnly);
  EXPECT_EQ(p.span(p.char_blocks.back()), "Question: Sub-question 1?");
  EXPECT_EQ(p.char_blocks.size(), 2u);
}

TEST(Prompt, MismatchedPlanIsUsageError) {
  const auto q = make_instance("g1 g2", "a");
  const auto other = make_instance("g1 g2", "b");
  EXPECT_THROW(assemble(q, make_plan(other, Strategy::original()), PromptMode::AnswerOnly), UsageError);
}

TEST(Prompt, SwappingEqualLengthDocsSwapsSpans) {
  auto q = make_instance("g1 g2");
  PermutationPlan a = make_plan(q, Strategy::forward());
  PermutationPlan b = make_plan(q, Strategy::backward());
  const auto pa = assemble(q, a, PromptMode::AnswerOnly);
  const auto pb = assemble(q, b, PromptMode::AnswerOnly);
  EXPECT_EQ(pa.text.size(), pb.text.size());
  // doc_1 of one is doc_2's content of the other, modulo the [k] label.
  EXPECT_EQ(pa.char_blocks[1].begin, pb.char_blocks[1].begin);
  EXPECT_EQ(pa.char_blocks[2].end, pb.char_blocks[2].end);
  EXPECT_NE(pa.span(pa.char_blocks[1]).find("g1"), std::string::npos);
  EXPECT_NE(pb.span(pb.char_blocks[1]).find("g2"), std::string::npos);
}

TEST(Prompt, BlocksAreOrderedAndMatchRenderedDocuments) {
  Rng rng(5);
  for (int i = 0; i < 100; ++i) {
    const auto q = fixture::random_instance(rng, "r" + std::to_string(i));
    const auto plan = make_plan(q, Strategy::random(static_cast<std::uint64_t>(i)));
    const auto p = assemble(q, plan, PromptMode::CoT);
    EXPECT_EQ(p, assemble(q, plan, PromptMode::CoT));
    std::size_t prev = 0;
    for (const auto& b : p.char_blocks) {
      EXPECT_GE(b.begin, prev);
      EXPECT_LE(b.end, p.text.size());
      prev = b.end;
    }
    for (std::size_t k = 0; k < plan.order.size(); ++k) {
      EXPECT_EQ(p.span(p.char_blocks[k + 1]), render_document(PromptTemplate{}, k + 1, *q.find(plan.order[k])));
    }
  }
}

TEST(Prompt, RecordRoundTrip) {
  const auto q = make_instance("g1 n g2");
  const auto p = assemble(q, make_plan(q, Strategy::backward()), PromptMode::AnswerOnly);
  EXPECT_EQ(prompt_from_json(nlohmann::json::parse(to_json(p).dump())), p);
}

TEST(TokenBlocks, GapsBecomeSeparatorBlocksAndTileTheSequence) {
  std::vector<CharBlock> cb{{"instruction", 0, 5}, {"doc_1", 7, 12}, {"question", 14, 20}};
  // tokens: [0,5) [5,7) sep [7,9) [9,12) [12,14) sep [14,20) [20,22) suffix
  std::vector<std::pair<std::size_t, std::size_t>> offs{{0, 5}, {5, 7}, {7, 9}, {9, 12}, {12, 14}, {14, 20}, {20, 22}};
  const auto tb = to_token_blocks(cb, offs);
  ASSERT_EQ(tb.size(), 6u);
  EXPECT_EQ(tb[0], (TokenBlock{"instruction", 0, 1}));
  EXPECT_EQ(tb[1], (TokenBlock{"gap_1", 1, 2}));
  EXPECT_EQ(tb[2], (TokenBlock{"doc_1", 2, 4}));
  EXPECT_EQ(tb[3], (TokenBlock{"gap_2", 4, 5}));
  EXPECT_EQ(tb[4], (TokenBlock{"question", 5, 6}));
  EXPECT_EQ(tb[5], (TokenBlock{"gap_3", 6, 7}));
}

TEST(TokenBlocks, StraddlingTokenJoinsLargestOverlap) {
  std::vector<CharBlock> cb{{"instruction", 0, 4}, {"doc_1", 5, 10}};
  std::vector<std::pair<std::size_t, std::size_t>> offs{{0, 3}, {3, 8}, {8, 10}};
  const auto tb = to_token_blocks(cb, offs);
  ASSERT_EQ(tb.size(), 2u);
  EXPECT_EQ(tb[0], (TokenBlock{"instruction", 0, 1}));
  EXPECT_EQ(tb[1], (TokenBlock{"doc_1", 1, 3}));
}
