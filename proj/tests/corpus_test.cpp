#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "mhqa/corpus.hpp"
#include "support/fixtures.hpp"

using namespace mhqa;
using nlohmann::json;

namespace {

json musique_record(const std::string& id, int hops, std::vector<int> support_idx, int n_paragraphs = 6) {
  json paragraphs = json::array();
  for (int i = 0; i < n_paragraphs; ++i) {
    const bool sup = std::find(support_idx.begin(), support_idx.end(), i) != support_idx.end();
    paragraphs.push_back({{"idx", i},
                          {"title", "T" + std::to_string(i)},
                          {"paragraph_text", "Paragraph " + std::to_string(i) + "."},
                          {"is_supporting", sup}});
  }
  json decomposition = json::array();
  for (int k = 0; k < hops; ++k) {
    decomposition.push_back({{"id", k},
                             {"question", "hop " + std::to_string(k + 1)},
                             {"answer", "a" + std::to_string(k)},
                             {"paragraph_support_idx", support_idx[static_cast<std::size_t>(k)]}});
  }
  return {{"id", id},
          {"paragraphs", paragraphs},
          {"question", "What is it?"},
          {"question_decomposition", decomposition},
          {"answer", "Oslo"},
          {"answer_aliases", {"Christiania"}},
          {"answerable", true}};
}

std::vector<QuestionInstance> load_lines(const std::vector<json>& recs, const LoadOptions& opts = {}) {
  std::stringstream ss;
  for (const auto& r : recs) ss << r.dump() << '\n';
  return load_musique(ss, MusiqueSplit::Dev, opts);
}

}  // namespace

TEST(Musique, AssignsHopsFromDecompositionOrder) {
  // Paragraph 4 supports hop 1 even though paragraph 1 is listed first.
  auto qs = load_lines({musique_record("2hop__1", 2, {4, 1})});
  ASSERT_EQ(qs.size(), 1u);
  const auto& q = qs[0];
  EXPECT_EQ(q.n_hops, 2);
  EXPECT_EQ(q.documents.size(), 6u);
  EXPECT_EQ(q.documents[4].hop_index, 1);
  EXPECT_EQ(q.documents[1].hop_index, 2);
  EXPECT_FALSE(q.documents[0].hop_index.has_value());
  EXPECT_EQ(q.documents[0].doc_id, "0");
  const auto chain = q.gold_chain();
  EXPECT_EQ(chain[0]->doc_id, "4");
  EXPECT_EQ(chain[1]->doc_id, "1");
  EXPECT_EQ(q.answer_aliases, (std::vector<std::string>{"Oslo", "Christiania"}));
  EXPECT_EQ(q.decomposition, (std::vector<std::string>{"hop 1", "hop 2"}));
}

TEST(Musique, EmptyInputGivesNoInstances) {
  std::stringstream ss;
  auto qs = load_musique(ss, MusiqueSplit::Train);
  EXPECT_TRUE(qs.empty());
  EXPECT_EQ(stats(qs).n_instances, 0u);
  EXPECT_EQ(stats(qs).mean_documents, 0.0);
}

TEST(Musique, MissingFieldNamesFieldAndLine) {
  auto bad = musique_record("x", 2, {0, 1});
  bad.erase("question");
  try {
    load_lines({musique_record("ok", 2, {0, 1}), bad});
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.field(), "question");
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(Musique, MalformedJsonReportsLine) {
  std::stringstream ss;
  ss << musique_record("a", 2, {0, 1}).dump() << "\n{not json\n";
  try {
    load_musique(ss, MusiqueSplit::Dev);
    FAIL();
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
}

TEST(Musique, GoldCountMismatchCarriesQid) {
  auto rec = musique_record("3hop__bad", 2, {0, 1});
  rec["paragraphs"][3]["is_supporting"] = true;
  try {
    load_lines({rec});
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_EQ(e.qid(), "3hop__bad");
  }
}

TEST(Musique, PermissiveModeSkipsAndReports) {
  auto rec = musique_record("bad", 2, {0, 1});
  rec["paragraphs"][3]["is_supporting"] = true;
  std::vector<LoadIssue> issues;
  LoadOptions opts;
  opts.permissive = true;
  opts.on_skip = [&](const LoadIssue& i) { issues.push_back(i); };
  auto qs = load_lines({musique_record("good", 3, {0, 2, 5}), rec}, opts);
  ASSERT_EQ(qs.size(), 1u);
  EXPECT_EQ(qs[0].qid, "good");
  ASSERT_EQ(issues.size(), 1u);
  EXPECT_EQ(issues[0].qid, "bad");
  EXPECT_EQ(issues[0].line, 2u);
}

TEST(Musique, UnanswerableRecordsAreDropped) {
  auto rec = musique_record("u", 2, {0, 1});
  rec["answerable"] = false;
  EXPECT_TRUE(load_lines({rec}).empty());
}

TEST(Musique, TooManyDocumentsIsValidationError) {
  EXPECT_THROW(load_lines({musique_record("big", 2, {0, 1}, 21)}), ValidationError);
}

TEST(Musique, RoundTripThroughDatasetLayout) {
  Rng rng(7);
  for (int i = 0; i < 200; ++i) {
    const int hops = 2 + static_cast<int>(rng.below(3));
    const int n = hops + static_cast<int>(rng.below(21 - static_cast<std::uint64_t>(hops)));
    std::vector<int> all(static_cast<std::size_t>(n));
    for (int k = 0; k < n; ++k) all[static_cast<std::size_t>(k)] = k;
    rng.shuffle(std::span<int>(all));
    all.resize(static_cast<std::size_t>(hops));
    const auto original = load_lines({musique_record("rt" + std::to_string(i), hops, all, n)});
    const auto again = load_lines({to_musique_json(original[0])});
    ASSERT_EQ(original, again);
    // Gold documents sorted by hop form exactly the gold subset.
    std::size_t gold = 0;
    for (const auto& d : again[0].documents) gold += d.is_gold;
    EXPECT_EQ(again[0].gold_chain().size(), gold);
  }
}

TEST(Stats, HopHistogramAndMean) {
  std::vector<QuestionInstance> qs{fixture::make_instance("g1 g2 n"), fixture::make_instance("g2 g1"),
                                   fixture::make_instance("g1 g2 g3 g4 n n n")};
  const auto s = stats(qs);
  EXPECT_EQ(s.n_instances, 3u);
  EXPECT_EQ(s.hop_histogram, (std::map<int, std::size_t>{{2, 2}, {4, 1}}));
  EXPECT_DOUBLE_EQ(s.mean_documents, 12.0 / 3.0);
}

namespace {

json twowiki_record(const std::string& id, const std::string& type, std::vector<std::string> support,
                    bool reverse_evidence = false) {
  json context = json::array();
  for (int i = 0; i < 10; ++i) {
    context.push_back({"Page " + std::to_string(i), {"First sentence.", " Second sentence. "}});
  }
  json facts = json::array();
  for (const auto& s : support) facts.push_back({s, 0});
  json evidences = {{"Page 3", "director", "Page 7"}, {"Page 7", "date of birth", "1927"}};
  if (reverse_evidence) evidences = {{"Page 7", "director", "Page 3"}, {"Page 3", "date of birth", "1927"}};
  return {{"_id", id},  {"type", type},         {"question", "When was the director born?"},
          {"answer", "1927"}, {"context", context}, {"supporting_facts", facts},
          {"evidences", evidences}};
}

}  // namespace

TEST(TwoWiki, FiltersBySubsetAndOrdersByEvidence) {
  std::stringstream ss;
  json all = json::array({twowiki_record("a", "compositional", {"Page 7", "Page 3"}),
                          twowiki_record("b", "comparison", {"Page 1", "Page 2"}),
                          twowiki_record("c", "inference", {"Page 3", "Page 7"}, true)});
  ss << all.dump();
  auto qs = load_2wiki(ss, TwoWikiSubset::Compositional);
  ASSERT_EQ(qs.size(), 1u);
  EXPECT_EQ(qs[0].qid, "a");
  EXPECT_EQ(qs[0].n_hops, 2);
  EXPECT_EQ(qs[0].documents.size(), 10u);
  EXPECT_EQ(qs[0].gold_chain()[0]->title, "Page 3");  // evidence subject of hop 1
  EXPECT_EQ(qs[0].gold_chain()[1]->title, "Page 7");
  EXPECT_EQ(qs[0].documents[0].body, "First sentence. Second sentence.");

  std::stringstream ss2(all.dump());
  auto inf = load_2wiki(ss2, TwoWikiSubset::Inference);
  ASSERT_EQ(inf.size(), 1u);
  EXPECT_EQ(inf[0].gold_chain()[0]->title, "Page 7");
}

TEST(TwoWiki, ThreeSupportingDocumentsViolateTwoHopContract) {
  std::stringstream ss;
  ss << twowiki_record("x", "compositional", {"Page 1", "Page 2", "Page 3"}).dump() << '\n';
  EXPECT_THROW(load_2wiki(ss, TwoWikiSubset::Compositional), ValidationError);
}

TEST(TwoWiki, UnknownSubsetIsUsageError) {
  EXPECT_THROW(load_2wiki("/nonexistent", "bridge"), UsageError);
  EXPECT_THROW(parse_twowiki_subset("comparison"), UsageError);
}

// Runs only where the official MuSiQue dev file is available. The oracle counts
// supporting paragraphs straight from the raw records.
TEST(MusiqueOfficial, DevHistogramMatchesRawCount) {
  const char* dir = std::getenv("MHQA_MUSIQUE_DIR");
  if (dir == nullptr) GTEST_SKIP() << "MHQA_MUSIQUE_DIR not set";
  const auto path = std::filesystem::path(dir) / "musique_ans_v1.0_dev.jsonl";
  if (!std::filesystem::exists(path)) GTEST_SKIP() << path << " missing";
  std::map<int, std::size_t> oracle;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto rec = json::parse(line);
    int gold = 0;
    for (const auto& p : rec["paragraphs"]) gold += p["is_supporting"].get<bool>() ? 1 : 0;
    ++oracle[gold];
  }
  const auto s = stats(load_musique(path.string(), MusiqueSplit::Dev));
  EXPECT_EQ(s.n_instances, 2417u);
  EXPECT_EQ(s.hop_histogram, oracle);
}
