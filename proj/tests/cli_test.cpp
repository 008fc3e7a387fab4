// Hermetic end-to-end runs of the mhqa tool on the bundled MuSiQue-format fixture.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>
#include <nlohmann/json.hpp>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const std::string kTool = MHQA_CLI_PATH;
const std::string kData = MHQA_TEST_DATA "/musique_mini.jsonl";
constexpr std::size_t kQuestions = 12;

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    const auto* info = ::testing::UnitTest::GetInstance()->current_test_info();
    dir_ = fs::temp_directory_path() / (std::string("mhqa_cli_") + info->name());
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  int run(const std::string& args, const std::string& env = "") const {
    const auto cmd = env + " '" + kTool + "' " + args + " > '" + (dir_ / "stdout.txt").string() + "' 2> '" +
                     (dir_ / "stderr.txt").string() + "'";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
  }

  std::string out() const { return (dir_ / "out").string(); }

  static std::size_t lines(const fs::path& p) {
    std::ifstream in(p);
    std::size_t n = 0;
    std::string s;
    while (std::getline(in, s)) n += s.empty() ? 0 : 1;
    return n;
  }

  static std::string slurp(const fs::path& p) {
    std::ifstream in(p);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  static json read_json(const fs::path& p) { return json::parse(slurp(p)); }

  fs::path dir_;
};

}  // namespace

TEST_F(Cli, PermuteWritesOnePlanPerQuestionAndStrategy) {
  ASSERT_EQ(run("permute --dataset " + kData + " --out " + out()), 0);
  for (const char* f : {"original.jsonl", "forward.jsonl", "backward.jsonl"}) {
    EXPECT_EQ(lines(fs::path(out()) / "plans" / f), kQuestions) << f;
  }
  const auto m = read_json(fs::path(out()) / "manifest.permute.json");
  EXPECT_EQ(m.at("counts").at("plans"), 3 * kQuestions);
  EXPECT_EQ(m.at("config").at("seed"), 42);
}

TEST_F(Cli, GapSweepProducesSixPlanFiles) {
  ASSERT_EQ(run("permute --dataset " + kData + " --out " + out() + " --strategies original --gap-min 0 --gap-max 5"),
            0);
  std::size_t gap_files = 0;
  for (const auto& e : fs::directory_iterator(fs::path(out()) / "plans")) {
    gap_files += e.path().filename().string().rfind("forward_gap_", 0) == 0 ? 1 : 0;
  }
  EXPECT_EQ(gap_files, 6u);
  // questions without enough noise documents are skipped, not fatal
  const auto m = read_json(fs::path(out()) / "manifest.permute.json");
  EXPECT_FALSE(m.at("skips").empty());
  EXPECT_EQ(m.at("skips")[0].at("reason"), "planning");
}

TEST_F(Cli, HopFilterWithRemoveFirst) {
  ASSERT_EQ(run("permute --dataset " + kData + " --out " + out() + " --strategies remove_first --hops 2"), 0);
  std::ifstream in(fs::path(out()) / "plans" / "remove_first.jsonl");
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    const auto j = json::parse(line);
    EXPECT_EQ(j.at("qid").get<std::string>().rfind("2hop__", 0), 0u);
    EXPECT_EQ(j.at("removed").size(), 1u);
    ++n;
  }
  EXPECT_EQ(n, 4u);
}

TEST_F(Cli, AnalyzeCountsProfilesAndEmitsCurves) {
  ASSERT_EQ(run("permute --dataset " + kData + " --out " + out()), 0);
  ASSERT_EQ(run("toy-extract --dataset " + kData + " --out " + out() + " -j 3"), 0);
  ASSERT_EQ(run("evaluate --dataset " + kData + " --out " + out()), 0);
  ASSERT_EQ(run("analyze --out " + out() + " --evals " + out() + "/eval_records.jsonl"), 0);
  EXPECT_EQ(lines(fs::path(out()) / "profiles.jsonl"), 3 * kQuestions);
  const auto curves = read_json(fs::path(out()) / "layer_curves.json");
  for (const char* hops : {"2", "3", "4"}) {
    const auto& c = curves.at("by_hops").at(hops);
    EXPECT_EQ(c.at("gold_by_hop").size(), static_cast<std::size_t>(std::stoi(hops)));
    for (const auto& series : c.at("gold_by_hop")) EXPECT_EQ(series.size(), 2u);  // toy model layers
    EXPECT_EQ(c.at("noise_max").size(), 2u);
  }
  EXPECT_TRUE(curves.at("by_correctness").contains("correct"));
  // one tsv row per (plan, layer, doc) plus a header
  EXPECT_GT(lines(fs::path(out()) / "ic_curves.tsv"), 3 * kQuestions);
  const auto m = read_json(fs::path(out()) / "manifest.analyze.json");
  EXPECT_EQ(m.at("counts").value("normalization_flagged_rows", 0), 0);
}

TEST_F(Cli, AnalyzeReportsMissingDumpsAndContinues) {
  ASSERT_EQ(run("permute --dataset " + kData + " --out " + out() + " --strategies original"), 0);
  ASSERT_EQ(run("toy-extract --dataset " + kData + " --out " + out()), 0);
  fs::remove(fs::path(out()) / "dumps" / "2hop__1000__original.mhad");
  fs::remove(fs::path(out()) / "dumps" / "3hop__1001__original.blocks.json");
  ASSERT_EQ(run("analyze --out " + out()), 0);
  EXPECT_EQ(lines(fs::path(out()) / "profiles.jsonl"), kQuestions - 2);
  const auto skips = read_json(fs::path(out()) / "manifest.analyze.json").at("skips");
  ASSERT_EQ(skips.size(), 2u);
  EXPECT_EQ(skips[0].at("reason"), "missing_dump");
  EXPECT_EQ(skips[0].at("qid"), "2hop__1000");
}

TEST_F(Cli, ParallelRunsAreByteIdentical) {
  const auto a = (dir_ / "a").string(), b = (dir_ / "b").string();
  for (const auto& [o, jobs] : {std::pair{a, "1"}, std::pair{b, "4"}}) {
    ASSERT_EQ(run("permute --dataset " + kData + " --out " + o + " --random 4 -j " + jobs), 0);
    ASSERT_EQ(run("toy-extract --dataset " + kData + " --out " + o + " --prefix-mask -j " + jobs), 0);
    ASSERT_EQ(run("analyze --out " + o + " -j " + jobs), 0);
  }
  for (const char* f : {"plans/random_43.jsonl", "generations.jsonl", "profiles.jsonl", "ic_curves.tsv",
                        "dumps/4hop__1002__random_44.mhad"}) {
    EXPECT_EQ(slurp(fs::path(a) / f), slurp(fs::path(b) / f)) << f;
  }
}

TEST_F(Cli, EvaluateAndRerankWriteTables) {
  ASSERT_EQ(run("permute --dataset " + kData + " --out " + out() + " --strategies original --random 5"), 0);
  ASSERT_EQ(run("toy-extract --dataset " + kData + " --out " + out()), 0);
  ASSERT_EQ(run("evaluate --dataset " + kData + " --out " + out()), 0);
  EXPECT_EQ(lines(fs::path(out()) / "results.jsonl"), 6u);
  EXPECT_NE(slurp(fs::path(out()) / "results.txt").find("original"), std::string::npos);
  ASSERT_EQ(run("analyze --out " + out()), 0);
  ASSERT_EQ(run("rerank --out " + out() + " -k 5"), 0);
  const auto s = read_json(fs::path(out()) / "rerank_summary.json");
  EXPECT_EQ(s.at("n_questions"), kQuestions);
  EXPECT_EQ(s.at("curve_questions"), kQuestions);
  EXPECT_EQ(lines(fs::path(out()) / "rank_curve.tsv"), 6u);
  EXPECT_EQ(lines(fs::path(out()) / "rerank_audit.jsonl"), kQuestions);
}

TEST_F(Cli, ReportPrintsGoldOrderCorrelation) {
  ASSERT_EQ(run("report --dataset " + kData + " --out " + out()), 0);
  const auto r = read_json(fs::path(out()) / "report.json");
  EXPECT_EQ(r.at("n_instances"), kQuestions);
  EXPECT_EQ(r.at("hop_histogram").at("2"), 4);
  const auto& c = r.at("gold_order_correlation");
  EXPECT_DOUBLE_EQ(c.at("chain_order").at("spearman").get<double>(),
                   -c.at("reversed_chain_order").at("spearman").get<double>());
}

TEST_F(Cli, ConfigFileEnvAndFlagPrecedence) {
  const auto cfg = dir_ / "cfg.json";
  std::ofstream(cfg) << R"({"strategies": ["forward"], "out_dir": "/nonexistent/ignored", "seed": 7})";
  // env beats the config file for paths; the flag beats both for strategies
  ASSERT_EQ(run("permute --config " + cfg.string() + " --strategies backward",
                "MHQA_DATASET='" + kData + "' MHQA_OUT_DIR='" + out() + "'"),
            0);
  EXPECT_TRUE(fs::exists(fs::path(out()) / "plans" / "backward.jsonl"));
  EXPECT_FALSE(fs::exists(fs::path(out()) / "plans" / "forward.jsonl"));
  EXPECT_EQ(read_json(fs::path(out()) / "manifest.permute.json").at("config").at("seed"), 7);
}

TEST_F(Cli, HardErrorsSetExitStatus) {
  const auto cfg = dir_ / "bad.json";
  std::ofstream(cfg) << R"({"strategy": "typo"})";
  EXPECT_NE(run("permute --config " + cfg.string() + " --dataset " + kData + " --out " + out()), 0);
  EXPECT_NE(run("permute --dataset " + (dir_ / "missing.jsonl").string() + " --out " + out()), 0);
  EXPECT_NE(run("permute --dataset " + kData + " --out " + out() + " --strategies sideways"), 0);
  EXPECT_NE(run("analyze --out " + out() + " --plans " + (dir_ / "none").string()), 0);
}
