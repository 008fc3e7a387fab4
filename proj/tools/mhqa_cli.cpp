// mhqa: command-line driver for document-order experiments on multi-hop QA.
//
// Subcommands: permute, prompt, toy-extract, analyze, evaluate, rerank, report.
// Precedence for settings: flag > environment (paths only) > --config file > default.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "mhqa/mhqa.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace mhqa;

namespace {

constexpr const char* kToolVersion = "0.1.0";

struct RunConfig {
  std::string dataset;
  std::string kind = "musique";  // musique | 2wiki
  std::string split = "dev";     // MuSiQue split or 2Wiki subset
  bool permissive = false;
  std::vector<std::string> strategies{"original", "forward", "backward"};
  int gap_min = -1;
  int gap_max = -1;
  std::size_t n_random = 0;
  int hops = 0;  // 0 = all
  std::string mode = "answer_only";
  std::string out_dir = "mhqa_out";
  std::string plans_dir;
  std::string dump_dir;
  std::string generations;
  std::string evals;
  std::string profiles;
  std::uint64_t seed = 42;
  unsigned jobs = 1;
  double tolerance = 1e-3;
  bool use_aliases = false;
  std::size_t k = kMusiqueShuffles;
  std::string metric = "normalized";
  bool prefix_mask = false;
  std::string dump_mode = "answer_rows";
  std::string generation = "reference";  // toy-extract: reference | greedy
};

json to_json(const RunConfig& c) {
  return {{"dataset", c.dataset},         {"kind", c.kind},
          {"split", c.split},             {"permissive", c.permissive},
          {"strategies", c.strategies},   {"gap_min", c.gap_min},
          {"gap_max", c.gap_max},         {"n_random", c.n_random},
          {"hops", c.hops},               {"mode", c.mode},
          {"out_dir", c.out_dir},         {"plans_dir", c.plans_dir},
          {"dump_dir", c.dump_dir},       {"generations", c.generations},
          {"evals", c.evals},             {"profiles", c.profiles},
          {"seed", c.seed},               {"jobs", c.jobs},
          {"tolerance", c.tolerance},     {"use_aliases", c.use_aliases},
          {"k", c.k},                     {"metric", c.metric},
          {"prefix_mask", c.prefix_mask}, {"dump_mode", c.dump_mode},
          {"generation", c.generation}};
}

// Unknown keys are a usage error so typos do not silently fall back to defaults.
void apply_config_file(RunConfig& c, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw UsageError("config file " + path + ": " + e.what());
  }
  if (!j.is_object()) throw UsageError("config file must hold a JSON object");
  const auto known = to_json(RunConfig{});
  for (const auto& [key, _] : j.items()) {
    if (!known.contains(key)) throw UsageError("unknown config key '" + key + "'");
  }
  try {
    auto get = [&](const char* key, auto& field) {
      if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("dataset", c.dataset);
    get("kind", c.kind);
    get("split", c.split);
    get("permissive", c.permissive);
    get("strategies", c.strategies);
    get("gap_min", c.gap_min);
    get("gap_max", c.gap_max);
    get("n_random", c.n_random);
    get("hops", c.hops);
    get("mode", c.mode);
    get("out_dir", c.out_dir);
    get("plans_dir", c.plans_dir);
    get("dump_dir", c.dump_dir);
    get("generations", c.generations);
    get("evals", c.evals);
    get("profiles", c.profiles);
    get("seed", c.seed);
    get("jobs", c.jobs);
    get("tolerance", c.tolerance);
    get("use_aliases", c.use_aliases);
    get("k", c.k);
    get("metric", c.metric);
    get("prefix_mask", c.prefix_mask);
    get("dump_mode", c.dump_mode);
    get("generation", c.generation);
  } catch (const json::exception& e) {
    throw UsageError("config file " + path + ": " + e.what());
  }
}

void apply_env(RunConfig& c) {
  if (const char* v = std::getenv("MHQA_DATASET")) c.dataset = v;
  if (const char* v = std::getenv("MHQA_DUMP_DIR")) c.dump_dir = v;
  if (const char* v = std::getenv("MHQA_OUT_DIR")) c.out_dir = v;
}

std::optional<std::string> find_config_arg(int argc, char** argv) {
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--config" && i + 1 < argc) return std::string(argv[i + 1]);
    if (a.rfind("--config=", 0) == 0) return a.substr(9);
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Run bookkeeping

class Run {
 public:
  Run(std::string command, const RunConfig& cfg) : command_(std::move(command)), cfg_(cfg) {
    fs::create_directories(cfg_.out_dir);
  }

  fs::path out(const std::string& name) const { return fs::path(cfg_.out_dir) / name; }

  void count(const std::string& key, std::size_t n = 1) {
    std::lock_guard lock(mu_);
    counts_[key] += n;
  }

  void skip(const std::string& reason, json detail) {
    std::lock_guard lock(mu_);
    detail["reason"] = reason;
    skips_.push_back(std::move(detail));
    std::cerr << "skip: " << reason << ' ' << skips_.back().dump() << '\n';
  }

  void note(const std::string& key, json value) { notes_[key] = std::move(value); }

  void write_manifest() const {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::ostringstream ts;
    ts << std::put_time(std::gmtime(&now), "%Y-%m-%dT%H:%M:%SZ");
    auto skips = skips_;
    std::sort(skips.begin(), skips.end(), [](const json& a, const json& b) { return a.dump() < b.dump(); });
    json m = {{"command", command_},
              {"tool_version", kToolVersion},
              {"normalizer_version", text::kNormalizerVersion},
              {"prompt_template_version", PromptTemplate{}.version},
              {"dump_format_version", kDumpVersion},
              {"config", to_json(cfg_)},
              {"counts", counts_},
              {"skips", skips},
              {"timestamp", ts.str()}};
    if (!notes_.empty()) m["notes"] = notes_;
    std::ofstream(out("manifest." + command_ + ".json")) << m.dump(2) << '\n';
  }

 private:
  std::string command_;
  const RunConfig& cfg_;
  std::mutex mu_;
  std::map<std::string, std::size_t> counts_;
  std::vector<json> skips_;
  json notes_ = json::object();
};

// Runs f(i) for i in [0, n) on `jobs` workers; results come back in index order.
template <class F>
auto parallel_map(std::size_t n, unsigned jobs, F f) -> std::vector<decltype(f(std::size_t{}))> {
  std::vector<decltype(f(std::size_t{}))> results(n);
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mu;
  auto worker = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        results[i] = f(i);
      } catch (...) {
        std::lock_guard lock(failure_mu);
        if (!failure) failure = std::current_exception();
        next = n;
      }
    }
  };
  const unsigned workers = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < workers; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
  return results;
}

std::vector<json> read_jsonl(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open " + path.string());
  std::vector<json> out;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (text::trim(line).empty()) continue;
    try {
      out.push_back(json::parse(line));
    } catch (const json::exception& e) {
      throw ParseError(path.string(), n, e.what());
    }
  }
  return out;
}

void write_jsonl(const fs::path& path, const std::vector<json>& rows) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write " + path.string());
  for (const auto& r : rows) out << r.dump() << '\n';
}

std::vector<QuestionInstance> load_dataset(const RunConfig& cfg, Run& run) {
  if (cfg.dataset.empty()) throw UsageError("no dataset given (--dataset or MHQA_DATASET)");
  LoadOptions opts;
  opts.permissive = cfg.permissive;
  opts.on_skip = [&](const LoadIssue& issue) {
    run.skip("invalid_record", {{"line", issue.line}, {"qid", issue.qid}, {"detail", issue.reason}});
  };
  std::vector<QuestionInstance> qs;
  if (cfg.kind == "musique") {
    qs = load_musique(cfg.dataset, parse_musique_split(cfg.split), opts);
  } else if (cfg.kind == "2wiki") {
    qs = load_2wiki(cfg.dataset, cfg.split, opts);
  } else {
    throw UsageError("unknown dataset kind '" + cfg.kind + "' (expected musique|2wiki)");
  }
  if (cfg.hops > 0) {
    std::erase_if(qs, [&](const QuestionInstance& q) { return q.n_hops != cfg.hops; });
  }
  run.count("instances", qs.size());
  return qs;
}

std::map<std::string, const QuestionInstance*> index_by_qid(const std::vector<QuestionInstance>& qs) {
  std::map<std::string, const QuestionInstance*> idx;
  for (const auto& q : qs) idx.emplace(q.qid, &q);
  return idx;
}

fs::path plans_dir(const RunConfig& cfg) {
  return cfg.plans_dir.empty() ? fs::path(cfg.out_dir) / "plans" : fs::path(cfg.plans_dir);
}

fs::path dump_dir(const RunConfig& cfg) {
  return cfg.dump_dir.empty() ? fs::path(cfg.out_dir) / "dumps" : fs::path(cfg.dump_dir);
}

// All plans under the plans directory, files in name order, lines in file order.
std::vector<PermutationPlan> read_plans(const RunConfig& cfg) {
  const auto dir = plans_dir(cfg);
  if (!fs::is_directory(dir)) throw UsageError("plans directory not found: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() == ".jsonl") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  std::vector<PermutationPlan> plans;
  for (const auto& f : files) {
    for (const auto& j : read_jsonl(f)) plans.push_back(plan_from_json(j));
  }
  return plans;
}

std::vector<Strategy> requested_strategies(const RunConfig& cfg) {
  std::vector<Strategy> out;
  for (const auto& s : cfg.strategies) out.push_back(parse_strategy(s));
  if (cfg.gap_min >= 0 || cfg.gap_max >= 0) {
    if (cfg.gap_min < 0 || cfg.gap_max < cfg.gap_min) throw UsageError("gap sweep needs 0 <= gap-min <= gap-max");
    for (int i = cfg.gap_min; i <= cfg.gap_max; ++i) out.push_back(Strategy::forward_gap(static_cast<std::uint64_t>(i)));
  }
  for (const auto& s : random_strategies(cfg.seed, cfg.n_random)) out.push_back(s);
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

// ---------------------------------------------------------------------------
// Commands

void cmd_permute(const RunConfig& cfg, Run& run) {
  const auto qs = load_dataset(cfg, run);
  const auto dir = plans_dir(cfg);
  fs::create_directories(dir);
  for (const auto& s : requested_strategies(cfg)) {
    const auto rows = parallel_map(qs.size(), cfg.jobs, [&](std::size_t i) -> std::optional<json> {
      try {
        return to_json(make_plan(qs[i], s));
      } catch (const PlanningError& e) {
        run.skip("planning", {{"qid", e.qid()}, {"strategy", to_string(s)}, {"detail", e.what()}});
        return std::nullopt;
      }
    });
    std::vector<json> kept;
    for (const auto& r : rows) {
      if (r) kept.push_back(*r);
    }
    write_jsonl(dir / plan_file_name(s), kept);
    run.count("plans." + to_string(s), kept.size());
    run.count("plans", kept.size());
  }
}

void cmd_prompt(const RunConfig& cfg, Run& run) {
  const auto qs = load_dataset(cfg, run);
  const auto by_qid = index_by_qid(qs);
  const auto plans = read_plans(cfg);
  const auto mode = parse_prompt_mode(cfg.mode);
  const auto rows = parallel_map(plans.size(), cfg.jobs, [&](std::size_t i) -> std::optional<json> {
    auto it = by_qid.find(plans[i].qid);
    if (it == by_qid.end()) {
      run.skip("unknown_qid", {{"qid", plans[i].qid}, {"strategy", to_string(plans[i].strategy)}});
      return std::nullopt;
    }
    return to_json(assemble(*it->second, plans[i], mode));
  });
  std::vector<json> kept;
  for (const auto& r : rows) {
    if (r) kept.push_back(*r);
  }
  write_jsonl(run.out("prompts.jsonl"), kept);
  run.count("prompts", kept.size());
}

DumpMode parse_dump_mode(const std::string& s) {
  if (s == "answer_rows") return DumpMode::AnswerRows;
  if (s == "full") return DumpMode::Full;
  throw UsageError("unknown dump mode '" + s + "' (expected answer_rows|full)");
}

void cmd_toy_extract(const RunConfig& cfg, Run& run) {
  const auto qs = load_dataset(cfg, run);
  const auto by_qid = index_by_qid(qs);
  const auto plans = read_plans(cfg);
  const auto mode = parse_prompt_mode(cfg.mode);
  toy::ToyConfig tc;
  tc.seed = cfg.seed;
  const toy::ToyModel model(tc);
  toy::ExtractOptions opts;
  opts.prefix_mask = cfg.prefix_mask;
  opts.dump_mode = parse_dump_mode(cfg.dump_mode);
  if (cfg.generation == "reference") {
    opts.source = toy::GenerationSource::Reference;
  } else if (cfg.generation == "greedy") {
    opts.source = toy::GenerationSource::Greedy;
  } else {
    throw UsageError("unknown generation source '" + cfg.generation + "' (expected reference|greedy)");
  }
  const auto ddir = dump_dir(cfg);
  fs::create_directories(ddir);
  const auto rows = parallel_map(plans.size(), cfg.jobs, [&](std::size_t i) -> std::optional<json> {
    const auto& plan = plans[i];
    auto it = by_qid.find(plan.qid);
    if (it == by_qid.end()) {
      run.skip("unknown_qid", {{"qid", plan.qid}, {"strategy", to_string(plan.strategy)}});
      return std::nullopt;
    }
    const auto prompt = assemble(*it->second, plan, mode);
    const auto ex = toy::extract(model, prompt, it->second->answer, opts);
    const auto stem = dump_stem(plan.qid, plan.strategy);
    write_dump((ddir / (stem + ".mhad")).string(), ex.dump);
    write_block_map((ddir / (stem + ".blocks.json")).string(), ex.map);
    if (!ex.answer_located) run.count("answer_not_located");
    return to_json(GenerationRecord{plan.qid, plan.strategy, mode, ex.generation});
  });
  std::vector<json> kept;
  for (const auto& r : rows) {
    if (r) kept.push_back(*r);
  }
  write_jsonl(run.out("generations.jsonl"), kept);
  run.count("dumps", kept.size());
}

using RecordKey = std::pair<std::string, std::string>;  // (qid, strategy name)

std::map<RecordKey, json> read_eval_records(const std::string& path) {
  std::map<RecordKey, json> out;
  if (path.empty()) return out;
  for (auto& j : read_jsonl(path)) {
    RecordKey key{j.at("qid").get<std::string>(), j.at("strategy").get<std::string>()};
    out.emplace(std::move(key), std::move(j));
  }
  return out;
}

json curves_json(const LayerCurves& c) {
  return {{"n_samples", c.n_samples}, {"gold_by_hop", c.gold_by_hop}, {"noise_max", c.noise_max}};
}

json histogram_json(const std::map<std::size_t, std::size_t>& h) {
  json out = json::object();
  for (const auto& [k, v] : h) out[std::to_string(k)] = v;
  return out;
}

void cmd_analyze(const RunConfig& cfg, Run& run) {
  const auto plans = read_plans(cfg);
  const auto evals = read_eval_records(cfg.evals);
  const auto ddir = dump_dir(cfg);

  struct Analyzed {
    PositionSample sample;
    json record;
    std::size_t flagged = 0;
    double max_dev = 0.0;
  };
  const auto results = parallel_map(plans.size(), cfg.jobs, [&](std::size_t i) -> std::optional<Analyzed> {
    const auto& plan = plans[i];
    const auto stem = dump_stem(plan.qid, plan.strategy);
    const auto dump_path = ddir / (stem + ".mhad");
    const auto map_path = ddir / (stem + ".blocks.json");
    if (!fs::exists(dump_path) || !fs::exists(map_path)) {
      run.skip("missing_dump", {{"qid", plan.qid}, {"strategy", to_string(plan.strategy)}, {"stem", stem}});
      return std::nullopt;
    }
    const auto dump = read_dump(dump_path.string());
    const auto map = read_block_map(map_path.string());
    if (map.answer_token_indices.empty()) {
      run.skip("no_answer_tokens", {{"qid", plan.qid}, {"strategy", to_string(plan.strategy)}});
      return std::nullopt;
    }
    Analyzed a;
    for (std::size_t l = 0; l < dump.n_layers(); ++l) {
      for (std::size_t h = 0; h < dump.n_heads(); ++h) {
        const auto rep = check_normalization(dump, map, l, h, cfg.tolerance);
        a.flagged += rep.n_flagged();
        a.max_dev = std::max(a.max_dev, rep.max_deviation());
      }
    }
    a.sample.profile = ic_profile(dump, map);
    a.sample.plan = plan;
    a.record = {{"qid", plan.qid},
                {"strategy", to_string(plan.strategy)},
                {"n_hops", plan.gold_chain.size()},
                {"profile", to_json(a.sample.profile)},
                {"normalization", {{"max_deviation", a.max_dev}, {"flagged", a.flagged}}}};
    auto ev = evals.find({plan.qid, to_string(plan.strategy)});
    if (ev != evals.end()) a.record["correct"] = ev->second.at("correct");
    return a;
  });

  std::vector<json> profiles;
  std::vector<PositionSample> all;
  std::map<std::size_t, std::vector<PositionSample>> by_hops;
  std::map<std::string, std::vector<PositionSample>> by_correct;
  std::ofstream curves_tsv(run.out("ic_curves.tsv"));
  curves_tsv << "qid\tstrategy\tlayer\tdoc_index\tdoc_id\tic\n";
  for (const auto& r : results) {
    if (!r) continue;
    profiles.push_back(r->record);
    all.push_back(r->sample);
    by_hops[r->sample.plan.gold_chain.size()].push_back(r->sample);
    if (r->record.contains("correct")) {
      by_correct[r->record.at("correct").get<bool>() ? "correct" : "incorrect"].push_back(r->sample);
    }
    if (r->flagged) run.count("normalization_flagged_rows", r->flagged);
    for (const auto& row : ic_curve_rows(r->sample.profile)) {
      curves_tsv << r->sample.plan.qid << '\t' << to_string(r->sample.plan.strategy) << '\t' << row.layer << '\t'
                 << row.doc_index << '\t' << row.doc_id << '\t' << std::setprecision(17) << row.ic << '\n';
    }
  }
  write_jsonl(run.out("profiles.jsonl"), profiles);
  run.count("profiles", profiles.size());

  json curves = {{"all", curves_json(mean_layer_curves(all))}, {"by_hops", json::object()},
                 {"by_correctness", json::object()}};
  for (const auto& [h, s] : by_hops) curves["by_hops"][std::to_string(h)] = curves_json(mean_layer_curves(s));
  for (const auto& [k, s] : by_correct) curves["by_correctness"][k] = curves_json(mean_layer_curves(s));
  std::ofstream(run.out("layer_curves.json")) << curves.dump(2) << '\n';

  const auto pos = position_stats(all);
  json ps = {{"n_profiles", pos.n_profiles},
             {"argmax_position", histogram_json(pos.argmax_position)},
             {"argmax_from_end", histogram_json(pos.argmax_from_end)},
             {"best_last_hop_position", histogram_json(pos.best_last_hop_position)},
             {"best_last_hop_from_end", histogram_json(pos.best_last_hop_from_end)},
             {"noise_max", pos.curves.noise_max}};
  std::ofstream(run.out("position_stats.json")) << ps.dump(2) << '\n';
}

void cmd_evaluate(const RunConfig& cfg, Run& run) {
  const auto qs = load_dataset(cfg, run);
  const auto by_qid = index_by_qid(qs);
  const auto gen_path = cfg.generations.empty() ? run.out("generations.jsonl") : fs::path(cfg.generations);
  const auto raw = read_jsonl(gen_path);
  const auto mode = parse_answer_mode(cfg.mode);
  const ScoreOptions opts{cfg.use_aliases};
  const auto scored = parallel_map(raw.size(), cfg.jobs, [&](std::size_t i) -> std::optional<EvalRecord> {
    const auto g = generation_from_json(raw[i]);
    auto it = by_qid.find(g.qid);
    if (it == by_qid.end()) {
      run.skip("unknown_qid", {{"qid", g.qid}, {"strategy", to_string(g.strategy)}});
      return std::nullopt;
    }
    return score(*it->second, g.strategy, g.text, mode, opts);
  });
  std::vector<EvalRecord> records;
  std::vector<json> rows;
  for (const auto& r : scored) {
    if (!r) continue;
    records.push_back(*r);
    rows.push_back(to_json(*r));
  }
  write_jsonl(run.out("eval_records.jsonl"), rows);
  run.count("records", records.size());

  const auto table = aggregate(records);
  std::ostringstream txt;
  txt << format_table(table);
  txt << std::fixed << std::setprecision(2);
  if (auto d = table.delta_forward()) txt << "delta_forward\t" << std::showpos << *d << std::noshowpos << '\n';
  if (auto d = table.delta_backward()) txt << "delta_backward\t" << std::showpos << *d << std::noshowpos << '\n';
  std::ofstream(run.out("results.txt")) << txt.str();
  std::cout << txt.str();
  write_jsonl(run.out("results.jsonl"), table_rows(table));
  std::ofstream sweep(run.out("sweep.tsv"));
  sweep << "gap\taccuracy\n";
  for (const auto& [gap, acc] : table.gap_sweep()) sweep << gap << '\t' << std::setprecision(17) << acc << '\n';
}

void cmd_rerank(const RunConfig& cfg, Run& run) {
  const auto profile_path = cfg.profiles.empty() ? run.out("profiles.jsonl") : fs::path(cfg.profiles);
  const auto eval_path = cfg.evals.empty() ? run.out("eval_records.jsonl") : fs::path(cfg.evals);
  const auto evals = read_eval_records(eval_path.string());
  PeakMetric metric;
  if (cfg.metric == "normalized") {
    metric = PeakMetric::Normalized;
  } else if (cfg.metric == "raw") {
    metric = PeakMetric::Raw;
  } else {
    throw UsageError("unknown peak metric '" + cfg.metric + "' (expected normalized|raw)");
  }

  std::vector<Candidate> cands;
  for (const auto& j : read_jsonl(profile_path)) {
    Candidate c;
    c.qid = j.at("qid").get<std::string>();
    const auto sname = j.at("strategy").get<std::string>();
    const auto s = parse_strategy(sname);
    if (s.kind != Strategy::Kind::Random) continue;
    if (s.param < cfg.seed || s.param - cfg.seed >= cfg.k) {
      run.skip("sample_outside_k", {{"qid", c.qid}, {"strategy", sname}});
      continue;
    }
    auto ev = evals.find({c.qid, sname});
    if (ev == evals.end()) {
      run.skip("missing_eval_record", {{"qid", c.qid}, {"strategy", sname}});
      continue;
    }
    c.sample_index = static_cast<std::size_t>(s.param - cfg.seed);
    c.plan.qid = c.qid;
    c.plan.strategy = s;
    c.record.qid = c.qid;
    c.record.strategy = s;
    c.record.correct = ev->second.at("correct").get<bool>();
    c.profile = profile_from_json(j.at("profile"));
    cands.push_back(std::move(c));
  }
  run.count("candidates", cands.size());
  const auto rep = rerank(cands, cfg.k, metric);
  const auto trend = isotonic_trend_test(rep.curve);

  std::vector<json> audit;
  for (const auto& a : rep.audit) audit.push_back(to_json(a));
  write_jsonl(run.out("rerank_audit.jsonl"), audit);
  std::ofstream curve(run.out("rank_curve.tsv"));
  curve << "rank\taccuracy\n";
  for (std::size_t r = 0; r < rep.curve.accuracy.size(); ++r) {
    curve << r + 1 << '\t' << std::setprecision(17) << rep.curve.accuracy[r] << '\n';
  }
  const json summary = {{"k", cfg.k},
                        {"metric", cfg.metric},
                        {"n_questions", rep.audit.size()},
                        {"curve_questions", rep.curve.n_questions},
                        {"curve_dropped", rep.curve.n_dropped},
                        {"rerank_accuracy", rep.rerank_accuracy},
                        {"base_accuracy", rep.base_accuracy},
                        {"per_sample_accuracy", rep.per_sample_accuracy},
                        {"trend", {{"fit", trend.fit},
                                   {"max_residual", trend.max_residual},
                                   {"tolerance", trend.tolerance},
                                   {"decreasing", trend.decreasing},
                                   {"passed", trend.passed}}}};
  std::ofstream(run.out("rerank_summary.json")) << summary.dump(2) << '\n';
  std::cout << std::fixed << std::setprecision(2) << "rerank " << rep.rerank_accuracy << " vs base "
            << rep.base_accuracy << " over " << rep.audit.size() << " questions\n";
}

void cmd_report(const RunConfig& cfg, Run& run) {
  const auto qs = load_dataset(cfg, run);
  const auto st = stats(qs);
  const auto fwd = rank_correlation(gold_order_pairs(qs));
  const auto bwd = rank_correlation(gold_order_pairs(qs, true));
  json hist = json::object();
  for (const auto& [h, n] : st.hop_histogram) hist[std::to_string(h)] = n;
  auto rc = [](const RankCorrelation& r) {
    return json{{"spearman", r.mean_spearman}, {"kendall", r.mean_kendall}, {"n_used", r.n_used},
                {"n_skipped", r.n_skipped}};
  };
  const json report = {{"n_instances", st.n_instances},
                       {"hop_histogram", hist},
                       {"mean_documents", st.mean_documents},
                       {"gold_order_correlation", {{"chain_order", rc(fwd)}, {"reversed_chain_order", rc(bwd)}}}};
  std::ofstream(run.out("report.json")) << report.dump(2) << '\n';
  std::cout << std::fixed << std::setprecision(4) << "instances " << st.n_instances << "\nspearman "
            << fwd.mean_spearman << " (" << bwd.mean_spearman << ")\nkendall " << fwd.mean_kendall << " ("
            << bwd.mean_kendall << ")\n";
}

}  // namespace

int main(int argc, char** argv) {
  RunConfig cfg;
  try {
    if (auto path = find_config_arg(argc, argv)) apply_config_file(cfg, *path);
    apply_env(cfg);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }

  CLI::App app{"Document-order experiments for multi-hop QA"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_version_flag("--version", kToolVersion);
  std::string config_path;
  app.add_option("--config", config_path, "JSON file with default settings");

  auto common = [&](CLI::App* sub) {
    sub->add_option("--out", cfg.out_dir, "Output directory (env MHQA_OUT_DIR)");
    sub->add_option("--jobs,-j", cfg.jobs, "Worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--seed", cfg.seed, "Base random seed");
  };
  auto dataset = [&](CLI::App* sub) {
    sub->add_option("--dataset", cfg.dataset, "Dataset file (env MHQA_DATASET)");
    sub->add_option("--kind", cfg.kind, "musique | 2wiki");
    sub->add_option("--split", cfg.split, "MuSiQue split (train|dev) or 2Wiki subset (compositional|inference)");
    sub->add_option("--hops", cfg.hops, "Keep only questions with this many hops (0 = all)");
    sub->add_flag("--permissive", cfg.permissive, "Skip invalid records instead of failing");
  };
  auto plans = [&](CLI::App* sub) { sub->add_option("--plans", cfg.plans_dir, "Plans directory (default <out>/plans)"); };
  auto dumps = [&](CLI::App* sub) { sub->add_option("--dumps", cfg.dump_dir, "Dump directory (env MHQA_DUMP_DIR)"); };

  auto* permute = app.add_subcommand("permute", "Write permutation plans per strategy");
  common(permute);
  dataset(permute);
  permute->add_option("--strategies", cfg.strategies, "Strategy names")->delimiter(',');
  permute->add_option("--gap-min", cfg.gap_min, "First ForwardGap distance of a sweep");
  permute->add_option("--gap-max", cfg.gap_max, "Last ForwardGap distance of a sweep");
  permute->add_option("--random", cfg.n_random, "Number of seeded random shuffles per question");

  auto* prompt = app.add_subcommand("prompt", "Assemble prompt records from plans");
  common(prompt);
  dataset(prompt);
  plans(prompt);
  prompt->add_option("--mode", cfg.mode, "answer_only | cot");

  auto* toy_extract = app.add_subcommand("toy-extract", "Produce dumps and generations with the built-in toy model");
  common(toy_extract);
  dataset(toy_extract);
  plans(toy_extract);
  dumps(toy_extract);
  toy_extract->add_option("--mode", cfg.mode, "answer_only | cot");
  toy_extract->add_flag("--prefix-mask", cfg.prefix_mask, "Bidirectional attention over the prompt");
  toy_extract->add_option("--dump-mode", cfg.dump_mode, "answer_rows | full");
  toy_extract->add_option("--generation", cfg.generation, "reference | greedy");

  auto* analyze = app.add_subcommand("analyze", "IC profiles, layer curves and position statistics");
  common(analyze);
  plans(analyze);
  dumps(analyze);
  analyze->add_option("--evals", cfg.evals, "eval_records.jsonl for the correctness split");
  analyze->add_option("--tolerance", cfg.tolerance, "Normalization tolerance");

  auto* evaluate = app.add_subcommand("evaluate", "Score generations and tabulate accuracy");
  common(evaluate);
  dataset(evaluate);
  evaluate->add_option("--generations", cfg.generations, "generations.jsonl (default <out>/generations.jsonl)");
  evaluate->add_option("--mode", cfg.mode, "answer_only | cot | finetuned");
  evaluate->add_flag("--aliases", cfg.use_aliases, "Accept answer aliases");

  auto* rr = app.add_subcommand("rerank", "Peak-IC answer selection over random shuffles");
  common(rr);
  rr->add_option("--profiles", cfg.profiles, "profiles.jsonl (default <out>/profiles.jsonl)");
  rr->add_option("--evals", cfg.evals, "eval_records.jsonl (default <out>/eval_records.jsonl)");
  rr->add_option("-k,--shuffles", cfg.k, "Shuffles per question")->check(CLI::PositiveNumber);
  rr->add_option("--metric", cfg.metric, "normalized | raw");

  auto* report = app.add_subcommand("report", "Dataset statistics and gold-order rank correlation");
  common(report);
  dataset(report);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  auto* sub = app.get_subcommands().front();
  Run run(sub->get_name(), cfg);
  int status = 0;
  try {
    if (sub == permute) {
      cmd_permute(cfg, run);
    } else if (sub == prompt) {
      cmd_prompt(cfg, run);
    } else if (sub == toy_extract) {
      cmd_toy_extract(cfg, run);
    } else if (sub == analyze) {
      cmd_analyze(cfg, run);
    } else if (sub == evaluate) {
      cmd_evaluate(cfg, run);
    } else if (sub == rr) {
      cmd_rerank(cfg, run);
    } else if (sub == report) {
      cmd_report(cfg, run);
    }
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    run.note("error", e.what());
    status = 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    run.note("error", e.what());
    status = 1;
  }
  run.write_manifest();
  return status;
}
