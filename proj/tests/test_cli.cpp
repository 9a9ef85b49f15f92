#include <gtest/gtest.h>

#include <sstream>

#include "fixture.hpp"
#include "oracles.hpp"
#include "rerank/cli.hpp"
#include "rerank/io.hpp"
#include "rerank/metrics.hpp"

namespace rerank::cli {
namespace {

namespace fs = std::filesystem;
using testing::read_file;
using testing::TempDir;
using testing::write_file;

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result run_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "rerank-lab");
  std::ostringstream out, err;
  const int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

bool contains(const std::string& hay, const std::string& needle) { return hay.find(needle) != std::string::npos; }

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    fx_ = testing::make_fixture(3, 20);
    testing::write_fixture(data(), fx_);
  }

  fs::path data() const { return tmp_ / "data"; }
  std::string path(const std::string& name) const { return (data() / name).string(); }
  std::string out_dir() const { return (tmp_ / "runs").string(); }
  fs::path run_dir(const std::string& name) const { return tmp_.path() / "runs" / name; }

  // index + retrieve into runs/idx and runs/bm25.
  std::string first_stage(std::size_t k = 100) {
    EXPECT_EQ(run_cli({"index", "--corpus", path("corpus.jsonl"), "--out-dir", out_dir(), "--run-name", "idx"}).code, 0);
    auto r = run_cli({"retrieve", "--index", (run_dir("idx") / "index.bm25").string(), "--queries", path("queries.tsv"),
                      "--k", std::to_string(k), "--out-dir", out_dir(), "--run-name", "bm25"});
    EXPECT_EQ(r.code, 0) << r.err;
    return (run_dir("bm25") / "run.bm25.txt").string();
  }

  Result rerank(const std::string& run_in, const std::string& strategy, const std::string& name,
                std::vector<std::string> extra = {}) {
    std::vector<std::string> args{"rerank",      "--run-in",  run_in,         "--corpus",     path("corpus.jsonl"),
                                  "--queries",   path("queries.tsv"), "--backend", "mock:" + path("mock.jsonl"),
                                  "--strategy",  strategy,    "--out-dir", out_dir(),  "--run-name", name};
    args.insert(args.end(), extra.begin(), extra.end());
    return run_cli(args);
  }

  TempDir tmp_;
  testing::SyntheticFixture fx_;
};

TEST(CliHelp, EverySubcommandDocumentsItsFlags) {
  auto top = run_cli({"--help"});
  EXPECT_EQ(top.code, 0);
  for (const char* sub : {"index", "retrieve", "rerank", "eval", "analyze", "dump-traces"}) {
    EXPECT_TRUE(contains(top.out, sub)) << sub;
    auto r = run_cli({sub, "--help"});
    EXPECT_EQ(r.code, 0) << sub;
    EXPECT_TRUE(contains(r.out, "--out-dir")) << sub;
  }
  auto rr = run_cli({"rerank", "--help"});
  for (const char* flag : {"--run-in", "--corpus", "--queries", "--strategy", "--samples", "--k", "--backend",
                           "--concurrency", "--seed", "--allow-partial", "--config"}) {
    EXPECT_TRUE(contains(rr.out + top.out, flag)) << flag;
  }
  auto an = run_cli({"analyze", "--help"});
  for (const char* flag : {"--qrels", "--grade-rule", "--score-threshold"}) EXPECT_TRUE(contains(an.out, flag)) << flag;
  EXPECT_TRUE(contains(run_cli({"eval", "--help"}).out, "--gain"));
}

TEST(CliUsage, UnknownFlagsAndValuesAreUsageErrors) {
  EXPECT_EQ(run_cli({"eval", "--bogus"}).code, kUsage);
  EXPECT_EQ(run_cli({}).code, kUsage);
  EXPECT_EQ(run_cli({"frobnicate"}).code, kUsage);
}

TEST_F(CliTest, IndexWrapsBuild) {
  write_file(tmp_ / "three.tsv", "a\tx\nb\ty\nc\tz\n");
  auto ok = run_cli({"index", "--corpus", (tmp_ / "three.tsv").string(), "--out-dir", out_dir(), "--run-name", "three"});
  EXPECT_EQ(ok.code, kOk) << ok.err;
  EXPECT_TRUE(contains(ok.out, "indexed 3 passages"));
  EXPECT_TRUE(contains(ok.out, "avgdl 1"));
  EXPECT_TRUE(fs::exists(run_dir("three") / "index.bm25"));
  EXPECT_TRUE(fs::exists(run_dir("three") / "resolved_config.toml"));

  write_file(tmp_ / "dup.tsv", "a\tx\na\ty\n");
  auto dup = run_cli({"index", "--corpus", (tmp_ / "dup.tsv").string(), "--out-dir", out_dir()});
  EXPECT_EQ(dup.code, kDataError);
  EXPECT_TRUE(contains(dup.err, ":2:"));
  write_file(tmp_ / "empty.tsv", "");
  EXPECT_EQ(run_cli({"index", "--corpus", (tmp_ / "empty.tsv").string(), "--out-dir", out_dir()}).code, kDataError);
  EXPECT_EQ(run_cli({"index", "--corpus", path("corpus.jsonl"), "--b", "2", "--out-dir", out_dir()}).code, kUsage);
}

TEST_F(CliTest, RetrieveHonoursK) {
  const auto run_path = first_stage();
  auto run = io::read_run(run_path);
  std::map<std::string, std::size_t> per_query;
  for (const auto& e : run) ++per_query[e.query_id];
  for (const auto& [q, n] : per_query) EXPECT_LE(n, 100u) << q;
  EXPECT_EQ(per_query.size(), 3u);

  auto r = run_cli({"retrieve", "--index", (run_dir("idx") / "index.bm25").string(), "--queries", path("queries.tsv"),
                    "--k", "10", "--out-dir", out_dir(), "--run-name", "k10"});
  ASSERT_EQ(r.code, 0);
  per_query.clear();
  for (const auto& e : io::read_run(run_dir("k10") / "run.bm25.txt")) ++per_query[e.query_id];
  for (const auto& [q, n] : per_query) EXPECT_EQ(n, 10u) << q;
}

TEST_F(CliTest, RetrieveMissingIndexNamesPath) {
  const std::string missing = (tmp_ / "nowhere.bm25").string();
  auto r = run_cli({"retrieve", "--index", missing, "--queries", path("queries.tsv"), "--out-dir", out_dir()});
  EXPECT_NE(r.code, 0);
  EXPECT_TRUE(contains(r.err, missing)) << r.err;
}

TEST_F(CliTest, DirectRerankStableAcrossConcurrency) {
  const auto bm25 = first_stage();
  ASSERT_EQ(rerank(bm25, "direct", "c1", {"--concurrency", "1"}).code, 0);
  ASSERT_EQ(rerank(bm25, "direct", "c8", {"--concurrency", "8"}).code, 0);
  EXPECT_EQ(read_file(run_dir("c1") / "run.nrr.txt"), read_file(run_dir("c8") / "run.nrr.txt"));
  EXPECT_EQ(read_file(run_dir("c1") / "scored.nrr.jsonl"), read_file(run_dir("c8") / "scored.nrr.jsonl"));
  EXPECT_TRUE(contains(read_file(run_dir("c8") / "resolved_config.toml"), "concurrency=8"));
}

TEST_F(CliTest, SelfConsistencyDumpsEverySample) {
  const auto bm25 = first_stage(5);
  auto r = rerank(bm25, "self_consistency", "sc");
  ASSERT_EQ(r.code, 0) << r.err;
  auto pairs = io::read_scored_pairs(run_dir("sc") / "scored.rr-sc8.jsonl");
  ASSERT_FALSE(pairs.empty());
  for (const auto& p : pairs) {
    EXPECT_EQ(p.per_sample.size(), 8u);
    EXPECT_EQ(p.traces.size(), 8u);
    double sum = 0;
    for (double v : p.per_sample) sum += v;
    EXPECT_NEAR(p.score.value(), sum / 8.0, 1e-12);
  }
}

TEST_F(CliTest, ForcedStrategyNeverGenerates) {
  // Every sampled continuation is poisoned, so any generate call would fail the run.
  auto table = fx_.mock;
  for (auto& [key, entry] : table) {
    for (auto& r : entry.reasoning) r.fail = true;
  }
  llm::MockBackend::write_table(data() / "mock.jsonl", table);
  const auto bm25 = first_stage(10);
  auto forced = rerank(bm25, "forced_no_reason", "rrnr");
  EXPECT_EQ(forced.code, kOk) << forced.err;
  auto reason = rerank(bm25, "reason", "rr");
  EXPECT_EQ(reason.code, kBackendError);
  EXPECT_TRUE(contains(reason.err, "passage '")) << reason.err;
}

TEST_F(CliTest, AllowPartialKeepsGoing) {
  auto table = fx_.mock;
  table.begin()->second.fail = true;
  llm::MockBackend::write_table(data() / "mock.jsonl", table);
  const auto bm25 = first_stage();
  EXPECT_EQ(rerank(bm25, "direct", "strict").code, kBackendError);
  auto r = rerank(bm25, "direct", "partial", {"--allow-partial"});
  EXPECT_EQ(r.code, kOk) << r.err;
  EXPECT_TRUE(contains(r.out, "failed pairs (ranked last): 1"));
  EXPECT_TRUE(contains(read_file(run_dir("partial") / "run.nrr.txt"), "-1.000000 nrr"));
}

TEST_F(CliTest, BadStrategyIsUsageError) {
  const auto bm25 = first_stage(5);
  EXPECT_EQ(rerank(bm25, "listwise", "x").code, kUsage);
  EXPECT_EQ(rerank(bm25, "direct", "x", {"--samples", "4"}).code, kUsage);
}

TEST_F(CliTest, EvalIdealRunAndGainFlag) {
  // Every passage of a query, ordered by descending grade.
  std::vector<RunEntry> ideal;
  for (const auto& q : fx_.queries) {
    std::vector<const Judgment*> js;
    for (const auto& j : fx_.judgments) {
      if (j.query_id == q.id) js.push_back(&j);
    }
    std::stable_sort(js.begin(), js.end(), [](auto* a, auto* b) { return a->grade > b->grade; });
    for (std::size_t i = 0; i < js.size(); ++i) {
      ideal.push_back({q.id, js[i]->passage_id, static_cast<int>(i + 1), static_cast<double>(js.size() - i), "ideal"});
    }
  }
  io::write_run(tmp_ / "run.ideal.txt", ideal);
  auto e = run_cli({"eval", "--run-in", (tmp_ / "run.ideal.txt").string(), "--qrels", path("qrels.txt"), "--out-dir",
                    out_dir(), "--run-name", "ev"});
  ASSERT_EQ(e.code, 0) << e.err;
  EXPECT_TRUE(contains(e.out, "# run=ideal metric=ndcg_cut_10 gain=exponential"));
  EXPECT_TRUE(contains(e.out, "ndcg_cut_10\tall\t1.0000\n"));
  EXPECT_TRUE(fs::exists(run_dir("ev") / "eval.ideal.txt"));

  const auto bm25 = first_stage();
  auto lin = run_cli({"eval", "--run-in", bm25, "--qrels", path("qrels.txt"), "--gain", "linear", "--out-dir", out_dir()});
  auto exp = run_cli({"eval", "--run-in", bm25, "--qrels", path("qrels.txt"), "--out-dir", out_dir()});
  EXPECT_TRUE(contains(lin.out, "gain=linear"));
  EXPECT_NE(lin.out, exp.out);
  EXPECT_EQ(run_cli({"eval", "--run-in", bm25, "--qrels", path("qrels.txt"), "--gain", "cubic"}).code, kUsage);
}

TEST_F(CliTest, EvalMatchesBruteForceOnBm25Run) {
  const auto bm25 = first_stage();
  auto e = run_cli({"eval", "--run-in", bm25, "--qrels", path("qrels.txt"), "--out-dir", out_dir(), "--run-name", "ev"});
  ASSERT_EQ(e.code, 0);
  double expected_sum = 0;
  std::map<std::string, std::vector<int>> ranked;
  for (const auto& r : io::read_run(bm25)) ranked[r.query_id].push_back(fx_.grade_of.at(r.passage_id));
  for (const auto& [qid, grades] : ranked) {
    std::vector<int> all;
    for (const auto& j : fx_.judgments) {
      if (j.query_id == qid) all.push_back(j.grade);
    }
    std::sort(all.rbegin(), all.rend());
    expected_sum += static_cast<double>(testing::oracle::dcg(grades, 10, true) / testing::oracle::dcg(all, 10, true));
  }
  char want[32];
  std::snprintf(want, sizeof want, "ndcg_cut_10\tall\t%.4f\n", expected_sum / ranked.size());
  EXPECT_TRUE(contains(e.out, want)) << e.out << "\nwanted " << want;
}

TEST_F(CliTest, AnalyzeReportsBinsAndConfusion) {
  const auto bm25 = first_stage();
  ASSERT_EQ(rerank(bm25, "direct", "nrr").code, 0);
  const auto scored = (run_dir("nrr") / "scored.nrr.jsonl").string();
  auto a = run_cli({"analyze", "--scores", scored, "--qrels", path("qrels.txt"), "--out-dir", out_dir(), "--run-name", "an"});
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_TRUE(contains(a.out, "check\tbins_sum=60\tn=60\tOK"));
  // Graded mock: only grade 3 (R=0.93) is predicted relevant, and under gt2 only grade 3 is positive.
  EXPECT_TRUE(contains(a.out, "9\t0\t51\t0\t60\t0\t0\n")) << a.out;
  EXPECT_TRUE(fs::exists(run_dir("an") / "distribution.nrr.tsv"));
  EXPECT_TRUE(fs::exists(run_dir("an") / "classification.nrr.jsonl"));

  auto ge2 = run_cli({"analyze", "--scores", scored, "--qrels", path("qrels.txt"), "--grade-rule", "ge2", "--out-dir", out_dir()});
  // Grade 2 passages (R=0.45) become false negatives: tp 9, fn 12.
  EXPECT_TRUE(contains(ge2.out, "9\t0\t39\t12\t60\t0\t0\n")) << ge2.out;
}

TEST_F(CliTest, DumpTracesShowsEveryStrategy) {
  const auto bm25 = first_stage(3);
  ASSERT_EQ(rerank(bm25, "direct", "nrr").code, 0);
  ASSERT_EQ(rerank(bm25, "reason", "rr").code, 0);
  auto d = run_cli({"dump-traces", "--scores", (run_dir("nrr") / "scored.nrr.jsonl").string(), "--scores",
                    (run_dir("rr") / "scored.rr.jsonl").string(), "--queries", path("queries.tsv"), "--corpus",
                    path("corpus.jsonl"), "--query-id", "q01", "--out-dir", out_dir(), "--run-name", "tr"});
  ASSERT_EQ(d.code, 0) << d.err;
  EXPECT_TRUE(contains(d.out, "Query [q01]: kw1alpha kw1beta"));
  EXPECT_TRUE(contains(d.out, "Passage [d01"));
  EXPECT_TRUE(contains(d.out, "Reasoning (rr, "));
  EXPECT_TRUE(contains(d.out, "Therefore, the answer is"));
  EXPECT_TRUE(contains(d.out, "  nrr: "));
  EXPECT_TRUE(contains(d.out, "  rr: 0.990"));
  EXPECT_FALSE(contains(d.out, "Query [q00]"));
}

TEST_F(CliTest, ConfigFileSuppliesDefaultsAndFlagsOverride) {
  const auto bm25 = first_stage();
  write_file(tmp_ / "cfg.toml", "[eval]\nk = 5\ngain = \"linear\"\n");
  auto a = run_cli({"--config", (tmp_ / "cfg.toml").string(), "eval", "--run-in", bm25, "--qrels", path("qrels.txt"),
                    "--out-dir", out_dir(), "--run-name", "cfg"});
  ASSERT_EQ(a.code, 0) << a.err;
  EXPECT_TRUE(contains(a.out, "metric=ndcg_cut_5 gain=linear"));
  const auto resolved = read_file(run_dir("cfg") / "resolved_config.toml");
  EXPECT_TRUE(contains(resolved, "k=5")) << resolved;
  auto b = run_cli({"--config", (tmp_ / "cfg.toml").string(), "eval", "--run-in", bm25, "--qrels", path("qrels.txt"),
                    "--k", "3", "--out-dir", out_dir()});
  EXPECT_TRUE(contains(b.out, "metric=ndcg_cut_3 gain=linear"));
}

TEST_F(CliTest, ResolvedConfigReplaysTheRun) {
  const auto bm25 = first_stage(10);
  ASSERT_EQ(rerank(bm25, "sc", "first", {"--samples", "3", "--seed", "5"}).code, 0);
  const auto resolved = read_file(run_dir("first") / "resolved_config.toml");
  EXPECT_EQ(resolved.rfind("[rerank]\n", 0), 0u) << resolved;
  EXPECT_FALSE(contains(resolved, "[eval]"));
  EXPECT_FALSE(contains(resolved, "temperature")) << resolved;

  auto again = run_cli({"--config", (run_dir("first") / "resolved_config.toml").string(), "rerank", "--run-name", "again"});
  ASSERT_EQ(again.code, 0) << again.err;
  EXPECT_EQ(read_file(run_dir("first") / "run.rr-sc3.txt"), read_file(run_dir("again") / "run.rr-sc3.txt"));
  EXPECT_EQ(read_file(run_dir("first") / "scored.rr-sc3.jsonl"), read_file(run_dir("again") / "scored.rr-sc3.jsonl"));
}

}  // namespace
}  // namespace rerank::cli
