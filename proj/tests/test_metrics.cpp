#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "oracles.hpp"
#include "rerank/errors.hpp"
#include "rerank/metrics.hpp"
#include "rerank/reports.hpp"

namespace rerank::metrics {
namespace {

namespace oracle = rerank::testing::oracle;

std::vector<RunEntry> run_from(const std::string& qid, const std::vector<std::string>& ids) {
  std::vector<RunEntry> run;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    run.push_back({qid, ids[i], static_cast<int>(i + 1), static_cast<double>(ids.size() - i), "t"});
  }
  return run;
}

TEST(Ndcg, WorkedExample) {
  Qrels q;
  q.add({"q", "a", 0});
  q.add({"q", "b", 3});
  q.add({"q", "c", 1});
  auto r = ndcg_at_k(run_from("q", {"a", "b", "c"}), q, 3);
  const double dcg = 7.0 / std::log2(3.0) + 1.0 / 2.0;
  const double idcg = 7.0 + 1.0 / std::log2(3.0);
  EXPECT_NEAR(dcg, 4.9165, 1e-4);
  EXPECT_NEAR(idcg, 7.6309, 1e-4);
  EXPECT_NEAR(r.per_query.at("q"), dcg / idcg, 1e-12);
  EXPECT_NEAR(r.per_query.at("q"), 0.6443, 1e-4);
  EXPECT_NEAR(r.per_query.at("q"),
              static_cast<double>(oracle::dcg({0, 3, 1}, 3, true) / oracle::ideal_dcg_by_enumeration({0, 3, 1}, 3, true)),
              1e-12);
}

TEST(Ndcg, IdealOrderIsExactlyOne) {
  Qrels q;
  q.add({"q", "a", 1});
  q.add({"q", "b", 3});
  q.add({"q", "c", 2});
  EXPECT_EQ(ndcg_at_k(run_from("q", {"b", "c", "a"}), q).mean, 1.0);
  EXPECT_EQ(ndcg_at_k(run_from("q", {"b", "c", "a"}), q, 10, Gain::linear).mean, 1.0);
}

TEST(Ndcg, SkipsQueriesWithoutRelevantDocuments) {
  Qrels q;
  q.add({"q1", "a", 2});
  q.add({"q2", "x", 0});
  auto run = run_from("q1", {"z", "a"});
  auto more = run_from("q2", {"x"});
  auto unjudged = run_from("q3", {"y"});
  run.insert(run.end(), more.begin(), more.end());
  run.insert(run.end(), unjudged.begin(), unjudged.end());
  auto r = ndcg_at_k(run, q);
  EXPECT_EQ(r.query_count, 1u);
  EXPECT_EQ(r.skipped, (std::vector<std::string>{"q2", "q3"}));
  EXPECT_NEAR(r.mean, 1.0 / std::log2(3.0), 1e-12);
}

TEST(Ndcg, UsesRankNotFileOrder) {
  Qrels q;
  q.add({"q", "a", 3});
  std::vector<RunEntry> run{{"q", "b", 1, 2.0, "t"}, {"q", "a", 2, 1.0, "t"}};
  std::reverse(run.begin(), run.end());
  EXPECT_NEAR(ndcg_at_k(run, q).mean, 1.0 / std::log2(3.0), 1e-12);
}

TEST(Ndcg, GainModesDiffer) {
  Qrels q;
  q.add({"q", "a", 1});
  q.add({"q", "b", 3});
  auto run = run_from("q", {"a", "b"});
  const double e = ndcg_at_k(run, q, 10, Gain::exponential).mean;
  const double l = ndcg_at_k(run, q, 10, Gain::linear).mean;
  EXPECT_NEAR(e, static_cast<double>(oracle::dcg({1, 3}, 10, true) / oracle::dcg({3, 1}, 10, true)), 1e-12);
  EXPECT_NEAR(l, static_cast<double>(oracle::dcg({1, 3}, 10, false) / oracle::dcg({3, 1}, 10, false)), 1e-12);
  EXPECT_NE(e, l);
}

TEST(Ndcg, RejectsDuplicatesAndZeroK) {
  Qrels q;
  q.add({"q", "a", 1});
  auto run = run_from("q", {"a", "a"});
  EXPECT_THROW(ndcg_at_k(run, q), ValidationError);
  EXPECT_THROW(ndcg_at_k(run_from("q", {"a"}), q, 0), std::invalid_argument);
}

TEST(Ndcg, AdjacentSwapTowardIdealNeverHurts) {
  std::mt19937 rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = std::uniform_int_distribution<int>(2, 6)(rng);
    Qrels q;
    std::vector<std::string> ids;
    std::vector<int> grades;
    for (int i = 0; i < n; ++i) {
      ids.push_back("d" + std::to_string(i));
      grades.push_back(std::uniform_int_distribution<int>(0, 3)(rng));
      q.add({"q", ids.back(), grades.back()});
    }
    const std::size_t k = std::uniform_int_distribution<std::size_t>(1, 6)(rng);
    for (int i = 0; i + 1 < n; ++i) {
      if (grades[i] >= grades[i + 1]) continue;
      auto swapped = ids;
      std::swap(swapped[i], swapped[i + 1]);
      EXPECT_LE(ndcg_at_k(run_from("q", ids), q, k).mean, ndcg_at_k(run_from("q", swapped), q, k).mean + 1e-15);
    }
  }
}

TEST(Classify, PerfectScores) {
  Qrels q;
  std::vector<ScoredPair> s;
  for (int i = 0; i < 8; ++i) {
    const std::string id = "d" + std::to_string(i);
    q.add({"q", id, i % 4});
    ScoredPair p;
    p.query_id = "q";
    p.passage_id = id;
    p.score = RelevanceScore(i % 4 == 3 ? 1.0 : 0.0);
    s.push_back(p);
  }
  auto r = classify(s, q);
  EXPECT_EQ(r.precision, 1.0);
  EXPECT_EQ(r.recall, 1.0);
  EXPECT_EQ(r.f1, 1.0);
  EXPECT_EQ(r.judged(), 8u);
}

std::vector<ScoredPair> planted(std::size_t tp, std::size_t fp, std::size_t fn, std::size_t tn, Qrels& q,
                                int positive_grade, int negative_grade) {
  std::vector<ScoredPair> s;
  auto add = [&](std::size_t n, bool predicted, bool actual) {
    for (std::size_t i = 0; i < n; ++i) {
      ScoredPair p;
      p.query_id = "q";
      p.passage_id = "d" + std::to_string(s.size());
      p.score = RelevanceScore(predicted ? 0.75 : 0.25);
      q.add({"q", p.passage_id, actual ? positive_grade : negative_grade});
      s.push_back(p);
    }
  };
  add(tp, true, true);
  add(fp, true, false);
  add(fn, false, true);
  add(tn, false, false);
  return s;
}

TEST(Classify, PlantedConfusionMatrix) {
  Qrels q;
  auto s = planted(3, 1, 2, 0, q, 3, 0);
  auto r = classify(s, q);
  EXPECT_EQ(r.tp, 3u);
  EXPECT_EQ(r.fp, 1u);
  EXPECT_EQ(r.fn, 2u);
  EXPECT_DOUBLE_EQ(r.precision, 0.75);
  EXPECT_DOUBLE_EQ(r.recall, 0.6);
  EXPECT_NEAR(r.f1, 2.0 / 3.0, 1e-12);
}

TEST(Classify, ThresholdIsStrict) {
  Qrels q;
  q.add({"q", "a", 3});
  ScoredPair p;
  p.query_id = "q";
  p.passage_id = "a";
  p.score = RelevanceScore(0.5);
  auto r = classify({p}, q);
  EXPECT_EQ(r.fn, 1u);
  EXPECT_TRUE(r.precision_undefined);
  EXPECT_EQ(r.precision, 0.0);
  EXPECT_EQ(r.f1, 0.0);
}

TEST(Classify, GradeRules) {
  EXPECT_FALSE(is_positive(2, GradeRule::gt2));
  EXPECT_TRUE(is_positive(3, GradeRule::gt2));
  EXPECT_TRUE(is_positive(2, GradeRule::ge2));
  EXPECT_FALSE(is_positive(1, GradeRule::ge2));
  EXPECT_EQ(parse_grade_rule("ge2"), GradeRule::ge2);
  EXPECT_THROW(parse_grade_rule("gt1"), std::invalid_argument);
}

TEST(Classify, UnjudgedAndFailedAreExcluded) {
  Qrels q;
  q.add({"q", "a", 3});
  ScoredPair judged, unjudged, failed;
  judged.query_id = unjudged.query_id = failed.query_id = "q";
  judged.passage_id = "a";
  unjudged.passage_id = "b";
  failed.passage_id = "a";
  judged.score = unjudged.score = RelevanceScore(0.9);
  failed.error = "boom";
  auto r = classify({judged, unjudged, failed}, q);
  EXPECT_EQ(r.judged(), 1u);
  EXPECT_EQ(r.unjudged, 1u);
  EXPECT_EQ(r.failed, 1u);
}

TEST(Classify, ReportFormatting) {
  Qrels q;
  auto s = planted(110, 44, 27, 50, q, 3, 1);
  auto r = classify(s, q);
  const auto table = reports::classification_table(r, "nrr");
  EXPECT_NE(table.find("71.4\t80.3\t75.6\n"), std::string::npos) << table;
  EXPECT_NE(table.find("grade_rule=gt2"), std::string::npos);
  EXPECT_NE(table.find("ge2 counts grade 2"), std::string::npos);
  EXPECT_NE(table.find("threshold: R > 0.5"), std::string::npos);
  const auto rec = reports::classification_records(r, "nrr");
  EXPECT_NE(rec.find("\"tp\":110"), std::string::npos);
}

TEST(Bins, CountsAndRegions) {
  std::vector<double> s(7, 0.05);
  s.push_back(0.5);
  s.push_back(0.95);
  s.push_back(0.95);
  auto d = bin_scores(s);
  EXPECT_DOUBLE_EQ(d.low, 0.7);
  EXPECT_DOUBLE_EQ(d.partial, 0.1);
  EXPECT_DOUBLE_EQ(d.high, 0.2);
  EXPECT_EQ(d.total, 10u);
  EXPECT_NEAR(d.low + d.partial + d.high, 1.0, 1e-12);
}

TEST(Bins, EdgeConvention) {
  EXPECT_EQ(bin_index(0.0), 0u);
  EXPECT_EQ(bin_index(0.1), 1u);
  EXPECT_EQ(bin_index(0.0999999), 0u);
  EXPECT_EQ(bin_index(0.9), 9u);
  EXPECT_EQ(bin_index(1.0), 9u);
  EXPECT_THROW(bin_index(1.0000001), std::invalid_argument);
  EXPECT_THROW(bin_scores({}), std::invalid_argument);
}

TEST(Bins, PermutationInvariant) {
  std::mt19937 rng(5);
  std::vector<double> s;
  for (int i = 0; i < 500; ++i) s.push_back(std::uniform_real_distribution<double>(0.0, 1.0)(rng));
  auto a = bin_scores(s);
  std::shuffle(s.begin(), s.end(), rng);
  auto b = bin_scores(s);
  EXPECT_EQ(a.counts, b.counts);
  std::size_t sum = 0;
  for (auto c : a.counts) sum += c;
  EXPECT_EQ(sum, s.size());
}

TEST(Reports, DistributionTableHasCheckLine) {
  auto d = bin_scores({0.05, 0.5, 0.95, 1.0});
  const auto t = reports::distribution_table(d, "rr");
  EXPECT_NE(t.find("check\tbins_sum=4\tn=4\tOK"), std::string::npos) << t;
  EXPECT_NE(t.find("region\thigh[0.9,1.0]\t0.5000"), std::string::npos) << t;
}

TEST(Reports, EvalHeaderNamesGain) {
  Qrels q;
  q.add({"q", "a", 2});
  auto r = ndcg_at_k(run_from("q", {"a"}), q, 10, Gain::linear);
  const auto t = reports::eval_table(r, "bm25");
  EXPECT_EQ(t.rfind("# run=bm25 metric=ndcg_cut_10 gain=linear\n", 0), 0u) << t;
  EXPECT_NE(t.find("ndcg_cut_10\tall\t1.0000\n"), std::string::npos);
}

}  // namespace
}  // namespace rerank::metrics
