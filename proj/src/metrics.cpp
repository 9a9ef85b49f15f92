#include "rerank/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "rerank/errors.hpp"

namespace rerank::metrics {

std::string_view to_string(Gain gain) { return gain == Gain::exponential ? "exponential" : "linear"; }

Gain parse_gain(std::string_view name) {
  if (name == "exponential") return Gain::exponential;
  if (name == "linear") return Gain::linear;
  throw std::invalid_argument("unknown gain '" + std::string(name) + "' (expected exponential or linear)");
}

double gain_of(int grade, Gain gain) {
  if (grade <= 0) return 0.0;
  return gain == Gain::exponential ? std::exp2(static_cast<double>(grade)) - 1.0 : static_cast<double>(grade);
}

namespace {

double discount(std::size_t rank) { return 1.0 / std::log2(static_cast<double>(rank) + 1.0); }

// Gains listed in rank order, truncated at k.
double dcg(const std::vector<int>& grades, std::size_t k, Gain gain) {
  double sum = 0.0;
  const std::size_t n = std::min(k, grades.size());
  for (std::size_t i = 0; i < n; ++i) sum += gain_of(grades[i], gain) * discount(i + 1);
  return sum;
}

}  // namespace

EvalReport ndcg_at_k(const std::vector<RunEntry>& run, const Qrels& qrels, std::size_t k, Gain gain) {
  if (k == 0) throw std::invalid_argument("k must be >= 1");
  std::map<std::string, std::vector<const RunEntry*>> per_query;
  std::set<std::pair<std::string, std::string>> seen;
  for (const auto& e : run) {
    if (!seen.emplace(e.query_id, e.passage_id).second) {
      throw ValidationError("run has duplicate entry for (" + e.query_id + ", " + e.passage_id + ")");
    }
    per_query[e.query_id].push_back(&e);
  }

  EvalReport report;
  report.k = k;
  report.gain = gain;
  double sum = 0.0;
  for (auto& [qid, rows] : per_query) {
    std::stable_sort(rows.begin(), rows.end(), [](const RunEntry* a, const RunEntry* b) { return a->rank < b->rank; });
    const auto& judged = qrels.for_query(qid);

    std::vector<int> ideal;
    ideal.reserve(judged.size());
    for (const auto& [pid, grade] : judged) ideal.push_back(grade);
    std::sort(ideal.begin(), ideal.end(), std::greater<>());
    const double idcg = dcg(ideal, k, gain);
    if (idcg == 0.0) {
      report.skipped.push_back(qid);
      continue;
    }

    std::vector<int> ranked;
    ranked.reserve(rows.size());
    for (const auto* e : rows) {
      auto it = judged.find(e->passage_id);
      ranked.push_back(it == judged.end() ? 0 : it->second);
    }
    const double value = dcg(ranked, k, gain) / idcg;
    report.per_query[qid] = value;
    sum += value;
  }
  report.query_count = report.per_query.size();
  report.mean = report.query_count ? sum / static_cast<double>(report.query_count) : 0.0;
  return report;
}

std::string_view to_string(GradeRule rule) { return rule == GradeRule::gt2 ? "gt2" : "ge2"; }

GradeRule parse_grade_rule(std::string_view name) {
  if (name == "gt2") return GradeRule::gt2;
  if (name == "ge2") return GradeRule::ge2;
  throw std::invalid_argument("unknown grade rule '" + std::string(name) + "' (expected gt2 or ge2)");
}

bool is_positive(int grade, GradeRule rule) { return rule == GradeRule::gt2 ? grade > 2 : grade >= 2; }

ClassificationReport classify(const std::vector<ScoredPair>& scores, const Qrels& qrels, double score_threshold,
                              GradeRule rule) {
  ClassificationReport r;
  r.score_threshold = score_threshold;
  r.grade_rule = rule;
  for (const auto& s : scores) {
    if (s.error) {
      ++r.failed;
      continue;
    }
    auto grade = qrels.grade(s.query_id, s.passage_id);
    if (!grade) {
      ++r.unjudged;
      continue;
    }
    const bool predicted = s.score.value() > score_threshold;
    const bool actual = is_positive(*grade, rule);
    if (predicted && actual) ++r.tp;
    else if (predicted) ++r.fp;
    else if (actual) ++r.fn;
    else ++r.tn;
  }
  const double tp = static_cast<double>(r.tp);
  r.precision_undefined = r.tp + r.fp == 0;
  r.recall_undefined = r.tp + r.fn == 0;
  r.precision = r.precision_undefined ? 0.0 : tp / static_cast<double>(r.tp + r.fp);
  r.recall = r.recall_undefined ? 0.0 : tp / static_cast<double>(r.tp + r.fn);
  r.f1 = r.precision + r.recall == 0.0 ? 0.0 : 2.0 * r.precision * r.recall / (r.precision + r.recall);
  return r;
}

std::size_t bin_index(double score) {
  if (!(score >= 0.0 && score <= 1.0)) throw std::invalid_argument("score outside [0, 1]: " + std::to_string(score));
  const auto& edges = ScoreDistribution::kEdges;
  auto it = std::upper_bound(edges.begin(), edges.end(), score);
  auto idx = static_cast<std::size_t>(it - edges.begin()) - 1;
  return std::min<std::size_t>(idx, 9);
}

ScoreDistribution bin_scores(const std::vector<double>& scores) {
  if (scores.empty()) throw std::invalid_argument("cannot bin an empty score list");
  ScoreDistribution d;
  for (double s : scores) ++d.counts[bin_index(s)];
  d.total = scores.size();
  std::size_t partial = 0;
  for (std::size_t i = 1; i <= 8; ++i) partial += d.counts[i];
  const double n = static_cast<double>(d.total);
  d.low = static_cast<double>(d.counts[0]) / n;
  d.partial = static_cast<double>(partial) / n;
  d.high = static_cast<double>(d.counts[9]) / n;
  return d;
}

}  // namespace rerank::metrics
