#pragma once

#include <array>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "rerank/rerankers.hpp"
#include "rerank/types.hpp"

namespace rerank::metrics {

enum class Gain { exponential, linear };

std::string_view to_string(Gain gain);
Gain parse_gain(std::string_view name);

struct EvalReport {
  std::size_t k = 10;
  Gain gain = Gain::exponential;
  std::map<std::string, double> per_query;  // judged queries only
  std::vector<std::string> skipped;         // queries whose ideal DCG is 0
  double mean = 0.0;
  std::size_t query_count = 0;
};

double gain_of(int grade, Gain gain);

/// NDCG@k per query of `run`. Unjudged passages count as grade 0. The ideal
/// DCG comes from all of the query's judgments; queries where it is 0 are
/// listed in `skipped` and left out of the mean. Throws ValidationError on a
/// duplicate (query, passage) row.
EvalReport ndcg_at_k(const std::vector<RunEntry>& run, const Qrels& qrels, std::size_t k = 10,
                     Gain gain = Gain::exponential);

/// Binary ground truth from a grade. The literal rule is grade > 2; the
/// alternative reading (highly relevant and up on a 0-3 scale) is grade >= 2.
enum class GradeRule { gt2, ge2 };

std::string_view to_string(GradeRule rule);
GradeRule parse_grade_rule(std::string_view name);
bool is_positive(int grade, GradeRule rule);

struct ClassificationReport {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
  double precision = 0.0, recall = 0.0, f1 = 0.0;
  bool precision_undefined = false;  // tp + fp == 0
  bool recall_undefined = false;     // tp + fn == 0
  double score_threshold = 0.5;
  GradeRule grade_rule = GradeRule::gt2;
  std::size_t unjudged = 0;  // scored pairs without a judgment, excluded
  std::size_t failed = 0;    // pairs that carry an error, excluded

  std::size_t judged() const { return tp + fp + tn + fn; }
};

/// Predicts relevant when R > threshold (strict).
ClassificationReport classify(const std::vector<ScoredPair>& scores, const Qrels& qrels, double score_threshold = 0.5,
                              GradeRule rule = GradeRule::gt2);

/// Ten bins [0,0.1), ..., [0.8,0.9), [0.9,1.0]; regions low = bin 0,
/// partial = bins 1-8, high = bin 9.
struct ScoreDistribution {
  static constexpr std::array<double, 11> kEdges{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  std::array<std::size_t, 10> counts{};
  std::size_t total = 0;
  double low = 0.0, partial = 0.0, high = 0.0;
};

/// Throws std::invalid_argument on an empty list or a value outside [0, 1].
ScoreDistribution bin_scores(const std::vector<double>& scores);

std::size_t bin_index(double score);

}  // namespace rerank::metrics
