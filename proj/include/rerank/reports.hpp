#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "rerank/metrics.hpp"
#include "rerank/types.hpp"

namespace rerank::reports {

// Human-readable tables plus one-record-per-line JSON for each report kind.

std::string eval_table(const metrics::EvalReport& report, const std::string& label);
std::string eval_records(const metrics::EvalReport& report, const std::string& label);

std::string distribution_table(const metrics::ScoreDistribution& dist, const std::string& label);
/// Ten bin records followed by one region record.
std::string distribution_records(const metrics::ScoreDistribution& dist, const std::string& label);

std::string classification_table(const metrics::ClassificationReport& report, const std::string& label);
std::string classification_records(const metrics::ClassificationReport& report, const std::string& label);

/// One labelled scoring run for the trace listing.
struct StrategyScores {
  std::string label;
  std::vector<ScoredPair> pairs;
};

/// Query / Passage / Reasoning / R blocks, one per (query, passage) pair that
/// appears in any of the inputs, in first-appearance order.
std::string trace_listing(const std::vector<StrategyScores>& runs,
                          const std::unordered_map<std::string, Query>& queries, const Corpus& corpus);

}  // namespace rerank::reports
