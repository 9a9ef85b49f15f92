#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace rerank {

// Ids are opaque strings. Nothing ever parses them as numbers.

struct Query {
  std::string id;
  std::string text;
};

struct Passage {
  std::string id;
  std::string text;
};

/// An ordered passage collection with unique ids.
class Corpus {
 public:
  Corpus() = default;
  /// Throws ValidationError on an empty id or a duplicate id.
  explicit Corpus(std::vector<Passage> passages);

  std::size_t size() const { return passages_.size(); }
  bool empty() const { return passages_.empty(); }
  const std::vector<Passage>& passages() const { return passages_; }
  const Passage& at(std::size_t ordinal) const { return passages_.at(ordinal); }

  std::optional<std::size_t> ordinal_of(const std::string& id) const;
  const Passage* find(const std::string& id) const;

 private:
  std::vector<Passage> passages_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

/// First-stage result for one (query, passage) pair.
struct Candidate {
  std::string query_id;
  std::string passage_id;
  double first_stage_score = 0.0;
  int first_stage_rank = 0;
};

/// Log-scale scores the model assigns to the two decision tokens.
struct DecisionLogits {
  double z_true = 0.0;
  double z_false = 0.0;
};

/// Probability of relevance, always within [0, 1].
class RelevanceScore {
 public:
  RelevanceScore() = default;
  /// Throws std::invalid_argument outside [0, 1] or on NaN.
  explicit RelevanceScore(double value);
  double value() const { return value_; }
  friend bool operator==(RelevanceScore, RelevanceScore) = default;

 private:
  double value_ = 0.0;
};

/// Generated reasoning chain. When `terminated` is true the model emitted the
/// end-of-think marker; the marker itself is never part of `text`.
struct ReasoningTrace {
  std::string text;
  bool terminated = false;
  std::size_t token_count = 0;

  friend bool operator==(const ReasoningTrace&, const ReasoningTrace&) = default;
};

struct Judgment {
  std::string query_id;
  std::string passage_id;
  int grade = 0;
};

/// Graded judgments indexed by query then passage. At most one grade per pair.
class Qrels {
 public:
  /// Throws ValidationError on a duplicate pair or a negative grade.
  void add(const Judgment& j);
  std::optional<int> grade(const std::string& query_id, const std::string& passage_id) const;
  /// All judged passages of a query (empty map when the query is unjudged).
  const std::map<std::string, int>& for_query(const std::string& query_id) const;
  const std::map<std::string, std::map<std::string, int>>& all() const { return grades_; }
  std::vector<Judgment> judgments() const;
  std::size_t size() const;

 private:
  std::map<std::string, std::map<std::string, int>> grades_;
};

/// One row of a TREC run file.
struct RunEntry {
  std::string query_id;
  std::string passage_id;
  int rank = 0;
  double score = 0.0;
  std::string tag;

  friend bool operator==(const RunEntry&, const RunEntry&) = default;
};

/// Candidates grouped per query, preserving first-appearance order of queries.
std::vector<std::pair<std::string, std::vector<Candidate>>> group_by_query(
    const std::vector<Candidate>& candidates);

/// Converts run rows into first-stage candidates (score and rank carried over).
std::vector<Candidate> candidates_from_run(const std::vector<RunEntry>& run);

/// Checks ranks 1..k without gaps and non-increasing scores per query.
void validate_candidates(const std::vector<Candidate>& candidates);

}  // namespace rerank
