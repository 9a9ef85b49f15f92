#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "rerank/backend.hpp"
#include "rerank/types.hpp"

namespace rerank {

/// Chat-formatted pointwise relevance prompt. `user` holds the {query} and
/// {passage} placeholders, each exactly once.
struct PromptTemplate {
  std::string system;
  std::string user;
  std::string assistant_prefix;
  std::string think_open = "<think>";
  std::string think_close = "</think>";
  std::string forced_body;
  /// Appended after the closed think block before the decision is scored.
  std::string answer_scaffold = "\n";

  /// The standard Qwen2.5-chat relevance prompt.
  static PromptTemplate standard();
  /// JSON object with any subset of the fields above; missing fields keep
  /// their standard values.
  static PromptTemplate load(const std::filesystem::path& path);

  /// Throws ValidationError on a broken template.
  void validate() const;
  /// think_open + "\n" + forced_body + "\n" + think_close
  std::string forced_block() const;
};

enum class PromptMode { direct, open_think, forced_think };

std::string assemble_prompt(const PromptTemplate& tmpl, std::string_view query, std::string_view passage,
                            PromptMode mode);

/// Two-way softmax over the decision logits, taking the "true" share.
/// Throws std::invalid_argument on non-finite input.
RelevanceScore relevance_from_logits(const DecisionLogits& logits);

/// Keeps at most `max_code_points` UTF-8 code points.
std::string truncate_passage(std::string_view text, std::size_t max_code_points);

enum class StrategyKind { direct, reason, forced_no_reason, self_consistency };

std::string_view to_string(StrategyKind kind);
/// Accepts the enum names plus the short aliases nrr, rr, rrnr, sc.
StrategyKind parse_strategy(std::string_view name);

struct RerankStrategy {
  StrategyKind kind = StrategyKind::direct;
  std::size_t samples = 1;
  std::size_t max_passage_chars = 2048;

  void validate() const;
  /// Run tag: nrr, rr, rrnr or rr-sc<n>.
  std::string tag() const;
};

struct ScoredPair {
  std::string query_id;
  std::string passage_id;
  RelevanceScore score;
  std::vector<ReasoningTrace> traces;
  std::vector<double> per_sample;  // self-consistency only
  std::string strategy;
  std::size_t failed_samples = 0;
  std::optional<std::string> error;  // set when the pair could not be scored

  friend bool operator==(const ScoredPair&, const ScoredPair&) = default;
};

ScoredPair score_nrr(llm::Backend& backend, const PromptTemplate& tmpl, const Query& query, const Passage& passage);
ScoredPair score_rr(llm::Backend& backend, const PromptTemplate& tmpl, const Query& query, const Passage& passage,
                    const llm::SamplingParams& sampling);
ScoredPair score_rrnr(llm::Backend& backend, const PromptTemplate& tmpl, const Query& query, const Passage& passage);

/// Per-sample seed, a pure function of its inputs, in [0, 2^31).
std::int64_t sample_seed(std::string_view query_id, std::string_view passage_id, std::size_t sample_index,
                         std::uint64_t base_seed);

/// Averages R over `n` sampled reasoning chains. Sample i uses
/// sample_seed(query, passage, i, base_seed). With `average_successes`, failed
/// samples are skipped and counted; otherwise the first failure propagates.
ScoredPair score_self_consistency(llm::Backend& backend, const PromptTemplate& tmpl, const Query& query,
                                  const Passage& passage, const llm::SamplingParams& sampling, std::size_t n,
                                  std::uint64_t base_seed, bool average_successes = false);

struct ScoringOptions {
  RerankStrategy strategy;
  llm::SamplingParams sampling;  // used by reason and self_consistency
  std::uint64_t base_seed = 0;
  std::size_t concurrency = 1;
  bool allow_partial = false;
};

/// Scores every candidate, `concurrency` pairs at a time. Results come back in
/// candidate order regardless of completion order. Without allow_partial the
/// failure of the lowest-indexed failing pair is rethrown, annotated with its ids.
std::vector<ScoredPair> score_candidates(llm::Backend& backend, const PromptTemplate& tmpl,
                                         const std::vector<Candidate>& candidates,
                                         const std::unordered_map<std::string, Query>& queries, const Corpus& corpus,
                                         const ScoringOptions& options);

/// Orders each query's candidates by descending R, then ascending first-stage
/// rank, then passage id. Failed pairs go last with score -1. Queries are
/// emitted in id order.
std::vector<RunEntry> rerank(const std::vector<Candidate>& candidates, const std::vector<ScoredPair>& scores,
                             const std::string& tag);

}  // namespace rerank
