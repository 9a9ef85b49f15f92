#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>

#include "rerank/types.hpp"

namespace rerank::llm {

/// The two vocabulary items whose next-position scores define relevance.
struct DecisionTokens {
  std::string positive = "true";
  std::string negative = "false";
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{200};
};

struct BackendConfig {
  std::string endpoint = "http://127.0.0.1:8000/v1";
  std::string model;
  std::chrono::milliseconds timeout{120'000};
  int max_in_flight = 16;
  RetryPolicy retry;
  DecisionTokens tokens;
  int top_logprobs = 20;
  std::string api_key;          // sent as a bearer token when non-empty
  std::string capture_log;      // line-delimited request/response mirror when non-empty

  /// Throws std::invalid_argument on a non-positive bound or equal decision tokens.
  void validate() const;
};

inline constexpr std::string_view kThinkClose = "</think>";

struct SamplingParams {
  double temperature = 0.0;  // 0 means greedy
  double top_p = 1.0;
  std::size_t max_reasoning_tokens = 8192;
  std::string stop = std::string(kThinkClose);
  std::optional<std::int64_t> seed;

  void validate() const;
};

/// Which pair a request belongs to. Carried for error messages and so the
/// table mock can key on ids.
struct PairContext {
  std::string query_id;
  std::string passage_id;
};

/// Backend contract. Implementations must be safe to call from many threads.
class Backend {
 public:
  virtual ~Backend() = default;

  /// Next-position log-scores of both decision tokens after `prompt`.
  virtual DecisionLogits score_decision(const std::string& prompt, const PairContext& ctx) = 0;

  /// Samples a continuation of `prompt` up to (excluding) `sampling.stop`.
  virtual ReasoningTrace generate(const std::string& prompt, const SamplingParams& sampling,
                                  const PairContext& ctx) = 0;

  /// Startup check (decision tokens distinct and single-token). Default: no-op.
  virtual void validate() {}

  virtual std::string describe() const = 0;
};

/// Generates a reasoning trace, closes it with `sampling.stop` (whether the
/// model emitted it or the token budget ran out) plus `answer_scaffold`, then
/// scores the decision tokens at the following position.
std::pair<ReasoningTrace, DecisionLogits> generate_then_score(Backend& backend, const std::string& prompt,
                                                              const SamplingParams& sampling,
                                                              std::string_view answer_scaffold,
                                                              const PairContext& ctx);

/// The prompt generate_then_score scores after a given trace.
std::string close_reasoning(const std::string& prompt, const ReasoningTrace& trace, std::string_view stop,
                            std::string_view answer_scaffold);

}  // namespace rerank::llm
