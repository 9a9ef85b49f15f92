#include "rerank/backend.hpp"

#include <cmath>
#include <stdexcept>

namespace rerank::llm {

void BackendConfig::validate() const {
  if (max_in_flight < 1) throw std::invalid_argument("max in-flight requests must be >= 1");
  if (retry.max_attempts < 1) throw std::invalid_argument("retry attempts must be >= 1");
  if (top_logprobs < 1) throw std::invalid_argument("top logprobs count must be >= 1");
  if (tokens.positive.empty() || tokens.negative.empty()) throw std::invalid_argument("decision tokens must be non-empty");
  if (tokens.positive == tokens.negative) throw std::invalid_argument("decision tokens must differ");
}

void SamplingParams::validate() const {
  if (!(temperature >= 0.0) || !std::isfinite(temperature)) throw std::invalid_argument("temperature must be >= 0");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw std::invalid_argument("top_p must be in (0, 1]");
  if (max_reasoning_tokens == 0) throw std::invalid_argument("max reasoning tokens must be >= 1");
  if (stop.empty()) throw std::invalid_argument("stop sequence must be non-empty");
}

std::string close_reasoning(const std::string& prompt, const ReasoningTrace& trace, std::string_view stop,
                            std::string_view answer_scaffold) {
  std::string out;
  out.reserve(prompt.size() + trace.text.size() + stop.size() + answer_scaffold.size());
  out += prompt;
  out += trace.text;
  out += stop;
  out += answer_scaffold;
  return out;
}

std::pair<ReasoningTrace, DecisionLogits> generate_then_score(Backend& backend, const std::string& prompt,
                                                              const SamplingParams& sampling,
                                                              std::string_view answer_scaffold,
                                                              const PairContext& ctx) {
  ReasoningTrace trace = backend.generate(prompt, sampling, ctx);
  DecisionLogits logits = backend.score_decision(close_reasoning(prompt, trace, sampling.stop, answer_scaffold), ctx);
  return {std::move(trace), logits};
}

}  // namespace rerank::llm
