#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <semaphore>
#include <string>

#include <json.hpp>

#include "rerank/backend.hpp"

namespace rerank::llm {

struct HttpResponse {
  int status = 0;  // 0 when the request never got an answer
  std::string body;
  std::string error;  // transport error text when status == 0
};

/// POSTs a JSON body to a path. Implementations must be thread-safe.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual HttpResponse post(const std::string& path, const std::string& body) = 0;
  virtual std::string describe() const = 0;
};

/// Plain-HTTP transport on cpp-httplib; one connection per request.
class HttpTransport final : public Transport {
 public:
  /// `base` is scheme://host[:port]; throws std::invalid_argument otherwise.
  HttpTransport(std::string base, std::chrono::milliseconds timeout, std::string api_key);
  HttpResponse post(const std::string& path, const std::string& body) override;
  std::string describe() const override { return base_; }

 private:
  std::string base_;
  std::chrono::milliseconds timeout_;
  std::string api_key_;
};

/// Answers requests from a capture log written by CompletionsBackend. A
/// request matches when its path and canonical JSON body are identical.
class ReplayTransport final : public Transport {
 public:
  explicit ReplayTransport(const std::filesystem::path& capture);
  HttpResponse post(const std::string& path, const std::string& body) override;
  std::string describe() const override { return "replay:" + source_; }

 private:
  std::string source_;
  std::map<std::string, HttpResponse> responses_;
};

/// Splits "http://host:port/v1" into {"http://host:port", "/v1/completions"}.
std::pair<std::string, std::string> split_completions_endpoint(const std::string& endpoint);

/// Client for the JSON-over-HTTP text-completions protocol (vLLM and friends).
///
/// Decision scoring asks for one token with `top_logprobs` alternatives and
/// reads the log-probabilities of both decision tokens from the first
/// position. Log-probabilities differ from raw logits by a per-position
/// constant, which the two-way softmax cancels, so they can stand in for
/// logits directly.
class CompletionsBackend final : public Backend {
 public:
  CompletionsBackend(BackendConfig cfg, std::unique_ptr<Transport> transport);

  DecisionLogits score_decision(const std::string& prompt, const PairContext& ctx) override;
  ReasoningTrace generate(const std::string& prompt, const SamplingParams& sampling, const PairContext& ctx) override;
  /// Probes that each decision word is a single token of the served model.
  void validate() override;
  std::string describe() const override;

  nlohmann::json score_request(const std::string& prompt) const;
  nlohmann::json generate_request(const std::string& prompt, const SamplingParams& sampling) const;

  /// Parses a scoring response; throws ProtocolError naming `ctx` when a
  /// decision token is absent from the top log-probabilities.
  static DecisionLogits parse_score_response(const nlohmann::json& response, const DecisionTokens& tokens,
                                             int top_logprobs, const PairContext& ctx);
  static ReasoningTrace parse_generate_response(const nlohmann::json& response, const std::string& stop);

 private:
  nlohmann::json call(const nlohmann::json& request, const PairContext& ctx);

  BackendConfig cfg_;
  std::string path_;
  std::unique_ptr<Transport> transport_;
  std::counting_semaphore<4096> in_flight_;
  std::mutex capture_mutex_;
};

/// Builds a backend from a spec string: "mock:<table>", "replay:<capture>" or
/// an http:// endpoint (in which case cfg.endpoint is overridden).
std::unique_ptr<Backend> make_backend(const std::string& spec, BackendConfig cfg);

}  // namespace rerank::llm
