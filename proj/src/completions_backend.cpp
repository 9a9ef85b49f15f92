#include "rerank/completions_backend.hpp"

#include <fstream>
#include <stdexcept>
#include <thread>

#include <httplib.h>

#include "rerank/errors.hpp"
#include "rerank/mock_backend.hpp"

namespace rerank::llm {
namespace {

using json = nlohmann::json;

std::string pair_label(const PairContext& ctx) {
  if (ctx.query_id.empty() && ctx.passage_id.empty()) return "startup probe";
  return "(" + ctx.query_id + ", " + ctx.passage_id + ")";
}

bool retryable(int status) { return status == 0 || status == 429 || status >= 500; }

class SlotGuard {
 public:
  explicit SlotGuard(std::counting_semaphore<4096>& sem) : sem_(sem) { sem_.acquire(); }
  ~SlotGuard() { sem_.release(); }
  SlotGuard(const SlotGuard&) = delete;
  SlotGuard& operator=(const SlotGuard&) = delete;

 private:
  std::counting_semaphore<4096>& sem_;
};

const json& first_choice(const json& response) {
  if (!response.is_object() || !response.contains("choices") || !response["choices"].is_array() ||
      response["choices"].empty()) {
    throw ProtocolError("completion response has no choices");
  }
  return response["choices"][0];
}

// Accepts both {"tok": lp, ...} and [{"token": "tok", "logprob": lp}, ...].
std::map<std::string, double> first_position_logprobs(const json& choice) {
  if (!choice.contains("logprobs") || choice["logprobs"].is_null()) {
    throw ProtocolError("completion response carries no logprobs; the server must support the logprobs field");
  }
  const json& lp = choice["logprobs"];
  const json* top = nullptr;
  if (lp.contains("top_logprobs") && lp["top_logprobs"].is_array() && !lp["top_logprobs"].empty()) {
    top = &lp["top_logprobs"][0];
  } else if (lp.contains("content") && lp["content"].is_array() && !lp["content"].empty() &&
             lp["content"][0].contains("top_logprobs")) {
    top = &lp["content"][0]["top_logprobs"];
  }
  if (top == nullptr) throw ProtocolError("completion response has no top_logprobs for the first position");

  std::map<std::string, double> out;
  if (top->is_object()) {
    for (const auto& [token, value] : top->items()) {
      if (value.is_number()) out[token] = value.get<double>();
    }
  } else if (top->is_array()) {
    for (const auto& item : *top) {
      if (item.contains("token") && item.contains("logprob") && item["logprob"].is_number()) {
        out[item["token"].get<std::string>()] = item["logprob"].get<double>();
      }
    }
  }
  return out;
}

}  // namespace

HttpTransport::HttpTransport(std::string base, std::chrono::milliseconds timeout, std::string api_key)
    : base_(std::move(base)), timeout_(timeout), api_key_(std::move(api_key)) {
  if (base_.rfind("http://", 0) != 0) {
    throw std::invalid_argument("only plain http:// endpoints are supported, got '" + base_ + "'");
  }
}

HttpResponse HttpTransport::post(const std::string& path, const std::string& body) {
  httplib::Client client(base_);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
  const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
  client.set_connection_timeout(secs.count(), usecs.count());
  client.set_read_timeout(secs.count(), usecs.count());
  client.set_write_timeout(secs.count(), usecs.count());
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

  auto res = client.Post(path, headers, body, "application/json");
  if (!res) return {0, {}, httplib::to_string(res.error())};
  return {res->status, res->body, {}};
}

ReplayTransport::ReplayTransport(const std::filesystem::path& capture) : source_(capture.string()) {
  std::ifstream in(capture, std::ios::binary);
  if (!in) throw ValidationError("cannot open capture log: " + source_);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ValidationError::at(source_, line_no, e.what());
    }
    if (!rec.contains("path") || !rec.contains("request") || !rec.contains("status")) {
      throw ValidationError::at(source_, line_no, "capture record needs path, request and status");
    }
    HttpResponse resp;
    resp.status = rec["status"].get<int>();
    if (rec.contains("response")) {
      resp.body = rec["response"].is_string() ? rec["response"].get<std::string>() : rec["response"].dump();
    }
    responses_[rec["path"].get<std::string>() + "\n" + rec["request"].dump()] = std::move(resp);
  }
}

HttpResponse ReplayTransport::post(const std::string& path, const std::string& body) {
  std::string key;
  try {
    key = path + "\n" + json::parse(body).dump();
  } catch (const json::parse_error&) {
    key = path + "\n" + body;
  }
  auto it = responses_.find(key);
  if (it == responses_.end()) return {0, {}, "no captured response for this request in " + source_};
  return it->second;
}

std::pair<std::string, std::string> split_completions_endpoint(const std::string& endpoint) {
  const auto scheme = endpoint.find("://");
  if (scheme == std::string::npos) throw std::invalid_argument("endpoint needs a scheme: '" + endpoint + "'");
  const auto slash = endpoint.find('/', scheme + 3);
  std::string base = slash == std::string::npos ? endpoint : endpoint.substr(0, slash);
  std::string path = slash == std::string::npos ? std::string() : endpoint.substr(slash);
  while (!path.empty() && path.back() == '/') path.pop_back();
  const std::string suffix = "/completions";
  if (path.size() < suffix.size() || path.compare(path.size() - suffix.size(), suffix.size(), suffix) != 0) {
    path += suffix;
  }
  return {base, path};
}

CompletionsBackend::CompletionsBackend(BackendConfig cfg, std::unique_ptr<Transport> transport)
    : cfg_(std::move(cfg)), transport_(std::move(transport)), in_flight_(0) {
  cfg_.validate();
  if (cfg_.max_in_flight > 4096) throw std::invalid_argument("max in-flight requests must be <= 4096");
  path_ = split_completions_endpoint(cfg_.endpoint).second;
  in_flight_.release(cfg_.max_in_flight);
}

std::string CompletionsBackend::describe() const {
  return "completions " + transport_->describe() + path_ + " model=" + cfg_.model;
}

json CompletionsBackend::score_request(const std::string& prompt) const {
  return {{"model", cfg_.model},  {"prompt", prompt}, {"max_tokens", 1},
          {"temperature", 0.0},   {"top_p", 1.0},     {"logprobs", cfg_.top_logprobs},
          {"echo", false}};
}

json CompletionsBackend::generate_request(const std::string& prompt, const SamplingParams& sampling) const {
  json req = {{"model", cfg_.model},
              {"prompt", prompt},
              {"max_tokens", sampling.max_reasoning_tokens},
              {"temperature", sampling.temperature},
              {"top_p", sampling.top_p},
              {"stop", json::array({sampling.stop})},
              {"echo", false}};
  if (sampling.seed) req["seed"] = *sampling.seed;
  return req;
}

json CompletionsBackend::call(const json& request, const PairContext& ctx) {
  const std::string body = request.dump();
  HttpResponse resp;
  {
    SlotGuard slot(in_flight_);
    auto backoff = cfg_.retry.initial_backoff;
    for (int attempt = 1; attempt <= cfg_.retry.max_attempts; ++attempt) {
      resp = transport_->post(path_, body);
      if (!retryable(resp.status) || attempt == cfg_.retry.max_attempts) break;
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }

  json parsed;
  bool parsed_ok = false;
  if (resp.status != 0) {
    try {
      parsed = json::parse(resp.body);
      parsed_ok = true;
    } catch (const json::parse_error&) {
    }
  }

  if (!cfg_.capture_log.empty()) {
    json rec = {{"path", path_}, {"request", request}, {"status", resp.status}};
    rec["response"] = parsed_ok ? parsed : json(resp.body);
    std::lock_guard lock(capture_mutex_);
    std::ofstream out(cfg_.capture_log, std::ios::app | std::ios::binary);
    out << rec.dump() << '\n';
  }

  if (resp.status == 0) {
    throw BackendError("backend unreachable for " + pair_label(ctx) + " after " +
                       std::to_string(cfg_.retry.max_attempts) + " attempt(s): " + resp.error);
  }
  if (resp.status != 200) {
    throw BackendError("backend returned HTTP " + std::to_string(resp.status) + " for " + pair_label(ctx) + ": " +
                       resp.body.substr(0, 500));
  }
  if (!parsed_ok) throw ProtocolError("backend returned invalid JSON for " + pair_label(ctx));
  return parsed;
}

DecisionLogits CompletionsBackend::parse_score_response(const json& response, const DecisionTokens& tokens,
                                                        int top_logprobs, const PairContext& ctx) {
  auto lps = first_position_logprobs(first_choice(response));
  DecisionLogits out;
  for (const auto* token : {&tokens.positive, &tokens.negative}) {
    auto it = lps.find(*token);
    if (it == lps.end()) {
      throw ProtocolError("decision token '" + *token + "' is not among the top-" + std::to_string(top_logprobs) +
                          " log-probabilities returned for " + pair_label(ctx) +
                          "; raise the logprobs count (--logprobs)");
    }
    (token == &tokens.positive ? out.z_true : out.z_false) = it->second;
  }
  return out;
}

ReasoningTrace CompletionsBackend::parse_generate_response(const json& response, const std::string& stop) {
  const json& choice = first_choice(response);
  if (!choice.contains("text") || !choice["text"].is_string()) throw ProtocolError("completion choice has no text");
  ReasoningTrace trace;
  trace.text = choice["text"].get<std::string>();

  const auto finish = choice.value("finish_reason", json()).is_string() ? choice["finish_reason"].get<std::string>()
                                                                      : std::string();
  if (choice.contains("stop_reason") && !choice["stop_reason"].is_null()) {
    // vLLM reports which stop string fired; null means end-of-sequence.
    trace.terminated = choice["stop_reason"].is_string() && choice["stop_reason"].get<std::string>() == stop;
  } else if (choice.contains("stop_reason")) {
    trace.terminated = false;
  } else {
    trace.terminated = finish == "stop";
  }
  // Some servers echo the stop string back.
  if (auto pos = trace.text.find(stop); pos != std::string::npos) {
    trace.text.resize(pos);
    trace.terminated = true;
  }

  if (response.contains("usage") && response["usage"].contains("completion_tokens")) {
    trace.token_count = response["usage"]["completion_tokens"].get<std::size_t>();
  }
  return trace;
}

DecisionLogits CompletionsBackend::score_decision(const std::string& prompt, const PairContext& ctx) {
  return parse_score_response(call(score_request(prompt), ctx), cfg_.tokens, cfg_.top_logprobs, ctx);
}

ReasoningTrace CompletionsBackend::generate(const std::string& prompt, const SamplingParams& sampling,
                                            const PairContext& ctx) {
  return parse_generate_response(call(generate_request(prompt, sampling), ctx), sampling.stop);
}

void CompletionsBackend::validate() {
  for (const auto* word : {&cfg_.tokens.positive, &cfg_.tokens.negative}) {
    json req = {{"model", cfg_.model}, {"prompt", *word}, {"max_tokens", 1}, {"temperature", 0.0},
                {"logprobs", 1},       {"echo", true}};
    json resp = call(req, {});
    const json& choice = first_choice(resp);

    std::optional<std::size_t> count;
    if (choice.contains("logprobs") && choice["logprobs"].is_object() && choice["logprobs"].contains("tokens")) {
      const auto& toks = choice["logprobs"]["tokens"];
      // Echoed prompt tokens followed by the one generated token; a leading
      // BOS-style token that is not part of the word is ignored.
      std::size_t n = toks.size() > 0 ? toks.size() - 1 : 0;
      if (n > 0 && toks[0].is_string() && word->rfind(toks[0].get<std::string>(), 0) != 0) --n;
      count = n;
    } else if (resp.contains("usage") && resp["usage"].contains("prompt_tokens")) {
      count = resp["usage"]["prompt_tokens"].get<std::size_t>();
    }
    if (!count) {
      throw ProtocolError("cannot determine how '" + *word +
                          "' tokenizes (server returned no echoed tokens); pass --skip-token-probe to bypass");
    }
    if (*count != 1) {
      throw ValidationError("decision word '" + *word + "' is " + std::to_string(*count) +
                            " tokens under the served model; it must be a single token");
    }
  }
}

std::unique_ptr<Backend> make_backend(const std::string& spec, BackendConfig cfg) {
  if (spec.rfind("mock:", 0) == 0) {
    return std::make_unique<MockBackend>(MockBackend::read_table(spec.substr(5)));
  }
  if (spec == "mock") return std::make_unique<MockBackend>();
  if (spec.rfind("replay:", 0) == 0) {
    return std::make_unique<CompletionsBackend>(std::move(cfg), std::make_unique<ReplayTransport>(spec.substr(7)));
  }
  if (spec.rfind("http://", 0) == 0 || spec.rfind("https://", 0) == 0) {
    cfg.endpoint = spec;
    auto base = split_completions_endpoint(cfg.endpoint).first;
    auto transport = std::make_unique<HttpTransport>(base, cfg.timeout, cfg.api_key);
    return std::make_unique<CompletionsBackend>(std::move(cfg), std::move(transport));
  }
  throw std::invalid_argument("unknown backend '" + spec + "' (expected mock:<table>, replay:<capture> or http://...)");
}

}  // namespace rerank::llm
