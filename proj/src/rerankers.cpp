#include "rerank/rerankers.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <map>
#include <stdexcept>
#include <thread>

#include <json.hpp>

#include "rerank/errors.hpp"
#include "rerank/hash.hpp"

namespace rerank {
namespace {

constexpr std::string_view kQueryPlaceholder = "{query}";
constexpr std::string_view kPassagePlaceholder = "{passage}";

std::size_t count_occurrences(std::string_view hay, std::string_view needle) {
  std::size_t n = 0;
  for (auto pos = hay.find(needle); pos != std::string_view::npos; pos = hay.find(needle, pos + needle.size())) ++n;
  return n;
}

RelevanceScore backend_relevance(const DecisionLogits& logits, const llm::PairContext& ctx) {
  try {
    return relevance_from_logits(logits);
  } catch (const std::invalid_argument&) {
    throw ProtocolError("backend returned non-finite decision logits for (" + ctx.query_id + ", " + ctx.passage_id +
                        ")");
  }
}

ScoredPair make_pair(const Query& q, const Passage& p, RelevanceScore r, StrategyKind kind) {
  ScoredPair out;
  out.query_id = q.id;
  out.passage_id = p.id;
  out.score = r;
  out.strategy = std::string(to_string(kind));
  return out;
}

[[noreturn]] void rethrow_annotated(std::exception_ptr err, const Candidate& c) {
  const std::string prefix = "query '" + c.query_id + "', passage '" + c.passage_id + "': ";
  try {
    std::rethrow_exception(err);
  } catch (const ProtocolError& e) {
    throw ProtocolError(prefix + e.what());
  } catch (const BackendError& e) {
    throw BackendError(prefix + e.what());
  } catch (const ValidationError& e) {
    throw ValidationError(prefix + e.what());
  }
}

std::string describe_exception(std::exception_ptr err) {
  try {
    std::rethrow_exception(err);
  } catch (const std::exception& e) {
    return e.what();
  } catch (...) {
    return "unknown error";
  }
}

}  // namespace

PromptTemplate PromptTemplate::standard() {
  PromptTemplate t;
  t.system =
      "<|im_start|>system\n"
      "Determine if the following passage is relevant to the query. Answer only with 'true' or 'false'.\n"
      "<|im_end|>\n";
  t.user =
      "<|im_start|>user\n"
      "Query: {query}\n"
      "Passage: {passage}\n"
      "<|im_end|>\n";
  t.assistant_prefix = "<|im_start|>assistant\n";
  t.forced_body = "Okay, I have finished thinking.";
  return t;
}

PromptTemplate PromptTemplate::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open prompt template: " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  if (!j.is_object()) throw ValidationError(path.string() + ": template must be a JSON object");
  PromptTemplate t = standard();
  const std::pair<const char*, std::string*> fields[] = {
      {"system", &t.system},           {"user", &t.user},
      {"assistant_prefix", &t.assistant_prefix}, {"think_open", &t.think_open},
      {"think_close", &t.think_close}, {"forced_body", &t.forced_body},
      {"answer_scaffold", &t.answer_scaffold}};
  for (const auto& [key, slot] : fields) {
    if (!j.contains(key)) continue;
    if (!j[key].is_string()) throw ValidationError(path.string() + ": field '" + key + "' must be a string");
    *slot = j[key].get<std::string>();
  }
  for (const auto& [key, value] : j.items()) {
    bool known = std::any_of(std::begin(fields), std::end(fields), [&](const auto& f) { return key == f.first; });
    if (!known) throw ValidationError(path.string() + ": unknown template field '" + key + "'");
  }
  t.validate();
  return t;
}

void PromptTemplate::validate() const {
  if (count_occurrences(user, kQueryPlaceholder) != 1) {
    throw ValidationError("prompt template: user text must contain {query} exactly once");
  }
  if (count_occurrences(user, kPassagePlaceholder) != 1) {
    throw ValidationError("prompt template: user text must contain {passage} exactly once");
  }
  if (think_open.empty() || think_close.empty()) throw ValidationError("prompt template: think markers must be non-empty");
  if (forced_body.empty()) throw ValidationError("prompt template: forced-think body must be non-empty");
}

std::string PromptTemplate::forced_block() const { return think_open + "\n" + forced_body + "\n" + think_close; }

std::string assemble_prompt(const PromptTemplate& tmpl, std::string_view query, std::string_view passage,
                            PromptMode mode) {
  tmpl.validate();
  const std::string_view user = tmpl.user;
  const auto qpos = user.find(kQueryPlaceholder);
  const auto ppos = user.find(kPassagePlaceholder);

  // Single pass so placeholder-like text inside the query or passage is kept verbatim.
  std::string out = tmpl.system;
  const bool query_first = qpos < ppos;
  const auto first = query_first ? qpos : ppos;
  const auto second = query_first ? ppos : qpos;
  const auto first_len = query_first ? kQueryPlaceholder.size() : kPassagePlaceholder.size();
  const auto second_len = query_first ? kPassagePlaceholder.size() : kQueryPlaceholder.size();
  out += user.substr(0, first);
  out += query_first ? query : passage;
  out += user.substr(first + first_len, second - first - first_len);
  out += query_first ? passage : query;
  out += user.substr(second + second_len);
  out += tmpl.assistant_prefix;

  switch (mode) {
    case PromptMode::direct:
      break;
    case PromptMode::open_think:
      out += tmpl.think_open;
      break;
    case PromptMode::forced_think:
      out += tmpl.forced_block();
      break;
  }
  return out;
}

RelevanceScore relevance_from_logits(const DecisionLogits& logits) {
  if (!std::isfinite(logits.z_true) || !std::isfinite(logits.z_false)) {
    throw std::invalid_argument("decision logits must be finite");
  }
  // softmax(z_true, z_false)_true == sigmoid(z_true - z_false); evaluate on the
  // side where exp() cannot overflow.
  const double d = logits.z_true - logits.z_false;
  if (d >= 0.0) return RelevanceScore(1.0 / (1.0 + std::exp(-d)));
  const double e = std::exp(d);
  return RelevanceScore(e / (1.0 + e));
}

std::string truncate_passage(std::string_view text, std::size_t max_code_points) {
  std::size_t count = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    const auto c = static_cast<unsigned char>(text[i]);
    if ((c & 0xC0) == 0x80) continue;  // continuation byte
    if (count == max_code_points) return std::string(text.substr(0, i));
    ++count;
  }
  return std::string(text);
}

std::string_view to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::direct:
      return "direct";
    case StrategyKind::reason:
      return "reason";
    case StrategyKind::forced_no_reason:
      return "forced_no_reason";
    case StrategyKind::self_consistency:
      return "self_consistency";
  }
  return "unknown";
}

StrategyKind parse_strategy(std::string_view name) {
  if (name == "direct" || name == "nrr") return StrategyKind::direct;
  if (name == "reason" || name == "rr") return StrategyKind::reason;
  if (name == "forced_no_reason" || name == "rrnr") return StrategyKind::forced_no_reason;
  if (name == "self_consistency" || name == "sc") return StrategyKind::self_consistency;
  throw std::invalid_argument("unknown strategy '" + std::string(name) + "'");
}

void RerankStrategy::validate() const {
  if (samples < 1) throw std::invalid_argument("samples must be >= 1");
  if (samples != 1 && kind != StrategyKind::self_consistency) {
    throw std::invalid_argument("samples > 1 is only meaningful for self_consistency");
  }
  if (max_passage_chars < 1) throw std::invalid_argument("passage truncation must be >= 1 character");
}

std::string RerankStrategy::tag() const {
  switch (kind) {
    case StrategyKind::direct:
      return "nrr";
    case StrategyKind::reason:
      return "rr";
    case StrategyKind::forced_no_reason:
      return "rrnr";
    case StrategyKind::self_consistency:
      return "rr-sc" + std::to_string(samples);
  }
  return "unknown";
}

ScoredPair score_nrr(llm::Backend& backend, const PromptTemplate& tmpl, const Query& query, const Passage& passage) {
  const llm::PairContext ctx{query.id, passage.id};
  const auto prompt = assemble_prompt(tmpl, query.text, passage.text, PromptMode::direct);
  return make_pair(query, passage, backend_relevance(backend.score_decision(prompt, ctx), ctx), StrategyKind::direct);
}

ScoredPair score_rr(llm::Backend& backend, const PromptTemplate& tmpl, const Query& query, const Passage& passage,
                    const llm::SamplingParams& sampling) {
  const llm::PairContext ctx{query.id, passage.id};
  const auto prompt = assemble_prompt(tmpl, query.text, passage.text, PromptMode::open_think);
  llm::SamplingParams params = sampling;
  params.stop = tmpl.think_close;
  auto [trace, logits] = llm::generate_then_score(backend, prompt, params, tmpl.answer_scaffold, ctx);
  ScoredPair out = make_pair(query, passage, backend_relevance(logits, ctx), StrategyKind::reason);
  out.traces.push_back(std::move(trace));
  return out;
}

ScoredPair score_rrnr(llm::Backend& backend, const PromptTemplate& tmpl, const Query& query, const Passage& passage) {
  const llm::PairContext ctx{query.id, passage.id};
  const auto prompt = assemble_prompt(tmpl, query.text, passage.text, PromptMode::forced_think) + tmpl.answer_scaffold;
  return make_pair(query, passage, backend_relevance(backend.score_decision(prompt, ctx), ctx),
                   StrategyKind::forced_no_reason);
}

std::int64_t sample_seed(std::string_view query_id, std::string_view passage_id, std::size_t sample_index,
                         std::uint64_t base_seed) {
  std::uint64_t h = fnv1a(query_id);
  h = fnv1a(std::string_view("\x1f", 1), h);
  h = fnv1a(passage_id, h);
  h = splitmix64(h ^ splitmix64(base_seed) ^ splitmix64(0x5eed0000ULL + sample_index));
  return static_cast<std::int64_t>(h & 0x7fffffffULL);
}

ScoredPair score_self_consistency(llm::Backend& backend, const PromptTemplate& tmpl, const Query& query,
                                  const Passage& passage, const llm::SamplingParams& sampling, std::size_t n,
                                  std::uint64_t base_seed, bool average_successes) {
  if (n < 1) throw std::invalid_argument("self-consistency needs n >= 1");
  ScoredPair out;
  out.query_id = query.id;
  out.passage_id = passage.id;
  out.strategy = std::string(to_string(StrategyKind::self_consistency));

  std::exception_ptr last_error;
  for (std::size_t i = 0; i < n; ++i) {
    llm::SamplingParams params = sampling;
    params.seed = sample_seed(query.id, passage.id, i, base_seed);
    try {
      ScoredPair one = score_rr(backend, tmpl, query, passage, params);
      out.per_sample.push_back(one.score.value());
      out.traces.push_back(std::move(one.traces.front()));
    } catch (const BackendError&) {
      if (!average_successes) throw;
      last_error = std::current_exception();
      ++out.failed_samples;
    }
  }
  if (out.per_sample.empty()) std::rethrow_exception(last_error);

  double sum = 0.0;
  for (double r : out.per_sample) sum += r;
  // Clamp guards the last ulp; the mean of values in [0, 1] cannot leave it otherwise.
  out.score = RelevanceScore(std::clamp(sum / static_cast<double>(out.per_sample.size()), 0.0, 1.0));
  return out;
}

std::vector<ScoredPair> score_candidates(llm::Backend& backend, const PromptTemplate& tmpl,
                                         const std::vector<Candidate>& candidates,
                                         const std::unordered_map<std::string, Query>& queries, const Corpus& corpus,
                                         const ScoringOptions& options) {
  options.strategy.validate();
  options.sampling.validate();
  tmpl.validate();

  // Resolve inputs up front so data errors surface before any backend traffic.
  std::vector<const Query*> query_of(candidates.size());
  std::vector<Passage> passage_of(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const auto& c = candidates[i];
    auto q = queries.find(c.query_id);
    if (q == queries.end()) throw ValidationError("candidate references unknown query '" + c.query_id + "'");
    const Passage* p = corpus.find(c.passage_id);
    if (p == nullptr) throw ValidationError("candidate references unknown passage '" + c.passage_id + "'");
    query_of[i] = &q->second;
    passage_of[i] = {p->id, truncate_passage(p->text, options.strategy.max_passage_chars)};
  }

  std::vector<ScoredPair> results(candidates.size());
  std::vector<std::exception_ptr> errors(candidates.size());
  std::atomic<std::size_t> next{0};
  std::atomic<bool> stop{false};

  auto score_one = [&](std::size_t i) {
    const Query& q = *query_of[i];
    const Passage& p = passage_of[i];
    switch (options.strategy.kind) {
      case StrategyKind::direct:
        return score_nrr(backend, tmpl, q, p);
      case StrategyKind::forced_no_reason:
        return score_rrnr(backend, tmpl, q, p);
      case StrategyKind::reason: {
        llm::SamplingParams params = options.sampling;
        params.seed = sample_seed(q.id, p.id, 0, options.base_seed);
        return score_rr(backend, tmpl, q, p, params);
      }
      case StrategyKind::self_consistency:
        return score_self_consistency(backend, tmpl, q, p, options.sampling, options.strategy.samples,
                                      options.base_seed, options.allow_partial);
    }
    throw std::logic_error("unhandled strategy");
  };

  auto worker = [&] {
    while (!stop.load()) {
      const std::size_t i = next.fetch_add(1);
      if (i >= candidates.size()) return;
      try {
        results[i] = score_one(i);
      } catch (...) {
        errors[i] = std::current_exception();
        if (!options.allow_partial) stop = true;
      }
    }
  };

  const std::size_t threads = std::max<std::size_t>(1, std::min(options.concurrency, candidates.size()));
  {
    std::vector<std::jthread> pool;
    pool.reserve(threads);
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(worker);
  }

  for (std::size_t i = 0; i < candidates.size(); ++i) {
    if (!errors[i]) continue;
    if (!options.allow_partial) rethrow_annotated(errors[i], candidates[i]);
    auto& r = results[i];
    r = ScoredPair{};
    r.query_id = candidates[i].query_id;
    r.passage_id = candidates[i].passage_id;
    r.strategy = std::string(to_string(options.strategy.kind));
    r.error = describe_exception(errors[i]);
  }
  return results;
}

std::vector<RunEntry> rerank(const std::vector<Candidate>& candidates, const std::vector<ScoredPair>& scores,
                             const std::string& tag) {
  std::map<std::pair<std::string, std::string>, const ScoredPair*> by_pair;
  for (const auto& s : scores) {
    if (!by_pair.emplace(std::pair{s.query_id, s.passage_id}, &s).second) {
      throw ValidationError("duplicate score for (" + s.query_id + ", " + s.passage_id + ")");
    }
  }

  struct Row {
    const Candidate* candidate;
    const ScoredPair* scored;
  };
  std::map<std::string, std::vector<Row>> per_query;
  std::map<std::pair<std::string, std::string>, bool> seen;
  for (const auto& c : candidates) {
    if (!seen.emplace(std::pair{c.query_id, c.passage_id}, true).second) {
      throw ValidationError("duplicate candidate (" + c.query_id + ", " + c.passage_id + ")");
    }
    auto it = by_pair.find({c.query_id, c.passage_id});
    if (it == by_pair.end()) throw ValidationError("missing score for (" + c.query_id + ", " + c.passage_id + ")");
    per_query[c.query_id].push_back({&c, it->second});
  }

  std::vector<RunEntry> run;
  run.reserve(candidates.size());
  for (auto& [qid, rows] : per_query) {
    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) {
      const bool a_failed = a.scored->error.has_value();
      const bool b_failed = b.scored->error.has_value();
      if (a_failed != b_failed) return b_failed;
      if (!a_failed) {
        const double ra = a.scored->score.value();
        const double rb = b.scored->score.value();
        if (ra != rb) return ra > rb;
      }
      if (a.candidate->first_stage_rank != b.candidate->first_stage_rank) {
        return a.candidate->first_stage_rank < b.candidate->first_stage_rank;
      }
      return a.candidate->passage_id < b.candidate->passage_id;
    });
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const double score = rows[i].scored->error ? -1.0 : rows[i].scored->score.value();
      run.push_back({qid, rows[i].candidate->passage_id, static_cast<int>(i + 1), score, tag});
    }
  }
  return run;
}

}  // namespace rerank
