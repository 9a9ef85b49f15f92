#include "rerank/mock_backend.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>

#include <json.hpp>

#include "rerank/errors.hpp"
#include "rerank/hash.hpp"

namespace rerank::llm {
namespace {

using json = nlohmann::json;

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

// Uniform in [lo, hi] with 1e-3 resolution.
double hashed_value(std::uint64_t h, double lo, double hi) {
  const auto steps = static_cast<std::uint64_t>((hi - lo) * 1000.0);
  return lo + static_cast<double>(h % (steps + 1)) / 1000.0;
}

DecisionLogits logits_from_json(const json& j, const std::string& where) {
  if (!j.is_array() || j.size() != 2 || !j[0].is_number() || !j[1].is_number()) {
    throw ValidationError(where + ": logits must be a [z_true, z_false] pair");
  }
  return {j[0].get<double>(), j[1].get<double>()};
}

json logits_to_json(const DecisionLogits& l) { return json::array({l.z_true, l.z_false}); }

BackendError pair_failure(const PairContext& ctx, std::string_view what) {
  return BackendError("mock backend: injected " + std::string(what) + " failure for (" + ctx.query_id + ", " +
                      ctx.passage_id + ")");
}

}  // namespace

std::map<MockBackend::Key, MockEntry> MockBackend::read_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open mock table: " + path.string());
  std::map<Key, MockEntry> table;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const std::string where = path.string() + ":" + std::to_string(line_no);
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ValidationError(where + ": " + e.what());
    }
    if (!rec.is_object() || !rec.contains("query_id") || !rec.contains("passage_id")) {
      throw ValidationError(where + ": record needs query_id and passage_id");
    }
    MockEntry entry;
    if (rec.contains("direct")) entry.direct = logits_from_json(rec["direct"], where);
    if (rec.contains("forced")) entry.forced = logits_from_json(rec["forced"], where);
    entry.fail = rec.value("fail", false);
    if (rec.contains("reasoning")) {
      for (const auto& r : rec["reasoning"]) {
        MockReasoning m;
        m.trace = r.at("trace").get<std::string>();
        m.logits = logits_from_json(r.at("logits"), where);
        m.terminated = r.value("terminated", true);
        m.fail = r.value("fail", false);
        entry.reasoning.push_back(std::move(m));
      }
    }
    Key key{rec["query_id"].get<std::string>(), rec["passage_id"].get<std::string>()};
    if (!table.emplace(key, std::move(entry)).second) {
      throw ValidationError(where + ": duplicate mock entry for (" + key.first + ", " + key.second + ")");
    }
  }
  return table;
}

void MockBackend::write_table(const std::filesystem::path& path, const std::map<Key, MockEntry>& table) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write mock table: " + path.string());
  for (const auto& [key, entry] : table) {
    json rec = {{"query_id", key.first}, {"passage_id", key.second}};
    if (entry.direct) rec["direct"] = logits_to_json(*entry.direct);
    if (entry.forced) rec["forced"] = logits_to_json(*entry.forced);
    if (entry.fail) rec["fail"] = true;
    if (!entry.reasoning.empty()) {
      json arr = json::array();
      for (const auto& r : entry.reasoning) {
        json jr = {{"trace", r.trace}, {"logits", logits_to_json(r.logits)}};
        if (!r.terminated) jr["terminated"] = false;
        if (r.fail) jr["fail"] = true;
        arr.push_back(std::move(jr));
      }
      rec["reasoning"] = std::move(arr);
    }
    out << rec.dump() << '\n';
  }
}

void MockBackend::set(const std::string& query_id, const std::string& passage_id, MockEntry entry) {
  table_[{query_id, passage_id}] = std::move(entry);
}

void MockBackend::reset_counters() {
  score_calls_ = 0;
  generate_calls_ = 0;
  direct_calls_ = 0;
  forced_calls_ = 0;
  reasoned_calls_ = 0;
}

const MockEntry* MockBackend::lookup(const PairContext& ctx) const {
  auto it = table_.find({ctx.query_id, ctx.passage_id});
  return it == table_.end() ? nullptr : &it->second;
}

std::vector<std::string> MockBackend::pieces(const std::string& text) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < text.size()) {
    std::size_t start = i;
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    out.push_back(text.substr(start, i - start));
  }
  return out;
}

DecisionLogits MockBackend::score_decision(const std::string& prompt, const PairContext& ctx) {
  ++score_calls_;
  const MockEntry* entry = lookup(ctx);
  if (entry && entry->fail) throw pair_failure(ctx, "scoring");
  const std::uint64_t h = splitmix64(fnv1a(prompt));

  const auto close = prompt.rfind(think_close);
  if (close == std::string::npos) {
    ++direct_calls_;
    if (entry && entry->direct) return *entry->direct;
    return {hashed_value(h, -8.0, 8.0), 0.0};
  }

  const auto open = prompt.rfind(think_open, close);
  const std::size_t body_start = open == std::string::npos ? 0 : open + think_open.size();
  const std::string body = prompt.substr(body_start, close - body_start);
  const auto trimmed = trim(body);
  if (std::find(forced_bodies.begin(), forced_bodies.end(), trimmed) != forced_bodies.end()) {
    ++forced_calls_;
    if (entry && entry->forced) return *entry->forced;
    return {hashed_value(h, -8.0, 8.0), 0.0};
  }

  ++reasoned_calls_;
  if (entry) {
    for (const auto& r : entry->reasoning) {
      if (r.trace == body) return r.logits;
    }
    for (const auto& r : entry->reasoning) {
      if (!body.empty() && r.trace.compare(0, body.size(), body) == 0) return r.logits;
    }
  }
  const double magnitude = hashed_value(h, 2.0, 7.0);
  if (trimmed.find("answer is false") != std::string_view::npos) return {-magnitude, 0.0};
  if (trimmed.find("answer is true") != std::string_view::npos) return {magnitude, 0.0};
  return {(h >> 63) ? magnitude : -magnitude, 0.0};
}

ReasoningTrace MockBackend::generate(const std::string& prompt, const SamplingParams& sampling,
                                     const PairContext& ctx) {
  ++generate_calls_;
  const MockEntry* entry = lookup(ctx);
  if (entry && entry->fail) throw pair_failure(ctx, "generation");

  const bool greedy = sampling.temperature == 0.0;
  const std::uint64_t seed_mix = greedy ? 0 : splitmix64(static_cast<std::uint64_t>(sampling.seed.value_or(0)));

  std::string text;
  bool emits_stop = true;
  if (entry && !entry->reasoning.empty()) {
    const auto& pick = entry->reasoning[seed_mix % entry->reasoning.size()];
    if (pick.fail) throw pair_failure(ctx, "sample");
    text = pick.trace;
    emits_stop = pick.terminated;
  } else {
    const std::uint64_t h = splitmix64(fnv1a(prompt) ^ seed_mix);
    text = std::string("Okay, let me check whether the passage answers the query. Therefore, the answer is ") +
           ((h & 1) ? "true." : "false.");
  }

  auto toks = pieces(text);
  ReasoningTrace trace;
  const std::size_t budget = sampling.max_reasoning_tokens;
  const std::size_t kept = std::min(budget, toks.size());
  for (std::size_t i = 0; i < kept; ++i) trace.text += toks[i];
  trace.token_count = kept;
  if (emits_stop && toks.size() < budget) {
    trace.terminated = true;
    ++trace.token_count;
  }
  return trace;
}

}  // namespace rerank::llm
