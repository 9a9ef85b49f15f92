#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rerank/backend.hpp"

namespace rerank::llm {

/// One canned reasoning continuation and the logits scored after it.
struct MockReasoning {
  std::string trace;
  DecisionLogits logits;
  bool terminated = true;  // emit the stop marker after the trace
  bool fail = false;       // generate() throws when this sample is drawn
};

struct MockEntry {
  std::optional<DecisionLogits> direct;
  std::optional<DecisionLogits> forced;
  std::vector<MockReasoning> reasoning;
  bool fail = false;  // every call for the pair throws BackendError
};

/// Deterministic offline backend.
///
/// Prompts are classified by their tail: no think-close marker means a direct
/// prompt; a think block whose body is one of `forced_bodies` means a forced
/// (reasoning-disabled) prompt; anything else is a post-reasoning prompt whose
/// trace is matched against the pair's reasoning entries (a truncated trace
/// matches the entry it is a prefix of). Pairs missing from the table get
/// logits and traces derived from a hash of the prompt and seed, so the mock
/// is a pure function of (context, prompt, seed) in every case.
///
/// generate() splits traces into whitespace-led pieces, one token per piece,
/// with the stop marker counting as one more token.
class MockBackend final : public Backend {
 public:
  using Key = std::pair<std::string, std::string>;

  MockBackend() = default;
  explicit MockBackend(std::map<Key, MockEntry> table) : table_(std::move(table)) {}

  /// Line-delimited records:
  /// {"query_id","passage_id","direct":[zt,zf],"forced":[zt,zf],
  ///  "reasoning":[{"trace","logits":[zt,zf],"terminated","fail"}],"fail"}
  static std::map<Key, MockEntry> read_table(const std::filesystem::path& path);
  static void write_table(const std::filesystem::path& path, const std::map<Key, MockEntry>& table);

  void set(const std::string& query_id, const std::string& passage_id, MockEntry entry);
  const std::map<Key, MockEntry>& table() const { return table_; }

  std::vector<std::string> forced_bodies{"Okay, I have finished thinking.", "Okay, I think I have finished thinking."};
  std::string think_open = "<think>";
  std::string think_close = std::string(kThinkClose);

  DecisionLogits score_decision(const std::string& prompt, const PairContext& ctx) override;
  ReasoningTrace generate(const std::string& prompt, const SamplingParams& sampling, const PairContext& ctx) override;
  std::string describe() const override { return "mock"; }

  std::size_t score_calls() const { return score_calls_.load(); }
  std::size_t generate_calls() const { return generate_calls_.load(); }
  std::size_t direct_calls() const { return direct_calls_.load(); }
  std::size_t forced_calls() const { return forced_calls_.load(); }
  std::size_t reasoned_calls() const { return reasoned_calls_.load(); }
  void reset_counters();

  /// Splits text into whitespace-led pieces ("a b" -> {"a", " b"}).
  static std::vector<std::string> pieces(const std::string& text);

 private:
  const MockEntry* lookup(const PairContext& ctx) const;

  std::map<Key, MockEntry> table_;
  std::atomic<std::size_t> score_calls_{0};
  std::atomic<std::size_t> generate_calls_{0};
  std::atomic<std::size_t> direct_calls_{0};
  std::atomic<std::size_t> forced_calls_{0};
  std::atomic<std::size_t> reasoned_calls_{0};
};

}  // namespace rerank::llm
