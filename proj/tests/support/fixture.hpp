#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "rerank/mock_backend.hpp"
#include "rerank/types.hpp"

namespace rerank::testing {

/// Self-deleting scratch directory.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, const std::string& content);

/// Every regular file under `dir`, keyed by its path relative to `dir`.
std::map<std::string, std::string> snapshot(const std::filesystem::path& dir);

/// Logit that maps to probability `r` against a zero competitor.
double logit(double r);

/// Graded synthetic retrieval collection with a matching mock table.
///
/// Each query owns `per_query` passages that share its two key terms and
/// nothing else. Grades follow a fixed pattern; key-term frequency is highest
/// for grade 1 and lowest for grade 3, so BM25 puts partially relevant
/// passages ahead of perfectly relevant ones.
///
/// Mock scores:
///   direct: R = nrr_by_grade[g] (graded)
///   reason: R = 0.99 when g >= 1 else 0.01 (polarized), trace ends with the verdict
///   forced: logits (1.45 * (g - 1), 0)
///   sampled reasoning: three continuations per pair, see sc_by_grade
struct SyntheticFixture {
  std::vector<Query> queries;
  std::vector<Passage> passages;
  std::vector<Judgment> judgments;
  std::map<llm::MockBackend::Key, llm::MockEntry> mock;
  std::map<std::string, int> grade_of;  // passage id -> grade

  static constexpr double nrr_by_grade[4] = {0.03, 0.25, 0.45, 0.93};
  static constexpr double rr_positive = 0.99;
  static constexpr double rr_negative = 0.01;
};

SyntheticFixture make_fixture(std::size_t n_queries = 10, std::size_t per_query = 20, unsigned seed = 7);

/// Writes corpus.jsonl, queries.tsv, qrels.txt and mock.jsonl into `dir`.
void write_fixture(const std::filesystem::path& dir, const SyntheticFixture& fx);

}  // namespace rerank::testing
