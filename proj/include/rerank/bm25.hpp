#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "rerank/types.hpp"

namespace rerank::bm25 {

enum class Stemmer { none, porter };

/// Text analysis rules. Tokens are maximal runs of ASCII letters/digits;
/// bytes >= 0x80 count as token characters so UTF-8 words stay whole.
struct AnalyzerConfig {
  bool lowercase = true;
  std::set<std::string> stopwords;
  Stemmer stemmer = Stemmer::none;

  friend bool operator==(const AnalyzerConfig&, const AnalyzerConfig&) = default;
};

/// The 33-word English stopword list Lucene's StandardAnalyzer ships with.
std::set<std::string> lucene_stopwords();

struct Bm25Params {
  double k1 = 0.9;
  double b = 0.4;

  /// Throws std::invalid_argument unless k1 > 0 and b in [0, 1].
  void validate() const;
  friend bool operator==(const Bm25Params&, const Bm25Params&) = default;
};

std::vector<std::string> tokenize(std::string_view text, const AnalyzerConfig& cfg);

struct Posting {
  std::uint32_t ordinal;
  std::uint32_t tf;

  friend bool operator==(const Posting&, const Posting&) = default;
};

/// Immutable after build; safe to query from many threads.
class InvertedIndex {
 public:
  /// Throws ValidationError on an empty corpus.
  static InvertedIndex build(const Corpus& corpus, const AnalyzerConfig& cfg, const Bm25Params& params);

  /// Okapi BM25 with the non-negative idf ln(1 + (N - df + 0.5) / (df + 0.5)).
  /// Repeated query terms contribute once per occurrence.
  double score(const Query& query, std::size_t ordinal) const;

  /// Top-k passages that match at least one query term, by descending score,
  /// ties by ascending passage id. Ranks are 1..len.
  std::vector<Candidate> retrieve_top_k(const Query& query, std::size_t k) const;

  /// Writes the versioned line-based index file.
  void save(const std::filesystem::path& path) const;
  static InvertedIndex load(const std::filesystem::path& path);

  std::size_t doc_count() const { return doc_ids_.size(); }
  double avg_doc_length() const { return avg_doc_length_; }
  const std::vector<std::uint32_t>& doc_lengths() const { return doc_lengths_; }
  const std::vector<std::string>& doc_ids() const { return doc_ids_; }
  const std::vector<Posting>& postings(const std::string& term) const;
  std::size_t term_count() const { return postings_.size(); }
  const AnalyzerConfig& analyzer() const { return analyzer_; }
  const Bm25Params& params() const { return params_; }

  double idf(std::size_t df) const;
  /// Per-term contribution for a term with frequency `tf` in a document of
  /// length `doc_length`, before multiplying by idf.
  double tf_weight(std::uint32_t tf, std::uint32_t doc_length) const;

 private:
  InvertedIndex() = default;
  void finalize();

  AnalyzerConfig analyzer_;
  Bm25Params params_;
  std::vector<std::string> doc_ids_;
  std::vector<std::uint32_t> doc_lengths_;
  double avg_doc_length_ = 0.0;
  std::unordered_map<std::string, std::vector<Posting>> postings_;
};

}  // namespace rerank::bm25
