#pragma once

#include <filesystem>
#include <string>
#include <unordered_map>
#include <vector>

#include "rerank/rerankers.hpp"
#include "rerank/types.hpp"

namespace rerank::io {

// Every parser rejects malformed input with a ValidationError naming file and line.

/// One passage per line, either a JSON object with an id ("id", "_id" or
/// "docid") and text ("text" or "contents"), or "id<TAB>text". Blank lines
/// are skipped.
Corpus load_corpus(const std::filesystem::path& path);

/// Same layouts as the corpus; query text must be non-empty.
std::vector<Query> load_queries(const std::filesystem::path& path);
std::unordered_map<std::string, Query> index_queries(const std::vector<Query>& queries);

/// TREC qrels, "qid iter docid grade", whitespace-separated.
Qrels load_qrels(const std::filesystem::path& path);
void write_qrels(const std::filesystem::path& path, const Qrels& qrels);

/// TREC run rows, "qid Q0 docid rank score tag". Queries whose rows are not
/// ranked 1..m with non-increasing scores are re-ranked by score (ties by file
/// rank, then passage id) and a warning is appended to `warnings`, or printed
/// to stderr when `warnings` is null.
std::vector<RunEntry> read_run(const std::filesystem::path& path, std::vector<std::string>* warnings = nullptr);

/// Writes rows in the given order; scores with six decimals.
void write_run(const std::filesystem::path& path, const std::vector<RunEntry>& run);
std::string format_run_line(const RunEntry& e);

/// Line-delimited scored-pair records: query_id, passage_id, score, strategy,
/// per_sample, traces [{text, terminated, token_count}], failed_samples, error.
void write_scored_pairs(const std::filesystem::path& path, const std::vector<ScoredPair>& pairs);
std::vector<ScoredPair> read_scored_pairs(const std::filesystem::path& path);
std::string scored_pair_to_line(const ScoredPair& pair);

/// Writes `content` to `path` byte-for-byte.
void write_text(const std::filesystem::path& path, const std::string& content);

bool contains_whitespace(std::string_view s);

}  // namespace rerank::io
