#include "rerank/types.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "rerank/errors.hpp"

namespace rerank {

Corpus::Corpus(std::vector<Passage> passages) : passages_(std::move(passages)) {
  by_id_.reserve(passages_.size());
  for (std::size_t i = 0; i < passages_.size(); ++i) {
    const auto& id = passages_[i].id;
    if (id.empty()) {
      throw ValidationError("passage #" + std::to_string(i) + " has an empty id");
    }
    if (!by_id_.emplace(id, i).second) {
      throw ValidationError("duplicate passage id '" + id + "'");
    }
  }
}

std::optional<std::size_t> Corpus::ordinal_of(const std::string& id) const {
  auto it = by_id_.find(id);
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

const Passage* Corpus::find(const std::string& id) const {
  auto ord = ordinal_of(id);
  return ord ? &passages_[*ord] : nullptr;
}

RelevanceScore::RelevanceScore(double value) : value_(value) {
  if (!(value >= 0.0 && value <= 1.0)) {
    throw std::invalid_argument("relevance score outside [0, 1]: " + std::to_string(value));
  }
}

void Qrels::add(const Judgment& j) {
  if (j.grade < 0) {
    throw ValidationError("negative grade for (" + j.query_id + ", " + j.passage_id + ")");
  }
  auto& per_query = grades_[j.query_id];
  if (!per_query.emplace(j.passage_id, j.grade).second) {
    throw ValidationError("duplicate judgment for (" + j.query_id + ", " + j.passage_id + ")");
  }
}

std::optional<int> Qrels::grade(const std::string& query_id, const std::string& passage_id) const {
  auto q = grades_.find(query_id);
  if (q == grades_.end()) return std::nullopt;
  auto p = q->second.find(passage_id);
  if (p == q->second.end()) return std::nullopt;
  return p->second;
}

const std::map<std::string, int>& Qrels::for_query(const std::string& query_id) const {
  static const std::map<std::string, int> kEmpty;
  auto q = grades_.find(query_id);
  return q == grades_.end() ? kEmpty : q->second;
}

std::vector<Judgment> Qrels::judgments() const {
  std::vector<Judgment> out;
  for (const auto& [qid, docs] : grades_) {
    for (const auto& [pid, grade] : docs) out.push_back({qid, pid, grade});
  }
  return out;
}

std::size_t Qrels::size() const {
  std::size_t n = 0;
  for (const auto& [qid, docs] : grades_) n += docs.size();
  return n;
}

std::vector<std::pair<std::string, std::vector<Candidate>>> group_by_query(
    const std::vector<Candidate>& candidates) {
  std::vector<std::pair<std::string, std::vector<Candidate>>> groups;
  std::unordered_map<std::string, std::size_t> slot;
  for (const auto& c : candidates) {
    auto [it, inserted] = slot.emplace(c.query_id, groups.size());
    if (inserted) groups.push_back({c.query_id, {}});
    groups[it->second].second.push_back(c);
  }
  return groups;
}

std::vector<Candidate> candidates_from_run(const std::vector<RunEntry>& run) {
  std::vector<Candidate> out;
  out.reserve(run.size());
  for (const auto& e : run) out.push_back({e.query_id, e.passage_id, e.score, e.rank});
  return out;
}

void validate_candidates(const std::vector<Candidate>& candidates) {
  for (auto& [qid, group] : group_by_query(candidates)) {
    std::sort(group.begin(), group.end(),
              [](const Candidate& a, const Candidate& b) { return a.first_stage_rank < b.first_stage_rank; });
    for (std::size_t i = 0; i < group.size(); ++i) {
      if (group[i].first_stage_rank != static_cast<int>(i + 1)) {
        throw ValidationError("query '" + qid + "': candidate ranks are not 1.." +
                              std::to_string(group.size()));
      }
      if (i > 0 && group[i].first_stage_score > group[i - 1].first_stage_score) {
        throw ValidationError("query '" + qid + "': first-stage score increases at rank " +
                              std::to_string(i + 1));
      }
    }
  }
}

}  // namespace rerank
