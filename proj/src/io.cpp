#include "rerank/io.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "rerank/errors.hpp"

namespace rerank::io {
namespace {

using json = nlohmann::json;

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + path.string());
  return out;
}

bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

std::vector<std::string> split_ws(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  std::string field;
  while (ss >> field) out.push_back(field);
  return out;
}

struct IdText {
  std::string id;
  std::string text;
};

IdText parse_id_text(const std::string& line, const std::string& file, std::size_t line_no) {
  IdText out;
  if (!line.empty() && line.front() == '{') {
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ValidationError::at(file, line_no, std::string("malformed JSON record: ") + e.what());
    }
    const json* id = nullptr;
    for (const char* key : {"id", "_id", "docid"}) {
      if (rec.contains(key)) {
        id = &rec[key];
        break;
      }
    }
    const json* text = nullptr;
    for (const char* key : {"text", "contents"}) {
      if (rec.contains(key)) {
        text = &rec[key];
        break;
      }
    }
    if (id == nullptr || !id->is_string()) throw ValidationError::at(file, line_no, "record lacks a string id");
    if (text == nullptr || !text->is_string()) throw ValidationError::at(file, line_no, "record lacks a string text");
    out.id = id->get<std::string>();
    out.text = text->get<std::string>();
  } else {
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw ValidationError::at(file, line_no, "malformed line (expected JSON object or id<TAB>text)");
    }
    out.id = line.substr(0, tab);
    out.text = line.substr(tab + 1);
  }
  if (out.id.empty()) throw ValidationError::at(file, line_no, "empty id");
  if (contains_whitespace(out.id)) throw ValidationError::at(file, line_no, "id contains whitespace: '" + out.id + "'");
  return out;
}

int parse_int(const std::string& s, const std::string& what, const std::string& file, std::size_t line_no) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ValidationError::at(file, line_no, "non-integer " + what + " '" + s + "'");
  }
  return v;
}

double parse_double(const std::string& s, const std::string& what, const std::string& file, std::size_t line_no) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw ValidationError::at(file, line_no, "invalid " + what + " '" + s + "'");
  }
  return v;
}

}  // namespace

bool contains_whitespace(std::string_view s) {
  return std::any_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

Corpus load_corpus(const std::filesystem::path& path) {
  auto in = open_input(path);
  const std::string file = path.string();
  std::vector<Passage> passages;
  std::map<std::string, std::size_t> first_line;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (blank(line)) continue;
    auto rec = parse_id_text(line, file, line_no);
    auto [it, inserted] = first_line.emplace(rec.id, line_no);
    if (!inserted) {
      throw ValidationError::at(file, line_no,
                                "duplicate passage id '" + rec.id + "' (first seen on line " +
                                    std::to_string(it->second) + ")");
    }
    passages.push_back({std::move(rec.id), std::move(rec.text)});
  }
  if (passages.empty()) throw ValidationError(file + ": empty corpus");
  return Corpus(std::move(passages));
}

std::vector<Query> load_queries(const std::filesystem::path& path) {
  auto in = open_input(path);
  const std::string file = path.string();
  std::vector<Query> queries;
  std::set<std::string> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (blank(line)) continue;
    auto rec = parse_id_text(line, file, line_no);
    if (blank(rec.text)) throw ValidationError::at(file, line_no, "empty query text for '" + rec.id + "'");
    if (!seen.insert(rec.id).second) throw ValidationError::at(file, line_no, "duplicate query id '" + rec.id + "'");
    queries.push_back({std::move(rec.id), std::move(rec.text)});
  }
  if (queries.empty()) throw ValidationError(file + ": no queries");
  return queries;
}

std::unordered_map<std::string, Query> index_queries(const std::vector<Query>& queries) {
  std::unordered_map<std::string, Query> out;
  for (const auto& q : queries) out.emplace(q.id, q);
  return out;
}

Qrels load_qrels(const std::filesystem::path& path) {
  auto in = open_input(path);
  const std::string file = path.string();
  Qrels qrels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (blank(line)) continue;
    auto fields = split_ws(line);
    if (fields.size() != 4) {
      throw ValidationError::at(file, line_no, "expected 4 columns (qid iter docid grade), got " +
                                                   std::to_string(fields.size()));
    }
    Judgment j{fields[0], fields[2], parse_int(fields[3], "grade", file, line_no)};
    if (j.grade < 0) throw ValidationError::at(file, line_no, "negative grade " + fields[3]);
    if (qrels.grade(j.query_id, j.passage_id)) {
      throw ValidationError::at(file, line_no, "duplicate judgment for (" + j.query_id + ", " + j.passage_id + ")");
    }
    qrels.add(j);
  }
  return qrels;
}

void write_qrels(const std::filesystem::path& path, const Qrels& qrels) {
  auto out = open_output(path);
  for (const auto& j : qrels.judgments()) out << j.query_id << " 0 " << j.passage_id << ' ' << j.grade << '\n';
}

std::vector<RunEntry> read_run(const std::filesystem::path& path, std::vector<std::string>* warnings) {
  auto in = open_input(path);
  const std::string file = path.string();
  std::vector<RunEntry> rows;
  std::set<std::pair<std::string, std::string>> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (blank(line)) continue;
    auto f = split_ws(line);
    if (f.size() != 6) {
      throw ValidationError::at(file, line_no,
                                "expected 6 columns (qid Q0 docid rank score tag), got " + std::to_string(f.size()));
    }
    RunEntry e{f[0], f[2], parse_int(f[3], "rank", file, line_no), parse_double(f[4], "score", file, line_no), f[5]};
    if (e.rank < 1) throw ValidationError::at(file, line_no, "rank must be positive, got " + f[3]);
    if (!seen.emplace(e.query_id, e.passage_id).second) {
      throw ValidationError::at(file, line_no, "duplicate run entry for (" + e.query_id + ", " + e.passage_id + ")");
    }
    rows.push_back(std::move(e));
  }

  // Group per query in first-appearance order and normalise ranks.
  std::vector<std::string> order;
  std::map<std::string, std::vector<RunEntry>> groups;
  for (auto& e : rows) {
    auto [it, inserted] = groups.try_emplace(e.query_id);
    if (inserted) order.push_back(e.query_id);
    it->second.push_back(std::move(e));
  }

  std::vector<RunEntry> out;
  out.reserve(rows.size());
  for (const auto& qid : order) {
    auto& group = groups[qid];
    std::stable_sort(group.begin(), group.end(), [](const RunEntry& a, const RunEntry& b) { return a.rank < b.rank; });
    bool consistent = true;
    for (std::size_t i = 0; i < group.size(); ++i) {
      if (group[i].rank != static_cast<int>(i + 1) || (i > 0 && group[i].score > group[i - 1].score)) {
        consistent = false;
        break;
      }
    }
    if (!consistent) {
      std::string msg = file + ": query '" + qid + "' ranks disagree with scores; re-ranked by score";
      if (warnings) {
        warnings->push_back(msg);
      } else {
        std::cerr << "warning: " << msg << '\n';
      }
      std::sort(group.begin(), group.end(), [](const RunEntry& a, const RunEntry& b) {
        if (a.score != b.score) return a.score > b.score;
        if (a.rank != b.rank) return a.rank < b.rank;
        return a.passage_id < b.passage_id;
      });
      for (std::size_t i = 0; i < group.size(); ++i) group[i].rank = static_cast<int>(i + 1);
    }
    for (auto& e : group) out.push_back(std::move(e));
  }
  return out;
}

std::string format_run_line(const RunEntry& e) {
  char score[64];
  std::snprintf(score, sizeof score, "%.6f", e.score);
  return e.query_id + " Q0 " + e.passage_id + ' ' + std::to_string(e.rank) + ' ' + score + ' ' + e.tag;
}

void write_run(const std::filesystem::path& path, const std::vector<RunEntry>& run) {
  auto out = open_output(path);
  for (const auto& e : run) {
    if (contains_whitespace(e.query_id) || contains_whitespace(e.passage_id) || contains_whitespace(e.tag) ||
        e.tag.empty()) {
      throw ValidationError("run entry (" + e.query_id + ", " + e.passage_id + ") has an id or tag that cannot be written");
    }
    out << format_run_line(e) << '\n';
  }
}

std::string scored_pair_to_line(const ScoredPair& p) {
  json traces = json::array();
  for (const auto& t : p.traces) {
    traces.push_back({{"text", t.text}, {"terminated", t.terminated}, {"token_count", t.token_count}});
  }
  json rec = {{"query_id", p.query_id},
              {"passage_id", p.passage_id},
              {"strategy", p.strategy},
              {"score", p.score.value()},
              {"per_sample", p.per_sample},
              {"traces", traces},
              {"failed_samples", p.failed_samples},
              {"error", p.error ? json(*p.error) : json(nullptr)}};
  return rec.dump();
}

void write_scored_pairs(const std::filesystem::path& path, const std::vector<ScoredPair>& pairs) {
  auto out = open_output(path);
  for (const auto& p : pairs) out << scored_pair_to_line(p) << '\n';
}

std::vector<ScoredPair> read_scored_pairs(const std::filesystem::path& path) {
  auto in = open_input(path);
  const std::string file = path.string();
  std::vector<ScoredPair> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (blank(line)) continue;
    try {
      json rec = json::parse(line);
      ScoredPair p;
      p.query_id = rec.at("query_id").get<std::string>();
      p.passage_id = rec.at("passage_id").get<std::string>();
      p.strategy = rec.at("strategy").get<std::string>();
      p.score = RelevanceScore(rec.at("score").get<double>());
      p.per_sample = rec.value("per_sample", std::vector<double>{});
      if (rec.contains("traces")) {
        for (const auto& t : rec["traces"]) {
          p.traces.push_back(
              {t.at("text").get<std::string>(), t.at("terminated").get<bool>(), t.at("token_count").get<std::size_t>()});
        }
      }
      p.failed_samples = rec.value("failed_samples", std::size_t{0});
      if (rec.contains("error") && !rec["error"].is_null()) p.error = rec["error"].get<std::string>();
      out.push_back(std::move(p));
    } catch (const json::exception& e) {
      throw ValidationError::at(file, line_no, std::string("malformed scored-pair record: ") + e.what());
    } catch (const std::invalid_argument& e) {
      throw ValidationError::at(file, line_no, e.what());
    }
  }
  return out;
}

void write_text(const std::filesystem::path& path, const std::string& content) {
  auto out = open_output(path);
  out << content;
}

}  // namespace rerank::io
