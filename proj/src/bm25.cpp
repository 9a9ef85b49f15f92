#include "rerank/bm25.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "rerank/errors.hpp"
#include "rerank/porter_stemmer.hpp"

namespace rerank::bm25 {
namespace {

constexpr std::string_view kMagic = "rerank-bm25-index";
constexpr int kFormatVersion = 1;

bool is_token_byte(unsigned char c) { return std::isalnum(c) || c >= 0x80; }

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool has_space(std::string_view s) {
  return std::any_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace

std::set<std::string> lucene_stopwords() {
  return {"a",    "an",   "and",   "are",  "as",   "at",    "be",    "but",  "by",
          "for",  "if",   "in",    "into", "is",   "it",    "no",    "not",  "of",
          "on",   "or",   "such",  "that", "the",  "their", "then",  "there", "these",
          "they", "this", "to",    "was",  "will", "with"};
}

void Bm25Params::validate() const {
  if (!(k1 > 0.0) || !std::isfinite(k1)) throw std::invalid_argument("bm25 k1 must be > 0");
  if (!(b >= 0.0 && b <= 1.0)) throw std::invalid_argument("bm25 b must be in [0, 1]");
}

std::vector<std::string> tokenize(std::string_view text, const AnalyzerConfig& cfg) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && !is_token_byte(static_cast<unsigned char>(text[i]))) ++i;
    std::size_t start = i;
    while (i < text.size() && is_token_byte(static_cast<unsigned char>(text[i]))) ++i;
    if (start == i) continue;
    std::string token(text.substr(start, i - start));
    if (cfg.lowercase) {
      for (auto& c : token) {
        if (static_cast<unsigned char>(c) < 0x80) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      }
    }
    if (cfg.stopwords.count(token)) continue;
    if (cfg.stemmer == Stemmer::porter) token = porter_stem(token);
    tokens.push_back(std::move(token));
  }
  return tokens;
}

InvertedIndex InvertedIndex::build(const Corpus& corpus, const AnalyzerConfig& cfg, const Bm25Params& params) {
  if (corpus.empty()) throw ValidationError("cannot build an index over an empty corpus");
  params.validate();

  InvertedIndex index;
  index.analyzer_ = cfg;
  index.params_ = params;
  index.doc_ids_.reserve(corpus.size());
  index.doc_lengths_.reserve(corpus.size());

  for (std::size_t ord = 0; ord < corpus.size(); ++ord) {
    const auto& passage = corpus.at(ord);
    auto tokens = tokenize(passage.text, cfg);
    std::unordered_map<std::string, std::uint32_t> tf;
    for (auto& t : tokens) ++tf[t];
    for (auto& [term, count] : tf) {
      index.postings_[term].push_back({static_cast<std::uint32_t>(ord), count});
    }
    index.doc_ids_.push_back(passage.id);
    index.doc_lengths_.push_back(static_cast<std::uint32_t>(tokens.size()));
  }
  index.finalize();
  return index;
}

void InvertedIndex::finalize() {
  // Postings are appended in ordinal order during build and written that way,
  // so this only guards hand-edited index files.
  for (auto& [term, list] : postings_) {
    std::sort(list.begin(), list.end(), [](const Posting& a, const Posting& b) { return a.ordinal < b.ordinal; });
  }
  double total = 0.0;
  for (auto len : doc_lengths_) total += len;
  avg_doc_length_ = doc_lengths_.empty() ? 0.0 : total / static_cast<double>(doc_lengths_.size());
}

const std::vector<Posting>& InvertedIndex::postings(const std::string& term) const {
  static const std::vector<Posting> kNone;
  auto it = postings_.find(term);
  return it == postings_.end() ? kNone : it->second;
}

double InvertedIndex::idf(std::size_t df) const {
  const double n = static_cast<double>(doc_count());
  const double d = static_cast<double>(df);
  return std::log(1.0 + (n - d + 0.5) / (d + 0.5));
}

double InvertedIndex::tf_weight(std::uint32_t tf, std::uint32_t doc_length) const {
  const double f = tf;
  // avgdl is 0 only when every passage is empty, in which case no term matches.
  const double rel_len = avg_doc_length_ > 0.0 ? doc_length / avg_doc_length_ : 0.0;
  return f * (params_.k1 + 1.0) / (f + params_.k1 * (1.0 - params_.b + params_.b * rel_len));
}

double InvertedIndex::score(const Query& query, std::size_t ordinal) const {
  if (ordinal >= doc_count()) throw std::out_of_range("passage ordinal out of range");
  double total = 0.0;
  for (const auto& term : tokenize(query.text, analyzer_)) {
    const auto& list = postings(term);
    auto it = std::lower_bound(list.begin(), list.end(), ordinal,
                               [](const Posting& p, std::size_t ord) { return p.ordinal < ord; });
    if (it == list.end() || it->ordinal != ordinal) continue;
    total += idf(list.size()) * tf_weight(it->tf, doc_lengths_[ordinal]);
  }
  return total;
}

std::vector<Candidate> InvertedIndex::retrieve_top_k(const Query& query, std::size_t k) const {
  if (k == 0) throw std::invalid_argument("k must be >= 1");
  std::vector<double> acc(doc_count(), 0.0);
  std::vector<char> hit(doc_count(), 0);
  std::vector<std::uint32_t> matched;
  for (const auto& term : tokenize(query.text, analyzer_)) {
    const auto& list = postings(term);
    if (list.empty()) continue;
    const double w = idf(list.size());
    for (const auto& p : list) {
      acc[p.ordinal] += w * tf_weight(p.tf, doc_lengths_[p.ordinal]);
      if (!hit[p.ordinal]) {
        hit[p.ordinal] = 1;
        matched.push_back(p.ordinal);
      }
    }
  }

  auto better = [&](std::uint32_t a, std::uint32_t b) {
    if (acc[a] != acc[b]) return acc[a] > acc[b];
    return doc_ids_[a] < doc_ids_[b];
  };
  const std::size_t take = std::min(k, matched.size());
  std::partial_sort(matched.begin(), matched.begin() + static_cast<std::ptrdiff_t>(take), matched.end(), better);

  std::vector<Candidate> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    auto ord = matched[i];
    out.push_back({query.id, doc_ids_[ord], acc[ord], static_cast<int>(i + 1)});
  }
  return out;
}

void InvertedIndex::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot open index file for writing: " + path.string());

  out << kMagic << ' ' << kFormatVersion << '\n';
  out << "lowercase " << (analyzer_.lowercase ? 1 : 0) << '\n';
  out << "stemmer " << (analyzer_.stemmer == Stemmer::porter ? "porter" : "none") << '\n';
  out << "stopwords " << analyzer_.stopwords.size();
  for (const auto& w : analyzer_.stopwords) out << ' ' << w;
  out << '\n';
  out << "k1 " << format_double(params_.k1) << '\n';
  out << "b " << format_double(params_.b) << '\n';
  out << "docs " << doc_ids_.size() << '\n';
  for (std::size_t i = 0; i < doc_ids_.size(); ++i) {
    if (has_space(doc_ids_[i])) throw ValidationError("passage id contains whitespace: '" + doc_ids_[i] + "'");
    out << doc_ids_[i] << ' ' << doc_lengths_[i] << '\n';
  }

  std::vector<const std::string*> terms;
  terms.reserve(postings_.size());
  for (const auto& [term, list] : postings_) terms.push_back(&term);
  std::sort(terms.begin(), terms.end(), [](const std::string* a, const std::string* b) { return *a < *b; });

  out << "terms " << terms.size() << '\n';
  for (const auto* term : terms) {
    const auto& list = postings_.at(*term);
    out << *term << ' ' << list.size();
    for (const auto& p : list) out << ' ' << p.ordinal << ':' << p.tf;
    out << '\n';
  }
  out << "end\n";
  if (!out) throw ValidationError("failed writing index file: " + path.string());
}

InvertedIndex InvertedIndex::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot open index file: " + path.string());

  const std::string file = path.string();
  std::size_t line_no = 0;
  std::string line;
  auto next_line = [&]() -> std::istringstream {
    if (!std::getline(in, line)) throw ValidationError::at(file, line_no + 1, "unexpected end of index file");
    ++line_no;
    return std::istringstream(line);
  };
  auto expect_key = [&](std::istringstream& ss, std::string_view key) {
    std::string got;
    ss >> got;
    if (got != key) throw ValidationError::at(file, line_no, "expected '" + std::string(key) + "', got '" + got + "'");
  };

  InvertedIndex index;
  {
    auto ss = next_line();
    std::string magic;
    int version = 0;
    ss >> magic >> version;
    if (magic != kMagic) throw ValidationError::at(file, line_no, "not a bm25 index file");
    if (version != kFormatVersion) {
      throw ValidationError::at(file, line_no, "unsupported index format version " + std::to_string(version));
    }
  }
  {
    auto ss = next_line();
    expect_key(ss, "lowercase");
    int v = -1;
    ss >> v;
    if (v != 0 && v != 1) throw ValidationError::at(file, line_no, "bad lowercase flag");
    index.analyzer_.lowercase = v == 1;
  }
  {
    auto ss = next_line();
    expect_key(ss, "stemmer");
    std::string s;
    ss >> s;
    if (s == "porter") {
      index.analyzer_.stemmer = Stemmer::porter;
    } else if (s == "none") {
      index.analyzer_.stemmer = Stemmer::none;
    } else {
      throw ValidationError::at(file, line_no, "unknown stemmer '" + s + "'");
    }
  }
  {
    auto ss = next_line();
    expect_key(ss, "stopwords");
    std::size_t n = 0;
    ss >> n;
    for (std::size_t i = 0; i < n; ++i) {
      std::string w;
      if (!(ss >> w)) throw ValidationError::at(file, line_no, "truncated stopword list");
      index.analyzer_.stopwords.insert(w);
    }
  }
  {
    auto ss = next_line();
    expect_key(ss, "k1");
    std::string v;
    ss >> v;
    index.params_.k1 = std::stod(v);
  }
  {
    auto ss = next_line();
    expect_key(ss, "b");
    std::string v;
    ss >> v;
    index.params_.b = std::stod(v);
  }
  try {
    index.params_.validate();
  } catch (const std::invalid_argument& e) {
    throw ValidationError::at(file, line_no, e.what());
  }

  std::size_t docs = 0;
  {
    auto ss = next_line();
    expect_key(ss, "docs");
    if (!(ss >> docs) || docs == 0) throw ValidationError::at(file, line_no, "bad document count");
  }
  index.doc_ids_.reserve(docs);
  index.doc_lengths_.reserve(docs);
  for (std::size_t i = 0; i < docs; ++i) {
    auto ss = next_line();
    std::string id;
    std::uint32_t len = 0;
    if (!(ss >> id >> len)) throw ValidationError::at(file, line_no, "bad document line");
    index.doc_ids_.push_back(std::move(id));
    index.doc_lengths_.push_back(len);
  }

  std::size_t terms = 0;
  {
    auto ss = next_line();
    expect_key(ss, "terms");
    if (!(ss >> terms)) throw ValidationError::at(file, line_no, "bad term count");
  }
  for (std::size_t i = 0; i < terms; ++i) {
    auto ss = next_line();
    std::string term;
    std::size_t n = 0;
    if (!(ss >> term >> n)) throw ValidationError::at(file, line_no, "bad postings line");
    std::vector<Posting> list;
    list.reserve(n);
    for (std::size_t p = 0; p < n; ++p) {
      std::string entry;
      if (!(ss >> entry)) throw ValidationError::at(file, line_no, "truncated postings");
      auto colon = entry.find(':');
      if (colon == std::string::npos) throw ValidationError::at(file, line_no, "bad posting '" + entry + "'");
      unsigned long ord = std::stoul(entry.substr(0, colon));
      unsigned long tf = std::stoul(entry.substr(colon + 1));
      if (ord >= docs || tf == 0) throw ValidationError::at(file, line_no, "posting out of range '" + entry + "'");
      list.push_back({static_cast<std::uint32_t>(ord), static_cast<std::uint32_t>(tf)});
    }
    index.postings_.emplace(std::move(term), std::move(list));
  }
  {
    auto ss = next_line();
    expect_key(ss, "end");
  }
  index.finalize();
  return index;
}

}  // namespace rerank::bm25
