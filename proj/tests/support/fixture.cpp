#include "fixture.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace rerank::testing {

namespace fs = std::filesystem;

TempDir::TempDir() {
  std::string tmpl = (fs::temp_directory_path() / "rerank-test-XXXXXX").string();
  if (mkdtemp(tmpl.data()) == nullptr) throw std::runtime_error("mkdtemp failed");
  path_ = tmpl;
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << content;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& entry : fs::recursive_directory_iterator(dir)) {
    if (entry.is_regular_file()) files[fs::relative(entry.path(), dir).string()] = read_file(entry.path());
  }
  return files;
}

double logit(double r) { return std::log(r / (1.0 - r)); }

namespace {

constexpr int kGradePattern[20] = {3, 3, 3, 2, 2, 2, 2, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 0};

const char* const kFiller[] = {"river", "stone", "market", "window", "garden", "engine", "lantern", "harbor",
                               "meadow", "copper", "violet", "timber", "canyon", "ribbon", "pepper", "saddle"};

std::string id_with(const char* prefix, std::size_t a, std::size_t b) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s%02zu%02zu", prefix, a, b);
  return buf;
}

llm::MockReasoning verdict(const std::string& opening, const std::string& term, bool relevant, double r) {
  llm::MockReasoning m;
  m.trace = opening + " The query asks about " + term + ". The passage mentions " + term +
            (relevant ? " and addresses it." : " only in passing.") + " Therefore, the answer is " +
            (relevant ? "true." : "false.");
  m.logits = {logit(r), 0.0};
  return m;
}

}  // namespace

SyntheticFixture make_fixture(std::size_t n_queries, std::size_t per_query, unsigned seed) {
  SyntheticFixture fx;
  std::mt19937 rng(seed);
  auto uniform = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };

  for (std::size_t q = 0; q < n_queries; ++q) {
    char qid[32];
    std::snprintf(qid, sizeof qid, "q%02zu", q);
    const std::string term_a = "kw" + std::to_string(q) + "alpha";
    const std::string term_b = "kw" + std::to_string(q) + "beta";
    fx.queries.push_back({qid, term_a + " " + term_b});

    for (std::size_t i = 0; i < per_query; ++i) {
      const int grade = kGradePattern[i % 20];
      int tf_a = 0, tf_b = 0;
      switch (grade) {
        case 3: tf_a = 1; tf_b = uniform(0, 1); break;
        case 2: tf_a = uniform(2, 3); tf_b = uniform(1, 2); break;
        case 1: tf_a = uniform(4, 6); tf_b = uniform(2, 3); break;
        default: tf_a = uniform(0, 1); tf_b = 1 - tf_a + uniform(0, 1); break;
      }
      std::vector<std::string> words;
      for (int t = 0; t < tf_a; ++t) words.push_back(term_a);
      for (int t = 0; t < tf_b; ++t) words.push_back(term_b);
      const int fill = uniform(8, 20);
      for (int t = 0; t < fill; ++t) words.push_back(kFiller[uniform(0, 15)]);
      std::shuffle(words.begin(), words.end(), rng);
      std::string text;
      for (const auto& w : words) text += (text.empty() ? "" : " ") + w;

      const std::string pid = id_with("d", q, i);
      fx.passages.push_back({pid, text});
      fx.judgments.push_back({qid, pid, grade});
      fx.grade_of[pid] = grade;

      llm::MockEntry e;
      e.direct = DecisionLogits{logit(SyntheticFixture::nrr_by_grade[grade]), 0.0};
      e.forced = DecisionLogits{1.45 * (grade - 1), 0.0};
      const bool rel = grade >= 1;
      e.reasoning.push_back(verdict("Okay, let's see.", term_a, rel,
                                    rel ? SyntheticFixture::rr_positive : SyntheticFixture::rr_negative));
      e.reasoning.push_back(verdict("Hmm, let me think.", term_a, rel, rel ? 0.7 : 0.2));
      e.reasoning.push_back(verdict("Alright.", term_a, true, 0.5));
      fx.mock[{qid, pid}] = std::move(e);
    }
  }
  return fx;
}

void write_fixture(const fs::path& dir, const SyntheticFixture& fx) {
  fs::create_directories(dir);
  std::ostringstream corpus;
  for (const auto& p : fx.passages) corpus << nlohmann::json{{"id", p.id}, {"text", p.text}}.dump() << '\n';
  write_file(dir / "corpus.jsonl", corpus.str());

  std::ostringstream queries;
  for (const auto& q : fx.queries) queries << q.id << '\t' << q.text << '\n';
  write_file(dir / "queries.tsv", queries.str());

  std::ostringstream qrels;
  for (const auto& j : fx.judgments) qrels << j.query_id << " 0 " << j.passage_id << ' ' << j.grade << '\n';
  write_file(dir / "qrels.txt", qrels.str());

  llm::MockBackend::write_table(dir / "mock.jsonl", fx.mock);
}

}  // namespace rerank::testing
