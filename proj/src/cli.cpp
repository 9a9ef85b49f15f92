#include "rerank/cli.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "rerank/bm25.hpp"
#include "rerank/completions_backend.hpp"
#include "rerank/errors.hpp"
#include "rerank/io.hpp"
#include "rerank/metrics.hpp"
#include "rerank/reports.hpp"
#include "rerank/rerankers.hpp"

namespace rerank::cli {
namespace {

namespace fs = std::filesystem;

struct OutputOptions {
  std::string out_dir = "runs";
  std::string run_name;
};

void add_output_options(CLI::App* cmd, OutputOptions& o) {
  cmd->add_option("--out-dir", o.out_dir, "Base directory for run outputs")->capture_default_str();
  cmd->add_option("--run-name", o.run_name, "Fixed run directory name (default: <tag>-<UTC timestamp>)");
}

std::string utc_stamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

fs::path make_run_dir(const OutputOptions& o, const std::string& tag) {
  fs::path dir = fs::path(o.out_dir) / (o.run_name.empty() ? tag + "-" + utc_stamp() : o.run_name);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ValidationError("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

// Only the invoked subcommand, as a [section] that --config reads back. Unset
// options without a default are left out so they stay unset on replay.
void write_resolved_config(const CLI::App& app, const fs::path& dir) {
  std::string toml;
  for (const CLI::App* sub : app.get_subcommands()) {
    toml += "[" + sub->get_name() + "]\n";
    std::istringstream lines(sub->config_to_str(true, false));
    for (std::string line; std::getline(lines, line);) {
      if (line.empty() || (line.size() >= 3 && line.compare(line.size() - 3, 3, "=\"\"") == 0)) continue;
      toml += line + '\n';
    }
  }
  io::write_text(dir / "resolved_config.toml", toml);
}

void require_file(const std::string& path, const std::string& what) {
  if (!fs::exists(path)) throw ValidationError(what + " not found: " + path);
}

// "scored.rr.jsonl" -> "rr", "run.nrr.txt" -> "nrr", anything else -> stem.
std::string label_from_path(const std::string& path) {
  std::string stem = fs::path(path).stem().string();
  for (const char* prefix : {"scored.", "run."}) {
    std::string p(prefix);
    if (stem.rfind(p, 0) == 0 && stem.size() > p.size()) return stem.substr(p.size());
  }
  return stem;
}

// index ----------------------------------------------------------------------

struct IndexOptions {
  std::string corpus;
  double k1 = 0.9;
  double b = 0.4;
  std::string stemmer = "porter";
  std::string stopwords = "lucene";
  bool no_lowercase = false;
  OutputOptions output;
};

void cmd_index(const CLI::App& app, const IndexOptions& o, std::ostream& out) {
  require_file(o.corpus, "corpus");
  bm25::AnalyzerConfig analyzer;
  analyzer.lowercase = !o.no_lowercase;
  if (o.stemmer == "porter") {
    analyzer.stemmer = bm25::Stemmer::porter;
  } else if (o.stemmer != "none") {
    throw UsageError("--stemmer must be porter or none");
  }
  if (o.stopwords == "lucene") {
    analyzer.stopwords = bm25::lucene_stopwords();
  } else if (o.stopwords != "none") {
    require_file(o.stopwords, "stopword file");
    std::ifstream in(o.stopwords);
    std::string w;
    while (in >> w) analyzer.stopwords.insert(w);
  }
  bm25::Bm25Params params{o.k1, o.b};
  try {
    params.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  const Corpus corpus = io::load_corpus(o.corpus);
  const auto index = bm25::InvertedIndex::build(corpus, analyzer, params);
  const fs::path dir = make_run_dir(o.output, "index");
  index.save(dir / "index.bm25");
  write_resolved_config(app, dir);
  out << "indexed " << index.doc_count() << " passages, " << index.term_count() << " terms, avgdl "
      << index.avg_doc_length() << '\n';
  out << "wrote " << (dir / "index.bm25").string() << '\n';
}

// retrieve -------------------------------------------------------------------

struct RetrieveOptions {
  std::string index;
  std::string queries;
  std::size_t k = 100;
  std::string tag = "bm25";
  OutputOptions output;
};

void cmd_retrieve(const CLI::App& app, const RetrieveOptions& o, std::ostream& out) {
  if (o.k < 1) throw UsageError("--k must be >= 1");
  require_file(o.index, "index file");
  require_file(o.queries, "queries file");
  const auto index = bm25::InvertedIndex::load(o.index);
  const auto queries = io::load_queries(o.queries);

  std::vector<RunEntry> run;
  for (const auto& q : queries) {
    for (const auto& c : index.retrieve_top_k(q, o.k)) {
      run.push_back({c.query_id, c.passage_id, c.first_stage_rank, c.first_stage_score, o.tag});
    }
  }
  const fs::path dir = make_run_dir(o.output, o.tag);
  const fs::path path = dir / ("run." + o.tag + ".txt");
  io::write_run(path, run);
  write_resolved_config(app, dir);
  out << "retrieved " << run.size() << " candidates for " << queries.size() << " queries (k=" << o.k << ")\n";
  out << "wrote " << path.string() << '\n';
}

// rerank ---------------------------------------------------------------------

struct RerankOptions {
  std::string run_in;
  std::string corpus;
  std::string queries;
  std::string strategy = "direct";
  std::size_t samples = 1;
  std::size_t k = 100;
  std::string backend;
  std::string model;
  int logprobs = 20;
  long timeout_ms = 120'000;
  int max_in_flight = 16;
  int retries = 3;
  long backoff_ms = 200;
  std::size_t concurrency = 8;
  std::uint64_t seed = 0;
  bool allow_partial = false;
  std::string template_path;
  std::size_t max_passage_chars = 2048;
  double temperature = 0.0;
  double top_p = 1.0;
  std::size_t max_reasoning_tokens = 8192;
  std::string tag;
  std::string capture_log;
  bool skip_token_probe = false;
  std::string positive_token = "true";
  std::string negative_token = "false";
  OutputOptions output;
};

void cmd_rerank(const CLI::App& app, const CLI::App& sub, RerankOptions o, std::ostream& out, std::ostream& err) {
  require_file(o.run_in, "first-stage run");
  require_file(o.corpus, "corpus");
  require_file(o.queries, "queries file");
  if (o.k < 1) throw UsageError("--k must be >= 1");

  RerankStrategy strategy;
  try {
    strategy.kind = parse_strategy(o.strategy);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const bool sc = strategy.kind == StrategyKind::self_consistency;
  strategy.samples = sc && sub.count("--samples") == 0 ? 8 : o.samples;
  strategy.max_passage_chars = o.max_passage_chars;

  llm::SamplingParams sampling;
  sampling.temperature = sub.count("--temperature") ? o.temperature : (sc ? 0.7 : 0.0);
  sampling.top_p = sub.count("--top-p") ? o.top_p : (sc ? 0.95 : 1.0);
  sampling.max_reasoning_tokens = o.max_reasoning_tokens;
  try {
    strategy.validate();
    sampling.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }

  PromptTemplate tmpl = o.template_path.empty() ? PromptTemplate::standard() : PromptTemplate::load(o.template_path);
  tmpl.validate();

  llm::BackendConfig bcfg;
  bcfg.model = o.model;
  bcfg.top_logprobs = o.logprobs;
  bcfg.timeout = std::chrono::milliseconds(o.timeout_ms);
  bcfg.max_in_flight = o.max_in_flight;
  bcfg.retry.max_attempts = o.retries;
  bcfg.retry.initial_backoff = std::chrono::milliseconds(o.backoff_ms);
  bcfg.tokens = {o.positive_token, o.negative_token};
  bcfg.capture_log = o.capture_log;
  if (const char* key = std::getenv(kApiKeyEnv)) bcfg.api_key = key;

  std::unique_ptr<llm::Backend> backend;
  try {
    bcfg.validate();
    backend = llm::make_backend(o.backend, bcfg);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (!o.skip_token_probe) backend->validate();

  const Corpus corpus = io::load_corpus(o.corpus);
  const auto queries = io::index_queries(io::load_queries(o.queries));
  std::vector<std::string> warnings;
  std::vector<Candidate> candidates;
  for (const auto& c : candidates_from_run(io::read_run(o.run_in, &warnings))) {
    if (static_cast<std::size_t>(c.first_stage_rank) <= o.k) candidates.push_back(c);
  }
  for (const auto& w : warnings) err << "warning: " << w << '\n';
  validate_candidates(candidates);

  ScoringOptions opts;
  opts.strategy = strategy;
  opts.sampling = sampling;
  opts.base_seed = o.seed;
  opts.concurrency = o.concurrency;
  opts.allow_partial = o.allow_partial;
  const auto scored = score_candidates(*backend, tmpl, candidates, queries, corpus, opts);

  const std::string tag = o.tag.empty() ? strategy.tag() : o.tag;
  const auto run = rerank(candidates, scored, tag);

  const fs::path dir = make_run_dir(o.output, tag);
  io::write_run(dir / ("run." + tag + ".txt"), run);
  io::write_scored_pairs(dir / ("scored." + tag + ".jsonl"), scored);
  write_resolved_config(app, dir);

  std::size_t failed = 0;
  for (const auto& s : scored) failed += s.error ? 1 : 0;
  out << "reranked " << candidates.size() << " pairs with " << backend->describe() << " strategy=" << to_string(strategy.kind)
      << " tag=" << tag << '\n';
  if (failed) out << "failed pairs (ranked last): " << failed << '\n';
  out << "wrote " << (dir / ("run." + tag + ".txt")).string() << '\n';
  out << "wrote " << (dir / ("scored." + tag + ".jsonl")).string() << '\n';
}

// eval -----------------------------------------------------------------------

struct EvalOptions {
  std::vector<std::string> run_in;
  std::string qrels;
  std::size_t k = 10;
  std::string gain = "exponential";
  OutputOptions output;
};

void cmd_eval(const CLI::App& app, const EvalOptions& o, std::ostream& out, std::ostream& err) {
  metrics::Gain gain;
  try {
    gain = metrics::parse_gain(o.gain);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  if (o.k < 1) throw UsageError("--k must be >= 1");
  require_file(o.qrels, "qrels file");
  const Qrels qrels = io::load_qrels(o.qrels);
  const fs::path dir = make_run_dir(o.output, "eval");
  for (const auto& path : o.run_in) {
    require_file(path, "run file");
    std::vector<std::string> warnings;
    const auto run = io::read_run(path, &warnings);
    for (const auto& w : warnings) err << "warning: " << w << '\n';
    const auto report = metrics::ndcg_at_k(run, qrels, o.k, gain);
    const std::string label = label_from_path(path);
    const std::string table = reports::eval_table(report, label);
    io::write_text(dir / ("eval." + label + ".txt"), table);
    io::write_text(dir / ("eval." + label + ".jsonl"), reports::eval_records(report, label));
    out << table;
  }
  write_resolved_config(app, dir);
  out << "wrote " << dir.string() << '\n';
}

// analyze --------------------------------------------------------------------

struct AnalyzeOptions {
  std::vector<std::string> scores;
  std::string qrels;
  double score_threshold = 0.5;
  std::string grade_rule = "gt2";
  OutputOptions output;
};

void cmd_analyze(const CLI::App& app, const AnalyzeOptions& o, std::ostream& out) {
  metrics::GradeRule rule;
  try {
    rule = metrics::parse_grade_rule(o.grade_rule);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  require_file(o.qrels, "qrels file");
  const Qrels qrels = io::load_qrels(o.qrels);
  const fs::path dir = make_run_dir(o.output, "analyze");
  for (const auto& path : o.scores) {
    require_file(path, "scored-pair dump");
    const auto pairs = io::read_scored_pairs(path);
    const std::string label = label_from_path(path);

    std::vector<double> values;
    for (const auto& p : pairs) {
      if (!p.error) values.push_back(p.score.value());
    }
    if (values.empty()) throw ValidationError(path + ": no successfully scored pairs to analyze");
    const auto dist = metrics::bin_scores(values);
    std::size_t sum = 0;
    for (auto c : dist.counts) sum += c;
    if (sum != values.size()) throw ValidationError("bin counts do not sum to the sample count");

    const auto cls = metrics::classify(pairs, qrels, o.score_threshold, rule);
    const std::string dist_table = reports::distribution_table(dist, label);
    const std::string cls_table = reports::classification_table(cls, label);
    io::write_text(dir / ("distribution." + label + ".tsv"), dist_table);
    io::write_text(dir / ("distribution." + label + ".jsonl"), reports::distribution_records(dist, label));
    io::write_text(dir / ("classification." + label + ".txt"), cls_table);
    io::write_text(dir / ("classification." + label + ".jsonl"), reports::classification_records(cls, label));
    out << dist_table << cls_table;
  }
  write_resolved_config(app, dir);
  out << "wrote " << dir.string() << '\n';
}

// dump-traces ----------------------------------------------------------------

struct DumpOptions {
  std::vector<std::string> scores;
  std::string queries;
  std::string corpus;
  std::string query_id;
  std::string passage_id;
  OutputOptions output;
};

void cmd_dump_traces(const CLI::App& app, const DumpOptions& o, std::ostream& out) {
  require_file(o.queries, "queries file");
  require_file(o.corpus, "corpus");
  const Corpus corpus = io::load_corpus(o.corpus);
  const auto queries = io::index_queries(io::load_queries(o.queries));
  std::vector<reports::StrategyScores> runs;
  for (const auto& path : o.scores) {
    require_file(path, "scored-pair dump");
    reports::StrategyScores s{label_from_path(path), {}};
    for (auto& p : io::read_scored_pairs(path)) {
      if (!o.query_id.empty() && p.query_id != o.query_id) continue;
      if (!o.passage_id.empty() && p.passage_id != o.passage_id) continue;
      s.pairs.push_back(std::move(p));
    }
    runs.push_back(std::move(s));
  }
  const std::string listing = reports::trace_listing(runs, queries, corpus);
  const fs::path dir = make_run_dir(o.output, "traces");
  io::write_text(dir / "traces.txt", listing);
  write_resolved_config(app, dir);
  out << listing;
  out << "wrote " << (dir / "traces.txt").string() << '\n';
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Pointwise LLM reranking laboratory: BM25 retrieval, LLM reranking, evaluation and score analysis"};
  app.set_config("--config", "", "TOML/INI config file; command-line flags override it");
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  IndexOptions index_o;
  auto* index_cmd = app.add_subcommand("index", "Build a BM25 index over a corpus");
  index_cmd->add_option("--corpus", index_o.corpus, "Corpus file (JSONL or id<TAB>text)")->required();
  index_cmd->add_option("--k1", index_o.k1, "BM25 k1")->capture_default_str();
  index_cmd->add_option("--b", index_o.b, "BM25 b")->capture_default_str();
  index_cmd->add_option("--stemmer", index_o.stemmer, "porter | none")->capture_default_str();
  index_cmd->add_option("--stopwords", index_o.stopwords, "lucene | none | <file>")->capture_default_str();
  index_cmd->add_flag("--no-lowercase", index_o.no_lowercase, "Keep letter case");
  add_output_options(index_cmd, index_o.output);

  RetrieveOptions retrieve_o;
  auto* retrieve_cmd = app.add_subcommand("retrieve", "Retrieve top-k BM25 candidates into a TREC run");
  retrieve_cmd->add_option("--index", retrieve_o.index, "Index file written by 'index'")->required();
  retrieve_cmd->add_option("--queries", retrieve_o.queries, "Queries file (JSONL or id<TAB>text)")->required();
  retrieve_cmd->add_option("--k", retrieve_o.k, "Candidates per query")->capture_default_str();
  retrieve_cmd->add_option("--tag", retrieve_o.tag, "Run tag")->capture_default_str();
  add_output_options(retrieve_cmd, retrieve_o.output);

  RerankOptions rerank_o;
  auto* rerank_cmd = app.add_subcommand("rerank", "Rerank a first-stage run with an LLM pointwise scorer");
  rerank_cmd->add_option("--run-in", rerank_o.run_in, "First-stage TREC run")->required();
  rerank_cmd->add_option("--corpus", rerank_o.corpus, "Corpus file")->required();
  rerank_cmd->add_option("--queries", rerank_o.queries, "Queries file")->required();
  rerank_cmd->add_option("--strategy", rerank_o.strategy, "direct | reason | forced_no_reason | self_consistency")
      ->capture_default_str();
  rerank_cmd->add_option("--samples", rerank_o.samples, "Samples for self_consistency (default 8)");
  rerank_cmd->add_option("--k", rerank_o.k, "Rerank the top-k candidates of each query")->capture_default_str();
  rerank_cmd->add_option("--backend", rerank_o.backend, "mock:<table.jsonl> | replay:<capture.jsonl> | http://host:port/v1")
      ->required();
  rerank_cmd->add_option("--model", rerank_o.model, "Served model name");
  rerank_cmd->add_option("--logprobs", rerank_o.logprobs, "Top log-probabilities requested per scoring call")
      ->capture_default_str();
  rerank_cmd->add_option("--timeout-ms", rerank_o.timeout_ms, "Per-request timeout")->capture_default_str();
  rerank_cmd->add_option("--max-in-flight", rerank_o.max_in_flight, "Concurrent backend requests bound")
      ->capture_default_str();
  rerank_cmd->add_option("--retries", rerank_o.retries, "Attempts per request")->capture_default_str();
  rerank_cmd->add_option("--backoff-ms", rerank_o.backoff_ms, "Initial retry backoff, doubled per attempt")
      ->capture_default_str();
  rerank_cmd->add_option("--concurrency", rerank_o.concurrency, "Pairs scored concurrently")->capture_default_str();
  rerank_cmd->add_option("--seed", rerank_o.seed, "Base seed for sampled reasoning")->capture_default_str();
  rerank_cmd->add_flag("--allow-partial", rerank_o.allow_partial,
                       "Keep going past failed pairs (ranked last) and average self-consistency over successful samples");
  rerank_cmd->add_option("--template", rerank_o.template_path, "Prompt template JSON (default: standard prompt)");
  rerank_cmd->add_option("--max-passage-chars", rerank_o.max_passage_chars, "Passage truncation in characters")
      ->capture_default_str();
  rerank_cmd->add_option("--temperature", rerank_o.temperature, "Sampling temperature (default 0, 0.7 for self_consistency)");
  rerank_cmd->add_option("--top-p", rerank_o.top_p, "Nucleus sampling mass (default 1, 0.95 for self_consistency)");
  rerank_cmd->add_option("--max-reasoning-tokens", rerank_o.max_reasoning_tokens, "Reasoning token budget")
      ->capture_default_str();
  rerank_cmd->add_option("--tag", rerank_o.tag, "Run tag (default: nrr, rr, rrnr or rr-sc<n>)");
  rerank_cmd->add_option("--capture-log", rerank_o.capture_log, "Append every request/response to this JSONL file");
  rerank_cmd->add_flag("--skip-token-probe", rerank_o.skip_token_probe, "Skip the single-token decision word check");
  rerank_cmd->add_option("--positive-token", rerank_o.positive_token, "Decision token for relevant")
      ->capture_default_str();
  rerank_cmd->add_option("--negative-token", rerank_o.negative_token, "Decision token for not relevant")
      ->capture_default_str();
  add_output_options(rerank_cmd, rerank_o.output);

  EvalOptions eval_o;
  auto* eval_cmd = app.add_subcommand("eval", "NDCG@k of one or more runs against qrels");
  eval_cmd->add_option("--run-in", eval_o.run_in, "TREC run file (repeatable)")->required();
  eval_cmd->add_option("--qrels", eval_o.qrels, "TREC qrels")->required();
  eval_cmd->add_option("--k", eval_o.k, "Cutoff")->capture_default_str();
  eval_cmd->add_option("--gain", eval_o.gain, "exponential (2^g - 1) | linear (g)")->capture_default_str();
  add_output_options(eval_cmd, eval_o.output);

  AnalyzeOptions analyze_o;
  auto* analyze_cmd = app.add_subcommand("analyze", "Score distribution and relevance classification reports");
  analyze_cmd->add_option("--scores", analyze_o.scores, "Scored-pair dump from 'rerank' (repeatable)")->required();
  analyze_cmd->add_option("--qrels", analyze_o.qrels, "TREC qrels")->required();
  analyze_cmd->add_option("--score-threshold", analyze_o.score_threshold, "Predict relevant when R > threshold")
      ->capture_default_str();
  analyze_cmd->add_option("--grade-rule", analyze_o.grade_rule, "gt2 (grade > 2) | ge2 (grade >= 2)")
      ->capture_default_str();
  add_output_options(analyze_cmd, analyze_o.output);

  DumpOptions dump_o;
  auto* dump_cmd = app.add_subcommand("dump-traces", "List query, passage, reasoning and R per strategy");
  dump_cmd->add_option("--scores", dump_o.scores, "Scored-pair dump (repeatable)")->required();
  dump_cmd->add_option("--queries", dump_o.queries, "Queries file")->required();
  dump_cmd->add_option("--corpus", dump_o.corpus, "Corpus file")->required();
  dump_cmd->add_option("--query-id", dump_o.query_id, "Only this query");
  dump_cmd->add_option("--passage-id", dump_o.passage_id, "Only this passage");
  add_output_options(dump_cmd, dump_o.output);

  std::vector<const char*> argv;
  argv.reserve(args.size());
  for (const auto& a : args) argv.push_back(a.c_str());

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    app.exit(e, out, err);
    return kUsage;
  }

  try {
    if (index_cmd->parsed()) cmd_index(app, index_o, out);
    else if (retrieve_cmd->parsed()) cmd_retrieve(app, retrieve_o, out);
    else if (rerank_cmd->parsed()) cmd_rerank(app, *rerank_cmd, rerank_o, out, err);
    else if (eval_cmd->parsed()) cmd_eval(app, eval_o, out, err);
    else if (analyze_cmd->parsed()) cmd_analyze(app, analyze_o, out);
    else if (dump_cmd->parsed()) cmd_dump_traces(app, dump_o, out);
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const BackendError& e) {
    err << "backend error: " << e.what() << '\n';
    return kBackendError;
  } catch (const ValidationError& e) {
    err << "data error: " << e.what() << '\n';
    return kDataError;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kDataError;
  }
  return kOk;
}

}  // namespace rerank::cli
