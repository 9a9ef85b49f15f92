#include "rerank/reports.hpp"

#include <cstdio>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

namespace rerank::reports {
namespace {

using json = nlohmann::json;

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

constexpr const char* kGradeRuleNote =
    "note: gt2 is the literal 'grade > 2' rule; ge2 counts grade 2 (highly relevant) as positive too";

}  // namespace

std::string eval_table(const metrics::EvalReport& report, const std::string& label) {
  std::ostringstream out;
  const std::string metric = "ndcg_cut_" + std::to_string(report.k);
  out << "# run=" << label << " metric=" << metric << " gain=" << metrics::to_string(report.gain) << '\n';
  for (const auto& [qid, value] : report.per_query) out << metric << '\t' << qid << '\t' << fixed(value, 4) << '\n';
  out << metric << "\tall\t" << fixed(report.mean, 4) << '\n';
  out << "num_q\tall\t" << report.query_count << '\n';
  out << "num_q_skipped_no_relevant\tall\t" << report.skipped.size() << '\n';
  return out.str();
}

std::string eval_records(const metrics::EvalReport& report, const std::string& label) {
  std::ostringstream out;
  const std::string gain(metrics::to_string(report.gain));
  for (const auto& [qid, value] : report.per_query) {
    out << json{{"run", label}, {"query_id", qid}, {"k", report.k}, {"gain", gain}, {"ndcg", value}}.dump() << '\n';
  }
  out << json{{"run", label},
              {"query_id", "all"},
              {"k", report.k},
              {"gain", gain},
              {"ndcg", report.mean},
              {"queries", report.query_count},
              {"skipped", report.skipped}}
             .dump()
      << '\n';
  return out.str();
}

std::string distribution_table(const metrics::ScoreDistribution& dist, const std::string& label) {
  std::ostringstream out;
  const auto& e = metrics::ScoreDistribution::kEdges;
  out << "# score distribution run=" << label << " n=" << dist.total << '\n';
  out << "bin\tlo\thi\tcount\tfraction\n";
  std::size_t sum = 0;
  for (std::size_t i = 0; i < dist.counts.size(); ++i) {
    sum += dist.counts[i];
    out << i << '\t' << fixed(e[i], 1) << '\t' << fixed(e[i + 1], 1) << (i == 9 ? "]" : ")") << '\t' << dist.counts[i]
        << '\t' << fixed(static_cast<double>(dist.counts[i]) / static_cast<double>(dist.total), 4) << '\n';
  }
  out << "region\tlow[0,0.1)\t" << fixed(dist.low, 4) << '\n';
  out << "region\tpartial[0.1,0.9)\t" << fixed(dist.partial, 4) << '\n';
  out << "region\thigh[0.9,1.0]\t" << fixed(dist.high, 4) << '\n';
  out << "check\tbins_sum=" << sum << "\tn=" << dist.total << '\t' << (sum == dist.total ? "OK" : "MISMATCH") << '\n';
  return out.str();
}

std::string distribution_records(const metrics::ScoreDistribution& dist, const std::string& label) {
  std::ostringstream out;
  const auto& e = metrics::ScoreDistribution::kEdges;
  for (std::size_t i = 0; i < dist.counts.size(); ++i) {
    out << json{{"run", label},
                {"bin", i},
                {"lo", e[i]},
                {"hi", e[i + 1]},
                {"count", dist.counts[i]},
                {"fraction", static_cast<double>(dist.counts[i]) / static_cast<double>(dist.total)}}
               .dump()
        << '\n';
  }
  out << json{{"run", label}, {"total", dist.total}, {"low", dist.low}, {"partial", dist.partial}, {"high", dist.high}}
             .dump()
      << '\n';
  return out.str();
}

std::string classification_table(const metrics::ClassificationReport& r, const std::string& label) {
  std::ostringstream out;
  out << "# classification run=" << label << " threshold: R > " << r.score_threshold
      << " grade_rule=" << metrics::to_string(r.grade_rule) << '\n';
  out << "# " << kGradeRuleNote << '\n';
  out << "tp\tfp\ttn\tfn\tjudged\tunjudged\tfailed\n";
  out << r.tp << '\t' << r.fp << '\t' << r.tn << '\t' << r.fn << '\t' << r.judged() << '\t' << r.unjudged << '\t'
      << r.failed << '\n';
  out << "P\tR\tF1\n";
  out << fixed(100.0 * r.precision, 1) << '\t' << fixed(100.0 * r.recall, 1) << '\t' << fixed(100.0 * r.f1, 1) << '\n';
  if (r.precision_undefined) out << "# precision undefined (no positive predictions); reported as 0\n";
  if (r.recall_undefined) out << "# recall undefined (no positive judgments); reported as 0\n";
  return out.str();
}

std::string classification_records(const metrics::ClassificationReport& r, const std::string& label) {
  json rec = {{"run", label},
              {"tp", r.tp},
              {"fp", r.fp},
              {"tn", r.tn},
              {"fn", r.fn},
              {"precision", r.precision},
              {"recall", r.recall},
              {"f1", r.f1},
              {"precision_undefined", r.precision_undefined},
              {"recall_undefined", r.recall_undefined},
              {"score_threshold", r.score_threshold},
              {"grade_rule", std::string(metrics::to_string(r.grade_rule))},
              {"unjudged", r.unjudged},
              {"failed", r.failed}};
  return rec.dump() + "\n";
}

std::string trace_listing(const std::vector<StrategyScores>& runs,
                          const std::unordered_map<std::string, Query>& queries, const Corpus& corpus) {
  using Key = std::pair<std::string, std::string>;
  std::vector<Key> order;
  std::set<Key> seen;
  std::map<Key, std::vector<std::pair<const std::string*, const ScoredPair*>>> by_pair;
  for (const auto& run : runs) {
    for (const auto& p : run.pairs) {
      Key key{p.query_id, p.passage_id};
      if (seen.insert(key).second) order.push_back(key);
      by_pair[key].push_back({&run.label, &p});
    }
  }

  std::ostringstream out;
  const std::string rule(72, '=');
  const std::string thin(72, '-');
  for (const auto& key : order) {
    auto q = queries.find(key.first);
    const Passage* p = corpus.find(key.second);
    out << rule << '\n';
    out << "Query [" << key.first << "]: " << (q == queries.end() ? "<unknown query>" : q->second.text) << '\n';
    out << thin << '\n';
    out << "Passage [" << key.second << "]: " << (p == nullptr ? "<unknown passage>" : p->text) << '\n';
    for (const auto& [label, scored] : by_pair[key]) {
      for (std::size_t i = 0; i < scored->traces.size(); ++i) {
        const auto& t = scored->traces[i];
        out << thin << '\n';
        out << "Reasoning (" << *label;
        if (scored->traces.size() > 1) out << ", sample " << i + 1;
        out << ", " << t.token_count << " tokens" << (t.terminated ? "" : ", truncated") << "):\n";
        out << t.text << '\n';
      }
    }
    out << thin << '\n';
    out << "R:\n";
    for (const auto& [label, scored] : by_pair[key]) {
      out << "  " << *label << ": ";
      if (scored->error) {
        out << "failed (" << *scored->error << ")";
      } else {
        out << fixed(scored->score.value(), 3);
      }
      out << '\n';
    }
  }
  if (!order.empty()) out << rule << '\n';
  return out.str();
}

}  // namespace rerank::reports
