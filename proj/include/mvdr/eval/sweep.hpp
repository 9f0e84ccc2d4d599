#pragma once

// Cutoff sweeps: one pipeline run per grid point, each compared against a
// baseline configuration with a Bonferroni-corrected paired t-test.

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <optional>
#include <ostream>
#include <string>
#include <string_view>
#include <vector>

#include "mvdr/errors.hpp"
#include "mvdr/eval/metrics.hpp"
#include "mvdr/eval/stats.hpp"
#include "mvdr/eval/trec.hpp"
#include "mvdr/rerank.hpp"

namespace mvdr::eval {

/// Parses `a,b,start:stop:step,...` (stop inclusive) into an ascending list
/// without duplicates.
inline std::vector<std::size_t> parse_grid(std::string_view spec) {
  auto parse_num = [&](std::string_view s) {
    std::size_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
      throw InvalidArgumentError("grid: bad number \"" + std::string(s) + "\" in \"" + std::string(spec) + "\"");
    }
    return v;
  };
  std::vector<std::size_t> out;
  std::size_t pos = 0;
  while (pos <= spec.size()) {
    const std::size_t comma = std::min(spec.find(',', pos), spec.size());
    const std::string_view item = spec.substr(pos, comma - pos);
    if (item.find(':') == std::string_view::npos) {
      out.push_back(parse_num(item));
    } else {
      const std::size_t c1 = item.find(':');
      const std::size_t c2 = item.find(':', c1 + 1);
      if (c2 == std::string_view::npos || item.find(':', c2 + 1) != std::string_view::npos) {
        throw InvalidArgumentError("grid: range must be start:stop:step, got \"" + std::string(item) + "\"");
      }
      const std::size_t start = parse_num(item.substr(0, c1));
      const std::size_t stop = parse_num(item.substr(c1 + 1, c2 - c1 - 1));
      const std::size_t step = parse_num(item.substr(c2 + 1));
      if (step == 0 || start > stop) {
        throw InvalidArgumentError("grid: range \"" + std::string(item) + "\" needs step > 0 and start <= stop");
      }
      for (std::size_t v = start; v <= stop; v += step) out.push_back(v);
    }
    pos = comma + 1;
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  if (!out.empty() && out.front() == 0) throw InvalidArgumentError("grid: values must be >= 1");
  return out;
}

struct SweepConfig {
  Strategy strategy = Strategy::MaxSim;
  /// k' values for Kprime, cutoffs k for ranked strategies.
  std::vector<std::size_t> grid;
  /// nprobe, final depth, and k' for ranked strategies.
  PipelineConfig base;
  /// Reference configuration every grid point is tested against.
  PipelineConfig baseline;
  MetricOptions metrics;
  Metric test_metric = Metric::Ndcg10;
  double alpha = 0.05;
};

struct SweepRow {
  std::size_t point = 0;
  double mean_candidates = 0.0;
  double mrr = 0.0;
  double ndcg10 = 0.0;
  double map = 0.0;
  double recall = 0.0;
  double p_adjusted = 1.0;
  bool significant = false;
  double mean_stage2_ms = 0.0;
};

struct SweepResult {
  std::vector<SweepRow> rows;
  SweepRow baseline;
};

namespace detail {

struct EvaluatedRun {
  SweepRow row;
  MetricReport tested;
};

inline EvaluatedRun evaluate_config(const MultiVectorCorpus& corpus, const IvfPqIndex& index, const QuerySet& queries,
                                    const Qrels& qrels, const PipelineConfig& cfg, const SweepConfig& sc,
                                    const Executor& exec) {
  const PipelineOutput out = run_pipeline(corpus, index, queries, cfg, exec);
  const RunFile run = to_run(corpus, out.runs);
  EvaluatedRun e;
  double cands = 0.0;
  double stage2 = 0.0;
  for (const auto& t : out.timings) {
    cands += double(t.candidates);
    stage2 += t.stage2_ms;
  }
  const double nq = std::max<double>(1.0, double(out.timings.size()));
  e.row.mean_candidates = cands / nq;
  e.row.mean_stage2_ms = stage2 / nq;
  e.row.mrr = compute_metric(Metric::Mrr, run, qrels, sc.metrics).mean;
  e.row.ndcg10 = compute_metric(Metric::Ndcg10, run, qrels, sc.metrics).mean;
  e.row.map = compute_metric(Metric::Map, run, qrels, sc.metrics).mean;
  e.row.recall = compute_metric(Metric::Recall, run, qrels, sc.metrics).mean;
  e.tested = compute_metric(sc.test_metric, run, qrels, sc.metrics);
  return e;
}

}  // namespace detail

inline SweepResult sweep(const MultiVectorCorpus& corpus, const IvfPqIndex& index, const QuerySet& queries,
                         const Qrels& qrels, const SweepConfig& sc, const Executor& exec = Executor{}) {
  if (sc.grid.empty()) throw InvalidArgumentError("sweep: empty grid");
  const auto base = detail::evaluate_config(corpus, index, queries, qrels, sc.baseline, sc, exec);
  SweepResult result;
  result.baseline = base.row;
  for (const std::size_t point : sc.grid) {
    PipelineConfig cfg = sc.base;
    cfg.strategy = sc.strategy;
    if (sc.strategy == Strategy::Kprime) {
      cfg.kprime = point;
      cfg.k.reset();
    } else {
      cfg.k = point;
    }
    auto e = detail::evaluate_config(corpus, index, queries, qrels, cfg, sc, exec);
    e.row.point = point;
    const auto [xs, ys] = paired_values(e.tested, base.tested);
    if (xs.size() >= 2) {
      e.row.p_adjusted = paired_ttest(xs, ys, sc.grid.size()).p_adjusted;
    }
    e.row.significant = e.row.p_adjusted < sc.alpha;
    result.rows.push_back(e.row);
  }
  return result;
}

/// CSV header `k,mean_candidates,mrr,ndcg10,map,recall,p_adjusted,significant`.
inline void write_sweep_csv(std::ostream& out, const std::vector<SweepRow>& rows) {
  out << "k,mean_candidates,mrr,ndcg10,map,recall,p_adjusted,significant\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%zu,%.2f,%.6f,%.6f,%.6f,%.6f,%.6g,%d\n", r.point, r.mean_candidates, r.mrr,
                  r.ndcg10, r.map, r.recall, r.p_adjusted, r.significant ? 1 : 0);
    out << buf;
  }
}

// ---------------------------------------------------------------------------
// Rank correlation between two runs

struct RankPair {
  std::string docno;
  std::size_t rank_a = 0;
  std::size_t rank_b = 0;
};

struct QueryCorrelation {
  std::string qid;
  std::vector<RankPair> pairs;  // rank_a order
  std::optional<double> rho;    // empty when fewer than two shared documents
};

/// Spearman correlation of the ranks two runs give to the documents they share.
inline std::vector<QueryCorrelation> correlate(const RunFile& a, const RunFile& b) {
  std::vector<QueryCorrelation> out;
  for (const auto& qa : a.queries) {
    QueryCorrelation qc{qa.qid, {}, std::nullopt};
    if (const QueryRun* qb = b.find(qa.qid)) {
      std::unordered_map<std::string, std::size_t> rank_b;
      for (const auto& e : qb->entries) rank_b.emplace(e.docno, e.rank);
      for (const auto& e : qa.entries) {
        if (auto it = rank_b.find(e.docno); it != rank_b.end()) qc.pairs.push_back({e.docno, e.rank, it->second});
      }
    }
    if (qc.pairs.size() >= 2) {
      std::vector<double> ra, rb;
      for (const auto& p : qc.pairs) {
        ra.push_back(double(p.rank_a));
        rb.push_back(double(p.rank_b));
      }
      try {
        qc.rho = spearman(ra, rb);
      } catch (const UndefinedError&) {
      }
    }
    if (!qc.rho) warn("correlate: query " + qa.qid + " shares fewer than two documents; rho undefined");
    out.push_back(std::move(qc));
  }
  return out;
}

}  // namespace mvdr::eval
