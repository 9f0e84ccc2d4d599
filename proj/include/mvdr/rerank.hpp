#pragma once

// Exact late-interaction scoring and the two-stage retrieval pipeline.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mvdr/embed_store.hpp"
#include "mvdr/errors.hpp"
#include "mvdr/first_stage.hpp"
#include "mvdr/ivfpq.hpp"
#include "mvdr/parallel.hpp"
#include "mvdr/types.hpp"

namespace mvdr {

inline constexpr std::size_t kDefaultFinalDepth = 1000;

/// sum_i max_j <q_i, d_j>, accumulated in double.
inline double maxsim_score(MatrixView q, MatrixView d) {
  if (q.dim != d.dim) {
    throw DimError("maxsim: query dim " + std::to_string(q.dim) + " != document dim " + std::to_string(d.dim));
  }
  if (q.rows() == 0 || d.rows() == 0) throw InvalidArgumentError("maxsim: empty query or document");
  double total = 0.0;
  for (std::size_t i = 0; i < q.rows(); ++i) {
    const auto qi = q.row(i);
    double best = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < d.rows(); ++j) best = std::max(best, dot_f64(qi, d.row(j)));
    total += best;
  }
  return total;
}

struct ScoredDoc {
  DocId doc;
  double score = 0.0;

  friend bool operator==(const ScoredDoc&, const ScoredDoc&) = default;
};

/// Exact scores, sorted by (score desc, DocId asc).
struct ScoredRun {
  std::string qid;
  std::vector<ScoredDoc> entries;

  friend bool operator==(const ScoredRun&, const ScoredRun&) = default;
};

inline bool scored_before(const ScoredDoc& a, const ScoredDoc& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.doc < b.doc;
}

/// Exact MaxSim over the candidates; approximate scores and candidate order are
/// ignored. Keeps the best `final_depth`.
inline ScoredRun rerank(const MultiVectorCorpus& corpus, MatrixView query, const CandidateRanking& candidates,
                        std::size_t final_depth, const Executor& exec = Executor{}) {
  if (final_depth == 0) throw InvalidArgumentError("rerank: final_depth must be >= 1");
  for (const auto& c : candidates.entries) {
    if (c.doc.value() >= corpus.num_docs()) {
      throw CorpusMismatchError("rerank: candidate DocId " + std::to_string(c.doc.value()) +
                                " not in corpus of " + std::to_string(corpus.num_docs()) + " documents");
    }
  }
  ScoredRun run{candidates.qid, std::vector<ScoredDoc>(candidates.entries.size())};
  exec.parallel_for(candidates.entries.size(), [&](std::size_t i) {
    const DocId d = candidates.entries[i].doc;
    run.entries[i] = {d, maxsim_score(query, corpus.doc(d))};
  });
  const std::size_t keep = std::min(final_depth, run.entries.size());
  std::partial_sort(run.entries.begin(), run.entries.begin() + static_cast<std::ptrdiff_t>(keep), run.entries.end(),
                    scored_before);
  run.entries.resize(keep);
  return run;
}

/// Exact MaxSim over every document in the corpus.
inline ScoredRun exhaustive_search(const MultiVectorCorpus& corpus, MatrixView query, std::size_t final_depth,
                                   const Executor& exec = Executor{}) {
  CandidateRanking all;
  all.entries.reserve(corpus.num_docs());
  for (std::size_t d = 0; d < corpus.num_docs(); ++d) all.entries.push_back({DocId(static_cast<std::uint32_t>(d))});
  return rerank(corpus, query, all, final_depth, exec);
}

struct PipelineConfig {
  Strategy strategy = Strategy::Kprime;
  std::size_t kprime = kDefaultKPrime;
  std::size_t nprobe = kDefaultNProbe;
  /// Candidate cutoff; must be empty for Kprime. Empty for a ranked strategy
  /// forwards the whole candidate set.
  std::optional<std::size_t> k;
  std::size_t final_depth = kDefaultFinalDepth;

  void validate() const {
    if (kprime == 0) throw InvalidArgumentError("k' must be >= 1");
    if (nprobe == 0) throw InvalidArgumentError("nprobe must be >= 1");
    if (final_depth == 0) throw InvalidArgumentError("final depth must be >= 1");
    if (strategy == Strategy::Kprime && k) {
      throw NotRankableError("a cutoff k cannot be applied to the kprime strategy");
    }
    if (k && *k == 0) throw InvalidArgumentError("cutoff k must be >= 1");
  }
};

struct FirstStageResult {
  CandidateRanking ranking;  // after the cutoff
  std::size_t union_size = 0;  // |D(k')| before the cutoff
  std::size_t query_embeddings = 0;
};

/// ANN search for each query embedding, strategy ranking, optional cutoff.
inline FirstStageResult first_stage(const MultiVectorCorpus& corpus, const IvfPqIndex& index, MatrixView query,
                                    const PipelineConfig& cfg, const Executor& exec = Executor{}) {
  const std::size_t n = query.rows();
  std::vector<EmbeddingHitList> hits(n);
  exec.parallel_for(n, [&](std::size_t i) { hits[i] = search(index, query.row(i), cfg.kprime, cfg.nprobe); });
  FirstStageResult out;
  out.query_embeddings = n;
  out.ranking = rank_candidates(corpus, hits, cfg.strategy);
  out.union_size = out.ranking.size();
  if (cfg.k) out.ranking = cut(std::move(out.ranking), *cfg.k);
  return out;
}

struct StageTiming {
  std::string qid;
  double stage1_ms = 0.0;
  double stage2_ms = 0.0;
  std::size_t candidates = 0;  // documents scored in stage 2
  std::size_t union_size = 0;  // |D(k')|
  std::size_t query_embeddings = 0;
};

struct PipelineOutput {
  std::vector<ScoredRun> runs;
  std::vector<StageTiming> timings;
};

/// Runs both stages for every query in order. Each stage is timed on its own.
inline PipelineOutput run_pipeline(const MultiVectorCorpus& corpus, const IvfPqIndex& index, const QuerySet& queries,
                                   PipelineConfig cfg, const Executor& exec = Executor{}) {
  cfg.validate();
  if (queries.dim() != corpus.dim() || index.dim != corpus.dim()) {
    throw DimError("pipeline: corpus, index and queries disagree on dimensionality");
  }
  if (index.num_embeddings != corpus.num_embeddings()) {
    throw CorpusMismatchError("pipeline: index covers " + std::to_string(index.num_embeddings) +
                              " embeddings, corpus has " + std::to_string(corpus.num_embeddings()));
  }
  cfg.nprobe = effective_nprobe(index, cfg.nprobe);

  using Clock = std::chrono::steady_clock;
  auto ms = [](Clock::duration d) { return std::chrono::duration<double, std::milli>(d).count(); };

  PipelineOutput out;
  out.runs.reserve(queries.size());
  out.timings.reserve(queries.size());
  for (std::size_t qi = 0; qi < queries.size(); ++qi) {
    const MatrixView q = queries.query(qi);
    const auto t0 = Clock::now();
    FirstStageResult fs = first_stage(corpus, index, q, cfg, exec);
    fs.ranking.qid = queries.qid(qi);
    const auto t1 = Clock::now();
    ScoredRun run = rerank(corpus, q, fs.ranking, cfg.final_depth, exec);
    const auto t2 = Clock::now();
    out.timings.push_back({queries.qid(qi), ms(t1 - t0), ms(t2 - t1), fs.ranking.size(), fs.union_size,
                           fs.query_embeddings});
    out.runs.push_back(std::move(run));
  }
  return out;
}

/// CSV header `qid,stage1_ms,stage2_ms,candidates`.
inline void write_timings_csv(std::ostream& out, const std::vector<StageTiming>& timings) {
  out << "qid,stage1_ms,stage2_ms,candidates\n";
  char buf[64];
  for (const auto& t : timings) {
    std::snprintf(buf, sizeof(buf), "%.3f,%.3f", t.stage1_ms, t.stage2_ms);
    out << t.qid << ',' << buf << ',' << t.candidates << '\n';
  }
}

}  // namespace mvdr
