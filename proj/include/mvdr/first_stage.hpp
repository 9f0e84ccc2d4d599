#pragma once

// Candidate generation from per-query-embedding ANN hits, and the four ways of
// turning those hits into a candidate list for the exact stage:
//
//   Kprime  the unordered union of documents owning any retrieved embedding
//   Count   number of retrieved embeddings per document
//   SumSim  sum of approximate similarities of those embeddings
//   MaxSim  per query embedding, the best approximate similarity in the
//           document; summed over query embeddings (absent terms add 0)

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mvdr/embed_store.hpp"
#include "mvdr/errors.hpp"
#include "mvdr/ivfpq.hpp"
#include "mvdr/types.hpp"

namespace mvdr {

enum class Strategy { Kprime, Count, SumSim, MaxSim };

inline std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::Kprime: return "kprime";
    case Strategy::Count: return "count";
    case Strategy::SumSim: return "sumsim";
    case Strategy::MaxSim: return "maxsim";
  }
  return "?";
}

inline std::optional<Strategy> parse_strategy(std::string_view name) {
  for (Strategy s : {Strategy::Kprime, Strategy::Count, Strategy::SumSim, Strategy::MaxSim}) {
    if (to_string(s) == name) return s;
  }
  return std::nullopt;
}

struct Candidate {
  DocId doc;
  /// NaN for Kprime, where candidates carry no score.
  double score = std::numeric_limits<double>::quiet_NaN();

  friend bool operator==(const Candidate& a, const Candidate& b) {
    return a.doc == b.doc && (a.score == b.score || (std::isnan(a.score) && std::isnan(b.score)));
  }
};

/// Documents proposed for exact scoring. Ranked strategies are sorted by
/// (score desc, DocId asc); Kprime is a set, kept in DocId order.
struct CandidateRanking {
  std::string qid;
  Strategy strategy = Strategy::Kprime;
  std::vector<Candidate> entries;

  [[nodiscard]] bool ranked() const { return strategy != Strategy::Kprime; }
  [[nodiscard]] std::size_t size() const { return entries.size(); }
};

struct CandidateSets {
  /// D(phi_i, k') for each query embedding, ascending DocId.
  std::vector<std::vector<DocId>> per_embedding;
  /// D(k'), ascending DocId.
  std::vector<DocId> all;
};

inline CandidateSets candidate_sets(const MultiVectorCorpus& corpus, const std::vector<EmbeddingHitList>& hits) {
  CandidateSets out;
  out.per_embedding.reserve(hits.size());
  for (const auto& list : hits) {
    std::vector<DocId> docs;
    docs.reserve(list.size());
    for (const auto& h : list) docs.push_back(corpus.embedding_to_doc(h.embedding));
    std::sort(docs.begin(), docs.end());
    docs.erase(std::unique(docs.begin(), docs.end()), docs.end());
    out.all.insert(out.all.end(), docs.begin(), docs.end());
    out.per_embedding.push_back(std::move(docs));
  }
  std::sort(out.all.begin(), out.all.end());
  out.all.erase(std::unique(out.all.begin(), out.all.end()), out.all.end());
  return out;
}

namespace detail {

inline bool candidate_before(const Candidate& a, const Candidate& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.doc < b.doc;
}

#ifndef NDEBUG
inline void assert_no_duplicate_hits(const EmbeddingHitList& list) {
  std::vector<EmbeddingId> ids;
  ids.reserve(list.size());
  for (const auto& h : list) ids.push_back(h.embedding);
  std::sort(ids.begin(), ids.end());
  assert(std::adjacent_find(ids.begin(), ids.end()) == ids.end() && "duplicate hit in one hit list");
}
#endif

// Accumulates per-document contributions emitted by `per_embedding` for each
// hit list, in hit-list order so that sums are reproducible, then sorts.
template <class PerEmbedding>
CandidateRanking rank_by(const std::vector<EmbeddingHitList>& hits,
                         Strategy strategy, PerEmbedding&& per_embedding) {
  std::unordered_map<DocId, std::size_t> slot;
  std::vector<Candidate> entries;
  for (const auto& list : hits) {
#ifndef NDEBUG
    assert_no_duplicate_hits(list);
#endif
    per_embedding(list, [&](DocId d, double contribution) {
      auto [it, inserted] = slot.try_emplace(d, entries.size());
      if (inserted) entries.push_back({d, 0.0});
      entries[it->second].score += contribution;
    });
  }
  std::sort(entries.begin(), entries.end(), candidate_before);
  return {"", strategy, std::move(entries)};
}

}  // namespace detail

/// Count: number of retrieved embeddings of each document, over all hit lists.
inline CandidateRanking rank_count(const MultiVectorCorpus& corpus, const std::vector<EmbeddingHitList>& hits) {
  return detail::rank_by(hits, Strategy::Count, [&](const EmbeddingHitList& list, auto&& add) {
    for (const auto& h : list) add(corpus.embedding_to_doc(h.embedding), 1.0);
  });
}

/// SumSim: sum of approximate similarities of every retrieved embedding.
inline CandidateRanking rank_sumsim(const MultiVectorCorpus& corpus, const std::vector<EmbeddingHitList>& hits) {
  return detail::rank_by(hits, Strategy::SumSim, [&](const EmbeddingHitList& list, auto&& add) {
    for (const auto& h : list) add(corpus.embedding_to_doc(h.embedding), double(h.approx_sim));
  });
}

/// MaxSim over retrieved embeddings only.
inline CandidateRanking rank_maxsim(const MultiVectorCorpus& corpus, const std::vector<EmbeddingHitList>& hits) {
  return detail::rank_by(hits, Strategy::MaxSim, [&](const EmbeddingHitList& list, auto&& add) {
    // Per-document maximum within this hit list, first-seen order.
    std::vector<std::pair<DocId, float>> best;
    std::unordered_map<DocId, std::size_t> at;
    for (const auto& h : list) {
      const DocId d = corpus.embedding_to_doc(h.embedding);
      auto [it, inserted] = at.try_emplace(d, best.size());
      if (inserted) {
        best.emplace_back(d, h.approx_sim);
      } else {
        best[it->second].second = std::max(best[it->second].second, h.approx_sim);
      }
    }
    for (const auto& [d, s] : best) add(d, double(s));
  });
}

/// Kprime: D(k') as an unordered set (stored in DocId order, no scores).
inline CandidateRanking kprime_set(const MultiVectorCorpus& corpus, const std::vector<EmbeddingHitList>& hits) {
  CandidateRanking out;
  out.strategy = Strategy::Kprime;
  for (const DocId d : candidate_sets(corpus, hits).all) out.entries.push_back({d});
  return out;
}

inline CandidateRanking rank_candidates(const MultiVectorCorpus& corpus, const std::vector<EmbeddingHitList>& hits,
                                        Strategy strategy) {
  switch (strategy) {
    case Strategy::Kprime: return kprime_set(corpus, hits);
    case Strategy::Count: return rank_count(corpus, hits);
    case Strategy::SumSim: return rank_sumsim(corpus, hits);
    case Strategy::MaxSim: return rank_maxsim(corpus, hits);
  }
  throw InvalidArgumentError("unknown strategy");
}

/// First min(k, |r|) entries of a ranked candidate list.
inline CandidateRanking cut(CandidateRanking r, std::size_t k) {
  if (!r.ranked()) {
    throw NotRankableError("cannot cut a kprime candidate set: it has no order (its size is set through k')");
  }
  if (r.entries.size() > k) r.entries.resize(k);
  return r;
}

}  // namespace mvdr
