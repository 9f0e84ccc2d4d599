#pragma once

// Desk-scale workloads with planted relevance.
//
// Cluster centres are drawn uniformly on the unit sphere. Document i belongs
// to cluster i % clusters and query j to cluster j % clusters; a query's
// relevant documents are exactly those of its cluster (grade 1). Each token
// embedding is its cluster centre plus isotropic Gaussian jitter, normalized to
// unit length. A fraction of document tokens (`noise_fraction`) is drawn from
// a different, random cluster so documents share vocabulary across topics.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "mvdr/embed_store.hpp"
#include "mvdr/eval/trec.hpp"
#include "mvdr/rng.hpp"

namespace mvdr::eval {

struct SynthParams {
  std::size_t num_docs = 1000;
  std::size_t doc_len = 8;
  std::size_t num_queries = 50;
  std::size_t query_len = 4;
  std::size_t dim = 32;
  std::size_t clusters = 8;
  std::uint64_t seed = 7;
  /// Standard deviation of the per-token jitter, relative to the unit-norm centre.
  double jitter = 0.5;
  double noise_fraction = 0.25;
};

struct SynthWorkload {
  MultiVectorCorpus corpus;
  QuerySet queries;
  Qrels qrels;
  std::vector<std::size_t> doc_cluster;
  std::vector<std::size_t> query_cluster;
};

inline SynthWorkload synth(const SynthParams& p) {
  if (p.num_docs == 0 || p.doc_len == 0 || p.num_queries == 0 || p.query_len == 0 || p.dim == 0 || p.clusters == 0) {
    throw InvalidArgumentError("synth: all counts must be >= 1");
  }
  SplitMix64 rng(p.seed);
  Matrix centres(p.clusters, p.dim);
  for (std::size_t c = 0; c < p.clusters; ++c) {
    auto row = centres.row(c);
    do {
      for (float& v : row) v = static_cast<float>(rng.normal());
    } while (normalize_rows(row, p.dim) != 0);
  }

  const double sigma = p.jitter / std::sqrt(double(p.dim));
  auto token = [&](std::size_t cluster, std::span<float> out) {
    const auto c = centres.row(cluster);
    for (std::size_t j = 0; j < p.dim; ++j) out[j] = static_cast<float>(c[j] + sigma * rng.normal());
    normalize_rows(out, p.dim);
  };

  SynthWorkload w;
  MultiVectorSet docs(p.dim);
  std::vector<std::string> docnos;
  Matrix buf(p.doc_len, p.dim);
  for (std::size_t d = 0; d < p.num_docs; ++d) {
    const std::size_t cluster = d % p.clusters;
    w.doc_cluster.push_back(cluster);
    for (std::size_t t = 0; t < p.doc_len; ++t) {
      std::size_t source = cluster;
      if (p.clusters > 1 && rng.uniform() < p.noise_fraction) {
        source = (cluster + 1 + rng.below(p.clusters - 1)) % p.clusters;
      }
      token(source, buf.row(t));
    }
    docs.append(buf.view());
    docnos.push_back("D" + std::to_string(d));
  }

  MultiVectorSet qs(p.dim);
  std::vector<std::string> qids;
  Matrix qbuf(p.query_len, p.dim);
  for (std::size_t q = 0; q < p.num_queries; ++q) {
    const std::size_t cluster = q % p.clusters;
    w.query_cluster.push_back(cluster);
    for (std::size_t t = 0; t < p.query_len; ++t) token(cluster, qbuf.row(t));
    qs.append(qbuf.view());
    qids.push_back("Q" + std::to_string(q));
    for (std::size_t d = cluster; d < p.num_docs; d += p.clusters) w.qrels.set(qids.back(), docnos[d], 1);
  }

  w.corpus = MultiVectorCorpus(std::move(docs), std::move(docnos), std::max(p.doc_len, kDefaultMaxDocLen));
  w.queries = QuerySet(std::move(qs), std::move(qids), std::max(p.query_len, kDefaultMaxQueryLen));
  return w;
}

/// Writes corpus.mvec/.tsv, queries.mvec/.tsv and qrels.txt into `dir`.
inline void write_workload(const std::filesystem::path& dir, const SynthWorkload& w) {
  std::filesystem::create_directories(dir);
  save_corpus(dir / "corpus.mvec", w.corpus);
  save_queries(dir / "queries.mvec", w.queries);
  std::ofstream out(dir / "qrels.txt", std::ios::trunc);
  if (!out) throw Error("cannot write " + (dir / "qrels.txt").string());
  write_qrels(out, w.qrels);
}

}  // namespace mvdr::eval
