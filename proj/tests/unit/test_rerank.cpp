#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "helpers.hpp"

using namespace mvdr;

namespace {

double naive_maxsim(MatrixView q, MatrixView d) {
  double total = 0.0;
  for (std::size_t i = 0; i < q.rows(); ++i) {
    double best = -1e300;
    for (std::size_t j = 0; j < d.rows(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < q.dim; ++k) s += double(q.row(i)[k]) * double(d.row(j)[k]);
      best = std::max(best, s);
    }
    total += best;
  }
  return total;
}

CandidateRanking all_docs(const MultiVectorCorpus& c) {
  CandidateRanking r;
  for (std::uint32_t d = 0; d < c.num_docs(); ++d) r.entries.push_back({DocId(d)});
  return r;
}

IvfPqParams small_params() {
  IvfPqParams p;
  p.partitions = 16;
  p.m = 4;
  p.k_sub = 32;
  p.train_fraction = 0.5;
  return p;
}

}  // namespace

TEST_CASE("maxsim_score examples", "[rerank]") {
  const Matrix q = [] {
    Matrix m(2, 2);
    m.values = {1, 0, 0, 1};
    return m;
  }();
  Matrix d(2, 2);
  d.values = {1, 0, 0.5F, 0.5F};
  CHECK(maxsim_score(q.view(), d.view()) == 1.5);

  const auto unit = testutil::random_matrix(1, 8, 3);
  Matrix doc(3, 8);
  doc.values = testutil::random_matrix(3, 8, 4).values;
  std::copy(unit.values.begin(), unit.values.end(), doc.row(1).begin());
  CHECK(maxsim_score(unit.view(), doc.view()) == Catch::Approx(1.0).epsilon(1e-6));

  CHECK_THROWS_AS(maxsim_score(q.view(), Matrix(2, 3).view()), DimError);
}

TEST_CASE("maxsim_score matches a naive loop", "[rerank][property]") {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const auto q = testutil::random_matrix(4, 8, seed, false);
    const auto d = testutil::random_matrix(7, 8, seed + 1000, false);
    CHECK(maxsim_score(q.view(), d.view()) == Catch::Approx(naive_maxsim(q.view(), d.view())).epsilon(1e-6));
  }
}

TEST_CASE("rerank over the full corpus equals a brute-force scan", "[rerank][property]") {
  const auto c = testutil::random_corpus(20, 1, 6, 8, 5);
  const auto q = testutil::random_matrix(3, 8, 6);
  const auto run = rerank(c, q.view(), all_docs(c), 1000);
  std::vector<std::pair<double, std::uint32_t>> oracle;
  for (std::uint32_t d = 0; d < 20; ++d) oracle.emplace_back(-naive_maxsim(q.view(), c.doc(DocId(d))), d);
  std::sort(oracle.begin(), oracle.end());
  REQUIRE(run.entries.size() == 20);
  for (std::size_t i = 0; i < 20; ++i) {
    CHECK(run.entries[i].doc.value() == oracle[i].second);
    CHECK(run.entries[i].score == Catch::Approx(-oracle[i].first).epsilon(1e-6));
  }
  CHECK(exhaustive_search(c, q.view(), 1000) == run);
}

TEST_CASE("rerank: single candidate, depth, unknown docs", "[rerank]") {
  const auto c = testutil::random_corpus(10, 2, 4, 4, 7);
  const auto q = testutil::random_matrix(2, 4, 8);
  CandidateRanking one;
  one.entries.push_back({DocId(4), 0.1});
  const auto run = rerank(c, q.view(), one, 10);
  REQUIRE(run.entries.size() == 1);
  CHECK(run.entries[0].score == maxsim_score(q.view(), c.doc(DocId(4))));

  CHECK(rerank(c, q.view(), all_docs(c), 3).entries.size() == 3);
  CandidateRanking bad;
  bad.entries.push_back({DocId(10)});
  CHECK_THROWS_AS(rerank(c, q.view(), bad, 10), CorpusMismatchError);
}

TEST_CASE("rerank ignores candidate order and approximate scores", "[rerank][property]") {
  const auto c = testutil::random_corpus(30, 1, 5, 6, 9);
  const auto q = testutil::random_matrix(3, 6, 10);
  auto cands = all_docs(c);
  for (auto& e : cands.entries) e.score = double(e.doc.value());
  const auto base = rerank(c, q.view(), cands, 30);
  SplitMix64 rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    for (std::size_t i = cands.entries.size(); i > 1; --i) std::swap(cands.entries[i - 1], cands.entries[rng.below(i)]);
    for (auto& e : cands.entries) e.score = rng.uniform();
    CHECK(rerank(c, q.view(), cands, 30) == base);
  }
  std::reverse(cands.entries.begin(), cands.entries.end());
  CHECK(rerank(c, q.view(), cands, 30, Executor(4)) == base);
}

TEST_CASE("pipeline config validation", "[rerank]") {
  PipelineConfig cfg;
  CHECK(cfg.kprime == 1000);
  CHECK(cfg.nprobe == 10);
  CHECK(cfg.final_depth == 1000);
  CHECK(cfg.strategy == Strategy::Kprime);
  CHECK_NOTHROW(cfg.validate());
  cfg.k = 200;
  CHECK_THROWS_AS(cfg.validate(), NotRankableError);
  cfg.strategy = Strategy::MaxSim;
  CHECK_NOTHROW(cfg.validate());
  cfg.final_depth = 0;
  CHECK_THROWS_AS(cfg.validate(), InvalidArgumentError);
}

TEST_CASE("pipeline: larger cutoffs contain smaller ones", "[rerank][property]") {
  const auto c = testutil::random_corpus(300, 2, 6, 8, 12);
  const auto idx = build_index(c, small_params());
  const auto q = testutil::random_matrix(4, 8, 13);
  PipelineConfig small;
  small.strategy = Strategy::MaxSim;
  small.kprime = 100;
  small.nprobe = 4;
  small.k = 20;
  PipelineConfig large = small;
  large.k = 60;
  const auto a = first_stage(c, idx, q.view(), small);
  const auto b = first_stage(c, idx, q.view(), large);
  REQUIRE(a.ranking.size() <= b.ranking.size());
  CHECK(std::equal(a.ranking.entries.begin(), a.ranking.entries.end(), b.ranking.entries.begin()));
  CHECK(a.union_size == b.union_size);
  CHECK(a.union_size <= 4 * 100);

  std::set<std::uint32_t> in_b;
  for (const auto& e : b.ranking.entries) in_b.insert(e.doc.value());
  for (const auto& e : rerank(c, q.view(), a.ranking, 10).entries) CHECK(in_b.count(e.doc.value()) == 1);
}

TEST_CASE("run_pipeline: shapes, timings, and errors", "[rerank]") {
  const auto c = testutil::random_corpus(200, 2, 6, 8, 14);
  const auto idx = build_index(c, small_params());
  auto qset = testutil::make_set(8, {});
  for (std::uint64_t s = 0; s < 3; ++s) qset.append(testutil::random_matrix(2 + s, 8, 100 + s).view());
  const QuerySet queries(qset, {"q0", "q1", "q2"});

  PipelineConfig cfg;
  cfg.kprime = 50;
  cfg.nprobe = 4;
  cfg.final_depth = 15;
  const auto out = run_pipeline(c, idx, queries, cfg);
  REQUIRE(out.runs.size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(out.runs[i].qid == queries.qid(i));
    CHECK(out.runs[i].entries.size() == 15);
    CHECK(out.timings[i].candidates == out.timings[i].union_size);
    CHECK(out.timings[i].union_size <= out.timings[i].query_embeddings * cfg.kprime);
    CHECK(out.timings[i].stage1_ms >= 0.0);
  }
  std::ostringstream csv;
  write_timings_csv(csv, out.timings);
  CHECK(csv.str().rfind("qid,stage1_ms,stage2_ms,candidates\nq0,", 0) == 0);

  cfg.strategy = Strategy::Count;
  cfg.k = 5;
  for (const auto& t : run_pipeline(c, idx, queries, cfg).timings) CHECK(t.candidates == 5);

  const auto other = testutil::random_corpus(10, 2, 2, 8, 1);
  CHECK_THROWS_AS(run_pipeline(other, idx, queries, cfg), CorpusMismatchError);
}

TEST_CASE("stage-2 time grows with the candidate count", "[rerank][timing]") {
  eval::SynthParams p;
  p.num_docs = 4000;
  p.doc_len = 32;
  p.num_queries = 40;
  p.query_len = 8;
  p.dim = 32;
  const auto w = eval::synth(p);
  IvfPqParams ip;
  ip.partitions = 32;
  ip.m = 8;
  ip.k_sub = 64;
  const auto idx = build_index(w.corpus, ip);

  auto median_stage2 = [&](std::size_t k) {
    PipelineConfig cfg;
    cfg.strategy = Strategy::MaxSim;
    cfg.kprime = 1000;
    cfg.nprobe = 32;
    cfg.k = k;
    const auto out = run_pipeline(w.corpus, idx, w.queries, cfg);
    std::vector<double> t;
    for (const auto& s : out.timings) {
      REQUIRE(s.candidates == k);
      t.push_back(s.stage2_ms);
    }
    std::nth_element(t.begin(), t.begin() + t.size() / 2, t.end());
    return t[t.size() / 2];
  };
  median_stage2(200);  // warm caches
  const double t200 = median_stage2(200);
  const double t400 = median_stage2(400);
  CHECK(t400 >= 1.5 * t200);
}
