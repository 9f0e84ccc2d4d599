#include <catch2/catch_amalgamated.hpp>

#include <cstring>
#include <set>

#include "helpers.hpp"

using namespace mvdr;

namespace {

struct Ref {
  std::uint64_t id;
  double sim;
};

// Exact top-k by inner product, double precision, ties to the lower id.
std::vector<Ref> brute_force(const MultiVectorCorpus& c, std::span<const float> q, std::size_t k) {
  std::vector<Ref> all;
  for (std::uint64_t e = 0; e < c.num_embeddings(); ++e) {
    double s = 0.0;
    const auto x = c.embedding(EmbeddingId(e));
    for (std::size_t j = 0; j < q.size(); ++j) s += double(q[j]) * x[j];
    all.push_back({e, s});
  }
  std::sort(all.begin(), all.end(), [](const Ref& a, const Ref& b) { return a.sim != b.sim ? a.sim > b.sim : a.id < b.id; });
  all.resize(std::min(k, all.size()));
  return all;
}

double recall(const EmbeddingHitList& got, const std::vector<Ref>& truth) {
  std::set<std::uint64_t> want;
  for (const auto& r : truth) want.insert(r.id);
  std::size_t found = 0;
  for (const auto& h : got) found += want.count(h.embedding.value());
  return double(found) / double(truth.size());
}

MultiVectorCorpus axis_corpus() {
  return {testutil::make_set(2, {{{1, 0}, {0, 1}}, {{-1, 0}}, {{0, -1}}}), {"a", "b", "c"}};
}

IvfPqParams params(std::size_t L, std::size_t m, std::size_t k_sub, double fraction = 1.0) {
  IvfPqParams p;
  p.partitions = L;
  p.m = m;
  p.k_sub = k_sub;
  p.train_fraction = fraction;
  return p;
}

}  // namespace

TEST_CASE("build_index: four embeddings in four partitions", "[ivfpq]") {
  const auto idx = build_index(axis_corpus(), params(4, 1, 4));
  REQUIRE(idx.partitions() == 4);
  std::set<std::uint64_t> ids;
  for (const auto& list : idx.lists) {
    REQUIRE(list.ids.size() == 1);
    ids.insert(list.ids[0].value());
  }
  CHECK(ids == std::set<std::uint64_t>{0, 1, 2, 3});
}

TEST_CASE("ivfpq defaults", "[ivfpq]") {
  CHECK(kDefaultTrainFraction == 0.05);
  CHECK(kDefaultNProbe == 10);
  CHECK(kDefaultKPrime == 1000);
  CHECK(IvfPqParams{}.train_fraction == 0.05);
  CHECK(default_partitions(10'000) == 512);
  CHECK(default_partitions(100) == 32);
  CHECK(default_partitions(1) == 16);
  CHECK(default_partitions(1ULL << 40) == 65536);
}

TEST_CASE("build_index: partition property", "[ivfpq][property]") {
  const auto c = testutil::random_corpus(125, 8, 8, 12, 3);
  REQUIRE(c.num_embeddings() == 1000);
  const auto idx = build_index(c, params(16, 4, 16, 0.5));
  std::vector<int> seen(1000, 0);
  std::size_t total = 0;
  for (std::size_t l = 0; l < idx.partitions(); ++l) {
    const auto& list = idx.lists[l];
    total += list.ids.size();
    CHECK(std::is_sorted(list.ids.begin(), list.ids.end()));
    CHECK(list.codes.size() == list.ids.size() * 4);
    for (const auto id : list.ids) {
      ++seen[id.value()];
      // Each embedding lives in its max-inner-product partition.
      CHECK(nearest_ip(c.embedding(id), idx.coarse) == l);
    }
  }
  CHECK(total == 1000);
  CHECK(std::all_of(seen.begin(), seen.end(), [](int v) { return v == 1; }));
}

TEST_CASE("build_index: preconditions", "[ivfpq]") {
  const auto c = testutil::random_corpus(10, 2, 2, 4, 1);
  CHECK_THROWS_AS(build_index(c, params(21, 2, 4)), TooFewPointsError);
  CHECK_THROWS_AS(build_index(c, params(4, 2, 8, 0.25)), TooFewPointsError);
  CHECK_THROWS_AS(build_index(c, params(4, 5, 4)), InvalidArgumentError);
  CHECK_THROWS_AS(build_index(c, params(4, 2, 4, 0.0)), InvalidArgumentError);
}

TEST_CASE("search: lossless settings match brute force", "[ivfpq]") {
  const auto c = testutil::random_corpus(50, 4, 4, 4, 11);
  const auto idx = build_index(c, params(4, 4, 200));
  const auto queries = testutil::random_matrix(20, 4, 12);
  for (std::size_t qi = 0; qi < queries.rows(); ++qi) {
    const auto q = queries.row(qi);
    const auto got = search(idx, q, 25, 4);
    const auto want = brute_force(c, q, 25);
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].embedding.value() == want[i].id);
      CHECK(double(got[i].approx_sim) == Catch::Approx(want[i].sim).margin(1e-5));
    }
  }
}

TEST_CASE("search: short lists return everything probed, sorted", "[ivfpq]") {
  const auto c = testutil::random_corpus(100, 3, 3, 8, 5);
  const auto idx = build_index(c, params(8, 2, 16, 0.5));
  const auto q = testutil::random_matrix(1, 8, 6);
  const auto probes = probe_order(idx, q.row(0), 2);
  std::size_t available = 0;
  for (const auto l : probes) available += idx.lists[l].ids.size();
  const auto hits = search(idx, q.row(0), 100000, 2);
  CHECK(hits.size() == available);
  CHECK(std::is_sorted(hits.begin(), hits.end(), hit_before));
  CHECK(std::adjacent_find(hits.begin(), hits.end(), [](const auto& a, const auto& b) { return !hit_before(a, b); }) ==
        hits.end());
}

TEST_CASE("search: nprobe above L clamps with a warning", "[ivfpq]") {
  const auto c = testutil::random_corpus(40, 2, 2, 4, 5);
  const auto idx = build_index(c, params(4, 2, 8));
  const auto q = testutil::random_matrix(1, 4, 1);
  testutil::WarningCapture warnings;
  const auto clamped = search(idx, q.row(0), 10, 10);
  CHECK(warnings.messages.size() == 1);
  CHECK(clamped == search(idx, q.row(0), 10, 4));
  CHECK_THROWS_AS(search(idx, q.row(0), 10, 0), InvalidArgumentError);
  CHECK_THROWS_AS(search(idx, q.row(0), 0, 1), InvalidArgumentError);
  CHECK_THROWS_AS(search(idx, std::vector<float>(3), 1, 1), DimError);
}

TEST_CASE("search: approximate similarity decomposes as centroid term plus ADC", "[ivfpq][property]") {
  const auto c = testutil::random_corpus(200, 5, 5, 16, 8);
  const auto idx = build_index(c, params(16, 4, 32, 0.2));
  const auto queries = testutil::random_matrix(10, 16, 9);
  std::vector<std::size_t> owner(c.num_embeddings()), pos(c.num_embeddings());
  for (std::size_t l = 0; l < idx.partitions(); ++l) {
    for (std::size_t p = 0; p < idx.lists[l].ids.size(); ++p) {
      owner[idx.lists[l].ids[p].value()] = l;
      pos[idx.lists[l].ids[p].value()] = p;
    }
  }
  for (std::size_t qi = 0; qi < queries.rows(); ++qi) {
    const auto q = queries.row(qi);
    for (const auto& h : search(idx, q, 50, 4)) {
      const std::size_t l = owner[h.embedding.value()];
      const auto residual = pq_decode(idx.codebook, idx.code(l, pos[h.embedding.value()]));
      double ref = 0.0;
      for (std::size_t j = 0; j < 16; ++j) ref += double(q[j]) * (double(idx.coarse.row(l)[j]) + residual[j]);
      CHECK(double(h.approx_sim) == Catch::Approx(ref).epsilon(1e-5).margin(1e-6));
    }
  }
}

TEST_CASE("search: recall does not drop as nprobe grows", "[ivfpq][property]") {
  const auto c = testutil::random_corpus(500, 4, 4, 16, 14);
  const std::size_t L = 32;
  const auto idx = build_index(c, params(L, 4, 64, 0.5));
  const auto queries = testutil::random_matrix(60, 16, 15);
  double r1 = 0, r4 = 0, rl = 0;
  for (std::size_t qi = 0; qi < queries.rows(); ++qi) {
    const auto q = queries.row(qi);
    const auto truth = brute_force(c, q, 20);
    r1 += recall(search(idx, q, 20, 1), truth);
    r4 += recall(search(idx, q, 20, 4), truth);
    rl += recall(search(idx, q, 20, L), truth);
  }
  CHECK(r1 <= r4);
  CHECK(r4 <= rl);
}

TEST_CASE("build and search are deterministic across thread counts", "[ivfpq][property]") {
  const auto c = testutil::random_corpus(300, 3, 6, 8, 20);
  const auto a = build_index(c, params(16, 4, 32, 0.5), Executor(1));
  const auto b = build_index(c, params(16, 4, 32, 0.5), Executor(8));
  CHECK(a == b);
  const auto q = testutil::random_matrix(5, 8, 21);
  for (std::size_t i = 0; i < 5; ++i) CHECK(search(a, q.row(i), 30, 3) == search(b, q.row(i), 30, 3));
}

TEST_CASE("index persistence", "[ivfpq]") {
  const auto c = testutil::random_corpus(120, 2, 5, 6, 31);
  const auto idx = build_index(c, params(8, 3, 16, 0.5));
  const auto bytes = encode_index(idx);

  SECTION("round trip") {
    const auto dir = testutil::temp_dir("index_rt");
    save_index(idx, dir / "x.ivpq");
    const auto back = load_index(dir / "x.ivpq");
    CHECK(back == idx);
    CHECK(encode_index(back) == bytes);
  }
  SECTION("truncated") {
    for (std::size_t cut : {std::size_t{0}, std::size_t{3}, std::size_t{20}, bytes.size() / 2, bytes.size() - 1}) {
      CHECK_THROWS_AS(decode_index(std::span(bytes).first(cut)), FormatError);
    }
  }
  SECTION("version 2") {
    auto b = bytes;
    b[4] = 2;
    CHECK_THROWS_WITH(decode_index(b), Catch::Matchers::ContainsSubstring("supported: 1"));
  }
  SECTION("bad magic") {
    auto b = bytes;
    b[3] = 'X';
    CHECK_THROWS_AS(decode_index(b), FormatError);
  }
  SECTION("section length mismatch") {
    auto b = bytes;
    // First section length sits right after the 32-byte header.
    b[32] ^= 4;
    CHECK_THROWS_AS(decode_index(b), FormatError);
  }
  SECTION("bad header values") {
    auto b = bytes;
    const std::uint32_t big_m = 99;
    std::memcpy(b.data() + 24, &big_m, 4);
    CHECK_THROWS_AS(decode_index(b), FormatError);
  }
  SECTION("trailing byte") {
    auto b = bytes;
    b.push_back(0);
    CHECK_THROWS_AS(decode_index(b), FormatError);
  }
  SECTION("corrupt code byte") {
    auto b = bytes;
    b.back() = 200;
    CHECK_THROWS_AS(decode_index(b), FormatError);
  }
}
