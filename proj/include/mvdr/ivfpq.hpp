#pragma once

// Inverted-file index with product-quantized residuals, scored by inner
// product.
//
// Every embedding x is assigned to the coarse centroid c maximizing <x, c> and
// stored as the PQ code of r = x - c. A query embedding q probes the nprobe
// partitions with the largest <q, c>; a posting's approximate similarity is
// <q, c> + ADC(q, code(r)), which equals <q, c + decode(code(r))>.
//
// Index file layout (little-endian):
//   "IVPQ" | version u32 (=1) | dim u32 | T u64 | L u32 | m u32 | k_sub u32
//   section 1: u64 byte length | L * dim float32             (coarse centroids)
//   section 2: u64 byte length | m * k_sub * sub_dim float32 (PQ codebooks)
//   section 3: u64 byte length | per partition: count u64, count * (id u64, m code bytes)

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <string>
#include <vector>

#include "mvdr/binary_io.hpp"
#include "mvdr/embed_store.hpp"
#include "mvdr/errors.hpp"
#include "mvdr/kmeans.hpp"
#include "mvdr/parallel.hpp"
#include "mvdr/pq.hpp"
#include "mvdr/rng.hpp"
#include "mvdr/types.hpp"

namespace mvdr {

inline constexpr std::uint32_t kIndexVersion = 1;
inline constexpr double kDefaultTrainFraction = 0.05;
inline constexpr std::size_t kDefaultKPrime = 1000;
inline constexpr std::size_t kDefaultNProbe = 10;
inline constexpr std::size_t kDefaultSubquantizers = 16;
inline constexpr std::size_t kDefaultCodebookSize = 256;

/// 4 * sqrt(T) rounded to the nearest power of two, clamped to [16, 65536].
inline std::size_t default_partitions(std::uint64_t num_embeddings) {
  const double target = 4.0 * std::sqrt(double(num_embeddings));
  const double exponent = std::round(std::log2(std::max(target, 1.0)));
  return static_cast<std::size_t>(std::clamp(std::exp2(exponent), 16.0, 65536.0));
}

struct IvfPqParams {
  std::size_t partitions = 0;  // 0 selects default_partitions(T)
  std::size_t m = kDefaultSubquantizers;
  std::size_t k_sub = kDefaultCodebookSize;
  double train_fraction = kDefaultTrainFraction;
  std::uint64_t seed = 42;
  std::size_t kmeans_iters = kDefaultKMeansIters;
};

struct PostingList {
  std::vector<EmbeddingId> ids;  // ascending
  std::vector<std::uint8_t> codes;  // ids.size() * m, row-major

  friend bool operator==(const PostingList&, const PostingList&) = default;
};

struct IvfPqIndex {
  std::size_t dim = 0;
  std::uint64_t num_embeddings = 0;
  Matrix coarse;  // L x dim
  PqCodebook codebook;
  std::vector<PostingList> lists;

  [[nodiscard]] std::size_t partitions() const { return coarse.rows(); }
  [[nodiscard]] std::span<const std::uint8_t> code(std::size_t list, std::size_t pos) const {
    return {lists[list].codes.data() + pos * codebook.m, codebook.m};
  }

  friend bool operator==(const IvfPqIndex&, const IvfPqIndex&) = default;
};

/// Summary of a build, reported by tools.
struct BuildStats {
  std::size_t sample_size = 0;
  double coarse_distortion = 0.0;
};

struct EmbeddingHit {
  EmbeddingId embedding;
  float approx_sim = 0.0F;

  friend bool operator==(const EmbeddingHit&, const EmbeddingHit&) = default;
};

/// Ordering of hits: higher similarity first, then lower embedding id.
inline bool hit_before(const EmbeddingHit& a, const EmbeddingHit& b) {
  if (a.approx_sim != b.approx_sim) return a.approx_sim > b.approx_sim;
  return a.embedding < b.embedding;
}

/// Up to k' hits for one query embedding, sorted by hit_before.
using EmbeddingHitList = std::vector<EmbeddingHit>;

/// Coarse centroid with the largest inner product; lowest index wins ties.
inline std::size_t nearest_ip(std::span<const float> x, const Matrix& centroids) {
  std::size_t best = 0;
  float best_s = -std::numeric_limits<float>::infinity();
  for (std::size_t c = 0; c < centroids.rows(); ++c) {
    const float s = dot(x, centroids.row(c));
    if (s > best_s) {
      best_s = s;
      best = c;
    }
  }
  return best;
}

inline IvfPqIndex build_index(const MultiVectorCorpus& corpus, const IvfPqParams& params,
                              const Executor& exec = Executor{}, BuildStats* stats = nullptr) {
  const std::uint64_t total = corpus.num_embeddings();
  const std::size_t dim = corpus.dim();
  const std::size_t lists = params.partitions != 0 ? params.partitions : default_partitions(total);
  if (lists > total) {
    throw TooFewPointsError("build_index: L=" + std::to_string(lists) + " exceeds T=" + std::to_string(total));
  }
  if (!(params.train_fraction > 0.0 && params.train_fraction <= 1.0)) {
    throw InvalidArgumentError("build_index: train_fraction must be in (0, 1]");
  }
  const auto sample_size = static_cast<std::size_t>(
      std::min<double>(double(total), std::ceil(params.train_fraction * double(total))));
  if (sample_size < std::max(lists, params.k_sub)) {
    throw TooFewPointsError("build_index: training sample of " + std::to_string(sample_size) +
                            " embeddings is smaller than max(L=" + std::to_string(lists) +
                            ", k_sub=" + std::to_string(params.k_sub) + ")");
  }
  // Validates m and k_sub before any training work.
  (void)PqCodebook(dim, params.m, params.k_sub);

  // Seeded partial Fisher-Yates, then sorted so training sees ids in order.
  std::vector<std::uint64_t> order(total);
  std::iota(order.begin(), order.end(), std::uint64_t{0});
  SplitMix64 rng(params.seed);
  for (std::size_t i = 0; i < sample_size; ++i) {
    const std::uint64_t j = i + rng.below(total - i);
    std::swap(order[i], order[j]);
  }
  order.resize(sample_size);
  std::sort(order.begin(), order.end());

  const MatrixView all = corpus.embeddings();
  Matrix sample(sample_size, dim);
  for (std::size_t i = 0; i < sample_size; ++i) {
    std::copy(all.row(order[i]).begin(), all.row(order[i]).end(), sample.row(i).begin());
  }

  IvfPqIndex index;
  index.dim = dim;
  index.num_embeddings = total;
  KMeansModel coarse = kmeans_train(sample.view(), lists, params.kmeans_iters, params.seed, exec);
  index.coarse = std::move(coarse.centroids);

  Matrix residuals(sample_size, dim);
  exec.parallel_for(sample_size, [&](std::size_t i) {
    const auto x = sample.row(i);
    const auto c = index.coarse.row(nearest_ip(x, index.coarse));
    auto r = residuals.row(i);
    for (std::size_t j = 0; j < dim; ++j) r[j] = x[j] - c[j];
  });
  index.codebook = pq_train(residuals.view(), params.m, params.k_sub, params.kmeans_iters,
                            params.seed ^ 0x5eed5eed5eed5eedULL, exec);

  const std::size_t m = index.codebook.m;
  std::vector<std::uint32_t> assignment(total);
  std::vector<std::uint8_t> codes(total * m);
  exec.parallel_for(total, [&](std::size_t e) {
    const auto x = all.row(e);
    const std::size_t l = nearest_ip(x, index.coarse);
    assignment[e] = static_cast<std::uint32_t>(l);
    const auto c = index.coarse.row(l);
    std::vector<float> r(dim);
    for (std::size_t j = 0; j < dim; ++j) r[j] = x[j] - c[j];
    pq_encode_into(index.codebook, r, std::span<std::uint8_t>(codes).subspan(e * m, m));
  });

  index.lists.resize(lists);
  for (std::uint64_t e = 0; e < total; ++e) {
    auto& list = index.lists[assignment[e]];
    list.ids.emplace_back(e);
    list.codes.insert(list.codes.end(), codes.begin() + static_cast<std::ptrdiff_t>(e * m),
                      codes.begin() + static_cast<std::ptrdiff_t>((e + 1) * m));
  }
  if (stats != nullptr) *stats = {sample_size, coarse.distortion};
  return index;
}

/// Partitions to probe for q: the `nprobe` largest <q, c>, best first.
inline std::vector<std::uint32_t> probe_order(const IvfPqIndex& index, std::span<const float> q,
                                              std::size_t nprobe, std::vector<float>* scores = nullptr) {
  const std::size_t lists = index.partitions();
  std::vector<float> s(lists);
  for (std::size_t l = 0; l < lists; ++l) s[l] = dot(q, index.coarse.row(l));
  std::vector<std::uint32_t> order(lists);
  std::iota(order.begin(), order.end(), 0U);
  nprobe = std::min(nprobe, lists);
  std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(nprobe), order.end(),
                    [&](std::uint32_t a, std::uint32_t b) { return s[a] != s[b] ? s[a] > s[b] : a < b; });
  order.resize(nprobe);
  if (scores != nullptr) *scores = std::move(s);
  return order;
}

/// nprobe clamped to [1, L]; warns when the request exceeds L.
inline std::size_t effective_nprobe(const IvfPqIndex& index, std::size_t nprobe) {
  if (nprobe == 0) throw InvalidArgumentError("search: nprobe must be >= 1");
  if (nprobe > index.partitions()) {
    warn("nprobe=" + std::to_string(nprobe) + " exceeds L=" + std::to_string(index.partitions()) +
         "; clamping to " + std::to_string(index.partitions()));
    return index.partitions();
  }
  return nprobe;
}

/// Top-k' postings by approximate inner product across the probed partitions.
inline EmbeddingHitList search(const IvfPqIndex& index, std::span<const float> q, std::size_t kprime,
                               std::size_t nprobe) {
  if (q.size() != index.dim) {
    throw DimError("search: query dim " + std::to_string(q.size()) + " != index dim " + std::to_string(index.dim));
  }
  if (kprime == 0) throw InvalidArgumentError("search: k' must be >= 1");
  nprobe = effective_nprobe(index, nprobe);

  std::vector<float> centroid_scores;
  const auto probes = probe_order(index, q, nprobe, &centroid_scores);
  const AdcTable table = adc_table(index.codebook, q);

  // Bounded heap whose front is the worst retained hit.
  EmbeddingHitList heap;
  heap.reserve(kprime + 1);
  for (const std::uint32_t l : probes) {
    const float offset = centroid_scores[l];
    const PostingList& list = index.lists[l];
    for (std::size_t p = 0; p < list.ids.size(); ++p) {
      const EmbeddingHit hit{list.ids[p], offset + table.score(index.code(l, p))};
      if (heap.size() < kprime) {
        heap.push_back(hit);
        std::push_heap(heap.begin(), heap.end(), hit_before);
      } else if (hit_before(hit, heap.front())) {
        std::pop_heap(heap.begin(), heap.end(), hit_before);
        heap.back() = hit;
        std::push_heap(heap.begin(), heap.end(), hit_before);
      }
    }
  }
  std::sort_heap(heap.begin(), heap.end(), hit_before);
  return heap;
}

// ---------------------------------------------------------------------------
// Persistence

inline std::vector<unsigned char> encode_index(const IvfPqIndex& index) {
  const std::size_t m = index.codebook.m;
  io::ByteWriter w;
  w.put_magic("IVPQ");
  w.put<std::uint32_t>(kIndexVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(index.dim));
  w.put<std::uint64_t>(index.num_embeddings);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(index.partitions()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(m));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(index.codebook.k_sub));

  w.put<std::uint64_t>(index.coarse.values.size() * sizeof(float));
  w.put_all<float>(index.coarse.values);

  w.put<std::uint64_t>(index.codebook.codebooks.size() * sizeof(float));
  w.put_all<float>(index.codebook.codebooks);

  std::uint64_t postings_bytes = 0;
  for (const auto& list : index.lists) postings_bytes += sizeof(std::uint64_t) + list.ids.size() * (sizeof(std::uint64_t) + m);
  w.put<std::uint64_t>(postings_bytes);
  for (std::size_t l = 0; l < index.lists.size(); ++l) {
    const auto& list = index.lists[l];
    w.put<std::uint64_t>(list.ids.size());
    for (std::size_t p = 0; p < list.ids.size(); ++p) {
      w.put<std::uint64_t>(list.ids[p].value());
      w.put_all<std::uint8_t>(index.code(l, p));
    }
  }
  return std::move(w.bytes());
}

inline IvfPqIndex decode_index(std::span<const unsigned char> bytes, std::string what = "index") {
  io::ByteReader r(bytes, std::move(what));
  r.expect_magic("IVPQ");
  if (const auto version = r.get<std::uint32_t>(); version != kIndexVersion) {
    throw FormatError(r.what() + ": unsupported version " + std::to_string(version) +
                      " (supported: " + std::to_string(kIndexVersion) + ")");
  }
  const std::size_t dim = r.get<std::uint32_t>();
  const std::uint64_t total = r.get<std::uint64_t>();
  const std::size_t lists = r.get<std::uint32_t>();
  const std::size_t m = r.get<std::uint32_t>();
  const std::size_t k_sub = r.get<std::uint32_t>();
  if (dim == 0 || lists == 0) throw FormatError(r.what() + ": dim and L must be positive");

  IvfPqIndex index;
  index.dim = dim;
  index.num_embeddings = total;
  try {
    index.codebook = PqCodebook(dim, m, k_sub);
  } catch (const InvalidArgumentError& e) {
    throw FormatError(r.what() + ": bad header: " + e.what());
  }

  auto expect_section = [&](std::uint64_t expected, const char* name) {
    const auto len = r.get<std::uint64_t>();
    if (len != expected) {
      throw FormatError(r.what() + ": " + name + " section is " + std::to_string(len) +
                        " bytes, expected " + std::to_string(expected));
    }
    r.require(len);
  };

  expect_section(std::uint64_t{lists} * dim * sizeof(float), "centroid");
  index.coarse = Matrix(lists, dim);
  r.get_all<float>(index.coarse.values);

  expect_section(index.codebook.codebooks.size() * sizeof(float), "codebook");
  r.get_all<float>(index.codebook.codebooks);

  const auto postings_bytes = r.get<std::uint64_t>();
  if (postings_bytes != r.remaining()) {
    throw FormatError(r.what() + ": posting section declares " + std::to_string(postings_bytes) +
                      " bytes, " + std::to_string(r.remaining()) + " present");
  }
  if (total > postings_bytes / (sizeof(std::uint64_t) + m)) {
    throw FormatError(r.what() + ": header T=" + std::to_string(total) + " does not fit the posting section");
  }
  std::vector<bool> seen(total, false);
  std::uint64_t count_total = 0;
  index.lists.resize(lists);
  for (std::size_t l = 0; l < lists; ++l) {
    const auto count = r.get<std::uint64_t>();
    if (count > r.remaining() / (sizeof(std::uint64_t) + m)) {
      throw FormatError(r.what() + ": partition " + std::to_string(l) + " length exceeds file");
    }
    auto& list = index.lists[l];
    list.ids.reserve(count);
    list.codes.resize(count * m);
    for (std::uint64_t p = 0; p < count; ++p) {
      const auto id = r.get<std::uint64_t>();
      if (id >= total || seen[id]) {
        throw FormatError(r.what() + ": embedding id " + std::to_string(id) + " out of range or duplicated");
      }
      seen[id] = true;
      list.ids.emplace_back(id);
      auto code = std::span<std::uint8_t>(list.codes).subspan(p * m, m);
      r.get_all(code);
      for (const std::uint8_t c : code) {
        if (c >= k_sub) throw FormatError(r.what() + ": code " + std::to_string(c) + " >= k_sub");
      }
    }
    count_total += count;
  }
  if (count_total != total) {
    throw FormatError(r.what() + ": postings hold " + std::to_string(count_total) + " ids, header says T=" +
                      std::to_string(total));
  }
  if (r.remaining() != 0) throw FormatError(r.what() + ": trailing bytes");
  return index;
}

inline void save_index(const IvfPqIndex& index, const std::filesystem::path& path) {
  io::write_file(path, encode_index(index));
}

inline IvfPqIndex load_index(const std::filesystem::path& path) {
  return decode_index(io::read_file(path), path.string());
}

}  // namespace mvdr
