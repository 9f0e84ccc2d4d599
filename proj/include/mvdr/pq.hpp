#pragma once

// Product quantization codec: per-subspace k-means codebooks, L2 encoding,
// decoding, and inner-product lookup tables for asymmetric scoring.

#include <algorithm>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mvdr/errors.hpp"
#include "mvdr/kmeans.hpp"
#include "mvdr/parallel.hpp"
#include "mvdr/types.hpp"

namespace mvdr {

inline constexpr std::size_t kMaxCodebookSize = 256;

/// m sub-codebooks of k_sub centroids each. When dim is not a multiple of m
/// the last subspace is zero-padded up to sub_dim.
struct PqCodebook {
  std::size_t dim = 0;
  std::size_t m = 0;
  std::size_t k_sub = 0;
  std::size_t sub_dim = 0;
  /// m * k_sub * sub_dim floats, subspace-major.
  std::vector<float> codebooks;

  PqCodebook() = default;
  PqCodebook(std::size_t d, std::size_t subquantizers, std::size_t ksub)
      : dim(d), m(subquantizers), k_sub(ksub) {
    if (m == 0 || m > dim) {
      throw InvalidArgumentError("pq: need 1 <= m <= dim, got m=" + std::to_string(m) +
                                 " dim=" + std::to_string(dim));
    }
    if (k_sub == 0 || k_sub > kMaxCodebookSize) {
      throw InvalidArgumentError("pq: k_sub must be in [1, 256], got " + std::to_string(k_sub));
    }
    sub_dim = (dim + m - 1) / m;
    codebooks.assign(m * k_sub * sub_dim, 0.0F);
  }

  [[nodiscard]] std::span<const float> centroid(std::size_t s, std::size_t c) const {
    return {codebooks.data() + (s * k_sub + c) * sub_dim, sub_dim};
  }
  [[nodiscard]] std::span<float> centroid(std::size_t s, std::size_t c) {
    return {codebooks.data() + (s * k_sub + c) * sub_dim, sub_dim};
  }

  /// Copies subspace s of x into out (length sub_dim), zero-filling padding.
  void sub_vector(std::span<const float> x, std::size_t s, std::span<float> out) const {
    const std::size_t begin = s * sub_dim;
    for (std::size_t j = 0; j < sub_dim; ++j) {
      out[j] = begin + j < dim ? x[begin + j] : 0.0F;
    }
  }

  friend bool operator==(const PqCodebook&, const PqCodebook&) = default;
};

using PqCode = std::vector<std::uint8_t>;

/// Trains one k-means per subspace; subspace s uses seed + s.
inline PqCodebook pq_train(MatrixView data, std::size_t m, std::size_t k_sub, std::size_t max_iters,
                           std::uint64_t seed, const Executor& exec = Executor{}) {
  PqCodebook cb(data.dim, m, k_sub);
  const std::size_t n = data.rows();
  if (n < k_sub) {
    throw TooFewPointsError("pq: " + std::to_string(n) + " training points for k_sub=" +
                            std::to_string(k_sub));
  }
  Matrix sub(n, cb.sub_dim);
  for (std::size_t s = 0; s < m; ++s) {
    for (std::size_t i = 0; i < n; ++i) cb.sub_vector(data.row(i), s, sub.row(i));
    const KMeansModel km = kmeans_train(sub.view(), k_sub, max_iters, seed + s, exec);
    std::copy(km.centroids.values.begin(), km.centroids.values.end(),
              cb.codebooks.begin() + static_cast<std::ptrdiff_t>(s * k_sub * cb.sub_dim));
  }
  return cb;
}

/// Writes the code of x into `out` (length m). L2 argmin per subspace, lowest
/// index wins ties.
inline void pq_encode_into(const PqCodebook& cb, std::span<const float> x, std::span<std::uint8_t> out) {
  std::vector<float> sub(cb.sub_dim);
  for (std::size_t s = 0; s < cb.m; ++s) {
    cb.sub_vector(x, s, sub);
    std::size_t best = 0;
    float best_d = std::numeric_limits<float>::infinity();
    for (std::size_t c = 0; c < cb.k_sub; ++c) {
      const float d = l2_sq(sub, cb.centroid(s, c));
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    out[s] = static_cast<std::uint8_t>(best);
  }
}

inline PqCode pq_encode(const PqCodebook& cb, std::span<const float> x) {
  if (x.size() != cb.dim) throw DimError("pq_encode: vector dim " + std::to_string(x.size()) + " != " + std::to_string(cb.dim));
  PqCode code(cb.m);
  pq_encode_into(cb, x, code);
  return code;
}

/// Reconstruction: concatenated centroids with padding dimensions dropped.
inline std::vector<float> pq_decode(const PqCodebook& cb, std::span<const std::uint8_t> code) {
  if (code.size() != cb.m) throw CorruptCodeError("pq_decode: code has " + std::to_string(code.size()) + " bytes, expected " + std::to_string(cb.m));
  std::vector<float> out(cb.dim);
  for (std::size_t s = 0; s < cb.m; ++s) {
    if (code[s] >= cb.k_sub) {
      throw CorruptCodeError("pq_decode: code " + std::to_string(code[s]) + " in subspace " +
                             std::to_string(s) + " >= k_sub=" + std::to_string(cb.k_sub));
    }
    const auto c = cb.centroid(s, code[s]);
    for (std::size_t j = 0; j < cb.sub_dim && s * cb.sub_dim + j < cb.dim; ++j) {
      out[s * cb.sub_dim + j] = c[j];
    }
  }
  return out;
}

/// Per-subspace inner products of a fixed query against every codebook entry.
struct AdcTable {
  std::size_t m = 0;
  std::size_t k_sub = 0;
  std::vector<float> table;  // m * k_sub

  [[nodiscard]] float at(std::size_t s, std::size_t c) const { return table[s * k_sub + c]; }

  /// Sum of table lookups for one code; accumulated in double.
  [[nodiscard]] float score(std::span<const std::uint8_t> code) const {
    double acc = 0.0;
    for (std::size_t s = 0; s < m; ++s) acc += table[s * k_sub + code[s]];
    return static_cast<float>(acc);
  }
};

inline AdcTable adc_table(const PqCodebook& cb, std::span<const float> q) {
  if (q.size() != cb.dim) throw DimError("adc_table: query dim " + std::to_string(q.size()) + " != " + std::to_string(cb.dim));
  AdcTable t{cb.m, cb.k_sub, std::vector<float>(cb.m * cb.k_sub)};
  std::vector<float> sub(cb.sub_dim);
  for (std::size_t s = 0; s < cb.m; ++s) {
    cb.sub_vector(q, s, sub);
    for (std::size_t c = 0; c < cb.k_sub; ++c) t.table[s * cb.k_sub + c] = dot(sub, cb.centroid(s, c));
  }
  return t;
}

inline float adc_score(const AdcTable& t, std::span<const std::uint8_t> code) { return t.score(code); }

}  // namespace mvdr
