#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "mvdr/errors.hpp"
#include "mvdr/parallel.hpp"
#include "mvdr/rng.hpp"
#include "mvdr/types.hpp"

namespace mvdr {

inline constexpr std::size_t kDefaultKMeansIters = 25;

struct KMeansModel {
  std::size_t k = 0;
  std::size_t dim = 0;
  Matrix centroids;
  /// Mean squared distance of each point to its assigned centroid.
  double distortion = 0.0;
  /// Distortion after every assignment step; non-increasing.
  std::vector<double> distortion_history;
  std::size_t iterations = 0;
};

/// Index of the nearest row of `centroids` by squared L2; ties go to the lowest index.
inline std::size_t nearest_l2(std::span<const float> x, const Matrix& centroids, float* best_out = nullptr) {
  std::size_t best = 0;
  float best_d = std::numeric_limits<float>::infinity();
  for (std::size_t c = 0; c < centroids.rows(); ++c) {
    const float d = l2_sq(x, centroids.row(c));
    if (d < best_d) {
      best_d = d;
      best = c;
    }
  }
  if (best_out != nullptr) *best_out = best_d;
  return best;
}

namespace detail {

// k-means++ seeding: first centre uniform, then proportional to squared
// distance from the nearest chosen centre.
inline Matrix kmeanspp_init(MatrixView data, std::size_t k, SplitMix64& rng) {
  const std::size_t n = data.rows();
  Matrix centroids(k, data.dim);
  std::vector<double> min_d(n, std::numeric_limits<double>::infinity());
  std::size_t pick = rng.below(n);
  for (std::size_t c = 0; c < k; ++c) {
    if (c > 0) {
      double total = 0.0;
      for (double d : min_d) total += d;
      if (total > 0.0) {
        double target = rng.uniform() * total;
        pick = n - 1;
        for (std::size_t i = 0; i < n; ++i) {
          target -= min_d[i];
          if (target < 0.0 && min_d[i] > 0.0) {
            pick = i;
            break;
          }
        }
        // Rounding can leave target >= 0 at the end; fall back to the last
        // point with positive mass.
        if (min_d[pick] <= 0.0) {
          for (std::size_t i = n; i-- > 0;) {
            if (min_d[i] > 0.0) {
              pick = i;
              break;
            }
          }
        }
      } else {
        pick = rng.below(n);
      }
    }
    std::copy(data.row(pick).begin(), data.row(pick).end(), centroids.row(c).begin());
    for (std::size_t i = 0; i < n; ++i) {
      min_d[i] = std::min(min_d[i], double(l2_sq(data.row(i), centroids.row(c))));
    }
  }
  return centroids;
}

}  // namespace detail

/// Lloyd's k-means from k-means++ seeding.
///
/// Stops after `max_iters` updates or once an assignment pass changes nothing.
/// Empty clusters are refilled with the point farthest from its nearest
/// centroid. Assignment runs on `exec`; accumulation is sequential in point
/// order, so the model is bit-identical for any thread count.
inline KMeansModel kmeans_train(MatrixView data, std::size_t k, std::size_t max_iters,
                                std::uint64_t seed, const Executor& exec = Executor{}) {
  const std::size_t n = data.rows();
  if (k == 0) throw InvalidArgumentError("kmeans: k must be >= 1");
  if (max_iters == 0) throw InvalidArgumentError("kmeans: max_iters must be >= 1");
  if (n < k) {
    throw TooFewPointsError("kmeans: " + std::to_string(n) + " points for k=" + std::to_string(k));
  }
  const std::size_t dim = data.dim;

  SplitMix64 rng(seed);
  KMeansModel model;
  model.k = k;
  model.dim = dim;
  model.centroids = detail::kmeanspp_init(data, k, rng);

  std::vector<std::uint32_t> assign(n, std::numeric_limits<std::uint32_t>::max());
  std::vector<std::uint32_t> next(n);
  std::vector<float> dist(n);

  auto assignment_pass = [&]() -> bool {
    exec.parallel_for(n, [&](std::size_t i) {
      next[i] = static_cast<std::uint32_t>(nearest_l2(data.row(i), model.centroids, &dist[i]));
    });
    double total = 0.0;
    for (float d : dist) total += d;
    model.distortion_history.push_back(total / double(n));
    const bool changed = next != assign;
    assign.swap(next);
    return changed;
  };

  std::vector<double> sums(k * dim);
  std::vector<std::size_t> counts(k);
  bool changed = assignment_pass();
  for (std::size_t iter = 0; iter < max_iters && changed; ++iter) {
    std::fill(sums.begin(), sums.end(), 0.0);
    std::fill(counts.begin(), counts.end(), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = assign[i];
      ++counts[c];
      const auto x = data.row(i);
      for (std::size_t j = 0; j < dim; ++j) sums[c * dim + j] += x[j];
    }
    for (std::size_t c = 0; c < k; ++c) {
      if (counts[c] == 0) continue;
      auto row = model.centroids.row(c);
      for (std::size_t j = 0; j < dim; ++j) row[j] = static_cast<float>(sums[c * dim + j] / double(counts[c]));
    }

    if (std::find(counts.begin(), counts.end(), 0) != counts.end()) {
      std::vector<float> far(n);
      exec.parallel_for(n, [&](std::size_t i) { nearest_l2(data.row(i), model.centroids, &far[i]); });
      for (std::size_t c = 0; c < k; ++c) {
        if (counts[c] != 0) continue;
        std::size_t donor = 0;
        for (std::size_t i = 1; i < n; ++i) {
          if (far[i] > far[donor]) donor = i;
        }
        // All points already coincide with a centroid: fewer distinct points
        // than clusters, nothing left to steal.
        if (far[donor] <= 0.0F) break;
        std::copy(data.row(donor).begin(), data.row(donor).end(), model.centroids.row(c).begin());
        counts[c] = 1;
        for (std::size_t i = 0; i < n; ++i) far[i] = std::min(far[i], l2_sq(data.row(i), model.centroids.row(c)));
      }
    }
    ++model.iterations;
    changed = assignment_pass();
  }
  model.distortion = model.distortion_history.back();
  return model;
}

}  // namespace mvdr
