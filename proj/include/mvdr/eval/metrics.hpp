#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mvdr/errors.hpp"
#include "mvdr/eval/trec.hpp"

namespace mvdr::eval {

/// Per-query values plus their mean over judged queries. Queries without any
/// relevant judgement are left out of `per_query` and counted in `unjudged`.
struct MetricReport {
  std::string name;
  std::vector<std::pair<std::string, double>> per_query;
  double mean = 0.0;
  std::size_t unjudged = 0;

  [[nodiscard]] std::optional<double> value(const std::string& qid) const {
    for (const auto& [q, v] : per_query) {
      if (q == qid) return v;
    }
    return std::nullopt;
  }
};

using PerQueryMetric = std::function<double(const QueryRun&, const Qrels::Judgements&, std::size_t relevant)>;

inline MetricReport evaluate_metric(const RunFile& run, const Qrels& qrels, std::string name, const PerQueryMetric& fn) {
  MetricReport report{std::move(name), {}, 0.0, 0};
  double sum = 0.0;
  for (const auto& q : run.queries) {
    const Qrels::Judgements* j = qrels.find(q.qid);
    const std::size_t relevant = qrels.relevant_count(q.qid);
    if (j == nullptr || relevant == 0) {
      ++report.unjudged;
      continue;
    }
    const double v = fn(q, *j, relevant);
    report.per_query.emplace_back(q.qid, v);
    sum += v;
  }
  if (!report.per_query.empty()) report.mean = sum / double(report.per_query.size());
  return report;
}

namespace detail {

inline int grade_of(const Qrels::Judgements& j, const std::string& docno) {
  auto it = j.find(docno);
  return it == j.end() ? 0 : it->second;
}

}  // namespace detail

/// Reciprocal rank of the first relevant document within `depth` (unbounded
/// when empty).
inline MetricReport mrr(const RunFile& run, const Qrels& qrels, std::optional<std::size_t> depth = 10) {
  std::string name = depth ? "mrr@" + std::to_string(*depth) : "mrr";
  return evaluate_metric(run, qrels, std::move(name), [&](const QueryRun& q, const Qrels::Judgements& j, std::size_t) {
    const std::size_t limit = depth ? std::min(*depth, q.entries.size()) : q.entries.size();
    for (std::size_t r = 0; r < limit; ++r) {
      if (detail::grade_of(j, q.entries[r].docno) >= 1) return 1.0 / double(r + 1);
    }
    return 0.0;
  });
}

/// NDCG with gain 2^grade - 1 and discount log2(rank + 1); the ideal ordering
/// comes from the qrels.
inline MetricReport ndcg(const RunFile& run, const Qrels& qrels, std::size_t depth = 10) {
  return evaluate_metric(run, qrels, "ndcg@" + std::to_string(depth),
                         [&](const QueryRun& q, const Qrels::Judgements& j, std::size_t) {
                           double dcg = 0.0;
                           const std::size_t limit = std::min(depth, q.entries.size());
                           for (std::size_t r = 0; r < limit; ++r) {
                             const int g = detail::grade_of(j, q.entries[r].docno);
                             if (g > 0) dcg += (std::exp2(g) - 1.0) / std::log2(double(r) + 2.0);
                           }
                           std::vector<int> grades;
                           for (const auto& [doc, g] : j) {
                             if (g > 0) grades.push_back(g);
                           }
                           std::sort(grades.begin(), grades.end(), std::greater<>());
                           double ideal = 0.0;
                           for (std::size_t r = 0; r < std::min(depth, grades.size()); ++r) {
                             ideal += (std::exp2(grades[r]) - 1.0) / std::log2(double(r) + 2.0);
                           }
                           return ideal > 0.0 ? dcg / ideal : 0.0;
                         });
}

/// Mean average precision over the full run depth.
inline MetricReport map(const RunFile& run, const Qrels& qrels) {
  return evaluate_metric(run, qrels, "map", [](const QueryRun& q, const Qrels::Judgements& j, std::size_t relevant) {
    double sum = 0.0;
    std::size_t hits = 0;
    for (std::size_t r = 0; r < q.entries.size(); ++r) {
      if (detail::grade_of(j, q.entries[r].docno) >= 1) {
        ++hits;
        sum += double(hits) / double(r + 1);
      }
    }
    return sum / double(relevant);
  });
}

/// Fraction of relevant documents found in the top k.
inline MetricReport recall_at(const RunFile& run, const Qrels& qrels, std::size_t k) {
  return evaluate_metric(run, qrels, "recall@" + std::to_string(k),
                         [k](const QueryRun& q, const Qrels::Judgements& j, std::size_t relevant) {
                           std::size_t found = 0;
                           for (std::size_t r = 0; r < std::min(k, q.entries.size()); ++r) {
                             if (detail::grade_of(j, q.entries[r].docno) >= 1) ++found;
                           }
                           return double(found) / double(relevant);
                         });
}

enum class Metric { Mrr, Ndcg10, Map, Recall };

inline constexpr std::string_view kMetricNames = "mrr, ndcg10, map, recall";

inline std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::Mrr: return "mrr";
    case Metric::Ndcg10: return "ndcg10";
    case Metric::Map: return "map";
    case Metric::Recall: return "recall";
  }
  return "?";
}

inline std::optional<Metric> parse_metric(std::string_view name) {
  for (Metric m : {Metric::Mrr, Metric::Ndcg10, Metric::Map, Metric::Recall}) {
    if (to_string(m) == name) return m;
  }
  return std::nullopt;
}

struct MetricOptions {
  std::optional<std::size_t> mrr_depth = 10;
  std::size_t recall_depth = 1000;
};

inline MetricReport compute_metric(Metric m, const RunFile& run, const Qrels& qrels, const MetricOptions& opts = {}) {
  switch (m) {
    case Metric::Mrr: return mrr(run, qrels, opts.mrr_depth);
    case Metric::Ndcg10: return ndcg(run, qrels, 10);
    case Metric::Map: return map(run, qrels);
    case Metric::Recall: return recall_at(run, qrels, opts.recall_depth);
  }
  throw InvalidArgumentError("unknown metric");
}

/// Values of two reports for the queries judged in both, paired by qid in the
/// order of `a`.
inline std::pair<std::vector<double>, std::vector<double>> paired_values(const MetricReport& a, const MetricReport& b) {
  std::pair<std::vector<double>, std::vector<double>> out;
  for (const auto& [qid, va] : a.per_query) {
    if (auto vb = b.value(qid)) {
      out.first.push_back(va);
      out.second.push_back(*vb);
    }
  }
  return out;
}

}  // namespace mvdr::eval
