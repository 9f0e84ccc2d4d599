#pragma once

// TREC run files (`qid Q0 docno rank score tag`) and qrels (`qid 0 docno grade`).

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "mvdr/embed_store.hpp"
#include "mvdr/errors.hpp"
#include "mvdr/first_stage.hpp"
#include "mvdr/rerank.hpp"
#include "mvdr/types.hpp"

namespace mvdr::eval {

/// Relevance grades per query; grade >= 1 means relevant.
class Qrels {
 public:
  using Judgements = std::map<std::string, int>;

  void set(const std::string& qid, const std::string& docno, int grade) { by_query_[qid][docno] = grade; }

  [[nodiscard]] const Judgements* find(const std::string& qid) const {
    auto it = by_query_.find(qid);
    return it == by_query_.end() ? nullptr : &it->second;
  }

  [[nodiscard]] std::size_t relevant_count(const std::string& qid) const {
    const Judgements* j = find(qid);
    if (j == nullptr) return 0;
    return static_cast<std::size_t>(std::count_if(j->begin(), j->end(), [](const auto& kv) { return kv.second >= 1; }));
  }

  [[nodiscard]] const std::map<std::string, Judgements>& queries() const { return by_query_; }

  friend bool operator==(const Qrels&, const Qrels&) = default;

 private:
  std::map<std::string, Judgements> by_query_;
};

inline Qrels parse_qrels(std::istream& in, const std::string& source = "qrels") {
  Qrels qrels;
  std::map<std::pair<std::string, std::string>, bool> seen;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string qid, iter, docno, grade_s, extra;
    if (!(ss >> qid)) continue;
    if (!(ss >> iter >> docno >> grade_s) || (ss >> extra)) {
      throw FormatError(source + ":" + std::to_string(lineno) + ": expected `qid 0 docno grade`");
    }
    int grade = 0;
    const auto [ptr, ec] = std::from_chars(grade_s.data(), grade_s.data() + grade_s.size(), grade);
    if (ec != std::errc() || ptr != grade_s.data() + grade_s.size()) {
      throw FormatError(source + ":" + std::to_string(lineno) + ": bad grade \"" + grade_s + "\"");
    }
    if (!seen.emplace(std::pair{qid, docno}, true).second) {
      warn(source + ":" + std::to_string(lineno) + ": duplicate judgement for (" + qid + ", " + docno +
           "); keeping the last one");
    }
    qrels.set(qid, docno, std::max(grade, 0));
  }
  return qrels;
}

inline Qrels read_qrels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return parse_qrels(in, path.string());
}

inline void write_qrels(std::ostream& out, const Qrels& qrels) {
  for (const auto& [qid, docs] : qrels.queries()) {
    for (const auto& [docno, grade] : docs) out << qid << " 0 " << docno << ' ' << grade << '\n';
  }
}

struct RunEntry {
  std::string docno;
  std::size_t rank = 0;  // 1-based
  double score = 0.0;

  friend bool operator==(const RunEntry&, const RunEntry&) = default;
};

struct QueryRun {
  std::string qid;
  std::vector<RunEntry> entries;  // rank order

  friend bool operator==(const QueryRun&, const QueryRun&) = default;
};

/// Ranked results for a list of queries, in query order.
struct RunFile {
  std::vector<QueryRun> queries;

  [[nodiscard]] const QueryRun* find(const std::string& qid) const {
    for (const auto& q : queries) {
      if (q.qid == qid) return &q;
    }
    return nullptr;
  }

  friend bool operator==(const RunFile&, const RunFile&) = default;
};

/// Shortest decimal text that round-trips to the same double.
inline std::string format_score(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return {buf, ptr};
}

inline void write_run(std::ostream& out, const RunFile& run, const std::string& tag = "mvdr") {
  for (const auto& q : run.queries) {
    for (const auto& e : q.entries) {
      out << q.qid << " Q0 " << e.docno << ' ' << e.rank << ' ' << format_score(e.score) << ' ' << tag << '\n';
    }
  }
}

inline void write_run(const std::filesystem::path& path, const RunFile& run, const std::string& tag = "mvdr") {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write_run(out, run, tag);
  if (!out) throw Error("write failed: " + path.string());
}

/// Parses a run. Ranks are regenerated from scores (descending, file order
/// breaking ties); a rank column that disagrees only produces a warning.
inline RunFile parse_run(std::istream& in, const std::string& source = "run") {
  RunFile run;
  std::unordered_map<std::string, std::size_t> slot;
  std::vector<std::vector<std::size_t>> file_ranks;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::istringstream ss(line);
    std::string qid, q0, docno, rank_s, score_s, tag, extra;
    if (!(ss >> qid)) continue;
    if (!(ss >> q0 >> docno >> rank_s >> score_s >> tag) || (ss >> extra)) {
      throw FormatError(source + ":" + std::to_string(lineno) + ": expected `qid Q0 docno rank score tag`");
    }
    std::size_t rank = 0;
    double score = 0.0;
    const auto r1 = std::from_chars(rank_s.data(), rank_s.data() + rank_s.size(), rank);
    const auto r2 = std::from_chars(score_s.data(), score_s.data() + score_s.size(), score);
    if (r1.ec != std::errc() || r2.ec != std::errc() || r2.ptr != score_s.data() + score_s.size()) {
      throw FormatError(source + ":" + std::to_string(lineno) + ": bad rank or score");
    }
    auto [it, inserted] = slot.try_emplace(qid, run.queries.size());
    if (inserted) {
      run.queries.push_back({qid, {}});
      file_ranks.emplace_back();
    }
    run.queries[it->second].entries.push_back({docno, rank, score});
    file_ranks[it->second].push_back(rank);
  }
  for (std::size_t i = 0; i < run.queries.size(); ++i) {
    auto& entries = run.queries[i].entries;
    std::stable_sort(entries.begin(), entries.end(),
                     [](const RunEntry& a, const RunEntry& b) { return a.score > b.score; });
    bool consistent = true;
    for (std::size_t r = 0; r < entries.size(); ++r) {
      consistent = consistent && entries[r].rank == r + 1;
      entries[r].rank = r + 1;
    }
    if (!consistent) warn(source + ": rank column of query " + run.queries[i].qid + " regenerated from scores");
  }
  return run;
}

inline RunFile read_run(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return parse_run(in, path.string());
}

/// Converts exact-stage output to a run using the corpus docnos.
inline RunFile to_run(const MultiVectorCorpus& corpus, const std::vector<ScoredRun>& runs) {
  RunFile out;
  out.queries.reserve(runs.size());
  for (const auto& r : runs) {
    QueryRun q{r.qid, {}};
    q.entries.reserve(r.entries.size());
    for (std::size_t i = 0; i < r.entries.size(); ++i) {
      q.entries.push_back({corpus.docno(r.entries[i].doc), i + 1, r.entries[i].score});
    }
    out.queries.push_back(std::move(q));
  }
  return out;
}

/// Converts approximate first-stage rankings to a run. Kprime sets have no
/// order and are rejected.
inline RunFile to_run(const MultiVectorCorpus& corpus, const std::vector<CandidateRanking>& rankings) {
  RunFile out;
  for (const auto& r : rankings) {
    if (!r.ranked()) throw NotRankableError("a kprime candidate set is unordered and cannot be written as a run");
    QueryRun q{r.qid, {}};
    for (std::size_t i = 0; i < r.entries.size(); ++i) {
      q.entries.push_back({corpus.docno(r.entries[i].doc), i + 1, r.entries[i].score});
    }
    out.queries.push_back(std::move(q));
  }
  return out;
}

}  // namespace mvdr::eval
