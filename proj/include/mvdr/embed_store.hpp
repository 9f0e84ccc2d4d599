#pragma once

// Token-embedding storage for documents and queries, the embedding -> document
// map, and the MVEC file format.
//
// MVEC layout (little-endian):
//   "MVEC" | version u32 (=1) | dim u32 | num_records u64
//   then per record: record_len u32 | record_len * dim float32
// Each .mvec file is paired with a sidecar TSV of `internal_id<TAB>external_id`
// lines in internal-id order.

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mvdr/binary_io.hpp"
#include "mvdr/errors.hpp"
#include "mvdr/types.hpp"

namespace mvdr {

inline constexpr std::size_t kDefaultMaxDocLen = 180;
inline constexpr std::size_t kDefaultMaxQueryLen = 32;
inline constexpr std::uint32_t kMvecVersion = 1;

/// A list of variable-length embedding matrices sharing one dimensionality,
/// stored as a flat row-major buffer plus offsets.
struct MultiVectorSet {
  std::size_t dim = 0;
  std::vector<std::uint64_t> offsets{0};
  std::vector<float> values;

  MultiVectorSet() = default;
  explicit MultiVectorSet(std::size_t d) : dim(d) {}

  [[nodiscard]] std::size_t size() const { return offsets.size() - 1; }
  [[nodiscard]] std::uint64_t total_rows() const { return offsets.back(); }
  [[nodiscard]] std::size_t length(std::size_t i) const {
    return static_cast<std::size_t>(offsets[i + 1] - offsets[i]);
  }
  [[nodiscard]] MatrixView item(std::size_t i) const {
    return {std::span<const float>(values).subspan(offsets[i] * dim, length(i) * dim), dim};
  }
  [[nodiscard]] MatrixView all_rows() const { return {values, dim}; }

  void append(MatrixView m) {
    if (m.dim != dim) throw DimError("append: dim " + std::to_string(m.dim) + " != " + std::to_string(dim));
    values.insert(values.end(), m.values.begin(), m.values.end());
    offsets.push_back(offsets.back() + m.rows());
  }

  friend bool operator==(const MultiVectorSet&, const MultiVectorSet&) = default;
};

namespace detail {

inline void validate_ids(const std::vector<std::string>& ids, std::size_t expected,
                         std::string_view what) {
  if (ids.size() != expected) {
    throw FormatError(std::string(what) + ": " + std::to_string(ids.size()) + " ids for " +
                      std::to_string(expected) + " records");
  }
  std::unordered_map<std::string_view, std::size_t> seen;
  seen.reserve(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto& id = ids[i];
    if (id.empty()) throw FormatError(std::string(what) + ": empty id at " + std::to_string(i));
    if (std::any_of(id.begin(), id.end(), [](unsigned char c) { return std::isspace(c); })) {
      throw FormatError(std::string(what) + ": id \"" + id + "\" contains whitespace");
    }
    if (!seen.emplace(id, i).second) {
      throw FormatError(std::string(what) + ": duplicate id \"" + id + "\"");
    }
  }
}

inline void validate_lengths(const MultiVectorSet& set, std::size_t max_len, std::string_view what) {
  if (set.dim == 0) throw FormatError(std::string(what) + ": dim must be positive");
  if (set.values.size() != set.total_rows() * set.dim) {
    throw FormatError(std::string(what) + ": payload size does not match offsets");
  }
  for (std::size_t i = 0; i < set.size(); ++i) {
    const std::size_t len = set.length(i);
    if (len == 0) throw FormatError(std::string(what) + ": record " + std::to_string(i) + " is empty");
    if (len > max_len) {
      throw FormatError(std::string(what) + ": record " + std::to_string(i) + " has " +
                        std::to_string(len) + " rows, limit is " + std::to_string(max_len));
    }
  }
}

}  // namespace detail

/// Document collection: per-document token embeddings and the embedding ->
/// document lookup. Immutable after construction.
class MultiVectorCorpus {
 public:
  MultiVectorCorpus() = default;

  MultiVectorCorpus(MultiVectorSet vectors, std::vector<std::string> docnos,
                    std::size_t max_doc_len = kDefaultMaxDocLen)
      : vectors_(std::move(vectors)), docnos_(std::move(docnos)) {
    detail::validate_lengths(vectors_, max_doc_len, "corpus");
    detail::validate_ids(docnos_, vectors_.size(), "corpus docnos");
    if (vectors_.size() > std::numeric_limits<std::uint32_t>::max()) {
      throw FormatError("corpus: too many documents for 32-bit DocId");
    }
    owner_.resize(vectors_.total_rows());
    for (std::size_t d = 0; d < vectors_.size(); ++d) {
      std::fill(owner_.begin() + static_cast<std::ptrdiff_t>(vectors_.offsets[d]),
                owner_.begin() + static_cast<std::ptrdiff_t>(vectors_.offsets[d + 1]),
                DocId(static_cast<std::uint32_t>(d)));
    }
    by_docno_.reserve(docnos_.size());
    for (std::size_t d = 0; d < docnos_.size(); ++d) {
      by_docno_.emplace(docnos_[d], DocId(static_cast<std::uint32_t>(d)));
    }
  }

  [[nodiscard]] std::size_t dim() const { return vectors_.dim; }
  [[nodiscard]] std::size_t num_docs() const { return vectors_.size(); }
  [[nodiscard]] std::uint64_t num_embeddings() const { return vectors_.total_rows(); }
  [[nodiscard]] const std::vector<std::uint64_t>& doc_offsets() const { return vectors_.offsets; }
  [[nodiscard]] const MultiVectorSet& vectors() const { return vectors_; }
  [[nodiscard]] const std::vector<std::string>& docnos() const { return docnos_; }

  [[nodiscard]] MatrixView doc(DocId d) const { return vectors_.item(d.value()); }
  [[nodiscard]] const std::string& docno(DocId d) const { return docnos_.at(d.value()); }
  [[nodiscard]] std::span<const float> embedding(EmbeddingId e) const {
    return vectors_.all_rows().row(e.value());
  }
  [[nodiscard]] MatrixView embeddings() const { return vectors_.all_rows(); }

  [[nodiscard]] std::optional<DocId> find(std::string_view docno) const {
    if (auto it = by_docno_.find(std::string(docno)); it != by_docno_.end()) return it->second;
    return std::nullopt;
  }

  /// Owning document of an embedding (O(1) table lookup).
  [[nodiscard]] DocId embedding_to_doc(EmbeddingId e) const {
    if (e.value() >= owner_.size()) {
      throw OutOfRangeError("embedding id " + std::to_string(e.value()) + " >= T=" +
                            std::to_string(owner_.size()));
    }
    return owner_[e.value()];
  }

  /// Same as embedding_to_doc without the range check.
  [[nodiscard]] DocId owner_unchecked(EmbeddingId e) const { return owner_[e.value()]; }

 private:
  MultiVectorSet vectors_;
  std::vector<std::string> docnos_;
  std::vector<DocId> owner_;
  std::unordered_map<std::string, DocId> by_docno_;
};

class QuerySet {
 public:
  QuerySet() = default;

  QuerySet(MultiVectorSet vectors, std::vector<std::string> qids,
           std::size_t max_query_len = kDefaultMaxQueryLen)
      : vectors_(std::move(vectors)), qids_(std::move(qids)) {
    detail::validate_lengths(vectors_, max_query_len, "queries");
    detail::validate_ids(qids_, vectors_.size(), "query ids");
  }

  [[nodiscard]] std::size_t dim() const { return vectors_.dim; }
  [[nodiscard]] std::size_t size() const { return vectors_.size(); }
  [[nodiscard]] const std::string& qid(std::size_t i) const { return qids_.at(i); }
  [[nodiscard]] const std::vector<std::string>& qids() const { return qids_; }
  [[nodiscard]] MatrixView query(std::size_t i) const { return vectors_.item(i); }
  [[nodiscard]] const MultiVectorSet& vectors() const { return vectors_; }

 private:
  MultiVectorSet vectors_;
  std::vector<std::string> qids_;
};

// ---------------------------------------------------------------------------
// Normalization

inline constexpr double kDegenerateNorm = 1e-12;
/// Rows whose L2 norm is within this distance of 1 are treated as unit and
/// passed through untouched, which makes normalization exactly idempotent.
inline constexpr double kUnitNormTolerance = 1e-6;

template <class T>
struct Normalized {
  T value;
  std::size_t degenerate_rows = 0;
};

/// Scales every row of a row-major buffer to unit L2 norm in place. Returns the
/// number of rows left untouched because their norm is below kDegenerateNorm.
inline std::size_t normalize_rows(std::span<float> values, std::size_t dim) {
  std::size_t degenerate = 0;
  for (std::size_t off = 0; off + dim <= values.size(); off += dim) {
    auto row = values.subspan(off, dim);
    double sq = 0.0;
    for (float v : row) sq += double(v) * double(v);
    const double norm = std::sqrt(sq);
    if (norm < kDegenerateNorm) {
      ++degenerate;
      continue;
    }
    if (std::abs(norm - 1.0) <= kUnitNormTolerance) continue;
    for (float& v : row) v = static_cast<float>(double(v) / norm);
  }
  return degenerate;
}

inline Normalized<MultiVectorSet> normalize(MultiVectorSet set) {
  const std::size_t bad = normalize_rows(set.values, set.dim);
  return {std::move(set), bad};
}

inline Normalized<MultiVectorCorpus> normalize(const MultiVectorCorpus& corpus) {
  auto [set, bad] = normalize(corpus.vectors());
  return {MultiVectorCorpus(std::move(set), corpus.docnos(), std::numeric_limits<std::size_t>::max()), bad};
}

inline Normalized<QuerySet> normalize(const QuerySet& queries) {
  auto [set, bad] = normalize(queries.vectors());
  return {QuerySet(std::move(set), queries.qids(), std::numeric_limits<std::size_t>::max()), bad};
}

// ---------------------------------------------------------------------------
// I/O

inline std::vector<unsigned char> encode_mvec(const MultiVectorSet& set) {
  io::ByteWriter w;
  w.put_magic("MVEC");
  w.put<std::uint32_t>(kMvecVersion);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(set.dim));
  w.put<std::uint64_t>(set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    const MatrixView m = set.item(i);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(m.rows()));
    w.put_all(m.values);
  }
  return std::move(w.bytes());
}

inline MultiVectorSet decode_mvec(std::span<const unsigned char> bytes, std::string what = "mvec") {
  io::ByteReader r(bytes, std::move(what));
  r.expect_magic("MVEC");
  if (const auto version = r.get<std::uint32_t>(); version != kMvecVersion) {
    throw FormatError(r.what() + ": unsupported version " + std::to_string(version) +
                      " (supported: " + std::to_string(kMvecVersion) + ")");
  }
  const auto dim = r.get<std::uint32_t>();
  if (dim == 0) throw FormatError(r.what() + ": dim must be positive");
  const auto records = r.get<std::uint64_t>();
  // Every record carries at least a length word.
  if (records > r.remaining() / sizeof(std::uint32_t)) {
    throw FormatError(r.what() + ": declares " + std::to_string(records) +
                      " records but file is too short");
  }
  MultiVectorSet set(dim);
  set.offsets.reserve(records + 1);
  for (std::uint64_t i = 0; i < records; ++i) {
    const auto len = r.get<std::uint32_t>();
    if (len == 0) throw FormatError(r.what() + ": record " + std::to_string(i) + " is empty");
    const std::size_t n = std::size_t{len} * dim;
    r.require(n * sizeof(float));
    const std::size_t start = set.values.size();
    set.values.resize(start + n);
    r.get_all(std::span<float>(set.values).subspan(start, n));
    set.offsets.push_back(set.offsets.back() + len);
  }
  if (r.remaining() != 0) {
    throw FormatError(r.what() + ": " + std::to_string(r.remaining()) +
                      " trailing bytes after last record");
  }
  return set;
}

inline MultiVectorSet read_mvec(const std::filesystem::path& path) {
  return decode_mvec(io::read_file(path), path.string());
}

inline void write_mvec(const std::filesystem::path& path, const MultiVectorSet& set) {
  io::write_file(path, encode_mvec(set));
}

/// Sidecar id table for an .mvec file: same stem, `.tsv` extension.
inline std::filesystem::path id_table_path(std::filesystem::path mvec_path) {
  return mvec_path.replace_extension(".tsv");
}

inline std::vector<std::string> read_id_table(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<std::string> ids;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": expected <id>\\t<name>");
    }
    const std::string idx = line.substr(0, tab);
    if (idx != std::to_string(ids.size())) {
      throw FormatError(path.string() + ":" + std::to_string(lineno) + ": internal id " + idx +
                        " out of order, expected " + std::to_string(ids.size()));
    }
    ids.push_back(line.substr(tab + 1));
  }
  return ids;
}

inline void write_id_table(const std::filesystem::path& path, const std::vector<std::string>& ids) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  for (std::size_t i = 0; i < ids.size(); ++i) out << i << '\t' << ids[i] << '\n';
  if (!out) throw Error("write failed: " + path.string());
}

inline MultiVectorCorpus load_corpus(const std::filesystem::path& mvec_path,
                                     std::size_t max_doc_len = kDefaultMaxDocLen) {
  return MultiVectorCorpus(read_mvec(mvec_path), read_id_table(id_table_path(mvec_path)), max_doc_len);
}

inline void save_corpus(const std::filesystem::path& mvec_path, const MultiVectorCorpus& corpus) {
  write_mvec(mvec_path, corpus.vectors());
  write_id_table(id_table_path(mvec_path), corpus.docnos());
}

inline QuerySet load_queries(const std::filesystem::path& mvec_path,
                             std::size_t max_query_len = kDefaultMaxQueryLen) {
  return QuerySet(read_mvec(mvec_path), read_id_table(id_table_path(mvec_path)), max_query_len);
}

inline void save_queries(const std::filesystem::path& mvec_path, const QuerySet& queries) {
  write_mvec(mvec_path, queries.vectors());
  write_id_table(id_table_path(mvec_path), queries.qids());
}

}  // namespace mvdr
