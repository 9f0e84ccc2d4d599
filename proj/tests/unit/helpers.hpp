#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mvdr/mvdr.hpp"

namespace testutil {

using Rows = std::vector<std::vector<float>>;

inline mvdr::MultiVectorSet make_set(std::size_t dim, const std::vector<Rows>& records) {
  mvdr::MultiVectorSet set(dim);
  for (const auto& rec : records) {
    std::vector<float> flat;
    for (const auto& r : rec) flat.insert(flat.end(), r.begin(), r.end());
    set.append({flat, dim});
  }
  return set;
}

inline std::vector<std::string> names(const char* prefix, std::size_t n) {
  std::vector<std::string> out;
  for (std::size_t i = 0; i < n; ++i) out.push_back(prefix + std::to_string(i));
  return out;
}

/// Random unit-norm corpus; document lengths drawn from [min_len, max_len].
inline mvdr::MultiVectorCorpus random_corpus(std::size_t docs, std::size_t min_len, std::size_t max_len,
                                             std::size_t dim, std::uint64_t seed) {
  mvdr::SplitMix64 rng(seed);
  mvdr::MultiVectorSet set(dim);
  for (std::size_t d = 0; d < docs; ++d) {
    const std::size_t len = min_len + rng.below(max_len - min_len + 1);
    mvdr::Matrix m(len, dim);
    for (float& v : m.values) v = static_cast<float>(rng.normal());
    mvdr::normalize_rows(m.values, dim);
    set.append(m.view());
  }
  return {std::move(set), names("d", docs)};
}

inline mvdr::Matrix random_matrix(std::size_t rows, std::size_t dim, std::uint64_t seed, bool unit = true) {
  mvdr::SplitMix64 rng(seed);
  mvdr::Matrix m(rows, dim);
  for (float& v : m.values) v = static_cast<float>(rng.normal());
  if (unit) mvdr::normalize_rows(m.values, dim);
  return m;
}

/// Collects warnings for the lifetime of the object.
class WarningCapture {
 public:
  WarningCapture() : saved_(mvdr::warning_sink()) {
    mvdr::warning_sink() = [this](std::string_view m) { messages.emplace_back(m); };
  }
  ~WarningCapture() { mvdr::warning_sink() = saved_; }
  WarningCapture(const WarningCapture&) = delete;
  WarningCapture& operator=(const WarningCapture&) = delete;

  std::vector<std::string> messages;

 private:
  std::function<void(std::string_view)> saved_;
};

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("mvdr_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace testutil
