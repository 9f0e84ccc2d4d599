#pragma once

#include <cassert>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mvdr {

/// Strongly typed integral identifier. Tag keeps ids of different domains apart.
template <class Tag, class Rep>
class StrongId {
 public:
  using rep_type = Rep;

  constexpr StrongId() = default;
  constexpr explicit StrongId(Rep v) : value_(v) {}

  [[nodiscard]] constexpr Rep value() const { return value_; }

  friend constexpr auto operator<=>(StrongId, StrongId) = default;

 private:
  Rep value_{};
};

/// Global position of a token embedding in the corpus, 0..T-1.
using EmbeddingId = StrongId<struct EmbeddingIdTag, std::uint64_t>;
/// Internal document ordinal, 0..N-1.
using DocId = StrongId<struct DocIdTag, std::uint32_t>;

/// Read-only row-major matrix over borrowed storage.
struct MatrixView {
  std::span<const float> values;
  std::size_t dim = 0;

  [[nodiscard]] std::size_t rows() const { return dim == 0 ? 0 : values.size() / dim; }
  [[nodiscard]] std::span<const float> row(std::size_t i) const {
    assert(i < rows());
    return values.subspan(i * dim, dim);
  }
};

/// Owning row-major float matrix.
struct Matrix {
  std::size_t dim = 0;
  std::vector<float> values;

  Matrix() = default;
  Matrix(std::size_t rows, std::size_t d) : dim(d), values(rows * d, 0.0F) {}

  [[nodiscard]] std::size_t rows() const { return dim == 0 ? 0 : values.size() / dim; }
  [[nodiscard]] std::span<float> row(std::size_t i) { return {values.data() + i * dim, dim}; }
  [[nodiscard]] std::span<const float> row(std::size_t i) const {
    return {values.data() + i * dim, dim};
  }
  [[nodiscard]] MatrixView view() const { return {values, dim}; }

  friend bool operator==(const Matrix&, const Matrix&) = default;
};

/// Plain sequential float dot product. The loop order is fixed so results are
/// reproducible bit-for-bit.
inline float dot(std::span<const float> a, std::span<const float> b) {
  assert(a.size() == b.size());
  float s = 0.0F;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double dot_f64(std::span<const float> a, std::span<const float> b) {
  assert(a.size() == b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += double(a[i]) * double(b[i]);
  return s;
}

inline float l2_sq(std::span<const float> a, std::span<const float> b) {
  assert(a.size() == b.size());
  float s = 0.0F;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const float d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

/// Destination of non-fatal diagnostics. Defaults to stderr; tests and tools
/// may swap it.
inline std::function<void(std::string_view)>& warning_sink() {
  static std::function<void(std::string_view)> sink = [](std::string_view msg) {
    std::cerr << "warning: " << msg << '\n';
  };
  return sink;
}

inline void warn(std::string_view msg) {
  if (auto& sink = warning_sink()) sink(msg);
}

}  // namespace mvdr

template <class Tag, class Rep>
struct std::hash<mvdr::StrongId<Tag, Rep>> {
  std::size_t operator()(mvdr::StrongId<Tag, Rep> id) const noexcept {
    return std::hash<Rep>{}(id.value());
  }
};
