// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The sfcomm authors
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <variant>
#include <vector>

namespace sf {

/// Domain extents a caller can supply to enable strided-subdomain detection.
/// X is the fastest-varying extent, XY = X*Y the plane size. Detection is
/// only attempted when extents are given; the inverse problem is
/// underdetermined from raw indices alone.
struct GridExtents {
  std::int64_t X = 0;
  std::int64_t XY = 0;
};

/// Classification of a vertex-index list, driving pack elision.
///
///  - Contiguous enumerates start .. start+count-1.
///  - Strided3D enumerates start + XY*k + X*j + i for (i,j,k) in
///    [0,dx) x [0,dy) x [0,dz).
///  - Indexed keeps the raw list.
class IndexPattern {
public:
  struct Contiguous {
    std::int64_t start = 0;
    std::int64_t count = 0;
  };
  struct Strided3D {
    std::int64_t start = 0;
    std::int64_t dx = 0, dy = 0, dz = 0;
    std::int64_t X = 0, XY = 0;
  };
  struct Indexed {
    std::vector<std::int64_t> indices;
    bool has_duplicates = false;
  };

  IndexPattern() : v_(Contiguous{0, 0}) {}

  static IndexPattern contiguous(std::int64_t start, std::int64_t count) {
    return IndexPattern(Contiguous{start, count});
  }

  /// Classify an explicit index list. Detection order: contiguous, then
  /// strided-3D (only with extents), else indexed.
  static IndexPattern analyze(std::span<const std::int64_t> indices,
                              std::optional<GridExtents> extents = std::nullopt);

  /// An absent index list means the space is contiguous from zero.
  static IndexPattern analyze_absent(std::int64_t n) { return contiguous(0, n); }

  std::int64_t size() const;

  /// i-th index of the enumeration (0 <= i < size()).
  std::int64_t index(std::int64_t i) const;

  /// Largest enumerated index plus one; 0 for empty patterns.
  std::int64_t index_bound() const;

  bool is_contiguous() const { return std::holds_alternative<Contiguous>(v_); }
  bool has_duplicates() const {
    auto* ix = std::get_if<Indexed>(&v_);
    return ix != nullptr && ix->has_duplicates;
  }

  const Contiguous* as_contiguous() const { return std::get_if<Contiguous>(&v_); }
  const Strided3D* as_strided() const { return std::get_if<Strided3D>(&v_); }
  const Indexed* as_indexed() const { return std::get_if<Indexed>(&v_); }

  /// Calls f(i, idx) for every position i with its enumerated index, in order.
  template <class F>
  void for_each(F&& f) const {
    if (auto* c = std::get_if<Contiguous>(&v_)) {
      for (std::int64_t i = 0; i < c->count; ++i) f(i, c->start + i);
    } else if (auto* s = std::get_if<Strided3D>(&v_)) {
      std::int64_t i = 0;
      for (std::int64_t k = 0; k < s->dz; ++k)
        for (std::int64_t j = 0; j < s->dy; ++j)
          for (std::int64_t x = 0; x < s->dx; ++x)
            f(i++, s->start + s->XY * k + s->X * j + x);
    } else {
      auto& ix = std::get<Indexed>(v_);
      for (std::size_t i = 0; i < ix.indices.size(); ++i)
        f(static_cast<std::int64_t>(i), ix.indices[i]);
    }
  }

  /// The enumeration as an explicit vector (test/debug helper).
  std::vector<std::int64_t> to_indices() const;

private:
  template <class V>
  explicit IndexPattern(V&& v) : v_(std::forward<V>(v)) {}

  std::variant<Contiguous, Strided3D, Indexed> v_;
};

} // namespace sf
