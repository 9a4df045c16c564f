// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The sfcomm authors
#include <doctest.h>

#include "sf/pattern.hpp"
#include "sf/rng.hpp"

using sf::GridExtents;
using sf::IndexPattern;

TEST_CASE("absent index list is contiguous from zero") {
  const auto p = IndexPattern::analyze_absent(5);
  REQUIRE(p.is_contiguous());
  CHECK(p.as_contiguous()->start == 0);
  CHECK(p.as_contiguous()->count == 5);
}

TEST_CASE("consecutive run detected as contiguous") {
  const std::vector<std::int64_t> idx{4, 5, 6, 7};
  const auto p = IndexPattern::analyze(idx);
  REQUIRE(p.is_contiguous());
  CHECK(p.as_contiguous()->start == 4);
  CHECK(p.as_contiguous()->count == 4);
}

TEST_CASE("strided subdomain detected with known extents") {
  // 2x2 face of a 4x4 plane starting at 10: enumerating start + X*j + i
  // over i,j in {0,1} gives exactly this list.
  const std::vector<std::int64_t> idx{10, 11, 14, 15};
  const auto p = IndexPattern::analyze(idx, GridExtents{4, 16});
  REQUIRE(p.as_strided() != nullptr);
  const auto* s = p.as_strided();
  CHECK(s->start == 10);
  CHECK(s->dx == 2);
  CHECK(s->dy == 2);
  CHECK(s->dz == 1);
  CHECK(s->X == 4);
  CHECK(s->XY == 16);
  CHECK(p.to_indices() == idx);
}

TEST_CASE("three-dimensional subdomain round-trips") {
  // 2x3x2 box inside a 5x4 plane pair
  const GridExtents g{5, 20};
  std::vector<std::int64_t> idx;
  const std::int64_t start = 7;
  for (std::int64_t k = 0; k < 2; ++k)
    for (std::int64_t j = 0; j < 3; ++j)
      for (std::int64_t i = 0; i < 2; ++i) idx.push_back(start + 20 * k + 5 * j + i);
  const auto p = IndexPattern::analyze(idx, g);
  REQUIRE(p.as_strided() != nullptr);
  CHECK(p.as_strided()->dx == 2);
  CHECK(p.as_strided()->dy == 3);
  CHECK(p.as_strided()->dz == 2);
  CHECK(p.to_indices() == idx);
  CHECK(p.size() == 12);
}

TEST_CASE("no blind strided inference without extents") {
  const std::vector<std::int64_t> idx{10, 11, 14, 15};
  const auto p = IndexPattern::analyze(idx);
  CHECK(p.as_indexed() != nullptr);
}

TEST_CASE("irregular list falls back to indexed with duplicate detection") {
  const std::vector<std::int64_t> with_dup{3, 1, 3};
  const auto p = IndexPattern::analyze(with_dup);
  REQUIRE(p.as_indexed() != nullptr);
  CHECK(p.has_duplicates());
  CHECK(p.to_indices() == with_dup);

  const std::vector<std::int64_t> no_dup{3, 1, 2};
  CHECK_FALSE(IndexPattern::analyze(no_dup).has_duplicates());
}

TEST_CASE("analyze enumeration is order-preserving for random lists") {
  sf::Rng rng(42);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::int64_t> idx(rng.bounded(40));
    for (auto& v : idx) v = rng.range(0, 60);
    const auto p = IndexPattern::analyze(idx);
    CHECK(p.to_indices() == idx);
    CHECK(p.size() == static_cast<std::int64_t>(idx.size()));
  }
}

TEST_CASE("index_bound covers the largest index") {
  CHECK(IndexPattern::analyze_absent(0).index_bound() == 0);
  CHECK(IndexPattern::contiguous(3, 4).index_bound() == 7);
  const std::vector<std::int64_t> idx{9, 2, 5};
  CHECK(IndexPattern::analyze(idx).index_bound() == 10);
}
