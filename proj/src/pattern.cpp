// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The sfcomm authors
#include "sf/pattern.hpp"

#include <algorithm>

#include "sf/errors.hpp"

namespace sf {

namespace {

bool is_contiguous_run(std::span<const std::int64_t> idx) {
  for (std::size_t i = 1; i < idx.size(); ++i)
    if (idx[i] != idx[0] + static_cast<std::int64_t>(i)) return false;
  return true;
}

// Strided subdomain detection for known extents: find dx as the leading
// consecutive run, dy as the number of X-strided rows, dz as the rest, then
// verify the full enumeration formula.
std::optional<IndexPattern::Strided3D> try_strided(std::span<const std::int64_t> idx,
                                                   const GridExtents& g) {
  const std::int64_t n = static_cast<std::int64_t>(idx.size());
  if (n == 0 || g.X <= 0 || g.XY <= 0 || g.XY % g.X != 0) return std::nullopt;
  const std::int64_t start = idx[0];

  std::int64_t dx = 1;
  while (dx < n && idx[dx] == start + dx) ++dx;
  if (dx > g.X || n % dx != 0) return std::nullopt;

  const std::int64_t rows = n / dx;
  std::int64_t dy = 1;
  while (dy < rows && idx[dy * dx] == start + dy * g.X) ++dy;
  if (rows % dy != 0) return std::nullopt;
  const std::int64_t dz = rows / dy;
  if (dy > g.XY / g.X) return std::nullopt;

  std::int64_t i = 0;
  for (std::int64_t k = 0; k < dz; ++k)
    for (std::int64_t j = 0; j < dy; ++j)
      for (std::int64_t x = 0; x < dx; ++x)
        if (idx[i++] != start + g.XY * k + g.X * j + x) return std::nullopt;

  return IndexPattern::Strided3D{start, dx, dy, dz, g.X, g.XY};
}

} // namespace

IndexPattern IndexPattern::analyze(std::span<const std::int64_t> indices,
                                   std::optional<GridExtents> extents) {
  if (indices.empty()) return contiguous(0, 0);
  if (is_contiguous_run(indices))
    return IndexPattern(Contiguous{indices[0], static_cast<std::int64_t>(indices.size())});
  if (extents) {
    if (auto s = try_strided(indices, *extents)) return IndexPattern(*s);
  }
  Indexed ix;
  ix.indices.assign(indices.begin(), indices.end());
  std::vector<std::int64_t> sorted(ix.indices);
  std::sort(sorted.begin(), sorted.end());
  ix.has_duplicates = std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end();
  return IndexPattern(std::move(ix));
}

std::int64_t IndexPattern::size() const {
  if (auto* c = std::get_if<Contiguous>(&v_)) return c->count;
  if (auto* s = std::get_if<Strided3D>(&v_)) return s->dx * s->dy * s->dz;
  return static_cast<std::int64_t>(std::get<Indexed>(v_).indices.size());
}

std::int64_t IndexPattern::index(std::int64_t i) const {
  if (auto* c = std::get_if<Contiguous>(&v_)) return c->start + i;
  if (auto* s = std::get_if<Strided3D>(&v_)) {
    const std::int64_t x = i % s->dx;
    const std::int64_t j = (i / s->dx) % s->dy;
    const std::int64_t k = i / (s->dx * s->dy);
    return s->start + s->XY * k + s->X * j + x;
  }
  return std::get<Indexed>(v_).indices[static_cast<std::size_t>(i)];
}

std::int64_t IndexPattern::index_bound() const {
  if (auto* c = std::get_if<Contiguous>(&v_)) return c->count == 0 ? 0 : c->start + c->count;
  std::int64_t bound = 0;
  for_each([&](std::int64_t, std::int64_t idx) { bound = std::max(bound, idx + 1); });
  return bound;
}

std::vector<std::int64_t> IndexPattern::to_indices() const {
  std::vector<std::int64_t> out(static_cast<std::size_t>(size()));
  for_each([&](std::int64_t i, std::int64_t idx) { out[static_cast<std::size_t>(i)] = idx; });
  return out;
}

} // namespace sf
