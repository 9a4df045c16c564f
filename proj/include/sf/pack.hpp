// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The sfcomm authors
#pragma once

#include <atomic>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "sf/pattern.hpp"
#include "sf/unit.hpp"

namespace sf {

/// Copy instrumentation. pack_copies counts packs into a staging buffer,
/// unpack_copies counts applications out of one; the contiguous elision
/// paths touch neither. replace_dup_collisions counts unpack/scatter calls
/// that hit duplicate destination indices with op = replace.
struct PackCounters {
  std::atomic<std::uint64_t> pack_copies{0};
  std::atomic<std::uint64_t> unpack_copies{0};
  std::atomic<std::uint64_t> replace_dup_collisions{0};

  void reset() {
    pack_copies = 0;
    unpack_copies = 0;
    replace_dup_collisions = 0;
  }
};

PackCounters& pack_counters();

/// Duplicate-index handling in unpack/scatter. deterministic serializes
/// contributions in position order; atomics applies them with per-element
/// atomicity in whatever order the (possibly parallel) loop visits them.
enum class UnpackMode { deterministic, atomics };

/// buf[i] = src[idx(i)], vertex-wise (unit.bytes() per vertex).
/// src_count is the length of src in vertices; indices out of range throw.
void pack(const void* src, std::int64_t src_count, const IndexPattern& pat, const Unit& unit,
          void* buf);

/// Pack with contiguous elision: for a contiguous pattern returns a view of
/// the source region itself (no copy, no counter); otherwise packs into
/// `scratch` and returns a view of it.
std::span<const std::byte> pack_view(const void* src, std::int64_t src_count,
                                     const IndexPattern& pat, const Unit& unit,
                                     std::vector<std::byte>& scratch);

/// dst[idx(i)] (op)= buf[i]. Duplicate destination indices are applied
/// atomically or serialized per `mode`; replace with duplicates keeps one
/// contribution and bumps the collision counter.
void unpack(void* dst, std::int64_t dst_count, const IndexPattern& pat, const Unit& unit,
            ReduceOp op, const void* buf, UnpackMode mode = UnpackMode::deterministic);

/// dst[dstidx(i)] (op)= src[srcidx(i)] with no intermediate buffer.
/// Pattern sizes must match.
void scatter(const void* src, std::int64_t src_count, const IndexPattern& src_pat, void* dst,
             std::int64_t dst_count, const IndexPattern& dst_pat, const Unit& unit, ReduceOp op,
             UnpackMode mode = UnpackMode::deterministic);

} // namespace sf
