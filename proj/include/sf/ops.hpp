// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The sfcomm authors
#pragma once

#include <cstdint>
#include <memory>

#include "sf/pack.hpp"
#include "sf/starforest.hpp"
#include "sf/unit.hpp"

namespace sf {

enum class OpKind : std::uint8_t { bcast, reduce, fetch_and_op, gather, scatter };

/// Address-space tag of the buffers an operation moves data through:
/// plain user memory, or the collectively allocated symmetric heap (only
/// valid with the one-sided transport).
enum class BufferSpace : std::uint8_t { user, symmetric };

namespace detail {
struct OpState;
}

/// An in-flight split-phase operation. Returned by *_begin, consumed by the
/// matching *_end, which must be called exactly once. Buffers handed to
/// begin must stay untouched by the caller until end returns (verified by
/// checksum when CommConfig::debug_checksum is on). Multiple handles may be
/// outstanding on one forest provided their destination buffers are
/// disjoint.
class OpHandle {
public:
  OpHandle();
  ~OpHandle();
  OpHandle(OpHandle&&) noexcept;
  OpHandle& operator=(OpHandle&&) noexcept;

  OpKind kind() const;
  ReduceOp op() const;
  const Unit& unit() const;
  /// Which space the transfers stage through (symmetric under the
  /// one-sided backend).
  BufferSpace transfer_space() const;
  bool ended() const;

  detail::OpState& state() { return *st_; }

private:
  friend detail::OpState& op_state(OpHandle&);
  std::unique_ptr<detail::OpState> st_;
};

/// Broadcast root values to leaves: leafdata[leaf] (op)= rootdata[root] for
/// every edge. Isolated leaves are untouched; self edges go through a local
/// scatter without the transport. rootdata must hold nroots units, leafdata
/// must cover the largest connected leaf index.
OpHandle bcast_begin(StarForest& sf, const Unit& unit, const void* rootdata, void* leafdata,
                     ReduceOp op);
void bcast_end(OpHandle& h);
void bcast(StarForest& sf, const Unit& unit, const void* rootdata, void* leafdata, ReduceOp op);

/// Reduce leaf values onto their root's old value: rootdata[root] (op)=
/// fold of its leaves. With op = replace and degree > 1 the surviving
/// contribution is unspecified (counted in pack_counters()).
OpHandle reduce_begin(StarForest& sf, const Unit& unit, const void* leafdata, void* rootdata,
                      ReduceOp op);
void reduce_end(OpHandle& h);
void reduce(StarForest& sf, const Unit& unit, const void* leafdata, void* rootdata, ReduceOp op);

/// Like reduce, but each contribution first fetches the root's current
/// partially reduced value into leafupdate at the contributing leaf's
/// position. Per root, contributions are serialized: in deterministic mode
/// ordered (self rank first, then ascending leaf rank, then that rank's
/// edge order); in free-order mode the serialization order is randomized.
/// op = replace is rejected (no fetch semantics).
OpHandle fetch_and_op_begin(StarForest& sf, const Unit& unit, void* rootdata,
                            const void* leafdata, void* leafupdate, ReduceOp op);
void fetch_and_op_end(OpHandle& h);
void fetch_and_op(StarForest& sf, const Unit& unit, void* rootdata, const void* leafdata,
                  void* leafupdate, ReduceOp op);

/// Gather every leaf value of each root into multirootdata, deterministically
/// ordered (root, then self-first leaf rank, then edge order). multirootdata
/// holds sum-of-degrees units. Runs over the lazily built multi-SF.
OpHandle gather_begin(StarForest& sf, const Unit& unit, const void* leafdata,
                      void* multirootdata);
void gather_end(OpHandle& h);
void gather(StarForest& sf, const Unit& unit, const void* leafdata, void* multirootdata);

/// Inverse of gather: deal multirootdata slots back to the leaves.
OpHandle scatter_begin(StarForest& sf, const Unit& unit, const void* multirootdata,
                       void* leafdata);
void scatter_end(OpHandle& h);
void scatter(StarForest& sf, const Unit& unit, const void* multirootdata, void* leafdata);

} // namespace sf
