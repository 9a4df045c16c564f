// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The sfcomm authors
#pragma once

#include <cstdint>
#include <vector>

#include "sf/starforest.hpp"
#include "sf/unit.hpp"

namespace sf::oracle {

/// Single-threaded reference semantics over the gathered global edge list.
/// Deliberately independent of the communication machinery: plain loops on
/// per-rank int64 arrays, used by selftest suites and the acceptance gate.
struct Edge {
  int root_rank = -1;
  std::int64_t root_off = -1;
  int leaf_rank = -1;
  std::int64_t leaf_idx = -1;
};

struct GlobalGraph {
  int nranks = 0;
  std::vector<GraphSpec> specs;
  std::vector<Edge> edges;

  static GlobalGraph from_specs(std::vector<GraphSpec> specs);

  /// Edge direction swapped: roots become leaves and vice versa. Used for
  /// the reduce/bcast duality check.
  GlobalGraph transposed() const;

  std::int64_t nroots(int rank) const { return specs[static_cast<std::size_t>(rank)].nroots; }
  /// One past the largest connected leaf index on the rank.
  std::int64_t leaf_bound(int rank) const;
};

/// data[rank] is that rank's array of count*blocklen int64 elements.
using Data = std::vector<std::vector<std::int64_t>>;

std::int64_t apply(ReduceOp op, std::int64_t current, std::int64_t incoming);

void bcast(const GlobalGraph& g, const Data& rootdata, Data& leafdata, ReduceOp op,
           std::int64_t blocklen = 1);
void reduce(const GlobalGraph& g, const Data& leafdata, Data& rootdata, ReduceOp op,
            std::int64_t blocklen = 1);

std::vector<std::vector<std::int64_t>> degrees(const GlobalGraph& g);

/// Deterministic gather order: per root, contributions sorted by (leaf rank
/// with the root's own rank first, then ascending leaf index). Returns the
/// multiroot arrays (sum-of-degrees slots per rank).
void gather(const GlobalGraph& g, const Data& leafdata, Data& multirootdata,
            std::int64_t blocklen = 1);
void scatter(const GlobalGraph& g, const Data& multirootdata, Data& leafdata,
             std::int64_t blocklen = 1);

/// Serialized fetch-and-op in the deterministic order (same key as gather).
void fetch_and_op(const GlobalGraph& g, Data& rootdata, const Data& leafdata, Data& leafupdate,
                  ReduceOp op, std::int64_t blocklen = 1);

} // namespace sf::oracle
