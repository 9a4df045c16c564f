// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The sfcomm authors
#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "sf/comm.hpp"

namespace sf {

struct RankPayload {
  int rank = -1;
  std::vector<std::byte> payload;
};

/// Sparse one-sided-specified exchange: every rank names its targets with a
/// payload, every rank returns who targeted it (sorted by rank) with the
/// payloads. Both variants compute the exact transpose of the relation.
///
/// dense: allreduce on a communicator-size integer array to learn the
/// incoming count, then probe-receive that many messages. Robust, not
/// scalable.
///
/// consensus: nonblocking-consensus pattern — synchronous-mode sends
/// (emulated by a delivery acknowledgment), a probe-and-receive loop, a
/// nonblocking barrier entered once all local sends are acknowledged,
/// terminating when the barrier completes.
std::vector<RankPayload> sparse_exchange_dense(Comm& comm, std::span<const RankPayload> targets);
std::vector<RankPayload> sparse_exchange_consensus(Comm& comm,
                                                   std::span<const RankPayload> targets);

/// Discovery-only wrappers matching the setup use case: feed the set of root
/// ranks, learn the set of leaf ranks (the reverse edges).
std::vector<int> discover_leaf_ranks_dense(Comm& comm, std::span<const int> root_ranks);
std::vector<RankPayload> discover_leaf_ranks_consensus(Comm& comm,
                                                       std::span<const RankPayload> root_ranks);

} // namespace sf
