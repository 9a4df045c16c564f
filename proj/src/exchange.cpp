// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The sfcomm authors
#include "sf/exchange.hpp"

#include <algorithm>
#include <thread>

#include "sf/detail/world.hpp"

namespace sf {

namespace {

void check_targets(Comm& comm, std::span<const RankPayload> targets) {
  std::vector<int> seen;
  for (const auto& t : targets) {
    SF_REQUIRE(t.rank >= 0 && t.rank < comm.size(), "exchange target rank out of range");
    seen.push_back(t.rank);
  }
  std::sort(seen.begin(), seen.end());
  SF_REQUIRE(std::adjacent_find(seen.begin(), seen.end()) == seen.end(),
             "exchange targets must be distinct ranks");
}

void sort_by_rank(std::vector<RankPayload>& v) {
  std::sort(v.begin(), v.end(),
            [](const RankPayload& a, const RankPayload& b) { return a.rank < b.rank; });
}

} // namespace

std::vector<RankPayload> sparse_exchange_dense(Comm& comm, std::span<const RankPayload> targets) {
  check_targets(comm, targets);
  const std::uint64_t seq = comm.next_coll_seq();
  const Tag data_tag = tags::make(tags::Phase::setup, seq);

  std::vector<std::int64_t> flags(static_cast<std::size_t>(comm.size()), 0);
  std::vector<RankPayload> result;
  for (const auto& t : targets) {
    if (t.rank == comm.rank())
      result.push_back(t); // self delivery stays local
    else
      flags[static_cast<std::size_t>(t.rank)] = 1;
  }
  const auto counts = comm.allreduce_sum(flags);
  const auto incoming = counts[static_cast<std::size_t>(comm.rank())];

  for (const auto& t : targets)
    if (t.rank != comm.rank()) comm.isend(t.rank, data_tag, t.payload);

  for (std::int64_t i = 0; i < incoming; ++i) {
    const ProbeInfo p = comm.probe(data_tag);
    result.push_back(RankPayload{p.src, comm.recv_matched(p.src, data_tag)});
  }
  sort_by_rank(result);
  return result;
}

std::vector<RankPayload> sparse_exchange_consensus(Comm& comm,
                                                   std::span<const RankPayload> targets) {
  check_targets(comm, targets);
  const std::uint64_t seq = comm.next_coll_seq();
  const Tag data_tag = tags::make(tags::Phase::nbx_data, seq);
  const Tag ack_tag = tags::make(tags::Phase::nbx_ack, seq);

  std::vector<RankPayload> result;
  std::size_t nsent = 0;
  for (const auto& t : targets) {
    if (t.rank == comm.rank()) {
      result.push_back(t);
    } else {
      comm.isend(t.rank, data_tag, t.payload);
      ++nsent;
    }
  }

  // A send counts as locally complete only once its delivery is
  // acknowledged; that gives the synchronous-send semantics the consensus
  // termination argument needs.
  std::size_t acked = 0;
  bool in_barrier = false;
  Ibarrier ib;
  for (;;) {
    while (auto p = comm.iprobe(data_tag)) {
      result.push_back(RankPayload{p->src, comm.recv_matched(p->src, data_tag)});
      comm.isend(p->src, ack_tag, {});
    }
    while (auto p = comm.iprobe(ack_tag)) {
      comm.recv_matched(p->src, ack_tag);
      ++acked;
    }
    if (!in_barrier && acked == nsent) {
      ib = comm.ibarrier_begin();
      in_barrier = true;
    }
    if (in_barrier && comm.ibarrier_test(ib)) break;
    comm.world().cancel.check("consensus exchange");
    std::this_thread::yield();
  }
  sort_by_rank(result);
  return result;
}

std::vector<int> discover_leaf_ranks_dense(Comm& comm, std::span<const int> root_ranks) {
  std::vector<RankPayload> targets;
  targets.reserve(root_ranks.size());
  for (int r : root_ranks) targets.push_back(RankPayload{r, {}});
  auto got = sparse_exchange_dense(comm, targets);
  std::vector<int> out;
  out.reserve(got.size());
  for (auto& g : got) out.push_back(g.rank);
  return out;
}

std::vector<RankPayload> discover_leaf_ranks_consensus(Comm& comm,
                                                       std::span<const RankPayload> root_ranks) {
  return sparse_exchange_consensus(comm, root_ranks);
}

} // namespace sf
