// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The sfcomm authors
#include "sf/symheap.hpp"

#include <algorithm>
#include <atomic>
#include <cstring>
#include <thread>

#include "sf/rng.hpp"
#include "sf/starforest.hpp"

namespace sf {

namespace {
constexpr std::uint64_t kAlign = 16;
}

SymHeapGroup::SymHeapGroup(int nranks, std::size_t heap_bytes, const CommConfig& cfg)
    : nranks_(nranks),
      heap_bytes_(heap_bytes),
      delay_max_us_(cfg.put_delay_max_us),
      seed_(cfg.seed),
      regions_(static_cast<std::size_t>(nranks)),
      cursors_(static_cast<std::size_t>(nranks), 0),
      registries_(static_cast<std::size_t>(nranks)),
      channels_(static_cast<std::size_t>(nranks) * static_cast<std::size_t>(nranks)),
      sig_mu_(static_cast<std::size_t>(nranks)),
      sig_cv_(static_cast<std::size_t>(nranks)) {
  for (auto& r : regions_) r.assign(heap_bytes, std::byte{0});
  const int nworkers = std::min(8, std::max(2, nranks));
  workers_.reserve(static_cast<std::size_t>(nworkers));
  for (int w = 0; w < nworkers; ++w)
    workers_.emplace_back([this, w] { worker_loop(static_cast<std::uint64_t>(w)); });
}

SymHeapGroup::~SymHeapGroup() { shutdown(); }

void SymHeapGroup::shutdown() {
  {
    std::lock_guard lk(eng_mu_);
    if (stop_) return;
    stop_ = true;
    eng_cv_.notify_all();
  }
  for (auto& t : workers_) t.join();
  workers_.clear();
}

SymObject SymHeapGroup::collective_alloc(Comm& comm, std::size_t local_bytes) {
  const std::int64_t mine = static_cast<std::int64_t>(local_bytes);
  const auto max = comm.allreduce_max(std::span<const std::int64_t>(&mine, 1))[0];
  // Zero-size objects still get a distinct offset.
  const std::uint64_t step =
      ((static_cast<std::uint64_t>(max) + kAlign - 1) / kAlign + (max == 0 ? 1 : 0)) * kAlign;

  std::lock_guard lk(reg_mu_);
  auto& cursor = cursors_[static_cast<std::size_t>(comm.rank())];
  SF_REQUIRE(cursor + step <= heap_bytes_, "symmetric heap exhausted");
  SymObject obj{cursor, static_cast<std::uint64_t>(max)};
  cursor += step;
  registries_[static_cast<std::size_t>(comm.rank())].push_back(obj);
  return obj;
}

void SymHeapGroup::check_range(int dest, std::uint64_t off, std::uint64_t len) const {
  std::lock_guard lk(reg_mu_);
  const auto& reg = registries_[static_cast<std::size_t>(dest)];
  for (const auto& o : reg)
    if (off >= o.offset && off + len <= o.offset + o.size) return;
  throw Error("put target [" + std::to_string(off) + ", +" + std::to_string(len) +
              ") is not inside any symmetric object");
}

void SymHeapGroup::execute(int dest, const Task& t) {
  std::byte* base = regions_[static_cast<std::size_t>(dest)].data();
  if (t.is_signal) {
    auto* slot = reinterpret_cast<std::uint64_t*>(base + t.dest_off);
    std::atomic_ref<std::uint64_t>(*slot).store(t.sigval, std::memory_order_release);
    {
      std::lock_guard lk(sig_mu_[static_cast<std::size_t>(dest)]);
    }
    sig_cv_[static_cast<std::size_t>(dest)].notify_all();
  } else {
    std::memcpy(base + t.dest_off, t.data.data(), t.data.size());
  }
}

void SymHeapGroup::enqueue(int src, int dest, Task&& t) {
  if (src == dest) {
    // Locally accessible peer: direct copy on the put path.
    execute(dest, t);
    return;
  }
  std::lock_guard lk(eng_mu_);
  channels_[channel_index(src, dest)].q.push_back(Node{false, std::move(t)});
  eng_cv_.notify_all();
}

void SymHeapGroup::put_nbi(int src_rank, int dest_rank, std::uint64_t dest_offset,
                           std::span<const std::byte> bytes) {
  check_range(dest_rank, dest_offset, bytes.size());
  Task t;
  t.dest_off = dest_offset;
  t.data.assign(bytes.begin(), bytes.end());
  enqueue(src_rank, dest_rank, std::move(t));
}

void SymHeapGroup::signal_set(int src_rank, int dest_rank, std::uint64_t sig_offset,
                              std::uint64_t value) {
  SF_REQUIRE(sig_offset % 8 == 0, "signal offset must be 8-byte aligned");
  check_range(dest_rank, sig_offset, 8);
  Task t;
  t.dest_off = sig_offset;
  t.is_signal = true;
  t.sigval = value;
  enqueue(src_rank, dest_rank, std::move(t));
}

void SymHeapGroup::fence(int src_rank, int dest_rank) {
  if (src_rank == dest_rank) return;
  std::lock_guard lk(eng_mu_);
  Channel& ch = channels_[channel_index(src_rank, dest_rank)];
  if (ch.q.empty() && ch.in_flight == 0) return; // nothing to order
  ch.q.push_back(Node{true, {}});
}

void SymHeapGroup::fence_all(int src_rank) {
  for (int d = 0; d < nranks_; ++d)
    if (d != src_rank) fence(src_rank, d);
}

void SymHeapGroup::worker_loop(std::uint64_t salt) {
  Rng rng(mix_seed(seed_ ^ 0x9d5fu, salt));
  std::unique_lock lk(eng_mu_);
  for (;;) {
    if (stop_) return;
    // Candidates: every task in every channel's head epoch (the prefix
    // before the first fence). Picking uniformly at random is the
    // adversarial schedule the fence tests rely on.
    std::size_t total = 0;
    for (const auto& ch : channels_) {
      for (const auto& n : ch.q) {
        if (n.is_fence) break;
        ++total;
      }
    }
    if (total == 0) {
      eng_cv_.wait_for(lk, std::chrono::milliseconds(50));
      continue;
    }
    std::uint64_t pick = rng.bounded(total);
    std::size_t ci = 0;
    std::size_t pos = 0;
    bool found = false;
    while (ci < channels_.size() && !found) {
      pos = 0;
      for (const auto& n : channels_[ci].q) {
        if (n.is_fence) break;
        if (pick == 0) {
          found = true;
          break;
        }
        --pick;
        ++pos;
      }
      if (!found) ++ci;
    }
    Channel& ch = channels_[ci];
    Task task = std::move(ch.q[pos].task);
    ch.q.erase(ch.q.begin() + static_cast<std::ptrdiff_t>(pos));
    ++ch.in_flight;
    lk.unlock();

    if (delay_max_us_ > 0) {
      const auto us = rng.bounded(static_cast<std::uint64_t>(delay_max_us_) + 1);
      if (us > 0) std::this_thread::sleep_for(std::chrono::microseconds(us));
    }
    const int dest = static_cast<int>(ci % static_cast<std::size_t>(nranks_));
    execute(dest, task);

    lk.lock();
    --ch.in_flight;
    while (!ch.q.empty() && ch.q.front().is_fence && ch.in_flight == 0) {
      ch.q.pop_front();
    }
    if (!ch.q.empty()) eng_cv_.notify_all();
  }
}

std::uint64_t SymHeapGroup::signal_load(int rank, std::uint64_t sig_offset) const {
  const auto* slot = reinterpret_cast<const std::uint64_t*>(
      regions_[static_cast<std::size_t>(rank)].data() + sig_offset);
  return std::atomic_ref<const std::uint64_t>(*slot).load(std::memory_order_acquire);
}

void SymHeapGroup::signal_store_local(int rank, std::uint64_t sig_offset, std::uint64_t value) {
  auto* slot = reinterpret_cast<std::uint64_t*>(regions_[static_cast<std::size_t>(rank)].data() +
                                                sig_offset);
  std::atomic_ref<std::uint64_t>(*slot).store(value, std::memory_order_release);
}

void SymHeapGroup::wait_until_all(int rank, std::span<const std::uint64_t> sig_offsets,
                                  WaitCond cond, std::uint64_t value,
                                  const detail::CancelState& cancel) {
  if (sig_offsets.empty()) return;
  std::unique_lock lk(sig_mu_[static_cast<std::size_t>(rank)]);
  for (;;) {
    bool all = true;
    for (auto off : sig_offsets) {
      const std::uint64_t v = signal_load(rank, off);
      if (cond == WaitCond::nonzero ? (v == 0) : (v != value)) {
        all = false;
        break;
      }
    }
    if (all) return;
    sig_cv_[static_cast<std::size_t>(rank)].wait_for(lk, detail::CancelState::slice);
    cancel.check("signal wait");
  }
}

std::vector<SymObject> SymHeapGroup::registry(int rank) const {
  std::lock_guard lk(reg_mu_);
  return registries_[static_cast<std::size_t>(rank)];
}

OffsetTables exchange_offsets(StarForest& sf) {
  Comm& comm = sf.comm();
  const auto& info = sf.two_sided();
  const std::uint64_t seq = comm.next_coll_seq();
  const Tag leaf_tag = tags::make(tags::Phase::setup, seq * 2);
  const Tag root_tag = tags::make(tags::Phase::setup, seq * 2 + 1);

  OffsetTables tables;
  std::vector<Request> reqs;

  // My leafbuf is the concatenation of one chunk per *remote* root-rank
  // group; tell each root rank where its chunk starts and which RecvSig
  // slot is its.
  std::uint64_t unit_off = 0;
  std::uint64_t slot = 0;
  std::vector<std::vector<std::uint64_t>> leaf_messages;
  for (const auto& g : info.root_ranks) {
    if (g.rank == comm.rank()) continue;
    leaf_messages.push_back({unit_off, slot});
    unit_off += g.items.size();
    ++slot;
  }
  {
    std::size_t i = 0;
    for (const auto& g : info.root_ranks) {
      if (g.rank == comm.rank()) continue;
      reqs.push_back(comm.isend_vals<std::uint64_t>(g.rank, leaf_tag, leaf_messages[i]));
      ++i;
    }
  }

  // Same for my rootbuf toward each remote leaf rank.
  unit_off = 0;
  slot = 0;
  std::vector<std::vector<std::uint64_t>> root_messages;
  for (const auto& g : info.leaf_ranks) {
    if (g.rank == comm.rank()) continue;
    root_messages.push_back({unit_off, slot});
    unit_off += g.items.size();
    ++slot;
  }
  {
    std::size_t i = 0;
    for (const auto& g : info.leaf_ranks) {
      if (g.rank == comm.rank()) continue;
      reqs.push_back(comm.isend_vals<std::uint64_t>(g.rank, root_tag, root_messages[i]));
      ++i;
    }
  }

  // Receive the mirror information.
  for (const auto& g : info.leaf_ranks) {
    if (g.rank == comm.rank()) continue;
    auto v = comm.recv_vals<std::uint64_t>(g.rank, leaf_tag);
    SF_REQUIRE(v.size() == 2, "malformed offset-exchange message");
    tables.leaf_data_off.push_back(v[0]);
    tables.leaf_sig_slot.push_back(v[1]);
  }
  for (const auto& g : info.root_ranks) {
    if (g.rank == comm.rank()) continue;
    auto v = comm.recv_vals<std::uint64_t>(g.rank, root_tag);
    SF_REQUIRE(v.size() == 2, "malformed offset-exchange message");
    tables.root_data_off.push_back(v[0]);
    tables.root_sig_slot.push_back(v[1]);
  }
  comm.wait_all(reqs);
  return tables;
}

} // namespace sf
