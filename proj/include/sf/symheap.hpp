// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The sfcomm authors
#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <span>
#include <thread>
#include <vector>

#include "sf/comm.hpp"
#include "sf/detail/world.hpp"

namespace sf {

class StarForest;

/// A collectively allocated region of remote-accessible memory: identical
/// offset and size on every rank.
struct SymObject {
  std::uint64_t offset = 0;
  std::uint64_t size = 0;
};

/// Emulated symmetric heap shared by all in-process ranks. Remote puts are
/// asynchronous: they travel through a per-(source, destination) ordered
/// channel serviced by delivery workers that may reorder tasks *within* a
/// fence epoch (adversarially) and may sleep an injected random delay before
/// landing each one. Signals are 64-bit slots written with release semantics
/// at delivery time; owners wait on them with acquire loads.
class SymHeapGroup {
public:
  SymHeapGroup(int nranks, std::size_t heap_bytes, const CommConfig& cfg);
  ~SymHeapGroup();

  /// Stop delivery workers; undelivered tasks are dropped. Called once all
  /// rank workers have joined.
  void shutdown();

  int nranks() const { return nranks_; }
  std::size_t heap_bytes() const { return heap_bytes_; }

  /// Collective: every rank calls with its local size, in the same order.
  /// The object's size is the maximum over ranks; its offset is identical
  /// everywhere. Throws when the heap is exhausted.
  SymObject collective_alloc(Comm& comm, std::size_t local_bytes);

  /// Asynchronous copy of bytes into dest's region. Completion is not
  /// implied by return; visibility at the destination is only guaranteed
  /// through a subsequent fence + signal. The target range must lie within
  /// a symmetric object.
  void put_nbi(int src_rank, int dest_rank, std::uint64_t dest_offset,
               std::span<const std::byte> bytes);

  /// Asynchronous u64 store into a signal slot of dest's region (release at
  /// delivery). Travels the same channel as puts, so fences order it.
  void signal_set(int src_rank, int dest_rank, std::uint64_t sig_offset, std::uint64_t value);

  /// All puts from src to dest issued before the fence land before any put
  /// issued after it.
  void fence(int src_rank, int dest_rank);
  void fence_all(int src_rank);

  /// Owner-side raw access to this rank's region.
  std::byte* region(int rank) { return regions_[static_cast<std::size_t>(rank)].data(); }
  const std::byte* region(int rank) const {
    return regions_[static_cast<std::size_t>(rank)].data();
  }

  std::uint64_t signal_load(int rank, std::uint64_t sig_offset) const;
  void signal_store_local(int rank, std::uint64_t sig_offset, std::uint64_t value);

  enum class WaitCond { nonzero, equals };
  /// Block the calling rank until every listed signal satisfies the
  /// condition. Returns immediately for an empty list.
  void wait_until_all(int rank, std::span<const std::uint64_t> sig_offsets, WaitCond cond,
                      std::uint64_t value, const detail::CancelState& cancel);

  /// (offset, size) registry of this rank's symmetric objects; identical on
  /// all ranks after any allocation sequence.
  std::vector<SymObject> registry(int rank) const;

private:
  struct Task {
    std::uint64_t dest_off = 0;
    std::vector<std::byte> data; // empty for signals
    bool is_signal = false;
    std::uint64_t sigval = 0;
  };
  struct Node {
    bool is_fence = false;
    Task task;
  };
  struct Channel {
    std::deque<Node> q;
    int in_flight = 0;
  };

  std::size_t channel_index(int src, int dest) const {
    return static_cast<std::size_t>(src) * static_cast<std::size_t>(nranks_) +
           static_cast<std::size_t>(dest);
  }
  void enqueue(int src, int dest, Task&& t);
  void execute(int dest, const Task& t);
  void check_range(int dest, std::uint64_t off, std::uint64_t len) const;
  void worker_loop(std::uint64_t salt);

  int nranks_;
  std::size_t heap_bytes_;
  std::uint32_t delay_max_us_;
  std::uint64_t seed_;

  std::vector<std::vector<std::byte>> regions_;
  mutable std::mutex reg_mu_;
  std::vector<std::uint64_t> cursors_;
  std::vector<std::vector<SymObject>> registries_;

  mutable std::mutex eng_mu_;
  std::condition_variable eng_cv_;
  std::vector<Channel> channels_;
  bool stop_ = false;
  std::vector<std::thread> workers_;

  mutable std::vector<std::mutex> sig_mu_;
  std::vector<std::condition_variable> sig_cv_;
};

/// Per-neighbor put targets learned during setup through two-sided
/// exchange. Entries cover the *remote* groups of the forest's TwoSidedInfo
/// (the local pair, when present, bypasses the heap): positions align with
/// two_sided().leaf_ranks / root_ranks after skipping the self group.
///
/// For a leaf rank q: where my rootbuf chunk lands in q's leafbuf (unit
/// offset) and which slot of q's leafRecvSig / leafSendSig pair is mine.
/// For a root rank p: where my leafbuf chunk lands in p's rootbuf and my
/// slot in p's rootRecvSig / rootSendSig.
struct OffsetTables {
  std::vector<std::uint64_t> leaf_data_off;
  std::vector<std::uint64_t> leaf_sig_slot;
  std::vector<std::uint64_t> root_data_off;
  std::vector<std::uint64_t> root_sig_slot;
};

/// Collective. Exchanges chunk offsets and signal slots over the two-sided
/// transport so that one-sided puts know their remote targets.
OffsetTables exchange_offsets(StarForest& sf);

} // namespace sf
