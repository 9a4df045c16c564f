// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The sfcomm authors
#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <vector>

#include "sf/comm.hpp"
#include "sf/errors.hpp"

namespace sf {

class SymHeapGroup;

namespace detail {

/// Shared abort/deadline state. Blocking waits poll it in short slices so a
/// watchdog can unstick every rank without tracking individual condvars.
struct CancelState {
  std::atomic<bool> aborted{false};
  std::chrono::steady_clock::time_point deadline{};

  void check(const char* what) const {
    if (aborted.load(std::memory_order_relaxed))
      throw TimeoutError(std::string(what) + ": run aborted");
    if (std::chrono::steady_clock::now() > deadline)
      throw TimeoutError(std::string(what) + ": harness timeout");
  }

  static constexpr std::chrono::milliseconds slice{25};
};

struct RequestState {
  std::mutex mu;
  std::condition_variable cv;
  bool done = false;
  std::string error;

  void complete() {
    std::lock_guard lk(mu);
    done = true;
    cv.notify_all();
  }
  void fail(std::string msg) {
    std::lock_guard lk(mu);
    done = true;
    error = std::move(msg);
    cv.notify_all();
  }
  void wait(const CancelState& cancel, const char* what) {
    std::unique_lock lk(mu);
    while (!done) {
      cv.wait_for(lk, CancelState::slice);
      if (!done) cancel.check(what);
    }
    if (!error.empty()) throw Error(error);
  }
};

struct Message {
  int src = -1;
  Tag tag = 0;
  std::vector<std::byte> payload;
};

struct PendingRecv {
  int src = -1;
  Tag tag = 0;
  std::byte* buf = nullptr; // fixed-size destination; size must match exactly
  std::size_t len = 0;
  std::shared_ptr<RequestState> req;
};

struct Mailbox {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<Message> queue;    // unmatched arrivals, in delivery order
  std::deque<PendingRecv> pending;
};

struct RankSeq {
  std::atomic<std::uint64_t> coll{0};
  std::atomic<std::uint64_t> op{0};
};

/// One in-process communication domain: the mailboxes of all ranks plus the
/// backend transmit hook. Ranks are threads sharing this object.
class World {
public:
  explicit World(const CommConfig& cfg);
  virtual ~World() = default;

  int size() const { return cfg_.nranks; }
  const CommConfig& cfg() const { return cfg_; }

  /// Move a payload from src to dest; buffered semantics (the payload is
  /// owned by the message once this returns).
  virtual void transmit(int src, int dest, Tag tag, std::span<const std::byte> payload) = 0;

  /// Hand an arrived message to dest's mailbox: match a pending recv or park
  /// it in the queue.
  void deliver(int dest, Message&& m);

  std::shared_ptr<RequestState> post_recv(int me, int src, Tag tag, std::span<std::byte> buf);
  std::optional<ProbeInfo> iprobe(int me, Tag tag);
  ProbeInfo probe(int me, Tag tag, const CancelState& cancel);
  std::vector<std::byte> recv_matched(int me, int src, Tag tag, const CancelState& cancel);

  RankSeq& seq(int rank) { return seqs_[static_cast<std::size_t>(rank)]; }

  CancelState cancel;

  /// Set by the harness when the one-sided backend is active.
  SymHeapGroup* symheap = nullptr;

protected:
  CommConfig cfg_;

private:
  std::vector<Mailbox> boxes_;
  std::vector<RankSeq> seqs_;
};

std::unique_ptr<World> make_world(const CommConfig& cfg);

} // namespace detail
} // namespace sf
