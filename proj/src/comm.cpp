// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The sfcomm authors
#include "sf/comm.hpp"

#include <algorithm>
#include <cstring>
#include <thread>

#include "sf/detail/world.hpp"

namespace sf {
namespace detail {

World::World(const CommConfig& cfg)
    : cfg_(cfg),
      boxes_(static_cast<std::size_t>(cfg.nranks)),
      seqs_(static_cast<std::size_t>(cfg.nranks)) {
  SF_REQUIRE(cfg.nranks >= 1, "communicator needs at least one rank");
  cancel.deadline = std::chrono::steady_clock::now() +
                    std::chrono::milliseconds(static_cast<long>(cfg.timeout_s * 1000.0));
}

void World::deliver(int dest, Message&& m) {
  Mailbox& box = boxes_[static_cast<std::size_t>(dest)];
  PendingRecv matched;
  bool have_match = false;
  {
    std::lock_guard lk(box.mu);
    for (auto it = box.pending.begin(); it != box.pending.end(); ++it) {
      if (it->src == m.src && it->tag == m.tag) {
        matched = *it;
        box.pending.erase(it);
        have_match = true;
        break;
      }
    }
    if (!have_match) {
      box.queue.push_back(std::move(m));
      box.cv.notify_all();
      return;
    }
  }
  if (m.payload.size() != matched.len) {
    matched.req->fail("message size mismatch: sent " + std::to_string(m.payload.size()) +
                      " bytes into a " + std::to_string(matched.len) + "-byte receive");
    return;
  }
  if (matched.len > 0) std::memcpy(matched.buf, m.payload.data(), matched.len);
  matched.req->complete();
}

std::shared_ptr<RequestState> World::post_recv(int me, int src, Tag tag,
                                               std::span<std::byte> buf) {
  Mailbox& box = boxes_[static_cast<std::size_t>(me)];
  auto req = std::make_shared<RequestState>();
  Message m;
  bool have_msg = false;
  {
    std::lock_guard lk(box.mu);
    for (auto it = box.queue.begin(); it != box.queue.end(); ++it) {
      if (it->src == src && it->tag == tag) {
        m = std::move(*it);
        box.queue.erase(it);
        have_msg = true;
        break;
      }
    }
    if (!have_msg) {
      box.pending.push_back(PendingRecv{src, tag, buf.data(), buf.size(), req});
      return req;
    }
  }
  if (m.payload.size() != buf.size()) {
    req->fail("message size mismatch: sent " + std::to_string(m.payload.size()) +
              " bytes into a " + std::to_string(buf.size()) + "-byte receive");
  } else {
    if (!buf.empty()) std::memcpy(buf.data(), m.payload.data(), buf.size());
    req->complete();
  }
  return req;
}

std::optional<ProbeInfo> World::iprobe(int me, Tag tag) {
  Mailbox& box = boxes_[static_cast<std::size_t>(me)];
  std::lock_guard lk(box.mu);
  for (const auto& m : box.queue)
    if (m.tag == tag) return ProbeInfo{m.src, m.payload.size()};
  return std::nullopt;
}

ProbeInfo World::probe(int me, Tag tag, const CancelState& cancel) {
  Mailbox& box = boxes_[static_cast<std::size_t>(me)];
  std::unique_lock lk(box.mu);
  for (;;) {
    for (const auto& m : box.queue)
      if (m.tag == tag) return ProbeInfo{m.src, m.payload.size()};
    box.cv.wait_for(lk, CancelState::slice);
    cancel.check("probe");
  }
}

std::vector<std::byte> World::recv_matched(int me, int src, Tag tag, const CancelState& cancel) {
  Mailbox& box = boxes_[static_cast<std::size_t>(me)];
  std::unique_lock lk(box.mu);
  for (;;) {
    for (auto it = box.queue.begin(); it != box.queue.end(); ++it) {
      if (it->src == src && it->tag == tag) {
        auto payload = std::move(it->payload);
        box.queue.erase(it);
        return payload;
      }
    }
    box.cv.wait_for(lk, CancelState::slice);
    cancel.check("recv");
  }
}

namespace {

/// Default backend: rank workers share one address space; transmit hands the
/// message straight to the destination mailbox.
class ThreadsWorld final : public World {
public:
  using World::World;
  void transmit(int src, int dest, Tag tag, std::span<const std::byte> payload) override {
    Message m;
    m.src = src;
    m.tag = tag;
    m.payload.assign(payload.begin(), payload.end());
    deliver(dest, std::move(m));
  }
};

} // namespace

std::unique_ptr<World> make_socket_world(const CommConfig& cfg); // socket_world.cpp

std::unique_ptr<World> make_world(const CommConfig& cfg) {
  if (cfg.backend == "sockets") return make_socket_world(cfg);
  SF_REQUIRE(cfg.backend == "threads" || cfg.backend == "onesided",
             "unknown transport backend '" + cfg.backend + "'");
  return std::make_unique<ThreadsWorld>(cfg);
}

} // namespace detail

int Comm::size() const { return world_->size(); }
const CommConfig& Comm::config() const { return world_->cfg(); }
SymHeapGroup* Comm::symheap() const { return world_->symheap; }

Request Comm::isend(int dest, Tag tag, std::span<const std::byte> data) {
  SF_REQUIRE(dest >= 0 && dest < size(), "isend: peer rank out of range");
  world_->transmit(rank_, dest, tag, data);
  auto st = std::make_shared<detail::RequestState>();
  st->complete(); // buffered: locally complete once the payload is owned
  return Request(std::move(st));
}

Request Comm::irecv(int src, Tag tag, std::span<std::byte> buf) {
  SF_REQUIRE(src >= 0 && src < size(), "irecv: peer rank out of range");
  return Request(world_->post_recv(rank_, src, tag, buf));
}

void Comm::wait(Request& r) {
  SF_REQUIRE(r.valid(), "wait on an empty request");
  r.state()->wait(world_->cancel, "wait");
}

void Comm::wait_all(std::span<Request> rs) {
  for (auto& r : rs) wait(r);
}

std::optional<ProbeInfo> Comm::iprobe(Tag tag) { return world_->iprobe(rank_, tag); }
ProbeInfo Comm::probe(Tag tag) { return world_->probe(rank_, tag, world_->cancel); }

std::vector<std::byte> Comm::recv_matched(int src, Tag tag) {
  SF_REQUIRE(src >= 0 && src < size(), "recv: peer rank out of range");
  return world_->recv_matched(rank_, src, tag, world_->cancel);
}

std::uint64_t Comm::next_coll_seq() {
  return world_->seq(rank_).coll.fetch_add(1, std::memory_order_relaxed);
}
std::uint64_t Comm::next_op_seq() {
  return world_->seq(rank_).op.fetch_add(1, std::memory_order_relaxed);
}

namespace {

enum CollSub : std::uint64_t { kGather = 0, kRelease = 1, kIbArrive = 2, kIbRelease = 3 };

Tag coll_tag(std::uint64_t seq, CollSub sub) {
  return tags::make(tags::Phase::coll, seq * 4 + sub);
}

std::vector<std::int64_t> allreduce(Comm& c, std::span<const std::int64_t> vals, bool take_max) {
  const std::uint64_t seq = c.next_coll_seq();
  std::vector<std::int64_t> result(vals.begin(), vals.end());
  if (c.size() == 1) return result;
  if (c.rank() == 0) {
    for (int src = 1; src < c.size(); ++src) {
      auto contrib = c.recv_vals<std::int64_t>(src, coll_tag(seq, kGather));
      SF_REQUIRE(contrib.size() == result.size(), "allreduce length mismatch across ranks");
      for (std::size_t i = 0; i < result.size(); ++i)
        result[i] = take_max ? std::max(result[i], contrib[i]) : result[i] + contrib[i];
    }
    for (int dest = 1; dest < c.size(); ++dest)
      c.isend_vals<std::int64_t>(dest, coll_tag(seq, kRelease), result);
  } else {
    c.isend_vals<std::int64_t>(0, coll_tag(seq, kGather), vals);
    result = c.recv_vals<std::int64_t>(0, coll_tag(seq, kRelease));
  }
  return result;
}

} // namespace

std::vector<std::int64_t> Comm::allreduce_max(std::span<const std::int64_t> vals) {
  return allreduce(*this, vals, true);
}
std::vector<std::int64_t> Comm::allreduce_sum(std::span<const std::int64_t> vals) {
  return allreduce(*this, vals, false);
}

void Comm::barrier() {
  const std::int64_t token = 0;
  allreduce_sum(std::span<const std::int64_t>(&token, 1));
}

Ibarrier Comm::ibarrier_begin() {
  Ibarrier ib;
  ib.seq = next_coll_seq();
  if (size() == 1) {
    ib.done = true;
    return ib;
  }
  if (rank_ == 0)
    ib.arrived = 1;
  else
    isend(0, coll_tag(ib.seq, kIbArrive), {});
  return ib;
}

bool Comm::ibarrier_test(Ibarrier& ib) {
  if (ib.done) return true;
  if (rank_ == 0) {
    while (auto p = iprobe(coll_tag(ib.seq, kIbArrive))) {
      recv_matched(p->src, coll_tag(ib.seq, kIbArrive));
      ++ib.arrived;
    }
    if (ib.arrived == size() && !ib.released) {
      for (int dest = 1; dest < size(); ++dest) isend(dest, coll_tag(ib.seq, kIbRelease), {});
      ib.released = true;
      ib.done = true;
    }
  } else {
    if (auto p = iprobe(coll_tag(ib.seq, kIbRelease))) {
      recv_matched(p->src, coll_tag(ib.seq, kIbRelease));
      ib.done = true;
    }
  }
  return ib.done;
}

} // namespace sf
