// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The sfcomm authors
#pragma once

#include <cstddef>
#include <cstdint>
#include <cstring>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sf/errors.hpp"

namespace sf {

class SymHeapGroup;

namespace detail {
class World;
struct RequestState;
} // namespace detail

/// Message tags are 64-bit: the top byte is a library phase, the rest is an
/// operation/sequence id. Partitioning the space keeps simultaneous
/// operations and internal protocols from matching each other's messages.
using Tag = std::uint64_t;

namespace tags {

inline constexpr unsigned kPhaseShift = 56;
inline constexpr std::uint64_t kLowMask = (std::uint64_t(1) << kPhaseShift) - 1;

enum class Phase : std::uint64_t {
  user = 1,
  setup = 2,
  nbx_data = 3,
  nbx_ack = 4,
  coll = 5,
  op_data = 6,
  op_reply = 7,
};

constexpr Tag make(Phase p, std::uint64_t low) {
  return (static_cast<std::uint64_t>(p) << kPhaseShift) | (low & kLowMask);
}
constexpr Phase phase_of(Tag t) { return static_cast<Phase>(t >> kPhaseShift); }
constexpr Tag user(std::uint64_t id) { return make(Phase::user, id); }

} // namespace tags

/// Runtime knobs shared by every rank of a communication domain.
struct CommConfig {
  int nranks = 1;
  std::string backend = "threads"; // threads | sockets | onesided
  bool deterministic = true;       // serialized duplicate handling, fixed orders
  bool debug_checksum = false;     // verify begin/end buffer stability
  bool force_remote = false;       // route self edges through the transport
  int dense_discovery_threshold = 64;
  std::uint64_t seed = 1;
  double timeout_s = 30.0;
  std::uint32_t put_delay_max_us = 0; // injected delay on one-sided puts/signals
  std::size_t symheap_bytes = std::size_t(1) << 22;
  std::string manifest_path; // sockets backend rank->port map (empty: temp file)
};

struct ProbeInfo {
  int src = -1;
  std::size_t bytes = 0;
};

class Request {
public:
  Request() = default;
  explicit Request(std::shared_ptr<detail::RequestState> st) : state_(std::move(st)) {}
  bool valid() const { return state_ != nullptr; }
  detail::RequestState* state() const { return state_.get(); }

private:
  std::shared_ptr<detail::RequestState> state_;
};

/// Nonblocking barrier in flight; poll with Comm::ibarrier_test.
struct Ibarrier {
  std::uint64_t seq = 0;
  int arrived = 0;
  bool released = false;
  bool done = false;
};

/// Per-rank handle onto a shared World. Cheap to copy; all copies on a rank
/// share the sequence counters, so collective calls stay aligned across
/// ranks as long as every rank issues them in the same order.
class Comm {
public:
  Comm() = default;
  Comm(detail::World* world, int rank) : world_(world), rank_(rank) {}

  bool valid() const { return world_ != nullptr; }
  int rank() const { return rank_; }
  int size() const;
  const CommConfig& config() const;
  detail::World& world() const { return *world_; }
  SymHeapGroup* symheap() const;

  /// Buffered nonblocking send; the payload is copied before return.
  /// Messages between a fixed (src, dest, tag) are non-overtaking.
  Request isend(int dest, Tag tag, std::span<const std::byte> data);
  /// Post a receive into a fixed buffer; a matching message of different
  /// length fails the request.
  Request irecv(int src, Tag tag, std::span<std::byte> buf);

  void wait(Request& r);
  void wait_all(std::span<Request> rs);

  /// Any-source probe for an exact tag; does not consume the message.
  std::optional<ProbeInfo> iprobe(Tag tag);
  ProbeInfo probe(Tag tag); // blocking
  /// Blocking receive returning the matched message's payload.
  std::vector<std::byte> recv_matched(int src, Tag tag);

  void barrier();
  std::vector<std::int64_t> allreduce_max(std::span<const std::int64_t> vals);
  std::vector<std::int64_t> allreduce_sum(std::span<const std::int64_t> vals);

  Ibarrier ibarrier_begin();
  bool ibarrier_test(Ibarrier& ib);

  std::uint64_t next_coll_seq();
  std::uint64_t next_op_seq();

  template <class T>
  Request isend_vals(int dest, Tag tag, std::span<const T> vals) {
    return isend(dest, tag, std::as_bytes(vals));
  }
  template <class T>
  Request irecv_vals(int src, Tag tag, std::span<T> vals) {
    return irecv(src, tag, std::as_writable_bytes(vals));
  }
  template <class T>
  std::vector<T> recv_vals(int src, Tag tag) {
    auto bytes = recv_matched(src, tag);
    SF_REQUIRE(bytes.size() % sizeof(T) == 0, "message size not a multiple of element size");
    std::vector<T> out(bytes.size() / sizeof(T));
    std::memcpy(out.data(), bytes.data(), bytes.size());
    return out;
  }

private:
  detail::World* world_ = nullptr;
  int rank_ = 0;
};

} // namespace sf
