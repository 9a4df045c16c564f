// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The sfcomm authors
#include "sf/ops.hpp"

#include <algorithm>
#include <cstring>
#include <map>

#include "sf/detail/world.hpp"
#include "sf/rng.hpp"
#include "sf/symheap.hpp"

namespace sf {
namespace detail {

namespace {

std::uint64_t fnv1a(const void* data, std::size_t n) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

} // namespace

/// One-sided staging for one (forest, unit size, concurrency slot): the
/// symmetric rootbuf/leafbuf chunk pair, the four signal arrays of the
/// put protocol, and the exchanged remote offsets.
struct SymAttachment {
  SymObject rootbuf, leafbuf;
  SymObject leaf_recv_sig, leaf_send_sig; // indexed by remote root-rank groups
  SymObject root_recv_sig, root_send_sig; // indexed by remote leaf-rank groups
  OffsetTables tables;
  std::vector<std::uint64_t> leafbuf_chunk_off; // my chunk starts (units), remote root groups
  std::vector<std::uint64_t> rootbuf_chunk_off; // my chunk starts (units), remote leaf groups
};

struct AttachmentSet {
  std::map<int, std::unique_ptr<SymAttachment>> by_slot;
  int in_flight = 0;
};

struct OpState {
  StarForest* sf = nullptr; // forest the transfer runs over (multi-SF for gather/scatter)
  OpKind kind{};
  Unit unit{};
  ReduceOp op{};
  const void* src = nullptr;
  void* dst = nullptr;
  void* leafupdate = nullptr;
  std::uint64_t opid = 0;
  bool ended = false;
  BufferSpace space = BufferSpace::user;

  struct Chunk {
    std::vector<std::byte> buf;
    const IndexPattern* pat = nullptr;
    Request req;
    std::size_t group = 0;
  };
  std::vector<Request> reqs;
  std::vector<Chunk> recv_chunks;    // bcast/reduce remote arrivals
  std::vector<Chunk> contrib_chunks; // fetch-and-op: incoming leaf contributions
  std::vector<Chunk> reply_chunks;   // fetch-and-op: fetched values coming back

  // one-sided
  AttachmentSet* att_set = nullptr;
  SymAttachment* att = nullptr;
  int att_slot = 0;

  std::uint64_t checksum = 0;
  const void* ck_ptr = nullptr;
  std::size_t ck_bytes = 0;
};

OpState& op_state(OpHandle& h) { return h.state(); }

namespace {

UnpackMode mode_of(const Comm& c) {
  return c.config().deterministic ? UnpackMode::deterministic : UnpackMode::atomics;
}

Tag data_tag(std::uint64_t opid) { return tags::make(tags::Phase::op_data, opid); }
Tag reply_tag(std::uint64_t opid) { return tags::make(tags::Phase::op_reply, opid); }

bool onesided(const Comm& c) { return c.symheap() != nullptr; }

std::size_t remote_base(const StarForest& sf) { return sf.has_self_edges() ? 1 : 0; }

void begin_checksum(OpState& st, const void* p, std::size_t bytes) {
  if (!st.sf->comm().config().debug_checksum) return;
  st.ck_ptr = p;
  st.ck_bytes = bytes;
  st.checksum = fnv1a(p, bytes);
}

void end_checksum(const OpState& st) {
  if (st.ck_ptr == nullptr) return;
  SF_REQUIRE(fnv1a(st.ck_ptr, st.ck_bytes) == st.checksum,
             "buffer mutated between begin and end of a split-phase operation");
}

// fetched_out = root slot's current value; root slot (op)= contrib. Safe for
// contrib and fetched_out aliasing (element goes through a temporary).
template <class T>
void fetch_apply_typed(T* root, const T* contrib, T* fetched, std::int64_t blocklen,
                       ReduceOp op) {
  for (std::int64_t b = 0; b < blocklen; ++b) {
    const T c = contrib[b];
    const T old = root[b];
    fetched[b] = old;
    T next = old;
    switch (op) {
      case ReduceOp::sum: next = static_cast<T>(old + c); break;
      case ReduceOp::prod: next = static_cast<T>(old * c); break;
      case ReduceOp::max: next = c > old ? c : old; break;
      case ReduceOp::min: next = c < old ? c : old; break;
      case ReduceOp::land: next = (old && c) ? T(1) : T(0); break;
      case ReduceOp::lor: next = (old || c) ? T(1) : T(0); break;
      case ReduceOp::band:
        if constexpr (std::is_integral_v<T>) next = static_cast<T>(old & c);
        break;
      case ReduceOp::bor:
        if constexpr (std::is_integral_v<T>) next = static_cast<T>(old | c);
        break;
      case ReduceOp::replace: break; // rejected at begin
    }
    root[b] = next;
  }
}

void fetch_apply(const Unit& unit, ReduceOp op, void* rootdata, std::int64_t root_off,
                 const void* contrib, void* fetched) {
  const std::int64_t bl = unit.blocklen;
  switch (unit.kind) {
    case Kind::int32:
      fetch_apply_typed(static_cast<std::int32_t*>(rootdata) + root_off * bl,
                        static_cast<const std::int32_t*>(contrib),
                        static_cast<std::int32_t*>(fetched), bl, op);
      break;
    case Kind::int64:
      fetch_apply_typed(static_cast<std::int64_t*>(rootdata) + root_off * bl,
                        static_cast<const std::int64_t*>(contrib),
                        static_cast<std::int64_t*>(fetched), bl, op);
      break;
    case Kind::float64:
      fetch_apply_typed(static_cast<double*>(rootdata) + root_off * bl,
                        static_cast<const double*>(contrib), static_cast<double*>(fetched), bl,
                        op);
      break;
    case Kind::bytes: SF_REQUIRE(false, "fetch-and-op requires a non-opaque unit kind"); break;
  }
}

// ---------------------------------------------------------------------------
// one-sided attachment management

SymAttachment& acquire_attachment(OpState& st) {
  StarForest& sf = *st.sf;
  Comm& comm = sf.comm();
  SymHeapGroup* heap = comm.symheap();
  const std::size_t key = st.unit.bytes();

  auto& holder = sf.attachment(key);
  if (!holder) holder = std::make_shared<AttachmentSet>();
  auto* set = static_cast<AttachmentSet*>(holder.get());
  const int slot = set->in_flight++;
  st.att_set = set;
  st.att_slot = slot;

  auto& att_ptr = set->by_slot[slot];
  if (!att_ptr) {
    // Collective build: every rank reaches the first use of this slot in
    // the same begin call.
    auto att = std::make_unique<SymAttachment>();
    const std::size_t base = remote_base(sf);
    const std::size_t ub = st.unit.bytes();

    std::uint64_t units = 0;
    for (std::size_t gi = base; gi < sf.root_groups().size(); ++gi) {
      att->leafbuf_chunk_off.push_back(units);
      units += sf.root_groups()[gi].ordinals.size();
    }
    att->leafbuf = heap->collective_alloc(comm, units * ub);
    units = 0;
    for (std::size_t gi = base; gi < sf.leaf_groups().size(); ++gi) {
      att->rootbuf_chunk_off.push_back(units);
      units += sf.leaf_groups()[gi].root_offsets.size();
    }
    att->rootbuf = heap->collective_alloc(comm, units * ub);

    const std::size_t n_root_groups = sf.root_groups().size() - base;
    const std::size_t n_leaf_groups = sf.leaf_groups().size() - base;
    att->leaf_recv_sig = heap->collective_alloc(comm, n_root_groups * 8);
    att->leaf_send_sig = heap->collective_alloc(comm, n_root_groups * 8);
    att->root_recv_sig = heap->collective_alloc(comm, n_leaf_groups * 8);
    att->root_send_sig = heap->collective_alloc(comm, n_leaf_groups * 8);
    att->tables = exchange_offsets(sf);
    att_ptr = std::move(att);
  }
  st.att = att_ptr.get();
  st.space = BufferSpace::symmetric;
  return *st.att;
}

void release_attachment(OpState& st) {
  if (st.att_set != nullptr) --st.att_set->in_flight;
}

// Sender leg of the put protocol, in either direction.
//   wait own SendSig == 0, pack into the local staging chunk, put the chunk,
//   fence, raise own SendSig, put the peer's RecvSig.
// The local SendSig store happens before the RecvSig put is issued: once the
// receiver observes the RecvSig it may clear our SendSig, and that clear
// must find the 1 already in place.
struct ProtocolLeg {
  SymObject local_buf;          // my staging buffer object
  SymObject remote_buf;         // same object on the peer (identical offset)
  SymObject send_sig;           // my ok-to-put array
  SymObject remote_recv_sig;    // peer's end-of-put array
  std::uint64_t my_chunk_units; // chunk start in my staging buffer
  std::uint64_t remote_chunk_units;
  std::uint64_t remote_sig_slot;
  std::size_t sig_index; // my index into send_sig
};

void protocol_send(Comm& comm, SymHeapGroup* heap, const ProtocolLeg& leg, const void* src,
                   std::int64_t src_count, const IndexPattern& pat, const Unit& unit, int peer) {
  const int me = comm.rank();
  const std::size_t ub = unit.bytes();
  const std::uint64_t sig_off = leg.send_sig.offset + leg.sig_index * 8;
  heap->wait_until_all(me, std::span<const std::uint64_t>(&sig_off, 1),
                       SymHeapGroup::WaitCond::equals, 0, comm.world().cancel);
  std::byte* chunk = heap->region(me) + leg.local_buf.offset + leg.my_chunk_units * ub;
  pack(src, src_count, pat, unit, chunk);
  const std::size_t bytes = static_cast<std::size_t>(pat.size()) * ub;
  heap->put_nbi(me, peer, leg.remote_buf.offset + leg.remote_chunk_units * ub, {chunk, bytes});
  heap->fence(me, peer);
  heap->signal_store_local(me, sig_off, 1);
  heap->signal_set(me, peer, leg.remote_recv_sig.offset + leg.remote_sig_slot * 8, 1);
}

} // namespace

// ---------------------------------------------------------------------------
// begin/end engines

namespace {

void begin_common(OpState& st, const void* checksum_ptr, std::size_t checksum_bytes) {
  st.opid = st.sf->comm().next_op_seq();
  begin_checksum(st, checksum_ptr, checksum_bytes);
}

void local_pair_scatter(OpState& st, bool root_to_leaf) {
  StarForest& sf = *st.sf;
  if (!sf.has_self_edges() || sf.comm().config().force_remote) return;
  const auto& lg = sf.leaf_groups().front();
  const auto& rg = sf.root_groups().front();
  if (root_to_leaf)
    scatter(st.src, sf.nroots(), lg.root_pattern, st.dst, sf.leaf_index_bound(),
            rg.leaf_pattern, st.unit, st.op, mode_of(sf.comm()));
  else
    scatter(st.src, sf.leaf_index_bound(), rg.leaf_pattern, st.dst, sf.nroots(),
            lg.root_pattern, st.unit, st.op, mode_of(sf.comm()));
}

// Two-sided bcast direction: pack/send per leaf group, receive/unpack per
// root group. Contiguous pattern + replace receives straight into the user
// array; contiguous sends go straight out of it.
void begin_root_to_leaf_twosided(OpState& st) {
  StarForest& sf = *st.sf;
  Comm& comm = sf.comm();
  const bool force = comm.config().force_remote;
  const int me = comm.rank();
  const std::size_t ub = st.unit.bytes();
  const Tag tag = data_tag(st.opid);

  for (std::size_t gi = 0; gi < sf.root_groups().size(); ++gi) {
    const auto& g = sf.root_groups()[gi];
    if (g.rank == me && !force) continue;
    const std::size_t bytes = g.ordinals.size() * ub;
    const auto* c = g.leaf_pattern.as_contiguous();
    if (c != nullptr && st.op == ReduceOp::replace) {
      auto* base = static_cast<std::byte*>(st.dst) + static_cast<std::size_t>(c->start) * ub;
      st.reqs.push_back(comm.irecv(g.rank, tag, {base, bytes}));
    } else {
      OpState::Chunk ch;
      ch.buf.resize(bytes);
      ch.pat = &g.leaf_pattern;
      ch.group = gi;
      ch.req = comm.irecv(g.rank, tag, ch.buf);
      st.recv_chunks.push_back(std::move(ch));
    }
  }
  for (const auto& g : sf.leaf_groups()) {
    if (g.rank == me && !force) continue;
    if (const auto* c = g.root_pattern.as_contiguous()) {
      const auto* base =
          static_cast<const std::byte*>(st.src) + static_cast<std::size_t>(c->start) * ub;
      st.reqs.push_back(
          comm.isend(g.rank, tag, {base, static_cast<std::size_t>(c->count) * ub}));
    } else {
      std::vector<std::byte> buf(g.root_offsets.size() * ub);
      pack(st.src, sf.nroots(), g.root_pattern, st.unit, buf.data());
      st.reqs.push_back(comm.isend(g.rank, tag, buf));
    }
  }
  local_pair_scatter(st, true);
}

void end_root_to_leaf_twosided(OpState& st) {
  StarForest& sf = *st.sf;
  Comm& comm = sf.comm();
  comm.wait_all(st.reqs);
  for (auto& ch : st.recv_chunks) comm.wait(ch.req);
  for (auto& ch : st.recv_chunks)
    unpack(st.dst, sf.leaf_index_bound(), *ch.pat, st.unit, st.op, ch.buf.data(), mode_of(comm));
}

void begin_leaf_to_root_twosided(OpState& st) {
  StarForest& sf = *st.sf;
  Comm& comm = sf.comm();
  const bool force = comm.config().force_remote;
  const int me = comm.rank();
  const std::size_t ub = st.unit.bytes();
  const Tag tag = data_tag(st.opid);

  for (std::size_t gi = 0; gi < sf.leaf_groups().size(); ++gi) {
    const auto& g = sf.leaf_groups()[gi];
    if (g.rank == me && !force) continue;
    const std::size_t bytes = g.root_offsets.size() * ub;
    const auto* c = g.root_pattern.as_contiguous();
    if (c != nullptr && st.op == ReduceOp::replace) {
      auto* base = static_cast<std::byte*>(st.dst) + static_cast<std::size_t>(c->start) * ub;
      st.reqs.push_back(comm.irecv(g.rank, tag, {base, bytes}));
    } else {
      OpState::Chunk ch;
      ch.buf.resize(bytes);
      ch.pat = &g.root_pattern;
      ch.group = gi;
      ch.req = comm.irecv(g.rank, tag, ch.buf);
      st.recv_chunks.push_back(std::move(ch));
    }
  }
  for (const auto& g : sf.root_groups()) {
    if (g.rank == me && !force) continue;
    if (const auto* c = g.leaf_pattern.as_contiguous()) {
      const auto* base =
          static_cast<const std::byte*>(st.src) + static_cast<std::size_t>(c->start) * ub;
      st.reqs.push_back(
          comm.isend(g.rank, tag, {base, static_cast<std::size_t>(c->count) * ub}));
    } else {
      std::vector<std::byte> buf(g.ordinals.size() * ub);
      pack(st.src, sf.leaf_index_bound(), g.leaf_pattern, st.unit, buf.data());
      st.reqs.push_back(comm.isend(g.rank, tag, buf));
    }
  }
  local_pair_scatter(st, false);
}

void end_leaf_to_root_twosided(OpState& st) {
  StarForest& sf = *st.sf;
  Comm& comm = sf.comm();
  comm.wait_all(st.reqs);
  for (auto& ch : st.recv_chunks) comm.wait(ch.req);
  // Group order (self first, ranks ascending) keeps duplicate-root folds
  // deterministic.
  for (auto& ch : st.recv_chunks)
    unpack(st.dst, sf.nroots(), *ch.pat, st.unit, st.op, ch.buf.data(), mode_of(comm));
}

// ---------------------------------------------------------------------------
// one-sided engines (Fig-7-style put protocol)

void begin_root_to_leaf_onesided(OpState& st) {
  StarForest& sf = *st.sf;
  Comm& comm = sf.comm();
  SymHeapGroup* heap = comm.symheap();
  SymAttachment& att = acquire_attachment(st);
  const std::size_t base = remote_base(sf);

  local_pair_scatter(st, true);
  for (std::size_t k = 0; base + k < sf.leaf_groups().size(); ++k) {
    const auto& g = sf.leaf_groups()[base + k];
    ProtocolLeg leg;
    leg.local_buf = att.rootbuf;
    leg.remote_buf = att.leafbuf;
    leg.send_sig = att.root_send_sig;
    leg.remote_recv_sig = att.leaf_recv_sig;
    leg.my_chunk_units = att.rootbuf_chunk_off[k];
    leg.remote_chunk_units = att.tables.leaf_data_off[k];
    leg.remote_sig_slot = att.tables.leaf_sig_slot[k];
    leg.sig_index = k;
    protocol_send(comm, heap, leg, st.src, sf.nroots(), g.root_pattern, st.unit, g.rank);
  }
}

void end_root_to_leaf_onesided(OpState& st) {
  StarForest& sf = *st.sf;
  Comm& comm = sf.comm();
  SymHeapGroup* heap = comm.symheap();
  SymAttachment& att = *st.att;
  const int me = comm.rank();
  const std::size_t base = remote_base(sf);
  const std::size_t ub = st.unit.bytes();

  std::vector<std::uint64_t> sig_offs;
  for (std::size_t k = 0; base + k < sf.root_groups().size(); ++k)
    sig_offs.push_back(att.leaf_recv_sig.offset + k * 8);
  heap->wait_until_all(me, sig_offs, SymHeapGroup::WaitCond::nonzero, 0, comm.world().cancel);

  for (std::size_t k = 0; base + k < sf.root_groups().size(); ++k) {
    const auto& g = sf.root_groups()[base + k];
    const std::byte* chunk =
        heap->region(me) + att.leafbuf.offset + att.leafbuf_chunk_off[k] * ub;
    unpack(st.dst, sf.leaf_index_bound(), g.leaf_pattern, st.unit, st.op, chunk, mode_of(comm));
    heap->signal_store_local(me, att.leaf_recv_sig.offset + k * 8, 0);
    heap->signal_set(me, g.rank, att.root_send_sig.offset + att.tables.root_sig_slot[k] * 8, 0);
  }
  release_attachment(st);
}

void begin_leaf_to_root_onesided(OpState& st) {
  StarForest& sf = *st.sf;
  Comm& comm = sf.comm();
  SymHeapGroup* heap = comm.symheap();
  SymAttachment& att = acquire_attachment(st);
  const std::size_t base = remote_base(sf);

  local_pair_scatter(st, false);
  for (std::size_t k = 0; base + k < sf.root_groups().size(); ++k) {
    const auto& g = sf.root_groups()[base + k];
    ProtocolLeg leg;
    leg.local_buf = att.leafbuf;
    leg.remote_buf = att.rootbuf;
    leg.send_sig = att.leaf_send_sig;
    leg.remote_recv_sig = att.root_recv_sig;
    leg.my_chunk_units = att.leafbuf_chunk_off[k];
    leg.remote_chunk_units = att.tables.root_data_off[k];
    leg.remote_sig_slot = att.tables.root_sig_slot[k];
    leg.sig_index = k;
    protocol_send(comm, heap, leg, st.src, sf.leaf_index_bound(), g.leaf_pattern, st.unit,
                  g.rank);
  }
}

void end_leaf_to_root_onesided(OpState& st) {
  StarForest& sf = *st.sf;
  Comm& comm = sf.comm();
  SymHeapGroup* heap = comm.symheap();
  SymAttachment& att = *st.att;
  const int me = comm.rank();
  const std::size_t base = remote_base(sf);
  const std::size_t ub = st.unit.bytes();

  std::vector<std::uint64_t> sig_offs;
  for (std::size_t k = 0; base + k < sf.leaf_groups().size(); ++k)
    sig_offs.push_back(att.root_recv_sig.offset + k * 8);
  heap->wait_until_all(me, sig_offs, SymHeapGroup::WaitCond::nonzero, 0, comm.world().cancel);

  for (std::size_t k = 0; base + k < sf.leaf_groups().size(); ++k) {
    const auto& g = sf.leaf_groups()[base + k];
    const std::byte* chunk =
        heap->region(me) + att.rootbuf.offset + att.rootbuf_chunk_off[k] * ub;
    unpack(st.dst, sf.nroots(), g.root_pattern, st.unit, st.op, chunk, mode_of(comm));
    heap->signal_store_local(me, att.root_recv_sig.offset + k * 8, 0);
    heap->signal_set(me, g.rank, att.leaf_send_sig.offset + att.tables.leaf_sig_slot[k] * 8, 0);
  }
  release_attachment(st);
}

// ---------------------------------------------------------------------------
// fetch-and-op

void begin_fetch_twosided(OpState& st) {
  StarForest& sf = *st.sf;
  Comm& comm = sf.comm();
  const bool force = comm.config().force_remote;
  const int me = comm.rank();
  const std::size_t ub = st.unit.bytes();

  // Leaf duties: ship contributions, expect fetched values back.
  for (std::size_t gi = 0; gi < sf.root_groups().size(); ++gi) {
    const auto& g = sf.root_groups()[gi];
    if (g.rank == me && !force) continue;
    const std::size_t bytes = g.ordinals.size() * ub;
    if (const auto* c = g.leaf_pattern.as_contiguous()) {
      const auto* b =
          static_cast<const std::byte*>(st.src) + static_cast<std::size_t>(c->start) * ub;
      st.reqs.push_back(comm.isend(g.rank, data_tag(st.opid), {b, bytes}));
    } else {
      std::vector<std::byte> buf(bytes);
      pack(st.src, sf.leaf_index_bound(), g.leaf_pattern, st.unit, buf.data());
      st.reqs.push_back(comm.isend(g.rank, data_tag(st.opid), buf));
    }
    OpState::Chunk rc;
    rc.buf.resize(bytes);
    rc.pat = &g.leaf_pattern;
    rc.group = gi;
    rc.req = comm.irecv(g.rank, reply_tag(st.opid), rc.buf);
    st.reply_chunks.push_back(std::move(rc));
  }
  // Root duties: expect contributions.
  for (std::size_t gi = 0; gi < sf.leaf_groups().size(); ++gi) {
    const auto& g = sf.leaf_groups()[gi];
    if (g.rank == me && !force) continue;
    OpState::Chunk cc;
    cc.buf.resize(g.root_offsets.size() * ub);
    cc.group = gi;
    cc.req = comm.irecv(g.rank, data_tag(st.opid), cc.buf);
    st.contrib_chunks.push_back(std::move(cc));
  }
}

void end_fetch_twosided(OpState& st) {
  StarForest& sf = *st.sf;
  Comm& comm = sf.comm();
  const bool force = comm.config().force_remote;
  const int me = comm.rank();
  const std::size_t ub = st.unit.bytes();

  for (auto& ch : st.contrib_chunks) comm.wait(ch.req);

  // Serialize contributions per root. Entry order realizes the documented
  // deterministic order; free-order mode shuffles it.
  struct Entry {
    std::size_t group;
    OpState::Chunk* chunk; // null for the direct local pair
  };
  std::vector<Entry> entries;
  if (sf.has_self_edges() && !force) entries.push_back(Entry{0, nullptr});
  for (auto& ch : st.contrib_chunks) entries.push_back(Entry{ch.group, &ch});
  std::sort(entries.begin(), entries.end(),
            [](const Entry& a, const Entry& b) { return a.group < b.group; });
  if (!comm.config().deterministic) {
    Rng rng(mix_seed(comm.config().seed ^ st.opid, static_cast<std::uint64_t>(me)));
    rng.shuffle(entries);
  }

  for (const auto& e : entries) {
    const auto& g = sf.leaf_groups()[e.group];
    if (e.chunk == nullptr) {
      const auto& rg = sf.root_groups().front(); // paired self group
      for (std::size_t i = 0; i < g.root_offsets.size(); ++i) {
        const std::int64_t leaf = rg.leaf_pattern.index(static_cast<std::int64_t>(i));
        fetch_apply(st.unit, st.op, st.dst, g.root_offsets[i],
                    static_cast<const std::byte*>(st.src) + static_cast<std::size_t>(leaf) * ub,
                    static_cast<std::byte*>(st.leafupdate) + static_cast<std::size_t>(leaf) * ub);
      }
    } else {
      auto& buf = e.chunk->buf;
      for (std::size_t i = 0; i < g.root_offsets.size(); ++i)
        fetch_apply(st.unit, st.op, st.dst, g.root_offsets[i], buf.data() + i * ub,
                    buf.data() + i * ub);
      st.reqs.push_back(comm.isend(g.rank, reply_tag(st.opid), buf));
    }
  }

  for (auto& ch : st.reply_chunks) comm.wait(ch.req);
  for (auto& ch : st.reply_chunks)
    unpack(st.leafupdate, sf.leaf_index_bound(), *ch.pat, st.unit, ReduceOp::replace,
           ch.buf.data(), mode_of(comm));
  comm.wait_all(st.reqs);
}

void begin_fetch_onesided(OpState& st) {
  StarForest& sf = *st.sf;
  Comm& comm = sf.comm();
  SymHeapGroup* heap = comm.symheap();
  SymAttachment& att = acquire_attachment(st);
  const std::size_t base = remote_base(sf);

  // Leaf duties: contributions travel the leaf-to-root leg.
  for (std::size_t k = 0; base + k < sf.root_groups().size(); ++k) {
    const auto& g = sf.root_groups()[base + k];
    ProtocolLeg leg;
    leg.local_buf = att.leafbuf;
    leg.remote_buf = att.rootbuf;
    leg.send_sig = att.leaf_send_sig;
    leg.remote_recv_sig = att.root_recv_sig;
    leg.my_chunk_units = att.leafbuf_chunk_off[k];
    leg.remote_chunk_units = att.tables.root_data_off[k];
    leg.remote_sig_slot = att.tables.root_sig_slot[k];
    leg.sig_index = k;
    protocol_send(comm, heap, leg, st.src, sf.leaf_index_bound(), g.leaf_pattern, st.unit,
                  g.rank);
  }
}

void end_fetch_onesided(OpState& st) {
  StarForest& sf = *st.sf;
  Comm& comm = sf.comm();
  SymHeapGroup* heap = comm.symheap();
  SymAttachment& att = *st.att;
  const int me = comm.rank();
  const std::size_t base = remote_base(sf);
  const std::size_t ub = st.unit.bytes();

  // Root duties: wait for all contributions, serialize them per root
  // (self pair first, then group order; the protocol always serializes).
  std::vector<std::uint64_t> sig_offs;
  for (std::size_t k = 0; base + k < sf.leaf_groups().size(); ++k)
    sig_offs.push_back(att.root_recv_sig.offset + k * 8);
  heap->wait_until_all(me, sig_offs, SymHeapGroup::WaitCond::nonzero, 0, comm.world().cancel);

  if (sf.has_self_edges()) {
    const auto& lg = sf.leaf_groups().front();
    const auto& rg = sf.root_groups().front();
    for (std::size_t i = 0; i < lg.root_offsets.size(); ++i) {
      const std::int64_t leaf = rg.leaf_pattern.index(static_cast<std::int64_t>(i));
      fetch_apply(st.unit, st.op, st.dst, lg.root_offsets[i],
                  static_cast<const std::byte*>(st.src) + static_cast<std::size_t>(leaf) * ub,
                  static_cast<std::byte*>(st.leafupdate) + static_cast<std::size_t>(leaf) * ub);
    }
  }
  for (std::size_t k = 0; base + k < sf.leaf_groups().size(); ++k) {
    const auto& g = sf.leaf_groups()[base + k];
    std::byte* chunk = heap->region(me) + att.rootbuf.offset + att.rootbuf_chunk_off[k] * ub;
    for (std::size_t i = 0; i < g.root_offsets.size(); ++i)
      fetch_apply(st.unit, st.op, st.dst, g.root_offsets[i], chunk + i * ub, chunk + i * ub);
    heap->signal_store_local(me, att.root_recv_sig.offset + k * 8, 0);

    // Reply leg: fetched values go back root-to-leaf from the same chunk.
    // The peer's ok-to-put stays raised until the reply put has captured the
    // chunk, or the next iteration's contributions could overwrite it.
    const std::uint64_t send_off = att.root_send_sig.offset + k * 8;
    heap->wait_until_all(me, std::span<const std::uint64_t>(&send_off, 1),
                         SymHeapGroup::WaitCond::equals, 0, comm.world().cancel);
    heap->put_nbi(me, g.rank, att.leafbuf.offset + att.tables.leaf_data_off[k] * ub,
                  {chunk, g.root_offsets.size() * ub});
    heap->fence(me, g.rank);
    heap->signal_store_local(me, send_off, 1);
    heap->signal_set(me, g.rank, att.leaf_recv_sig.offset + att.tables.leaf_sig_slot[k] * 8, 1);
    heap->signal_set(me, g.rank, att.leaf_send_sig.offset + att.tables.leaf_sig_slot[k] * 8, 0);
  }

  // Leaf duties: replies arrive on the leaf RecvSig slots.
  sig_offs.clear();
  for (std::size_t k = 0; base + k < sf.root_groups().size(); ++k)
    sig_offs.push_back(att.leaf_recv_sig.offset + k * 8);
  heap->wait_until_all(me, sig_offs, SymHeapGroup::WaitCond::nonzero, 0, comm.world().cancel);
  for (std::size_t k = 0; base + k < sf.root_groups().size(); ++k) {
    const auto& g = sf.root_groups()[base + k];
    const std::byte* chunk =
        heap->region(me) + att.leafbuf.offset + att.leafbuf_chunk_off[k] * ub;
    unpack(st.leafupdate, sf.leaf_index_bound(), g.leaf_pattern, st.unit, ReduceOp::replace,
           chunk, mode_of(comm));
    heap->signal_store_local(me, att.leaf_recv_sig.offset + k * 8, 0);
    heap->signal_set(me, g.rank, att.root_send_sig.offset + att.tables.root_sig_slot[k] * 8, 0);
  }
  release_attachment(st);
}

} // namespace
} // namespace detail

// ---------------------------------------------------------------------------
// public begin/end surface

using detail::OpState;

OpHandle::OpHandle() : st_(std::make_unique<OpState>()) {}
OpHandle::~OpHandle() = default;
OpHandle::OpHandle(OpHandle&&) noexcept = default;
OpHandle& OpHandle::operator=(OpHandle&&) noexcept = default;

OpKind OpHandle::kind() const { return st_->kind; }
ReduceOp OpHandle::op() const { return st_->op; }
const Unit& OpHandle::unit() const { return st_->unit; }
BufferSpace OpHandle::transfer_space() const { return st_->space; }
bool OpHandle::ended() const { return st_->ended; }

namespace {

void require_ready(StarForest& sf, const Unit& unit, ReduceOp op, const char* what) {
  SF_REQUIRE(sf.state() == SfState::set_up,
             std::string(what) + " requires a set-up star forest");
  check_unit_op(unit, op);
}

void require_end(OpHandle& h, OpKind kind, const char* what) {
  auto& st = h.state();
  SF_REQUIRE(st.sf != nullptr, std::string(what) + ": handle was never begun");
  SF_REQUIRE(!st.ended, std::string(what) + ": handle already ended");
  SF_REQUIRE(st.kind == kind, std::string(what) + ": handle belongs to a different operation");
  st.ended = true;
}

} // namespace

OpHandle bcast_begin(StarForest& sf, const Unit& unit, const void* rootdata, void* leafdata,
                     ReduceOp op) {
  require_ready(sf, unit, op, "bcast");
  OpHandle h;
  auto& st = h.state();
  st.sf = &sf;
  st.kind = OpKind::bcast;
  st.unit = unit;
  st.op = op;
  st.src = rootdata;
  st.dst = leafdata;
  detail::begin_common(st, rootdata, static_cast<std::size_t>(sf.nroots()) * unit.bytes());
  if (detail::onesided(sf.comm()))
    detail::begin_root_to_leaf_onesided(st);
  else
    detail::begin_root_to_leaf_twosided(st);
  return h;
}

void bcast_end(OpHandle& h) {
  require_end(h, OpKind::bcast, "bcast_end");
  auto& st = h.state();
  if (detail::onesided(st.sf->comm()))
    detail::end_root_to_leaf_onesided(st);
  else
    detail::end_root_to_leaf_twosided(st);
  detail::end_checksum(st);
}

void bcast(StarForest& sf, const Unit& unit, const void* rootdata, void* leafdata,
           ReduceOp op) {
  OpHandle h = bcast_begin(sf, unit, rootdata, leafdata, op);
  bcast_end(h);
}

OpHandle reduce_begin(StarForest& sf, const Unit& unit, const void* leafdata, void* rootdata,
                      ReduceOp op) {
  require_ready(sf, unit, op, "reduce");
  OpHandle h;
  auto& st = h.state();
  st.sf = &sf;
  st.kind = OpKind::reduce;
  st.unit = unit;
  st.op = op;
  st.src = leafdata;
  st.dst = rootdata;
  detail::begin_common(st, leafdata,
                       static_cast<std::size_t>(sf.leaf_index_bound()) * unit.bytes());
  if (detail::onesided(sf.comm()))
    detail::begin_leaf_to_root_onesided(st);
  else
    detail::begin_leaf_to_root_twosided(st);
  return h;
}

void reduce_end(OpHandle& h) {
  require_end(h, OpKind::reduce, "reduce_end");
  auto& st = h.state();
  if (detail::onesided(st.sf->comm()))
    detail::end_leaf_to_root_onesided(st);
  else
    detail::end_leaf_to_root_twosided(st);
  detail::end_checksum(st);
}

void reduce(StarForest& sf, const Unit& unit, const void* leafdata, void* rootdata,
            ReduceOp op) {
  OpHandle h = reduce_begin(sf, unit, leafdata, rootdata, op);
  reduce_end(h);
}

OpHandle fetch_and_op_begin(StarForest& sf, const Unit& unit, void* rootdata,
                            const void* leafdata, void* leafupdate, ReduceOp op) {
  SF_REQUIRE(op != ReduceOp::replace, "fetch-and-op with replace has no fetch semantics");
  require_ready(sf, unit, op, "fetch_and_op");
  OpHandle h;
  auto& st = h.state();
  st.sf = &sf;
  st.kind = OpKind::fetch_and_op;
  st.unit = unit;
  st.op = op;
  st.src = leafdata;
  st.dst = rootdata;
  st.leafupdate = leafupdate;
  detail::begin_common(st, leafdata,
                       static_cast<std::size_t>(sf.leaf_index_bound()) * unit.bytes());
  if (detail::onesided(sf.comm()))
    detail::begin_fetch_onesided(st);
  else
    detail::begin_fetch_twosided(st);
  return h;
}

void fetch_and_op_end(OpHandle& h) {
  require_end(h, OpKind::fetch_and_op, "fetch_and_op_end");
  auto& st = h.state();
  if (detail::onesided(st.sf->comm()))
    detail::end_fetch_onesided(st);
  else
    detail::end_fetch_twosided(st);
  detail::end_checksum(st);
}

void fetch_and_op(StarForest& sf, const Unit& unit, void* rootdata, const void* leafdata,
                  void* leafupdate, ReduceOp op) {
  OpHandle h = fetch_and_op_begin(sf, unit, rootdata, leafdata, leafupdate, op);
  fetch_and_op_end(h);
}

OpHandle gather_begin(StarForest& sf, const Unit& unit, const void* leafdata,
                      void* multirootdata) {
  require_ready(sf, unit, ReduceOp::replace, "gather");
  StarForest& msf = sf.multi_sf();
  OpHandle h;
  auto& st = h.state();
  st.sf = &msf;
  st.kind = OpKind::gather;
  st.unit = unit;
  st.op = ReduceOp::replace;
  st.src = leafdata;
  st.dst = multirootdata;
  detail::begin_common(st, leafdata,
                       static_cast<std::size_t>(msf.leaf_index_bound()) * unit.bytes());
  if (detail::onesided(msf.comm()))
    detail::begin_leaf_to_root_onesided(st);
  else
    detail::begin_leaf_to_root_twosided(st);
  return h;
}

void gather_end(OpHandle& h) {
  require_end(h, OpKind::gather, "gather_end");
  auto& st = h.state();
  if (detail::onesided(st.sf->comm()))
    detail::end_leaf_to_root_onesided(st);
  else
    detail::end_leaf_to_root_twosided(st);
  detail::end_checksum(st);
}

void gather(StarForest& sf, const Unit& unit, const void* leafdata, void* multirootdata) {
  OpHandle h = gather_begin(sf, unit, leafdata, multirootdata);
  gather_end(h);
}

OpHandle scatter_begin(StarForest& sf, const Unit& unit, const void* multirootdata,
                       void* leafdata) {
  require_ready(sf, unit, ReduceOp::replace, "scatter");
  StarForest& msf = sf.multi_sf();
  OpHandle h;
  auto& st = h.state();
  st.sf = &msf;
  st.kind = OpKind::scatter;
  st.unit = unit;
  st.op = ReduceOp::replace;
  st.src = multirootdata;
  st.dst = leafdata;
  detail::begin_common(st, multirootdata,
                       static_cast<std::size_t>(msf.nroots()) * unit.bytes());
  if (detail::onesided(msf.comm()))
    detail::begin_root_to_leaf_onesided(st);
  else
    detail::begin_root_to_leaf_twosided(st);
  return h;
}

void scatter_end(OpHandle& h) {
  require_end(h, OpKind::scatter, "scatter_end");
  auto& st = h.state();
  if (detail::onesided(st.sf->comm()))
    detail::end_root_to_leaf_onesided(st);
  else
    detail::end_root_to_leaf_twosided(st);
  detail::end_checksum(st);
}

void scatter(StarForest& sf, const Unit& unit, const void* multirootdata, void* leafdata) {
  OpHandle h = scatter_begin(sf, unit, multirootdata, leafdata);
  scatter_end(h);
}

} // namespace sf
