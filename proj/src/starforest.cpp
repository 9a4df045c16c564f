// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The sfcomm authors
#include "sf/starforest.hpp"

#include <algorithm>
#include <array>
#include <cstring>
#include <map>
#include <numeric>
#include <sstream>

#include "sf/detail/world.hpp"
#include "sf/exchange.hpp"
#include "sf/ops.hpp"

namespace sf {

StarForest::StarForest(Comm comm) : comm_(comm) {
  SF_REQUIRE(comm.valid(), "star forest needs a valid communicator");
}

void StarForest::require_state(SfState s, const char* what) const {
  if (state_ == s) return;
  static constexpr const char* names[] = {"created", "graph-set", "set-up"};
  throw Error(std::string(what) + " requires a " + names[static_cast<int>(s)] +
              " star forest (state is " + names[static_cast<int>(state_)] + ")");
}

void StarForest::set_graph(std::int64_t nroots, std::int64_t nleaves,
                           std::optional<std::vector<std::int64_t>> leaf_local,
                           std::vector<RootRef> leaf_remote) {
  SF_REQUIRE(state_ == SfState::created || state_ == SfState::graph_set,
             "set_graph requires a created or graph-set star forest");
  SF_REQUIRE(nroots >= 0 && nleaves >= 0, "set_graph: negative root or leaf count");
  if (leaf_local)
    SF_REQUIRE(static_cast<std::int64_t>(leaf_local->size()) == nleaves,
               "set_graph: leaf_local length does not match nleaves");
  SF_REQUIRE(static_cast<std::int64_t>(leaf_remote.size()) == nleaves,
             "set_graph: leaf_remote length does not match nleaves");

  std::int64_t bound = 0;
  bool contiguous = true;
  if (leaf_local) {
    std::vector<std::int64_t> sorted(*leaf_local);
    std::sort(sorted.begin(), sorted.end());
    for (std::size_t i = 0; i < sorted.size(); ++i) {
      SF_REQUIRE(sorted[i] >= 0, "set_graph: negative leaf index");
      SF_REQUIRE(i == 0 || sorted[i] != sorted[i - 1],
                 "set_graph: duplicate leaf index " + std::to_string(sorted[i]) +
                     " violates the forest property");
    }
    bound = sorted.empty() ? 0 : sorted.back() + 1;
    for (std::int64_t i = 0; i < nleaves; ++i)
      contiguous = contiguous && (*leaf_local)[static_cast<std::size_t>(i)] == i;
  } else {
    bound = nleaves;
  }
  for (const auto& r : leaf_remote) {
    SF_REQUIRE(r.rank >= 0 && r.rank < comm_.size(),
               "set_graph: root rank " + std::to_string(r.rank) + " outside communicator");
    SF_REQUIRE(r.offset >= 0, "set_graph: negative root offset");
  }

  nroots_ = nroots;
  nleaves_ = nleaves;
  leaf_bound_ = bound;
  contiguous_leaves_ = contiguous;
  leaf_local_ = std::move(leaf_local);
  leaf_remote_ = std::move(leaf_remote);
  info_ = {};
  root_groups_.clear();
  leaf_groups_.clear();
  multi_.reset();
  attachments_.clear();
  state_ = SfState::graph_set;
}

void StarForest::set_graph(const GraphSpec& spec) {
  set_graph(spec.nroots, spec.nleaves, spec.local, spec.remote);
}

void StarForest::setup(SetupAlg alg) {
  require_state(SfState::graph_set, "setup");
  const int me = comm_.rank();

  // Edge order within a neighbor pair: ascending leaf index on this rank.
  std::vector<std::int64_t> order(static_cast<std::size_t>(nleaves_));
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::int64_t a, std::int64_t b) { return leaf_index(a) < leaf_index(b); });

  std::map<int, std::vector<std::int64_t>> ordinals_by_rank;
  for (std::int64_t o : order)
    ordinals_by_rank[leaf_remote_[static_cast<std::size_t>(o)].rank].push_back(o);

  std::vector<RankPayload> targets;
  targets.reserve(ordinals_by_rank.size());
  for (const auto& [rank, ords] : ordinals_by_rank) {
    std::vector<std::int64_t> offsets;
    offsets.reserve(ords.size());
    for (std::int64_t o : ords) offsets.push_back(leaf_remote_[static_cast<std::size_t>(o)].offset);
    RankPayload rp;
    rp.rank = rank;
    rp.payload.resize(offsets.size() * sizeof(std::int64_t));
    std::memcpy(rp.payload.data(), offsets.data(), rp.payload.size());
    targets.push_back(std::move(rp));
  }

  if (alg == SetupAlg::automatic)
    alg = comm_.size() > comm_.config().dense_discovery_threshold ? SetupAlg::consensus
                                                                  : SetupAlg::dense;
  auto replies = alg == SetupAlg::dense ? sparse_exchange_dense(comm_, targets)
                                        : sparse_exchange_consensus(comm_, targets);

  TwoSidedInfo info;
  for (const auto& [rank, ords] : ordinals_by_rank)
    info.root_ranks.push_back(TwoSidedInfo::Group{rank, ords});
  for (auto& r : replies) {
    SF_REQUIRE(r.payload.size() % sizeof(std::int64_t) == 0, "malformed setup payload");
    std::vector<std::int64_t> offsets(r.payload.size() / sizeof(std::int64_t));
    std::memcpy(offsets.data(), r.payload.data(), r.payload.size());
    for (std::int64_t off : offsets)
      SF_REQUIRE(off < nroots_, "setup: leaf on rank " + std::to_string(r.rank) +
                                    " references root offset " + std::to_string(off) +
                                    " but this rank has only " + std::to_string(nroots_) +
                                    " roots");
    info.leaf_ranks.push_back(TwoSidedInfo::Group{r.rank, std::move(offsets)});
  }
  // Maps and the exchange return ascending rank order; move self to the head.
  auto self_to_head = [me](std::vector<TwoSidedInfo::Group>& groups) {
    auto it = std::find_if(groups.begin(), groups.end(),
                           [me](const TwoSidedInfo::Group& g) { return g.rank == me; });
    if (it != groups.end()) std::rotate(groups.begin(), it, it + 1);
  };
  self_to_head(info.root_ranks);
  self_to_head(info.leaf_ranks);
  info.self_first = !info.root_ranks.empty() && info.root_ranks.front().rank == me;

  root_groups_.clear();
  for (const auto& g : info.root_ranks) {
    RootGroupPlan plan;
    plan.rank = g.rank;
    plan.ordinals = g.items;
    std::vector<std::int64_t> leaf_idx;
    leaf_idx.reserve(g.items.size());
    for (std::int64_t o : g.items) leaf_idx.push_back(leaf_index(o));
    plan.leaf_pattern = IndexPattern::analyze(leaf_idx);
    root_groups_.push_back(std::move(plan));
  }
  leaf_groups_.clear();
  for (const auto& g : info.leaf_ranks) {
    LeafGroupPlan plan;
    plan.rank = g.rank;
    plan.root_offsets = g.items;
    plan.root_pattern = IndexPattern::analyze(g.items);
    leaf_groups_.push_back(std::move(plan));
  }

  info_ = std::move(info);
  state_ = SfState::set_up;
}

const TwoSidedInfo& StarForest::two_sided() const {
  require_state(SfState::set_up, "two_sided");
  return info_;
}

const std::vector<StarForest::RootGroupPlan>& StarForest::root_groups() const {
  require_state(SfState::set_up, "root_groups");
  return root_groups_;
}

const std::vector<StarForest::LeafGroupPlan>& StarForest::leaf_groups() const {
  require_state(SfState::set_up, "leaf_groups");
  return leaf_groups_;
}

bool StarForest::has_self_edges() const {
  require_state(SfState::set_up, "has_self_edges");
  return info_.self_first;
}

std::vector<std::int64_t> StarForest::compute_degrees() const {
  require_state(SfState::set_up, "compute_degrees");
  std::vector<std::int64_t> degree(static_cast<std::size_t>(nroots_), 0);
  for (const auto& g : info_.leaf_ranks)
    for (std::int64_t off : g.items) ++degree[static_cast<std::size_t>(off)];
  return degree;
}

StarForest& StarForest::multi_sf() {
  require_state(SfState::set_up, "multi_sf");
  if (multi_) return *multi_;

  const int me = comm_.rank();
  const auto degrees = compute_degrees();
  std::vector<std::int64_t> next(degrees.size());
  std::exclusive_scan(degrees.begin(), degrees.end(), next.begin(), std::int64_t{0});
  const std::int64_t multi_nroots =
      std::accumulate(degrees.begin(), degrees.end(), std::int64_t{0});

  // Assign one new root per incoming edge, walking neighbor groups in their
  // stored order (self first, then ascending rank; edge order inside).
  // This realizes the deterministic per-root gather order.
  const std::uint64_t seq = comm_.next_coll_seq();
  const Tag tag = tags::make(tags::Phase::setup, seq);
  std::vector<std::int64_t> self_slots;
  std::vector<Request> sends;
  std::vector<std::vector<std::int64_t>> slot_messages;
  slot_messages.reserve(info_.leaf_ranks.size());
  for (const auto& g : info_.leaf_ranks) {
    std::vector<std::int64_t> slots;
    slots.reserve(g.items.size());
    for (std::int64_t off : g.items) slots.push_back(next[static_cast<std::size_t>(off)]++);
    if (g.rank == me) {
      self_slots = std::move(slots);
    } else {
      slot_messages.push_back(std::move(slots));
      sends.push_back(comm_.isend_vals<std::int64_t>(g.rank, tag, slot_messages.back()));
    }
  }

  std::vector<RootRef> multi_remote(static_cast<std::size_t>(nleaves_));
  for (const auto& g : info_.root_ranks) {
    std::vector<std::int64_t> slots;
    if (g.rank == me)
      slots = self_slots;
    else
      slots = comm_.recv_vals<std::int64_t>(g.rank, tag);
    SF_REQUIRE(slots.size() == g.items.size(), "multi-sf slot exchange length mismatch");
    for (std::size_t i = 0; i < slots.size(); ++i)
      multi_remote[static_cast<std::size_t>(g.items[i])] = RootRef{g.rank, slots[i]};
  }
  comm_.wait_all(sends);

  multi_ = std::make_unique<StarForest>(comm_);
  multi_->set_graph(multi_nroots, nleaves_, leaf_local_, std::move(multi_remote));
  multi_->setup();
  return *multi_;
}

GraphSpec StarForest::graph_spec() const {
  GraphSpec s;
  s.nroots = nroots_;
  s.nleaves = nleaves_;
  s.local = leaf_local_;
  s.remote = leaf_remote_;
  return s;
}

namespace {

struct EdgeTriple {
  int root_rank;
  std::int64_t root_off;
  std::int64_t leaf_idx;
};

std::vector<std::int64_t> serialize_edges(const StarForest& sf) {
  std::vector<std::int64_t> out;
  out.reserve(static_cast<std::size_t>(sf.nleaves()) * 3);
  for (std::int64_t o = 0; o < sf.nleaves(); ++o) {
    const auto& r = sf.leaf_remote()[static_cast<std::size_t>(o)];
    out.push_back(r.rank);
    out.push_back(r.offset);
    out.push_back(sf.leaf_index(o));
  }
  return out;
}

void check_same_comm(StarForest& A, StarForest& B, const char* what) {
  SF_REQUIRE(&A.comm().world() == &B.comm().world(),
             std::string(what) + ": operands must live on the same communicator");
}

// Coordinator-gathered composition. Rank 0 joins the two edge lists and
// scatters each rank its slice of the result; status != 0 carries a
// precondition failure to every rank so they throw consistently.
StarForest compose_common(StarForest& A, StarForest& B, bool inverse) {
  check_same_comm(A, B, inverse ? "compose_inverse" : "compose");
  Comm& comm = A.comm();
  const int me = comm.rank();
  const std::uint64_t seq = comm.next_coll_seq();
  const Tag up_a = tags::make(tags::Phase::setup, seq * 3);
  const Tag up_b = tags::make(tags::Phase::setup, seq * 3 + 1);
  const Tag down = tags::make(tags::Phase::setup, seq * 3 + 2);

  if (inverse) {
    // Every B root may have degree at most one; agree on the verdict
    // globally so all ranks fail together.
    const auto deg = B.compute_degrees();
    std::int64_t local_max = 0;
    for (auto d : deg) local_max = std::max(local_max, d);
    const auto global_max = comm.allreduce_max(std::span<const std::int64_t>(&local_max, 1))[0];
    SF_REQUIRE(global_max <= 1, "compose_inverse: a B root has degree > 1");
  }

  auto edges_a = serialize_edges(A);
  auto edges_b = serialize_edges(B);
  std::vector<Request> sends;
  if (me != 0) {
    sends.push_back(comm.isend_vals<std::int64_t>(0, up_a, edges_a));
    sends.push_back(comm.isend_vals<std::int64_t>(0, up_b, edges_b));
  }

  std::vector<std::int64_t> reply;
  if (me == 0) {
    const int n = comm.size();
    // (rank, index) -> assigned value maps for the join
    std::map<std::pair<int, std::int64_t>, std::pair<int, std::int64_t>> a_leaf_to_root;
    std::map<std::pair<int, std::int64_t>, std::pair<int, std::int64_t>> b_map;
    std::vector<std::vector<std::array<std::int64_t, 3>>> result(
        static_cast<std::size_t>(n)); // per leaf-owner: (leaf_idx, root_rank, root_off)
    std::vector<std::vector<std::int64_t>> all_b(static_cast<std::size_t>(n));

    for (int src = 0; src < n; ++src) {
      auto ea = src == 0 ? edges_a : comm.recv_vals<std::int64_t>(src, up_a);
      auto eb = src == 0 ? edges_b : comm.recv_vals<std::int64_t>(src, up_b);
      for (std::size_t i = 0; i < ea.size(); i += 3)
        a_leaf_to_root[{src, ea[i + 2]}] = {static_cast<int>(ea[i]), ea[i + 1]};
      all_b[static_cast<std::size_t>(src)] = std::move(eb);
    }

    bool overlap_error = false;
    for (int src = 0; src < n && !overlap_error; ++src) {
      const auto& eb = all_b[static_cast<std::size_t>(src)];
      for (std::size_t i = 0; i < eb.size(); i += 3) {
        const int b_root_rank = static_cast<int>(eb[i]);
        const std::int64_t b_root_off = eb[i + 1];
        const std::int64_t b_leaf_idx = eb[i + 2];
        if (!inverse) {
          // AB edge where an A leaf coincides with this B root.
          auto it = a_leaf_to_root.find({b_root_rank, b_root_off});
          if (it == a_leaf_to_root.end()) continue; // outside the overlap: no edge
          result[static_cast<std::size_t>(src)].push_back(
              {b_leaf_idx, it->second.first, it->second.second});
        } else {
          // Invert B: its leaf must be covered; AB leaf is the B root.
          auto it = a_leaf_to_root.find({src, b_leaf_idx});
          if (it == a_leaf_to_root.end()) {
            // A has no leaf here; fine only if A's leaves are still all
            // covered by B's leaves, which we check from A's side below.
            continue;
          }
          result[static_cast<std::size_t>(b_root_rank)].push_back(
              {b_root_off, it->second.first, it->second.second});
          b_map[{src, b_leaf_idx}] = {b_root_rank, b_root_off};
        }
      }
    }
    if (inverse) {
      // Complete-overlap precondition: every A leaf must be a B leaf.
      for (const auto& [key, unused] : a_leaf_to_root) {
        (void)unused;
        if (!b_map.count(key)) {
          overlap_error = true;
          break;
        }
      }
    }

    for (int dest = 0; dest < n; ++dest) {
      auto& rs = result[static_cast<std::size_t>(dest)];
      std::sort(rs.begin(), rs.end());
      std::vector<std::int64_t> msg;
      msg.push_back(overlap_error ? 1 : 0);
      for (const auto& e : rs) {
        msg.push_back(e[0]);
        msg.push_back(e[1]);
        msg.push_back(e[2]);
      }
      if (dest == 0)
        reply = std::move(msg);
      else
        comm.isend_vals<std::int64_t>(dest, down, msg);
    }
  } else {
    reply = comm.recv_vals<std::int64_t>(0, down);
  }
  comm.wait_all(sends);

  SF_REQUIRE(reply[0] == 0,
             "compose_inverse: A's leaves are not completely overlapped by B's leaves");
  std::vector<std::int64_t> local;
  std::vector<RootRef> remote;
  for (std::size_t i = 1; i < reply.size(); i += 3) {
    local.push_back(reply[i]);
    remote.push_back(RootRef{static_cast<int>(reply[i + 1]), reply[i + 2]});
  }
  StarForest ab(comm);
  ab.set_graph(A.nroots(), static_cast<std::int64_t>(local.size()), std::move(local),
               std::move(remote));
  ab.setup();
  return ab;
}

} // namespace

StarForest compose(StarForest& A, StarForest& B) {
  A.two_sided();
  B.two_sided(); // both must be set up
  return compose_common(A, B, false);
}

StarForest compose_inverse(StarForest& A, StarForest& B) {
  A.two_sided();
  B.two_sided();
  return compose_common(A, B, true);
}

StarForest embed_root(StarForest& sf, std::span<const std::int64_t> selected_roots) {
  sf.two_sided();
  std::vector<std::int64_t> root_flags(static_cast<std::size_t>(sf.nroots()), 0);
  for (std::int64_t r : selected_roots) {
    SF_REQUIRE(r >= 0 && r < sf.nroots(), "embed_root: selected root out of range");
    root_flags[static_cast<std::size_t>(r)] = 1; // duplicates collapse silently
  }
  // The leaf side learns each edge's verdict straight through the forest.
  std::vector<std::int64_t> leaf_flags(static_cast<std::size_t>(sf.leaf_index_bound()), 0);
  bcast(sf, unit_of<std::int64_t>(), root_flags.data(), leaf_flags.data(), ReduceOp::replace);

  std::vector<std::int64_t> local;
  std::vector<RootRef> remote;
  for (std::int64_t o = 0; o < sf.nleaves(); ++o) {
    const std::int64_t idx = sf.leaf_index(o);
    if (leaf_flags[static_cast<std::size_t>(idx)] == 0) continue;
    local.push_back(idx);
    remote.push_back(sf.leaf_remote()[static_cast<std::size_t>(o)]);
  }
  StarForest esf(sf.comm());
  esf.set_graph(sf.nroots(), static_cast<std::int64_t>(local.size()), std::move(local),
                std::move(remote));
  esf.setup();
  return esf;
}

StarForest embed_leaf(StarForest& sf, std::span<const std::int64_t> selected_leaves) {
  sf.two_sided();
  std::vector<std::int64_t> sel(selected_leaves.begin(), selected_leaves.end());
  for (std::int64_t l : sel) SF_REQUIRE(l >= 0, "embed_leaf: selected leaf index is negative");
  std::sort(sel.begin(), sel.end());
  sel.erase(std::unique(sel.begin(), sel.end()), sel.end());

  std::vector<std::int64_t> local;
  std::vector<RootRef> remote;
  for (std::int64_t o = 0; o < sf.nleaves(); ++o) {
    const std::int64_t idx = sf.leaf_index(o);
    if (!std::binary_search(sel.begin(), sel.end(), idx)) continue;
    local.push_back(idx);
    remote.push_back(sf.leaf_remote()[static_cast<std::size_t>(o)]);
  }
  StarForest esf(sf.comm());
  esf.set_graph(sf.nroots(), static_cast<std::int64_t>(local.size()), std::move(local),
                std::move(remote));
  esf.setup();
  return esf;
}

StarForest identity_sf(Comm comm, std::int64_t n) {
  StarForest sf(comm);
  std::vector<RootRef> remote(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i)
    remote[static_cast<std::size_t>(i)] = RootRef{comm.rank(), i};
  sf.set_graph(n, n, std::nullopt, std::move(remote));
  return sf;
}

namespace graph_text {

std::string format(std::span<const GraphSpec> ranks) {
  std::ostringstream out;
  for (const auto& spec : ranks) {
    out << spec.nroots << ' ' << spec.nleaves;
    for (std::int64_t o = 0; o < spec.nleaves; ++o) {
      const std::int64_t idx = spec.local ? (*spec.local)[static_cast<std::size_t>(o)] : o;
      const auto& r = spec.remote[static_cast<std::size_t>(o)];
      out << ' ' << idx << ':' << r.rank << '.' << r.offset;
    }
    out << '\n';
  }
  return out.str();
}

std::vector<GraphSpec> parse(std::string_view text) {
  std::vector<GraphSpec> out;
  std::istringstream lines{std::string(text)};
  std::string line;
  while (std::getline(lines, line)) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream in(line);
    GraphSpec spec;
    SF_REQUIRE(static_cast<bool>(in >> spec.nroots >> spec.nleaves),
               "graph text: expected 'nroots nleaves'");
    std::vector<std::int64_t> local;
    for (std::int64_t i = 0; i < spec.nleaves; ++i) {
      std::int64_t idx = 0, off = 0;
      int rank = 0;
      char c1 = 0, c2 = 0;
      SF_REQUIRE(static_cast<bool>(in >> idx >> c1 >> rank >> c2 >> off) && c1 == ':' &&
                     c2 == '.',
                 "graph text: expected 'local:rank.offset' triple");
      local.push_back(idx);
      spec.remote.push_back(RootRef{rank, off});
    }
    spec.local = std::move(local);
    out.push_back(std::move(spec));
  }
  return out;
}

} // namespace graph_text

} // namespace sf
