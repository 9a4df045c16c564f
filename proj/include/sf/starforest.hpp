// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The sfcomm authors
#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sf/comm.hpp"
#include "sf/pattern.hpp"

namespace sf {

/// Address of a root vertex: owning rank plus root index on that rank.
struct RootRef {
  int rank = -1;
  std::int64_t offset = -1;
  bool operator==(const RootRef&) const = default;
};

/// One rank's slice of a star-forest graph, as passed to set_graph. An
/// absent `local` list means the connected leaves are 0..nleaves-1.
struct GraphSpec {
  std::int64_t nroots = 0;
  std::int64_t nleaves = 0;
  std::optional<std::vector<std::int64_t>> local;
  std::vector<RootRef> remote;
};

enum class SfState { created, graph_set, set_up };

/// Which two-sided-information construction to run in setup. automatic
/// picks consensus above CommConfig::dense_discovery_threshold ranks.
enum class SetupAlg { automatic, dense, consensus };

/// Derived per-rank neighbor lists. "items" of a root-rank group are leaf
/// ordinals (positions in the leaf arrays); items of a leaf-rank group are
/// local root offsets. Groups are sorted by rank ascending with the local
/// rank, when present, moved to the head of both lists; within a group,
/// edges follow ascending leaf index on the leaf-owning rank. Position i of
/// the two matching groups on either end refers to the same edge.
struct TwoSidedInfo {
  struct Group {
    int rank = -1;
    std::vector<std::int64_t> items;
  };
  std::vector<Group> root_ranks;
  std::vector<Group> leaf_ranks;
  bool self_first = false;
};

/// Distributed star forest: roots own data, connected leaves reference it.
/// The graph is specified one-sidedly by the leaf-owning rank; setup derives
/// the reverse information collectively. Communicating operations live in
/// sf/ops.hpp and require state() == set_up.
class StarForest {
public:
  explicit StarForest(Comm comm);

  StarForest(StarForest&&) noexcept = default;
  StarForest& operator=(StarForest&&) noexcept = default;

  /// Store this rank's graph slice. Validates the forest property (distinct
  /// leaf indices), index signs, rank ranges, and list lengths. Contiguity
  /// of the leaf list is detected and recorded.
  void set_graph(std::int64_t nroots, std::int64_t nleaves,
                 std::optional<std::vector<std::int64_t>> leaf_local,
                 std::vector<RootRef> leaf_remote);
  void set_graph(const GraphSpec& spec);

  /// Collective. Builds TwoSidedInfo with either discovery algorithm (both
  /// produce identical results) and validates every RootRef offset against
  /// the remote rank's nroots.
  void setup(SetupAlg alg = SetupAlg::automatic);

  Comm& comm() { return comm_; }
  const Comm& comm() const { return comm_; }
  SfState state() const { return state_; }
  std::int64_t nroots() const { return nroots_; }
  std::int64_t nleaves() const { return nleaves_; }
  /// True when the connected-leaf indices are exactly 0..nleaves-1.
  bool contiguous_leaves() const { return contiguous_leaves_; }
  const std::optional<std::vector<std::int64_t>>& leaf_local() const { return leaf_local_; }
  const std::vector<RootRef>& leaf_remote() const { return leaf_remote_; }
  /// User leaf index of the ordinal-th connected leaf.
  std::int64_t leaf_index(std::int64_t ordinal) const {
    return leaf_local_ ? (*leaf_local_)[static_cast<std::size_t>(ordinal)] : ordinal;
  }
  /// One past the largest connected leaf index (0 when there are none).
  std::int64_t leaf_index_bound() const { return leaf_bound_; }

  const TwoSidedInfo& two_sided() const;

  /// degree[r] = number of leaves anywhere whose root is (here, r).
  std::vector<std::int64_t> compute_degrees() const;

  /// The derived SF where a root of degree d becomes d consecutive roots of
  /// degree one (zero-degree roots disappear). Built collectively and cached
  /// on first use; gather/scatter run over it.
  StarForest& multi_sf();
  bool has_multi_sf() const { return multi_ != nullptr; }

  /// Communication plans derived at setup: per neighbor group, the index
  /// pattern into the user arrays. Entries align with two_sided() groups.
  struct RootGroupPlan {
    int rank = -1;
    std::vector<std::int64_t> ordinals;
    IndexPattern leaf_pattern; // user leaf indices of this group's edges
  };
  struct LeafGroupPlan {
    int rank = -1;
    std::vector<std::int64_t> root_offsets;
    IndexPattern root_pattern;
  };
  const std::vector<RootGroupPlan>& root_groups() const;
  const std::vector<LeafGroupPlan>& leaf_groups() const;
  bool has_self_edges() const;

  GraphSpec graph_spec() const;

  /// Backend-private per-unit-size state (one-sided staging buffers).
  /// Managed by the operations layer; cleared when the graph changes.
  std::shared_ptr<void>& attachment(std::size_t key) { return attachments_[key]; }

private:
  void require_state(SfState s, const char* what) const;
  friend StarForest identity_sf(Comm, std::int64_t);

  Comm comm_;
  SfState state_ = SfState::created;
  std::int64_t nroots_ = 0;
  std::int64_t nleaves_ = 0;
  std::int64_t leaf_bound_ = 0;
  bool contiguous_leaves_ = true;
  std::optional<std::vector<std::int64_t>> leaf_local_;
  std::vector<RootRef> leaf_remote_;

  TwoSidedInfo info_;
  std::vector<RootGroupPlan> root_groups_;
  std::vector<LeafGroupPlan> leaf_groups_;
  std::unique_ptr<StarForest> multi_;
  std::map<std::size_t, std::shared_ptr<void>> attachments_;
};

/// Collective. Roots of AB are A's roots, leaves are B's leaves; an edge
/// exists where an A leaf and a B root coincide on (rank, index). Both
/// forests must be set up on the same communicator; vertices outside the
/// shared index range contribute no edges.
StarForest compose(StarForest& A, StarForest& B);

/// Collective. Roots of AB are A's roots, leaves are B's *roots* (so every
/// B root must have degree <= 1 and every connected A leaf must also be a
/// connected B leaf).
StarForest compose_inverse(StarForest& A, StarForest& B);

/// Collective. Keep only edges whose root (resp. leaf) is selected, without
/// remapping indices; the result works on the original data buffers.
/// Duplicate selections are ignored. Root selections are validated against
/// nroots; leaf indices only against being nonnegative (the leaf space has
/// no stored upper bound).
StarForest embed_root(StarForest& sf, std::span<const std::int64_t> selected_roots);
StarForest embed_leaf(StarForest& sf, std::span<const std::int64_t> selected_leaves);

/// n local roots, n local leaves, leaf i connected to root i on the same
/// rank. Left/right identity of compose.
StarForest identity_sf(Comm comm, std::int64_t n);

namespace graph_text {

/// Text form of a whole graph, one line per rank:
///   nroots nleaves [local:rank.offset ...]
std::string format(std::span<const GraphSpec> ranks);
std::vector<GraphSpec> parse(std::string_view text);

} // namespace graph_text

} // namespace sf
