// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The sfcomm authors
#include "sf/oracle.hpp"

#include <algorithm>
#include <map>

#include "sf/errors.hpp"

namespace sf::oracle {

GlobalGraph GlobalGraph::from_specs(std::vector<GraphSpec> specs) {
  GlobalGraph g;
  g.nranks = static_cast<int>(specs.size());
  for (int rank = 0; rank < g.nranks; ++rank) {
    const auto& s = specs[static_cast<std::size_t>(rank)];
    for (std::int64_t o = 0; o < s.nleaves; ++o) {
      const auto& r = s.remote[static_cast<std::size_t>(o)];
      const std::int64_t idx = s.local ? (*s.local)[static_cast<std::size_t>(o)] : o;
      g.edges.push_back(Edge{r.rank, r.offset, rank, idx});
    }
  }
  g.specs = std::move(specs);
  return g;
}

GlobalGraph GlobalGraph::transposed() const {
  GlobalGraph t;
  t.nranks = nranks;
  t.specs.resize(static_cast<std::size_t>(nranks));
  for (int r = 0; r < nranks; ++r) {
    // Root space of the transpose is the original leaf space and vice
    // versa; only the sizes matter for the oracle.
    t.specs[static_cast<std::size_t>(r)].nroots = leaf_bound(r);
    t.specs[static_cast<std::size_t>(r)].nleaves = 0;
  }
  for (const auto& e : edges)
    t.edges.push_back(Edge{e.leaf_rank, e.leaf_idx, e.root_rank, e.root_off});
  return t;
}

std::int64_t GlobalGraph::leaf_bound(int rank) const {
  const auto& s = specs[static_cast<std::size_t>(rank)];
  if (!s.local) return s.nleaves;
  std::int64_t bound = 0;
  for (auto v : *s.local) bound = std::max(bound, v + 1);
  return bound;
}

std::int64_t apply(ReduceOp op, std::int64_t current, std::int64_t incoming) {
  switch (op) {
    case ReduceOp::replace: return incoming;
    case ReduceOp::sum: return current + incoming;
    case ReduceOp::prod: return current * incoming;
    case ReduceOp::max: return std::max(current, incoming);
    case ReduceOp::min: return std::min(current, incoming);
    case ReduceOp::land: return (current != 0 && incoming != 0) ? 1 : 0;
    case ReduceOp::lor: return (current != 0 || incoming != 0) ? 1 : 0;
    case ReduceOp::band: return current & incoming;
    case ReduceOp::bor: return current | incoming;
  }
  return 0;
}

void bcast(const GlobalGraph& g, const Data& rootdata, Data& leafdata, ReduceOp op,
           std::int64_t blocklen) {
  for (const auto& e : g.edges) {
    for (std::int64_t b = 0; b < blocklen; ++b) {
      auto& slot =
          leafdata[static_cast<std::size_t>(e.leaf_rank)][static_cast<std::size_t>(
              e.leaf_idx * blocklen + b)];
      slot = apply(op, slot,
                   rootdata[static_cast<std::size_t>(e.root_rank)][static_cast<std::size_t>(
                       e.root_off * blocklen + b)]);
    }
  }
}

void reduce(const GlobalGraph& g, const Data& leafdata, Data& rootdata, ReduceOp op,
            std::int64_t blocklen) {
  // Fold order matches the library's deterministic mode: per root, the
  // root's own rank first, then ascending leaf rank, then leaf index.
  auto edges = g.edges;
  std::stable_sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
    auto key = [](const Edge& e) {
      const bool self = e.leaf_rank == e.root_rank;
      return std::tuple(e.root_rank, e.root_off, self ? -1 : e.leaf_rank, e.leaf_idx);
    };
    return key(a) < key(b);
  });
  for (const auto& e : edges) {
    for (std::int64_t b = 0; b < blocklen; ++b) {
      auto& slot =
          rootdata[static_cast<std::size_t>(e.root_rank)][static_cast<std::size_t>(
              e.root_off * blocklen + b)];
      slot = apply(op, slot,
                   leafdata[static_cast<std::size_t>(e.leaf_rank)][static_cast<std::size_t>(
                       e.leaf_idx * blocklen + b)]);
    }
  }
}

std::vector<std::vector<std::int64_t>> degrees(const GlobalGraph& g) {
  std::vector<std::vector<std::int64_t>> deg(static_cast<std::size_t>(g.nranks));
  for (int r = 0; r < g.nranks; ++r)
    deg[static_cast<std::size_t>(r)].assign(static_cast<std::size_t>(g.nroots(r)), 0);
  for (const auto& e : g.edges)
    ++deg[static_cast<std::size_t>(e.root_rank)][static_cast<std::size_t>(e.root_off)];
  return deg;
}

namespace {

// Multiroot slot of every edge under the deterministic gather order.
std::vector<std::pair<Edge, std::pair<int, std::int64_t>>> slot_assignment(
    const GlobalGraph& g) {
  auto deg = degrees(g);
  std::vector<std::vector<std::int64_t>> next(static_cast<std::size_t>(g.nranks));
  for (int r = 0; r < g.nranks; ++r) {
    auto& n = next[static_cast<std::size_t>(r)];
    n.assign(deg[static_cast<std::size_t>(r)].size() + 1, 0);
    for (std::size_t i = 0; i < deg[static_cast<std::size_t>(r)].size(); ++i)
      n[i + 1] = n[i] + deg[static_cast<std::size_t>(r)][i];
  }
  auto edges = g.edges;
  std::stable_sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
    auto key = [](const Edge& e) {
      const bool self = e.leaf_rank == e.root_rank;
      return std::tuple(e.root_rank, e.root_off, self ? -1 : e.leaf_rank, e.leaf_idx);
    };
    return key(a) < key(b);
  });
  std::vector<std::pair<Edge, std::pair<int, std::int64_t>>> out;
  for (const auto& e : edges) {
    auto& n = next[static_cast<std::size_t>(e.root_rank)];
    out.push_back({e, {e.root_rank, n[static_cast<std::size_t>(e.root_off)]}});
    ++n[static_cast<std::size_t>(e.root_off)];
  }
  return out;
}

} // namespace

void gather(const GlobalGraph& g, const Data& leafdata, Data& multirootdata,
            std::int64_t blocklen) {
  for (const auto& [e, slot] : slot_assignment(g)) {
    for (std::int64_t b = 0; b < blocklen; ++b)
      multirootdata[static_cast<std::size_t>(slot.first)][static_cast<std::size_t>(
          slot.second * blocklen + b)] =
          leafdata[static_cast<std::size_t>(e.leaf_rank)][static_cast<std::size_t>(
              e.leaf_idx * blocklen + b)];
  }
}

void scatter(const GlobalGraph& g, const Data& multirootdata, Data& leafdata,
             std::int64_t blocklen) {
  for (const auto& [e, slot] : slot_assignment(g)) {
    for (std::int64_t b = 0; b < blocklen; ++b)
      leafdata[static_cast<std::size_t>(e.leaf_rank)][static_cast<std::size_t>(
          e.leaf_idx * blocklen + b)] =
          multirootdata[static_cast<std::size_t>(slot.first)][static_cast<std::size_t>(
              slot.second * blocklen + b)];
  }
}

void fetch_and_op(const GlobalGraph& g, Data& rootdata, const Data& leafdata, Data& leafupdate,
                  ReduceOp op, std::int64_t blocklen) {
  SF_REQUIRE(op != ReduceOp::replace, "oracle fetch_and_op: replace is undefined");
  auto edges = g.edges;
  std::stable_sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
    auto key = [](const Edge& e) {
      const bool self = e.leaf_rank == e.root_rank;
      return std::tuple(e.root_rank, e.root_off, self ? -1 : e.leaf_rank, e.leaf_idx);
    };
    return key(a) < key(b);
  });
  for (const auto& e : edges) {
    for (std::int64_t b = 0; b < blocklen; ++b) {
      auto& root = rootdata[static_cast<std::size_t>(e.root_rank)][static_cast<std::size_t>(
          e.root_off * blocklen + b)];
      leafupdate[static_cast<std::size_t>(e.leaf_rank)][static_cast<std::size_t>(
          e.leaf_idx * blocklen + b)] = root;
      root = apply(op, root,
                   leafdata[static_cast<std::size_t>(e.leaf_rank)][static_cast<std::size_t>(
                       e.leaf_idx * blocklen + b)]);
    }
  }
}

} // namespace sf::oracle
