// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The sfcomm authors
#include <doctest.h>

#include <algorithm>
#include <map>
#include <set>

#include "sf/harness.hpp"
#include "sf/oracle.hpp"
#include "sf/ops.hpp"

using namespace sf;

namespace {

// The three-rank worked example used throughout: rank 0 owns roots
// {11,12,13}, rank 1 {21,22,23,24}, rank 2 {31,32}; leaves are labelled
// 110..140, 210..240, 310..330 with leaf 230 isolated.
constexpr const char* kWorkedExample =
    "3 4 0:1.2 1:1.0 2:1.0 3:0.2\n"
    "4 3 0:2.0 1:0.0 3:2.1\n"
    "2 3 0:0.0 1:1.0 2:1.3\n";

std::vector<GraphSpec> worked_example() { return graph_text::parse(kWorkedExample); }

RunConfig cfg3() {
  RunConfig cfg;
  cfg.nranks = 3;
  cfg.timeout_s = 20.0;
  return cfg;
}

using Groups = std::vector<std::pair<int, std::vector<std::int64_t>>>;

Groups groups_of(const std::vector<TwoSidedInfo::Group>& gs) {
  Groups out;
  for (const auto& g : gs) out.push_back({g.rank, g.items});
  return out;
}

using LocalEdges = std::multiset<std::tuple<int, std::int64_t, std::int64_t>>;

LocalEdges edge_multiset_of(const StarForest& sf) {
  LocalEdges out;
  for (std::int64_t o = 0; o < sf.nleaves(); ++o) {
    const auto& r = sf.leaf_remote()[static_cast<std::size_t>(o)];
    out.insert({r.rank, r.offset, sf.leaf_index(o)});
  }
  return out;
}

std::multiset<std::tuple<int, std::int64_t, int, std::int64_t>> edge_multiset(
    const std::vector<GraphSpec>& specs) {
  std::multiset<std::tuple<int, std::int64_t, int, std::int64_t>> out;
  const auto g = oracle::GlobalGraph::from_specs(specs);
  for (const auto& e : g.edges) out.insert({e.root_rank, e.root_off, e.leaf_rank, e.leaf_idx});
  return out;
}

} // namespace

TEST_CASE("create yields independent forests in the created state") {
  RunConfig cfg;
  cfg.nranks = 1;
  run_ranks(cfg, [](Comm& c) {
    StarForest a(c), b(c);
    CHECK(a.state() == SfState::created);
    CHECK(b.state() == SfState::created);
    a.set_graph(1, 0, std::nullopt, {});
    CHECK(a.state() == SfState::graph_set);
    CHECK(b.state() == SfState::created);
  });
}

TEST_CASE("set_graph accepts the worked example and validates its shape") {
  const auto specs = worked_example();
  REQUIRE(specs.size() == 3);
  run_ranks(cfg3(), [&](Comm& c) {
    StarForest sf(c);
    sf.set_graph(specs[static_cast<std::size_t>(c.rank())]);
    CHECK(sf.state() == SfState::graph_set);
    if (c.rank() == 0) {
      CHECK(sf.nroots() == 3);
      CHECK(sf.nleaves() == 4);
      CHECK(sf.contiguous_leaves());
    }
    if (c.rank() == 1) {
      CHECK(sf.nroots() == 4);
      CHECK(sf.nleaves() == 3);
      CHECK_FALSE(sf.contiguous_leaves()); // leaf index 2 is isolated
      CHECK(sf.leaf_index_bound() == 4);
    }
  });
}

TEST_CASE("set_graph rejects malformed graphs") {
  RunConfig cfg;
  cfg.nranks = 1;
  run_ranks(cfg, [](Comm& c) {
    StarForest sf(c);
    // duplicate leaf index violates the forest property
    CHECK_THROWS_WITH_AS(
        sf.set_graph(1, 2, std::vector<std::int64_t>{0, 0}, {RootRef{0, 0}, RootRef{0, 0}}),
        doctest::Contains("forest property"), Error);
    CHECK_THROWS_AS(sf.set_graph(1, 1, std::vector<std::int64_t>{-1}, {RootRef{0, 0}}), Error);
    CHECK_THROWS_AS(sf.set_graph(1, 1, std::nullopt, {RootRef{5, 0}}), Error); // bad rank
    CHECK_THROWS_AS(sf.set_graph(1, 2, std::vector<std::int64_t>{0}, // length mismatch
                                 {RootRef{0, 0}, RootRef{0, 0}}),
                    Error);
    CHECK_THROWS_AS(sf.set_graph(-1, 0, std::nullopt, {}), Error);
  });
}

TEST_CASE("operations require the right lifecycle state") {
  RunConfig cfg;
  cfg.nranks = 1;
  run_ranks(cfg, [](Comm& c) {
    StarForest sf(c);
    CHECK_THROWS_AS(sf.setup(), Error); // not graph-set
    sf.set_graph(1, 1, std::nullopt, {RootRef{0, 0}});
    CHECK_THROWS_AS((void)sf.two_sided(), Error); // not set-up
    std::int64_t root = 1, leaf = 0;
    CHECK_THROWS_AS(bcast(sf, unit_of<std::int64_t>(), &root, &leaf, ReduceOp::replace),
                    Error);
    sf.setup();
    CHECK(sf.state() == SfState::set_up);
    CHECK_THROWS_AS(sf.setup(), Error); // second setup
  });
}

TEST_CASE("setup derives the worked example's two-sided information") {
  const auto specs = worked_example();
  auto infos = run_ranks(cfg3(), [&](Comm& c) {
    StarForest sf(c);
    sf.set_graph(specs[static_cast<std::size_t>(c.rank())]);
    sf.setup(c.rank() % 2 == 0 ? SetupAlg::dense : SetupAlg::consensus);
    return std::pair(groups_of(sf.two_sided().root_ranks),
                     groups_of(sf.two_sided().leaf_ranks));
  });

  // rank 1: ordinals into its leaf arrays, grouped per root rank
  CHECK(infos[1].first == Groups{{0, {1}}, {2, {0, 2}}});
  CHECK(infos[1].second == Groups{{0, {2, 0, 0}}, {2, {0, 3}}});
  // rank 0 has a self edge (leaf 140 -> root 13): self leads both lists
  CHECK(infos[0].first == Groups{{0, {3}}, {1, {0, 1, 2}}});
  CHECK(infos[0].second == Groups{{0, {2}}, {1, {0}}, {2, {0}}});
  CHECK(infos[2].first == Groups{{0, {0}}, {1, {1, 2}}});
  // roots 31 and 32 both collect their single leaf from rank 1
  CHECK(infos[2].second == Groups{{1, {0, 1}}});
}

TEST_CASE("self-only forests put the local rank first in both lists") {
  RunConfig cfg;
  cfg.nranks = 2;
  run_ranks(cfg, [](Comm& c) {
    StarForest sf(c);
    sf.set_graph(2, 2, std::nullopt, {RootRef{c.rank(), 1}, RootRef{c.rank(), 0}});
    sf.setup();
    CHECK(sf.two_sided().self_first);
    REQUIRE(sf.two_sided().root_ranks.size() == 1);
    CHECK(sf.two_sided().root_ranks[0].rank == c.rank());
    CHECK(sf.two_sided().leaf_ranks[0].rank == c.rank());
  });
}

TEST_CASE("setup validates root offsets against the remote root count") {
  RunConfig cfg;
  cfg.nranks = 2;
  cfg.timeout_s = 5.0;
  try {
    run_ranks(cfg, [](Comm& c) {
      StarForest sf(c);
      if (c.rank() == 0)
        sf.set_graph(1, 1, std::nullopt, {RootRef{1, 7}}); // rank 1 has only 2 roots
      else
        sf.set_graph(2, 0, std::nullopt, {});
      sf.setup();
    });
    FAIL("expected offset validation to fire");
  } catch (const HarnessError& e) {
    CHECK(std::string(e.what()).find("root offset") != std::string::npos);
  }
}

TEST_CASE("compute_degrees counts global leaves per local root") {
  const auto specs = worked_example();
  auto degrees = run_ranks(cfg3(), [&](Comm& c) {
    StarForest sf(c);
    sf.set_graph(specs[static_cast<std::size_t>(c.rank())]);
    sf.setup();
    return sf.compute_degrees();
  });
  CHECK(degrees[0] == std::vector<std::int64_t>{2, 0, 1});
  CHECK(degrees[1] == std::vector<std::int64_t>{3, 0, 1, 1});
  CHECK(degrees[2] == std::vector<std::int64_t>{1, 1});
}

TEST_CASE("an edge-free forest has all-zero degrees") {
  RunConfig cfg;
  cfg.nranks = 2;
  auto degrees = run_ranks(cfg, [](Comm& c) {
    StarForest sf(c);
    sf.set_graph(3, 0, std::nullopt, {});
    sf.setup();
    return sf.compute_degrees();
  });
  CHECK(degrees[0] == std::vector<std::int64_t>{0, 0, 0});
  CHECK(degrees[1] == std::vector<std::int64_t>{0, 0, 0});
}

TEST_CASE("multi-sf expands roots by degree") {
  const auto specs = worked_example();
  auto got = run_ranks(cfg3(), [&](Comm& c) {
    StarForest sf(c);
    sf.set_graph(specs[static_cast<std::size_t>(c.rank())]);
    sf.setup();
    auto& m = sf.multi_sf();
    auto deg = m.compute_degrees();
    const bool all_one =
        std::all_of(deg.begin(), deg.end(), [](std::int64_t d) { return d <= 1; });
    return std::tuple(m.nroots(), m.nleaves(), all_one);
  });
  CHECK(std::get<0>(got[0]) == 3); // 2 + 0 + 1
  CHECK(std::get<0>(got[1]) == 5); // 3 + 0 + 1 + 1
  CHECK(std::get<0>(got[2]) == 2);
  for (const auto& [nroots, nleaves, all_one] : got) {
    (void)nroots;
    (void)nleaves;
    CHECK(all_one);
  }
}

TEST_CASE("multi-sf of an all-degree-zero forest has no roots") {
  RunConfig cfg;
  cfg.nranks = 2;
  auto got = run_ranks(cfg, [](Comm& c) {
    StarForest sf(c);
    sf.set_graph(4, 0, std::nullopt, {});
    sf.setup();
    return sf.multi_sf().nroots();
  });
  CHECK(got[0] == 0);
  CHECK(got[1] == 0);
}

TEST_CASE("multi-sf of a degree-one forest keeps its shape") {
  RunConfig cfg;
  cfg.nranks = 2;
  run_ranks(cfg, [](Comm& c) {
    // each rank's leaf i -> other rank's root i: all degrees exactly one
    const int other = 1 - c.rank();
    std::vector<RootRef> remote;
    for (std::int64_t i = 0; i < 3; ++i) remote.push_back(RootRef{other, i});
    StarForest sf(c);
    sf.set_graph(3, 3, std::nullopt, std::move(remote));
    sf.setup();
    auto& m = sf.multi_sf();
    CHECK(m.nroots() == 3);
    CHECK(m.nleaves() == 3);
    for (std::int64_t o = 0; o < 3; ++o)
      CHECK(m.leaf_remote()[static_cast<std::size_t>(o)].rank == other);
  });
}

TEST_CASE("compose with identity on either side is the other graph") {
  RunConfig cfg;
  cfg.nranks = 3;
  cfg.seed = 5;
  run_ranks(cfg, [](Comm& c) {
    StarForest b = random_sf(c, 5, 12);
    b.setup();
    // the identity must span B's root space for left composition
    StarForest id_roots = identity_sf(c, b.nroots());
    id_roots.setup();
    StarForest left = compose(id_roots, b);
    CHECK(edge_multiset_of(left) == edge_multiset_of(b));

    StarForest id_leaves = identity_sf(c, b.leaf_index_bound());
    id_leaves.setup();
    StarForest right = compose(b, id_leaves);
    CHECK(edge_multiset_of(right) == edge_multiset_of(b));
  });
}

TEST_CASE("compose matches a sequential reachability join") {
  for (int t = 0; t < 12; ++t) {
    const std::uint64_t seed = 400 + static_cast<std::uint64_t>(t);
    const int nranks = 4;
    // A's leaf space and B's root space share per-rank sizes.
    const auto a_specs = random_graph_specs(seed, nranks, 10);
    std::vector<GraphSpec> b_specs(static_cast<std::size_t>(nranks));
    {
      Rng rng(mix_seed(seed, 0x81));
      std::vector<std::int64_t> b_roots(static_cast<std::size_t>(nranks));
      for (int r = 0; r < nranks; ++r) {
        // B's root space covers A's leaf space on each rank
        std::int64_t bound = 0;
        const auto& s = a_specs[static_cast<std::size_t>(r)];
        for (std::int64_t o = 0; o < s.nleaves; ++o)
          bound =
              std::max(bound, (s.local ? (*s.local)[static_cast<std::size_t>(o)] : o) + 1);
        b_roots[static_cast<std::size_t>(r)] = bound + rng.range(0, 3);
      }
      for (int r = 0; r < nranks; ++r) {
        auto& s = b_specs[static_cast<std::size_t>(r)];
        s.nroots = b_roots[static_cast<std::size_t>(r)];
        const std::int64_t want = rng.range(0, 8);
        for (std::int64_t i = 0; i < want; ++i) {
          const int owner = static_cast<int>(rng.bounded(nranks));
          if (b_roots[static_cast<std::size_t>(owner)] == 0) continue;
          s.remote.push_back(
              RootRef{owner, rng.range(0, b_roots[static_cast<std::size_t>(owner)] - 1)});
        }
        s.nleaves = static_cast<std::int64_t>(s.remote.size());
      }
    }

    // sequential join oracle: A edge (p,r)->(q,m) and B edge (q,m)->(q2,l2)
    std::multiset<std::tuple<int, std::int64_t, int, std::int64_t>> expect;
    {
      std::map<std::pair<int, std::int64_t>, std::pair<int, std::int64_t>> a_by_leaf;
      const auto ga = oracle::GlobalGraph::from_specs(a_specs);
      for (const auto& e : ga.edges)
        a_by_leaf[{e.leaf_rank, e.leaf_idx}] = {e.root_rank, e.root_off};
      const auto gb = oracle::GlobalGraph::from_specs(b_specs);
      for (const auto& e : gb.edges) {
        auto it = a_by_leaf.find({e.root_rank, e.root_off});
        if (it == a_by_leaf.end()) continue;
        expect.insert({it->second.first, it->second.second, e.leaf_rank, e.leaf_idx});
      }
    }

    RunConfig cfg;
    cfg.nranks = nranks;
    cfg.seed = seed;
    auto got = run_ranks(cfg, [&](Comm& c) {
      StarForest a(c), b(c);
      a.set_graph(a_specs[static_cast<std::size_t>(c.rank())]);
      b.set_graph(b_specs[static_cast<std::size_t>(c.rank())]);
      a.setup();
      b.setup();
      StarForest ab = compose(a, b);
      CHECK(ab.nroots() == a.nroots());
      return ab.graph_spec();
    });
    CHECK(edge_multiset(got) == expect);
  }
}

TEST_CASE("compose_inverse of the identity inverts the graph") {
  RunConfig cfg;
  cfg.nranks = 3;
  run_ranks(cfg, [](Comm& c) {
    // B: fully connected contiguous leaves, roots of degree <= 1 via a
    // rank-shifted assignment so the inverse is well defined.
    const std::int64_t n = 4;
    std::vector<RootRef> remote;
    for (std::int64_t i = 0; i < n; ++i) remote.push_back(RootRef{(c.rank() + 1) % 3, i});
    StarForest b(c);
    b.set_graph(n, n, std::nullopt, std::move(remote));
    b.setup();

    StarForest id = identity_sf(c, n); // A = identity over the shared leaf space
    id.setup();
    StarForest ab = compose_inverse(id, b);

    // inverse of B: every B edge (root (q2,s2) -> leaf (q,m)) becomes
    // (root (q,m) -> leaf s2 on rank q2)
    CHECK(ab.nleaves() == n);
    for (std::int64_t o = 0; o < ab.nleaves(); ++o) {
      const auto rr = ab.leaf_remote()[static_cast<std::size_t>(o)];
      CHECK(rr.rank == (c.rank() + 2) % 3); // who pointed at me
      CHECK(rr.offset == ab.leaf_index(o));
    }
  });
}

TEST_CASE("compose_inverse with identity B returns A") {
  RunConfig cfg;
  cfg.nranks = 2;
  cfg.seed = 9;
  run_ranks(cfg, [](Comm& c) {
    StarForest a = random_sf(c, 9, 10);
    a.setup();
    StarForest id = identity_sf(c, a.leaf_index_bound());
    id.setup();
    StarForest ab = compose_inverse(a, id);
    CHECK(edge_multiset_of(ab) == edge_multiset_of(a));
  });
}

TEST_CASE("compose_inverse rejects a B root of degree two") {
  RunConfig cfg;
  cfg.nranks = 2;
  cfg.timeout_s = 5.0;
  try {
    run_ranks(cfg, [](Comm& c) {
      StarForest b(c);
      // both leaves of rank 0 hang off root (0,0): degree 2
      if (c.rank() == 0)
        b.set_graph(1, 2, std::nullopt, {RootRef{0, 0}, RootRef{0, 0}});
      else
        b.set_graph(0, 0, std::nullopt, {});
      b.setup();
      StarForest id = identity_sf(c, b.leaf_index_bound());
      id.setup();
      (void)compose_inverse(id, b);
    });
    FAIL("expected degree restriction to fire");
  } catch (const HarnessError& e) {
    CHECK(std::string(e.what()).find("degree") != std::string::npos);
  }
}

TEST_CASE("embed_root keeps exactly the selected roots' edges") {
  const auto specs = worked_example();
  auto got = run_ranks(cfg3(), [&](Comm& c) {
    StarForest sf(c);
    sf.set_graph(specs[static_cast<std::size_t>(c.rank())]);
    sf.setup();
    // select only root 21 = (rank 1, offset 0)
    std::vector<std::int64_t> selected;
    if (c.rank() == 1) selected.push_back(0);
    StarForest esf = embed_root(sf, selected);
    CHECK(esf.nroots() == sf.nroots()); // index space unchanged
    std::vector<std::int64_t> leaves;
    for (std::int64_t o = 0; o < esf.nleaves(); ++o) leaves.push_back(esf.leaf_index(o));
    return leaves;
  });
  CHECK(got[0] == std::vector<std::int64_t>{1, 2}); // leaves 120, 130
  CHECK(got[1].empty());
  CHECK(got[2] == std::vector<std::int64_t>{1}); // leaf 320
}

TEST_CASE("embed_root with everything selected reproduces the graph") {
  RunConfig cfg;
  cfg.nranks = 3;
  cfg.seed = 21;
  run_ranks(cfg, [](Comm& c) {
    StarForest sf = random_sf(c, 21, 12);
    sf.setup();
    std::vector<std::int64_t> all(static_cast<std::size_t>(sf.nroots()));
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<std::int64_t>(i);
    // duplicates are silently collapsed
    all.insert(all.end(), all.begin(), all.end());
    StarForest esf = embed_root(sf, all);
    CHECK(edge_multiset_of(esf) == edge_multiset_of(sf));

    StarForest none = embed_root(sf, {});
    CHECK(none.nleaves() == 0);
    CHECK(none.nroots() == sf.nroots());
  });
}

TEST_CASE("embed validates the selection range") {
  RunConfig cfg;
  cfg.nranks = 1;
  run_ranks(cfg, [](Comm& c) {
    StarForest sf = identity_sf(c, 3);
    sf.setup();
    const std::vector<std::int64_t> bad{3};
    CHECK_THROWS_AS((void)embed_root(sf, bad), Error);
    const std::vector<std::int64_t> neg{-1};
    CHECK_THROWS_AS((void)embed_leaf(sf, neg), Error);
  });
}

TEST_CASE("embed_leaf filters by user leaf index without remapping") {
  const auto specs = worked_example();
  auto got = run_ranks(cfg3(), [&](Comm& c) {
    StarForest sf(c);
    sf.set_graph(specs[static_cast<std::size_t>(c.rank())]);
    sf.setup();
    const std::vector<std::int64_t> keep{0, 1};
    StarForest esf = embed_leaf(sf, keep);
    std::vector<std::int64_t> leaves;
    for (std::int64_t o = 0; o < esf.nleaves(); ++o) leaves.push_back(esf.leaf_index(o));
    return leaves;
  });
  CHECK(got[0] == std::vector<std::int64_t>{0, 1});
  CHECK(got[1] == std::vector<std::int64_t>{0, 1});
  CHECK(got[2] == std::vector<std::int64_t>{0, 1});
}

TEST_CASE("graph text round-trips and rejects malformed input") {
  const auto specs = worked_example();
  const auto text = graph_text::format(specs);
  const auto again = graph_text::parse(text);
  REQUIRE(again.size() == specs.size());
  for (std::size_t r = 0; r < specs.size(); ++r) {
    CHECK(again[r].nroots == specs[r].nroots);
    CHECK(again[r].remote == specs[r].remote);
  }
  CHECK_THROWS_AS(graph_text::parse("2"), Error);
  CHECK_THROWS_AS(graph_text::parse("1 1 0-0.0"), Error);
}
