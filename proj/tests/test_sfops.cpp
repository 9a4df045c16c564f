// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The sfcomm authors
#include <doctest.h>

#include <numeric>

#include "sf/harness.hpp"
#include "sf/oracle.hpp"
#include "sf/ops.hpp"

using namespace sf;

namespace {

constexpr const char* kWorkedExample =
    "3 4 0:1.2 1:1.0 2:1.0 3:0.2\n"
    "4 3 0:2.0 1:0.0 3:2.1\n"
    "2 3 0:0.0 1:1.0 2:1.3\n";

const Unit kI64 = unit_of<std::int64_t>();

struct Fig {
  std::vector<GraphSpec> specs = graph_text::parse(kWorkedExample);
  std::vector<std::vector<std::int64_t>> roots{{11, 12, 13}, {21, 22, 23, 24}, {31, 32}};
  std::vector<std::vector<std::int64_t>> leaves{
      {110, 120, 130, 140}, {210, 220, 230, 240}, {310, 320, 330}};
};

RunConfig cfg3() {
  RunConfig cfg;
  cfg.nranks = 3;
  cfg.timeout_s = 20.0;
  return cfg;
}

StarForest make_sf(Comm& c, const std::vector<GraphSpec>& specs) {
  StarForest sf(c);
  sf.set_graph(specs[static_cast<std::size_t>(c.rank())]);
  sf.setup();
  return sf;
}

} // namespace

TEST_CASE("bcast replaces leaf values with their root labels") {
  const Fig fig;
  auto got = run_ranks(cfg3(), [&](Comm& c) {
    StarForest sf = make_sf(c, fig.specs);
    auto leaf = fig.leaves[static_cast<std::size_t>(c.rank())];
    bcast(sf, kI64, fig.roots[static_cast<std::size_t>(c.rank())].data(), leaf.data(),
          ReduceOp::replace);
    return leaf;
  });
  CHECK(got[0] == std::vector<std::int64_t>{23, 21, 21, 13});
  CHECK(got[1] == std::vector<std::int64_t>{31, 11, 230, 32}); // isolated leaf untouched
  CHECK(got[2] == std::vector<std::int64_t>{11, 21, 24});
}

TEST_CASE("bcast with sum accumulates into preexisting leaf values") {
  const Fig fig;
  auto got = run_ranks(cfg3(), [&](Comm& c) {
    StarForest sf = make_sf(c, fig.specs);
    std::vector<std::int64_t> leaf(fig.leaves[static_cast<std::size_t>(c.rank())].size(), 0);
    if (c.rank() == 2) leaf[0] = 100;
    bcast(sf, kI64, fig.roots[static_cast<std::size_t>(c.rank())].data(), leaf.data(),
          ReduceOp::sum);
    return leaf;
  });
  CHECK(got[2][0] == 111); // 100 + root label 11
}

TEST_CASE("bcast over an edge-free forest leaves data untouched") {
  RunConfig cfg;
  cfg.nranks = 2;
  auto got = run_ranks(cfg, [](Comm& c) {
    StarForest sf(c);
    sf.set_graph(2, 0, std::nullopt, {});
    sf.setup();
    std::vector<std::int64_t> root{5, 6}, leaf{7, 8};
    bcast(sf, kI64, root.data(), leaf.data(), ReduceOp::replace);
    return leaf;
  });
  CHECK(got[0] == std::vector<std::int64_t>{7, 8});
}

TEST_CASE("reduce sums leaf labels into their roots") {
  const Fig fig;
  auto got = run_ranks(cfg3(), [&](Comm& c) {
    StarForest sf = make_sf(c, fig.specs);
    std::vector<std::int64_t> root(fig.roots[static_cast<std::size_t>(c.rank())].size(), 0);
    reduce(sf, kI64, fig.leaves[static_cast<std::size_t>(c.rank())].data(), root.data(),
           ReduceOp::sum);
    return root;
  });
  CHECK(got[0] == std::vector<std::int64_t>{530, 0, 140});
  CHECK(got[1] == std::vector<std::int64_t>{570, 0, 110, 330});
  CHECK(got[2] == std::vector<std::int64_t>{210, 240});
}

TEST_CASE("reduce with all-zero leaves is a no-op under sum") {
  const Fig fig;
  auto got = run_ranks(cfg3(), [&](Comm& c) {
    StarForest sf = make_sf(c, fig.specs);
    auto root = fig.roots[static_cast<std::size_t>(c.rank())];
    std::vector<std::int64_t> zeros(fig.leaves[static_cast<std::size_t>(c.rank())].size(), 0);
    reduce(sf, kI64, zeros.data(), root.data(), ReduceOp::sum);
    return root;
  });
  CHECK(got[0] == std::vector<std::int64_t>{11, 12, 13});
}

TEST_CASE("reduce max keeps the larger root value") {
  RunConfig cfg;
  cfg.nranks = 2;
  auto got = run_ranks(cfg, [](Comm& c) {
    StarForest sf(c);
    if (c.rank() == 0)
      sf.set_graph(1, 0, std::nullopt, {});
    else
      sf.set_graph(0, 1, std::nullopt, {RootRef{0, 0}});
    sf.setup();
    std::vector<std::int64_t> root{5};
    std::vector<std::int64_t> leaf{3};
    reduce(sf, kI64, leaf.data(), root.data(), ReduceOp::max);
    return root[0];
  });
  CHECK(got[0] == 5);
}

TEST_CASE("fetch-and-op serializes contributions and fetches pre-values") {
  // one root (value 10) on rank 0; leaves with values 5 and 7 on ranks 1, 2
  RunConfig cfg;
  cfg.nranks = 3;
  auto got = run_ranks(cfg, [](Comm& c) {
    StarForest sf(c);
    if (c.rank() == 0)
      sf.set_graph(1, 0, std::nullopt, {});
    else
      sf.set_graph(0, 1, std::nullopt, {RootRef{0, 0}});
    sf.setup();
    std::vector<std::int64_t> root{c.rank() == 0 ? 10 : 0};
    const std::vector<std::int64_t> leaf{c.rank() == 1 ? 5 : 7};
    std::vector<std::int64_t> update{-1};
    fetch_and_op(sf, kI64, root.data(), leaf.data(), update.data(), ReduceOp::sum);
    return std::pair(root[0], update[0]);
  });
  CHECK(got[0].first == 22); // 10 + 5 + 7
  // ascending rank order: rank 1 fetches 10, rank 2 fetches 15
  CHECK(got[1].second == 10);
  CHECK(got[2].second == 15);
}

TEST_CASE("fetch-and-op on a degree-one root always fetches the old value") {
  RunConfig cfg;
  cfg.nranks = 2;
  auto got = run_ranks(cfg, [](Comm& c) {
    StarForest sf(c);
    if (c.rank() == 0)
      sf.set_graph(1, 0, std::nullopt, {});
    else
      sf.set_graph(0, 1, std::nullopt, {RootRef{0, 0}});
    sf.setup();
    std::vector<std::int64_t> root{42};
    const std::vector<std::int64_t> leaf{9};
    std::vector<std::int64_t> update{-1};
    fetch_and_op(sf, kI64, root.data(), leaf.data(), update.data(), ReduceOp::prod);
    return std::pair(root[0], update[0]);
  });
  CHECK(got[0].first == 42 * 9);
  CHECK(got[1].second == 42);
}

TEST_CASE("fetch-and-op rejects replace") {
  RunConfig cfg;
  cfg.nranks = 1;
  run_ranks(cfg, [](Comm& c) {
    StarForest sf = identity_sf(c, 2);
    sf.setup();
    std::vector<std::int64_t> root{1, 2}, update{0, 0};
    const std::vector<std::int64_t> leaf{3, 4};
    CHECK_THROWS_AS(
        fetch_and_op(sf, kI64, root.data(), leaf.data(), update.data(), ReduceOp::replace),
        Error);
  });
}

TEST_CASE("gather collects leaf values in the deterministic multiroot order") {
  const Fig fig;
  auto got = run_ranks(cfg3(), [&](Comm& c) {
    StarForest sf = make_sf(c, fig.specs);
    const auto deg = sf.compute_degrees();
    const auto n = std::accumulate(deg.begin(), deg.end(), std::int64_t{0});
    std::vector<std::int64_t> multi(static_cast<std::size_t>(n), 0);
    gather(sf, kI64, fig.leaves[static_cast<std::size_t>(c.rank())].data(), multi.data());
    return multi;
  });
  // rank 0: root 11 holds leaves 220 then 310 (ranks ascending), root 13 holds 140
  CHECK(got[0] == std::vector<std::int64_t>{220, 310, 140});
  // rank 1: root 21 holds 120, 130 (rank 0 order) then 320 (rank 2); 23 holds 110; 24 holds 330
  CHECK(got[1] == std::vector<std::int64_t>{120, 130, 320, 110, 330});
  CHECK(got[2] == std::vector<std::int64_t>{210, 240});
}

TEST_CASE("gather then scatter restores leaf data exactly") {
  const Fig fig;
  auto got = run_ranks(cfg3(), [&](Comm& c) {
    StarForest sf = make_sf(c, fig.specs);
    const auto deg = sf.compute_degrees();
    const auto n = std::accumulate(deg.begin(), deg.end(), std::int64_t{0});
    std::vector<std::int64_t> multi(static_cast<std::size_t>(n), 0);
    gather(sf, kI64, fig.leaves[static_cast<std::size_t>(c.rank())].data(), multi.data());
    auto restored = fig.leaves[static_cast<std::size_t>(c.rank())];
    scatter(sf, kI64, multi.data(), restored.data());
    return restored == fig.leaves[static_cast<std::size_t>(c.rank())];
  });
  CHECK(got == std::vector<bool>{true, true, true});
}

TEST_CASE("simultaneous handles with disjoint buffers complete correctly") {
  const Fig fig;
  auto got = run_ranks(cfg3(), [&](Comm& c) {
    StarForest sf = make_sf(c, fig.specs);
    const auto me = static_cast<std::size_t>(c.rank());
    auto leaf_a = fig.leaves[me];
    auto leaf_b = fig.leaves[me];
    auto roots_doubled = fig.roots[me];
    for (auto& v : roots_doubled) v *= 2;

    OpHandle ha = bcast_begin(sf, kI64, fig.roots[me].data(), leaf_a.data(), ReduceOp::replace);
    OpHandle hb = bcast_begin(sf, kI64, roots_doubled.data(), leaf_b.data(), ReduceOp::replace);
    bcast_end(hb); // ends may interleave out of begin order
    bcast_end(ha);
    return std::pair(leaf_a, leaf_b);
  });
  CHECK(got[0].first == std::vector<std::int64_t>{23, 21, 21, 13});
  CHECK(got[0].second == std::vector<std::int64_t>{46, 42, 42, 26});
}

TEST_CASE("an overlapped computation sits naturally between begin and end") {
  const Fig fig;
  auto got = run_ranks(cfg3(), [&](Comm& c) {
    StarForest sf = make_sf(c, fig.specs);
    const auto me = static_cast<std::size_t>(c.rank());
    auto leaf = fig.leaves[me];
    OpHandle h = bcast_begin(sf, kI64, fig.roots[me].data(), leaf.data(), ReduceOp::replace);
    std::int64_t local_work = 0;
    for (auto v : fig.roots[me]) local_work += v;
    bcast_end(h);
    return std::pair(leaf, local_work);
  });
  CHECK(got[0].first == std::vector<std::int64_t>{23, 21, 21, 13});
  CHECK(got[0].second == 11 + 12 + 13);
}

TEST_CASE("ending a handle twice or with the wrong call is rejected") {
  RunConfig cfg;
  cfg.nranks = 1;
  run_ranks(cfg, [](Comm& c) {
    StarForest sf = identity_sf(c, 2);
    sf.setup();
    std::vector<std::int64_t> root{1, 2}, leaf{0, 0};
    OpHandle h = bcast_begin(sf, kI64, root.data(), leaf.data(), ReduceOp::replace);
    CHECK_THROWS_AS(reduce_end(h), Error); // wrong kind
    bcast_end(h);
    CHECK_THROWS_AS(bcast_end(h), Error); // double end
  });
}

TEST_CASE("debug mode detects a buffer mutated between begin and end") {
  RunConfig cfg;
  cfg.nranks = 1;
  cfg.debug_checksum = true;
  CHECK_THROWS_AS(run_ranks(cfg,
                            [](Comm& c) {
                              StarForest sf = identity_sf(c, 2);
                              sf.setup();
                              std::vector<std::int64_t> root{1, 2}, leaf{0, 0};
                              OpHandle h = bcast_begin(sf, kI64, root.data(), leaf.data(),
                                                       ReduceOp::replace);
                              root[0] = 99; // contract violation
                              bcast_end(h);
                            }),
                  HarnessError);
}

TEST_CASE("incompatible unit and op combinations are rejected") {
  RunConfig cfg;
  cfg.nranks = 1;
  run_ranks(cfg, [](Comm& c) {
    StarForest sf = identity_sf(c, 1);
    sf.setup();
    std::vector<std::byte> root(4), leaf(4);
    const Unit bytes4{Kind::bytes, 4};
    CHECK_THROWS_AS(bcast(sf, bytes4, root.data(), leaf.data(), ReduceOp::sum), Error);
    bcast(sf, bytes4, root.data(), leaf.data(), ReduceOp::replace); // replace is fine
  });
}

TEST_CASE("opaque byte units move verbatim") {
  RunConfig cfg;
  cfg.nranks = 2;
  auto got = run_ranks(cfg, [](Comm& c) -> std::vector<std::byte> {
    StarForest sf(c);
    if (c.rank() == 0)
      sf.set_graph(2, 0, std::nullopt, {});
    else
      sf.set_graph(0, 2, std::nullopt, {RootRef{0, 1}, RootRef{0, 0}});
    sf.setup();
    std::vector<std::byte> root(6), leaf(6);
    for (int i = 0; i < 6; ++i) root[static_cast<std::size_t>(i)] = static_cast<std::byte>(i);
    bcast(sf, Unit{Kind::bytes, 3}, root.data(), leaf.data(), ReduceOp::replace);
    return leaf;
  });
  // leaf 0 <- vertex 1 (bytes 3,4,5), leaf 1 <- vertex 0 (bytes 0,1,2)
  CHECK(got[1] == std::vector<std::byte>{std::byte{3}, std::byte{4}, std::byte{5}, std::byte{0},
                                         std::byte{1}, std::byte{2}});
}

TEST_CASE("block units reduce whole vertices against the oracle") {
  const std::uint64_t seed = 321;
  const int nranks = 4;
  const std::int64_t blocklen = 3;
  const auto specs = random_graph_specs(seed, nranks, 20);
  const auto graph = oracle::GlobalGraph::from_specs(specs);

  oracle::Data root0(static_cast<std::size_t>(nranks)), leaf0(static_cast<std::size_t>(nranks));
  for (int r = 0; r < nranks; ++r) {
    Rng rng(mix_seed(seed, 0x900 + static_cast<std::uint64_t>(r)));
    root0[static_cast<std::size_t>(r)].resize(
        static_cast<std::size_t>(graph.nroots(r) * blocklen));
    for (auto& v : root0[static_cast<std::size_t>(r)]) v = rng.range(-50, 50);
    leaf0[static_cast<std::size_t>(r)].resize(
        static_cast<std::size_t>(graph.leaf_bound(r) * blocklen));
    for (auto& v : leaf0[static_cast<std::size_t>(r)]) v = rng.range(-50, 50);
  }

  RunConfig cfg;
  cfg.nranks = nranks;
  cfg.seed = seed;
  auto got = run_ranks(cfg, [&](Comm& c) {
    StarForest sf(c);
    sf.set_graph(specs[static_cast<std::size_t>(c.rank())]);
    sf.setup();
    auto root = root0[static_cast<std::size_t>(c.rank())];
    reduce(sf, unit_of<std::int64_t>(blocklen), leaf0[static_cast<std::size_t>(c.rank())].data(),
           root.data(), ReduceOp::sum);
    return root;
  });
  oracle::Data expect = root0;
  oracle::reduce(graph, leaf0, expect, ReduceOp::sum, blocklen);
  for (int r = 0; r < nranks; ++r)
    CHECK(got[static_cast<std::size_t>(r)] == expect[static_cast<std::size_t>(r)]);
}

TEST_CASE("ops run identically over the socket transport") {
  const Fig fig;
  auto cfg = cfg3();
  cfg.backend = "sockets";
  auto got = run_ranks(cfg, [&](Comm& c) {
    StarForest sf = make_sf(c, fig.specs);
    auto leaf = fig.leaves[static_cast<std::size_t>(c.rank())];
    bcast(sf, kI64, fig.roots[static_cast<std::size_t>(c.rank())].data(), leaf.data(),
          ReduceOp::replace);
    std::vector<std::int64_t> root(fig.roots[static_cast<std::size_t>(c.rank())].size(), 0);
    reduce(sf, kI64, fig.leaves[static_cast<std::size_t>(c.rank())].data(), root.data(),
           ReduceOp::sum);
    leaf.insert(leaf.end(), root.begin(), root.end());
    return leaf;
  });
  CHECK(got[0] == std::vector<std::int64_t>{23, 21, 21, 13, 530, 0, 140});
}
