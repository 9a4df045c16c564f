// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The sfcomm authors
#include <doctest.h>

#include <cstdlib>
#include <set>

#include "sf/harness.hpp"
#include "sf/ops.hpp"

using namespace sf;

TEST_CASE("run_ranks gathers one result slot per rank") {
  RunConfig cfg;
  cfg.nranks = 2;
  auto got = run_ranks(cfg, [](Comm& c) { return c.rank(); });
  CHECK(got == std::vector<int>{0, 1});
}

TEST_CASE("a rank that waits forever is reported as stalled") {
  RunConfig cfg;
  cfg.nranks = 2;
  cfg.timeout_s = 0.5;
  try {
    run_ranks(cfg, [](Comm& c) {
      if (c.rank() == 0) {
        std::vector<std::byte> buf(1);
        auto r = c.irecv(1, tags::user(0), buf);
        c.wait(r);
      }
    });
    FAIL("expected HarnessError");
  } catch (const HarnessError& e) {
    CHECK(std::string(e.what()).find("rank 0") != std::string::npos);
    CHECK(e.report()[0].state == RankReport::State::stalled);
  }
}

TEST_CASE("a failing rank keeps other result slots intact") {
  RunConfig cfg;
  cfg.nranks = 3;
  cfg.timeout_s = 5.0;
  try {
    run_ranks(cfg, [](Comm& c) -> int {
      if (c.rank() == 1) throw Error("deliberate failure");
      return 10 + c.rank();
    });
    FAIL("expected HarnessError");
  } catch (const HarnessError& e) {
    CHECK(e.report()[1].state == RankReport::State::failed);
    CHECK(e.report()[1].message == "deliberate failure");
  }
}

TEST_CASE("random graphs are deterministic in the seed") {
  const auto a = random_graph_specs(1234, 4, 32);
  const auto b = random_graph_specs(1234, 4, 32);
  REQUIRE(a.size() == b.size());
  for (std::size_t r = 0; r < a.size(); ++r) {
    CHECK(a[r].nroots == b[r].nroots);
    CHECK(a[r].nleaves == b[r].nleaves);
    CHECK(a[r].local == b[r].local);
    CHECK(a[r].remote == b[r].remote);
  }
  const auto c = random_graph_specs(1235, 4, 32);
  bool all_same = true;
  for (std::size_t r = 0; r < a.size(); ++r)
    all_same = all_same && a[r].remote == c[r].remote && a[r].nroots == c[r].nroots;
  CHECK_FALSE(all_same);
}

TEST_CASE("random graphs are valid and cover the interesting shapes") {
  bool saw_self_edge = false, saw_isolated_leaf = false, saw_zero_degree_root = false;
  for (int t = 0; t < 1000; ++t) {
    const int nranks = 1 + t % 6;
    const auto specs = random_graph_specs(static_cast<std::uint64_t>(t), nranks, 16);
    std::vector<std::set<std::int64_t>> hit(static_cast<std::size_t>(nranks));
    for (int r = 0; r < nranks; ++r) {
      const auto& s = specs[static_cast<std::size_t>(r)];
      REQUIRE(s.remote.size() == static_cast<std::size_t>(s.nleaves));
      if (s.local) {
        REQUIRE(s.local->size() == static_cast<std::size_t>(s.nleaves));
        std::set<std::int64_t> uniq(s.local->begin(), s.local->end());
        REQUIRE(uniq.size() == s.local->size());
        std::int64_t bound = 0;
        for (auto v : *s.local) bound = std::max(bound, v + 1);
        if (bound > s.nleaves) saw_isolated_leaf = true;
      }
      for (const auto& rr : s.remote) {
        REQUIRE(rr.rank >= 0);
        REQUIRE(rr.rank < nranks);
        REQUIRE(rr.offset >= 0);
        REQUIRE(rr.offset < specs[static_cast<std::size_t>(rr.rank)].nroots);
        if (rr.rank == r) saw_self_edge = true;
        hit[static_cast<std::size_t>(rr.rank)].insert(rr.offset);
      }
    }
    for (int r = 0; r < nranks; ++r)
      if (static_cast<std::int64_t>(hit[static_cast<std::size_t>(r)].size()) <
          specs[static_cast<std::size_t>(r)].nroots)
        saw_zero_degree_root = true;
  }
  CHECK(saw_self_edge);
  CHECK(saw_isolated_leaf);
  CHECK(saw_zero_degree_root);
}

TEST_CASE("degenerate one-vertex graphs are accepted by set_graph") {
  RunConfig cfg;
  cfg.nranks = 2;
  run_ranks(cfg, [](Comm& c) {
    for (int t = 0; t < 20; ++t) {
      StarForest sf = random_sf(c, static_cast<std::uint64_t>(t), 1);
      sf.setup();
    }
  });
}

TEST_CASE("identical configuration reproduces identical integer results") {
  auto one_run = [] {
    RunConfig cfg;
    cfg.nranks = 3;
    cfg.seed = 77;
    return run_ranks(cfg, [](Comm& c) {
      StarForest sf = random_sf(c, 77, 24);
      sf.setup();
      std::vector<std::int64_t> root(static_cast<std::size_t>(sf.nroots()));
      for (std::size_t i = 0; i < root.size(); ++i)
        root[i] = static_cast<std::int64_t>(i) + 100 * c.rank();
      std::vector<std::int64_t> leaf(static_cast<std::size_t>(sf.leaf_index_bound()), -1);
      bcast(sf, unit_of<std::int64_t>(), root.data(), leaf.data(), ReduceOp::replace);
      reduce(sf, unit_of<std::int64_t>(), leaf.data(), root.data(), ReduceOp::sum);
      leaf.insert(leaf.end(), root.begin(), root.end());
      return leaf;
    });
  };
  CHECK(one_run() == one_run());
}

TEST_CASE("environment variables seed the run configuration") {
  setenv("SF_NRANKS", "5", 1);
  setenv("SF_TRANSPORT", "sockets", 1);
  setenv("SF_SEED", "31337", 1);
  setenv("SF_TIMEOUT_S", "7.5", 1);
  const auto cfg = RunConfig::from_env();
  CHECK(cfg.nranks == 5);
  CHECK(cfg.backend == "sockets");
  CHECK(cfg.seed == 31337);
  CHECK(cfg.timeout_s == doctest::Approx(7.5));
  unsetenv("SF_NRANKS");
  unsetenv("SF_TRANSPORT");
  unsetenv("SF_SEED");
  unsetenv("SF_TIMEOUT_S");
}
