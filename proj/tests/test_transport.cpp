// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The sfcomm authors
#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <thread>

#include "sf/detail/world.hpp"
#include "sf/exchange.hpp"
#include "sf/harness.hpp"
#include "sf/rng.hpp"

using namespace sf;

namespace {

RunConfig two_ranks(const char* backend = "threads") {
  RunConfig cfg;
  cfg.nranks = 2;
  cfg.backend = backend;
  cfg.timeout_s = 20.0;
  return cfg;
}

std::vector<std::byte> bytes_of(std::initializer_list<int> vals) {
  std::vector<std::byte> out;
  for (int v : vals) out.push_back(static_cast<std::byte>(v));
  return out;
}

} // namespace

TEST_CASE("loopback send/recv preserves bytes") {
  run_ranks(two_ranks(), [&](Comm& c) {
    const auto payload = bytes_of({1, 2, 3, 4, 5, 6, 7, 8});
    if (c.rank() == 0) {
      auto r = c.isend(1, tags::user(7), payload);
      c.wait(r);
    } else {
      std::vector<std::byte> buf(8);
      auto r = c.irecv(0, tags::user(7), buf);
      c.wait(r);
      CHECK(buf == payload);
    }
  });
}

TEST_CASE("messages with one (src, dest, tag) do not overtake") {
  for (const char* backend : {"threads", "sockets"}) {
    auto got = run_ranks(two_ranks(backend), [&](Comm& c) -> std::vector<std::int64_t> {
      const Tag t = tags::user(1);
      if (c.rank() == 0) {
        for (std::int64_t i = 0; i < 32; ++i)
          c.isend_vals<std::int64_t>(1, t, std::span<const std::int64_t>(&i, 1));
        return {};
      }
      std::vector<std::int64_t> seen;
      for (int i = 0; i < 32; ++i) {
        auto v = c.recv_vals<std::int64_t>(0, t);
        seen.push_back(v.at(0));
      }
      return seen;
    });
    for (std::int64_t i = 0; i < 32; ++i)
      CHECK(got[1][static_cast<std::size_t>(i)] == i);
  }
}

TEST_CASE("unmatched receive surfaces as a harness timeout naming the rank") {
  auto cfg = two_ranks();
  cfg.timeout_s = 1.0;
  try {
    run_ranks(cfg, [&](Comm& c) {
      if (c.rank() == 0) {
        std::vector<std::byte> buf(4);
        auto r = c.irecv(1, tags::user(9), buf);
        c.wait(r); // never matched
      }
    });
    FAIL("expected a harness timeout");
  } catch (const HarnessError& e) {
    REQUIRE(e.report().size() == 2);
    CHECK(e.report()[0].state == RankReport::State::stalled);
    CHECK(e.report()[1].state == RankReport::State::ok);
  }
}

TEST_CASE("size mismatch fails the receive") {
  try {
    run_ranks(two_ranks(), [&](Comm& c) {
      if (c.rank() == 0) {
        const auto payload = bytes_of({1, 2, 3});
        c.isend(1, tags::user(2), payload);
      } else {
        std::vector<std::byte> buf(8); // wrong size
        auto r = c.irecv(0, tags::user(2), buf);
        c.wait(r);
      }
    });
    FAIL("expected a failure");
  } catch (const HarnessError& e) {
    CHECK(std::string(e.what()).find("size mismatch") != std::string::npos);
  }
}

TEST_CASE("allreduce max and sum") {
  RunConfig cfg;
  cfg.nranks = 3;
  auto got = run_ranks(cfg, [&](Comm& c) {
    const std::int64_t mine[] = {c.rank() == 0 ? 1 : c.rank() == 1 ? 5 : 3};
    auto mx = c.allreduce_max(mine);
    const std::int64_t pair[] = {c.rank() + 1, 2 * c.rank()};
    auto sm = c.allreduce_sum(pair);
    mx.insert(mx.end(), sm.begin(), sm.end());
    return mx;
  });
  for (const auto& r : got) {
    CHECK(r[0] == 5);
    CHECK(r[1] == 1 + 2 + 3);
    CHECK(r[2] == 0 + 2 + 4);
  }
}

TEST_CASE("allreduce on a single rank is the identity") {
  RunConfig cfg;
  cfg.nranks = 1;
  auto got = run_ranks(cfg, [&](Comm& c) {
    const std::int64_t v[] = {42, -3};
    return c.allreduce_sum(v);
  });
  CHECK(got[0] == std::vector<std::int64_t>{42, -3});
}

TEST_CASE("allreduce length mismatch is an error") {
  auto cfg = two_ranks();
  cfg.timeout_s = 5.0;
  CHECK_THROWS_AS(run_ranks(cfg,
                            [&](Comm& c) {
                              std::vector<std::int64_t> v(
                                  static_cast<std::size_t>(c.rank()) + 1, 1);
                              c.allreduce_sum(v);
                            }),
                  HarnessError);
}

TEST_CASE("nonblocking barrier completes everywhere") {
  RunConfig cfg;
  cfg.nranks = 4;
  run_ranks(cfg, [&](Comm& c) {
    auto ib = c.ibarrier_begin();
    while (!c.ibarrier_test(ib)) std::this_thread::yield();
  });
}

TEST_CASE("dense discovery learns the reverse edges") {
  auto got = run_ranks(two_ranks(), [&](Comm& c) {
    std::vector<int> targets;
    if (c.rank() == 0) targets.push_back(1);
    return discover_leaf_ranks_dense(c, targets);
  });
  CHECK(got[0].empty());
  CHECK(got[1] == std::vector<int>{0});
}

TEST_CASE("dense discovery all-to-one") {
  RunConfig cfg;
  cfg.nranks = 5;
  auto got = run_ranks(cfg, [&](Comm& c) {
    std::vector<int> targets{0};
    return discover_leaf_ranks_dense(c, targets);
  });
  CHECK(got[0] == std::vector<int>{0, 1, 2, 3, 4});
  for (int r = 1; r < 5; ++r) CHECK(got[static_cast<std::size_t>(r)].empty());
}

TEST_CASE("consensus discovery handles empty relations without deadlock") {
  RunConfig cfg;
  cfg.nranks = 4;
  auto got = run_ranks(cfg, [&](Comm& c) {
    std::vector<RankPayload> targets;
    return discover_leaf_ranks_consensus(c, targets);
  });
  for (const auto& r : got) CHECK(r.empty());
}

TEST_CASE("consensus self-loop targets are delivered locally") {
  RunConfig cfg;
  cfg.nranks = 2;
  auto got = run_ranks(cfg, [&](Comm& c) {
    std::vector<RankPayload> targets;
    targets.push_back(RankPayload{c.rank(), bytes_of({c.rank() + 10})});
    return discover_leaf_ranks_consensus(c, targets);
  });
  for (int r = 0; r < 2; ++r) {
    REQUIRE(got[static_cast<std::size_t>(r)].size() == 1);
    CHECK(got[static_cast<std::size_t>(r)][0].rank == r);
    CHECK(got[static_cast<std::size_t>(r)][0].payload == bytes_of({r + 10}));
  }
}

TEST_CASE("socket backend round-trips random payloads") {
  auto cfg = two_ranks("sockets");
  Rng rng(99);
  std::vector<std::byte> payload(1 + rng.bounded(4096));
  for (auto& b : payload) b = static_cast<std::byte>(rng.bounded(256));

  auto got = run_ranks(cfg, [&](Comm& c) -> std::vector<std::byte> {
    if (c.rank() == 0) {
      c.isend(1, tags::user(3), payload);
      return {};
    }
    return c.recv_matched(0, tags::user(3));
  });
  CHECK(got[1] == payload);
}

TEST_CASE("socket manifest maps every rank to a port") {
  CommConfig cc;
  cc.nranks = 3;
  cc.backend = "sockets";
  cc.timeout_s = 20.0;
  cc.manifest_path = "/tmp/sf_test_manifest.txt";
  auto world = detail::make_world(cc);
  std::ifstream in(cc.manifest_path);
  REQUIRE(in.good());
  int rank = 0, port = 0;
  std::vector<int> seen;
  while (in >> rank >> port) {
    CHECK(port > 0);
    seen.push_back(rank);
  }
  in.close();
  CHECK(seen == std::vector<int>{0, 1, 2});
  world.reset();
  CHECK_FALSE(std::filesystem::exists(cc.manifest_path));
}

TEST_CASE("probe reports source and size without consuming") {
  run_ranks(two_ranks(), [&](Comm& c) {
    if (c.rank() == 0) {
      c.isend(1, tags::user(4), bytes_of({1, 2, 3}));
    } else {
      const auto p = c.probe(tags::user(4));
      CHECK(p.src == 0);
      CHECK(p.bytes == 3);
      CHECK(c.iprobe(tags::user(4)).has_value());
      (void)c.recv_matched(0, tags::user(4));
      CHECK_FALSE(c.iprobe(tags::user(4)).has_value());
    }
  });
}
