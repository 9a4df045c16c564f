// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The sfcomm authors
#include "sf/bench.hpp"

#include <algorithm>
#include <chrono>
#include <sstream>

#include "sf/harness.hpp"
#include "sf/ops.hpp"
#include "sf/rng.hpp"

namespace sf {

namespace {

std::int64_t stamp(std::uint64_t seed, int iter, std::int64_t i) {
  return static_cast<std::int64_t>(
      mix_seed(seed ^ (static_cast<std::uint64_t>(iter) << 20), static_cast<std::uint64_t>(i)));
}

} // namespace

std::vector<PingPongRow> pingpong(const PingPongConfig& cfg) {
  SF_REQUIRE(cfg.nranks == 2, "pingpong requires exactly 2 ranks");
  SF_REQUIRE(cfg.min_bytes >= 8 && cfg.min_bytes <= cfg.max_bytes, "pingpong: bad size range");
  std::vector<std::int64_t> sizes;
  for (std::int64_t b = cfg.min_bytes; b <= cfg.max_bytes; b *= 4) sizes.push_back(b);

  RunConfig rc;
  rc.nranks = 2;
  rc.backend = cfg.backend;
  rc.timeout_s = cfg.timeout_s;
  rc.seed = cfg.seed;
  // The symmetric heap is an arena (one attachment per message size stays
  // allocated for the whole sweep).
  rc.symheap_bytes = static_cast<std::size_t>(4 * cfg.max_bytes) + (std::size_t(1) << 20);

  auto timings = run_ranks(rc, [&](Comm& comm) -> std::vector<std::vector<double>> {
    const int me = comm.rank();
    std::vector<std::vector<double>> per_size;
    for (std::int64_t bytes : sizes) {
      const std::int64_t n = bytes / 8;
      StarForest sf(comm);
      if (me == 0) {
        sf.set_graph(n, 0, std::nullopt, {});
      } else {
        std::vector<RootRef> remote(static_cast<std::size_t>(n));
        for (std::int64_t i = 0; i < n; ++i)
          remote[static_cast<std::size_t>(i)] = RootRef{0, i};
        sf.set_graph(0, n, std::nullopt, std::move(remote));
      }
      sf.setup();

      std::vector<std::int64_t> rootdata(static_cast<std::size_t>(me == 0 ? n : 0));
      std::vector<std::int64_t> leafdata(static_cast<std::size_t>(me == 1 ? n : 0));
      const Unit u = unit_of<std::int64_t>();
      std::vector<double> lat_us;

      for (int iter = 0; iter < cfg.warmup + cfg.iters; ++iter) {
        if (me == 0)
          for (std::int64_t i = 0; i < n; ++i)
            rootdata[static_cast<std::size_t>(i)] = stamp(cfg.seed, iter, i);
        const auto t0 = std::chrono::steady_clock::now();
        bcast(sf, u, rootdata.data(), leafdata.data(), ReduceOp::replace);
        reduce(sf, u, leafdata.data(), rootdata.data(), ReduceOp::replace);
        const auto t1 = std::chrono::steady_clock::now();

        if (me == 1)
          for (std::int64_t i = 0; i < n; ++i)
            SF_REQUIRE(leafdata[static_cast<std::size_t>(i)] == stamp(cfg.seed, iter, i),
                       "pingpong: leaf payload corrupted at iteration " + std::to_string(iter));
        if (me == 0)
          for (std::int64_t i = 0; i < n; ++i)
            SF_REQUIRE(rootdata[static_cast<std::size_t>(i)] == stamp(cfg.seed, iter, i),
                       "pingpong: bounced payload corrupted at iteration " +
                           std::to_string(iter));
        if (iter >= cfg.warmup)
          lat_us.push_back(
              std::chrono::duration<double, std::micro>(t1 - t0).count() / 2.0);
      }
      per_size.push_back(std::move(lat_us));
    }
    return per_size;
  });

  std::vector<PingPongRow> rows;
  for (std::size_t s = 0; s < sizes.size(); ++s) {
    auto lat = timings[0][s]; // rank 0 timings
    std::sort(lat.begin(), lat.end());
    PingPongRow row;
    row.bytes = sizes[s];
    row.backend = cfg.backend;
    row.iters = cfg.iters;
    row.min_us = lat.front();
    row.median_us = lat[lat.size() / 2];
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string pingpong_csv(std::span<const PingPongRow> rows) {
  std::ostringstream out;
  out << "bytes,backend,iters,median_us,min_us\n";
  for (const auto& r : rows) {
    out << r.bytes << ',' << r.backend << ',' << r.iters << ',' << r.median_us << ','
        << r.min_us << '\n';
  }
  return out.str();
}

} // namespace sf
