// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The sfcomm authors
#include "sf/harness.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdlib>
#include <mutex>
#include <sstream>
#include <thread>

#include "sf/detail/world.hpp"
#include "sf/rng.hpp"
#include "sf/symheap.hpp"

namespace sf {

namespace {

const char* env(const char* name) { return std::getenv(name); }

} // namespace

RunConfig RunConfig::from_env() {
  RunConfig cfg;
  if (const char* v = env("SF_NRANKS")) cfg.nranks = std::atoi(v);
  if (const char* v = env("SF_TRANSPORT")) cfg.backend = v;
  if (const char* v = env("SF_SEED")) cfg.seed = std::strtoull(v, nullptr, 10);
  if (const char* v = env("SF_TIMEOUT_S")) cfg.timeout_s = std::atof(v);
  return cfg;
}

CommConfig RunConfig::comm_config() const {
  CommConfig c;
  c.nranks = nranks;
  c.backend = backend;
  c.deterministic = deterministic;
  c.debug_checksum = debug_checksum;
  c.force_remote = force_remote;
  c.seed = seed;
  c.timeout_s = timeout_s;
  c.put_delay_max_us = put_delay_max_us;
  c.symheap_bytes = symheap_bytes;
  return c;
}

namespace detail {

void run_ranks_erased(const RunConfig& cfg, const std::function<void(Comm&)>& body) {
  SF_REQUIRE(cfg.nranks >= 1, "run_ranks needs nranks >= 1");
  SF_REQUIRE(cfg.timeout_s > 0, "run_ranks needs a positive timeout");

  auto world = make_world(cfg.comm_config());
  std::unique_ptr<SymHeapGroup> heap;
  if (cfg.backend == "onesided") {
    heap = std::make_unique<SymHeapGroup>(cfg.nranks, cfg.symheap_bytes, cfg.comm_config());
    world->symheap = heap.get();
  }

  const auto n = static_cast<std::size_t>(cfg.nranks);
  std::vector<std::exception_ptr> errors(n);
  std::mutex done_mu;
  std::condition_variable done_cv;
  std::size_t done_count = 0;

  std::vector<std::thread> workers;
  workers.reserve(n);
  for (int r = 0; r < cfg.nranks; ++r) {
    workers.emplace_back([&, r] {
      try {
        Comm c(world.get(), r);
        body(c);
      } catch (...) {
        errors[static_cast<std::size_t>(r)] = std::current_exception();
        // A dead rank can never satisfy its collective partners.
        world->cancel.aborted.store(true);
      }
      std::lock_guard lk(done_mu);
      ++done_count;
      done_cv.notify_all();
    });
  }

  bool timed_out = false;
  {
    std::unique_lock lk(done_mu);
    const auto deadline = std::chrono::steady_clock::now() +
                          std::chrono::milliseconds(static_cast<long>(cfg.timeout_s * 1000.0));
    while (done_count < n) {
      if (done_cv.wait_until(lk, deadline) == std::cv_status::timeout && done_count < n) {
        timed_out = true;
        world->cancel.aborted.store(true);
        break;
      }
    }
  }
  // Aborted waits unstick within one polling slice; join everyone.
  for (auto& t : workers) t.join();
  if (heap) heap->shutdown();

  std::vector<RankReport> report(n);
  bool any_failed = false;
  std::string first_error;
  for (std::size_t r = 0; r < n; ++r) {
    report[r].rank = static_cast<int>(r);
    if (errors[r]) {
      try {
        std::rethrow_exception(errors[r]);
      } catch (const TimeoutError& e) {
        report[r].state = RankReport::State::stalled;
        report[r].message = e.what();
      } catch (const std::exception& e) {
        report[r].state = RankReport::State::failed;
        report[r].message = e.what();
        if (first_error.empty()) first_error = e.what();
        any_failed = true;
      }
    }
  }
  const bool any_stalled =
      timed_out || std::any_of(report.begin(), report.end(), [](const RankReport& s) {
        return s.state == RankReport::State::stalled;
      });
  if (!any_failed && !any_stalled) return;

  std::ostringstream msg;
  if (any_failed)
    msg << "rank failure: " << first_error;
  else
    msg << "harness timeout after " << cfg.timeout_s << " s";
  msg << " [";
  bool first = true;
  for (const auto& s : report) {
    if (s.state == RankReport::State::ok) continue;
    if (!first) msg << "; ";
    first = false;
    msg << "rank " << s.rank
        << (s.state == RankReport::State::failed ? " failed: " : " stalled: ") << s.message;
  }
  msg << "]";
  throw HarnessError(msg.str(), std::move(report));
}

} // namespace detail

std::vector<GraphSpec> random_graph_specs(std::uint64_t seed, int nranks,
                                          std::int64_t max_vertices) {
  Rng rng(mix_seed(seed, 0x5f0c));
  std::vector<GraphSpec> specs(static_cast<std::size_t>(nranks));

  std::int64_t total_roots = 0;
  for (auto& s : specs) {
    s.nroots = rng.range(0, max_vertices);
    total_roots += s.nroots;
  }
  std::vector<int> root_owners;
  for (int r = 0; r < nranks; ++r)
    if (specs[static_cast<std::size_t>(r)].nroots > 0) root_owners.push_back(r);

  for (int r = 0; r < nranks; ++r) {
    auto& s = specs[static_cast<std::size_t>(r)];
    if (total_roots == 0) continue;
    // Leaf space may exceed the connected count: the gap is isolated leaves.
    const std::int64_t leaf_space = rng.range(0, max_vertices);
    std::int64_t nleaves = rng.range(0, leaf_space);
    const bool contiguous = rng.chance(0.25);
    if (contiguous) {
      s.nleaves = nleaves;
      s.local.reset();
    } else {
      std::vector<std::int64_t> all(static_cast<std::size_t>(leaf_space));
      for (std::int64_t i = 0; i < leaf_space; ++i) all[static_cast<std::size_t>(i)] = i;
      rng.shuffle(all);
      all.resize(static_cast<std::size_t>(nleaves));
      std::sort(all.begin(), all.end());
      s.nleaves = nleaves;
      s.local = std::move(all);
    }
    for (std::int64_t i = 0; i < s.nleaves; ++i) {
      // Bias towards self edges so they occur even on large communicators.
      int owner;
      if (rng.chance(0.2) && specs[static_cast<std::size_t>(r)].nroots > 0)
        owner = r;
      else
        owner = root_owners[static_cast<std::size_t>(rng.bounded(root_owners.size()))];
      const std::int64_t off = rng.range(0, specs[static_cast<std::size_t>(owner)].nroots - 1);
      s.remote.push_back(RootRef{owner, off});
    }
  }
  return specs;
}

StarForest random_sf(Comm& comm, std::uint64_t seed, std::int64_t max_vertices) {
  auto specs = random_graph_specs(seed, comm.size(), max_vertices);
  StarForest sf(comm);
  sf.set_graph(specs[static_cast<std::size_t>(comm.rank())]);
  return sf;
}

} // namespace sf
