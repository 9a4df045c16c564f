// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The sfcomm authors
#pragma once

#include <functional>
#include <optional>
#include <string>
#include <type_traits>
#include <vector>

#include "sf/comm.hpp"
#include "sf/starforest.hpp"

namespace sf {

/// Multi-rank execution parameters. Environment variables SF_NRANKS,
/// SF_TRANSPORT, SF_SEED and SF_TIMEOUT_S seed the defaults; explicit
/// fields (e.g. from CLI flags) override them.
struct RunConfig {
  int nranks = 2;
  std::string backend = "threads"; // threads | sockets | onesided
  double timeout_s = 30.0;
  std::uint64_t seed = 1;
  bool deterministic = true;
  bool debug_checksum = false;
  bool force_remote = false;
  std::uint32_t put_delay_max_us = 0;
  std::size_t symheap_bytes = std::size_t(1) << 22;

  static RunConfig from_env();
  CommConfig comm_config() const;
};

/// Per-rank outcome attached to a failed run.
struct RankReport {
  int rank = -1;
  enum class State { ok, failed, stalled } state = State::ok;
  std::string message;
};

class HarnessError : public Error {
public:
  HarnessError(const std::string& msg, std::vector<RankReport> report)
      : Error(msg), report_(std::move(report)) {}
  const std::vector<RankReport>& report() const { return report_; }

private:
  std::vector<RankReport> report_;
};

namespace detail {
void run_ranks_erased(const RunConfig& cfg, const std::function<void(Comm&)>& body);
}

/// Spawn cfg.nranks workers, each running body(comm) for its rank; gather
/// per-rank results. A failing or stalled rank aborts the others and raises
/// HarnessError with a per-rank report; result slots are isolated per rank.
template <class F>
auto run_ranks(const RunConfig& cfg, F&& body) {
  using R = std::invoke_result_t<F&, Comm&>;
  if constexpr (std::is_void_v<R>) {
    detail::run_ranks_erased(cfg, [&](Comm& c) { body(c); });
  } else {
    std::vector<std::optional<R>> slots(static_cast<std::size_t>(cfg.nranks));
    detail::run_ranks_erased(
        cfg, [&](Comm& c) { slots[static_cast<std::size_t>(c.rank())] = body(c); });
    std::vector<R> out;
    out.reserve(slots.size());
    for (auto& s : slots) out.push_back(std::move(*s));
    return out;
  }
}

/// Deterministic random star forest: every rank derives the same global
/// graph from `seed` and keeps its slice, so RootRefs are collectively
/// consistent by construction. Self edges, isolated leaves and zero-degree
/// roots all occur with nonzero probability. The result is graph-set;
/// callers run setup.
std::vector<GraphSpec> random_graph_specs(std::uint64_t seed, int nranks,
                                          std::int64_t max_vertices);
StarForest random_sf(Comm& comm, std::uint64_t seed, std::int64_t max_vertices);

} // namespace sf
