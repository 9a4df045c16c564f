// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The sfcomm authors
#pragma once

#include <cstdint>
#include <string>

namespace sf::selfcheck {

struct Options {
  std::uint64_t seed = 1;
  int trials = 50;
  int min_ranks = 2;
  int max_ranks = 8;
  std::int64_t max_vertices = 64;
  std::string backend = "threads";
  double timeout_s = 60.0;
};

struct Outcome {
  std::string name;
  int trials = 0;
  int failures = 0;
  std::string first_failure;
  bool ok() const { return failures == 0; }
};

/// bcast/reduce/gather/scatter/fetch-and-op on random forests, bit-compared
/// against the sequential edge-list oracle (int64 units, both setup
/// algorithms exercised).
Outcome ops_vs_oracle(const Options& opt);

/// reduce(sum) equals the oracle bcast over the transposed graph.
Outcome duality(const Options& opt);

/// Dense and consensus discovery produce identical results, equal to the
/// sequential transpose of the input relation (includes empty and
/// all-to-one relations).
Outcome discovery_equivalence(const Options& opt);

/// Dense setup == consensus setup, and the edge multiset reconstructed from
/// root_ranks equals the one from leaf_ranks (and the original graph).
Outcome setup_duality(const Options& opt);

/// gather then scatter restores leafdata exactly; multi-SF degrees are all
/// <= 1 and its root count equals the degree sum.
Outcome gather_scatter_roundtrip(const Options& opt);

/// Optimized local/remote split produces results identical to forcing every
/// edge through the transport.
Outcome split_transparency(const Options& opt);

/// One-sided put/signal bcast loop against the pure two-sided reference,
/// with injected delivery delays. `iters` loop iterations per rank count in
/// `{2,4,6} ∩ [min_ranks, max_ranks]`.
Outcome onesided_bcast_loop(const Options& opt, int iters, std::uint32_t delay_max_us);

/// Fence ordering: adversarially scheduled put/fence/signal trials; the
/// signal must never be observable before its pre-fence data.
Outcome fence_ordering(const Options& opt, int trials_per_run);

/// Fetch-and-op serialization: deterministic mode matches the oracle order
/// exactly; free-order mode yields some serialization (exhaustive n!
/// prefix-chain check for roots of degree <= 4).
Outcome fetch_serialization(const Options& opt);

/// Distributed SpMV and its transpose against the sequential product
/// (float64 within 1e-12 relative error, int64 bit-exact).
Outcome spmv_random(const Options& opt);

/// Two-forest submatrix column selection against a set-membership oracle.
Outcome submatrix_selection(const Options& opt);

} // namespace sf::selfcheck
