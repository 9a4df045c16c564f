// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The sfcomm authors
#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace sf {

/// Two-rank latency benchmark: a forest with n roots on rank 0 and n
/// contiguous leaves on rank 1; a replace-bcast sends the message, a
/// replace-reduce bounces it back. Message sizes sweep min..max bytes in
/// geometric steps of 4.
struct PingPongConfig {
  std::int64_t min_bytes = 1024;
  std::int64_t max_bytes = std::int64_t(4) << 20;
  int iters = 50;
  int warmup = 5;
  int nranks = 2; // must be 2
  std::string backend = "threads";
  double timeout_s = 300.0;
  std::uint64_t seed = 1;
};

struct PingPongRow {
  std::int64_t bytes = 0;
  std::string backend;
  int iters = 0;
  double median_us = 0.0;
  double min_us = 0.0;
};

/// Runs the sweep; every iteration's payload is integrity-checked on both
/// ends (iteration-stamped pattern). Throws on any mismatch.
std::vector<PingPongRow> pingpong(const PingPongConfig& cfg);

/// Header line plus one row per size: bytes,backend,iters,median_us,min_us
std::string pingpong_csv(std::span<const PingPongRow> rows);

} // namespace sf
