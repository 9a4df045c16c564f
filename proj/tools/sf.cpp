// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The sfcomm authors
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "sf/bench.hpp"
#include "sf/harness.hpp"
#include "sf/selfcheck.hpp"
#include "sf/spmv.hpp"

namespace {

void write_out(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream f(path);
  if (!f.good()) throw sf::Error("cannot open output file " + path);
  f << text;
}

int run_pingpong(const sf::PingPongConfig& cfg, const std::string& out_path) {
  const auto rows = sf::pingpong(cfg);
  write_out(out_path, sf::pingpong_csv(rows));
  return 0;
}

int run_spmv(const std::string& matrix_path, int nranks, bool transpose,
             const std::string& backend, double timeout_s, const std::string& out_path) {
  std::ifstream in(matrix_path);
  if (!in.good()) throw sf::Error("cannot open matrix file " + matrix_path);
  const auto global = sf::read_matrix_market(in);
  if (global.rows != global.cols)
    throw sf::Error("spmv demo expects a square matrix (vector layouts must conform)");
  const auto layout = sf::Layout::contiguous(global.rows, nranks);

  std::vector<double> x(static_cast<std::size_t>(global.rows));
  for (std::size_t i = 0; i < x.size(); ++i)
    x[i] = 1.0 + 0.25 * static_cast<double>(i % 7);

  sf::RunConfig cfg;
  cfg.nranks = nranks;
  cfg.backend = backend;
  cfg.timeout_s = timeout_s;
  auto pieces = sf::run_ranks(cfg, [&](sf::Comm& comm) {
    const int me = comm.rank();
    auto m = sf::split_matrix(global, layout, layout, me);
    sf::StarForest sfg = sf::build_ghost_sf(comm, m);
    sf::GhostVector<double> gx;
    gx.owned.assign(x.begin() + layout.begin(me), x.begin() + layout.end(me));
    gx.lvec.assign(m.garray.size(), 0.0);
    std::vector<double> y(static_cast<std::size_t>(layout.local_size(me)), 0.0);
    if (transpose)
      sf::spmv_transpose(m, sfg, gx, y);
    else
      sf::spmv(m, sfg, gx, y);
    return y;
  });

  std::ostringstream csv;
  csv << "row,value\n";
  std::int64_t row = 0;
  for (const auto& p : pieces)
    for (double v : p) csv << row++ << ',' << v << '\n';
  write_out(out_path, csv.str());

  // Sanity against the sequential product, reported on stderr.
  std::vector<double> expect(static_cast<std::size_t>(global.rows), 0.0);
  if (transpose)
    global.multiply_transpose_add(x, expect);
  else
    global.multiply(x, expect);
  double max_rel = 0.0;
  std::size_t i = 0;
  for (const auto& p : pieces)
    for (double v : p) {
      const double scale = std::max({1.0, std::abs(v), std::abs(expect[i])});
      max_rel = std::max(max_rel, std::abs(v - expect[i]) / scale);
      ++i;
    }
  std::cerr << "spmv" << (transpose ? "-transpose" : "") << ": " << global.rows << " rows, "
            << nranks << " ranks, max relative error vs sequential product = " << max_rel
            << "\n";
  return max_rel <= 1e-12 ? 0 : 1;
}

int run_selftest(const sf::selfcheck::Options& opt) {
  using namespace sf::selfcheck;
  int failures = 0;
  auto report = [&](const Outcome& o) {
    std::cout << (o.ok() ? "[PASS] " : "[FAIL] ") << o.name << " (" << o.trials << " trials)";
    if (!o.ok()) std::cout << " — " << o.first_failure;
    std::cout << "\n";
    if (!o.ok()) ++failures;
  };
  report(ops_vs_oracle(opt));
  report(duality(opt));
  report(discovery_equivalence(opt));
  report(setup_duality(opt));
  report(gather_scatter_roundtrip(opt));
  report(split_transparency(opt));
  report(fetch_serialization(opt));
  report(spmv_random(opt));
  report(submatrix_selection(opt));
  report(onesided_bcast_loop(opt, 50, 200));
  report(fence_ordering(opt, 1000));
  return failures == 0 ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"star-forest communication library demos"};
  app.require_subcommand(1);

  const sf::RunConfig env = sf::RunConfig::from_env();

  auto* pp = app.add_subcommand("pingpong", "two-rank bcast/reduce latency sweep");
  sf::PingPongConfig ppc;
  ppc.backend = env.backend;
  ppc.nranks = env.nranks == 2 ? 2 : env.nranks; // validated by the benchmark
  ppc.seed = env.seed;
  std::string pp_out;
  pp->add_option("--min-bytes", ppc.min_bytes, "smallest message size");
  pp->add_option("--max-bytes", ppc.max_bytes, "largest message size");
  pp->add_option("--iters", ppc.iters, "timed iterations per size");
  pp->add_option("--warmup", ppc.warmup, "warmup iterations per size");
  pp->add_option("--backend", ppc.backend, "threads | sockets | onesided");
  pp->add_option("--out", pp_out, "CSV output file (default stdout)");

  auto* sp = app.add_subcommand("spmv", "distributed SpMV ghost-exchange demo");
  std::string matrix_path, sp_out;
  int sp_ranks = env.nranks;
  bool transpose = false;
  std::string sp_backend = env.backend;
  sp->add_option("--matrix", matrix_path, "Matrix Market coordinate file")->required();
  sp->add_option("--ranks", sp_ranks, "number of ranks");
  sp->add_flag("--transpose", transpose, "compute A^T x instead of A x");
  sp->add_option("--backend", sp_backend, "threads | sockets | onesided");
  sp->add_option("--out", sp_out, "CSV output file (default stdout)");

  auto* st = app.add_subcommand("selftest", "oracle-checked self test suites");
  sf::selfcheck::Options opt;
  opt.seed = env.seed;
  st->add_option("--seed", opt.seed, "base seed");
  st->add_option("--trials", opt.trials, "trials per suite");
  st->add_option("--backend", opt.backend, "threads | sockets | onesided");

  CLI11_PARSE(app, argc, argv);

  try {
    if (pp->parsed()) return run_pingpong(ppc, pp_out);
    if (sp->parsed()) return run_spmv(matrix_path, sp_ranks, transpose, sp_backend,
                                      env.timeout_s > 30 ? env.timeout_s : 120.0, sp_out);
    if (st->parsed()) return run_selftest(opt);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
