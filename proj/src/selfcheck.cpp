// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The sfcomm authors
#include "sf/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

#include "sf/bench.hpp"
#include "sf/exchange.hpp"
#include "sf/harness.hpp"
#include "sf/oracle.hpp"
#include "sf/ops.hpp"
#include "sf/spmv.hpp"
#include "sf/symheap.hpp"

namespace sf::selfcheck {

namespace {

std::vector<std::int64_t> gen_ints(std::uint64_t seed, std::uint64_t salt, std::size_t n) {
  Rng rng(mix_seed(seed, salt));
  std::vector<std::int64_t> v(n);
  for (auto& x : v) x = rng.range(-1000, 1000);
  return v;
}

void note_failure(Outcome& out, const std::string& msg) {
  ++out.failures;
  if (out.first_failure.empty()) out.first_failure = msg;
}

template <class T>
bool same(const std::vector<T>& a, const std::vector<T>& b) {
  return a == b;
}

std::string dump_mismatch(const char* what, int trial) {
  std::ostringstream os;
  os << what << " mismatch vs oracle (trial " << trial << ")";
  return os.str();
}

struct TrialGraph {
  int nranks;
  std::vector<GraphSpec> specs;
  oracle::GlobalGraph graph;
  oracle::Data root0, leaf0;
};

TrialGraph make_trial(const Options& opt, int t) {
  const std::uint64_t ts = opt.seed + static_cast<std::uint64_t>(t) * 7919 + 13;
  Rng meta(mix_seed(ts, 0x11));
  TrialGraph tg;
  tg.nranks = static_cast<int>(meta.range(opt.min_ranks, opt.max_ranks));
  tg.specs = random_graph_specs(ts, tg.nranks, opt.max_vertices);
  tg.graph = oracle::GlobalGraph::from_specs(tg.specs);
  tg.root0.resize(static_cast<std::size_t>(tg.nranks));
  tg.leaf0.resize(static_cast<std::size_t>(tg.nranks));
  for (int r = 0; r < tg.nranks; ++r) {
    tg.root0[static_cast<std::size_t>(r)] = gen_ints(
        ts, 100 + static_cast<std::uint64_t>(r), static_cast<std::size_t>(tg.graph.nroots(r)));
    tg.leaf0[static_cast<std::size_t>(r)] =
        gen_ints(ts, 200 + static_cast<std::uint64_t>(r),
                 static_cast<std::size_t>(tg.graph.leaf_bound(r)));
  }
  return tg;
}

RunConfig trial_config(const Options& opt, const TrialGraph& tg, int t) {
  RunConfig cfg;
  cfg.nranks = tg.nranks;
  cfg.backend = opt.backend;
  cfg.seed = opt.seed + static_cast<std::uint64_t>(t);
  cfg.timeout_s = opt.timeout_s;
  return cfg;
}

} // namespace

Outcome ops_vs_oracle(const Options& opt) {
  Outcome out{.name = "ops-vs-oracle"};
  const ReduceOp bcast_ops[] = {ReduceOp::replace, ReduceOp::sum, ReduceOp::max};
  const ReduceOp reduce_ops[] = {ReduceOp::sum, ReduceOp::max, ReduceOp::min, ReduceOp::bor};
  for (int t = 0; t < opt.trials; ++t) {
    ++out.trials;
    const TrialGraph tg = make_trial(opt, t);
    const ReduceOp bop = bcast_ops[t % 3];
    const ReduceOp rop = reduce_ops[t % 4];
    const auto deg = oracle::degrees(tg.graph);

    struct RankOut {
      std::vector<std::int64_t> bcast_leaf, reduce_root, gathered, scattered, fao_root,
          fao_update;
    };
    std::vector<RankOut> got;
    try {
      got = run_ranks(trial_config(opt, tg, t), [&](Comm& comm) -> RankOut {
        const int me = comm.rank();
        StarForest sf(comm);
        sf.set_graph(tg.specs[static_cast<std::size_t>(me)]);
        sf.setup(t % 2 == 0 ? SetupAlg::dense : SetupAlg::consensus);
        const Unit u = unit_of<std::int64_t>();

        RankOut r;
        r.bcast_leaf = tg.leaf0[static_cast<std::size_t>(me)];
        bcast(sf, u, tg.root0[static_cast<std::size_t>(me)].data(), r.bcast_leaf.data(), bop);

        r.reduce_root = tg.root0[static_cast<std::size_t>(me)];
        reduce(sf, u, tg.leaf0[static_cast<std::size_t>(me)].data(), r.reduce_root.data(), rop);

        const auto degrees = sf.compute_degrees();
        const auto nmulti = std::accumulate(degrees.begin(), degrees.end(), std::int64_t{0});
        r.gathered.assign(static_cast<std::size_t>(nmulti), -7777);
        gather(sf, u, tg.leaf0[static_cast<std::size_t>(me)].data(), r.gathered.data());

        r.scattered = tg.leaf0[static_cast<std::size_t>(me)];
        scatter(sf, u, r.gathered.data(), r.scattered.data());

        r.fao_root = tg.root0[static_cast<std::size_t>(me)];
        r.fao_update = tg.leaf0[static_cast<std::size_t>(me)];
        fetch_and_op(sf, u, r.fao_root.data(), tg.leaf0[static_cast<std::size_t>(me)].data(),
                     r.fao_update.data(), ReduceOp::sum);
        return r;
      });
    } catch (const std::exception& e) {
      note_failure(out, std::string("trial ") + std::to_string(t) + " raised: " + e.what());
      continue;
    }

    oracle::Data obl = tg.leaf0;
    oracle::bcast(tg.graph, tg.root0, obl, bop);
    oracle::Data orr = tg.root0;
    oracle::reduce(tg.graph, tg.leaf0, orr, rop);
    oracle::Data og(static_cast<std::size_t>(tg.nranks));
    for (int r = 0; r < tg.nranks; ++r) {
      const auto m = std::accumulate(deg[static_cast<std::size_t>(r)].begin(),
                                     deg[static_cast<std::size_t>(r)].end(), std::int64_t{0});
      og[static_cast<std::size_t>(r)].assign(static_cast<std::size_t>(m), -7777);
    }
    oracle::gather(tg.graph, tg.leaf0, og);
    oracle::Data osc = tg.leaf0;
    oracle::scatter(tg.graph, og, osc);
    oracle::Data ofr = tg.root0, oflu = tg.leaf0;
    oracle::fetch_and_op(tg.graph, ofr, tg.leaf0, oflu, ReduceOp::sum);

    for (int r = 0; r < tg.nranks; ++r) {
      const auto ri = static_cast<std::size_t>(r);
      if (!same(got[ri].bcast_leaf, obl[ri])) note_failure(out, dump_mismatch("bcast", t));
      if (!same(got[ri].reduce_root, orr[ri])) note_failure(out, dump_mismatch("reduce", t));
      if (!same(got[ri].gathered, og[ri])) note_failure(out, dump_mismatch("gather", t));
      if (!same(got[ri].scattered, osc[ri])) note_failure(out, dump_mismatch("scatter", t));
      if (!same(got[ri].fao_root, ofr[ri])) note_failure(out, dump_mismatch("fetch-root", t));
      if (!same(got[ri].fao_update, oflu[ri]))
        note_failure(out, dump_mismatch("fetch-update", t));
    }
  }
  return out;
}

Outcome duality(const Options& opt) {
  Outcome out{.name = "duality"};
  for (int t = 0; t < opt.trials; ++t) {
    ++out.trials;
    const TrialGraph tg = make_trial(opt, t);
    std::vector<std::vector<std::int64_t>> got;
    try {
      got = run_ranks(trial_config(opt, tg, t), [&](Comm& comm) {
        const int me = comm.rank();
        StarForest sf(comm);
        sf.set_graph(tg.specs[static_cast<std::size_t>(me)]);
        sf.setup();
        auto root = tg.root0[static_cast<std::size_t>(me)];
        reduce(sf, unit_of<std::int64_t>(), tg.leaf0[static_cast<std::size_t>(me)].data(),
               root.data(), ReduceOp::sum);
        return root;
      });
    } catch (const std::exception& e) {
      note_failure(out, std::string("trial raised: ") + e.what());
      continue;
    }
    // Oracle bcast over the transposed graph: the transpose's roots are the
    // original leaves, so the original leafdata feeds it and the original
    // rootdata accumulates.
    const auto tgraph = tg.graph.transposed();
    oracle::Data expect = tg.root0;
    oracle::bcast(tgraph, tg.leaf0, expect, ReduceOp::sum);
    for (int r = 0; r < tg.nranks; ++r)
      if (!same(got[static_cast<std::size_t>(r)], expect[static_cast<std::size_t>(r)]))
        note_failure(out, dump_mismatch("transpose-duality", t));
  }
  return out;
}

Outcome discovery_equivalence(const Options& opt) {
  Outcome out{.name = "discovery"};
  for (int t = 0; t < opt.trials; ++t) {
    ++out.trials;
    const std::uint64_t ts = opt.seed + static_cast<std::uint64_t>(t) * 104729;
    Rng meta(mix_seed(ts, 0x22));
    const int nranks = static_cast<int>(meta.range(opt.min_ranks, opt.max_ranks));

    // targets[src] = list of (dest, payload); trial 0 empty, trial 1 all-to-one
    std::vector<std::vector<RankPayload>> targets(static_cast<std::size_t>(nranks));
    for (int src = 0; src < nranks; ++src) {
      if (t == 0) break;
      Rng rng(mix_seed(ts, 0x300 + static_cast<std::uint64_t>(src)));
      for (int dest = 0; dest < nranks; ++dest) {
        const bool pick = t == 1 ? dest == 0 : rng.chance(dest == src ? 0.25 : 0.35);
        if (!pick) continue;
        RankPayload rp;
        rp.rank = dest;
        const auto len = rng.bounded(24);
        rp.payload.resize(len);
        for (auto& b : rp.payload) b = static_cast<std::byte>(rng.bounded(256));
        targets[static_cast<std::size_t>(src)].push_back(std::move(rp));
      }
    }

    struct Got {
      std::vector<RankPayload> dense, consensus;
    };
    std::vector<Got> got;
    try {
      RunConfig cfg;
      cfg.nranks = nranks;
      cfg.backend = opt.backend;
      cfg.timeout_s = opt.timeout_s;
      cfg.seed = ts;
      got = run_ranks(cfg, [&](Comm& comm) {
        Got g;
        g.dense = sparse_exchange_dense(comm, targets[static_cast<std::size_t>(comm.rank())]);
        g.consensus =
            sparse_exchange_consensus(comm, targets[static_cast<std::size_t>(comm.rank())]);
        return g;
      });
    } catch (const std::exception& e) {
      note_failure(out, std::string("trial raised: ") + e.what());
      continue;
    }

    // sequential transpose oracle
    for (int dest = 0; dest < nranks; ++dest) {
      std::vector<RankPayload> expect;
      for (int src = 0; src < nranks; ++src)
        for (const auto& rp : targets[static_cast<std::size_t>(src)])
          if (rp.rank == dest) expect.push_back(RankPayload{src, rp.payload});
      auto equal = [&](const std::vector<RankPayload>& a) {
        if (a.size() != expect.size()) return false;
        for (std::size_t i = 0; i < a.size(); ++i)
          if (a[i].rank != expect[i].rank || a[i].payload != expect[i].payload) return false;
        return true;
      };
      if (!equal(got[static_cast<std::size_t>(dest)].dense))
        note_failure(out, dump_mismatch("dense-discovery", t));
      if (!equal(got[static_cast<std::size_t>(dest)].consensus))
        note_failure(out, dump_mismatch("consensus-discovery", t));
    }
  }
  return out;
}

namespace {

struct InfoDump {
  std::vector<std::pair<int, std::vector<std::int64_t>>> root_ranks, leaf_ranks;
  bool self_first = false;
  bool operator==(const InfoDump&) const = default;
};

InfoDump dump_info(const TwoSidedInfo& info) {
  InfoDump d;
  for (const auto& g : info.root_ranks) d.root_ranks.push_back({g.rank, g.items});
  for (const auto& g : info.leaf_ranks) d.leaf_ranks.push_back({g.rank, g.items});
  d.self_first = info.self_first;
  return d;
}

} // namespace

Outcome setup_duality(const Options& opt) {
  Outcome out{.name = "setup-duality"};
  for (int t = 0; t < opt.trials; ++t) {
    ++out.trials;
    const TrialGraph tg = make_trial(opt, t);
    std::vector<std::pair<InfoDump, InfoDump>> infos;
    try {
      infos = run_ranks(trial_config(opt, tg, t), [&](Comm& comm) {
        StarForest a(comm), b(comm);
        a.set_graph(tg.specs[static_cast<std::size_t>(comm.rank())]);
        b.set_graph(tg.specs[static_cast<std::size_t>(comm.rank())]);
        a.setup(SetupAlg::dense);
        b.setup(SetupAlg::consensus);
        return std::pair(dump_info(a.two_sided()), dump_info(b.two_sided()));
      });
    } catch (const std::exception& e) {
      note_failure(out, std::string("trial raised: ") + e.what());
      continue;
    }

    using Triple = std::tuple<int, std::int64_t, int>; // root rank, offset, leaf rank
    std::multiset<Triple> from_root_side, from_leaf_side, from_graph;
    for (int q = 0; q < tg.nranks; ++q) {
      const auto& [dense_info, consensus_info] = infos[static_cast<std::size_t>(q)];
      if (!(dense_info == consensus_info)) {
        note_failure(out, dump_mismatch("dense-vs-consensus-info", t));
        continue;
      }
      const auto& spec = tg.specs[static_cast<std::size_t>(q)];
      for (const auto& [rank, ordinals] : dense_info.root_ranks)
        for (auto o : ordinals)
          from_root_side.insert(
              {rank, spec.remote[static_cast<std::size_t>(o)].offset, q});
      for (const auto& [rank, offsets] : dense_info.leaf_ranks)
        for (auto off : offsets) from_leaf_side.insert({q, off, rank});
    }
    for (const auto& e : tg.graph.edges)
      from_graph.insert({e.root_rank, e.root_off, e.leaf_rank});
    if (from_root_side != from_graph) note_failure(out, dump_mismatch("root-side-edges", t));
    if (from_leaf_side != from_graph) note_failure(out, dump_mismatch("leaf-side-edges", t));
  }
  return out;
}

Outcome gather_scatter_roundtrip(const Options& opt) {
  Outcome out{.name = "gather-scatter-roundtrip"};
  for (int t = 0; t < opt.trials; ++t) {
    ++out.trials;
    const TrialGraph tg = make_trial(opt, t);
    struct R {
      std::vector<std::int64_t> restored, multi_degrees;
      std::int64_t multi_nroots = 0, degree_sum = 0;
    };
    std::vector<R> got;
    try {
      got = run_ranks(trial_config(opt, tg, t), [&](Comm& comm) {
        const int me = comm.rank();
        StarForest sf(comm);
        sf.set_graph(tg.specs[static_cast<std::size_t>(me)]);
        sf.setup();
        const Unit u = unit_of<std::int64_t>();
        const auto degrees = sf.compute_degrees();

        R r;
        r.degree_sum = std::accumulate(degrees.begin(), degrees.end(), std::int64_t{0});
        std::vector<std::int64_t> multiroot(static_cast<std::size_t>(r.degree_sum));
        gather(sf, u, tg.leaf0[static_cast<std::size_t>(me)].data(), multiroot.data());
        r.restored.assign(tg.leaf0[static_cast<std::size_t>(me)].size(), -31337);
        scatter(sf, u, multiroot.data(), r.restored.data());

        r.multi_nroots = sf.multi_sf().nroots();
        r.multi_degrees = sf.multi_sf().compute_degrees();
        return r;
      });
    } catch (const std::exception& e) {
      note_failure(out, std::string("trial raised: ") + e.what());
      continue;
    }
    for (int q = 0; q < tg.nranks; ++q) {
      const auto& r = got[static_cast<std::size_t>(q)];
      const auto& spec = tg.specs[static_cast<std::size_t>(q)];
      if (r.multi_nroots != r.degree_sum)
        note_failure(out, dump_mismatch("multi-nroots", t));
      for (auto d : r.multi_degrees)
        if (d > 1) note_failure(out, dump_mismatch("multi-degree", t));
      // connected leaves restored exactly; untouched slots keep the sentinel
      std::vector<bool> connected(r.restored.size(), false);
      for (std::int64_t o = 0; o < spec.nleaves; ++o) {
        const auto idx = spec.local ? (*spec.local)[static_cast<std::size_t>(o)] : o;
        connected[static_cast<std::size_t>(idx)] = true;
      }
      for (std::size_t i = 0; i < r.restored.size(); ++i) {
        const auto expect =
            connected[i] ? tg.leaf0[static_cast<std::size_t>(q)][i] : -31337;
        if (r.restored[i] != expect) note_failure(out, dump_mismatch("roundtrip", t));
      }
    }
  }
  return out;
}

Outcome split_transparency(const Options& opt) {
  Outcome out{.name = "split-transparency"};
  for (int t = 0; t < opt.trials; ++t) {
    ++out.trials;
    const TrialGraph tg = make_trial(opt, t);
    auto run_mode = [&](bool force) {
      RunConfig cfg = trial_config(opt, tg, t);
      cfg.force_remote = force;
      return run_ranks(cfg, [&](Comm& comm) {
        const int me = comm.rank();
        StarForest sf(comm);
        sf.set_graph(tg.specs[static_cast<std::size_t>(me)]);
        sf.setup();
        const Unit u = unit_of<std::int64_t>();
        auto leaf = tg.leaf0[static_cast<std::size_t>(me)];
        bcast(sf, u, tg.root0[static_cast<std::size_t>(me)].data(), leaf.data(), ReduceOp::sum);
        auto root = tg.root0[static_cast<std::size_t>(me)];
        reduce(sf, u, tg.leaf0[static_cast<std::size_t>(me)].data(), root.data(),
               ReduceOp::sum);
        leaf.insert(leaf.end(), root.begin(), root.end());
        return leaf;
      });
    };
    try {
      const auto split = run_mode(false);
      const auto forced = run_mode(true);
      if (split != forced) note_failure(out, dump_mismatch("split-vs-forced", t));
    } catch (const std::exception& e) {
      note_failure(out, std::string("trial raised: ") + e.what());
    }
  }
  return out;
}

Outcome onesided_bcast_loop(const Options& opt, int iters, std::uint32_t delay_max_us) {
  Outcome out{.name = "onesided-bcast-loop"};
  for (int nranks : {2, 4, 6}) {
    if (nranks < opt.min_ranks || nranks > opt.max_ranks) continue;
    ++out.trials;
    const std::uint64_t ts = opt.seed + static_cast<std::uint64_t>(nranks) * 31;
    const auto specs = random_graph_specs(ts, nranks, 8);
    const auto graph = oracle::GlobalGraph::from_specs(specs);

    auto loop_body = [&](Comm& comm) {
      const int me = comm.rank();
      const auto& spec = specs[static_cast<std::size_t>(me)];
      StarForest sf(comm);
      sf.set_graph(spec);
      sf.setup();
      const Unit u = unit_of<std::int64_t>();
      std::int64_t bound = 0;
      for (std::int64_t o = 0; o < spec.nleaves; ++o)
        bound = std::max(bound, (spec.local ? (*spec.local)[static_cast<std::size_t>(o)] : o) + 1);
      std::vector<std::int64_t> rootdata(static_cast<std::size_t>(spec.nroots));
      std::vector<std::vector<std::int64_t>> results;
      results.reserve(static_cast<std::size_t>(iters));
      for (int it = 0; it < iters; ++it) {
        for (std::int64_t i = 0; i < spec.nroots; ++i)
          rootdata[static_cast<std::size_t>(i)] = static_cast<std::int64_t>(
              mix_seed(ts + static_cast<std::uint64_t>(it),
                       (static_cast<std::uint64_t>(me) << 32) ^ static_cast<std::uint64_t>(i)));
        std::vector<std::int64_t> leafdata(static_cast<std::size_t>(bound), -1);
        bcast(sf, u, rootdata.data(), leafdata.data(), ReduceOp::replace);
        results.push_back(std::move(leafdata));
      }
      return results;
    };

    try {
      RunConfig ref_cfg;
      ref_cfg.nranks = nranks;
      ref_cfg.backend = "threads";
      ref_cfg.seed = ts;
      ref_cfg.timeout_s = opt.timeout_s;
      const auto reference = run_ranks(ref_cfg, loop_body);

      RunConfig os_cfg = ref_cfg;
      os_cfg.backend = "onesided";
      os_cfg.put_delay_max_us = delay_max_us;
      os_cfg.timeout_s = std::max(opt.timeout_s, 240.0);
      const auto onesided = run_ranks(os_cfg, loop_body);

      if (reference != onesided)
        note_failure(out, "one-sided payloads diverge from two-sided reference at " +
                              std::to_string(nranks) + " ranks");
    } catch (const std::exception& e) {
      note_failure(out,
                   std::to_string(nranks) + "-rank loop raised: " + std::string(e.what()));
    }
  }
  return out;
}

Outcome fence_ordering(const Options& opt, int trials_per_run) {
  Outcome out{.name = "fence-ordering"};
  out.trials = trials_per_run;
  constexpr std::size_t kBytes = 1024;
  RunConfig cfg;
  cfg.nranks = 2;
  cfg.backend = "onesided";
  cfg.seed = opt.seed;
  cfg.timeout_s = std::max(opt.timeout_s, 120.0);
  try {
    auto violations = run_ranks(cfg, [&](Comm& comm) -> std::int64_t {
      SymHeapGroup* heap = comm.symheap();
      const auto data = heap->collective_alloc(comm, kBytes);
      const auto sig = heap->collective_alloc(comm, 8);
      const auto ack = heap->collective_alloc(comm, 8);
      const int me = comm.rank();
      std::int64_t bad = 0;
      if (me == 0) {
        std::vector<std::byte> payload(kBytes);
        for (int t = 1; t <= trials_per_run; ++t) {
          for (std::size_t i = 0; i < kBytes; ++i)
            payload[i] = static_cast<std::byte>((static_cast<std::size_t>(t) * 131 + i) & 0xff);
          heap->put_nbi(0, 1, data.offset, payload);
          heap->fence(0, 1);
          heap->signal_set(0, 1, sig.offset, static_cast<std::uint64_t>(t));
          const std::uint64_t ack_off = ack.offset;
          heap->wait_until_all(0, std::span<const std::uint64_t>(&ack_off, 1),
                               SymHeapGroup::WaitCond::equals, static_cast<std::uint64_t>(t),
                               comm.world().cancel);
        }
      } else {
        for (int t = 1; t <= trials_per_run; ++t) {
          const std::uint64_t sig_off = sig.offset;
          heap->wait_until_all(1, std::span<const std::uint64_t>(&sig_off, 1),
                               SymHeapGroup::WaitCond::equals, static_cast<std::uint64_t>(t),
                               comm.world().cancel);
          const std::byte* got = heap->region(1) + data.offset;
          for (std::size_t i = 0; i < kBytes; ++i) {
            if (got[i] !=
                static_cast<std::byte>((static_cast<std::size_t>(t) * 131 + i) & 0xff)) {
              ++bad;
              break;
            }
          }
          heap->signal_set(1, 0, ack.offset, static_cast<std::uint64_t>(t));
        }
      }
      return bad;
    });
    for (auto v : violations)
      if (v != 0)
        note_failure(out, "signal observed before pre-fence data in " + std::to_string(v) +
                              " trials");
  } catch (const std::exception& e) {
    note_failure(out, std::string("fence run raised: ") + e.what());
  }
  return out;
}

namespace {

// Graph where no root collects more than max_degree leaves.
std::vector<GraphSpec> degree_capped_specs(std::uint64_t seed, int nranks,
                                           std::int64_t max_vertices,
                                           std::int64_t max_degree) {
  Rng rng(mix_seed(seed, 0x4d));
  std::vector<GraphSpec> specs(static_cast<std::size_t>(nranks));
  std::vector<std::vector<std::int64_t>> degree(static_cast<std::size_t>(nranks));
  for (int r = 0; r < nranks; ++r) {
    auto& s = specs[static_cast<std::size_t>(r)];
    s.nroots = rng.range(1, max_vertices);
    degree[static_cast<std::size_t>(r)].assign(static_cast<std::size_t>(s.nroots), 0);
  }
  for (int r = 0; r < nranks; ++r) {
    auto& s = specs[static_cast<std::size_t>(r)];
    const std::int64_t want = rng.range(0, max_vertices);
    for (std::int64_t i = 0; i < want; ++i) {
      for (int attempt = 0; attempt < 8; ++attempt) {
        const int owner = static_cast<int>(rng.bounded(static_cast<std::uint64_t>(nranks)));
        const auto off = rng.range(0, specs[static_cast<std::size_t>(owner)].nroots - 1);
        if (degree[static_cast<std::size_t>(owner)][static_cast<std::size_t>(off)] >=
            max_degree)
          continue;
        ++degree[static_cast<std::size_t>(owner)][static_cast<std::size_t>(off)];
        s.remote.push_back(RootRef{owner, off});
        break;
      }
    }
    s.nleaves = static_cast<std::int64_t>(s.remote.size());
  }
  return specs;
}

} // namespace

Outcome fetch_serialization(const Options& opt) {
  Outcome out{.name = "fetch-serialization"};
  for (int t = 0; t < opt.trials; ++t) {
    ++out.trials;
    const std::uint64_t ts = opt.seed + static_cast<std::uint64_t>(t) * 271;
    Rng meta(mix_seed(ts, 0x55));
    const int nranks = static_cast<int>(meta.range(opt.min_ranks, opt.max_ranks));
    const auto specs = degree_capped_specs(ts, nranks, 12, 4);
    const auto graph = oracle::GlobalGraph::from_specs(specs);

    oracle::Data root0(static_cast<std::size_t>(nranks)), leaf0(static_cast<std::size_t>(nranks));
    for (int r = 0; r < nranks; ++r) {
      root0[static_cast<std::size_t>(r)] =
          gen_ints(ts, 300 + static_cast<std::uint64_t>(r),
                   static_cast<std::size_t>(graph.nroots(r)));
      leaf0[static_cast<std::size_t>(r)] =
          gen_ints(ts, 400 + static_cast<std::uint64_t>(r),
                   static_cast<std::size_t>(graph.leaf_bound(r)));
    }

    struct R {
      std::vector<std::int64_t> root, update;
    };
    auto run_mode = [&](bool deterministic) {
      RunConfig cfg;
      cfg.nranks = nranks;
      cfg.backend = opt.backend;
      cfg.seed = ts;
      cfg.timeout_s = opt.timeout_s;
      cfg.deterministic = deterministic;
      return run_ranks(cfg, [&](Comm& comm) {
        const int me = comm.rank();
        StarForest sf(comm);
        sf.set_graph(specs[static_cast<std::size_t>(me)]);
        sf.setup();
        R r;
        r.root = root0[static_cast<std::size_t>(me)];
        r.update = leaf0[static_cast<std::size_t>(me)];
        fetch_and_op(sf, unit_of<std::int64_t>(), r.root.data(),
                     leaf0[static_cast<std::size_t>(me)].data(), r.update.data(),
                     ReduceOp::sum);
        return r;
      });
    };

    try {
      // Deterministic mode: must match the oracle's ascending order exactly.
      const auto det = run_mode(true);
      oracle::Data ofr = root0, oflu = leaf0;
      oracle::fetch_and_op(graph, ofr, leaf0, oflu, ReduceOp::sum);
      for (int q = 0; q < nranks; ++q) {
        if (det[static_cast<std::size_t>(q)].root != ofr[static_cast<std::size_t>(q)])
          note_failure(out, dump_mismatch("fetch-deterministic-root", t));
        if (det[static_cast<std::size_t>(q)].update != oflu[static_cast<std::size_t>(q)])
          note_failure(out, dump_mismatch("fetch-deterministic-update", t));
      }

      // Free order: exhaustive n! prefix-chain check per root (degree <= 4).
      const auto free = run_mode(false);
      std::map<std::pair<int, std::int64_t>, std::vector<oracle::Edge>> per_root;
      for (const auto& e : graph.edges) per_root[{e.root_rank, e.root_off}].push_back(e);
      for (const auto& [root, edges] : per_root) {
        const auto init =
            root0[static_cast<std::size_t>(root.first)][static_cast<std::size_t>(root.second)];
        const auto final_got =
            free[static_cast<std::size_t>(root.first)].root[static_cast<std::size_t>(
                root.second)];
        std::int64_t total = init;
        std::vector<std::int64_t> contrib, update;
        for (const auto& e : edges) {
          contrib.push_back(leaf0[static_cast<std::size_t>(e.leaf_rank)]
                                 [static_cast<std::size_t>(e.leaf_idx)]);
          update.push_back(free[static_cast<std::size_t>(e.leaf_rank)]
                               .update[static_cast<std::size_t>(e.leaf_idx)]);
          total += contrib.back();
        }
        if (final_got != total) {
          note_failure(out, dump_mismatch("fetch-free-total", t));
          continue;
        }
        std::vector<std::size_t> perm(edges.size());
        std::iota(perm.begin(), perm.end(), 0);
        bool ok = false;
        do {
          std::int64_t acc = init;
          bool match = true;
          for (auto pi : perm) {
            if (update[pi] != acc) {
              match = false;
              break;
            }
            acc += contrib[pi];
          }
          if (match) {
            ok = true;
            break;
          }
        } while (std::next_permutation(perm.begin(), perm.end()));
        if (!ok) note_failure(out, dump_mismatch("fetch-free-serialization", t));
      }
    } catch (const std::exception& e) {
      note_failure(out, std::string("trial raised: ") + e.what());
    }
  }
  return out;
}

namespace {

template <class T>
bool spmv_trial(const Options& opt, int t, bool transpose, std::string* why) {
  const std::uint64_t ts = opt.seed + static_cast<std::uint64_t>(t) * 4391 + (transpose ? 7 : 0);
  Rng rng(mix_seed(ts, 0x66));
  const int nranks = static_cast<int>(rng.range(1, std::min(opt.max_ranks, 4)));
  const std::int64_t n = rng.range(8, 64);
  auto global = random_sparse<T>(rng, n, rng.range(1, 6));
  const Layout layout = Layout::contiguous(n, nranks);

  std::vector<T> x(static_cast<std::size_t>(n));
  for (auto& v : x) {
    if constexpr (std::is_integral_v<T>)
      v = static_cast<T>(rng.range(-100, 100));
    else
      v = static_cast<T>(rng.uniform01() * 4.0 - 2.0);
  }

  std::vector<T> expect(static_cast<std::size_t>(n), T{});
  if (!transpose)
    global.multiply(x, expect);
  else
    global.multiply_transpose_add(x, expect);

  RunConfig cfg;
  cfg.nranks = nranks;
  cfg.backend = opt.backend;
  cfg.seed = ts;
  cfg.timeout_s = opt.timeout_s;
  auto pieces = run_ranks(cfg, [&](Comm& comm) {
    const int me = comm.rank();
    auto m = split_matrix(global, layout, layout, me);
    StarForest sf = build_ghost_sf(comm, m);
    GhostVector<T> gx;
    gx.owned.assign(x.begin() + layout.begin(me), x.begin() + layout.end(me));
    gx.lvec.assign(m.garray.size(), T{});
    std::vector<T> y(static_cast<std::size_t>(layout.local_size(me)), T{});
    if (!transpose)
      spmv(m, sf, gx, y);
    else
      spmv_transpose(m, sf, gx, y);
    return y;
  });

  std::vector<T> got;
  for (const auto& p : pieces) got.insert(got.end(), p.begin(), p.end());
  for (std::size_t i = 0; i < got.size(); ++i) {
    if constexpr (std::is_integral_v<T>) {
      if (got[i] != expect[i]) {
        *why = "int64 spmv mismatch at row " + std::to_string(i);
        return false;
      }
    } else {
      const double a = static_cast<double>(got[i]), b = static_cast<double>(expect[i]);
      const double scale = std::max({1.0, std::abs(a), std::abs(b)});
      if (std::abs(a - b) > 1e-12 * scale) {
        *why = "float spmv error above 1e-12 at row " + std::to_string(i);
        return false;
      }
    }
  }
  return true;
}

} // namespace

Outcome spmv_random(const Options& opt) {
  Outcome out{.name = "spmv"};
  for (int t = 0; t < opt.trials; ++t) {
    ++out.trials;
    std::string why;
    try {
      const bool transpose = t % 2 == 1;
      const bool ok = t % 4 < 2 ? spmv_trial<double>(opt, t, transpose, &why)
                                : spmv_trial<std::int64_t>(opt, t, transpose, &why);
      if (!ok) note_failure(out, why + " (trial " + std::to_string(t) + ")");
    } catch (const std::exception& e) {
      note_failure(out, std::string("trial raised: ") + e.what());
    }
  }
  return out;
}

Outcome submatrix_selection(const Options& opt) {
  Outcome out{.name = "submatrix-selection"};
  for (int t = 0; t < opt.trials; ++t) {
    ++out.trials;
    const std::uint64_t ts = opt.seed + static_cast<std::uint64_t>(t) * 911;
    Rng rng(mix_seed(ts, 0x77));
    const int nranks = 4;
    const std::int64_t ncols = rng.range(8, 40);
    const Layout layout = Layout::contiguous(ncols, nranks);

    // Reduced local columns of M per rank and disjoint selections across ranks.
    std::vector<std::vector<std::int64_t>> garray(static_cast<std::size_t>(nranks));
    for (auto& g : garray) {
      for (std::int64_t c = 0; c < ncols; ++c)
        if (rng.chance(0.4)) g.push_back(c);
    }
    std::vector<std::vector<std::int64_t>> selected(static_cast<std::size_t>(nranks));
    for (std::int64_t c = 0; c < ncols; ++c) {
      if (t != 0 && rng.chance(0.4)) continue; // trial 0 selects everything
      selected[rng.bounded(static_cast<std::uint64_t>(nranks))].push_back(c);
    }

    // Set-membership oracle: new index = position in rank-then-list order.
    std::map<std::int64_t, std::int64_t> new_index;
    std::int64_t next = 0;
    for (int r = 0; r < nranks; ++r)
      for (auto c : selected[static_cast<std::size_t>(r)]) new_index[c] = next++;

    std::vector<std::vector<std::int64_t>> got;
    try {
      RunConfig cfg;
      cfg.nranks = nranks;
      cfg.backend = opt.backend;
      cfg.seed = ts;
      cfg.timeout_s = opt.timeout_s;
      got = run_ranks(cfg, [&](Comm& comm) {
        const int me = comm.rank();
        StarForest sfA = build_column_sf(comm, layout, garray[static_cast<std::size_t>(me)]);
        StarForest sfB = build_column_sf(comm, layout, selected[static_cast<std::size_t>(me)]);
        return select_submatrix_columns(sfA, sfB, selected[static_cast<std::size_t>(me)]);
      });
    } catch (const std::exception& e) {
      note_failure(out, std::string("trial raised: ") + e.what());
      continue;
    }
    for (int r = 0; r < nranks; ++r) {
      const auto& g = garray[static_cast<std::size_t>(r)];
      const auto& o = got[static_cast<std::size_t>(r)];
      if (o.size() != g.size()) {
        note_failure(out, dump_mismatch("selection-size", t));
        continue;
      }
      for (std::size_t i = 0; i < g.size(); ++i) {
        const auto it = new_index.find(g[i]);
        const std::int64_t expect = it == new_index.end() ? -1 : it->second;
        if (o[i] != expect) note_failure(out, dump_mismatch("selection-value", t));
      }
    }
  }
  return out;
}

} // namespace sf::selfcheck
