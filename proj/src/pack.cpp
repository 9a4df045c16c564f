// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The sfcomm authors
#include "sf/pack.hpp"

#include <atomic>
#include <cstring>

#include "sf/errors.hpp"

namespace sf {

PackCounters& pack_counters() {
  static PackCounters counters;
  return counters;
}

namespace {

struct OpReplace {
  template <class T> void operator()(T& a, T b) const { a = b; }
};
struct OpSum {
  template <class T> void operator()(T& a, T b) const { a += b; }
};
struct OpProd {
  template <class T> void operator()(T& a, T b) const { a *= b; }
};
struct OpMax {
  template <class T> void operator()(T& a, T b) const { if (b > a) a = b; }
};
struct OpMin {
  template <class T> void operator()(T& a, T b) const { if (b < a) a = b; }
};
struct OpLand {
  template <class T> void operator()(T& a, T b) const { a = (a && b) ? T(1) : T(0); }
};
struct OpLor {
  template <class T> void operator()(T& a, T b) const { a = (a || b) ? T(1) : T(0); }
};
struct OpBand {
  template <class T> void operator()(T& a, T b) const { a &= b; }
};
struct OpBor {
  template <class T> void operator()(T& a, T b) const { a |= b; }
};

// Atomic read-modify-write of one element; compare_exchange loop so every op
// works, not just the fetch_* family. Atomicity is per base-type element.
template <class T, class Op>
void atomic_apply(T& slot, T value, Op op) {
  std::atomic_ref<T> ref(slot);
  T expected = ref.load(std::memory_order_relaxed);
  T desired;
  do {
    desired = expected;
    op(desired, value);
  } while (!ref.compare_exchange_weak(expected, desired, std::memory_order_relaxed));
}

template <class T, class Op>
void unpack_typed(T* dst, const IndexPattern& pat, std::int64_t blocklen, const T* buf, Op op,
                  bool atomics) {
  if (atomics) {
    pat.for_each([&](std::int64_t i, std::int64_t idx) {
      for (std::int64_t b = 0; b < blocklen; ++b)
        atomic_apply(dst[idx * blocklen + b], buf[i * blocklen + b], op);
    });
  } else {
    pat.for_each([&](std::int64_t i, std::int64_t idx) {
      for (std::int64_t b = 0; b < blocklen; ++b)
        op(dst[idx * blocklen + b], buf[i * blocklen + b]);
    });
  }
}

template <class T>
void unpack_dispatch_op(T* dst, const IndexPattern& pat, std::int64_t blocklen, const T* buf,
                        ReduceOp op, bool atomics) {
  switch (op) {
    case ReduceOp::replace: unpack_typed(dst, pat, blocklen, buf, OpReplace{}, atomics); return;
    case ReduceOp::sum: unpack_typed(dst, pat, blocklen, buf, OpSum{}, atomics); return;
    case ReduceOp::prod: unpack_typed(dst, pat, blocklen, buf, OpProd{}, atomics); return;
    case ReduceOp::max: unpack_typed(dst, pat, blocklen, buf, OpMax{}, atomics); return;
    case ReduceOp::min: unpack_typed(dst, pat, blocklen, buf, OpMin{}, atomics); return;
    default: SF_REQUIRE(false, "unreachable: logical op on non-integer kind");
  }
}

template <class T>
void unpack_dispatch_int_op(T* dst, const IndexPattern& pat, std::int64_t blocklen, const T* buf,
                            ReduceOp op, bool atomics) {
  switch (op) {
    case ReduceOp::land: unpack_typed(dst, pat, blocklen, buf, OpLand{}, atomics); return;
    case ReduceOp::lor: unpack_typed(dst, pat, blocklen, buf, OpLor{}, atomics); return;
    case ReduceOp::band: unpack_typed(dst, pat, blocklen, buf, OpBand{}, atomics); return;
    case ReduceOp::bor: unpack_typed(dst, pat, blocklen, buf, OpBor{}, atomics); return;
    default: unpack_dispatch_op(dst, pat, blocklen, buf, op, atomics); return;
  }
}

void check_bounds(const IndexPattern& pat, std::int64_t count, const char* what) {
  SF_REQUIRE(pat.index_bound() <= count,
             std::string(what) + " array too short for pattern indices");
  bool neg = false;
  pat.for_each([&](std::int64_t, std::int64_t idx) { neg = neg || idx < 0; });
  SF_REQUIRE(!neg, std::string(what) + " pattern contains a negative index");
}

} // namespace

void pack(const void* src, std::int64_t src_count, const IndexPattern& pat, const Unit& unit,
          void* buf) {
  check_bounds(pat, src_count, "pack source");
  const std::size_t vb = unit.bytes();
  const auto* s = static_cast<const std::byte*>(src);
  auto* d = static_cast<std::byte*>(buf);
  pat.for_each([&](std::int64_t i, std::int64_t idx) {
    std::memcpy(d + static_cast<std::size_t>(i) * vb, s + static_cast<std::size_t>(idx) * vb, vb);
  });
  pack_counters().pack_copies.fetch_add(1, std::memory_order_relaxed);
}

std::span<const std::byte> pack_view(const void* src, std::int64_t src_count,
                                     const IndexPattern& pat, const Unit& unit,
                                     std::vector<std::byte>& scratch) {
  const std::size_t vb = unit.bytes();
  if (auto* c = pat.as_contiguous()) {
    SF_REQUIRE(c->start >= 0 && c->start + c->count <= src_count,
               "pack source array too short for pattern indices");
    const auto* s = static_cast<const std::byte*>(src);
    return {s + static_cast<std::size_t>(c->start) * vb, static_cast<std::size_t>(c->count) * vb};
  }
  scratch.resize(static_cast<std::size_t>(pat.size()) * vb);
  pack(src, src_count, pat, unit, scratch.data());
  return {scratch.data(), scratch.size()};
}

void unpack(void* dst, std::int64_t dst_count, const IndexPattern& pat, const Unit& unit,
            ReduceOp op, const void* buf, UnpackMode mode) {
  check_unit_op(unit, op);
  check_bounds(pat, dst_count, "unpack destination");
  if (op == ReduceOp::replace && pat.has_duplicates())
    pack_counters().replace_dup_collisions.fetch_add(1, std::memory_order_relaxed);

  const bool atomics = mode == UnpackMode::atomics && op != ReduceOp::replace;
  const std::int64_t bl = unit.blocklen;
  switch (unit.kind) {
    case Kind::int32:
      unpack_dispatch_int_op(static_cast<std::int32_t*>(dst), pat, bl,
                             static_cast<const std::int32_t*>(buf), op, atomics);
      break;
    case Kind::int64:
      unpack_dispatch_int_op(static_cast<std::int64_t*>(dst), pat, bl,
                             static_cast<const std::int64_t*>(buf), op, atomics);
      break;
    case Kind::float64:
      unpack_dispatch_op(static_cast<double*>(dst), pat, bl, static_cast<const double*>(buf),
                         op, atomics);
      break;
    case Kind::bytes: {
      // replace only (checked above): straight vertex-wise copy
      const std::size_t vb = unit.bytes();
      const auto* s = static_cast<const std::byte*>(buf);
      auto* d = static_cast<std::byte*>(dst);
      pat.for_each([&](std::int64_t i, std::int64_t idx) {
        std::memcpy(d + static_cast<std::size_t>(idx) * vb,
                    s + static_cast<std::size_t>(i) * vb, vb);
      });
      break;
    }
  }
  pack_counters().unpack_copies.fetch_add(1, std::memory_order_relaxed);
}

namespace {

template <class T, class Op>
void scatter_typed(const T* src, const IndexPattern& sp, T* dst, const IndexPattern& dp,
                   std::int64_t blocklen, Op op, bool atomics) {
  const std::int64_t n = sp.size();
  for (std::int64_t i = 0; i < n; ++i) {
    const std::int64_t si = sp.index(i) * blocklen;
    const std::int64_t di = dp.index(i) * blocklen;
    for (std::int64_t b = 0; b < blocklen; ++b) {
      if (atomics)
        atomic_apply(dst[di + b], src[si + b], op);
      else
        op(dst[di + b], src[si + b]);
    }
  }
}

template <class T>
void scatter_dispatch(const T* src, const IndexPattern& sp, T* dst, const IndexPattern& dp,
                      std::int64_t bl, ReduceOp op, bool atomics) {
  switch (op) {
    case ReduceOp::replace: scatter_typed(src, sp, dst, dp, bl, OpReplace{}, false); return;
    case ReduceOp::sum: scatter_typed(src, sp, dst, dp, bl, OpSum{}, atomics); return;
    case ReduceOp::prod: scatter_typed(src, sp, dst, dp, bl, OpProd{}, atomics); return;
    case ReduceOp::max: scatter_typed(src, sp, dst, dp, bl, OpMax{}, atomics); return;
    case ReduceOp::min: scatter_typed(src, sp, dst, dp, bl, OpMin{}, atomics); return;
    default: SF_REQUIRE(false, "unreachable: logical op on non-integer kind");
  }
}

template <class T>
void scatter_dispatch_int(const T* src, const IndexPattern& sp, T* dst, const IndexPattern& dp,
                          std::int64_t bl, ReduceOp op, bool atomics) {
  switch (op) {
    case ReduceOp::land: scatter_typed(src, sp, dst, dp, bl, OpLand{}, atomics); return;
    case ReduceOp::lor: scatter_typed(src, sp, dst, dp, bl, OpLor{}, atomics); return;
    case ReduceOp::band: scatter_typed(src, sp, dst, dp, bl, OpBand{}, atomics); return;
    case ReduceOp::bor: scatter_typed(src, sp, dst, dp, bl, OpBor{}, atomics); return;
    default: scatter_dispatch(src, sp, dst, dp, bl, op, atomics); return;
  }
}

} // namespace

void scatter(const void* src, std::int64_t src_count, const IndexPattern& src_pat, void* dst,
             std::int64_t dst_count, const IndexPattern& dst_pat, const Unit& unit, ReduceOp op,
             UnpackMode mode) {
  check_unit_op(unit, op);
  SF_REQUIRE(src_pat.size() == dst_pat.size(), "scatter pattern size mismatch");
  check_bounds(src_pat, src_count, "scatter source");
  check_bounds(dst_pat, dst_count, "scatter destination");
  if (op == ReduceOp::replace && dst_pat.has_duplicates())
    pack_counters().replace_dup_collisions.fetch_add(1, std::memory_order_relaxed);

  const bool atomics = mode == UnpackMode::atomics;
  const std::int64_t bl = unit.blocklen;
  switch (unit.kind) {
    case Kind::int32:
      scatter_dispatch_int(static_cast<const std::int32_t*>(src), src_pat,
                           static_cast<std::int32_t*>(dst), dst_pat, bl, op, atomics);
      break;
    case Kind::int64:
      scatter_dispatch_int(static_cast<const std::int64_t*>(src), src_pat,
                           static_cast<std::int64_t*>(dst), dst_pat, bl, op, atomics);
      break;
    case Kind::float64:
      scatter_dispatch(static_cast<const double*>(src), src_pat, static_cast<double*>(dst),
                       dst_pat, bl, op, atomics);
      break;
    case Kind::bytes: {
      const std::size_t vb = unit.bytes();
      const auto* s = static_cast<const std::byte*>(src);
      auto* d = static_cast<std::byte*>(dst);
      const std::int64_t n = src_pat.size();
      for (std::int64_t i = 0; i < n; ++i)
        std::memcpy(d + static_cast<std::size_t>(dst_pat.index(i)) * vb,
                    s + static_cast<std::size_t>(src_pat.index(i)) * vb, vb);
      break;
    }
  }
}

} // namespace sf
