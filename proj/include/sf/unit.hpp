// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The sfcomm authors
#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

#include "sf/errors.hpp"

namespace sf {

/// Element kind of the data attached to graph vertices.
enum class Kind : std::uint8_t { int32, int64, float64, bytes };

constexpr std::size_t kind_size(Kind k) {
  switch (k) {
    case Kind::int32: return 4;
    case Kind::int64: return 8;
    case Kind::float64: return 8;
    case Kind::bytes: return 1;
  }
  return 0;
}

constexpr std::string_view kind_name(Kind k) {
  switch (k) {
    case Kind::int32: return "int32";
    case Kind::int64: return "int64";
    case Kind::float64: return "float64";
    case Kind::bytes: return "bytes";
  }
  return "?";
}

/// The datatype of one graph vertex: `blocklen` elements of `kind`.
struct Unit {
  Kind kind = Kind::int64;
  std::int64_t blocklen = 1;

  std::size_t elem_size() const { return kind_size(kind); }
  /// Bytes per vertex.
  std::size_t bytes() const { return elem_size() * static_cast<std::size_t>(blocklen); }
};

enum class ReduceOp : std::uint8_t { replace, sum, prod, max, min, land, lor, band, bor };

constexpr std::string_view op_name(ReduceOp op) {
  switch (op) {
    case ReduceOp::replace: return "replace";
    case ReduceOp::sum: return "sum";
    case ReduceOp::prod: return "prod";
    case ReduceOp::max: return "max";
    case ReduceOp::min: return "min";
    case ReduceOp::land: return "land";
    case ReduceOp::lor: return "lor";
    case ReduceOp::band: return "band";
    case ReduceOp::bor: return "bor";
  }
  return "?";
}

constexpr bool is_integer_kind(Kind k) { return k == Kind::int32 || k == Kind::int64; }

constexpr bool is_logical_or_bitwise(ReduceOp op) {
  return op == ReduceOp::land || op == ReduceOp::lor || op == ReduceOp::band ||
         op == ReduceOp::bor;
}

/// Reductions other than replace need a typed kind; logical/bitwise ops need
/// integers on top of that.
inline void check_unit_op(const Unit& u, ReduceOp op) {
  SF_REQUIRE(u.blocklen >= 1, "unit blocklen must be >= 1");
  if (op == ReduceOp::replace) return;
  SF_REQUIRE(u.kind != Kind::bytes,
             std::string("reduction '") + std::string(op_name(op)) +
                 "' requires a non-opaque unit kind");
  if (is_logical_or_bitwise(op))
    SF_REQUIRE(is_integer_kind(u.kind),
               std::string("reduction '") + std::string(op_name(op)) +
                   "' requires an integer unit kind");
}

template <class T>
constexpr Kind kind_of();
template <> constexpr Kind kind_of<std::int32_t>() { return Kind::int32; }
template <> constexpr Kind kind_of<std::int64_t>() { return Kind::int64; }
template <> constexpr Kind kind_of<double>() { return Kind::float64; }

template <class T>
constexpr Unit unit_of(std::int64_t blocklen = 1) {
  return Unit{kind_of<T>(), blocklen};
}

} // namespace sf
