// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The sfcomm authors
#pragma once

#include <algorithm>
#include <cstdint>
#include <istream>
#include <map>
#include <span>
#include <vector>

#include "sf/ops.hpp"
#include "sf/rng.hpp"
#include "sf/starforest.hpp"

namespace sf {

/// Contiguous per-rank ranges of a global index space.
struct Layout {
  std::vector<std::int64_t> starts; // nranks+1 entries

  static Layout contiguous(std::int64_t n, int nranks);
  int nranks() const { return static_cast<int>(starts.size()) - 1; }
  std::int64_t total() const { return starts.back(); }
  std::int64_t begin(int r) const { return starts[static_cast<std::size_t>(r)]; }
  std::int64_t end(int r) const { return starts[static_cast<std::size_t>(r) + 1]; }
  std::int64_t local_size(int r) const { return end(r) - begin(r); }
  int owner(std::int64_t g) const;
};

template <class T>
struct Csr {
  std::int64_t rows = 0, cols = 0;
  std::vector<std::int64_t> rowptr; // rows+1
  std::vector<std::int64_t> colind;
  std::vector<T> vals;

  static Csr from_triplets(std::int64_t rows, std::int64_t cols,
                           std::vector<std::tuple<std::int64_t, std::int64_t, T>> trips) {
    std::sort(trips.begin(), trips.end());
    Csr m;
    m.rows = rows;
    m.cols = cols;
    m.rowptr.assign(static_cast<std::size_t>(rows) + 1, 0);
    for (const auto& [r, c, v] : trips) ++m.rowptr[static_cast<std::size_t>(r) + 1];
    for (std::size_t i = 1; i < m.rowptr.size(); ++i) m.rowptr[i] += m.rowptr[i - 1];
    m.colind.reserve(trips.size());
    m.vals.reserve(trips.size());
    for (const auto& [r, c, v] : trips) {
      (void)r;
      m.colind.push_back(c);
      m.vals.push_back(v);
    }
    return m;
  }

  void multiply(std::span<const T> x, std::span<T> y) const { // y = A x
    for (std::int64_t r = 0; r < rows; ++r) {
      T acc{};
      for (auto i = rowptr[static_cast<std::size_t>(r)]; i < rowptr[static_cast<std::size_t>(r) + 1]; ++i)
        acc += vals[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(colind[static_cast<std::size_t>(i)])];
      y[static_cast<std::size_t>(r)] = acc;
    }
  }
  void multiply_add(std::span<const T> x, std::span<T> y) const { // y += A x
    for (std::int64_t r = 0; r < rows; ++r) {
      T acc{};
      for (auto i = rowptr[static_cast<std::size_t>(r)]; i < rowptr[static_cast<std::size_t>(r) + 1]; ++i)
        acc += vals[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(colind[static_cast<std::size_t>(i)])];
      y[static_cast<std::size_t>(r)] += acc;
    }
  }
  void multiply_transpose_add(std::span<const T> x, std::span<T> y) const { // y += A^T x
    for (std::int64_t r = 0; r < rows; ++r)
      for (auto i = rowptr[static_cast<std::size_t>(r)]; i < rowptr[static_cast<std::size_t>(r) + 1]; ++i)
        y[static_cast<std::size_t>(colind[static_cast<std::size_t>(i)])] +=
            vals[static_cast<std::size_t>(i)] * x[static_cast<std::size_t>(r)];
  }
};

/// PETSc-style row-distributed matrix slice: diagonal block A with local
/// column indices against the owned vector segment, off-diagonal block B
/// with reduced local columns, and garray mapping those back to global
/// columns (strictly increasing, one entry per nonzero column of B).
template <class T>
struct SplitMatrix {
  Layout row_layout, col_layout;
  int rank = 0;
  Csr<T> diag, offdiag;
  std::vector<std::int64_t> garray;
};

template <class T>
SplitMatrix<T> split_matrix(const Csr<T>& global, const Layout& rows, const Layout& cols,
                            int rank) {
  SplitMatrix<T> m;
  m.row_layout = rows;
  m.col_layout = cols;
  m.rank = rank;
  const std::int64_t r0 = rows.begin(rank), r1 = rows.end(rank);
  const std::int64_t c0 = cols.begin(rank), c1 = cols.end(rank);

  std::vector<std::tuple<std::int64_t, std::int64_t, T>> dt, ot;
  std::map<std::int64_t, std::int64_t> gcol_to_red;
  for (std::int64_t r = r0; r < r1; ++r) {
    for (auto i = global.rowptr[static_cast<std::size_t>(r)];
         i < global.rowptr[static_cast<std::size_t>(r) + 1]; ++i) {
      const std::int64_t c = global.colind[static_cast<std::size_t>(i)];
      const T v = global.vals[static_cast<std::size_t>(i)];
      if (c >= c0 && c < c1)
        dt.push_back({r - r0, c - c0, v});
      else
        gcol_to_red.emplace(c, 0);
      if (c < c0 || c >= c1) ot.push_back({r - r0, c, v});
    }
  }
  std::int64_t red = 0;
  for (auto& [g, idx] : gcol_to_red) idx = red++; // map iteration is ascending
  for (auto& [r, c, v] : ot) c = gcol_to_red.at(c);
  m.garray.reserve(gcol_to_red.size());
  for (const auto& [g, idx] : gcol_to_red) m.garray.push_back(g);

  m.diag = Csr<T>::from_triplets(r1 - r0, c1 - c0, std::move(dt));
  m.offdiag = Csr<T>::from_triplets(r1 - r0, red, std::move(ot));
  return m;
}

/// Owned segment plus the ghost segment lvec, ordered by global column.
template <class T>
struct GhostVector {
  std::vector<T> owned;
  std::vector<T> lvec;
};

/// Forest for the ghost exchange of any column list: per rank, the roots are
/// the owned vector segment and the leaves 0..|global_cols|-1 reference the
/// owning (rank, local index) of each column. Contiguous leaves keep the
/// receive path zero-copy.
StarForest build_column_sf(Comm& comm, const Layout& col_layout,
                           std::span<const std::int64_t> global_cols);

template <class T>
StarForest build_ghost_sf(Comm& comm, const SplitMatrix<T>& m) {
  return build_column_sf(comm, m.col_layout, m.garray);
}

/// y = A x_owned + B lvec, ghost exchange overlapped with the diagonal part.
template <class T>
void spmv(const SplitMatrix<T>& m, StarForest& sf, GhostVector<T>& x,
          std::vector<T>& y) {
  const Unit u = unit_of<T>();
  OpHandle h = bcast_begin(sf, u, x.owned.data(), x.lvec.data(), ReduceOp::replace);
  m.diag.multiply(x.owned, std::span<T>(y));
  bcast_end(h);
  m.offdiag.multiply_add(x.lvec, std::span<T>(y));
}

/// y = A^T x_owned locally; lvec = B^T x_owned holds contributions to remote
/// rows of y, added back to their owners through a sum-reduce.
template <class T>
void spmv_transpose(const SplitMatrix<T>& m, StarForest& sf, GhostVector<T>& x,
                    std::vector<T>& y) {
  const Unit u = unit_of<T>();
  std::fill(y.begin(), y.end(), T{});
  m.diag.multiply_transpose_add(x.owned, std::span<T>(y));
  std::fill(x.lvec.begin(), x.lvec.end(), T{});
  m.offdiag.multiply_transpose_add(x.owned, x.lvec);
  reduce(sf, u, x.lvec.data(), y.data(), ReduceOp::sum);
}

/// Two-forest column selection: a reduce through sfB writes each selected
/// column's new (submatrix) index into a global-column-space array tagged
/// -1, a bcast through sfA reads it back in the reduced local column space.
/// Returns, per reduced local column, the new index or -1 when dropped.
std::vector<std::int64_t> select_submatrix_columns(
    StarForest& sfA, StarForest& sfB, std::span<const std::int64_t> selected_global_columns);

/// 5-point stencil on an nx-by-ny grid, sequentially numbered x-fastest.
Csr<double> laplacian_5pt(std::int64_t nx, std::int64_t ny);

/// Matrix Market coordinate format (real/integer/pattern, general or
/// symmetric).
Csr<double> read_matrix_market(std::istream& in);

/// Uniformly random sparse square matrix for tests.
template <class T>
Csr<T> random_sparse(Rng& rng, std::int64_t n, std::int64_t nnz_per_row) {
  std::vector<std::tuple<std::int64_t, std::int64_t, T>> trips;
  for (std::int64_t r = 0; r < n; ++r) {
    for (std::int64_t k = 0; k < nnz_per_row; ++k) {
      const std::int64_t c = rng.range(0, n - 1);
      T v;
      if constexpr (std::is_integral_v<T>)
        v = static_cast<T>(rng.range(-50, 50));
      else
        v = static_cast<T>(rng.uniform01() * 2.0 - 1.0);
      trips.push_back({r, c, v});
    }
  }
  // collapse duplicate coordinates
  std::sort(trips.begin(), trips.end(),
            [](const auto& a, const auto& b) {
              return std::tie(std::get<0>(a), std::get<1>(a)) <
                     std::tie(std::get<0>(b), std::get<1>(b));
            });
  std::vector<std::tuple<std::int64_t, std::int64_t, T>> merged;
  for (const auto& t : trips) {
    if (!merged.empty() && std::get<0>(merged.back()) == std::get<0>(t) &&
        std::get<1>(merged.back()) == std::get<1>(t))
      std::get<2>(merged.back()) += std::get<2>(t);
    else
      merged.push_back(t);
  }
  return Csr<T>::from_triplets(n, n, std::move(merged));
}

} // namespace sf
