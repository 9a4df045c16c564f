// SPDX-License-Identifier: Apache-2.0
// Copyright (c) 2026 The sfcomm authors
#include "sf/spmv.hpp"

#include <sstream>
#include <string>

namespace sf {

Layout Layout::contiguous(std::int64_t n, int nranks) {
  Layout l;
  l.starts.resize(static_cast<std::size_t>(nranks) + 1);
  const std::int64_t base = n / nranks;
  const std::int64_t extra = n % nranks;
  l.starts[0] = 0;
  for (int r = 0; r < nranks; ++r)
    l.starts[static_cast<std::size_t>(r) + 1] =
        l.starts[static_cast<std::size_t>(r)] + base + (r < extra ? 1 : 0);
  return l;
}

int Layout::owner(std::int64_t g) const {
  SF_REQUIRE(g >= 0 && g < total(),
             "global index " + std::to_string(g) + " outside the layout range");
  const auto it = std::upper_bound(starts.begin(), starts.end(), g);
  return static_cast<int>(it - starts.begin()) - 1;
}

StarForest build_column_sf(Comm& comm, const Layout& col_layout,
                           std::span<const std::int64_t> global_cols) {
  const int me = comm.rank();
  std::vector<RootRef> remote;
  remote.reserve(global_cols.size());
  for (std::int64_t g : global_cols) {
    const int owner = col_layout.owner(g);
    remote.push_back(RootRef{owner, g - col_layout.begin(owner)});
  }
  StarForest sf(comm);
  sf.set_graph(col_layout.local_size(me), static_cast<std::int64_t>(global_cols.size()),
               std::nullopt, std::move(remote));
  sf.setup();
  return sf;
}

std::vector<std::int64_t> select_submatrix_columns(
    StarForest& sfA, StarForest& sfB, std::span<const std::int64_t> selected_global_columns) {
  Comm& comm = sfA.comm();
  SF_REQUIRE(&comm.world() == &sfB.comm().world(),
             "select_submatrix_columns: forests must share a communicator");

  // New column indices are global positions in the submatrix column layout:
  // my selected columns take [prefix, prefix + count).
  std::vector<std::int64_t> counts(static_cast<std::size_t>(comm.size()), 0);
  counts[static_cast<std::size_t>(comm.rank())] =
      static_cast<std::int64_t>(selected_global_columns.size());
  const auto all_counts = comm.allreduce_sum(counts);
  std::int64_t prefix = 0;
  for (int r = 0; r < comm.rank(); ++r) prefix += all_counts[static_cast<std::size_t>(r)];

  std::vector<std::int64_t> new_index(selected_global_columns.size());
  for (std::size_t i = 0; i < new_index.size(); ++i)
    new_index[i] = prefix + static_cast<std::int64_t>(i);

  // Step 1: land each selected column's new index at its owner; everything
  // else keeps the negative tag.
  std::vector<std::int64_t> tags(static_cast<std::size_t>(sfB.nroots()), -1);
  reduce(sfB, unit_of<std::int64_t>(), new_index.data(), tags.data(), ReduceOp::replace);

  // Step 2: read the tags back into the reduced local column space.
  std::vector<std::int64_t> out(static_cast<std::size_t>(sfA.leaf_index_bound()), -1);
  bcast(sfA, unit_of<std::int64_t>(), tags.data(), out.data(), ReduceOp::replace);
  return out;
}

Csr<double> laplacian_5pt(std::int64_t nx, std::int64_t ny) {
  std::vector<std::tuple<std::int64_t, std::int64_t, double>> trips;
  auto id = [nx](std::int64_t i, std::int64_t j) { return j * nx + i; };
  for (std::int64_t j = 0; j < ny; ++j) {
    for (std::int64_t i = 0; i < nx; ++i) {
      const std::int64_t r = id(i, j);
      trips.push_back({r, r, 4.0});
      if (i > 0) trips.push_back({r, id(i - 1, j), -1.0});
      if (i + 1 < nx) trips.push_back({r, id(i + 1, j), -1.0});
      if (j > 0) trips.push_back({r, id(i, j - 1), -1.0});
      if (j + 1 < ny) trips.push_back({r, id(i, j + 1), -1.0});
    }
  }
  return Csr<double>::from_triplets(nx * ny, nx * ny, std::move(trips));
}

Csr<double> read_matrix_market(std::istream& in) {
  std::string line;
  SF_REQUIRE(static_cast<bool>(std::getline(in, line)), "matrix market: empty stream");
  std::istringstream header(line);
  std::string banner, object, format, field, symmetry;
  header >> banner >> object >> format >> field >> symmetry;
  SF_REQUIRE(banner == "%%MatrixMarket" && object == "matrix" && format == "coordinate",
             "matrix market: expected a coordinate-format header");
  const bool pattern = field == "pattern";
  const bool symmetric = symmetry == "symmetric";
  SF_REQUIRE(field == "real" || field == "integer" || pattern,
             "matrix market: unsupported field type '" + field + "'");

  while (std::getline(in, line)) {
    if (!line.empty() && line[0] != '%') break;
  }
  std::istringstream sizes(line);
  std::int64_t rows = 0, cols = 0, nnz = 0;
  SF_REQUIRE(static_cast<bool>(sizes >> rows >> cols >> nnz), "matrix market: bad size line");

  std::vector<std::tuple<std::int64_t, std::int64_t, double>> trips;
  trips.reserve(static_cast<std::size_t>(nnz));
  for (std::int64_t k = 0; k < nnz; ++k) {
    std::int64_t r = 0, c = 0;
    double v = 1.0;
    SF_REQUIRE(static_cast<bool>(in >> r >> c), "matrix market: truncated entries");
    if (!pattern) SF_REQUIRE(static_cast<bool>(in >> v), "matrix market: truncated entries");
    SF_REQUIRE(r >= 1 && r <= rows && c >= 1 && c <= cols,
               "matrix market: entry out of bounds");
    trips.push_back({r - 1, c - 1, v});
    if (symmetric && r != c) trips.push_back({c - 1, r - 1, v});
  }
  return Csr<double>::from_triplets(rows, cols, std::move(trips));
}

} // namespace sf
