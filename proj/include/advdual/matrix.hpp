#pragma once

#include <cassert>
#include <span>
#include <vector>

namespace advdual {

// Row-major dense matrix; rows are examples throughout the library.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}

  double* row(int i) { return data.data() + static_cast<size_t>(i) * cols; }
  const double* row(int i) const { return data.data() + static_cast<size_t>(i) * cols; }
  std::span<double> row_span(int i) { return {row(i), static_cast<size_t>(cols)}; }
  std::span<const double> row_span(int i) const { return {row(i), static_cast<size_t>(cols)}; }

  double& at(int i, int j) { return data[static_cast<size_t>(i) * cols + j]; }
  double at(int i, int j) const { return data[static_cast<size_t>(i) * cols + j]; }

  bool operator==(const Matrix& o) const = default;
};

// Fixed-size chunking for deterministic parallel reductions: chunk boundaries
// depend only on n, never on the thread count, and partial results are
// combined serially in chunk order.
inline constexpr int kReduceChunk = 32;

inline int num_chunks(int n) { return (n + kReduceChunk - 1) / kReduceChunk; }

}  // namespace advdual
