#pragma once

#include <vector>

#include "advdual/matrix.hpp"

namespace advdual {

// Top-k principal axes of the data covariance, found matrix-free by power
// iteration with deflation. k is reduced when the spectrum degenerates
// (near-zero variance along a candidate axis); check result.k.
struct PcaResult {
  std::vector<std::vector<double>> axes;  // unit vectors, length = data dim
  std::vector<double> eigenvalues;
  int k = 0;
  bool reduced = false;
};

PcaResult pca_fit(const Matrix& data, int k);

// coordinates of each row of points in the fitted basis
Matrix pca_transform(const PcaResult& p, const Matrix& points);

}  // namespace advdual
