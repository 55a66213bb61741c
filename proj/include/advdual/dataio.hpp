#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "advdual/matrix.hpp"

namespace advdual {

struct Dataset {
  Matrix inputs;
  std::vector<int> labels;
  int num_classes = 0;
  std::string split = "train";

  int size() const { return inputs.rows; }
  int dim() const { return inputs.cols; }
};

// parse failure carrying the byte offset within the offending file
struct IdxError : std::runtime_error {
  std::string path;
  size_t offset;
  IdxError(std::string p, size_t off, const std::string& what);
};

// Big-endian IDX containers: images magic 0x00000803 with dims (N, rows, cols)
// and bytes scaled to [0,1] by /255; labels magic 0x00000801 with N bytes.
Dataset load_idx(const std::string& images_path, const std::string& labels_path);
void save_idx(const Dataset& ds, const std::string& images_path,
              const std::string& labels_path);

// Gaussian blobs around the given centers; class of point i is i mod k.
Dataset make_blobs(int n, const std::vector<std::vector<double>>& centers, double spread,
                   uint64_t seed);

// two interleaved half-circles with Gaussian noise, classes 0/1
Dataset make_moons(int n, double noise, uint64_t seed);

// 28x28 10-class image set: fixed per-class bump templates plus per-sample
// pixel noise, values quantized to the /255 grid so IDX round-trips exactly.
Dataset make_digits(int n, uint64_t seed);

// uniform subsample without replacement
Dataset subset(const Dataset& ds, int n, uint64_t seed);

}  // namespace advdual
