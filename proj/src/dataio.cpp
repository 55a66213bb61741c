#include "advdual/dataio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "advdual/rng.hpp"

namespace advdual {

IdxError::IdxError(std::string p, size_t off, const std::string& what)
    : std::runtime_error(p + " @ byte " + std::to_string(off) + ": " + what),
      path(std::move(p)),
      offset(off) {}

namespace {

constexpr uint32_t kImageMagic = 0x00000803;
constexpr uint32_t kLabelMagic = 0x00000801;

std::vector<uint8_t> read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IdxError(path, 0, "cannot open file");
  f.seekg(0, std::ios::end);
  const auto size = f.tellg();
  f.seekg(0);
  std::vector<uint8_t> bytes(static_cast<size_t>(size));
  f.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!f) throw IdxError(path, 0, "read failed");
  return bytes;
}

uint32_t read_be32(const std::vector<uint8_t>& b, size_t off, const std::string& path) {
  if (off + 4 > b.size()) {
    throw IdxError(path, b.size(), "truncated: expected 4-byte big-endian word at offset " +
                                       std::to_string(off));
  }
  return (static_cast<uint32_t>(b[off]) << 24) | (static_cast<uint32_t>(b[off + 1]) << 16) |
         (static_cast<uint32_t>(b[off + 2]) << 8) | static_cast<uint32_t>(b[off + 3]);
}

void write_be32(std::ofstream& f, uint32_t v) {
  const uint8_t bytes[4] = {static_cast<uint8_t>(v >> 24), static_cast<uint8_t>(v >> 16),
                            static_cast<uint8_t>(v >> 8), static_cast<uint8_t>(v)};
  f.write(reinterpret_cast<const char*>(bytes), 4);
}

}  // namespace

Dataset load_idx(const std::string& images_path, const std::string& labels_path) {
  const auto img = read_file(images_path);
  const uint32_t magic = read_be32(img, 0, images_path);
  if (magic != kImageMagic) {
    char msg[64];
    std::snprintf(msg, sizeof(msg), "bad image magic 0x%08x", magic);
    throw IdxError(images_path, 0, msg);
  }
  const uint32_t n = read_be32(img, 4, images_path);
  const uint32_t rows = read_be32(img, 8, images_path);
  const uint32_t cols = read_be32(img, 12, images_path);
  const size_t need = 16 + static_cast<size_t>(n) * rows * cols;
  if (img.size() < need) {
    throw IdxError(images_path, img.size(),
                   "truncated pixel data: need " + std::to_string(need) + " bytes");
  }

  const auto lab = read_file(labels_path);
  const uint32_t lmagic = read_be32(lab, 0, labels_path);
  if (lmagic != kLabelMagic) {
    char msg[64];
    std::snprintf(msg, sizeof(msg), "bad label magic 0x%08x", lmagic);
    throw IdxError(labels_path, 0, msg);
  }
  const uint32_t ln = read_be32(lab, 4, labels_path);
  if (ln != n) {
    throw IdxError(labels_path, 4,
                   "label count " + std::to_string(ln) + " != image count " + std::to_string(n));
  }
  if (lab.size() < 8 + static_cast<size_t>(ln)) {
    throw IdxError(labels_path, lab.size(),
                   "truncated label data: need " + std::to_string(8 + ln) + " bytes");
  }

  Dataset ds;
  ds.inputs = Matrix(static_cast<int>(n), static_cast<int>(rows * cols));
  ds.labels.resize(n);
  for (size_t i = 0; i < ds.inputs.data.size(); ++i) {
    ds.inputs.data[i] = static_cast<double>(img[16 + i]) / 255.0;
  }
  int max_label = 0;
  for (uint32_t i = 0; i < n; ++i) {
    ds.labels[i] = lab[8 + i];
    max_label = std::max(max_label, ds.labels[i]);
  }
  ds.num_classes = std::max(max_label + 1, 2);
  return ds;
}

void save_idx(const Dataset& ds, const std::string& images_path,
              const std::string& labels_path) {
  // square image side; assumes dim is a perfect square (28x28 etc.)
  const int side = static_cast<int>(std::lround(std::sqrt(static_cast<double>(ds.dim()))));
  const int rows = side * side == ds.dim() ? side : 1;
  const int cols = side * side == ds.dim() ? side : ds.dim();
  {
    std::ofstream f(images_path, std::ios::binary);
    if (!f) throw IdxError(images_path, 0, "cannot open for writing");
    write_be32(f, kImageMagic);
    write_be32(f, static_cast<uint32_t>(ds.size()));
    write_be32(f, static_cast<uint32_t>(rows));
    write_be32(f, static_cast<uint32_t>(cols));
    std::vector<uint8_t> buf(ds.inputs.data.size());
    for (size_t i = 0; i < buf.size(); ++i) {
      const double v = std::clamp(ds.inputs.data[i], 0.0, 1.0);
      buf[i] = static_cast<uint8_t>(std::lround(v * 255.0));
    }
    f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  }
  {
    std::ofstream f(labels_path, std::ios::binary);
    if (!f) throw IdxError(labels_path, 0, "cannot open for writing");
    write_be32(f, kLabelMagic);
    write_be32(f, static_cast<uint32_t>(ds.size()));
    std::vector<uint8_t> buf(ds.size());
    for (int i = 0; i < ds.size(); ++i) buf[i] = static_cast<uint8_t>(ds.labels[i]);
    f.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  }
}

Dataset make_blobs(int n, const std::vector<std::vector<double>>& centers, double spread,
                   uint64_t seed) {
  if (n < 2 || centers.empty()) throw std::invalid_argument("make_blobs: need n >= 2 and centers");
  const int k = static_cast<int>(centers.size());
  const int d = static_cast<int>(centers[0].size());
  Dataset ds;
  ds.inputs = Matrix(n, d);
  ds.labels.resize(n);
  ds.num_classes = k;
  RngStream rng(derive_key(seed, kStreamData));
  for (int i = 0; i < n; ++i) {
    const int c = i % k;
    ds.labels[i] = c;
    for (int j = 0; j < d; ++j) {
      ds.inputs.at(i, j) = centers[c][j] + spread * rng.next_normal();
    }
  }
  return ds;
}

Dataset make_moons(int n, double noise, uint64_t seed) {
  if (n < 2) throw std::invalid_argument("make_moons: need n >= 2");
  Dataset ds;
  ds.inputs = Matrix(n, 2);
  ds.labels.resize(n);
  ds.num_classes = 2;
  RngStream rng(derive_key(seed, kStreamData));
  const int n0 = (n + 1) / 2;
  const int n1 = n - n0;
  constexpr double pi = 3.14159265358979323846;
  for (int i = 0; i < n; ++i) {
    double x, y;
    if (i < n0) {
      const double t = n0 > 1 ? pi * i / (n0 - 1) : 0.0;
      x = std::cos(t);
      y = std::sin(t);
      ds.labels[i] = 0;
    } else {
      const int j = i - n0;
      const double t = n1 > 1 ? pi * j / (n1 - 1) : 0.0;
      x = 1.0 - std::cos(t);
      y = 0.5 - std::sin(t);
      ds.labels[i] = 1;
    }
    ds.inputs.at(i, 0) = x + noise * rng.next_normal();
    ds.inputs.at(i, 1) = y + noise * rng.next_normal();
  }
  return ds;
}

Dataset make_digits(int n, uint64_t seed) {
  if (n < 1) throw std::invalid_argument("make_digits: need n >= 1");
  constexpr int side = 28;
  constexpr int d = side * side;
  constexpr int k = 10;
  // class templates are fixed so separately generated splits share them
  static const std::vector<std::vector<double>> templates = [] {
    std::vector<std::vector<double>> t(k, std::vector<double>(d, 0.0));
    RngStream trng(derive_key(0xd161u, kStreamData));
    constexpr double pi = 3.14159265358979323846;
    for (int c = 0; c < k; ++c) {
      // saturating strokes anchored in a class-specific ring sector: classes
      // overlap only with their neighbors, so they stay separable under
      // sizable pixel perturbations
      const double ang = 2.0 * pi * c / k;
      const double ring = c % 2 == 0 ? 6.5 : 10.5;  // alternating radii keep
                                                    // neighboring sectors apart
      const double ax = 13.5 + ring * std::cos(ang);
      const double ay = 13.5 + ring * std::sin(ang);
      for (int bump = 0; bump < 6; ++bump) {
        const double cr = ay + trng.next_uniform(-2.5, 2.5);
        const double cc = ax + trng.next_uniform(-2.5, 2.5);
        const double amp = trng.next_uniform(1.1, 1.5);
        const double rad = trng.next_uniform(1.8, 2.8);
        for (int r = 0; r < side; ++r) {
          for (int col = 0; col < side; ++col) {
            const double dr = r - cr, dc = col - cc;
            t[c][r * side + col] += amp * std::exp(-(dr * dr + dc * dc) / (2.0 * rad * rad));
          }
        }
      }
      for (double& v : t[c]) v = std::min(v, 1.0);
    }
    return t;
  }();

  Dataset ds;
  ds.inputs = Matrix(n, d);
  ds.labels.resize(n);
  ds.num_classes = k;
  RngStream rng(derive_key(seed, kStreamData));
  for (int i = 0; i < n; ++i) {
    const int c = i % k;
    ds.labels[i] = c;
    double* row = ds.inputs.row(i);
    for (int j = 0; j < d; ++j) {
      const double raw = std::clamp(templates[c][j] + 0.10 * rng.next_normal(), 0.0, 1.0);
      row[j] = std::lround(raw * 255.0) / 255.0;  // keep on the /255 grid
    }
  }
  return ds;
}

Dataset subset(const Dataset& ds, int n, uint64_t seed) {
  if (n > ds.size()) throw std::invalid_argument("subset: n exceeds dataset size");
  if (n < 1) throw std::invalid_argument("subset: need n >= 1");
  std::vector<int> idx(ds.size());
  for (int i = 0; i < ds.size(); ++i) idx[i] = i;
  RngStream rng(derive_key(seed, kStreamShuffle));
  for (int i = 0; i < n; ++i) {
    const int j = i + static_cast<int>(rng.next_below(static_cast<uint64_t>(ds.size() - i)));
    std::swap(idx[i], idx[j]);
  }
  Dataset out;
  out.inputs = Matrix(n, ds.dim());
  out.labels.resize(n);
  out.num_classes = ds.num_classes;
  out.split = ds.split;
  for (int i = 0; i < n; ++i) {
    std::copy(ds.inputs.row(idx[i]), ds.inputs.row(idx[i]) + ds.dim(), out.inputs.row(i));
    out.labels[i] = ds.labels[idx[i]];
  }
  return out;
}

}  // namespace advdual
