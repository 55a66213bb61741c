#include "advdual/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace advdual {

namespace {

std::array<int, 3> unflatten(const DeltaGrid& g, int flat) {
  std::array<int, 3> idx{0, 0, 0};
  for (int a = g.dim - 1; a >= 0; --a) {
    idx[a] = flat % g.nodes[a];
    flat /= g.nodes[a];
  }
  return idx;
}

double axis_center(const DeltaGrid& g, int axis, int i) {
  const double h = (g.hi[axis] - g.lo[axis]) / g.nodes[axis];
  return g.lo[axis] + (i + 0.5) * h;
}

}  // namespace

std::vector<double> DeltaGrid::center(int a) const {
  const auto idx = unflatten(*this, active[a]);
  std::vector<double> c(dim);
  for (int ax = 0; ax < dim; ++ax) c[ax] = axis_center(*this, ax, idx[ax]);
  return c;
}

DeltaGrid make_grid(const PerturbSet& set, int dim, std::array<int, 3> nodes) {
  std::vector<int> coords(dim);
  for (int a = 0; a < dim; ++a) coords[a] = a;
  return make_grid(set, dim, nodes, std::move(coords));
}

DeltaGrid make_grid(const PerturbSet& set, int dim, std::array<int, 3> nodes,
                    std::vector<int> coords) {
  if (dim < 1 || dim > 3) throw std::invalid_argument("make_grid: dim must be 1..3");
  if (static_cast<int>(coords.size()) != dim) {
    throw std::invalid_argument("make_grid: coords size != dim");
  }
  DeltaGrid g;
  g.dim = dim;
  g.coords = std::move(coords);
  double vol = 1.0;
  for (int a = 0; a < dim; ++a) {
    if (nodes[a] < 1) throw std::invalid_argument("make_grid: node count must be positive");
    g.nodes[a] = nodes[a];
    g.lo[a] = -set.epsilon;
    g.hi[a] = set.epsilon;
    vol *= (g.hi[a] - g.lo[a]) / g.nodes[a];
  }
  for (int a = dim; a < 3; ++a) g.nodes[a] = 1;
  g.cell_volume = vol;
  const int total = g.total_cells();
  g.active.reserve(total);
  for (int f = 0; f < total; ++f) {
    if (set.norm_kind == NormKind::l2) {
      const auto idx = unflatten(g, f);
      double sq = 0.0;
      for (int a = 0; a < dim; ++a) {
        const double c = axis_center(g, a, idx[a]);
        sq += c * c;
      }
      if (std::sqrt(sq) > set.epsilon) continue;
    }
    g.active.push_back(f);
  }
  if (g.active_cells() < 2) {
    throw std::invalid_argument("make_grid: fewer than 2 in-set cells");
  }
  if (!(g.cell_volume > 0.0)) {
    throw std::invalid_argument("make_grid: cell volume must be positive");
  }
  return g;
}

namespace {

std::vector<double> landscape_impl(const ModelParams& m, std::span<const double> x, int y,
                                   const DeltaGrid& grid, LossKind kind,
                                   std::span<const double> ref, double clip_b,
                                   bool parallel) {
  for (int c : grid.coords) {
    if (c < 0 || c >= static_cast<int>(x.size())) {
      throw std::invalid_argument("loss_landscape: grid coordinate outside input dimension");
    }
  }
  const int n = grid.active_cells();
  std::vector<double> values(n);
  const int nc = num_chunks(n);
#pragma omp parallel for schedule(static) if (parallel)
  for (int c = 0; c < nc; ++c) {
    std::vector<double> point(x.begin(), x.end());
    std::vector<double> probs(m.arch.num_classes);
    const int end = std::min(n, (c + 1) * kReduceChunk);
    for (int a = c * kReduceChunk; a < end; ++a) {
      const auto delta = grid.center(a);
      for (int ax = 0; ax < grid.dim; ++ax) point[grid.coords[ax]] = x[grid.coords[ax]] + delta[ax];
      forward(m, point, probs);
      values[a] = loss_value(kind, probs, y, ref, clip_b);
    }
  }
  return values;
}

}  // namespace

std::vector<double> loss_landscape(const ModelParams& m, std::span<const double> x, int y,
                                   const DeltaGrid& grid, LossKind kind,
                                   std::span<const double> ref, double clip_b) {
  return landscape_impl(m, x, y, grid, kind, ref, clip_b, true);
}
std::vector<double> loss_landscape_serial(const ModelParams& m, std::span<const double> x,
                                          int y, const DeltaGrid& grid, LossKind kind,
                                          std::span<const double> ref, double clip_b) {
  return landscape_impl(m, x, y, grid, kind, ref, clip_b, false);
}

double solve_mu(std::span<const double> values, double cell_volume, double gamma) {
  if (!(gamma > 0.0)) throw std::invalid_argument("solve_mu: gamma must be positive");
  if (values.empty()) throw std::invalid_argument("solve_mu: empty landscape");
  const double total_volume = cell_volume * static_cast<double>(values.size());
  const auto residual = [&](double mu) {
    double s = 0.0;
    for (double v : values) s += std::max(v - mu, 0.0);
    return s * cell_volume - gamma;
  };
  double lo = *std::min_element(values.begin(), values.end()) - gamma / total_volume - 1.0;
  double hi = *std::max_element(values.begin(), values.end());
  // the second bound keeps the normalization error (residual / gamma) small
  // for small gamma as well
  const double tol = std::min(1e-10 * std::max(1.0, gamma), 1e-9 * gamma);
  double best = 0.5 * (lo + hi);
  double best_r = std::fabs(residual(best));
  for (int it = 0; it < 200 && lo < hi; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;  // bracket exhausted at double precision
    const double r = residual(mid);
    if (std::fabs(r) < best_r) {
      best = mid;
      best_r = std::fabs(r);
    }
    if (best_r <= tol) return best;
    if (r > 0.0) {
      lo = mid;  // residual decreasing in mu
    } else {
      hi = mid;
    }
  }
  return best;
}

DiscreteDist lambda_star(std::span<const double> values, double cell_volume, double gamma) {
  const double mu = solve_mu(values, cell_volume, gamma);
  DiscreteDist d;
  d.cell_volume = cell_volume;
  d.gamma = gamma;
  d.mu = mu;
  d.density.resize(values.size());
  for (size_t i = 0; i < values.size(); ++i) d.density[i] = std::max(values[i] - mu, 0.0) / gamma;
  return d;
}

DiscreteDist oversmoothed_lambda(std::span<const double> values, double cell_volume) {
  double total = 0.0;
  for (double v : values) total += v;
  total *= cell_volume;
  if (!(total > 0.0)) {
    throw std::invalid_argument("oversmoothed_lambda: landscape integrates to zero");
  }
  DiscreteDist d;
  d.cell_volume = cell_volume;
  d.gamma = total;
  d.mu = 0.0;
  d.density.resize(values.size());
  for (size_t i = 0; i < values.size(); ++i) d.density[i] = values[i] / total;
  return d;
}

double expected_loss(const DiscreteDist& dist, std::span<const double> values) {
  if (dist.density.size() != values.size()) {
    throw std::invalid_argument("expected_loss: grid mismatch");
  }
  double s = 0.0;
  for (size_t i = 0; i < values.size(); ++i) s += dist.density[i] * values[i];
  return s * dist.cell_volume;
}

double tv_distance(const DiscreteDist& a, const DiscreteDist& b) {
  if (a.density.size() != b.density.size() || a.cell_volume != b.cell_volume) {
    throw std::invalid_argument("tv_distance: grid mismatch");
  }
  double s = 0.0;
  for (size_t i = 0; i < a.density.size(); ++i) s += std::fabs(a.density[i] - b.density[i]);
  return 0.5 * s * a.cell_volume;
}

namespace {

DiscreteDist histogram_impl(const double* samples, int n, int dim, const DeltaGrid& grid) {
  if (n == 0) throw std::invalid_argument("histogram_of_samples: empty sample set");
  if (dim != grid.dim) throw std::invalid_argument("histogram_of_samples: dimension mismatch");
  // flat cell index -> active index
  std::vector<int> to_active(grid.total_cells(), -1);
  for (int a = 0; a < grid.active_cells(); ++a) to_active[grid.active[a]] = a;
  std::vector<int64_t> counts(grid.active_cells(), 0);
  for (int i = 0; i < n; ++i) {
    int flat = 0;
    for (int ax = 0; ax < grid.dim; ++ax) {
      const double h = (grid.hi[ax] - grid.lo[ax]) / grid.nodes[ax];
      int idx = static_cast<int>(std::floor((samples[static_cast<size_t>(i) * dim + ax] -
                                             grid.lo[ax]) / h));
      idx = std::clamp(idx, 0, grid.nodes[ax] - 1);
      flat = flat * grid.nodes[ax] + idx;
    }
    const int a = to_active[flat];
    if (a < 0) throw std::invalid_argument("histogram_of_samples: sample outside grid support");
    ++counts[a];
  }
  DiscreteDist d;
  d.cell_volume = grid.cell_volume;
  d.density.resize(grid.active_cells());
  const double scale = 1.0 / (static_cast<double>(n) * grid.cell_volume);
  for (int a = 0; a < grid.active_cells(); ++a) d.density[a] = counts[a] * scale;
  return d;
}

}  // namespace

DiscreteDist histogram_of_samples(const Matrix& samples, const DeltaGrid& grid) {
  return histogram_impl(samples.data.data(), samples.rows, samples.cols, grid);
}

DiscreteDist histogram_of_samples(const std::vector<double>& samples_1d,
                                  const DeltaGrid& grid) {
  return histogram_impl(samples_1d.data(), static_cast<int>(samples_1d.size()), 1, grid);
}

void write_oracle_csv(std::ostream& os, const DeltaGrid& grid,
                      std::span<const double> values, const DiscreteDist& dist) {
  for (int ax = 0; ax < grid.dim; ++ax) os << "cell_center_" << ax << ",";
  os << "loss,density\n";
  char buf[64];
  for (int a = 0; a < grid.active_cells(); ++a) {
    for (double c : grid.center(a)) {
      std::snprintf(buf, sizeof(buf), "%.17g,", c);
      os << buf;
    }
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g\n", values[a], dist.density[a]);
    os << buf;
  }
}

}  // namespace advdual
