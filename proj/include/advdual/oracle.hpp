#pragma once

#include <array>
#include <ostream>
#include <vector>

#include "advdual/matrix.hpp"
#include "advdual/model.hpp"
#include "advdual/perturb.hpp"

namespace advdual {

// Midpoint-rule discretization of the perturbation set, dimension <= 3.
// For linf the box is exact; for l2 the box is masked to cells whose centers
// lie in the ball. Grid axes may map onto a subset of the input coordinates.
struct DeltaGrid {
  int dim = 1;
  std::array<int, 3> nodes{1, 1, 1};
  std::array<double, 3> lo{};
  std::array<double, 3> hi{};
  std::vector<int> coords;   // grid axis -> input coordinate
  double cell_volume = 0.0;  // uniform across cells
  std::vector<int> active;   // flat indices of in-set cells

  int total_cells() const { return nodes[0] * nodes[1] * nodes[2]; }
  int active_cells() const { return static_cast<int>(active.size()); }
  double total_volume() const { return cell_volume * active_cells(); }
  // center of the a-th active cell, one coordinate per grid axis
  std::vector<double> center(int a) const;
};

DeltaGrid make_grid(const PerturbSet& set, int dim, std::array<int, 3> nodes);
DeltaGrid make_grid(const PerturbSet& set, int dim, std::array<int, 3> nodes,
                    std::vector<int> coords);

// A gridded density over the active cells together with the multipliers that
// produced it.
struct DiscreteDist {
  std::vector<double> density;  // one value per active cell
  double cell_volume = 0.0;
  double gamma = 0.0;
  double mu = 0.0;
};

// loss(f(x + delta), y) tabulated over the active cells
std::vector<double> loss_landscape(const ModelParams& m, std::span<const double> x, int y,
                                   const DeltaGrid& grid, LossKind kind,
                                   std::span<const double> ref, double clip_b);
std::vector<double> loss_landscape_serial(const ModelParams& m, std::span<const double> x,
                                          int y, const DeltaGrid& grid, LossKind kind,
                                          std::span<const double> ref, double clip_b);

// Root of sum_i [v_i - mu]_+ * vol = gamma, by bisection; residual
// <= 1e-10 * max(1, gamma).
double solve_mu(std::span<const double> values, double cell_volume, double gamma);

// density_i = [v_i - mu]_+ / gamma with mu from solve_mu
DiscreteDist lambda_star(std::span<const double> values, double cell_volume, double gamma);

// density proportional to the landscape itself (the mu = 0 special case)
DiscreteDist oversmoothed_lambda(std::span<const double> values, double cell_volume);

double expected_loss(const DiscreteDist& dist, std::span<const double> values);

// (1/2) sum |a_i - b_i| * vol, in [0, 1]
double tv_distance(const DiscreteDist& a, const DiscreteDist& b);

// normalized cell-count density of a sample set (rows = samples)
DiscreteDist histogram_of_samples(const Matrix& samples, const DeltaGrid& grid);
DiscreteDist histogram_of_samples(const std::vector<double>& samples_1d,
                                  const DeltaGrid& grid);

// CSV export: cell_center..., loss, density
void write_oracle_csv(std::ostream& os, const DeltaGrid& grid,
                      std::span<const double> values, const DiscreteDist& dist);

}  // namespace advdual
