#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "advdual/oracle.hpp"
#include "advdual/stats.hpp"
#include "advdual/rng.hpp"
#include "oracle_bruteforce.hpp"
#include "test_util.hpp"

using namespace advdual;
using namespace advdual::test;

namespace {

std::vector<double> random_landscape(int n, uint64_t seed) {
  RngStream rng(seed);
  std::vector<double> v(n);
  for (double& x : v) x = rng.next_uniform(0.05, 4.0);
  return v;
}

}  // namespace

TEST_CASE("make_grid: linf box and l2 mask") {
  const auto g1 = make_grid(PerturbSet::linf_ball(0.3), 1, {10, 1, 1});
  CHECK(g1.active_cells() == 10);
  CHECK(g1.cell_volume == doctest::Approx(0.06));
  const auto g2 = make_grid(PerturbSet::l2_ball(1.0), 2, {21, 21, 1});
  CHECK(g2.active_cells() < 21 * 21);  // corners masked out
  CHECK(g2.active_cells() > 300);      // interior kept
}

TEST_CASE("loss_landscape: constant model gives a constant landscape") {
  Arch arch;
  arch.input_dim = 1;
  arch.num_classes = 2;
  const ModelParams m = zero_model(arch);
  const auto grid = make_grid(PerturbSet::linf_ball(0.5), 1, {16, 1, 1});
  const auto v = loss_landscape(m, std::vector<double>{0.2}, 0, grid,
                                LossKind::cross_entropy, {}, 50.0);
  for (double x : v) CHECK(x == doctest::Approx(std::log(2.0)).epsilon(1e-12));
}

TEST_CASE("loss_landscape: 1-D logistic is monotone when w > 0") {
  Arch arch;
  arch.input_dim = 1;
  arch.num_classes = 2;
  ModelParams m = zero_model(arch);
  m.theta[0] = 1.5;  // class-0 weight positive; label 0 loss decreasing in x
  const auto grid = make_grid(PerturbSet::linf_ball(0.5), 1, {32, 1, 1});
  const auto v = loss_landscape(m, std::vector<double>{0.0}, 0, grid,
                                LossKind::cross_entropy, {}, 50.0);
  for (size_t i = 1; i < v.size(); ++i) CHECK(v[i] <= v[i - 1]);
  // the max over the grid is at least the center value
  const double at_zero = loss_value(LossKind::cross_entropy,
                                    forward(m, std::vector<double>{0.0}), 0, {}, 50.0);
  CHECK(*std::max_element(v.begin(), v.end()) >= at_zero - 1e-12);
}

TEST_CASE("loss_landscape: serial twin matches") {
  const ModelParams m = random_mlp(2, {6}, 3, 9100);
  const auto grid = make_grid(PerturbSet::linf_ball(0.4), 2, {11, 11, 1});
  const std::vector<double> x{0.1, -0.2};
  CHECK(loss_landscape(m, x, 1, grid, LossKind::cross_entropy, {}, 50.0) ==
        loss_landscape_serial(m, x, 1, grid, LossKind::cross_entropy, {}, 50.0));
}

TEST_CASE("solve_mu: hand-solved two-cell example") {
  const std::vector<double> v{1.0, 3.0};
  const double mu = solve_mu(v, 1.0, 2.0);
  CHECK(mu == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("solve_mu: gamma equal to the full integral gives mu ~ 0") {
  const std::vector<double> v{0.5, 1.5, 2.5};
  const double gamma = (0.5 + 1.5 + 2.5) * 1.0;
  const double mu = solve_mu(v, 1.0, gamma);
  CHECK(std::fabs(mu) <= 1e-9);
}

TEST_CASE("solve_mu: tiny gamma pushes mu up to the maximum") {
  const std::vector<double> v{1.0, 3.0};
  const double mu = solve_mu(v, 1.0, 1e-9);
  CHECK(mu == doctest::Approx(3.0 - 1e-9).epsilon(1e-6));
}

TEST_CASE("solve_mu: rejects non-positive gamma") {
  const std::vector<double> v{1.0, 2.0};
  CHECK_THROWS_AS((solve_mu(v, 1.0, 0.0)), std::invalid_argument);
  CHECK_THROWS_AS((solve_mu(v, 1.0, -1.0)), std::invalid_argument);
}

TEST_CASE("lambda_star: two-cell example puts all mass on the high-loss cell") {
  const std::vector<double> v{1.0, 3.0};
  const auto d = lambda_star(v, 1.0, 2.0);
  CHECK(d.density[0] == doctest::Approx(0.0).epsilon(1e-9));
  CHECK(d.density[1] == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("lambda_star: constant landscape is uniform") {
  const std::vector<double> v(8, 2.0);
  const double vol = 0.25;
  const auto d = lambda_star(v, vol, 1.5);
  for (double x : d.density) CHECK(x == doctest::Approx(1.0 / (8 * vol)).epsilon(1e-8));
}

TEST_CASE("lambda_star: over-smoothed gamma reduces to density proportional to loss") {
  const auto v = random_landscape(32, 2024);
  const double vol = 0.05;
  double total = 0.0;
  for (double x : v) total += x;
  total *= vol;
  const auto star = lambda_star(v, vol, total);
  const auto over = oversmoothed_lambda(v, vol);
  CHECK(std::fabs(star.mu) <= 1e-9);
  for (size_t i = 0; i < v.size(); ++i) {
    CHECK(star.density[i] == doctest::Approx(over.density[i]).epsilon(1e-7));
  }
}

TEST_CASE("oversmoothed_lambda: normalization and errors") {
  const std::vector<double> v{1.0, 3.0};
  const auto d = oversmoothed_lambda(v, 1.0);
  CHECK(d.density[0] == doctest::Approx(0.25));
  CHECK(d.density[1] == doctest::Approx(0.75));
  const std::vector<double> zeros(4, 0.0);
  CHECK_THROWS_AS((oversmoothed_lambda(zeros, 1.0)), std::invalid_argument);
  const std::vector<double> c(4, 1.0);
  const auto u = oversmoothed_lambda(c, 0.5);
  for (double x : u.density) CHECK(x == doctest::Approx(0.5));
}

TEST_CASE("expected_loss: uniform, over-smoothed, atomic-limit examples") {
  const std::vector<double> v{1.0, 3.0};
  DiscreteDist uniform;
  uniform.cell_volume = 1.0;
  uniform.density = {0.5, 0.5};
  CHECK(expected_loss(uniform, v) == doctest::Approx(2.0));
  const auto over = oversmoothed_lambda(v, 1.0);
  CHECK(expected_loss(over, v) == doctest::Approx(2.5));
  const auto atomic = lambda_star(v, 1.0, 1e-6 * 2.0);
  CHECK(expected_loss(atomic, v) >= 3.0 - 1e-3 * 2.0);
}

TEST_CASE("tv_distance: identical, disjoint, quarter") {
  DiscreteDist a, b;
  a.cell_volume = b.cell_volume = 1.0;
  a.density = {1.0, 0.0};
  b.density = {0.0, 1.0};
  CHECK(tv_distance(a, a) == 0.0);
  CHECK(tv_distance(a, b) == doctest::Approx(1.0));
  DiscreteDist u, w;
  u.cell_volume = w.cell_volume = 1.0;
  u.density = {0.5, 0.5};
  w.density = {0.25, 0.75};
  CHECK(tv_distance(u, w) == doctest::Approx(0.25));
  DiscreteDist bad;
  bad.cell_volume = 1.0;
  bad.density = {1.0};
  CHECK_THROWS_AS((tv_distance(a, bad)), std::invalid_argument);
}

TEST_CASE("histogram_of_samples: point mass, count conservation, uniform draws") {
  const auto grid = make_grid(PerturbSet::linf_ball(1.0), 1, {50, 1, 1});
  // all samples in one cell
  const std::vector<double> same(100, 0.013);
  const auto one = histogram_of_samples(same, grid);
  double mass = 0.0;
  int support = 0;
  for (double d : one.density) {
    mass += d * one.cell_volume;
    if (d > 0.0) ++support;
  }
  CHECK(support == 1);
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));
  // 1e6 uniform draws: close to the uniform density
  RngStream rng(555);
  std::vector<double> u(1'000'000);
  for (double& x : u) x = rng.next_uniform(-1.0, 1.0);
  const auto hist = histogram_of_samples(u, grid);
  DiscreteDist uniform;
  uniform.cell_volume = grid.cell_volume;
  uniform.density.assign(50, 1.0 / grid.total_volume());
  CHECK(tv_distance(hist, uniform) <= 0.02);
  CHECK_THROWS_AS((histogram_of_samples(std::vector<double>{}, grid)), std::invalid_argument);
}

TEST_CASE("normalization invariant on random landscapes") {
  for (uint64_t rep = 0; rep < 20; ++rep) {
    const auto v = random_landscape(40, 3000 + rep);
    const double vol = 0.025;
    const double total_vol = vol * 40;
    for (double grel : {1e-3, 1e-2, 0.1, 1.0, 10.0}) {
      const auto d = lambda_star(v, vol, grel * total_vol);
      double mass = 0.0;
      for (double x : d.density) mass += x;
      mass *= vol;
      CHECK(std::fabs(mass - 1.0) <= 1e-8);
      for (double x : d.density) CHECK(x >= 0.0);
    }
  }
}

TEST_CASE("bounds and gamma-monotonicity of the expected loss") {
  for (uint64_t rep = 0; rep < 50; ++rep) {
    const auto v = random_landscape(30, 4000 + rep);
    const double vol = 1.0 / 30;
    const double mean_v = mean(std::span<const double>(v));
    const double max_v = *std::max_element(v.begin(), v.end());
    double prev = 1e300;
    for (double grel : {1e-3, 1e-2, 0.1, 1.0, 10.0}) {
      const auto d = lambda_star(v, vol, grel * vol * 30);
      const double el = expected_loss(d, v);
      // slack covers the 1e-9-level normalization residual of lambda_star
      CHECK(el <= max_v * (1.0 + 1e-7) + 1e-9);
      CHECK(el >= mean_v * (1.0 - 1e-7) - 1e-9);
      CHECK(el <= prev * (1.0 + 1e-7) + 1e-9);
      prev = el;
    }
  }
}

TEST_CASE("atomic limit reaches the maximum") {
  for (uint64_t rep = 0; rep < 10; ++rep) {
    const auto v = random_landscape(25, 5000 + rep);
    const double vol = 0.08;
    const double range =
        *std::max_element(v.begin(), v.end()) - *std::min_element(v.begin(), v.end());
    const auto d = lambda_star(v, vol, 1e-6 * vol * 25);
    CHECK(expected_loss(d, v) >=
          *std::max_element(v.begin(), v.end()) - 1e-3 * std::max(range, 1e-12));
  }
}

TEST_CASE("brute-force simplex maximization matches expected_loss(lambda_star)") {
  for (uint64_t rep = 0; rep < 10; ++rep) {
    const auto v = random_landscape(24, 6000 + rep);
    const double vol = 1.0 / 24;
    for (double grel : {0.01, 0.3, 1.0}) {
      const auto d = lambda_star(v, vol, grel * 1.0);
      double c = 0.0;
      for (double x : d.density) c += x * x;
      c *= vol;
      const double direct = expected_loss(d, v);
      const double brute = bruteforce_max_expected_loss(v, vol, c, 7000 + rep);
      CHECK(std::fabs(direct - brute) <= 1e-6);
    }
  }
}
