#include <doctest.h>

#include <cmath>

#include "advdual/perturb.hpp"
#include "advdual/rng.hpp"

using namespace advdual;

TEST_CASE("project: linf componentwise clip") {
  const PerturbSet set = PerturbSet::linf_ball(0.3);
  const auto d = project(set, {0.5, -0.1});
  CHECK(d[0] == 0.3);
  CHECK(d[1] == -0.1);
}

TEST_CASE("project: l2 radial rescale") {
  const PerturbSet set = PerturbSet::l2_ball(1.0);
  const auto d = project(set, {3.0, 4.0});
  CHECK(d[0] == doctest::Approx(0.6).epsilon(1e-15));
  CHECK(d[1] == doctest::Approx(0.8).epsilon(1e-15));
}

TEST_CASE("project: zero maps to zero, interior unchanged") {
  for (const auto& set : {PerturbSet::linf_ball(0.2), PerturbSet::l2_ball(0.2)}) {
    const auto z = project(set, {0.0, 0.0, 0.0});
    for (double v : z) CHECK(v == 0.0);
    const std::vector<double> inside{0.05, -0.05, 0.1};
    CHECK(project(set, inside) == inside);
  }
}

TEST_CASE("project: idempotent bit-exactly on random vectors") {
  RngStream rng(2);
  for (const auto& set : {PerturbSet::linf_ball(0.37), PerturbSet::l2_ball(0.37)}) {
    for (int rep = 0; rep < 1000; ++rep) {
      std::vector<double> v(4);
      for (double& x : v) x = rng.next_uniform(-2.0, 2.0);
      const auto once = project(set, v);
      const auto twice = project(set, once);
      CHECK(once == twice);
      CHECK(contains(set, once));
    }
  }
}

TEST_CASE("project: l2 projection is the nearest feasible point") {
  RngStream rng(3);
  const PerturbSet set = PerturbSet::l2_ball(0.8);
  for (int rep = 0; rep < 1000; ++rep) {
    std::vector<double> v(3);
    for (double& x : v) x = rng.next_uniform(-3.0, 3.0);
    const auto p = project(set, v);
    double dp = 0.0;
    for (size_t j = 0; j < v.size(); ++j) dp += (p[j] - v[j]) * (p[j] - v[j]);
    for (int u = 0; u < 100; ++u) {
      std::vector<double> q(3);
      for (double& x : q) x = rng.next_uniform(-0.8, 0.8);
      project_inplace(set, q);
      double dq = 0.0;
      for (size_t j = 0; j < v.size(); ++j) dq += (q[j] - v[j]) * (q[j] - v[j]);
      CHECK(dp <= dq + 1e-12);
    }
  }
}

TEST_CASE("contains: boundary tolerance") {
  const PerturbSet set = PerturbSet::linf_ball(0.3);
  CHECK(contains(set, std::vector<double>{0.3, 0.3}));
  CHECK_FALSE(contains(set, std::vector<double>{0.300001, 0.0}));
  CHECK(contains(set, std::vector<double>{0.0, 0.0}));
  const PerturbSet l2 = PerturbSet::l2_ball(1.0);
  CHECK(contains(l2, std::vector<double>{1.0, 0.0}));
  CHECK_FALSE(contains(l2, std::vector<double>{1.0, 0.01}));
}

TEST_CASE("clamp_perturbed: with and without a domain") {
  PerturbSet set = PerturbSet::linf_ball(0.2);
  const std::vector<double> x{0.95, 0.5}, d{0.1, 0.05};
  const auto plain = clamp_perturbed(set, x, d);
  CHECK(plain[0] == 0.95 + 0.1);
  CHECK(plain[1] == 0.55);
  set.clamp_domain = {0.0, 1.0};
  const auto clipped = clamp_perturbed(set, x, d);
  CHECK(clipped[0] == 1.0);
  CHECK(clipped[1] == 0.55);
}

TEST_CASE("rng: streams are deterministic and distinct") {
  RngStream a(derive_key(7, kStreamNoise, 0, 0));
  RngStream b(derive_key(7, kStreamNoise, 0, 0));
  RngStream c(derive_key(7, kStreamNoise, 0, 1));
  bool all_eq = true, any_diff = false;
  for (int i = 0; i < 100; ++i) {
    const uint64_t xa = a.next_u64(), xb = b.next_u64(), xc = c.next_u64();
    all_eq = all_eq && (xa == xb);
    any_diff = any_diff || (xa != xc);
  }
  CHECK(all_eq);
  CHECK(any_diff);
}

TEST_CASE("rng: uniform unit range and normal moments") {
  RngStream rng(11);
  double s = 0.0, s2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const double u = rng.next_unit();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    const double z = rng.next_normal();
    s += z;
    s2 += z * z;
  }
  CHECK(std::fabs(s / n) < 0.01);
  CHECK(std::fabs(s2 / n - 1.0) < 0.02);
}

TEST_CASE("rng: next_below stays in range and covers values") {
  RngStream rng(13);
  std::vector<int> counts(7, 0);
  for (int i = 0; i < 7000; ++i) ++counts[rng.next_below(7)];
  for (int c : counts) CHECK(c > 700);
}
