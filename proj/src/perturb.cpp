#include "advdual/perturb.hpp"

#include <algorithm>
#include <cmath>

namespace advdual {

void project_inplace(const PerturbSet& set, std::span<double> delta) {
  if (set.norm_kind == NormKind::linf) {
    for (double& d : delta) d = std::clamp(d, -set.epsilon, set.epsilon);
    return;
  }
  double sq = 0.0;
  for (double d : delta) sq += d * d;
  const double norm = std::sqrt(sq);
  // the relative slack keeps a second projection from rescaling by ~1 ulp
  if (norm > set.epsilon * (1.0 + 1e-14)) {
    const double scale = set.epsilon / norm;
    for (double& d : delta) d *= scale;
  }
}

std::vector<double> project(const PerturbSet& set, std::vector<double> delta) {
  project_inplace(set, delta);
  return delta;
}

bool contains(const PerturbSet& set, std::span<const double> delta) {
  if (set.norm_kind == NormKind::linf) {
    for (double d : delta) {
      if (std::fabs(d) > set.epsilon + 1e-12) return false;
    }
    return true;
  }
  double sq = 0.0;
  for (double d : delta) sq += d * d;
  return std::sqrt(sq) <= set.epsilon + 1e-12;
}

void clamp_perturbed_into(const PerturbSet& set, std::span<const double> x,
                          std::span<const double> delta, std::span<double> out) {
  if (set.clamp_domain) {
    const auto [lo, hi] = *set.clamp_domain;
    for (size_t i = 0; i < x.size(); ++i) out[i] = std::clamp(x[i] + delta[i], lo, hi);
  } else {
    for (size_t i = 0; i < x.size(); ++i) out[i] = x[i] + delta[i];
  }
}

std::vector<double> clamp_perturbed(const PerturbSet& set, std::span<const double> x,
                                    std::span<const double> delta) {
  std::vector<double> out(x.size());
  clamp_perturbed_into(set, x, delta, out);
  return out;
}

}  // namespace advdual
