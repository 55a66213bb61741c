#pragma once

#include <optional>
#include <span>
#include <utility>
#include <vector>

namespace advdual {

enum class NormKind { linf, l2 };

// The feasible perturbation set: a norm ball of radius epsilon, with an
// optional data-domain clamp applied when forming model inputs x + delta.
struct PerturbSet {
  NormKind norm_kind = NormKind::linf;
  double epsilon = 0.0;
  std::optional<std::pair<double, double>> clamp_domain;  // (lo, hi), lo < hi

  static PerturbSet linf_ball(double eps) { return {NormKind::linf, eps, std::nullopt}; }
  static PerturbSet l2_ball(double eps) { return {NormKind::l2, eps, std::nullopt}; }
};

// Projection onto the ball. Idempotent bit-exactly; inputs already inside are
// returned unchanged.
void project_inplace(const PerturbSet& set, std::span<double> delta);
std::vector<double> project(const PerturbSet& set, std::vector<double> delta);

// Membership with absolute boundary tolerance 1e-12.
bool contains(const PerturbSet& set, std::span<const double> delta);

// x + delta, clipped to the clamp domain when one is configured.
std::vector<double> clamp_perturbed(const PerturbSet& set, std::span<const double> x,
                                    std::span<const double> delta);
void clamp_perturbed_into(const PerturbSet& set, std::span<const double> x,
                          std::span<const double> delta, std::span<double> out);

}  // namespace advdual
