#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "advdual/matrix.hpp"
#include "advdual/model.hpp"
#include "advdual/perturb.hpp"
#include "advdual/rng.hpp"

namespace advdual {

enum class SamplerMethod { fgsm, pgd, lmc_laplace, lmc_gauss };
enum class SignVariant { sign_outside, no_sign };
enum class InitKind { zero, uniform_random };

struct SamplerCfg {
  SamplerMethod method = SamplerMethod::pgd;
  int steps = 7;             // L (fgsm always runs a single step)
  double step_size = 0.1;    // eta
  double temperature = 0.0;  // T; ignored for fgsm/pgd
  SignVariant sign_variant = SignVariant::sign_outside;
  InitKind init = InitKind::zero;
  uint64_t seed = 0;

  int effective_steps() const { return method == SamplerMethod::fgsm ? 1 : steps; }
  // the Langevin noise scale sqrt(2 eta T)
  double noise_coef() const;
  static double temperature_for_noise_coef(double coef, double eta);
};

// i.i.d. unit-scale Laplace vector drawn from the given stream
std::vector<double> laplace_noise(RngStream& rng, int dim);

// One signed projected gradient ascent step on loss(f(x + delta), y).
std::vector<double> pgd_step(const ModelParams& m, const PerturbSet& set,
                             std::span<const double> x, int y, std::span<const double> delta,
                             double eta, LossKind kind, std::span<const double> ref,
                             double clip_b);

// One Langevin step. Noise is keyed by (cfg.seed, example_index, step_index),
// so chains are schedule-invariant. With sign_outside the drift-plus-noise is
// passed through sign(); with no_sign the update is the plain drift form.
std::vector<double> lmc_step(const ModelParams& m, const PerturbSet& set,
                             std::span<const double> x, int y, std::span<const double> delta,
                             const SamplerCfg& cfg, LossKind pert_kind,
                             std::span<const double> ref, double clip_b, double log_floor,
                             int example_index, int step_index);

// Full batch of per-example chains; one perturbation row per example.
Matrix run_sampler(const ModelParams& m, const PerturbSet& set, const Matrix& inputs,
                   const std::vector<int>& labels, const SamplerCfg& cfg,
                   const LossTriple& losses);
Matrix run_sampler_serial(const ModelParams& m, const PerturbSet& set, const Matrix& inputs,
                          const std::vector<int>& labels, const SamplerCfg& cfg,
                          const LossTriple& losses);

}  // namespace advdual
