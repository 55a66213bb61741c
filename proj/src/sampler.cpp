#include "advdual/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace advdual {

namespace {

constexpr uint64_t kInitDraw = 0xffffffffull;  // step id reserved for random init

inline double sgn(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

// chain state shared across steps of one example
struct Chain {
  std::vector<double> delta;
  std::vector<double> point;  // x + delta
  std::vector<double> grad;
  std::vector<double> ref;  // clean prediction, for KL potentials
};

void init_chain(const PerturbSet& set, const SamplerCfg& cfg, std::span<const double> x,
                int example, Chain& ch) {
  const int dim = static_cast<int>(x.size());
  ch.delta.assign(dim, 0.0);
  ch.point.resize(dim);
  ch.grad.resize(dim);
  if (cfg.init == InitKind::uniform_random) {
    RngStream rng(derive_key(cfg.seed, kStreamNoise, static_cast<uint64_t>(example), kInitDraw));
    for (int j = 0; j < dim; ++j) ch.delta[j] = rng.next_uniform(-set.epsilon, set.epsilon);
    project_inplace(set, ch.delta);
  }
}

// one update of the configured kind; reads ch.delta, writes ch.delta
void advance(const ModelParams& m, const PerturbSet& set, const SamplerCfg& cfg,
             std::span<const double> x, int y, LossKind pert_kind, double clip_b,
             double log_floor, int example, int step, Chain& ch) {
  const int dim = static_cast<int>(x.size());
  for (int j = 0; j < dim; ++j) ch.point[j] = x[j] + ch.delta[j];
  const std::span<const double> ref =
      pert_kind == LossKind::kl_to_clean ? std::span<const double>(ch.ref)
                                         : std::span<const double>{};

  if (cfg.method == SamplerMethod::fgsm || cfg.method == SamplerMethod::pgd) {
    grad_input(m, ch.point, y, pert_kind, ref, clip_b, ch.grad);
    for (int j = 0; j < dim; ++j) ch.delta[j] += cfg.step_size * sgn(ch.grad[j]);
    project_inplace(set, ch.delta);
    return;
  }

  grad_log_loss_input(m, ch.point, y, pert_kind, ref, clip_b, log_floor, ch.grad);
  const double coef = cfg.noise_coef();
  const bool laplace = cfg.method == SamplerMethod::lmc_laplace;
  RngStream noise(derive_key(cfg.seed, kStreamNoise, static_cast<uint64_t>(example),
                             static_cast<uint64_t>(step)));
  if (laplace && cfg.sign_variant == SignVariant::sign_outside) {
    // delta <- proj[delta + eta sign(grad U + sqrt(2 eta T) xi)]
    for (int j = 0; j < dim; ++j) {
      const double drift = ch.grad[j] + (coef != 0.0 ? coef * noise.next_laplace() : 0.0);
      ch.delta[j] += cfg.step_size * sgn(drift);
    }
  } else {
    // delta <- proj[delta + eta grad U + sqrt(2 eta T) xi]
    for (int j = 0; j < dim; ++j) {
      double xi = 0.0;
      if (coef != 0.0) xi = laplace ? noise.next_laplace() : noise.next_normal();
      ch.delta[j] += cfg.step_size * ch.grad[j] + coef * xi;
    }
  }
  project_inplace(set, ch.delta);
}

Matrix run_sampler_impl(const ModelParams& m, const PerturbSet& set, const Matrix& inputs,
                        const std::vector<int>& labels, const SamplerCfg& cfg,
                        const LossTriple& losses, bool parallel) {
  if (static_cast<size_t>(inputs.rows) != labels.size()) {
    throw std::invalid_argument("run_sampler: inputs/labels size mismatch");
  }
  Matrix deltas(inputs.rows, inputs.cols);
  const int L = cfg.effective_steps();
  const int nc = num_chunks(inputs.rows);
#pragma omp parallel for schedule(static) if (parallel)
  for (int c = 0; c < nc; ++c) {
    Chain ch;
    const int end = std::min(inputs.rows, (c + 1) * kReduceChunk);
    for (int i = c * kReduceChunk; i < end; ++i) {
      const auto x = inputs.row_span(i);
      init_chain(set, cfg, x, i, ch);
      if (losses.pert == LossKind::kl_to_clean) ch.ref = forward(m, x);
      for (int s = 0; s < L; ++s) {
        advance(m, set, cfg, x, labels[i], losses.pert, losses.clip_b, losses.log_floor, i, s,
                ch);
      }
      std::copy(ch.delta.begin(), ch.delta.end(), deltas.row(i));
    }
  }
  return deltas;
}

}  // namespace

double SamplerCfg::noise_coef() const { return std::sqrt(2.0 * step_size * temperature); }

double SamplerCfg::temperature_for_noise_coef(double coef, double eta) {
  return coef * coef / (2.0 * eta);
}

std::vector<double> laplace_noise(RngStream& rng, int dim) {
  std::vector<double> xi(dim);
  for (double& v : xi) v = rng.next_laplace();
  return xi;
}

std::vector<double> pgd_step(const ModelParams& m, const PerturbSet& set,
                             std::span<const double> x, int y, std::span<const double> delta,
                             double eta, LossKind kind, std::span<const double> ref,
                             double clip_b) {
  const int dim = static_cast<int>(x.size());
  std::vector<double> point(dim), grad(dim), out(delta.begin(), delta.end());
  for (int j = 0; j < dim; ++j) point[j] = x[j] + delta[j];
  grad_input(m, point, y, kind, ref, clip_b, grad);
  for (int j = 0; j < dim; ++j) out[j] += eta * sgn(grad[j]);
  project_inplace(set, out);
  return out;
}

std::vector<double> lmc_step(const ModelParams& m, const PerturbSet& set,
                             std::span<const double> x, int y, std::span<const double> delta,
                             const SamplerCfg& cfg, LossKind pert_kind,
                             std::span<const double> ref, double clip_b, double log_floor,
                             int example_index, int step_index) {
  if (cfg.method != SamplerMethod::lmc_laplace && cfg.method != SamplerMethod::lmc_gauss) {
    throw std::invalid_argument("lmc_step: cfg.method is not a Langevin kind");
  }
  Chain ch;
  ch.delta.assign(delta.begin(), delta.end());
  ch.point.resize(delta.size());
  ch.grad.resize(delta.size());
  if (pert_kind == LossKind::kl_to_clean) ch.ref.assign(ref.begin(), ref.end());
  advance(m, set, cfg, x, y, pert_kind, clip_b, log_floor, example_index, step_index, ch);
  return ch.delta;
}

Matrix run_sampler(const ModelParams& m, const PerturbSet& set, const Matrix& inputs,
                   const std::vector<int>& labels, const SamplerCfg& cfg,
                   const LossTriple& losses) {
  return run_sampler_impl(m, set, inputs, labels, cfg, losses, true);
}

Matrix run_sampler_serial(const ModelParams& m, const PerturbSet& set, const Matrix& inputs,
                          const std::vector<int>& labels, const SamplerCfg& cfg,
                          const LossTriple& losses) {
  return run_sampler_impl(m, set, inputs, labels, cfg, losses, false);
}

}  // namespace advdual
