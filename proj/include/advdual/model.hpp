#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "advdual/matrix.hpp"

namespace advdual {

enum class Activation { tanh_fn, relu };

// Architecture descriptor: an empty hidden list is a plain softmax-linear
// (logistic) classifier; otherwise a fully-connected MLP.
struct Arch {
  int input_dim = 2;
  std::vector<int> hidden;
  int num_classes = 2;
  Activation activation = Activation::tanh_fn;

  // widths of all activations: input, hidden..., output logits
  std::vector<int> widths() const;
  int num_layers() const { return static_cast<int>(hidden.size()) + 1; }
  int param_count() const;
};

// Flat parameter vector. Layout per layer l: W_l row-major [out x in], then b_l.
struct ModelParams {
  Arch arch;
  std::vector<double> theta;
};

ModelParams zero_model(const Arch& arch);
// symmetric uniform init, scale 1/sqrt(fan_in); biases zero
ModelParams init_model(const Arch& arch, uint64_t seed);

enum class LossKind { cross_entropy, kl_to_clean, zero_one };

bool is_differentiable(LossKind kind);
std::string loss_kind_name(LossKind kind);

// The three roles a loss plays in the training objective: the sampler's
// potential, the adversarial term, and the nominal constraint term.
struct LossTriple {
  LossKind pert = LossKind::cross_entropy;
  LossKind robust = LossKind::cross_entropy;
  LossKind nominal = LossKind::cross_entropy;
  double clip_b = 50.0;      // cross-entropy clipped to [0, B]
  double log_floor = 1e-12;  // floor under the log-potential's argument
};

// loss of a single prediction. `ref` is the reference simplex vector for
// kl_to_clean and may be empty for the other kinds.
double loss_value(LossKind kind, std::span<const double> probs, int label,
                  std::span<const double> ref, double clip_b);

int argmax_lowest(std::span<const double> v);

// --- forward ------------------------------------------------------------

void forward(const ModelParams& m, std::span<const double> x, std::span<double> probs);
std::vector<double> forward(const ModelParams& m, std::span<const double> x);

Matrix forward_batch(const ModelParams& m, const Matrix& inputs);
Matrix forward_batch_serial(const ModelParams& m, const Matrix& inputs);

// --- gradients ------------------------------------------------------------

// exact gradient of (1/m) sum_i loss(f(x_i), y_i) w.r.t. theta.
// refs: one reference row per example when the kind is kl_to_clean.
std::vector<double> grad_theta(const ModelParams& m, const Matrix& inputs,
                               const std::vector<int>& labels, LossKind kind,
                               const Matrix* refs, double clip_b);
std::vector<double> grad_theta_serial(const ModelParams& m, const Matrix& inputs,
                                      const std::vector<int>& labels, LossKind kind,
                                      const Matrix* refs, double clip_b);

// the combined primal gradient
//   (1/m) sum_i [ l_ro(f(xp_i), y_i) + nu * l_nom(f(x_i), y_i) ],
// with the dual weight nu on the nominal term. KL references are the clean
// predictions f(x_i) under the current parameters, held constant.
struct DualGradResult {
  std::vector<double> grad;
  double robust_loss_mean = 0.0;
  double nominal_loss_mean = 0.0;
};
DualGradResult grad_theta_dual(const ModelParams& m, const Matrix& clean,
                               const Matrix& perturbed, const std::vector<int>& labels,
                               const LossTriple& losses, double nu);
DualGradResult grad_theta_dual_serial(const ModelParams& m, const Matrix& clean,
                                      const Matrix& perturbed, const std::vector<int>& labels,
                                      const LossTriple& losses, double nu);

// exact gradient of loss(f(x), y) w.r.t. the input x
void grad_input(const ModelParams& m, std::span<const double> x, int label, LossKind kind,
                std::span<const double> ref, double clip_b, std::span<double> out);

// gradient of log(max(loss, floor)) w.r.t. x; returns the (unfloored) loss value
double grad_log_loss_input(const ModelParams& m, std::span<const double> x, int label,
                           LossKind kind, std::span<const double> ref, double clip_b,
                           double floor, std::span<double> out);

// mean loss over a batch (deterministic chunked sum)
double batch_mean_loss(const ModelParams& m, const Matrix& inputs,
                       const std::vector<int>& labels, LossKind kind, const Matrix* refs,
                       double clip_b);
double batch_mean_loss_serial(const ModelParams& m, const Matrix& inputs,
                              const std::vector<int>& labels, LossKind kind,
                              const Matrix* refs, double clip_b);

}  // namespace advdual
