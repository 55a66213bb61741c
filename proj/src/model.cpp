#include "advdual/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "advdual/rng.hpp"

namespace advdual {

std::vector<int> Arch::widths() const {
  std::vector<int> w;
  w.reserve(hidden.size() + 2);
  w.push_back(input_dim);
  for (int h : hidden) w.push_back(h);
  w.push_back(num_classes);
  return w;
}

int Arch::param_count() const {
  const auto w = widths();
  int p = 0;
  for (size_t l = 0; l + 1 < w.size(); ++l) p += w[l] * w[l + 1] + w[l + 1];
  return p;
}

ModelParams zero_model(const Arch& arch) {
  return {arch, std::vector<double>(arch.param_count(), 0.0)};
}

ModelParams init_model(const Arch& arch, uint64_t seed) {
  ModelParams m{arch, std::vector<double>(arch.param_count())};
  RngStream rng(derive_key(seed, kStreamInit));
  const auto w = arch.widths();
  size_t pos = 0;
  for (size_t l = 0; l + 1 < w.size(); ++l) {
    const double a = 1.0 / std::sqrt(static_cast<double>(w[l]));
    for (int j = 0; j < w[l] * w[l + 1]; ++j) m.theta[pos++] = rng.next_uniform(-a, a);
    for (int j = 0; j < w[l + 1]; ++j) m.theta[pos++] = 0.0;
  }
  return m;
}

bool is_differentiable(LossKind kind) { return kind != LossKind::zero_one; }

std::string loss_kind_name(LossKind kind) {
  switch (kind) {
    case LossKind::cross_entropy: return "ce";
    case LossKind::kl_to_clean: return "kl";
    case LossKind::zero_one: return "zero_one";
  }
  return "?";
}

int argmax_lowest(std::span<const double> v) {
  int best = 0;
  for (int k = 1; k < static_cast<int>(v.size()); ++k) {
    if (v[k] > v[best]) best = k;
  }
  return best;
}

namespace {

constexpr double kTinyProb = 1e-300;

struct LayerOffsets {
  int w_off, b_off, in, out;
};

// reusable per-thread buffers for one architecture
struct Ws {
  std::vector<int> widths;
  std::vector<LayerOffsets> off;
  std::vector<std::vector<double>> z;  // pre-activations per layer
  std::vector<std::vector<double>> a;  // hidden activations (post-nonlinearity)
  std::vector<std::vector<double>> d;  // backprop deltas per layer
  std::vector<double> probs;
  std::vector<double> ref;

  explicit Ws(const Arch& arch) : widths(arch.widths()) {
    const int L = arch.num_layers();
    off.resize(L);
    z.resize(L);
    a.resize(L);  // a[l] holds activation of layer l output; last unused
    d.resize(L);
    int pos = 0;
    for (int l = 0; l < L; ++l) {
      off[l] = {pos, pos + widths[l] * widths[l + 1], widths[l], widths[l + 1]};
      pos += widths[l] * widths[l + 1] + widths[l + 1];
      z[l].resize(widths[l + 1]);
      a[l].resize(widths[l + 1]);
      d[l].resize(widths[l + 1]);
    }
    probs.resize(arch.num_classes);
    ref.resize(arch.num_classes);
  }
};

// exceptions cannot cross an OpenMP region, so label and kind checks run
// before any parallel loop
void check_labels(const std::vector<int>& labels, int k) {
  for (int y : labels) {
    if (y < 0 || y >= k) throw std::invalid_argument("loss: label out of range");
  }
}

void check_differentiable(LossKind kind) {
  if (!is_differentiable(kind)) {
    throw std::invalid_argument("loss: zero_one is evaluation-only, not differentiable");
  }
}

void check_width(const ModelParams& m, size_t got) {
  if (static_cast<int>(got) != m.arch.input_dim) {
    throw std::invalid_argument("forward: input width " + std::to_string(got) +
                                " != model input_dim " + std::to_string(m.arch.input_dim));
  }
  if (static_cast<int>(m.theta.size()) != m.arch.param_count()) {
    throw std::invalid_argument("model: theta length " + std::to_string(m.theta.size()) +
                                " != architecture parameter count " +
                                std::to_string(m.arch.param_count()));
  }
}

double activate(Activation act, double v) {
  return act == Activation::tanh_fn ? std::tanh(v) : (v > 0.0 ? v : 0.0);
}

// derivative expressed through (z, a) so tanh reuses its activation
double activate_grad(Activation act, double z, double a) {
  return act == Activation::tanh_fn ? 1.0 - a * a : (z > 0.0 ? 1.0 : 0.0);
}

// forward pass storing the full trace in ws; fills ws.probs
void fwd(const ModelParams& m, std::span<const double> x, Ws& ws) {
  const double* th = m.theta.data();
  const int L = static_cast<int>(ws.off.size());
  std::span<const double> prev = x;
  for (int l = 0; l < L; ++l) {
    const auto& o = ws.off[l];
    const double* W = th + o.w_off;
    const double* b = th + o.b_off;
    for (int j = 0; j < o.out; ++j) {
      double s = b[j];
      const double* wr = W + static_cast<size_t>(j) * o.in;
      for (int i = 0; i < o.in; ++i) s += wr[i] * prev[i];
      ws.z[l][j] = s;
    }
    if (l + 1 < L) {
      for (int j = 0; j < o.out; ++j) ws.a[l][j] = activate(m.arch.activation, ws.z[l][j]);
      prev = ws.a[l];
    }
  }
  // softmax with max subtraction
  const auto& logits = ws.z[L - 1];
  double mx = logits[0];
  for (double v : logits) mx = std::max(mx, v);
  double sum = 0.0;
  for (size_t k = 0; k < logits.size(); ++k) {
    ws.probs[k] = std::exp(logits[k] - mx);
    sum += ws.probs[k];
  }
  for (double& p : ws.probs) p /= sum;
}

// loss and dL/dz at the softmax input. clipped cross-entropy has zero
// gradient on its flat region.
double out_delta(LossKind kind, std::span<const double> probs, int label,
                 std::span<const double> ref, double clip_b, std::span<double> dout) {
  const int K = static_cast<int>(probs.size());
  switch (kind) {
    case LossKind::cross_entropy: {
      if (label < 0 || label >= K) throw std::invalid_argument("loss: label out of range");
      const double raw = -std::log(std::max(probs[label], kTinyProb));
      if (raw >= clip_b) {
        std::fill(dout.begin(), dout.end(), 0.0);
        return clip_b;
      }
      for (int k = 0; k < K; ++k) dout[k] = probs[k];
      dout[label] -= 1.0;
      return raw;
    }
    case LossKind::kl_to_clean: {
      double l = 0.0;
      for (int k = 0; k < K; ++k) {
        if (ref[k] > 0.0) l += ref[k] * (std::log(ref[k]) - std::log(std::max(probs[k], kTinyProb)));
        dout[k] = probs[k] - ref[k];
      }
      return std::max(l, 0.0);
    }
    case LossKind::zero_one:
      throw std::invalid_argument("loss: zero_one is evaluation-only, not differentiable");
  }
  return 0.0;
}

// backward pass through the trace left by fwd(). Accumulates
// scale * dLoss/dtheta into gtheta (when non-null) and writes dLoss/dx into
// gx (when non-null). Returns the loss value.
double backprop(const ModelParams& m, std::span<const double> x, int label, LossKind kind,
                std::span<const double> ref, double clip_b, double scale, double* gtheta,
                double* gx, Ws& ws) {
  fwd(m, x, ws);
  const int L = static_cast<int>(ws.off.size());
  const double loss = out_delta(kind, ws.probs, label, ref, clip_b, ws.d[L - 1]);
  const double* th = m.theta.data();
  for (int l = L - 1; l >= 0; --l) {
    const auto& o = ws.off[l];
    std::span<const double> prev = (l == 0) ? x : std::span<const double>(ws.a[l - 1]);
    if (gtheta != nullptr) {
      double* gW = gtheta + o.w_off;
      double* gb = gtheta + o.b_off;
      for (int j = 0; j < o.out; ++j) {
        const double dj = scale * ws.d[l][j];
        double* gwr = gW + static_cast<size_t>(j) * o.in;
        for (int i = 0; i < o.in; ++i) gwr[i] += dj * prev[i];
        gb[j] += dj;
      }
    }
    if (l == 0 && gx == nullptr) break;
    // propagate delta to the previous layer (or to the input)
    const double* W = th + o.w_off;
    double* dst = (l == 0) ? gx : ws.d[l - 1].data();
    const int nin = o.in;
    for (int i = 0; i < nin; ++i) dst[i] = 0.0;
    for (int j = 0; j < o.out; ++j) {
      const double dj = ws.d[l][j];
      const double* wr = W + static_cast<size_t>(j) * o.in;
      for (int i = 0; i < nin; ++i) dst[i] += wr[i] * dj;
    }
    if (l > 0) {
      for (int i = 0; i < nin; ++i) {
        dst[i] *= activate_grad(m.arch.activation, ws.z[l - 1][i], ws.a[l - 1][i]);
      }
    }
  }
  return loss;
}

double eval_loss(const ModelParams& m, std::span<const double> x, int label, LossKind kind,
                 std::span<const double> ref, double clip_b, Ws& ws) {
  fwd(m, x, ws);
  if (kind == LossKind::zero_one) {
    return argmax_lowest(ws.probs) == label ? 0.0 : 1.0;
  }
  return loss_value(kind, ws.probs, label, ref, clip_b);
}

}  // namespace

double loss_value(LossKind kind, std::span<const double> probs, int label,
                  std::span<const double> ref, double clip_b) {
  const int K = static_cast<int>(probs.size());
  switch (kind) {
    case LossKind::cross_entropy: {
      if (label < 0 || label >= K) throw std::invalid_argument("loss: label out of range");
      return std::min(-std::log(std::max(probs[label], kTinyProb)), clip_b);
    }
    case LossKind::kl_to_clean: {
      double l = 0.0;
      for (int k = 0; k < K; ++k) {
        if (ref[k] > 0.0) l += ref[k] * (std::log(ref[k]) - std::log(std::max(probs[k], kTinyProb)));
      }
      return std::max(l, 0.0);
    }
    case LossKind::zero_one: {
      if (label < 0 || label >= K) throw std::invalid_argument("loss: label out of range");
      return argmax_lowest(probs) == label ? 0.0 : 1.0;
    }
  }
  return 0.0;
}

void forward(const ModelParams& m, std::span<const double> x, std::span<double> probs) {
  check_width(m, x.size());
  Ws ws(m.arch);
  fwd(m, x, ws);
  std::copy(ws.probs.begin(), ws.probs.end(), probs.begin());
}

std::vector<double> forward(const ModelParams& m, std::span<const double> x) {
  std::vector<double> p(m.arch.num_classes);
  forward(m, x, p);
  return p;
}

namespace {

Matrix forward_batch_impl(const ModelParams& m, const Matrix& inputs, bool parallel) {
  check_width(m, inputs.cols);
  Matrix out(inputs.rows, m.arch.num_classes);
  const int nc = num_chunks(inputs.rows);
#pragma omp parallel for schedule(static) if (parallel)
  for (int c = 0; c < nc; ++c) {
    Ws ws(m.arch);
    const int end = std::min(inputs.rows, (c + 1) * kReduceChunk);
    for (int i = c * kReduceChunk; i < end; ++i) {
      fwd(m, inputs.row_span(i), ws);
      std::copy(ws.probs.begin(), ws.probs.end(), out.row(i));
    }
  }
  return out;
}

std::vector<double> grad_theta_impl(const ModelParams& m, const Matrix& inputs,
                                    const std::vector<int>& labels, LossKind kind,
                                    const Matrix* refs, double clip_b, bool parallel) {
  check_width(m, inputs.cols);
  check_differentiable(kind);
  check_labels(labels, m.arch.num_classes);
  const int n = inputs.rows;
  const int p = m.arch.param_count();
  const int nc = num_chunks(n);
  std::vector<double> partial(static_cast<size_t>(nc) * p, 0.0);
#pragma omp parallel for schedule(static) if (parallel)
  for (int c = 0; c < nc; ++c) {
    Ws ws(m.arch);
    double* g = partial.data() + static_cast<size_t>(c) * p;
    const int end = std::min(n, (c + 1) * kReduceChunk);
    for (int i = c * kReduceChunk; i < end; ++i) {
      std::span<const double> ref =
          refs != nullptr ? refs->row_span(i) : std::span<const double>{};
      backprop(m, inputs.row_span(i), labels[i], kind, ref, clip_b, 1.0, g, nullptr, ws);
    }
  }
  std::vector<double> grad(p, 0.0);
  for (int c = 0; c < nc; ++c) {
    const double* g = partial.data() + static_cast<size_t>(c) * p;
    for (int j = 0; j < p; ++j) grad[j] += g[j];
  }
  const double inv = 1.0 / n;
  for (double& v : grad) v *= inv;
  return grad;
}

DualGradResult grad_theta_dual_impl(const ModelParams& m, const Matrix& clean,
                                    const Matrix& perturbed, const std::vector<int>& labels,
                                    const LossTriple& losses, double nu, bool parallel) {
  check_width(m, clean.cols);
  if (perturbed.rows != clean.rows || perturbed.cols != clean.cols) {
    throw std::invalid_argument("grad_theta_dual: clean/perturbed shape mismatch");
  }
  check_differentiable(losses.robust);
  if (nu != 0.0) check_differentiable(losses.nominal);
  check_labels(labels, m.arch.num_classes);
  const int n = clean.rows;
  const int p = m.arch.param_count();
  const int nc = num_chunks(n);
  const bool robust_kl = losses.robust == LossKind::kl_to_clean;
  const bool nominal_kl = losses.nominal == LossKind::kl_to_clean;
  std::vector<double> partial(static_cast<size_t>(nc) * p, 0.0);
  std::vector<double> part_ro(nc, 0.0), part_nom(nc, 0.0);
#pragma omp parallel for schedule(static) if (parallel)
  for (int c = 0; c < nc; ++c) {
    Ws ws(m.arch);
    double* g = partial.data() + static_cast<size_t>(c) * p;
    const int end = std::min(n, (c + 1) * kReduceChunk);
    for (int i = c * kReduceChunk; i < end; ++i) {
      // clean pass: nominal term and the KL reference
      fwd(m, clean.row_span(i), ws);
      std::copy(ws.probs.begin(), ws.probs.end(), ws.ref.begin());
      if (nu != 0.0) {
        part_nom[c] += backprop(m, clean.row_span(i), labels[i], losses.nominal,
                                nominal_kl ? std::span<const double>(ws.ref)
                                           : std::span<const double>{},
                                losses.clip_b, nu, g, nullptr, ws);
      } else {
        part_nom[c] += loss_value(losses.nominal, ws.probs, labels[i],
                                  nominal_kl ? std::span<const double>(ws.ref)
                                             : std::span<const double>{},
                                  losses.clip_b);
      }
      // robust term on the perturbed input
      part_ro[c] += backprop(m, perturbed.row_span(i), labels[i], losses.robust,
                             robust_kl ? std::span<const double>(ws.ref)
                                       : std::span<const double>{},
                             losses.clip_b, 1.0, g, nullptr, ws);
    }
  }
  DualGradResult res;
  res.grad.assign(p, 0.0);
  double ro = 0.0, nom = 0.0;
  for (int c = 0; c < nc; ++c) {
    const double* g = partial.data() + static_cast<size_t>(c) * p;
    for (int j = 0; j < p; ++j) res.grad[j] += g[j];
    ro += part_ro[c];
    nom += part_nom[c];
  }
  const double inv = 1.0 / n;
  for (double& v : res.grad) v *= inv;
  res.robust_loss_mean = ro * inv;
  res.nominal_loss_mean = nom * inv;
  return res;
}

double batch_mean_loss_impl(const ModelParams& m, const Matrix& inputs,
                            const std::vector<int>& labels, LossKind kind, const Matrix* refs,
                            double clip_b, bool parallel) {
  check_width(m, inputs.cols);
  check_labels(labels, m.arch.num_classes);
  const int n = inputs.rows;
  const int nc = num_chunks(n);
  std::vector<double> part(nc, 0.0);
#pragma omp parallel for schedule(static) if (parallel)
  for (int c = 0; c < nc; ++c) {
    Ws ws(m.arch);
    const int end = std::min(n, (c + 1) * kReduceChunk);
    for (int i = c * kReduceChunk; i < end; ++i) {
      std::span<const double> ref =
          refs != nullptr ? refs->row_span(i) : std::span<const double>{};
      part[c] += eval_loss(m, inputs.row_span(i), labels[i], kind, ref, clip_b, ws);
    }
  }
  double s = 0.0;
  for (double v : part) s += v;
  return s / n;
}

}  // namespace

Matrix forward_batch(const ModelParams& m, const Matrix& inputs) {
  return forward_batch_impl(m, inputs, true);
}
Matrix forward_batch_serial(const ModelParams& m, const Matrix& inputs) {
  return forward_batch_impl(m, inputs, false);
}

std::vector<double> grad_theta(const ModelParams& m, const Matrix& inputs,
                               const std::vector<int>& labels, LossKind kind,
                               const Matrix* refs, double clip_b) {
  return grad_theta_impl(m, inputs, labels, kind, refs, clip_b, true);
}
std::vector<double> grad_theta_serial(const ModelParams& m, const Matrix& inputs,
                                      const std::vector<int>& labels, LossKind kind,
                                      const Matrix* refs, double clip_b) {
  return grad_theta_impl(m, inputs, labels, kind, refs, clip_b, false);
}

DualGradResult grad_theta_dual(const ModelParams& m, const Matrix& clean,
                               const Matrix& perturbed, const std::vector<int>& labels,
                               const LossTriple& losses, double nu) {
  return grad_theta_dual_impl(m, clean, perturbed, labels, losses, nu, true);
}
DualGradResult grad_theta_dual_serial(const ModelParams& m, const Matrix& clean,
                                      const Matrix& perturbed, const std::vector<int>& labels,
                                      const LossTriple& losses, double nu) {
  return grad_theta_dual_impl(m, clean, perturbed, labels, losses, nu, false);
}

void grad_input(const ModelParams& m, std::span<const double> x, int label, LossKind kind,
                std::span<const double> ref, double clip_b, std::span<double> out) {
  check_width(m, x.size());
  Ws ws(m.arch);
  backprop(m, x, label, kind, ref, clip_b, 1.0, nullptr, out.data(), ws);
}

double grad_log_loss_input(const ModelParams& m, std::span<const double> x, int label,
                           LossKind kind, std::span<const double> ref, double clip_b,
                           double floor, std::span<double> out) {
  check_width(m, x.size());
  Ws ws(m.arch);
  const double loss = backprop(m, x, label, kind, ref, clip_b, 1.0, nullptr, out.data(), ws);
  const double inv = 1.0 / std::max(loss, floor);
  for (double& v : out) v *= inv;
  return loss;
}

double batch_mean_loss(const ModelParams& m, const Matrix& inputs,
                       const std::vector<int>& labels, LossKind kind, const Matrix* refs,
                       double clip_b) {
  return batch_mean_loss_impl(m, inputs, labels, kind, refs, clip_b, true);
}
double batch_mean_loss_serial(const ModelParams& m, const Matrix& inputs,
                              const std::vector<int>& labels, LossKind kind,
                              const Matrix* refs, double clip_b) {
  return batch_mean_loss_impl(m, inputs, labels, kind, refs, clip_b, false);
}

}  // namespace advdual
