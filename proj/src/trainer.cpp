#include "advdual/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "advdual/rng.hpp"

namespace advdual {

namespace {

bool uses_sampler(TrainMethod m) { return m != TrainMethod::erm; }

std::vector<int> shuffled_indices(int n, uint64_t key) {
  std::vector<int> idx(n);
  for (int i = 0; i < n; ++i) idx[i] = i;
  RngStream rng(key);
  for (int i = 0; i + 1 < n; ++i) {
    const int j = i + static_cast<int>(rng.next_below(static_cast<uint64_t>(n - i)));
    std::swap(idx[i], idx[j]);
  }
  return idx;
}

struct AccuracyCounter {
  int correct = 0;
  int total = 0;
};

double accuracy_impl(const ModelParams& m, const Dataset& ds, const SamplerCfg* attack,
                     const PerturbSet& set, const LossTriple& losses, bool parallel) {
  Matrix points;
  if (attack != nullptr && set.epsilon > 0.0) {
    Matrix deltas = parallel
                        ? run_sampler(m, set, ds.inputs, ds.labels, *attack, losses)
                        : run_sampler_serial(m, set, ds.inputs, ds.labels, *attack, losses);
    points = Matrix(ds.size(), ds.dim());
    for (int i = 0; i < ds.size(); ++i) {
      clamp_perturbed_into(set, ds.inputs.row_span(i), deltas.row_span(i), points.row_span(i));
    }
  }
  const Matrix& inputs = points.rows > 0 ? points : ds.inputs;
  const int nc = num_chunks(ds.size());
  std::vector<int> correct(nc, 0);
#pragma omp parallel for schedule(static) if (parallel)
  for (int c = 0; c < nc; ++c) {
    std::vector<double> probs(m.arch.num_classes);
    const int end = std::min(ds.size(), (c + 1) * kReduceChunk);
    for (int i = c * kReduceChunk; i < end; ++i) {
      forward(m, inputs.row_span(i), probs);
      if (argmax_lowest(probs) == ds.labels[i]) ++correct[c];
    }
  }
  int total = 0;
  for (int v : correct) total += v;
  return static_cast<double>(total) / ds.size();
}

}  // namespace

double evaluate(const ModelParams& m, const Dataset& ds, const SamplerCfg* attack,
                const PerturbSet& set, const LossTriple& losses) {
  return accuracy_impl(m, ds, attack, set, losses, true);
}
double evaluate_serial(const ModelParams& m, const Dataset& ds, const SamplerCfg* attack,
                       const PerturbSet& set, const LossTriple& losses) {
  return accuracy_impl(m, ds, attack, set, losses, false);
}

double constraint_slack(const ModelParams& m, const Dataset& ds, double rho,
                        LossKind nominal, double clip_b) {
  const double avg = batch_mean_loss(m, ds.inputs, ds.labels, nominal, nullptr, clip_b);
  return std::max(avg - rho, 0.0);
}

double empirical_lagrangian(const ModelParams& m, const Dataset& ds, double nu, double rho,
                            const SamplerCfg& attack, const PerturbSet& set,
                            const LossTriple& losses) {
  double robust;
  if (set.epsilon > 0.0) {
    const Matrix deltas = run_sampler(m, set, ds.inputs, ds.labels, attack, losses);
    Matrix points(ds.size(), ds.dim());
    for (int i = 0; i < ds.size(); ++i) {
      clamp_perturbed_into(set, ds.inputs.row_span(i), deltas.row_span(i), points.row_span(i));
    }
    Matrix refs;
    const Matrix* refp = nullptr;
    if (losses.robust == LossKind::kl_to_clean) {
      refs = forward_batch(m, ds.inputs);
      refp = &refs;
    }
    robust = batch_mean_loss(m, points, ds.labels, losses.robust, refp, losses.clip_b);
  } else {
    robust = batch_mean_loss(m, ds.inputs, ds.labels, losses.robust, nullptr, losses.clip_b);
  }
  const double nominal =
      batch_mean_loss(m, ds.inputs, ds.labels, losses.nominal, nullptr, losses.clip_b);
  return robust + nu * (nominal - rho);
}

TrainResult train(ModelParams model, const Dataset& train_set, const Dataset* eval_set,
                  const SamplerCfg* eval_attack, const TrainCfg& cfg) {
  if (cfg.epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (cfg.batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (!(cfg.eta_primal >= 0.0)) throw std::invalid_argument("train: bad primal step");
  if (cfg.method == TrainMethod::fgsm && cfg.sampler.method != SamplerMethod::fgsm) {
    throw std::invalid_argument("train: fgsm method requires an fgsm sampler");
  }

  const int n = train_set.size();
  const int p = model.arch.param_count();
  TrainResult out;
  RunHistory& hist = out.history;

  double nu = 0.0;
  switch (cfg.method) {
    case TrainMethod::dale: nu = cfg.dual.nu; break;
    case TrainMethod::penalty: nu = cfg.fixed_nu; break;
    default: nu = 0.0; break;
  }

  std::vector<double> velocity;
  if (cfg.optimizer == Optimizer::sgd_momentum) velocity.assign(p, 0.0);
  std::vector<double> step(p);
  double lr = cfg.eta_primal;

  const Dataset& eval_ds = eval_set != nullptr ? *eval_set : train_set;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order =
        shuffled_indices(n, derive_key(cfg.seed, kStreamShuffle, static_cast<uint64_t>(epoch)));
    double nom_sum = 0.0, ro_sum = 0.0;
    const int nbatches = (n + cfg.batch_size - 1) / cfg.batch_size;
    for (int b = 0; b < nbatches; ++b) {
      const int lo = b * cfg.batch_size;
      const int hi = std::min(n, lo + cfg.batch_size);
      const int bs = hi - lo;
      Matrix clean(bs, train_set.dim());
      std::vector<int> labels(bs);
      for (int i = 0; i < bs; ++i) {
        const int src = order[lo + i];
        std::copy(train_set.inputs.row(src), train_set.inputs.row(src) + train_set.dim(),
                  clean.row(i));
        labels[i] = train_set.labels[src];
      }

      Matrix perturbed;
      if (uses_sampler(cfg.method) && cfg.pert.epsilon > 0.0) {
        SamplerCfg scfg = cfg.sampler;
        scfg.seed = derive_key(cfg.seed, kStreamSampler, static_cast<uint64_t>(epoch),
                               static_cast<uint64_t>(b));
        const Matrix deltas = run_sampler(model, cfg.pert, clean, labels, scfg, cfg.losses);
        perturbed = Matrix(bs, clean.cols);
        for (int i = 0; i < bs; ++i) {
          clamp_perturbed_into(cfg.pert, clean.row_span(i), deltas.row_span(i),
                               perturbed.row_span(i));
        }
      }
      const Matrix& xp = perturbed.rows > 0 ? perturbed : clean;

      LossTriple lt = cfg.losses;
      if (cfg.method == TrainMethod::erm) lt.robust = lt.nominal;
      const DualGradResult res = grad_theta_dual(model, clean, xp, labels, lt, nu);
      if (!std::isfinite(res.robust_loss_mean) || !std::isfinite(res.nominal_loss_mean)) {
        hist.aborted = true;
        hist.abort_reason = "non-finite loss at epoch " + std::to_string(epoch) + " batch " +
                            std::to_string(b);
        hist.final_nu = nu;
        out.model = std::move(model);
        return out;
      }
      nom_sum += res.nominal_loss_mean * bs;
      ro_sum += res.robust_loss_mean * bs;

      // primal step (single writer)
      if (cfg.weight_decay != 0.0) {
        for (int j = 0; j < p; ++j) step[j] = res.grad[j] + cfg.weight_decay * model.theta[j];
      } else {
        std::copy(res.grad.begin(), res.grad.end(), step.begin());
      }
      if (cfg.optimizer == Optimizer::sgd_momentum) {
        for (int j = 0; j < p; ++j) {
          velocity[j] = cfg.momentum * velocity[j] + step[j];
          model.theta[j] -= lr * velocity[j];
        }
      } else {
        for (int j = 0; j < p; ++j) model.theta[j] -= lr * step[j];
      }
    }

    double avg_nominal = nom_sum / n;
    if (cfg.strict_dual_pass) {
      avg_nominal = batch_mean_loss(model, train_set.inputs, train_set.labels,
                                    cfg.losses.nominal, nullptr, cfg.losses.clip_b);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.clean_loss = avg_nominal;
    rec.robust_loss = ro_sum / n;
    rec.nu = nu;
    rec.slack = std::max(avg_nominal - cfg.dual.rho, 0.0);
    rec.clean_acc = evaluate(model, eval_ds, nullptr, cfg.pert, cfg.losses);
    rec.robust_acc = eval_attack != nullptr
                         ? evaluate(model, eval_ds, eval_attack, cfg.pert, cfg.losses)
                         : rec.clean_acc;
    hist.records.push_back(rec);

    if (cfg.method == TrainMethod::dale) {
      nu = std::max(0.0, nu + cfg.dual.eta_dual * (avg_nominal - cfg.dual.rho));
    }
    lr *= cfg.lr_decay;
  }
  hist.final_nu = nu;
  out.model = std::move(model);
  return out;
}

TrainResult dale_train(ModelParams model, const Dataset& train_set, const Dataset* eval_set,
                       const SamplerCfg* eval_attack, TrainCfg cfg) {
  cfg.method = TrainMethod::dale;
  return train(std::move(model), train_set, eval_set, eval_attack, cfg);
}

TrainResult erm_train(ModelParams model, const Dataset& train_set, const Dataset* eval_set,
                      const SamplerCfg* eval_attack, TrainCfg cfg) {
  cfg.method = TrainMethod::erm;
  return train(std::move(model), train_set, eval_set, eval_attack, cfg);
}

TrainResult adv_train(ModelParams model, const Dataset& train_set, const Dataset* eval_set,
                      const SamplerCfg* eval_attack, TrainCfg cfg) {
  if (cfg.sampler.method != SamplerMethod::fgsm && cfg.sampler.method != SamplerMethod::pgd) {
    throw std::invalid_argument("adv_train: sampler must be fgsm or pgd");
  }
  cfg.method = cfg.sampler.method == SamplerMethod::fgsm ? TrainMethod::fgsm : TrainMethod::pgd;
  return train(std::move(model), train_set, eval_set, eval_attack, cfg);
}

TrainResult penalty_train(ModelParams model, const Dataset& train_set, const Dataset* eval_set,
                          const SamplerCfg* eval_attack, TrainCfg cfg, double fixed_nu) {
  if (fixed_nu < 0.0) throw std::invalid_argument("penalty_train: fixed_nu must be >= 0");
  cfg.method = TrainMethod::penalty;
  cfg.fixed_nu = fixed_nu;
  cfg.dual.eta_dual = 0.0;
  return train(std::move(model), train_set, eval_set, eval_attack, cfg);
}

}  // namespace advdual
