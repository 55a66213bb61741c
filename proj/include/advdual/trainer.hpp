#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "advdual/dataio.hpp"
#include "advdual/model.hpp"
#include "advdual/perturb.hpp"
#include "advdual/sampler.hpp"

namespace advdual {

enum class TrainMethod { erm, fgsm, pgd, dale, penalty };

// dual variable state: multiplier nu on the nominal-loss constraint,
// margin rho, and the dual ascent step
struct DualState {
  double nu = 0.0;
  double rho = 0.5;
  double eta_dual = 0.0;
};

enum class Optimizer { sgd, sgd_momentum };

struct TrainCfg {
  TrainMethod method = TrainMethod::dale;
  int epochs = 10;
  int batch_size = 32;
  double eta_primal = 0.1;
  Optimizer optimizer = Optimizer::sgd;
  double momentum = 0.9;
  double weight_decay = 0.0;
  double lr_decay = 1.0;  // multiplicative per epoch
  PerturbSet pert;
  SamplerCfg sampler;
  LossTriple losses;
  DualState dual;
  double fixed_nu = 0.0;         // penalty method weight
  bool strict_dual_pass = false; // full-dataset nominal average for the dual update
  uint64_t seed = 0;
};

struct EpochRecord {
  int epoch;
  double clean_loss;   // average nominal loss used in the dual update
  double robust_loss;  // average robust-term loss over the epoch's batches
  double nu;           // dual variable in force during this epoch
  double slack;        // [clean_loss - rho]_+
  double clean_acc;
  double robust_acc;
};

struct RunHistory {
  std::vector<EpochRecord> records;
  bool aborted = false;
  std::string abort_reason;
  double final_nu = 0.0;  // after the last dual update
};

struct TrainResult {
  ModelParams model;
  RunHistory history;
};

// Primal-dual training. Per-epoch accuracies are measured on eval (or the
// training set when eval is null), attacked with eval_attack when given.
TrainResult train(ModelParams model, const Dataset& train_set, const Dataset* eval_set,
                  const SamplerCfg* eval_attack, const TrainCfg& cfg);

TrainResult dale_train(ModelParams model, const Dataset& train_set, const Dataset* eval_set,
                       const SamplerCfg* eval_attack, TrainCfg cfg);
TrainResult erm_train(ModelParams model, const Dataset& train_set, const Dataset* eval_set,
                      const SamplerCfg* eval_attack, TrainCfg cfg);
TrainResult adv_train(ModelParams model, const Dataset& train_set, const Dataset* eval_set,
                      const SamplerCfg* eval_attack, TrainCfg cfg);
TrainResult penalty_train(ModelParams model, const Dataset& train_set, const Dataset* eval_set,
                          const SamplerCfg* eval_attack, TrainCfg cfg, double fixed_nu);

// accuracy of argmax predictions (ties to the lowest index), optionally after
// attacking each input with the given sampler over the given set
double evaluate(const ModelParams& m, const Dataset& ds, const SamplerCfg* attack,
                const PerturbSet& set, const LossTriple& losses);
double evaluate_serial(const ModelParams& m, const Dataset& ds, const SamplerCfg* attack,
                       const PerturbSet& set, const LossTriple& losses);

// [mean nominal loss - rho]_+ over the dataset
double constraint_slack(const ModelParams& m, const Dataset& ds, double rho,
                        LossKind nominal, double clip_b);

// empirical Lagrangian with the configured attack standing in for the inner max
double empirical_lagrangian(const ModelParams& m, const Dataset& ds, double nu, double rho,
                            const SamplerCfg& attack, const PerturbSet& set,
                            const LossTriple& losses);

}  // namespace advdual
