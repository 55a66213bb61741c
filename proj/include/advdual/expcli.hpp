#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "advdual/dataio.hpp"
#include "advdual/trainer.hpp"

namespace advdual {

// exit codes shared by the CLI verbs
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfigError = 2;
inline constexpr int kExitDataError = 3;
inline constexpr int kExitDivergence = 4;

// Flat key-value configuration with dotted section keys. Precedence is
// CLI flags > config file > defaults; the resolved map is echoed into
// summary.json so any run can be replayed from its own summary.
struct RunConfig {
  std::map<std::string, std::string> kv;

  bool has(const std::string& key) const { return kv.count(key) > 0; }
  std::string get(const std::string& key) const;
  double get_num(const std::string& key) const;
  int get_int(const std::string& key) const;
  uint64_t get_u64(const std::string& key) const;
  bool get_flag(const std::string& key) const;
  std::vector<double> get_list(const std::string& key) const;
  std::vector<int> get_int_list(const std::string& key) const;
  void set(const std::string& key, const std::string& value) { kv[key] = value; }
  void set_num(const std::string& key, double value);

  // defaults for every recognized key
  static RunConfig defaults();
  // flat `key = value` text, or a summary.json (its "config" object is used)
  static RunConfig load_file(const std::string& path);
  void merge_from(const RunConfig& overrides);
};

// resolved pieces of one experiment
struct Experiment {
  Dataset train;
  Dataset test;
  Arch arch;
  TrainCfg cfg;
  SamplerCfg eval_fgsm;
  SamplerCfg eval_pgd;
  uint64_t input_hash = 0;
};

Experiment build_experiment(const RunConfig& cfg);

// model (de)serialization
void save_model(const ModelParams& m, const std::string& path);
ModelParams load_model(const std::string& path);

// CLI verb drivers; each writes its artifacts under cfg["out"]
int run_single(const RunConfig& cfg);
int run_eval(const RunConfig& cfg, const std::string& model_path);
int run_rho_sweep(const RunConfig& cfg);
int run_nu_sweep(const RunConfig& cfg);
int run_steps_sweep(const RunConfig& cfg);
int run_oracle_report(const RunConfig& cfg);
int run_sampler_validation(const RunConfig& cfg);
int run_pca(const RunConfig& cfg, const std::string& model_path);
int run_gen_data(const RunConfig& cfg);

// helpers shared with tests
std::string history_csv(const RunHistory& h);
uint64_t fnv1a64(const void* data, size_t len, uint64_t h = 0xcbf29ce484222325ull);
std::string format_g17(double v);

// tiny 1-D tanh network whose class-0 loss over [-1, 1] is a smooth positive
// interior bump; used by the sampler validation and oracle reports
ModelParams make_bump_model_1d();

}  // namespace advdual
