#include "advdual/expcli.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "advdual/oracle.hpp"
#include "advdual/pca.hpp"
#include "advdual/rng.hpp"
#include "advdual/sampler.hpp"
#include "advdual/stats.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace advdual {

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(trim(item));
  return out;
}

[[noreturn]] void config_error(const std::string& msg) {
  throw std::invalid_argument("config: " + msg);
}

}  // namespace

std::string RunConfig::get(const std::string& key) const {
  const auto it = kv.find(key);
  if (it == kv.end()) config_error("unknown key '" + key + "'");
  return it->second;
}

double RunConfig::get_num(const std::string& key) const {
  const std::string v = get(key);
  try {
    size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (const std::exception&) {
    config_error("key '" + key + "' is not a number: '" + v + "'");
  }
}

int RunConfig::get_int(const std::string& key) const {
  return static_cast<int>(std::llround(get_num(key)));
}

uint64_t RunConfig::get_u64(const std::string& key) const {
  const std::string v = get(key);
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    config_error("key '" + key + "' is not an unsigned integer: '" + v + "'");
  }
}

bool RunConfig::get_flag(const std::string& key) const {
  const std::string v = get(key);
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off" || v.empty()) return false;
  config_error("key '" + key + "' is not a boolean: '" + v + "'");
}

std::vector<double> RunConfig::get_list(const std::string& key) const {
  std::vector<double> out;
  for (const auto& tok : split(get(key), ',')) {
    if (tok.empty()) continue;
    out.push_back(std::stod(tok));
  }
  return out;
}

std::vector<int> RunConfig::get_int_list(const std::string& key) const {
  std::vector<int> out;
  for (double v : get_list(key)) out.push_back(static_cast<int>(std::llround(v)));
  return out;
}

void RunConfig::set_num(const std::string& key, double value) { kv[key] = format_g17(value); }

RunConfig RunConfig::defaults() {
  RunConfig c;
  auto& kv = c.kv;
  kv["seed"] = "1";
  kv["out"] = "out";
  kv["dataset"] = "blobs";
  kv["dataset.n"] = "1000";
  kv["dataset.test_n"] = "500";
  kv["dataset.noise"] = "0.15";
  kv["dataset.subset"] = "0";
  kv["dataset.test_subset"] = "0";
  kv["data.dir"] = "";
  kv["model.arch"] = "mlp";
  kv["model.hidden"] = "16,16";
  kv["model.activation"] = "tanh";
  kv["train.method"] = "dale";
  kv["train.epochs"] = "20";
  kv["train.batch"] = "32";
  kv["train.eta"] = "0.1";
  kv["train.optimizer"] = "sgd";
  kv["train.momentum"] = "0.9";
  kv["train.weight_decay"] = "0";
  kv["train.lr_decay"] = "1";
  kv["train.rho"] = "0.5";
  kv["train.dual_step"] = "0.02";
  kv["train.nu0"] = "0";
  kv["train.fixed_nu"] = "0.5";
  kv["train.strict_dual"] = "0";
  kv["pert.norm"] = "linf";
  kv["pert.epsilon"] = "0.1";
  kv["pert.clamp"] = "auto";
  kv["sampler.method"] = "lmc_laplace";
  kv["sampler.steps"] = "7";
  kv["sampler.eta"] = "0.1";
  kv["sampler.noise_coef"] = "0.001";
  kv["sampler.sign_variant"] = "outside";
  kv["sampler.init"] = "zero";
  kv["losses.pert"] = "ce";
  kv["losses.robust"] = "ce";
  kv["losses.nominal"] = "ce";
  kv["losses.clip_b"] = "50";
  kv["losses.floor"] = "1e-12";
  kv["eval.attack"] = "pgd";
  kv["eval.steps"] = "10";
  kv["eval.eta"] = "-1";
  kv["eval.epsilon"] = "-1";
  kv["eval.per_epoch_attack"] = "1";
  kv["sweep.seeds"] = "";
  kv["sweep.rhos"] = "0.05,0.2,0.5,1.0";
  kv["sweep.nus"] = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1.0";
  kv["sweep.steps_list"] = "1,3,7";
  kv["oracle.dim"] = "1";
  kv["oracle.nodes"] = "101";
  kv["oracle.gammas"] = "0.001,0.01,0.1,1,10";
  kv["pca.k"] = "2";
  kv["pca.samples"] = "512";
  return c;
}

RunConfig RunConfig::load_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) config_error("cannot open config file '" + path + "'");
  std::stringstream ss;
  ss << f.rdbuf();
  const std::string text = ss.str();
  RunConfig c;
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    // summary.json or a bare JSON object of config keys
    json j = json::parse(text);
    const json& obj = j.contains("config") ? j["config"] : j;
    for (const auto& [k, v] : obj.items()) {
      c.kv[k] = v.is_string() ? v.get<std::string>() : v.dump();
    }
    return c;
  }
  std::istringstream lines(text);
  std::string line;
  int lineno = 0;
  while (std::getline(lines, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      config_error("line " + std::to_string(lineno) + " of '" + path + "' has no '='");
    }
    c.kv[trim(t.substr(0, eq))] = trim(t.substr(eq + 1));
  }
  return c;
}

void RunConfig::merge_from(const RunConfig& overrides) {
  for (const auto& [k, v] : overrides.kv) kv[k] = v;
}

uint64_t fnv1a64(const void* data, size_t len, uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

std::string format_g17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace {

uint64_t hash_dataset(uint64_t h, const Dataset& ds) {
  h = fnv1a64(ds.inputs.data.data(), ds.inputs.data.size() * sizeof(double), h);
  h = fnv1a64(ds.labels.data(), ds.labels.size() * sizeof(int), h);
  return h;
}

LossKind parse_loss_kind(const std::string& s) {
  if (s == "ce") return LossKind::cross_entropy;
  if (s == "kl") return LossKind::kl_to_clean;
  if (s == "zero_one") return LossKind::zero_one;
  config_error("unknown loss kind '" + s + "'");
}

SamplerMethod parse_sampler_method(const std::string& s) {
  if (s == "fgsm") return SamplerMethod::fgsm;
  if (s == "pgd") return SamplerMethod::pgd;
  if (s == "lmc_laplace") return SamplerMethod::lmc_laplace;
  if (s == "lmc_gauss") return SamplerMethod::lmc_gauss;
  config_error("unknown sampler method '" + s + "'");
}

TrainMethod parse_train_method(const std::string& s) {
  if (s == "erm") return TrainMethod::erm;
  if (s == "fgsm") return TrainMethod::fgsm;
  if (s == "pgd") return TrainMethod::pgd;
  if (s == "dale") return TrainMethod::dale;
  if (s == "penalty") return TrainMethod::penalty;
  config_error("unknown train method '" + s + "'");
}

std::string sampler_method_name(SamplerMethod m) {
  switch (m) {
    case SamplerMethod::fgsm: return "fgsm";
    case SamplerMethod::pgd: return "pgd";
    case SamplerMethod::lmc_laplace: return "lmc_laplace";
    case SamplerMethod::lmc_gauss: return "lmc_gauss";
  }
  return "?";
}

PerturbSet parse_pert(const RunConfig& cfg) {
  PerturbSet set;
  const std::string norm = cfg.get("pert.norm");
  if (norm == "linf") {
    set.norm_kind = NormKind::linf;
  } else if (norm == "l2") {
    set.norm_kind = NormKind::l2;
  } else {
    config_error("unknown norm '" + norm + "'");
  }
  set.epsilon = cfg.get_num("pert.epsilon");
  if (set.epsilon < 0.0) config_error("pert.epsilon must be >= 0");
  std::string clamp = cfg.get("pert.clamp");
  if (clamp == "auto") {
    // pixel data stays in [0,1]; synthetic point clouds are unclamped
    clamp = cfg.get("dataset") == "mnist" ? "0,1" : "";
  }
  if (!clamp.empty()) {
    const auto parts = split(clamp, ',');
    if (parts.size() != 2) config_error("pert.clamp must be 'lo,hi', 'auto', or empty");
    const double lo = std::stod(parts[0]), hi = std::stod(parts[1]);
    if (!(lo < hi)) config_error("pert.clamp requires lo < hi");
    set.clamp_domain = {lo, hi};
  }
  return set;
}

SamplerCfg parse_sampler(const RunConfig& cfg, uint64_t seed) {
  SamplerCfg s;
  s.method = parse_sampler_method(cfg.get("sampler.method"));
  s.steps = cfg.get_int("sampler.steps");
  s.step_size = cfg.get_num("sampler.eta");
  s.temperature =
      SamplerCfg::temperature_for_noise_coef(cfg.get_num("sampler.noise_coef"), s.step_size);
  const std::string sv = cfg.get("sampler.sign_variant");
  if (sv == "outside") {
    s.sign_variant = SignVariant::sign_outside;
  } else if (sv == "none") {
    s.sign_variant = SignVariant::no_sign;
  } else {
    config_error("sampler.sign_variant must be 'outside' or 'none'");
  }
  const std::string init = cfg.get("sampler.init");
  if (init == "zero") {
    s.init = InitKind::zero;
  } else if (init == "uniform") {
    s.init = InitKind::uniform_random;
  } else {
    config_error("sampler.init must be 'zero' or 'uniform'");
  }
  s.seed = seed;
  if (s.steps < 0) config_error("sampler.steps must be >= 0");
  return s;
}

Dataset load_mnist_split(const RunConfig& cfg, bool train_split) {
  const std::string dir = cfg.get("data.dir");
  if (dir.empty()) config_error("dataset=mnist requires data.dir");
  const std::string img =
      dir + (train_split ? "/train-images-idx3-ubyte" : "/t10k-images-idx3-ubyte");
  const std::string lab =
      dir + (train_split ? "/train-labels-idx1-ubyte" : "/t10k-labels-idx1-ubyte");
  Dataset ds = load_idx(img, lab);
  ds.split = train_split ? "train" : "test";
  return ds;
}

}  // namespace

Experiment build_experiment(const RunConfig& cfg) {
  Experiment e;
  const uint64_t seed = cfg.get_u64("seed");
  const std::string dataset = cfg.get("dataset");
  const int n = cfg.get_int("dataset.n");
  const int test_n = cfg.get_int("dataset.test_n");
  const double noise = cfg.get_num("dataset.noise");

  if (dataset == "blobs") {
    const std::vector<std::vector<double>> centers{{-2.0, 0.0}, {2.0, 0.0}};
    e.train = make_blobs(n, centers, noise, derive_key(seed, 0xA));
    e.test = make_blobs(test_n, centers, noise, derive_key(seed, 0xB));
  } else if (dataset == "moons") {
    e.train = make_moons(n, noise, derive_key(seed, 0xA));
    e.test = make_moons(test_n, noise, derive_key(seed, 0xB));
  } else if (dataset == "mnist") {
    e.train = load_mnist_split(cfg, true);
    e.test = load_mnist_split(cfg, false);
    const int sub = cfg.get_int("dataset.subset");
    if (sub > 0 && sub < e.train.size()) e.train = subset(e.train, sub, derive_key(seed, 0xA));
    const int tsub = cfg.get_int("dataset.test_subset");
    if (tsub > 0 && tsub < e.test.size()) e.test = subset(e.test, tsub, derive_key(seed, 0xB));
  } else {
    config_error("unknown dataset '" + dataset + "'");
  }
  e.test.split = "test";

  e.arch.input_dim = e.train.dim();
  e.arch.num_classes = e.train.num_classes;
  const std::string archname = cfg.get("model.arch");
  if (archname == "logistic") {
    e.arch.hidden.clear();
  } else if (archname == "mlp") {
    e.arch.hidden = cfg.get_int_list("model.hidden");
  } else {
    config_error("model.arch must be 'logistic' or 'mlp'");
  }
  const std::string act = cfg.get("model.activation");
  if (act == "tanh") {
    e.arch.activation = Activation::tanh_fn;
  } else if (act == "relu") {
    e.arch.activation = Activation::relu;
  } else {
    config_error("model.activation must be 'tanh' or 'relu'");
  }

  TrainCfg& t = e.cfg;
  t.method = parse_train_method(cfg.get("train.method"));
  t.epochs = cfg.get_int("train.epochs");
  t.batch_size = cfg.get_int("train.batch");
  t.eta_primal = cfg.get_num("train.eta");
  const std::string opt = cfg.get("train.optimizer");
  if (opt == "sgd") {
    t.optimizer = Optimizer::sgd;
  } else if (opt == "momentum") {
    t.optimizer = Optimizer::sgd_momentum;
  } else {
    config_error("train.optimizer must be 'sgd' or 'momentum'");
  }
  t.momentum = cfg.get_num("train.momentum");
  t.weight_decay = cfg.get_num("train.weight_decay");
  t.lr_decay = cfg.get_num("train.lr_decay");
  t.pert = parse_pert(cfg);
  t.sampler = parse_sampler(cfg, seed);
  if (t.method == TrainMethod::fgsm) t.sampler.method = SamplerMethod::fgsm;
  if (t.method == TrainMethod::pgd) t.sampler.method = SamplerMethod::pgd;
  t.losses.pert = parse_loss_kind(cfg.get("losses.pert"));
  t.losses.robust = parse_loss_kind(cfg.get("losses.robust"));
  t.losses.nominal = parse_loss_kind(cfg.get("losses.nominal"));
  if (!is_differentiable(t.losses.pert) || !is_differentiable(t.losses.robust)) {
    config_error("losses.pert and losses.robust must be differentiable kinds");
  }
  t.losses.clip_b = cfg.get_num("losses.clip_b");
  t.losses.log_floor = cfg.get_num("losses.floor");
  t.dual.nu = cfg.get_num("train.nu0");
  t.dual.rho = cfg.get_num("train.rho");
  t.dual.eta_dual = cfg.get_num("train.dual_step");
  t.fixed_nu = cfg.get_num("train.fixed_nu");
  t.strict_dual_pass = cfg.get_flag("train.strict_dual");
  t.seed = seed;
  if (t.dual.rho < 0.0) config_error("train.rho must be >= 0");

  const double eval_eps_cfg = cfg.get_num("eval.epsilon");
  const double eval_eps = eval_eps_cfg < 0.0 ? t.pert.epsilon : eval_eps_cfg;
  const int eval_steps = cfg.get_int("eval.steps");
  const double eval_eta_cfg = cfg.get_num("eval.eta");
  const double eval_eta =
      eval_eta_cfg < 0.0 ? (eval_steps > 0 ? 2.5 * eval_eps / eval_steps : eval_eps)
                         : eval_eta_cfg;
  e.eval_pgd.method = SamplerMethod::pgd;
  e.eval_pgd.steps = eval_steps;
  e.eval_pgd.step_size = eval_eta;
  e.eval_pgd.seed = derive_key(seed, 0xE7A1);
  e.eval_fgsm.method = SamplerMethod::fgsm;
  e.eval_fgsm.steps = 1;
  e.eval_fgsm.step_size = eval_eps;  // classic single full-radius step
  e.eval_fgsm.seed = derive_key(seed, 0xE7A2);

  uint64_t h = fnv1a64("advdual", 7);
  h = hash_dataset(h, e.train);
  h = hash_dataset(h, e.test);
  e.input_hash = h;
  return e;
}

void save_model(const ModelParams& m, const std::string& path) {
  json j;
  j["arch"] = {{"input_dim", m.arch.input_dim},
               {"hidden", m.arch.hidden},
               {"num_classes", m.arch.num_classes},
               {"activation", m.arch.activation == Activation::tanh_fn ? "tanh" : "relu"}};
  j["theta"] = m.theta;
  std::ofstream f(path);
  f << j.dump(1) << "\n";
}

ModelParams load_model(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::invalid_argument("cannot open model file '" + path + "'");
  json j = json::parse(f);
  ModelParams m;
  m.arch.input_dim = j["arch"]["input_dim"].get<int>();
  m.arch.hidden = j["arch"]["hidden"].get<std::vector<int>>();
  m.arch.num_classes = j["arch"]["num_classes"].get<int>();
  m.arch.activation =
      j["arch"]["activation"].get<std::string>() == "relu" ? Activation::relu
                                                           : Activation::tanh_fn;
  m.theta = j["theta"].get<std::vector<double>>();
  if (static_cast<int>(m.theta.size()) != m.arch.param_count()) {
    throw std::invalid_argument("model file: theta length does not match architecture");
  }
  return m;
}

std::string history_csv(const RunHistory& h) {
  std::string out = "epoch,clean_loss,robust_loss,nu,slack,clean_acc,robust_acc\n";
  for (const auto& r : h.records) {
    out += std::to_string(r.epoch);
    for (double v : {r.clean_loss, r.robust_loss, r.nu, r.slack, r.clean_acc, r.robust_acc}) {
      out += ",";
      out += format_g17(v);
    }
    out += "\n";
  }
  return out;
}

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write '" + path + "'");
  f << text;
}

json config_json(const RunConfig& cfg) {
  json j;
  for (const auto& [k, v] : cfg.kv) j[k] = v;
  return j;
}

std::string hash_hex(uint64_t h) {
  char buf[24];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

struct FinalMetrics {
  double clean_acc = 0.0, fgsm_acc = 0.0, pgd_acc = 0.0;
};

FinalMetrics final_eval(const Experiment& e, const ModelParams& m) {
  FinalMetrics fm;
  fm.clean_acc = evaluate(m, e.test, nullptr, e.cfg.pert, e.cfg.losses);
  PerturbSet eset = e.cfg.pert;
  fm.fgsm_acc = evaluate(m, e.test, &e.eval_fgsm, eset, e.cfg.losses);
  fm.pgd_acc = evaluate(m, e.test, &e.eval_pgd, eset, e.cfg.losses);
  return fm;
}

TrainResult run_training(const Experiment& e, const RunConfig& cfg, bool per_epoch_attack) {
  ModelParams model = init_model(e.arch, e.cfg.seed);
  const SamplerCfg* attack = nullptr;
  SamplerCfg atk;
  const std::string kind = cfg.get("eval.attack");
  if (per_epoch_attack && kind != "none") {
    atk = kind == "fgsm" ? e.eval_fgsm : e.eval_pgd;
    attack = &atk;
  }
  if (e.cfg.method == TrainMethod::penalty) {
    return penalty_train(std::move(model), e.train, &e.test, attack, e.cfg, e.cfg.fixed_nu);
  }
  return train(std::move(model), e.train, &e.test, attack, e.cfg);
}

}  // namespace

int run_single(const RunConfig& cfg) {
  const Experiment e = build_experiment(cfg);
  const std::string out = cfg.get("out");
  fs::create_directories(out);
  const TrainResult res = run_training(e, cfg, cfg.get_flag("eval.per_epoch_attack"));
  write_text(out + "/history.csv", history_csv(res.history));

  const FinalMetrics fm = final_eval(e, res.model);
  json j;
  j["config"] = config_json(cfg);
  j["input_hash"] = hash_hex(e.input_hash);
  json fin;
  fin["aborted"] = res.history.aborted;
  if (res.history.aborted) fin["abort_reason"] = res.history.abort_reason;
  fin["epochs_run"] = res.history.records.size();
  fin["final_nu"] = res.history.final_nu;
  fin["clean_acc"] = fm.clean_acc;
  fin["fgsm_acc"] = fm.fgsm_acc;
  fin["pgd_acc"] = fm.pgd_acc;
  if (!res.history.records.empty()) {
    const auto& last = res.history.records.back();
    fin["clean_loss"] = last.clean_loss;
    fin["robust_loss"] = last.robust_loss;
    fin["slack"] = last.slack;
  }
  j["final"] = fin;
  write_text(out + "/summary.json", j.dump(1) + "\n");
  save_model(res.model, out + "/model.json");
  return res.history.aborted ? kExitDivergence : kExitOk;
}

int run_eval(const RunConfig& cfg, const std::string& model_path) {
  const Experiment e = build_experiment(cfg);
  const ModelParams m = load_model(model_path);
  const std::string out = cfg.get("out");
  fs::create_directories(out);
  const FinalMetrics fm = final_eval(e, m);
  json j;
  j["model"] = model_path;
  j["clean_acc"] = fm.clean_acc;
  j["fgsm_acc"] = fm.fgsm_acc;
  j["pgd_acc"] = fm.pgd_acc;
  const std::string text = j.dump(1) + "\n";
  write_text(out + "/eval.json", text);
  std::cout << text;
  return kExitOk;
}

namespace {

std::vector<uint64_t> sweep_seeds(const RunConfig& cfg) {
  std::vector<uint64_t> seeds;
  for (const auto& tok : split(cfg.get("sweep.seeds"), ',')) {
    if (!tok.empty()) seeds.push_back(std::stoull(tok));
  }
  if (seeds.empty()) seeds.push_back(cfg.get_u64("seed"));
  return seeds;
}

// one full training + final evaluation per (value, seed); rows are medians
std::string sweep_csv(const RunConfig& base, const std::string& key,
                      const std::vector<double>& values, const std::string& col0,
                      bool integer_values) {
  const auto seeds = sweep_seeds(base);
  std::string csv = col0 + ",clean_acc,fgsm_acc,pgd_acc\n";
  for (double v : values) {
    std::vector<double> clean, fgsm, pgd;
    for (uint64_t s : seeds) {
      RunConfig cfg = base;
      if (integer_values) {
        cfg.set(key, std::to_string(static_cast<long long>(std::llround(v))));
      } else {
        cfg.set_num(key, v);
      }
      cfg.set("seed", std::to_string(s));
      const Experiment e = build_experiment(cfg);
      const TrainResult res = run_training(e, cfg, false);
      if (res.history.aborted) {
        throw std::runtime_error("sweep run diverged: " + res.history.abort_reason);
      }
      const FinalMetrics fm = final_eval(e, res.model);
      clean.push_back(fm.clean_acc);
      fgsm.push_back(fm.fgsm_acc);
      pgd.push_back(fm.pgd_acc);
    }
    csv += integer_values ? std::to_string(static_cast<long long>(std::llround(v)))
                          : format_g17(v);
    csv += "," + format_g17(median(clean)) + "," + format_g17(median(fgsm)) + "," +
           format_g17(median(pgd)) + "\n";
  }
  return csv;
}

}  // namespace

int run_rho_sweep(const RunConfig& cfg) {
  RunConfig base = cfg;
  base.set("train.method", "dale");
  const std::string out = cfg.get("out");
  fs::create_directories(out);
  const std::string csv = sweep_csv(base, "train.rho", cfg.get_list("sweep.rhos"), "rho", false);
  write_text(out + "/sweep_rho.csv", csv);
  std::cout << csv;
  return kExitOk;
}

int run_nu_sweep(const RunConfig& cfg) {
  RunConfig base = cfg;
  base.set("train.method", "penalty");
  const std::string out = cfg.get("out");
  fs::create_directories(out);
  const std::string csv = sweep_csv(base, "train.fixed_nu", cfg.get_list("sweep.nus"), "nu", false);
  write_text(out + "/sweep_nu.csv", csv);
  std::cout << csv;
  return kExitOk;
}

int run_steps_sweep(const RunConfig& cfg) {
  RunConfig base = cfg;
  const std::string out = cfg.get("out");
  fs::create_directories(out);
  std::vector<double> ls;
  for (int v : cfg.get_int_list("sweep.steps_list")) ls.push_back(v);
  const std::string csv = sweep_csv(base, "sampler.steps", ls, "steps", true);
  write_text(out + "/sweep_steps.csv", csv);
  std::cout << csv;
  return kExitOk;
}

ModelParams make_bump_model_1d() {
  // 1 -> 2 -> 2 tanh network whose class-0 cross-entropy over [-1,1] is a
  // smooth positive bump peaked in the interior
  Arch arch;
  arch.input_dim = 1;
  arch.hidden = {2};
  arch.num_classes = 2;
  arch.activation = Activation::tanh_fn;
  ModelParams m = zero_model(arch);
  const double k = 3.0, c1 = -0.3, c2 = 0.3, a = 2.0;
  // layer 0: W (2x1), b (2)
  m.theta[0] = k;
  m.theta[1] = k;
  m.theta[2] = -k * c1;
  m.theta[3] = -k * c2;
  // layer 1: W (2x2) rows z0, z1; b (2)
  m.theta[4] = 0.0;
  m.theta[5] = a;
  m.theta[6] = a;
  m.theta[7] = 0.0;
  m.theta[8] = 0.0;
  m.theta[9] = 0.0;
  return m;
}

int run_oracle_report(const RunConfig& cfg) {
  const std::string out = cfg.get("out");
  fs::create_directories(out);
  const int dim = cfg.get_int("oracle.dim");
  const int nodes = cfg.get_int("oracle.nodes");
  PerturbSet set = parse_pert(cfg);
  const DeltaGrid grid = make_grid(set, dim, {nodes, nodes, nodes});

  ModelParams m;
  if (dim == 1) {
    m = make_bump_model_1d();
  } else {
    Arch arch;
    arch.input_dim = dim;
    arch.hidden = {8};
    arch.num_classes = 2;
    m = init_model(arch, cfg.get_u64("seed"));
  }
  const std::vector<double> x(dim, 0.0);
  const auto values = loss_landscape(m, x, 0, grid, LossKind::cross_entropy, {}, 50.0);

  const DiscreteDist over = oversmoothed_lambda(values, grid.cell_volume);
  {
    std::ofstream f(out + "/oracle_oversmoothed.csv");
    write_oracle_csv(f, grid, values, over);
  }
  json report;
  report["grid_cells"] = grid.active_cells();
  report["cell_volume"] = grid.cell_volume;
  report["oversmoothed_expected_loss"] = expected_loss(over, values);
  json per_gamma = json::array();
  for (double g : cfg.get_list("oracle.gammas")) {
    const double gamma = g * grid.total_volume();
    const DiscreteDist d = lambda_star(values, grid.cell_volume, gamma);
    double mass = 0.0;
    for (double v : d.density) mass += v;
    mass *= d.cell_volume;
    json jg;
    jg["gamma_rel"] = g;
    jg["gamma"] = gamma;
    jg["mu"] = d.mu;
    jg["normalization"] = mass;
    jg["expected_loss"] = expected_loss(d, values);
    per_gamma.push_back(jg);
    char name[64];
    std::snprintf(name, sizeof(name), "/oracle_gamma_%g.csv", g);
    std::ofstream f(out + name);
    write_oracle_csv(f, grid, values, d);
  }
  report["lambda_star"] = per_gamma;
  write_text(out + "/oracle.json", report.dump(1) + "\n");
  std::cout << report.dump(1) << "\n";
  return kExitOk;
}

int run_sampler_validation(const RunConfig& cfg) {
  const std::string out = cfg.get("out");
  fs::create_directories(out);
  const uint64_t seed = cfg.get_u64("seed");
  json report;

  // Laplace moment checks
  {
    RngStream rng(derive_key(seed, kStreamNoise));
    const int n = 1'000'000;
    double s = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
      const double x = rng.next_laplace();
      s += x;
      s2 += x * x;
    }
    const double mean_v = s / n;
    const double var_v = s2 / n - mean_v * mean_v;
    report["laplace_mean"] = mean_v;
    report["laplace_variance"] = var_v;
    report["laplace_moments_ok"] =
        (var_v >= 1.99 && var_v <= 2.01 && mean_v >= -0.005 && mean_v <= 0.005);
  }

  // PGD recovery at T = 0 (bit-exact over full chains)
  {
    bool all_equal = true;
    const PerturbSet set = PerturbSet::linf_ball(0.3);
    LossTriple losses;
    for (int rep = 0; rep < 5; ++rep) {
      Arch arch;
      arch.input_dim = 4;
      arch.hidden = {8};
      arch.num_classes = 3;
      const ModelParams m = init_model(arch, derive_key(seed, 0x90, rep));
      Matrix inputs(6, 4);
      std::vector<int> labels(6);
      RngStream rng(derive_key(seed, 0x91, rep));
      for (int i = 0; i < 6; ++i) {
        labels[i] = static_cast<int>(rng.next_below(3));
        for (int j = 0; j < 4; ++j) inputs.at(i, j) = rng.next_uniform(-1.0, 1.0);
      }
      SamplerCfg pgd;
      pgd.method = SamplerMethod::pgd;
      pgd.steps = 20;
      pgd.step_size = 0.05;
      pgd.seed = derive_key(seed, 0x92, rep);
      SamplerCfg lmc = pgd;
      lmc.method = SamplerMethod::lmc_laplace;
      lmc.temperature = 0.0;
      lmc.sign_variant = SignVariant::sign_outside;
      const Matrix a = run_sampler(m, set, inputs, labels, pgd, losses);
      const Matrix b = run_sampler(m, set, inputs, labels, lmc, losses);
      if (!(a == b)) all_equal = false;
    }
    report["pgd_recovery"] = all_equal;
  }

  // Gaussian LMC stationarity against the loss-proportional density
  {
    const ModelParams m = make_bump_model_1d();
    const PerturbSet set = PerturbSet::linf_ball(1.0);
    const DeltaGrid grid = make_grid(set, 1, {50, 1, 1});
    const std::vector<double> x0{0.0};
    const auto values = loss_landscape(m, x0, 0, grid, LossKind::cross_entropy, {}, 50.0);
    const DiscreteDist target = oversmoothed_lambda(values, grid.cell_volume);

    SamplerCfg lmc;
    lmc.method = SamplerMethod::lmc_gauss;
    lmc.sign_variant = SignVariant::no_sign;
    lmc.step_size = 1e-3;
    lmc.temperature = 1.0;
    lmc.seed = derive_key(seed, 0x93);
    const int burn = 1000, kept_per_chain = 1000, chains = 100;
    LossTriple losses;
    std::vector<double> samples;
    samples.reserve(static_cast<size_t>(kept_per_chain) * chains);
    for (int c = 0; c < chains; ++c) {
      std::vector<double> delta{0.0};
      for (int s = 0; s < burn + kept_per_chain; ++s) {
        delta = lmc_step(m, set, x0, 0, delta, lmc, losses.pert, {}, losses.clip_b,
                         losses.log_floor, c, s);
        if (s >= burn) samples.push_back(delta[0]);
      }
    }
    const DiscreteDist hist = histogram_of_samples(samples, grid);
    const double tv = tv_distance(hist, target);
    report["gauss_stationarity_tv"] = tv;
    report["gauss_stationarity_tv_ok"] = tv <= 0.1;
    report["gauss_samples"] = samples.size();
  }

  write_text(out + "/sampler_validation.json", report.dump(1) + "\n");
  std::cout << report.dump(1) << "\n";
  return kExitOk;
}

int run_pca(const RunConfig& cfg, const std::string& model_path) {
  const Experiment e = build_experiment(cfg);
  const ModelParams m = model_path.empty() ? init_model(e.arch, e.cfg.seed)
                                           : load_model(model_path);
  const std::string out = cfg.get("out");
  fs::create_directories(out);
  const int k = cfg.get_int("pca.k");
  PcaResult axes = pca_fit(e.train.inputs, k);
  if (axes.reduced) {
    std::cerr << "warning: degenerate covariance, reduced k to " << axes.k << "\n";
  }
  const int want = std::min(cfg.get_int("pca.samples"), e.train.size());
  Dataset sub = subset(e.train, want, derive_key(e.cfg.seed, 0xCA));
  const Matrix deltas =
      run_sampler(m, e.cfg.pert, sub.inputs, sub.labels, e.cfg.sampler, e.cfg.losses);
  const Matrix proj = pca_transform(axes, deltas);
  std::string csv;
  for (int c = 0; c < axes.k; ++c) csv += "pc" + std::to_string(c + 1) + ",";
  csv += "method\n";
  const std::string method = sampler_method_name(e.cfg.sampler.method);
  for (int i = 0; i < proj.rows; ++i) {
    for (int c = 0; c < axes.k; ++c) csv += format_g17(proj.at(i, c)) + ",";
    csv += method + "\n";
  }
  write_text(out + "/pca.csv", csv);
  return kExitOk;
}

int run_gen_data(const RunConfig& cfg) {
  const std::string dir = cfg.get("data.dir").empty() ? cfg.get("out") : cfg.get("data.dir");
  fs::create_directories(dir);
  const uint64_t seed = cfg.get_u64("seed");
  Dataset train = make_digits(cfg.get_int("dataset.n"), derive_key(seed, 0xA));
  Dataset test = make_digits(cfg.get_int("dataset.test_n"), derive_key(seed, 0xB));
  save_idx(train, dir + "/train-images-idx3-ubyte", dir + "/train-labels-idx1-ubyte");
  save_idx(test, dir + "/t10k-images-idx3-ubyte", dir + "/t10k-labels-idx1-ubyte");
  std::cout << "wrote " << train.size() << " train and " << test.size() << " test examples to "
            << dir << "\n";
  return kExitOk;
}

}  // namespace advdual
