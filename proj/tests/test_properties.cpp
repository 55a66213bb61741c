#include <doctest.h>

#include <unistd.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <cstring>
#include <sstream>

#include "advdual/dataio.hpp"
#include "advdual/expcli.hpp"
#include "advdual/pca.hpp"
#include "advdual/rng.hpp"
#include "advdual/stats.hpp"
#include "advdual/trainer.hpp"
#include "test_util.hpp"

using namespace advdual;
using namespace advdual::test;
namespace fs = std::filesystem;

namespace {

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("advdual_prop_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("attack dominance: multi-step PGD is at least as strong as FGSM") {
  // adversarially trained models over 5 seeds; the L-step attack may beat the
  // single-step one by at most the stated 2-point slack the other way
  for (uint64_t seed : {1, 2, 3, 4, 5}) {
    const Dataset train = make_moons(300, 0.15, derive_key(seed, 0xA));
    const Dataset test = make_moons(600, 0.15, derive_key(seed, 0xB));
    Arch arch;
    arch.input_dim = 2;
    arch.hidden = {16, 16};
    arch.num_classes = 2;
    TrainCfg cfg;
    cfg.epochs = 25;
    cfg.batch_size = 16;
    cfg.eta_primal = 0.25;
    cfg.pert = PerturbSet::linf_ball(0.25);
    cfg.sampler.method = SamplerMethod::pgd;
    cfg.sampler.steps = 5;
    cfg.sampler.step_size = 0.08;
    cfg.seed = seed;
    const auto res =
        adv_train(init_model(arch, derive_key(seed, 1)), train, nullptr, nullptr, cfg);
    SamplerCfg fgsm;
    fgsm.method = SamplerMethod::fgsm;
    fgsm.step_size = 0.25;
    fgsm.seed = derive_key(seed, 0xF);
    SamplerCfg pgd;
    pgd.method = SamplerMethod::pgd;
    pgd.steps = 10;
    pgd.step_size = 0.0625;
    pgd.seed = derive_key(seed, 0xE);
    const double acc_fgsm = evaluate(res.model, test, &fgsm, cfg.pert, cfg.losses);
    const double acc_pgd = evaluate(res.model, test, &pgd, cfg.pert, cfg.losses);
    CHECK(acc_pgd <= acc_fgsm + 0.02);
  }
}

TEST_CASE("interpolation diagnostic: nu stays near the robust-risk / rho scale") {
  // interpolating MLP on tiny blobs; the recorded dual variable is compared
  // against (robust empirical risk of the interpolating model) / rho. The
  // factor-2 band is a diagnostic, so violations warn instead of failing.
  const uint64_t seed = 5;
  const Dataset train = make_blobs(60, {{-2.0, 0.0}, {2.0, 0.0}}, 0.25, derive_key(seed, 0xA));
  Arch arch;
  arch.input_dim = 2;
  arch.hidden = {16};
  arch.num_classes = 2;
  TrainCfg cfg;
  cfg.epochs = 120;
  cfg.batch_size = 8;
  cfg.eta_primal = 0.4;
  cfg.pert = PerturbSet::linf_ball(0.05);
  cfg.sampler.method = SamplerMethod::lmc_laplace;
  cfg.sampler.steps = 5;
  cfg.sampler.step_size = 0.02;
  cfg.dual.rho = 0.1;
  cfg.dual.eta_dual = 0.05;
  cfg.seed = seed;
  const auto res =
      dale_train(init_model(arch, derive_key(seed, 1)), train, nullptr, nullptr, cfg);
  const double clean_loss = batch_mean_loss(res.model, train.inputs, train.labels,
                                            LossKind::cross_entropy, nullptr, 50.0);
  REQUIRE_MESSAGE(clean_loss < 1e-3, "model must interpolate for the diagnostic to apply");
  SamplerCfg atk;
  atk.method = SamplerMethod::pgd;
  atk.steps = 10;
  atk.step_size = 0.0125;
  atk.seed = derive_key(seed, 0xE);
  const double robust_risk =
      empirical_lagrangian(res.model, train, 0.0, cfg.dual.rho, atk, cfg.pert, cfg.losses);
  const double bound = robust_risk / cfg.dual.rho;
  const auto& rec = res.history.records;
  for (size_t t = rec.size() - 10; t < rec.size(); ++t) {
    WARN_MESSAGE(rec[t].nu <= 2.0 * bound, "tail nu ", rec[t].nu,
                 " exceeds twice the interpolation bound ", bound);
  }
  CHECK(rec.back().nu >= 0.0);
}

TEST_CASE("steps sweep: the L = 1 row equals DALE run with an FGSM sampler at T = 0") {
  TempDir tmp("steps");
  RunConfig cfg = RunConfig::defaults();
  cfg.set("dataset", "moons");
  cfg.set("dataset.n", "96");
  cfg.set("dataset.test_n", "48");
  cfg.set("train.epochs", "4");
  cfg.set("train.method", "dale");
  cfg.set("pert.epsilon", "0.15");
  cfg.set("sampler.noise_coef", "0");  // T = 0: a single LMC step is a PGD step
  cfg.set("sweep.steps_list", "1");
  cfg.set("model.hidden", "8");
  cfg.set("out", (tmp.path / "sweep").string());
  CHECK(run_steps_sweep(cfg) == kExitOk);
  const std::string sweep = slurp(tmp.path / "sweep" / "sweep_steps.csv");

  RunConfig f = cfg;
  f.set("sampler.method", "fgsm");
  f.set("out", (tmp.path / "fgsm").string());
  CHECK(run_single(f) == kExitOk);
  const std::string summary = slurp(tmp.path / "fgsm" / "summary.json");

  // compare the sweep row's accuracies against the fgsm summary
  std::istringstream lines(sweep);
  std::string header, row;
  std::getline(lines, header);
  std::getline(lines, row);
  CHECK(header == "steps,clean_acc,fgsm_acc,pgd_acc");
  std::stringstream ss(row);
  std::string l_s, clean_s, fgsm_s, pgd_s;
  std::getline(ss, l_s, ',');
  std::getline(ss, clean_s, ',');
  std::getline(ss, fgsm_s, ',');
  std::getline(ss, pgd_s, ',');
  CHECK(l_s == "1");
  const auto grab = [&](const char* key) {
    const auto pos = summary.find(key);
    REQUIRE(pos != std::string::npos);
    return std::stod(summary.substr(pos + std::strlen(key)));
  };
  CHECK(std::stod(clean_s) == grab("\"clean_acc\": "));
  CHECK(std::stod(fgsm_s) == grab("\"fgsm_acc\": "));
  CHECK(std::stod(pgd_s) == grab("\"pgd_acc\": "));
}

TEST_CASE("steps trend: robust accuracy nondecreasing in L up to 2-point noise") {
  std::vector<double> med;
  for (int L : {1, 3, 7}) {
    std::vector<double> ro;
    for (uint64_t seed : {1, 2, 3}) {
      const Dataset train = make_moons(400, 0.15, derive_key(seed, 0xA));
      const Dataset test = make_moons(1000, 0.15, derive_key(seed, 0xB));
      Arch arch;
      arch.input_dim = 2;
      arch.hidden = {16, 16};
      arch.num_classes = 2;
      TrainCfg cfg;
      cfg.epochs = 40;
      cfg.batch_size = 16;
      cfg.eta_primal = 0.25;
      cfg.pert = PerturbSet::linf_ball(0.3);
      cfg.sampler.method = SamplerMethod::lmc_laplace;
      cfg.sampler.steps = L;
      cfg.sampler.step_size = 0.1;
      cfg.sampler.temperature = SamplerCfg::temperature_for_noise_coef(1e-3, 0.1);
      cfg.dual.rho = 0.5;
      cfg.dual.eta_dual = 0.2;
      cfg.seed = seed;
      const auto res =
          dale_train(init_model(arch, derive_key(seed, 1)), train, nullptr, nullptr, cfg);
      SamplerCfg atk;
      atk.method = SamplerMethod::pgd;
      atk.steps = 10;
      atk.step_size = 0.075;
      atk.seed = derive_key(seed, 0xE);
      ro.push_back(evaluate(res.model, test, &atk, cfg.pert, cfg.losses));
    }
    med.push_back(median(ro));
  }
  CHECK(med[1] >= med[0] - 0.02);
  CHECK(med[2] >= med[1] - 0.02);
}

TEST_CASE("nu sweep: one row per weight, artifact written") {
  TempDir tmp("nus");
  RunConfig cfg = RunConfig::defaults();
  cfg.set("dataset", "moons");
  cfg.set("dataset.n", "64");
  cfg.set("dataset.test_n", "32");
  cfg.set("train.epochs", "2");
  cfg.set("pert.epsilon", "0.15");
  cfg.set("sampler.steps", "2");
  cfg.set("eval.steps", "2");
  cfg.set("model.hidden", "6");
  cfg.set("sweep.nus", "0.1,0.5,1.0");
  cfg.set("out", (tmp.path / "out").string());
  CHECK(run_nu_sweep(cfg) == kExitOk);
  const std::string csv = slurp(tmp.path / "out" / "sweep_nu.csv");
  CHECK(csv.rfind("nu,clean_acc,fgsm_acc,pgd_acc\n", 0) == 0);
  int rows = 0;
  for (char c : csv) rows += (c == '\n');
  CHECK(rows == 4);  // header + 3 values
}

TEST_CASE("pca: degenerate covariance reduces k with a warning flag") {
  // rank-1 data: all rows are multiples of one direction
  Matrix data(50, 3);
  RngStream rng(9);
  for (int i = 0; i < data.rows; ++i) {
    const double t = rng.next_uniform(-1.0, 1.0);
    data.at(i, 0) = 2.0 * t;
    data.at(i, 1) = -t;
    data.at(i, 2) = 0.5 * t;
  }
  const PcaResult p = pca_fit(data, 3);
  CHECK(p.k == 1);
  CHECK(p.reduced);
}

TEST_CASE("run_pca writes projected coordinates with a method tag") {
  TempDir tmp("pca");
  RunConfig cfg = RunConfig::defaults();
  cfg.set("dataset", "moons");
  cfg.set("dataset.n", "128");
  cfg.set("dataset.test_n", "32");
  cfg.set("pert.epsilon", "0.15");
  cfg.set("sampler.steps", "3");
  cfg.set("pca.samples", "40");
  cfg.set("out", (tmp.path / "out").string());
  CHECK(run_pca(cfg, "") == kExitOk);
  const std::string csv = slurp(tmp.path / "out" / "pca.csv");
  CHECK(csv.rfind("pc1,pc2,method\n", 0) == 0);
  CHECK(csv.find("lmc_laplace") != std::string::npos);
  int rows = 0;
  for (char c : csv) rows += (c == '\n');
  CHECK(rows == 41);
}

TEST_CASE("run_sampler_validation reports recovery, moments, and TV") {
  TempDir tmp("val");
  RunConfig cfg = RunConfig::defaults();
  cfg.set("out", (tmp.path / "out").string());
  CHECK(run_sampler_validation(cfg) == kExitOk);
  const std::string j = slurp(tmp.path / "out" / "sampler_validation.json");
  CHECK(j.find("\"pgd_recovery\": true") != std::string::npos);
  CHECK(j.find("\"laplace_moments_ok\": true") != std::string::npos);
  CHECK(j.find("\"gauss_stationarity_tv_ok\": true") != std::string::npos);
}

TEST_CASE("gen-data writes loadable IDX files") {
  TempDir tmp("gen");
  RunConfig cfg = RunConfig::defaults();
  cfg.set("dataset.n", "50");
  cfg.set("dataset.test_n", "20");
  cfg.set("data.dir", (tmp.path / "data").string());
  CHECK(run_gen_data(cfg) == kExitOk);
  const Dataset tr = load_idx((tmp.path / "data" / "train-images-idx3-ubyte").string(),
                              (tmp.path / "data" / "train-labels-idx1-ubyte").string());
  CHECK(tr.size() == 50);
  CHECK(tr.dim() == 784);
}
