#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "advdual/dataio.hpp"
#include "advdual/expcli.hpp"

using advdual::RunConfig;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string model_path;
  RunConfig overrides;  // only keys given on the command line
};

void add_common(CLI::App* cmd, CommonOpts& o) {
  cmd->add_option("--config", o.config_path, "config file (flat key=value or summary.json)");
  auto key = [&o](const std::string& k) {
    return [&o, k](const std::string& v) { o.overrides.set(k, v); };
  };
  cmd->add_option_function<std::string>("--seed", key("seed"), "top-level RNG seed");
  cmd->add_option_function<std::string>("--out", key("out"), "output directory");
  cmd->add_option_function<std::string>("--dataset", key("dataset"),
                                        "dataset: mnist|blobs|moons");
  cmd->add_option_function<std::string>("--data-dir", key("data.dir"),
                                        "directory holding the IDX files");
  cmd->add_option_function<std::string>("--method", key("train.method"),
                                        "erm|fgsm|pgd|dale|penalty");
  cmd->add_option_function<std::string>("--rho", key("train.rho"), "nominal-loss margin");
  cmd->add_option_function<std::string>("--epsilon", key("pert.epsilon"),
                                        "perturbation radius");
  cmd->add_option_function<std::string>("--steps", key("sampler.steps"), "sampler steps L");
  cmd->add_option_function<std::string>("--eta", key("sampler.eta"), "sampler step size");
  cmd->add_option_function<std::string>("--noise-coef", key("sampler.noise_coef"),
                                        "Langevin noise coefficient sqrt(2*eta*T)");
  cmd->add_option_function<std::string>("--sign-variant", key("sampler.sign_variant"),
                                        "outside|none");
  cmd->add_option_function<std::string>("--dual-step", key("train.dual_step"),
                                        "dual ascent step");
  cmd->add_option_function<std::string>("--fixed-nu", key("train.fixed_nu"),
                                        "penalty weight for method=penalty");
  cmd->add_option_function<std::string>("--epochs", key("train.epochs"), "training epochs");
  cmd->add_option_function<std::string>("--n", key("dataset.n"), "training set size");
  cmd->add_option_function<std::vector<std::string>>(
      "--set", [&o](const std::vector<std::string>& pairs) {
        for (const auto& p : pairs) {
          const auto eq = p.find('=');
          if (eq == std::string::npos) throw CLI::ValidationError("--set expects KEY=VALUE");
          o.overrides.set(p.substr(0, eq), p.substr(eq + 1));
        }
      },
      "extra KEY=VALUE config overrides");
}

RunConfig resolve(const CommonOpts& o) {
  RunConfig cfg = RunConfig::defaults();
  if (!o.config_path.empty()) cfg.merge_from(RunConfig::load_file(o.config_path));
  cfg.merge_from(o.overrides);
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"constrained adversarial training toolkit"};
  app.require_subcommand(1);

  CommonOpts train_o, rho_o, nu_o, steps_o, eval_o, oracle_o, val_o, pca_o, gen_o;

  auto* cmd_train = app.add_subcommand("train", "train one model and emit history/summary");
  add_common(cmd_train, train_o);
  auto* cmd_rho = app.add_subcommand("sweep-rho", "train DALE across a rho list");
  add_common(cmd_rho, rho_o);
  auto* cmd_nu = app.add_subcommand("sweep-nu", "fixed-nu penalty sweep");
  add_common(cmd_nu, nu_o);
  auto* cmd_steps = app.add_subcommand("sweep-steps", "sweep the sampler step count L");
  add_common(cmd_steps, steps_o);
  auto* cmd_eval = app.add_subcommand("eval", "evaluate a saved model under attack");
  add_common(cmd_eval, eval_o);
  cmd_eval->add_option("--model", eval_o.model_path, "model.json path")->required();
  auto* cmd_oracle = app.add_subcommand("oracle", "lambda* oracle report on a toy landscape");
  add_common(cmd_oracle, oracle_o);
  auto* cmd_val = app.add_subcommand("validate-sampler",
                                     "sampler-vs-oracle checks: TV, PGD recovery, moments");
  add_common(cmd_val, val_o);
  auto* cmd_pca = app.add_subcommand("pca", "project perturbations onto data principal axes");
  add_common(cmd_pca, pca_o);
  cmd_pca->add_option("--model", pca_o.model_path, "model.json path (default: fresh init)");
  auto* cmd_gen = app.add_subcommand("gen-data", "write synthetic digit IDX files");
  add_common(cmd_gen, gen_o);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help
    app.exit(e);
    return advdual::kExitConfigError;
  }

  try {
    if (cmd_train->parsed()) return advdual::run_single(resolve(train_o));
    if (cmd_rho->parsed()) return advdual::run_rho_sweep(resolve(rho_o));
    if (cmd_nu->parsed()) return advdual::run_nu_sweep(resolve(nu_o));
    if (cmd_steps->parsed()) return advdual::run_steps_sweep(resolve(steps_o));
    if (cmd_eval->parsed()) return advdual::run_eval(resolve(eval_o), eval_o.model_path);
    if (cmd_oracle->parsed()) return advdual::run_oracle_report(resolve(oracle_o));
    if (cmd_val->parsed()) return advdual::run_sampler_validation(resolve(val_o));
    if (cmd_pca->parsed()) return advdual::run_pca(resolve(pca_o), pca_o.model_path);
    if (cmd_gen->parsed()) return advdual::run_gen_data(resolve(gen_o));
  } catch (const advdual::IdxError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return advdual::kExitDataError;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return advdual::kExitConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return advdual::kExitDivergence;
  }
  return advdual::kExitConfigError;
}
