#include <CLI11.hpp>

#include <exception>
#include <iostream>
#include <string>
#include <vector>

#include "ktune/error.hpp"
#include "ktune/experiment.hpp"

namespace {

// Exit statuses.
constexpr int kOk = 0;
constexpr int kOther = 1;
constexpr int kUsage = 2;
constexpr int kIo = 3;
constexpr int kNotConverged = 4;
constexpr int kNumerical = 5;

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
};

void add_common(CLI::App* cmd, CommonOptions& opts) {
  cmd->add_option("--config", opts.config_path, "key = value configuration file");
  cmd->add_option("--set", opts.overrides, "override a configuration key (key=value)")
      ->take_all();
  cmd->add_option("--out", opts.out_dir, "output directory (overrides output.dir)");
}

ktune::ExperimentConfig load_config(const CommonOptions& opts) {
  ktune::Config raw;
  if (!opts.config_path.empty()) raw = ktune::Config::load(opts.config_path);
  for (const auto& o : opts.overrides) raw.apply_override(o);
  if (!opts.out_dir.empty()) raw.set("output.dir", opts.out_dir);
  return ktune::ExperimentConfig::from_config(raw);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Fine-tune controlled ODE models on new samples without forgetting old ones"};
  app.require_subcommand(1);

  CommonOptions opts;
  std::string control_path;
  std::string dataset_path;
  long long eval_j = -1;

  auto* gen = app.add_subcommand("gen-data", "generate the unit-ball classification dataset");
  auto* train = app.add_subcommand("train", "train u0 on X^j (q-folded or from-scratch Phase I)");
  auto* tune = app.add_subcommand("tune", "tune u0 on the new samples without forgetting X^j");
  auto* penalty = app.add_subcommand("penalty", "penalty-method fine-tuning baseline");
  auto* eval = app.add_subcommand("eval", "average error of a checkpoint on X^j, X^q_j, X^q");
  auto* scaling = app.add_subcommand("scaling", "time q-folded iterations across q");
  for (auto* cmd : {gen, train, tune, penalty, eval, scaling}) add_common(cmd, opts);
  eval->add_option("--control", control_path, "control checkpoint")->required();
  eval->add_option("--data", dataset_path, "dataset file")->required();
  eval->add_option("--j", eval_j, "cutoff j (defaults to split.j)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    const auto config = load_config(opts);
    if (gen->parsed()) {
      ktune::cmd_gen_data(config, std::cout);
    } else if (train->parsed()) {
      ktune::cmd_train(config, std::cout);
    } else if (tune->parsed()) {
      ktune::cmd_tune(config, std::cout);
    } else if (penalty->parsed()) {
      ktune::cmd_penalty(config, std::cout);
    } else if (eval->parsed()) {
      const auto j = eval_j >= 0 ? static_cast<ktune::Index>(eval_j) : config.j;
      ktune::cmd_eval(control_path, dataset_path, j, config, std::cout);
    } else if (scaling->parsed()) {
      ktune::cmd_scaling(config, std::cout);
    }
  } catch (const ktune::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kUsage;
  } catch (const ktune::InvalidArgument& e) {
    std::cerr << "invalid argument: " << e.what() << '\n';
    return kUsage;
  } catch (const ktune::IoError& e) {
    std::cerr << "I/O error: " << e.what() << '\n';
    return kIo;
  } catch (const ktune::ConvergenceError& e) {
    std::cerr << "not converged: " << e.what() << " (final value " << e.final_value() << ")\n";
    return kNotConverged;
  } catch (const ktune::NumericalError& e) {
    std::cerr << "numerical error: " << e.what() << '\n';
    return kNumerical;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kOther;
  }
  return kOk;
}
