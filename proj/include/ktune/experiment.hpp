#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "ktune/baselines.hpp"
#include "ktune/config.hpp"
#include "ktune/ensemble.hpp"
#include "ktune/tuner.hpp"

namespace ktune {

enum class TrainMethod { QFolded, ScratchPhase1 };

std::string_view to_string(TrainMethod method);
TrainMethod parse_train_method(std::string_view name);

struct ExperimentConfig {
  // data.q, data.seed, data.margin, data.box_halfwidth; desk-scale q by default
  BallDatasetOptions data{16, 1, 0.1, 2.0};

  ModelKind model = ModelKind::TwoLayerTanh;
  Index n = 2;  // input dimension of the ball dataset
  Index nbar = 8;
  Index n_out = 1;
  Index steps = 10;  // N
  double horizon = 1.0;  // T

  Index j = 8;  // expansion cutoff

  TrainMethod train_method = TrainMethod::QFolded;
  std::uint64_t init_seed = 3;
  QFoldedConfig qfolded;  // steps/horizon mirror the model section
  // Phase I settings of the from-scratch mode. Later samples perturb the
  // earlier ones, so the per-sample target is well below 0.5 * 0.01^2.
  // Some samples need far more than the tuning budget of inner iterations.
  TunerConfig scratch{.convergence_cost_threshold = 1e-6,
                      .max_inner_iterations = 20000,
                      .rounds = 0};

  TunerConfig tuner;

  std::vector<double> penalty_lambdas{0.1};
  PenaltyConfig penalty;  // lambda is taken from penalty_lambdas

  std::vector<Index> scaling_n{8};
  std::vector<Index> scaling_q{1, 4, 8, 16, 32};
  Index scaling_steps = 10;
  ScalingOptions scaling;

  std::filesystem::path out_dir = "out";
  Config source;  // raw keys, echoed into manifests

  // Reads every known key, applies defaults and checks consistency. Unknown
  // keys are rejected so typos do not silently fall back to defaults.
  static ExperimentConfig from_config(const Config& config);
  void validate() const;

  Model make_model() const;
  Readout make_readout() const;
};

// Artifact locations under the output directory.
struct RunPaths {
  std::filesystem::path dir;
  std::filesystem::path dataset() const { return dir / "dataset.csv"; }
  std::filesystem::path u0() const { return dir / "u0.ctl"; }
  std::filesystem::path train_curve() const { return dir / "train_curve.csv"; }
  std::filesystem::path u_star() const { return dir / "u_star.ctl"; }
  std::filesystem::path tune_report() const { return dir / "tune_report.csv"; }
  std::filesystem::path u_penalty(std::size_t k) const;
  std::filesystem::path penalty_report(std::size_t k) const;
  std::filesystem::path eval() const { return dir / "eval.csv"; }
  std::filesystem::path scaling() const { return dir / "scaling.csv"; }
  std::filesystem::path manifest(const std::string& command) const;
};

// SHA-1 of "blob <size>\0" + content, as printed by `git hash-object`.
std::string git_blob_hash(const std::string& content);

struct RunManifest {
  std::string command;
  Config config;
  std::vector<std::pair<std::string, std::filesystem::path>> inputs;
  std::vector<std::pair<std::string, std::filesystem::path>> artifacts;
  std::vector<std::pair<std::string, double>> timings;  // seconds

  // Hash over the config echo and the blob hashes of every input file.
  std::string input_hash() const;
  void write(std::ostream& os) const;
};

struct EvalRow {
  std::string set;
  std::string metric;
  double value = 0.0;
};

// Each command writes its artifacts plus manifest_<command>.json under
// config.out_dir and returns the manifest. `log` receives a short summary.
RunManifest cmd_gen_data(const ExperimentConfig& config, std::ostream& log);
// Non-convergence still writes the checkpoint and curve, then throws
// ConvergenceError.
RunManifest cmd_train(const ExperimentConfig& config, std::ostream& log);
RunManifest cmd_tune(const ExperimentConfig& config, std::ostream& log);
RunManifest cmd_penalty(const ExperimentConfig& config, std::ostream& log);
RunManifest cmd_scaling(const ExperimentConfig& config, std::ostream& log);

// E on X^j, X^q_j, X^q for a checkpoint and dataset; empty sets are skipped.
std::vector<EvalRow> evaluate_checkpoint(const ControlCheckpoint& checkpoint,
                                         const Ensemble& ensemble, Index j, Index n_out);
RunManifest cmd_eval(const std::filesystem::path& control, const std::filesystem::path& dataset,
                     Index j, const ExperimentConfig& config, std::ostream& log);

void write_eval_csv(std::ostream& os, const std::vector<EvalRow>& rows);

}  // namespace ktune
