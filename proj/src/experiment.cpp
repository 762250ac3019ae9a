#include "ktune/experiment.hpp"

#include <openssl/evp.h>

#include <nlohmann/json.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <functional>
#include <iomanip>
#include <ostream>
#include <set>
#include <sstream>

#include "ktune/error.hpp"
#include "ktune/text_format.hpp"

namespace ktune {

namespace fs = std::filesystem;

std::string_view to_string(TrainMethod method) {
  return method == TrainMethod::QFolded ? "qfolded" : "scratch-phase1";
}

TrainMethod parse_train_method(std::string_view name) {
  if (name == "qfolded") return TrainMethod::QFolded;
  if (name == "scratch-phase1") return TrainMethod::ScratchPhase1;
  throw ConfigError("unknown training method '" + std::string(name) + "'");
}

namespace {

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys{
      "data.q",
      "data.seed",
      "data.margin",
      "data.box_halfwidth",
      "model.kind",
      "model.n",
      "model.nbar",
      "model.n_out",
      "model.N",
      "model.T",
      "split.j",
      "armijo.contraction",
      "armijo.slope",
      "armijo.max_backtracks",
      "train.method",
      "train.seed",
      "train.step_size",
      "train.armijo",
      "train.regularization",
      "train.residual_tolerance",
      "train.max_iterations",
      "train.init_scale",
      "train.cost_threshold",
      "tune.step_size",
      "tune.armijo",
      "tune.cost_threshold",
      "tune.max_inner_iterations",
      "tune.recompute_every",
      "tune.regularization_step",
      "tune.regularization_tolerance",
      "tune.max_regularization_iterations",
      "tune.drift_budget_factor",
      "tune.passes",
      "tune.rounds",
      "tune.rank_tolerance",
      "penalty.lambdas",
      "penalty.step_size",
      "penalty.armijo",
      "penalty.iterations_per_round",
      "penalty.rounds",
      "scaling.n",
      "scaling.q",
      "scaling.N",
      "scaling.repeats",
      "scaling.min_iterations",
      "scaling.min_seconds",
      "scaling.seed",
      "output.dir",
  };
  return keys;
}

Index get_index(const Config& c, const std::string& key, Index fallback) {
  return static_cast<Index>(c.get_int(key, fallback));
}

std::uint64_t get_seed(const Config& c, const std::string& key, std::uint64_t fallback) {
  const long long v = c.get_int(key, static_cast<long long>(fallback));
  if (v < 0) throw ConfigError(key + ": seeds must be non-negative");
  return static_cast<std::uint64_t>(v);
}

std::vector<Index> get_indices(const Config& c, const std::string& key,
                               const std::vector<Index>& fallback) {
  std::vector<long long> def(fallback.begin(), fallback.end());
  const auto v = c.get_ints(key, def);
  return {v.begin(), v.end()};
}

void check(bool ok, const std::string& message) {
  if (!ok) throw ConfigError(message);
}

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

std::string read_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

// Writes through a temporary file and renames, so a failed run never leaves a
// truncated artifact behind.
void write_file(const fs::path& path, const std::function<void(std::ostream&)>& body) {
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  if (ec) throw IoError("cannot create directory '" + path.parent_path().string() + "'");
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write '" + tmp.string() + "'");
    body(os);
    os.flush();
    if (!os) throw IoError("write to '" + tmp.string() + "' failed");
  }
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move '" + tmp.string() + "' to '" + path.string() + "'");
}

void write_training_curve(std::ostream& os, const std::vector<TrainingCurvePoint>& curve) {
  os << "iteration,cost,residual_norm,step\n";
  for (const auto& p : curve)
    os << p.iteration << ',' << text::format_double(p.cost) << ','
       << text::format_double(p.residual_norm) << ',' << text::format_double(p.step) << '\n';
}

DatasetFile load_inputs_dataset(const RunPaths& paths) {
  if (!fs::exists(paths.dataset()))
    throw IoError("dataset '" + paths.dataset().string() + "' not found; run gen-data first");
  return load_dataset(paths.dataset().string());
}

ControlSignal load_u0(const ExperimentConfig& config, const RunPaths& paths) {
  if (!fs::exists(paths.u0()))
    throw IoError("control '" + paths.u0().string() + "' not found; run train first");
  auto ck = load_control(paths.u0().string());
  if (ck.kind != config.model || ck.nbar != config.nbar)
    throw InvalidArgument("checkpoint model (" + std::string(to_string(ck.kind)) +
                          ", nbar=" + std::to_string(ck.nbar) +
                          ") does not match the configured model");
  return std::move(ck.control);
}

void check_dataset(const ExperimentConfig& config, const Ensemble& ensemble) {
  if (ensemble.n() > config.nbar || ensemble.n_out() != config.n_out)
    throw InvalidArgument("dataset dimensions do not match the configured model");
  if (config.j > ensemble.size())
    throw InvalidArgument("split.j exceeds the dataset size");
}

void finish(RunManifest& manifest, const RunPaths& paths) {
  write_file(paths.manifest(manifest.command), [&](std::ostream& os) { manifest.write(os); });
}

}  // namespace

ExperimentConfig ExperimentConfig::from_config(const Config& c) {
  for (const auto& [key, value] : c.values())
    if (!known_keys().count(key)) throw ConfigError("unknown configuration key '" + key + "'");

  ExperimentConfig e;
  e.source = c;
  e.data.q = get_index(c, "data.q", e.data.q);
  e.data.seed = get_seed(c, "data.seed", e.data.seed);
  e.data.margin = c.get_double("data.margin", e.data.margin);
  e.data.box_halfwidth = c.get_double("data.box_halfwidth", e.data.box_halfwidth);

  try {
    e.model = parse_model_kind(c.get_string("model.kind", "two_layer_tanh"));
  } catch (const InvalidArgument& err) {
    throw ConfigError(std::string("model.kind: ") + err.what());
  }
  e.n = get_index(c, "model.n", e.n);
  e.nbar = get_index(c, "model.nbar", e.nbar);
  e.n_out = get_index(c, "model.n_out", e.n_out);
  e.steps = get_index(c, "model.N", e.steps);
  e.horizon = c.get_double("model.T", e.horizon);
  e.j = get_index(c, "split.j", e.j);

  ArmijoConfig armijo;
  armijo.contraction = c.get_double("armijo.contraction", armijo.contraction);
  armijo.slope = c.get_double("armijo.slope", armijo.slope);
  armijo.max_backtracks = static_cast<int>(c.get_int("armijo.max_backtracks", armijo.max_backtracks));

  e.train_method = parse_train_method(c.get_string("train.method", "qfolded"));
  e.init_seed = get_seed(c, "train.seed", e.init_seed);
  auto& qf = e.qfolded;
  qf.step_size = c.get_double("train.step_size", qf.step_size);
  qf.armijo = armijo;
  qf.armijo.enabled = c.get_bool("train.armijo", true);
  qf.regularization = c.get_double("train.regularization", qf.regularization);
  qf.residual_tolerance = c.get_double("train.residual_tolerance", qf.residual_tolerance);
  qf.max_iterations = static_cast<int>(c.get_int("train.max_iterations", qf.max_iterations));
  qf.init_scale = c.get_double("train.init_scale", qf.init_scale);
  qf.steps = e.steps;
  qf.horizon = e.horizon;

  // From-scratch training reuses the Phase I settings with its own step and
  // threshold, and no refinement.
  auto& sc = e.scratch;
  sc.step_size = c.get_double("train.step_size", sc.step_size);
  sc.armijo = qf.armijo;
  sc.convergence_cost_threshold = c.get_double("train.cost_threshold", sc.convergence_cost_threshold);
  sc.max_inner_iterations =
      static_cast<int>(c.get_int("train.max_iterations", sc.max_inner_iterations));
  sc.rounds = 0;

  auto& t = e.tuner;
  t.step_size = c.get_double("tune.step_size", t.step_size);
  t.armijo = armijo;
  t.armijo.enabled = c.get_bool("tune.armijo", true);
  t.convergence_cost_threshold = c.get_double("tune.cost_threshold", t.convergence_cost_threshold);
  t.max_inner_iterations =
      static_cast<int>(c.get_int("tune.max_inner_iterations", t.max_inner_iterations));
  t.recompute_every = static_cast<int>(c.get_int("tune.recompute_every", t.recompute_every));
  t.regularization_step = c.get_double("tune.regularization_step", t.regularization_step);
  t.regularization_target_tolerance =
      c.get_double("tune.regularization_tolerance", t.regularization_target_tolerance);
  t.max_regularization_iterations = static_cast<int>(
      c.get_int("tune.max_regularization_iterations", t.max_regularization_iterations));
  t.drift_budget_factor = c.get_double("tune.drift_budget_factor", t.drift_budget_factor);
  t.refinement_passes = static_cast<int>(c.get_int("tune.passes", t.refinement_passes));
  t.rounds = static_cast<int>(c.get_int("tune.rounds", t.rounds));
  t.rank_tolerance = c.get_double("tune.rank_tolerance", t.rank_tolerance);

  e.penalty_lambdas = c.get_doubles("penalty.lambdas", e.penalty_lambdas);
  auto& p = e.penalty;
  p.step_size = c.get_double("penalty.step_size", p.step_size);
  p.armijo = armijo;
  p.armijo.enabled = c.get_bool("penalty.armijo", true);
  p.iterations_per_round =
      static_cast<int>(c.get_int("penalty.iterations_per_round", p.iterations_per_round));
  p.rounds = static_cast<int>(c.get_int("penalty.rounds", t.rounds));

  e.scaling_n = get_indices(c, "scaling.n", e.scaling_n);
  e.scaling_q = get_indices(c, "scaling.q", e.scaling_q);
  e.scaling_steps = get_index(c, "scaling.N", e.scaling_steps);
  e.scaling.repeats = static_cast<int>(c.get_int("scaling.repeats", e.scaling.repeats));
  e.scaling.min_iterations =
      static_cast<int>(c.get_int("scaling.min_iterations", e.scaling.min_iterations));
  e.scaling.min_seconds = c.get_double("scaling.min_seconds", e.scaling.min_seconds);
  e.scaling.seed = get_seed(c, "scaling.seed", e.scaling.seed);

  e.out_dir = c.get_string("output.dir", e.out_dir.string());
  e.validate();
  return e;
}

void ExperimentConfig::validate() const {
  check(data.q >= 1, "data.q must be at least 1");
  check(data.margin >= 0.0 && data.box_halfwidth > 1.0 + data.margin,
        "data.box_halfwidth must exceed 1 + data.margin and the margin must be >= 0");
  check(model == ModelKind::TwoLayerTanh,
        "model.kind: only two_layer_tanh can be built from a configuration file");
  check(n == 2, "model.n must be 2 for the ball dataset");
  check(nbar >= n, "model.nbar must be >= model.n");
  check(n_out == 1, "model.n_out must be 1 for the ball dataset");
  check(steps >= 1, "model.N must be at least 1");
  check(horizon > 0.0 && std::isfinite(horizon), "model.T must be positive");
  check(j >= 0 && j <= data.q, "split.j must lie in 0..data.q");
  check(qfolded.step_size > 0.0, "train.step_size must be positive");
  check(qfolded.regularization >= 0.0, "train.regularization must be >= 0");
  check(qfolded.max_iterations >= 0, "train.max_iterations must be >= 0");
  check(qfolded.init_scale >= 0.0, "train.init_scale must be >= 0");
  for (double l : penalty_lambdas) check(l >= 0.0 && std::isfinite(l), "penalty.lambdas must be >= 0");
  check(penalty.step_size > 0.0, "penalty.step_size must be positive");
  check(penalty.iterations_per_round >= 0 && penalty.rounds >= 0,
        "penalty iteration budget and rounds must be >= 0");
  for (Index v : scaling_n) check(v >= 1, "scaling.n entries must be >= 1");
  for (Index v : scaling_q) check(v >= 1, "scaling.q entries must be >= 1");
  check(!scaling_n.empty() && !scaling_q.empty(), "scaling.n and scaling.q must be non-empty");
  check(scaling_steps >= 1, "scaling.N must be at least 1");
  check(scaling.repeats >= 1 && scaling.min_iterations >= 1, "scaling repeats must be >= 1");
  try {
    tuner.validate();
    scratch.validate();
  } catch (const InvalidArgument& err) {
    throw ConfigError(err.what());
  }
}

Model ExperimentConfig::make_model() const { return Model::two_layer_tanh(nbar); }
Readout ExperimentConfig::make_readout() const { return Readout::canonical(n_out, nbar); }

fs::path RunPaths::u_penalty(std::size_t k) const {
  return dir / ("u_penalty_" + std::to_string(k) + ".ctl");
}
fs::path RunPaths::penalty_report(std::size_t k) const {
  return dir / ("penalty_report_" + std::to_string(k) + ".csv");
}
fs::path RunPaths::manifest(const std::string& command) const {
  return dir / ("manifest_" + command + ".json");
}

std::string git_blob_hash(const std::string& content) {
  const std::string header = "blob " + std::to_string(content.size()) + '\0';
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) throw Error("cannot allocate a digest context");
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                  EVP_DigestUpdate(ctx, content.data(), content.size()) == 1 &&
                  EVP_DigestFinal_ex(ctx, digest, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw Error("SHA-1 digest failed");
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i)
    hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(digest[i]);
  return hex.str();
}

std::string RunManifest::input_hash() const {
  std::string text = "command " + command + "\n";
  for (const auto& [key, value] : config.values()) text += key + " = " + value + "\n";
  for (const auto& [name, path] : inputs)
    text += "input " + name + " " + git_blob_hash(read_file(path)) + "\n";
  return git_blob_hash(text);
}

void RunManifest::write(std::ostream& os) const {
  nlohmann::ordered_json j;
  j["command"] = command;
  nlohmann::ordered_json cfg = nlohmann::ordered_json::object();
  for (const auto& [key, value] : config.values()) cfg[key] = value;
  j["config"] = cfg;
  j["input_hash"] = input_hash();
  nlohmann::ordered_json in = nlohmann::ordered_json::object();
  for (const auto& [name, path] : inputs) in[name] = path.string();
  j["inputs"] = in;
  nlohmann::ordered_json out = nlohmann::ordered_json::object();
  for (const auto& [name, path] : artifacts) out[name] = path.string();
  j["artifacts"] = out;
  nlohmann::ordered_json times = nlohmann::ordered_json::object();
  for (const auto& [name, s] : timings) times[name] = s;
  j["timings_seconds"] = times;
  os << j.dump(2) << '\n';
}

RunManifest cmd_gen_data(const ExperimentConfig& config, std::ostream& log) {
  const RunPaths paths{config.out_dir};
  RunManifest manifest{"gen-data", config.source, {}, {}, {}};
  const auto start = std::chrono::steady_clock::now();
  const auto ensemble = generate_ball_dataset(config.data);
  manifest.timings.emplace_back("generate", seconds_since(start));

  write_file(paths.dataset(),
             [&](std::ostream& os) { write_dataset(os, ensemble, config.data.seed); });
  manifest.artifacts.emplace_back("dataset", paths.dataset());

  Index outside = 0;
  for (const auto& s : ensemble.samples()) outside += s.y[0] > 0.0 ? 1 : 0;
  log << "generated q=" << ensemble.size() << " samples (seed " << config.data.seed
      << "): " << outside << " labelled +1, " << ensemble.size() - outside << " labelled -1\n";
  finish(manifest, paths);
  return manifest;
}

RunManifest cmd_train(const ExperimentConfig& config, std::ostream& log) {
  const RunPaths paths{config.out_dir};
  RunManifest manifest{"train", config.source, {{"dataset", paths.dataset()}}, {}, {}};
  const auto file = load_inputs_dataset(paths);
  check_dataset(config, file.ensemble);
  const auto model = config.make_model();
  const auto readout = config.make_readout();
  const Problem problem{model, file.ensemble, readout};
  const auto prefix = SubEnsembleView::prefix(file.ensemble, config.j);
  const auto indices = prefix.indices();

  const auto start = std::chrono::steady_clock::now();
  ControlSignal u(config.steps, model.p(), config.horizon);
  std::vector<TrainingCurvePoint> curve;
  bool converged = true;
  double final_value = 0.0;
  if (config.train_method == TrainMethod::QFolded) {
    auto result = qfolded_train(problem, indices, config.qfolded, config.init_seed);
    u = std::move(result.u);
    curve = std::move(result.curve);
    converged = result.converged;
    final_value = result.final_residual_norm;
    log << "q-folded training: " << result.iterations << " iterations, residual "
        << text::format_double(result.final_residual_norm) << '\n';
  } else {
    // Phase I from an empty memory, one sample at a time.
    TuningState state(initial_control(model, config.steps, config.horizon,
                                      config.qfolded.init_scale, config.init_seed),
                      file.ensemble.size(), readout.outputs(), config.scratch);
    int total = 0;
    for (const Index i : indices) {
      phase1(problem, state, {i});
      const auto& rec = state.history.back();
      total += rec.iterations;
      if (!rec.unconverged.empty()) converged = false;
      final_value = rec.memorized_cost_sum;
      curve.push_back({total, rec.memorized_cost_sum, std::sqrt(2.0 * rec.memorized_cost_sum),
                       config.scratch.step_size});
    }
    u = state.u;
    log << "from-scratch Phase I: " << total << " iterations, memorized cost "
        << text::format_double(final_value) << '\n';
  }
  manifest.timings.emplace_back("train", seconds_since(start));

  write_file(paths.u0(),
             [&](std::ostream& os) { write_control(os, model.kind(), model.nbar(), u); });
  write_file(paths.train_curve(), [&](std::ostream& os) { write_training_curve(os, curve); });
  manifest.artifacts.emplace_back("u0", paths.u0());
  manifest.artifacts.emplace_back("train_curve", paths.train_curve());
  if (!prefix.empty())
    log << "E(u0, X^j) = " << text::format_double(average_error(model, u, prefix, readout)) << '\n';
  finish(manifest, paths);
  if (!converged) throw ConvergenceError("training did not reach its tolerance", final_value);
  return manifest;
}

RunManifest cmd_tune(const ExperimentConfig& config, std::ostream& log) {
  const RunPaths paths{config.out_dir};
  RunManifest manifest{"tune", config.source, {{"dataset", paths.dataset()}, {"u0", paths.u0()}},
                       {}, {}};
  const auto file = load_inputs_dataset(paths);
  check_dataset(config, file.ensemble);
  const auto u0 = load_u0(config, paths);
  const auto model = config.make_model();
  const auto readout = config.make_readout();
  const Problem problem{model, file.ensemble, readout};

  const auto start = std::chrono::steady_clock::now();
  const auto result = tune_without_forgetting(problem, u0, config.j, config.tuner);
  manifest.timings.emplace_back("tune", seconds_since(start));
  for (const auto& w : result.report.warnings) log << "warning: " << w << '\n';

  write_file(paths.u_star(), [&](std::ostream& os) {
    write_control(os, model.kind(), model.nbar(), result.u);
  });
  write_file(paths.tune_report(), [&](std::ostream& os) { write_report_csv(os, result.report); });
  manifest.artifacts.emplace_back("u_star", paths.u_star());
  manifest.artifacts.emplace_back("tune_report", paths.tune_report());
  for (const auto& row : result.report.rows)
    if (row.metric == "avg_error")
      log << "round " << row.round << ' ' << row.phase << ' ' << row.set << " E = "
          << text::format_double(row.value) << '\n';
  finish(manifest, paths);
  return manifest;
}

RunManifest cmd_penalty(const ExperimentConfig& config, std::ostream& log) {
  const RunPaths paths{config.out_dir};
  RunManifest manifest{"penalty", config.source,
                       {{"dataset", paths.dataset()}, {"u0", paths.u0()}}, {}, {}};
  const auto file = load_inputs_dataset(paths);
  check_dataset(config, file.ensemble);
  const auto u0 = load_u0(config, paths);
  const auto model = config.make_model();
  const auto readout = config.make_readout();
  const Problem problem{model, file.ensemble, readout};

  for (std::size_t k = 0; k < config.penalty_lambdas.size(); ++k) {
    PenaltyConfig pc = config.penalty;
    pc.lambda = config.penalty_lambdas[k];
    const auto start = std::chrono::steady_clock::now();
    const auto result = penalty_tune(problem, u0, config.j, pc);
    manifest.timings.emplace_back("penalty_" + std::to_string(k), seconds_since(start));
    write_file(paths.u_penalty(k), [&](std::ostream& os) {
      write_control(os, model.kind(), model.nbar(), result.u);
    });
    write_file(paths.penalty_report(k),
               [&](std::ostream& os) { write_report_csv(os, result.report); });
    manifest.artifacts.emplace_back("u_penalty_" + std::to_string(k), paths.u_penalty(k));
    manifest.artifacts.emplace_back("penalty_report_" + std::to_string(k),
                                    paths.penalty_report(k));
    const int last = pc.rounds;
    log << "lambda=" << text::format_double(pc.lambda);
    for (const char* set : {"memorized", "new", "all"})
      if (result.report.has(last, last == 0 ? "initial" : "penalty", set, "avg_error"))
        log << ' ' << set << " E = "
            << text::format_double(result.report.value(last, last == 0 ? "initial" : "penalty",
                                                       set, "avg_error"));
    log << '\n';
  }
  finish(manifest, paths);
  return manifest;
}

RunManifest cmd_scaling(const ExperimentConfig& config, std::ostream& log) {
  const RunPaths paths{config.out_dir};
  RunManifest manifest{"scaling", config.source, {}, {}, {}};
  const auto start = std::chrono::steady_clock::now();
  const auto rows =
      qfolded_iteration_cost_probe(config.scaling_n, config.scaling_q, config.scaling_steps,
                                   config.scaling);
  manifest.timings.emplace_back("probe", seconds_since(start));
  write_file(paths.scaling(), [&](std::ostream& os) { write_scaling_csv(os, rows); });
  manifest.artifacts.emplace_back("scaling", paths.scaling());

  for (const Index n : config.scaling_n) {
    std::vector<double> qs, ts;
    for (const auto& r : rows)
      if (r.n == n && r.q >= 4) {
        qs.push_back(static_cast<double>(r.q));
        ts.push_back(r.seconds_per_iteration);
      }
    if (qs.size() >= 2)
      log << "n=" << n << ": log-log slope in q (q >= 4) = "
          << text::format_double(loglog_slope(qs, ts)) << '\n';
  }
  finish(manifest, paths);
  return manifest;
}

std::vector<EvalRow> evaluate_checkpoint(const ControlCheckpoint& checkpoint,
                                         const Ensemble& ensemble, Index j, Index n_out) {
  if (checkpoint.kind != ModelKind::TwoLayerTanh)
    throw InvalidArgument("only two_layer_tanh checkpoints can be evaluated from files");
  if (checkpoint.nbar < ensemble.n() || ensemble.n_out() != n_out)
    throw InvalidArgument("checkpoint/model dimension mismatch: nbar=" +
                          std::to_string(checkpoint.nbar) + ", dataset n=" +
                          std::to_string(ensemble.n()));
  if (j < 0 || j > ensemble.size()) throw InvalidArgument("cutoff j outside 0..q");
  const auto model = Model::two_layer_tanh(checkpoint.nbar);
  if (checkpoint.control.p() != model.p())
    throw InvalidArgument("checkpoint/model dimension mismatch: p=" +
                          std::to_string(checkpoint.control.p()));
  const auto readout = Readout::canonical(n_out, checkpoint.nbar);
  const auto [memorized, fresh] = split(ensemble, j);
  std::vector<EvalRow> rows;
  const std::pair<const char*, SubEnsembleView> sets[] = {
      {"memorized", memorized}, {"new", fresh}, {"all", SubEnsembleView::all(ensemble)}};
  for (const auto& [name, view] : sets)
    if (!view.empty())
      rows.push_back({name, "avg_error", average_error(model, checkpoint.control, view, readout)});
  return rows;
}

void write_eval_csv(std::ostream& os, const std::vector<EvalRow>& rows) {
  os << "set,metric,value\n";
  for (const auto& r : rows)
    os << r.set << ',' << r.metric << ',' << text::format_double(r.value) << '\n';
}

RunManifest cmd_eval(const fs::path& control, const fs::path& dataset, Index j,
                     const ExperimentConfig& config, std::ostream& log) {
  const RunPaths paths{config.out_dir};
  RunManifest manifest{"eval", config.source, {{"control", control}, {"dataset", dataset}}, {}, {}};
  if (!fs::exists(control)) throw IoError("control '" + control.string() + "' not found");
  if (!fs::exists(dataset)) throw IoError("dataset '" + dataset.string() + "' not found");
  const auto checkpoint = load_control(control.string());
  const auto file = load_dataset(dataset.string());
  const auto start = std::chrono::steady_clock::now();
  const auto rows = evaluate_checkpoint(checkpoint, file.ensemble, j, file.ensemble.n_out());
  manifest.timings.emplace_back("eval", seconds_since(start));
  write_eval_csv(log, rows);
  write_file(paths.eval(), [&](std::ostream& os) { write_eval_csv(os, rows); });
  manifest.artifacts.emplace_back("eval", paths.eval());
  finish(manifest, paths);
  return manifest;
}

}  // namespace ktune
