#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "brm/estimators.hpp"
#include "brm/mdp.hpp"
#include "brm/optim.hpp"

namespace brm {

using json = nlohmann::ordered_json;

// One row of a learning curve. Wall-clock time is deliberately not part of
// the record; run timings go to a separate timing.json so that every other
// output file is bit-for-bit reproducible from the seed.
struct CurveRecord {
  uint64_t update = 0;
  uint64_t seed = 0;
  std::string metric;
  double value = 0.0;
};

struct EstimatorArm {
  EstimatorKind kind = EstimatorKind::kBff;
  int n = 1;                   // nbff future count
  std::vector<double> alpha;   // empty -> uniform 1/n
  std::string label;           // directory-safe name, e.g. "nbff3"
  OptimizerSpec optimizer;     // resolved: config default unless overridden
  double pd_beta = 0.1;
  double pd_beta_pow = 0.0;
};

struct ExperimentConfig {
  std::string name = "experiment";
  Mode mode = Mode::kEval;
  double gamma = 0.9;
  json env;
  json target_policy;     // required for eval mode
  json behavior_policy;   // defaults: eval -> target policy, ctrl -> uniform
  json approx;
  OptimizerSpec optimizer;
  std::vector<EstimatorArm> arms;
  uint64_t T = 0;          // offline trajectory length (desk scale)
  uint64_t paper_T = 0;    // substituted for T under --paper-scale
  bool paper_scale = false;
  int batch_size = 50;
  uint64_t updates = 0;    // 0 -> T / batch_size
  uint64_t metric_stride = 1000;
  std::vector<uint64_t> seeds;
  std::vector<std::string> metrics;
  json oracle;             // {"kind":"exact"|"checkpoint"|"none", ...}
  std::string out_dir = "out";
  // online (cart-pole)
  bool online = false;
  int episodes = 200;
  size_t replay_capacity = 10000;
  ExplorationSchedule exploration;
  int episode_cap = CartPoleEnv::kEpisodeCap;
  // held-out window count for the empirical residual metric
  uint64_t holdout_windows = 2000;
  // probe settings, used by the probe entry point only
  json probe;
};

// Minimal TOML reader covering the config subset: comments, [table] and
// [[array-of-table]] headers, bare keys, strings, numbers, booleans and flat
// arrays on one line.
json parse_toml(const std::string& text);

json read_config_file(const std::string& path);  // dispatches on extension
ExperimentConfig parse_config(const json& j);
ExperimentConfig load_config(const std::string& path);
// Full echo of the effective settings, defaults applied; written into every
// output directory so runs are self-describing.
json resolved_config(const ExperimentConfig& cfg);

std::unique_ptr<Env> make_env(const json& spec);
// `num_actions` checks the spec against the env it will act in
std::unique_ptr<Policy> make_policy(const json& spec, int num_actions);

// shortest decimal string that parses back to exactly v
std::string format_double(double v);

void write_curve_csv(const std::string& path,
                     const std::vector<CurveRecord>& records);
std::vector<CurveRecord> read_curve_csv(const std::string& path);
void write_curve_json(const std::string& path,
                      const std::vector<CurveRecord>& records);
std::vector<CurveRecord> read_curve_json(const std::string& path);

struct RunOutput {
  std::vector<std::pair<std::string, std::vector<CurveRecord>>> curves;
  json summary;
};

// Runs every (estimator arm, seed) cell of the config, writes
// config.resolved.json, curve_<arm>.{csv,json}, checkpoints, summary.json and
// timing.json into cfg.out_dir, and returns the curves and summary.
RunOutput run_experiment(const ExperimentConfig& cfg);

// Writes the config's oracle artifacts into cfg.out_dir: for "exact", the
// dual-route model check and the exact Q table; for "checkpoint" with a
// nested "run" spec, the long reference run producing the checkpoint.
json run_oracle(const ExperimentConfig& cfg);

// Per-step mean-gradient bias probe (Monte Carlo or, on the tabular ring,
// exact enumeration), controlled by cfg.probe. Returns and writes probe.json.
json run_probe(const ExperimentConfig& cfg);

// Cross-run comparison: per-arm median final value and median area under the
// curve, plus pairwise seed-bootstrap orderings. `dirs` are run_experiment
// output directories sharing metric and cadence.
json compare_runs(const std::vector<std::string>& dirs);

}  // namespace brm
