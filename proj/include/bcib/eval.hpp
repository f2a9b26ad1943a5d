#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "bcib/data.hpp"
#include "bcib/mine.hpp"
#include "bcib/policy.hpp"
#include "bcib/trainer.hpp"

namespace bcib {

struct EvalResult {
  double success_rate = 0.0;  // exactly successes / episodes
  size_t episodes = 0;
  size_t successes = 0;
  std::map<size_t, double> per_task_success;
  double mean_episode_length = 0.0;
  uint64_t seed_bank = 0;
};

// Controller evaluated in the environment loop: receives the current
// history window and the (privileged) env state so scripted experts can be
// wrapped alongside learned policies.
using RolloutActFn =
    std::function<std::vector<double>(const Window&, const EnvState&)>;

EvalResult evaluate_fn(const RolloutActFn& act, const EnvSpec& spec, size_t tau,
                       size_t episodes, uint64_t seed_bank);

// Closed-loop rollouts from a fixed seeded bank of initial conditions,
// tasks assigned round-robin.
EvalResult evaluate(const Policy& policy, const EnvSpec& spec, size_t episodes,
                    uint64_t seed_bank);

// Post-hoc probe MI: trains the fresh probe estimator on (x, z) pairs from
// the frozen policy over the dataset and returns the converged DV estimate
// (trailing average over the final 10% of steps). The probe must not share
// state with any training-time critic.
double track_mi(const Policy& policy, MineEstimator& probe,
                const Dataset& dataset, size_t steps, uint64_t seed);

struct SweepRun {
  double axis_value = 0.0;
  uint64_t seed = 0;
  double success_rate = 0.0;
  double final_mi = 0.0;
  size_t selected_epoch = 0;
  bool failed = false;
  std::string error;
};

struct SweepPoint {
  double axis_value = 0.0;
  double mean_success = 0.0;
  double sd_success = 0.0;
  bool has_sd = false;  // present iff >= 2 seeds aggregated
  double mean_final_mi = 0.0;
  size_t seeds = 0;
};

struct SweepResult {
  std::string axis_label;  // "beta" or "num_demos"
  std::vector<SweepRun> runs;
  std::vector<SweepPoint> points;
  std::vector<uint64_t> seeds;
};

// Everything one sweep run needs besides the axis value and seed.
struct ExperimentConfig {
  PolicyConfig policy;
  TrainConfig train;
  MineConfig mine;
  MineConfig probe;        // post-hoc probe (typically larger lr)
  size_t eval_episodes = 20;
  uint64_t eval_bank = 9000;
  size_t probe_steps = 300;
};

// One fit + evaluate + probe-MI run under paired-seed discipline: the
// policy init, data, eval bank, and probe seed depend only on `seed`,
// never on beta.
SweepRun run_experiment(const ExperimentConfig& cfg, const Dataset& dataset,
                        double beta, uint64_t seed, double axis_value,
                        TrainReport* report_out = nullptr);

// Full fit + evaluate per (beta, seed); failures are recorded and the
// sweep continues.
SweepResult sweep_beta(const ExperimentConfig& cfg, const Dataset& dataset,
                       const std::vector<double>& betas,
                       const std::vector<uint64_t>& seeds);

// Per demo count (k demos per task): subset, fit, evaluate.
SweepResult sweep_few_shot(const ExperimentConfig& cfg, const Dataset& dataset,
                           const std::vector<size_t>& demo_counts,
                           const std::vector<uint64_t>& seeds);

// Rebuild aggregate points from runs (used after merging resumed runs).
void aggregate_sweep(SweepResult& result);

// CSV + SVG artifacts with stable names: <stem>.csv (beta|num_demos,seed,
// success_rate,final_mi,selected_epoch) and <stem>.svg (mean success per
// axis point; skipped for empty sweeps). Returns the files written.
std::vector<std::string> emit_sweep_artifacts(const SweepResult& result,
                                              const std::string& out_dir,
                                              const std::string& stem);

// mi_curve.csv (epoch,mi_estimate,bc_loss,success_rate) + mi_curve.svg.
std::vector<std::string> emit_mi_curve(const TrainReport& report,
                                       const std::string& out_dir);

// Row formatting shared by emit_sweep_artifacts and incremental writers,
// so partial files written during a sweep parse back identically.
std::string sweep_csv_header(const std::string& axis_label);
std::string sweep_csv_row(const std::string& axis_label, const SweepRun& run);

// Parse a sweep CSV back into runs (resume support, round-trip tests).
// With skip_malformed, rows cut short by an interrupted write are dropped
// instead of raising.
std::vector<SweepRun> load_sweep_rows(const std::string& file,
                                      bool skip_malformed = false);

}  // namespace bcib
