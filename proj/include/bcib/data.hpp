#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bcib/env.hpp"
#include "bcib/policy.hpp"

namespace bcib {

struct Trajectory {
  std::vector<std::vector<double>> observations;  // len x obs_dim
  std::vector<std::vector<double>> proprio;       // len x state_dim
  std::vector<std::vector<double>> actions;       // len x action_dim
  size_t task_label = 0;
  bool success = false;

  size_t length() const { return actions.size(); }
};

struct Dataset {
  std::vector<Trajectory> trajectories;
  EnvSpec env_spec;
  uint64_t seed = 0;
  std::string split = "train";

  size_t size() const { return trajectories.size(); }
};

// One expert rollout; the returned trajectory records (o_t, s_t, a_t) for
// every step plus the episode outcome.
Trajectory rollout_expert(const EnvSpec& spec, size_t task, uint64_t seed);

// num_demos expert demonstrations, tasks assigned round-robin. Per-demo
// sub-seeds depend only on (seed, demo index, attempt), so a shorter run is
// a prefix of a longer one. Failed rollouts are regenerated with a fresh
// attempt counter; a failure rate above 1% aborts.
Dataset generate_dataset(const EnvSpec& spec, size_t num_demos, uint64_t seed);

// Stratified few-shot subsample: k demos per task label, uniform without
// replacement, original order preserved.
Dataset few_shot_subset(const Dataset& dataset, size_t k, uint64_t seed);

// JSON Lines serialization: header line (env_spec, seed, version), then one
// trajectory per line. Floats carry 17 significant digits so that
// save -> load -> save is byte-identical.
void save_dataset(const Dataset& dataset, const std::string& file);
Dataset load_dataset(const std::string& file);

// tau-step history window ending at step t, left-padded by repeating the
// first step when the trajectory is shorter than tau.
Window history_window(const Trajectory& traj, size_t t, size_t tau);

// Expert action at step t as the regression target for the window above.
std::vector<double> action_at(const Trajectory& traj, size_t t);

// All (trajectory, step) pairs of a dataset as windows plus stacked targets.
void dataset_windows(const Dataset& dataset, size_t tau,
                     std::vector<Window>& windows,
                     std::vector<std::vector<double>>& targets);

}  // namespace bcib
