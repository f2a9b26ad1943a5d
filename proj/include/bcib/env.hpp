#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bcib/rng.hpp"

namespace bcib {

enum class EnvKind { reach, pick_place };
enum class NoiseKind { iid_gaussian, slow_drift, copy_of_state_with_noise };

std::string env_kind_name(EnvKind kind);
EnvKind env_kind_from_name(const std::string& name);
std::string noise_kind_name(NoiseKind kind);
NoiseKind noise_kind_from_name(const std::string& name);

// 2-D manipulation-style environment on the workspace [-1,1]^2 with
// velocity control and controllable observation redundancy.
struct EnvSpec {
  EnvKind kind = EnvKind::reach;
  double dt = 0.1;
  double a_max = 1.0;
  size_t max_steps = 100;  // pick_place default is 150 via make_env_spec
  double success_eps = 0.05;
  size_t noise_dims = 0;
  NoiseKind noise_kind = NoiseKind::iid_gaussian;
  size_t num_tasks = 4;

  // true features: reach = goal-relative position (2);
  // pick_place = object-relative, goal-relative-to-object, holding flag (5)
  size_t true_dim() const { return kind == EnvKind::reach ? 2 : 5; }
  size_t obs_dim() const { return true_dim() + noise_dims; }
  // proprio: position (+ gripper flag for pick_place)
  size_t state_dim() const { return kind == EnvKind::reach ? 2 : 3; }
  // velocity command (+ gripper command for pick_place)
  size_t action_dim() const { return kind == EnvKind::reach ? 2 : 3; }

  void validate() const;
};

// Spec with per-kind defaults filled in.
EnvSpec make_env_spec(EnvKind kind, size_t noise_dims = 0,
                      NoiseKind noise_kind = NoiseKind::iid_gaussian,
                      size_t num_tasks = 4);

inline constexpr double kExpertGain = 2.0;

struct EnvState {
  double pos[2] = {0.0, 0.0};
  double obj[2] = {0.0, 0.0};   // pick_place only
  double goal[2] = {0.0, 0.0};
  bool gripper_closed = false;
  bool holding = false;
  size_t task = 0;
  size_t steps = 0;
  bool done = false;
  bool success = false;
  std::vector<double> drift;  // slow_drift nuisance latent
};

// Fresh episode: task-indexed goal, randomized start (and object) with
// minimum separations, drift latent initialized from its stationary law.
EnvState env_reset(const EnvSpec& spec, size_t task, uint64_t seed);

// One dynamics step. Actions are clipped to [-a_max, a_max] per dim, the
// position clamped to the workspace. pick_place latches `holding` when the
// gripper closes within success_eps of the object; a held object tracks
// the agent; opening the gripper releases it in place.
void env_step(const EnvSpec& spec, EnvState& state, std::vector<double> action);

// Scripted expert reading the privileged true state.
std::vector<double> expert_policy(const EnvSpec& spec, const EnvState& state);

// True features followed by exactly noise_dims trailing nuisance entries.
// Advances the drift latent for slow_drift specs.
std::vector<double> make_observation(const EnvSpec& spec, EnvState& state, Rng& rng);

// Proprioceptive vector (position, and gripper flag for pick_place).
std::vector<double> proprio(const EnvSpec& spec, const EnvState& state);

}  // namespace bcib
