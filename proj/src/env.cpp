#include "bcib/env.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace bcib {

std::string env_kind_name(EnvKind kind) {
  return kind == EnvKind::reach ? "reach" : "pick_place";
}

EnvKind env_kind_from_name(const std::string& name) {
  if (name == "reach") return EnvKind::reach;
  if (name == "pick_place") return EnvKind::pick_place;
  throw std::runtime_error("unknown env kind '" + name + "'");
}

std::string noise_kind_name(NoiseKind kind) {
  switch (kind) {
    case NoiseKind::iid_gaussian: return "iid_gaussian";
    case NoiseKind::slow_drift: return "slow_drift";
    case NoiseKind::copy_of_state_with_noise: return "copy_of_state_with_noise";
  }
  throw std::runtime_error("noise_kind_name: invalid kind");
}

NoiseKind noise_kind_from_name(const std::string& name) {
  if (name == "iid_gaussian") return NoiseKind::iid_gaussian;
  if (name == "slow_drift") return NoiseKind::slow_drift;
  if (name == "copy_of_state_with_noise") return NoiseKind::copy_of_state_with_noise;
  throw std::runtime_error("unknown noise kind '" + name + "'");
}

void EnvSpec::validate() const {
  if (max_steps < 1) throw std::runtime_error("EnvSpec: max_steps must be >= 1");
  if (success_eps <= 0.0) throw std::runtime_error("EnvSpec: success_eps must be > 0");
  if (dt <= 0.0) throw std::runtime_error("EnvSpec: dt must be > 0");
  if (a_max <= 0.0) throw std::runtime_error("EnvSpec: a_max must be > 0");
  if (num_tasks < 1) throw std::runtime_error("EnvSpec: num_tasks must be >= 1");
}

EnvSpec make_env_spec(EnvKind kind, size_t noise_dims, NoiseKind noise_kind,
                      size_t num_tasks) {
  EnvSpec spec;
  spec.kind = kind;
  spec.max_steps = kind == EnvKind::reach ? 100 : 150;
  spec.noise_dims = noise_dims;
  spec.noise_kind = noise_kind;
  spec.num_tasks = num_tasks;
  spec.validate();
  return spec;
}

namespace {

double dist2d(const double* a, const double* b) {
  return std::hypot(a[0] - b[0], a[1] - b[1]);
}

// stationary-AR(1) drift: d <- phi d + sqrt(1 - phi^2) eps keeps N(0,1)
constexpr double kDriftPhi = 0.95;
const double kDriftSigma = std::sqrt(1.0 - kDriftPhi * kDriftPhi);

}  // namespace

EnvState env_reset(const EnvSpec& spec, size_t task, uint64_t seed) {
  spec.validate();
  if (task >= spec.num_tasks)
    throw std::runtime_error("env_reset: task index out of range");
  EnvState s;
  s.task = task;

  // task-indexed goal on a radius-0.7 circle so the language label carries
  // goal identity
  double angle = 2.0 * std::numbers::pi * static_cast<double>(task) /
                 static_cast<double>(spec.num_tasks);
  s.goal[0] = 0.7 * std::cos(angle);
  s.goal[1] = 0.7 * std::sin(angle);

  Rng rng(derive_seed(seed, "reset"));
  auto draw_point = [&](double* out, double min_sep_goal, const double* other,
                        double min_sep_other) {
    for (int attempt = 0; attempt < 1000; ++attempt) {
      out[0] = rng.uniform(-0.9, 0.9);
      out[1] = rng.uniform(-0.9, 0.9);
      if (dist2d(out, s.goal) < min_sep_goal) continue;
      if (other && dist2d(out, other) < min_sep_other) continue;
      return;
    }
    throw std::runtime_error("env_reset: could not place a start point");
  };
  draw_point(s.pos, 0.2, nullptr, 0.0);
  if (spec.kind == EnvKind::pick_place) draw_point(s.obj, 0.2, s.pos, 0.2);

  if (spec.noise_kind == NoiseKind::slow_drift) {
    Rng drift_rng(derive_seed(seed, "drift_init"));
    s.drift.resize(spec.noise_dims);
    for (double& d : s.drift) d = drift_rng.normal();
  }
  return s;
}

void env_step(const EnvSpec& spec, EnvState& state, std::vector<double> action) {
  if (state.done) return;
  if (action.size() != spec.action_dim())
    throw std::runtime_error("env_step: action dim mismatch");
  for (double& a : action) a = std::clamp(a, -spec.a_max, spec.a_max);

  state.pos[0] = std::clamp(state.pos[0] + spec.dt * action[0], -1.0, 1.0);
  state.pos[1] = std::clamp(state.pos[1] + spec.dt * action[1], -1.0, 1.0);

  if (spec.kind == EnvKind::pick_place) {
    if (state.holding) {
      state.obj[0] = state.pos[0];
      state.obj[1] = state.pos[1];
    }
    bool close_cmd = action[2] > 0.0;
    if (close_cmd) {
      if (!state.gripper_closed && !state.holding &&
          dist2d(state.pos, state.obj) <= spec.success_eps) {
        state.holding = true;
        state.obj[0] = state.pos[0];
        state.obj[1] = state.pos[1];
      }
    } else {
      state.holding = false;
    }
    state.gripper_closed = close_cmd;
  }

  state.steps += 1;
  if (spec.kind == EnvKind::reach) {
    if (dist2d(state.pos, state.goal) <= spec.success_eps) state.success = true;
  } else {
    if (!state.holding && dist2d(state.obj, state.goal) <= spec.success_eps)
      state.success = true;
  }
  if (state.success || state.steps >= spec.max_steps) state.done = true;
}

std::vector<double> expert_policy(const EnvSpec& spec, const EnvState& state) {
  auto clip_vel = [&](double target_x, double target_y) {
    double vx = std::clamp(kExpertGain * (target_x - state.pos[0]),
                           -spec.a_max, spec.a_max);
    double vy = std::clamp(kExpertGain * (target_y - state.pos[1]),
                           -spec.a_max, spec.a_max);
    return std::pair<double, double>{vx, vy};
  };

  if (spec.kind == EnvKind::reach) {
    auto [vx, vy] = clip_vel(state.goal[0], state.goal[1]);
    return {vx, vy};
  }

  // pick_place phases: approach object, grab, carry, release at the goal
  if (!state.holding) {
    if (dist2d(state.pos, state.obj) <= 0.5 * spec.success_eps)
      return {0.0, 0.0, 1.0};  // close gripper over the object
    auto [vx, vy] = clip_vel(state.obj[0], state.obj[1]);
    return {vx, vy, -1.0};
  }
  if (dist2d(state.pos, state.goal) <= 0.5 * spec.success_eps)
    return {0.0, 0.0, -1.0};  // release in the bowl
  auto [vx, vy] = clip_vel(state.goal[0], state.goal[1]);
  return {vx, vy, 1.0};
}

std::vector<double> make_observation(const EnvSpec& spec, EnvState& state,
                                     Rng& rng) {
  std::vector<double> obs;
  obs.reserve(spec.obs_dim());
  if (spec.kind == EnvKind::reach) {
    obs.push_back(state.goal[0] - state.pos[0]);
    obs.push_back(state.goal[1] - state.pos[1]);
  } else {
    obs.push_back(state.obj[0] - state.pos[0]);
    obs.push_back(state.obj[1] - state.pos[1]);
    obs.push_back(state.goal[0] - state.obj[0]);
    obs.push_back(state.goal[1] - state.obj[1]);
    obs.push_back(state.holding ? 1.0 : 0.0);
  }

  switch (spec.noise_kind) {
    case NoiseKind::iid_gaussian:
      for (size_t j = 0; j < spec.noise_dims; ++j) obs.push_back(rng.normal());
      break;
    case NoiseKind::slow_drift: {
      if (state.drift.size() != spec.noise_dims)
        state.drift.assign(spec.noise_dims, 0.0);
      for (size_t j = 0; j < spec.noise_dims; ++j) {
        state.drift[j] = kDriftPhi * state.drift[j] + kDriftSigma * rng.normal();
        obs.push_back(state.drift[j]);
      }
      break;
    }
    case NoiseKind::copy_of_state_with_noise: {
      std::vector<double> s = proprio(spec, state);
      for (size_t j = 0; j < spec.noise_dims; ++j)
        obs.push_back(s[j % s.size()] + 0.5 * rng.normal());
      break;
    }
  }
  return obs;
}

std::vector<double> proprio(const EnvSpec& spec, const EnvState& state) {
  if (spec.kind == EnvKind::reach) return {state.pos[0], state.pos[1]};
  return {state.pos[0], state.pos[1], state.gripper_closed ? 1.0 : 0.0};
}

}  // namespace bcib
