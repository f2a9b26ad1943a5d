#pragma once

#include <functional>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "bcib/param_set.hpp"

namespace bcib {

// A loss or gradient turned non-finite mid-run. Carries the failing step
// (0 when unknown) so front ends can report it and exit distinctly from
// ordinary validation errors.
struct numerical_error : std::runtime_error {
  size_t step;
  explicit numerical_error(const std::string& what, size_t step_index = 0)
      : std::runtime_error(what), step(step_index) {}
};

enum class OptimKind { adam, adamw };

struct OptimConfig {
  OptimKind kind = OptimKind::adamw;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-4;  // decoupled; ignored by plain adam
};

// First/second moment buffers keyed by parameter path plus a shared step
// counter. Buffers are created lazily on first step.
struct OptimState {
  OptimConfig config;
  uint64_t step = 0;
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
};

// One Adam/AdamW update over every parameter from its accumulated gradient.
// Throws if any gradient entry is NaN or infinite, naming the parameter path.
void optimizer_step(OptimState& state, ParamSet& params, double lr);

enum class LrScheduleKind { constant, cosine };

struct LrSchedule {
  LrScheduleKind kind = LrScheduleKind::cosine;
  double base_lr = 1e-4;
  uint64_t warmup_steps = 0;
  uint64_t total_steps = 0;  // required > 0 for cosine
};

// Learning rate at `step` (0-based). Linear warmup to base_lr over
// warmup_steps, then either constant or cosine decay to zero at total_steps.
double lr_at(const LrSchedule& schedule, uint64_t step);

struct GradcheckEntry {
  std::string path;
  double max_rel_err = 0.0;
  size_t worst_index = 0;
  double analytic = 0.0;
  double numeric = 0.0;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  double max_rel_err = 0.0;
  bool passed = false;
};

// Central-difference check of d(loss)/d(param) for every entry of every
// parameter. `loss_fn` must rebuild the loss graph from current parameter
// values on each call. Relative error uses a 1e-3 denominator floor.
GradcheckReport gradcheck(ParamSet& params,
                          const std::function<Tensor()>& loss_fn,
                          double tol = 1e-4, double h = 1e-5);

}  // namespace bcib
