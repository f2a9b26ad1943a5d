#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "bcib/data.hpp"
#include "bcib/mine.hpp"
#include "bcib/optim.hpp"
#include "bcib/policy.hpp"

namespace bcib {

enum class ModelSelection { best_eval, final_epoch };

std::string model_selection_name(ModelSelection rule);
ModelSelection model_selection_from_name(const std::string& name);

struct TrainConfig {
  double beta = 1e-4;
  size_t epochs = 50;
  size_t batch_size = 64;
  double policy_lr = 1e-4;
  double policy_weight_decay = 1e-4;
  LrSchedule schedule;  // total_steps auto-filled from the dataset when 0
  double clip_norm = 100.0;
  uint64_t seed = 0;
  ModelSelection model_selection = ModelSelection::best_eval;
  size_t eval_every = 10;  // 0 disables periodic evaluation
};

struct EpochRecord {
  size_t epoch = 0;  // 1-based
  double bc_loss = 0.0;
  double mi_estimate = 0.0;
  double total_loss = 0.0;
  bool has_eval = false;
  double eval_success_rate = 0.0;
  double lr = 0.0;
  double seconds = 0.0;
};

struct TrainReport {
  std::vector<EpochRecord> epochs;
  size_t selected_epoch = 0;
  std::string selection_rule;
};

// CSV with header epoch,bc_loss,mi_estimate,total_loss,eval_success_rate,
// lr,seconds; eval column empty on epochs without evaluation.
void write_report_csv(const TrainReport& report, const std::string& file);

struct StepRecord {
  double bc_loss = 0.0;
  double mi_estimate = 0.0;
  double total_loss = 0.0;
  double critic_dv = 0.0;
  double lr = 0.0;
  double grad_norm = 0.0;
};

// Mean squared error of policy actions against expert actions over the
// batch (mean over batch and action dims).
Tensor bc_loss(const Policy& policy, const std::vector<Window>& windows,
               const Tensor& targets);

struct LossParts {
  Tensor total;
  double bc = 0.0;
  double mi = 0.0;
};

// BC-IB objective: total = bc + beta * mi_penalty, both terms from one
// shared forward pass. With beta == 0 the penalty graph is skipped entirely
// and total IS the BC loss node, so gradients match vanilla BC bit for bit.
LossParts bcib_loss(const Policy& policy, const MineEstimator* mine,
                    const std::vector<Window>& windows, const Tensor& targets,
                    double beta, uint64_t perm_seed);

// One alternating update: critic steps on the detached (x, z) batch first,
// then one policy step on bcib_loss with gradients clipped at clip_norm.
// mine may be null (vanilla BC). Throws on non-finite loss, naming the step.
StepRecord train_step(Policy& policy, MineEstimator* mine, OptimState& opt,
                      ParamSet& trainable, const std::vector<Window>& windows,
                      const Tensor& targets, const TrainConfig& cfg,
                      const LrSchedule& schedule, uint64_t step);

using EvalFn = std::function<double(const Policy&)>;

// Epoch loop with seeded shuffling, periodic evaluation, and model
// selection. The selected parameters are restored into `policy` before
// returning. On abort a partial report is written to partial_report_file
// (when given) and the error rethrown.
TrainReport fit(Policy& policy, MineEstimator* mine, const Dataset& dataset,
                const TrainConfig& cfg, const EvalFn& eval_fn = nullptr,
                const std::string& partial_report_file = "");

}  // namespace bcib
