#include "bcib/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace bcib {

std::string model_selection_name(ModelSelection rule) {
  return rule == ModelSelection::best_eval ? "best_eval" : "final_epoch";
}

ModelSelection model_selection_from_name(const std::string& name) {
  if (name == "best_eval") return ModelSelection::best_eval;
  if (name == "final_epoch") return ModelSelection::final_epoch;
  throw std::runtime_error("unknown model selection rule '" + name + "'");
}

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

Tensor stack_targets(const std::vector<std::vector<double>>& targets) {
  if (targets.empty()) throw std::runtime_error("stack_targets: empty batch");
  size_t dim = targets[0].size();
  std::vector<double> flat;
  flat.reserve(targets.size() * dim);
  for (const auto& row : targets) {
    if (row.size() != dim)
      throw std::runtime_error("stack_targets: ragged target rows");
    flat.insert(flat.end(), row.begin(), row.end());
  }
  return Tensor::from_values(targets.size(), dim, flat);
}

}  // namespace

void write_report_csv(const TrainReport& report, const std::string& file) {
  std::ofstream os(file, std::ios::binary);
  if (!os) throw std::runtime_error("write_report_csv: cannot open '" + file + "'");
  os << "epoch,bc_loss,mi_estimate,total_loss,eval_success_rate,lr,seconds\n";
  for (const EpochRecord& r : report.epochs) {
    os << r.epoch << ',' << format_double(r.bc_loss) << ','
       << format_double(r.mi_estimate) << ',' << format_double(r.total_loss)
       << ',' << (r.has_eval ? format_double(r.eval_success_rate) : "") << ','
       << format_double(r.lr) << ',' << format_double(r.seconds) << '\n';
  }
  if (!os) throw std::runtime_error("write_report_csv: write failed");
}

Tensor bc_loss(const Policy& policy, const std::vector<Window>& windows,
               const Tensor& targets) {
  PolicyForward fwd = policy.forward_batch(windows);
  return mse(fwd.actions, targets);
}

LossParts bcib_loss(const Policy& policy, const MineEstimator* mine,
                    const std::vector<Window>& windows, const Tensor& targets,
                    double beta, uint64_t perm_seed) {
  PolicyForward fwd = policy.forward_batch(windows);
  Tensor bc = mse(fwd.actions, targets);
  LossParts parts;
  parts.bc = bc.item();
  if (beta == 0.0 || mine == nullptr) {
    parts.total = bc;
    parts.mi = 0.0;
    return parts;
  }
  Tensor penalty = mine->mi_penalty(fwd.x_flat, fwd.z, perm_seed);
  parts.mi = penalty.item();
  parts.total = add(bc, scale(penalty, beta));
  return parts;
}

StepRecord train_step(Policy& policy, MineEstimator* mine, OptimState& opt,
                      ParamSet& trainable, const std::vector<Window>& windows,
                      const Tensor& targets, const TrainConfig& cfg,
                      const LrSchedule& schedule, uint64_t step) {
  StepRecord rec;
  rec.lr = lr_at(schedule, step);
  uint64_t perm_seed = derive_seed(cfg.seed, "perm", step);

  if (mine != nullptr) {
    // critic first, on the current policy's detached representations, same
    // batch and permutation seed as the policy-side penalty
    PolicyForward fwd = policy.forward_batch(windows);
    Tensor x_c = fwd.x_flat.detached();
    Tensor z_c = fwd.z.detached();
    for (size_t k = 0; k < mine->config().critic_steps_per_policy_step; ++k)
      rec.critic_dv = mine->critic_step(x_c, z_c, perm_seed);
    if (cfg.beta == 0.0)
      rec.mi_estimate = mine->evaluate(x_c, z_c, perm_seed).value;
  }

  LossParts parts = bcib_loss(policy, mine, windows, targets, cfg.beta, perm_seed);
  if (!std::isfinite(parts.total.item()))
    throw numerical_error("train_step: non-finite loss at step " +
                          std::to_string(step) + " (last good step " +
                          (step == 0 ? std::string("none")
                                     : std::to_string(step - 1)) + ")",
                          step);
  rec.bc_loss = parts.bc;
  if (cfg.beta != 0.0) rec.mi_estimate = parts.mi;
  rec.total_loss = parts.total.item();

  trainable.zero_grad();
  backward(parts.total);
  rec.grad_norm = trainable.clip_grad_norm(cfg.clip_norm);
  optimizer_step(opt, trainable, rec.lr);
  return rec;
}

TrainReport fit(Policy& policy, MineEstimator* mine, const Dataset& dataset,
                const TrainConfig& cfg, const EvalFn& eval_fn,
                const std::string& partial_report_file) {
  if (dataset.trajectories.empty())
    throw std::runtime_error("fit: empty dataset");
  if (cfg.epochs < 1) throw std::runtime_error("fit: epochs must be >= 1");
  if (cfg.batch_size < 2)
    throw std::runtime_error("fit: batch_size must be >= 2");

  std::vector<Window> all_windows;
  std::vector<std::vector<double>> all_targets;
  dataset_windows(dataset, policy.config().tau, all_windows, all_targets);
  size_t n = all_windows.size();
  if (n < 2) throw std::runtime_error("fit: dataset yields fewer than 2 windows");

  // batches of cfg.batch_size; a trailing single-sample batch is dropped
  // (it cannot support the marginal shuffle)
  size_t steps_per_epoch = n / cfg.batch_size;
  size_t remainder = n % cfg.batch_size;
  if (remainder >= 2) steps_per_epoch += 1;
  if (steps_per_epoch == 0) {
    steps_per_epoch = 1;  // single short batch (n >= 2)
    remainder = 0;
  }

  LrSchedule schedule = cfg.schedule;
  if (schedule.total_steps == 0)
    schedule.total_steps = cfg.epochs * steps_per_epoch;

  OptimState opt;
  opt.config.kind = OptimKind::adamw;
  opt.config.weight_decay = cfg.policy_weight_decay;
  LrSchedule lr_sched = schedule;
  lr_sched.base_lr = cfg.policy_lr;

  ParamSet trainable = policy.trainable_params();
  Rng order_rng(derive_seed(cfg.seed, "batch_order"));
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});

  TrainReport report;
  report.selection_rule = model_selection_name(cfg.model_selection);
  ParamSet best_params;
  double best_sr = -1.0;
  size_t best_epoch = 0;
  uint64_t step = 0;

  auto run_epochs = [&]() {
    for (size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
      auto t0 = std::chrono::steady_clock::now();
      order_rng.shuffle(order);
      EpochRecord rec;
      rec.epoch = epoch;
      size_t batches = 0;
      for (size_t b = 0; b < steps_per_epoch; ++b) {
        size_t lo = b * cfg.batch_size;
        size_t hi = std::min(lo + cfg.batch_size, n);
        std::vector<Window> windows;
        std::vector<std::vector<double>> targets;
        windows.reserve(hi - lo);
        targets.reserve(hi - lo);
        for (size_t i = lo; i < hi; ++i) {
          windows.push_back(all_windows[order[i]]);
          targets.push_back(all_targets[order[i]]);
        }
        StepRecord sr = train_step(policy, mine, opt, trainable, windows,
                                   stack_targets(targets), cfg, lr_sched, step);
        rec.bc_loss += sr.bc_loss;
        rec.mi_estimate += sr.mi_estimate;
        rec.total_loss += sr.total_loss;
        rec.lr = sr.lr;
        step += 1;
        batches += 1;
      }
      rec.bc_loss /= static_cast<double>(batches);
      rec.mi_estimate /= static_cast<double>(batches);
      rec.total_loss /= static_cast<double>(batches);

      bool do_eval = eval_fn && ((cfg.eval_every > 0 && epoch % cfg.eval_every == 0) ||
                                 epoch == cfg.epochs);
      if (do_eval) {
        rec.has_eval = true;
        rec.eval_success_rate = eval_fn(policy);
        if (rec.eval_success_rate > best_sr) {
          best_sr = rec.eval_success_rate;
          best_epoch = epoch;
          best_params = policy.params().snapshot();
        }
      }
      rec.seconds = std::chrono::duration<double>(
                        std::chrono::steady_clock::now() - t0).count();
      report.epochs.push_back(rec);
    }
  };

  try {
    run_epochs();
  } catch (...) {
    if (!partial_report_file.empty()) write_report_csv(report, partial_report_file);
    throw;
  }

  if (cfg.model_selection == ModelSelection::best_eval && best_epoch > 0) {
    policy.params().restore(best_params);
    report.selected_epoch = best_epoch;
  } else {
    report.selected_epoch = cfg.epochs;
  }
  return report;
}

}  // namespace bcib
