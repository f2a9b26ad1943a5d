#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <vector>

#include "bcib/data.hpp"
#include "bcib/mine.hpp"
#include "bcib/trainer.hpp"

using namespace bcib;

namespace {

PolicyConfig tiny_policy(const EnvSpec& spec) {
  PolicyConfig pc;
  pc.obs_dim = spec.obs_dim();
  pc.state_dim = spec.state_dim();
  pc.num_tasks = spec.num_tasks;
  pc.action_dim = spec.action_dim();
  pc.e_o = 4;
  pc.e_s = 3;
  pc.e_l = 2;
  pc.tau = 2;
  pc.latent_dim = 4;
  pc.mlp_layers = 2;
  pc.mlp_hidden = 8;
  pc.head_hidden = 8;
  pc.seed = 7;
  return pc;
}

struct Batch {
  std::vector<Window> windows;
  Tensor targets;
};

Batch first_batch(const Dataset& ds, size_t tau, size_t n) {
  std::vector<Window> windows;
  std::vector<std::vector<double>> targets;
  dataset_windows(ds, tau, windows, targets);
  REQUIRE(windows.size() >= n);
  windows.resize(n);
  std::vector<double> flat;
  for (size_t i = 0; i < n; ++i)
    flat.insert(flat.end(), targets[i].begin(), targets[i].end());
  return {std::move(windows), Tensor::from_values(n, targets[0].size(), flat)};
}

bool params_equal(const ParamSet& a, const ParamSet& b) {
  for (const auto& [path, p] : a)
    if (!b.contains(path) || b.at(path).values() != p.values()) return false;
  return true;
}

}  // namespace

TEST_CASE("bc_loss equals the hand-computed MSE from independent act calls") {
  EnvSpec spec = make_env_spec(EnvKind::reach, 2);
  Dataset ds = generate_dataset(spec, 4, 1);
  PolicyConfig pc = tiny_policy(spec);
  Policy policy(pc);
  Batch batch = first_batch(ds, pc.tau, 6);

  double hand = 0.0;
  for (size_t i = 0; i < batch.windows.size(); ++i) {
    std::vector<double> a = policy.act(batch.windows[i]);
    for (size_t j = 0; j < a.size(); ++j) {
      double d = a[j] - batch.targets.at(i, j);
      hand += d * d;
    }
  }
  hand /= static_cast<double>(batch.windows.size() * pc.action_dim);

  Tensor loss = bc_loss(policy, batch.windows, batch.targets);
  CHECK(loss.item() == doctest::Approx(hand).epsilon(1e-12));
}

TEST_CASE("bcib_loss with beta 0 is the BC node itself; with beta it adds the penalty") {
  EnvSpec spec = make_env_spec(EnvKind::reach, 2);
  Dataset ds = generate_dataset(spec, 4, 1);
  PolicyConfig pc = tiny_policy(spec);
  Policy policy(pc);
  MineEstimator mine(pc.x_flat_dim(), pc.latent_dim, MineConfig{}, 5);
  Batch batch = first_batch(ds, pc.tau, 6);

  LossParts zero = bcib_loss(policy, &mine, batch.windows, batch.targets, 0.0, 1);
  CHECK(zero.mi == 0.0);
  CHECK(zero.total.item() == zero.bc);

  LossParts with = bcib_loss(policy, &mine, batch.windows, batch.targets, 0.5, 1);
  CHECK(with.bc == zero.bc);
  CHECK(with.total.item() == doctest::Approx(with.bc + 0.5 * with.mi).epsilon(1e-15));
}

TEST_CASE("beta 0 training is bit-identical to vanilla BC, critic present or not") {
  EnvSpec spec = make_env_spec(EnvKind::reach, 4);
  Dataset ds = generate_dataset(spec, 6, 2);
  PolicyConfig pc = tiny_policy(spec);
  Batch batch = first_batch(ds, pc.tau, 16);

  TrainConfig cfg;
  cfg.beta = 0.0;
  cfg.policy_lr = 1e-3;
  cfg.seed = 3;
  LrSchedule sched;
  sched.kind = LrScheduleKind::constant;
  sched.base_lr = cfg.policy_lr;

  Policy with_critic(pc);
  Policy vanilla(pc);
  MineEstimator mine(pc.x_flat_dim(), pc.latent_dim, MineConfig{}, 9);
  OptimState opt_a, opt_b;
  ParamSet train_a = with_critic.trainable_params();
  ParamSet train_b = vanilla.trainable_params();

  for (uint64_t step = 0; step < 50; ++step) {
    train_step(with_critic, &mine, opt_a, train_a, batch.windows, batch.targets,
               cfg, sched, step);
    train_step(vanilla, nullptr, opt_b, train_b, batch.windows, batch.targets,
               cfg, sched, step);
    REQUIRE(params_equal(with_critic.params(), vanilla.params()));
  }
}

TEST_CASE("train_step at lr 0 leaves parameters untouched") {
  EnvSpec spec = make_env_spec(EnvKind::reach, 2);
  Dataset ds = generate_dataset(spec, 4, 1);
  PolicyConfig pc = tiny_policy(spec);
  Policy policy(pc);
  Batch batch = first_batch(ds, pc.tau, 8);

  TrainConfig cfg;
  cfg.beta = 0.0;
  cfg.policy_lr = 0.0;
  LrSchedule sched;
  sched.kind = LrScheduleKind::constant;
  sched.base_lr = 0.0;

  ParamSet snap = policy.params().snapshot();
  OptimState opt;
  ParamSet trainable = policy.trainable_params();
  StepRecord rec = train_step(policy, nullptr, opt, trainable, batch.windows,
                              batch.targets, cfg, sched, 0);
  CHECK(rec.grad_norm > 0.0);
  CHECK(params_equal(policy.params(), snap));
}

TEST_CASE("train_step reports the pre-clip gradient norm and clips hard") {
  EnvSpec spec = make_env_spec(EnvKind::reach, 2);
  Dataset ds = generate_dataset(spec, 4, 1);
  PolicyConfig pc = tiny_policy(spec);
  Policy policy(pc);
  Batch batch = first_batch(ds, pc.tau, 8);

  TrainConfig cfg;
  cfg.beta = 0.0;
  cfg.clip_norm = 1e-9;
  LrSchedule sched;
  sched.kind = LrScheduleKind::constant;
  sched.base_lr = 1e-3;

  OptimState opt;
  ParamSet trainable = policy.trainable_params();
  StepRecord rec = train_step(policy, nullptr, opt, trainable, batch.windows,
                              batch.targets, cfg, sched, 0);
  CHECK(rec.grad_norm > 1e-9);  // pre-clip
  CHECK(trainable.grad_norm() <= 1e-9 * (1.0 + 1e-9));
}

TEST_CASE("fit evaluates on the configured cadence and selects best_eval") {
  EnvSpec spec = make_env_spec(EnvKind::reach, 2);
  Dataset ds = generate_dataset(spec, 4, 1);
  PolicyConfig pc = tiny_policy(spec);
  Policy policy(pc);

  TrainConfig cfg;
  cfg.beta = 0.0;
  cfg.epochs = 5;
  cfg.batch_size = 16;
  cfg.policy_lr = 1e-3;
  cfg.eval_every = 2;
  cfg.model_selection = ModelSelection::best_eval;

  std::vector<double> canned = {0.2, 0.8, 0.5};
  size_t call = 0;
  std::vector<size_t> eval_epochs;
  TrainReport report = fit(policy, nullptr, ds, cfg, [&](const Policy&) {
    return canned[std::min(call++, canned.size() - 1)];
  });

  REQUIRE(report.epochs.size() == 5);
  for (const EpochRecord& r : report.epochs)
    if (r.has_eval) eval_epochs.push_back(r.epoch);
  CHECK(eval_epochs == std::vector<size_t>{2, 4, 5});
  CHECK(report.selected_epoch == 4);  // the 0.8 evaluation
  CHECK(report.selection_rule == "best_eval");
}

TEST_CASE("fit with final_epoch keeps the last parameters") {
  EnvSpec spec = make_env_spec(EnvKind::reach, 2);
  Dataset ds = generate_dataset(spec, 4, 1);
  PolicyConfig pc = tiny_policy(spec);
  Policy policy(pc);

  TrainConfig cfg;
  cfg.beta = 0.0;
  cfg.epochs = 3;
  cfg.batch_size = 16;
  cfg.policy_lr = 1e-3;
  cfg.model_selection = ModelSelection::final_epoch;

  TrainReport report = fit(policy, nullptr, ds, cfg);
  CHECK(report.selected_epoch == 3);
  CHECK(report.selection_rule == "final_epoch");
}

TEST_CASE("fit trains the critic alongside the policy when beta is nonzero") {
  EnvSpec spec = make_env_spec(EnvKind::reach, 4);
  Dataset ds = generate_dataset(spec, 6, 2);
  PolicyConfig pc = tiny_policy(spec);
  Policy policy(pc);
  MineConfig mc;
  mc.lr = 1e-3;
  MineEstimator mine(pc.x_flat_dim(), pc.latent_dim, mc, 4);
  ParamSet before = mine.params().snapshot();

  TrainConfig cfg;
  cfg.beta = 1e-3;
  cfg.epochs = 2;
  cfg.batch_size = 16;
  cfg.policy_lr = 1e-3;

  TrainReport report = fit(policy, &mine, ds, cfg);
  CHECK(!params_equal(mine.params(), before));
  for (const EpochRecord& r : report.epochs) {
    CHECK(std::isfinite(r.mi_estimate));
    CHECK(r.total_loss == doctest::Approx(r.bc_loss + 1e-3 * r.mi_estimate)
                              .epsilon(1e-9));
  }
}

TEST_CASE("two fits with the same seed agree on everything but wall time") {
  EnvSpec spec = make_env_spec(EnvKind::reach, 2);
  Dataset ds = generate_dataset(spec, 4, 1);
  PolicyConfig pc = tiny_policy(spec);

  TrainConfig cfg;
  cfg.beta = 1e-3;
  cfg.epochs = 3;
  cfg.batch_size = 16;
  cfg.policy_lr = 1e-3;
  cfg.seed = 11;

  auto run = [&]() {
    Policy policy(pc);
    MineEstimator mine(pc.x_flat_dim(), pc.latent_dim, MineConfig{}, 2);
    return std::pair<TrainReport, ParamSet>(fit(policy, &mine, ds, cfg),
                                            policy.params().snapshot());
  };
  auto [r1, p1] = run();
  auto [r2, p2] = run();

  CHECK(params_equal(p1, p2));
  REQUIRE(r1.epochs.size() == r2.epochs.size());
  for (size_t i = 0; i < r1.epochs.size(); ++i) {
    CHECK(r1.epochs[i].bc_loss == r2.epochs[i].bc_loss);
    CHECK(r1.epochs[i].mi_estimate == r2.epochs[i].mi_estimate);
    CHECK(r1.epochs[i].total_loss == r2.epochs[i].total_loss);
    CHECK(r1.epochs[i].lr == r2.epochs[i].lr);
  }
}

TEST_CASE("fit validates its inputs") {
  EnvSpec spec = make_env_spec(EnvKind::reach, 2);
  Dataset ds = generate_dataset(spec, 4, 1);
  PolicyConfig pc = tiny_policy(spec);
  Policy policy(pc);

  TrainConfig cfg;
  cfg.epochs = 0;
  CHECK_THROWS_AS(fit(policy, nullptr, ds, cfg), std::runtime_error);
  cfg.epochs = 1;
  cfg.batch_size = 1;
  CHECK_THROWS_AS(fit(policy, nullptr, ds, cfg), std::runtime_error);

  Dataset empty;
  empty.env_spec = spec;
  cfg.batch_size = 16;
  CHECK_THROWS_AS(fit(policy, nullptr, empty, cfg), std::runtime_error);
}

TEST_CASE("a diverging run aborts with numerical_error and leaves a partial report") {
  std::filesystem::create_directories("tmp_trainer");
  EnvSpec spec = make_env_spec(EnvKind::reach, 2);
  Dataset ds = generate_dataset(spec, 4, 1);
  PolicyConfig pc = tiny_policy(spec);
  Policy policy(pc);
  // poison one weight so the first forward pass is non-finite
  policy.params().begin()->second.values()[0] =
      std::numeric_limits<double>::quiet_NaN();

  TrainConfig cfg;
  cfg.beta = 0.0;
  cfg.epochs = 2;
  cfg.batch_size = 16;
  cfg.policy_lr = 1e-3;

  const std::string partial = "tmp_trainer/partial.csv";
  CHECK_THROWS_AS(fit(policy, nullptr, ds, cfg, nullptr, partial), numerical_error);
  std::ifstream is(partial);
  REQUIRE(is.good());
  std::string header;
  std::getline(is, header);
  CHECK(header == "epoch,bc_loss,mi_estimate,total_loss,eval_success_rate,lr,seconds");
}

TEST_CASE("report CSV carries the contracted header and empty eval cells") {
  std::filesystem::create_directories("tmp_trainer");
  TrainReport report;
  EpochRecord r1;
  r1.epoch = 1;
  r1.bc_loss = 0.5;
  r1.mi_estimate = 0.01;
  r1.total_loss = 0.51;
  r1.lr = 1e-3;
  r1.seconds = 0.25;
  EpochRecord r2 = r1;
  r2.epoch = 2;
  r2.has_eval = true;
  r2.eval_success_rate = 0.75;
  report.epochs = {r1, r2};

  const std::string file = "tmp_trainer/report.csv";
  write_report_csv(report, file);
  std::ifstream is(file);
  std::string header, line1, line2;
  std::getline(is, header);
  std::getline(is, line1);
  std::getline(is, line2);
  CHECK(header == "epoch,bc_loss,mi_estimate,total_loss,eval_success_rate,lr,seconds");

  std::stringstream ss(line1);
  std::vector<std::string> cells;
  std::string cell;
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  REQUIRE(cells.size() >= 6);
  CHECK(cells[0] == "1");
  CHECK(cells[4] == "");  // no eval that epoch
  CHECK(line2.find(",0.75,") != std::string::npos);
}

TEST_CASE("model selection names round-trip") {
  CHECK(model_selection_from_name("best_eval") == ModelSelection::best_eval);
  CHECK(model_selection_from_name("final_epoch") == ModelSelection::final_epoch);
  CHECK_THROWS_AS(model_selection_from_name("oracle"), std::runtime_error);
}
