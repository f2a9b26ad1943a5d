#include "bcib/cli.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <set>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "bcib/eval.hpp"

namespace bcib {

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// Every tunable reachable from the command line, in CLI (string) form where
// the library uses enums. Validated by CLI11 before any work starts.
struct RunConfig {
  std::string out_dir = ".";
  uint64_t seed = 0;

  // environment
  std::string env = "reach";
  size_t noise_dims = 0;
  std::string noise_kind = "iid_gaussian";
  size_t num_tasks = 4;

  // gen-data
  size_t demos = 25;
  std::string out_file;

  // shared inputs
  std::string data_file;
  std::string ckpt_file;

  // policy architecture
  std::string fusion = "spatial_mlp";
  size_t tau = 3;
  size_t e_o = 8;
  size_t e_s = 4;
  size_t e_l = 4;
  size_t latent_dim = 16;
  size_t mlp_layers = 4;
  size_t mlp_hidden = 64;
  size_t attn_width = 64;
  size_t attn_layers = 2;
  size_t attn_heads = 2;
  size_t attn_ffn_hidden = 64;
  size_t head_hidden = 64;

  // training
  double beta = 0.0;
  size_t epochs = 50;
  size_t batch_size = 64;
  double lr = 1e-4;
  double weight_decay = 1e-4;
  std::string schedule = "cosine";
  size_t warmup_steps = 0;
  double clip_norm = 100.0;
  std::string model_selection = "best_eval";
  size_t eval_every = 10;
  size_t eval_episodes = 20;
  uint64_t eval_bank = 9000;
  std::string ckpt_out = "policy.ckpt";
  std::string report_file = "report.csv";
  bool mi_curve = false;

  // training-time critic
  size_t mine_hidden = 64;
  size_t mine_layers = 4;
  double mine_lr = 1e-5;
  double ema_decay = 0.99;
  double score_clip = 50.0;
  size_t critic_steps = 1;
  double critic_loss_weight = 1.0;
  bool ema_correction = true;

  // post-hoc probe
  size_t probe_hidden = 64;
  size_t probe_layers = 4;
  double probe_lr = 1e-3;
  size_t probe_steps = 800;

  // standalone eval
  size_t episodes = 20;
  uint64_t seed_bank = 9000;
  bool expert = false;
  std::string csv_file = "eval.csv";

  // estimate-mi (Gaussian oracle mode)
  std::vector<double> gaussian;
  size_t est_steps = 1500;
  size_t est_batch = 256;
  size_t est_hidden = 64;
  size_t est_layers = 4;
  double est_lr = 1e-3;

  // sweep
  std::string axis = "beta";
  std::vector<double> values;
  size_t num_seeds = 3;
  size_t jobs = 1;
  std::string stem;
  bool resume = true;

  // selfcheck
  bool fast = false;
  std::string corrupt_op;
};

std::string resolve_out(const std::string& out_dir, const std::string& name) {
  std::filesystem::path p(name);
  if (!p.is_absolute()) p = std::filesystem::path(out_dir) / p;
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  return p.string();
}

EnvSpec env_spec_from(const RunConfig& rc) {
  return make_env_spec(env_kind_from_name(rc.env), rc.noise_dims,
                       noise_kind_from_name(rc.noise_kind), rc.num_tasks);
}

PolicyConfig policy_config_from(const RunConfig& rc, const EnvSpec& spec) {
  PolicyConfig pc;
  pc.obs_dim = spec.obs_dim();
  pc.state_dim = spec.state_dim();
  pc.num_tasks = spec.num_tasks;
  pc.action_dim = spec.action_dim();
  pc.e_o = rc.e_o;
  pc.e_s = rc.e_s;
  pc.e_l = rc.e_l;
  pc.tau = rc.tau;
  pc.fusion = fusion_kind_from_name(rc.fusion);
  pc.latent_dim = rc.latent_dim;
  pc.mlp_layers = rc.mlp_layers;
  pc.mlp_hidden = rc.mlp_hidden;
  pc.attn_width = rc.attn_width;
  pc.attn_layers = rc.attn_layers;
  pc.attn_heads = rc.attn_heads;
  pc.attn_ffn_hidden = rc.attn_ffn_hidden;
  pc.head_hidden = rc.head_hidden;
  pc.seed = derive_seed(rc.seed, "policy");
  return pc;
}

TrainConfig train_config_from(const RunConfig& rc) {
  TrainConfig tc;
  tc.beta = rc.beta;
  tc.epochs = rc.epochs;
  tc.batch_size = rc.batch_size;
  tc.policy_lr = rc.lr;
  tc.policy_weight_decay = rc.weight_decay;
  tc.schedule.kind = rc.schedule == "constant" ? LrScheduleKind::constant
                                               : LrScheduleKind::cosine;
  tc.schedule.base_lr = rc.lr;
  tc.schedule.warmup_steps = rc.warmup_steps;
  tc.clip_norm = rc.clip_norm;
  tc.seed = rc.seed;
  tc.model_selection = model_selection_from_name(rc.model_selection);
  tc.eval_every = rc.eval_every;
  return tc;
}

MineConfig mine_config_from(const RunConfig& rc) {
  MineConfig mc;
  mc.hidden = rc.mine_hidden;
  mc.layers = rc.mine_layers;
  mc.lr = rc.mine_lr;
  mc.ema_decay = rc.ema_decay;
  mc.score_clip = rc.score_clip;
  mc.critic_steps_per_policy_step = rc.critic_steps;
  mc.critic_loss_weight = rc.critic_loss_weight;
  mc.ema_correction = rc.ema_correction;
  return mc;
}

MineConfig probe_config_from(const RunConfig& rc) {
  MineConfig mc;
  mc.hidden = rc.probe_hidden;
  mc.layers = rc.probe_layers;
  mc.lr = rc.probe_lr;
  return mc;
}

ExperimentConfig experiment_config_from(const RunConfig& rc) {
  ExperimentConfig cfg;
  // environment dims are filled in from the dataset by run_experiment
  cfg.policy = policy_config_from(rc, make_env_spec(EnvKind::reach));
  cfg.train = train_config_from(rc);
  cfg.mine = mine_config_from(rc);
  cfg.probe = probe_config_from(rc);
  cfg.eval_episodes = rc.eval_episodes;
  cfg.eval_bank = rc.eval_bank;
  cfg.probe_steps = rc.probe_steps;
  return cfg;
}

int cmd_gen_data(const RunConfig& rc) {
  EnvSpec spec = env_spec_from(rc);
  Dataset ds = generate_dataset(spec, rc.demos, rc.seed);
  std::string name = rc.out_file;
  if (name.empty())
    name = rc.env + "_n" + std::to_string(rc.noise_dims) + "_d" +
           std::to_string(rc.demos) + "_s" + std::to_string(rc.seed) + ".jsonl";
  std::string path = resolve_out(rc.out_dir, name);
  save_dataset(ds, path);

  size_t successes = 0;
  double mean_len = 0.0;
  for (const Trajectory& t : ds.trajectories) {
    successes += t.success ? 1 : 0;
    mean_len += static_cast<double>(t.length());
  }
  mean_len /= static_cast<double>(ds.size());
  std::cout << "wrote " << ds.size() << " demos (" << successes
            << " successful, mean length " << mean_len << ") to " << path
            << "\n";
  return 0;
}

int cmd_train(const RunConfig& rc) {
  Dataset ds = load_dataset(rc.data_file);
  PolicyConfig pc = policy_config_from(rc, ds.env_spec);
  TrainConfig tc = train_config_from(rc);

  Policy policy(pc);
  // The critic is also wanted at beta = 0 when the MI curve was requested: the
  // penalty term is scaled by zero so the policy is untouched, but the critic
  // still observes the latent and the report's MI column stays meaningful.
  std::optional<MineEstimator> mine;
  if (tc.beta != 0.0 || rc.mi_curve)
    mine.emplace(pc.x_flat_dim(), pc.latent_dim, mine_config_from(rc),
                 derive_seed(rc.seed, "mine"));

  EvalFn eval_fn;
  if (rc.eval_episodes > 0)
    eval_fn = [&](const Policy& p) {
      return evaluate(p, ds.env_spec, rc.eval_episodes, rc.eval_bank)
          .success_rate;
    };

  std::string report_path = resolve_out(rc.out_dir, rc.report_file);
  TrainReport report =
      fit(policy, mine ? &*mine : nullptr, ds, tc, eval_fn, report_path);

  std::string ckpt_path = resolve_out(rc.out_dir, rc.ckpt_out);
  policy.save(ckpt_path);
  write_report_csv(report, report_path);
  if (rc.mi_curve)
    for (const std::string& f : emit_mi_curve(report, rc.out_dir))
      std::cout << "wrote " << f << "\n";

  const EpochRecord& last = report.epochs.back();
  std::string sr = "n/a";
  if (rc.eval_episodes > 0)
    sr = format_double(
        evaluate(policy, ds.env_spec, rc.eval_episodes, rc.eval_bank)
            .success_rate);
  std::cout << "final: bc_loss=" << last.bc_loss
            << " mi_estimate=" << last.mi_estimate
            << " selected_epoch=" << report.selected_epoch << " eval_sr=" << sr
            << "\n";
  std::cout << "wrote " << ckpt_path << " and " << report_path << "\n";
  return 0;
}

int cmd_eval(const RunConfig& rc) {
  EnvSpec spec = env_spec_from(rc);
  EvalResult res;
  if (rc.expert) {
    RolloutActFn fn = [&spec](const Window&, const EnvState& st) {
      return expert_policy(spec, st);
    };
    res = evaluate_fn(fn, spec, 1, rc.episodes, rc.seed_bank);
  } else {
    if (rc.ckpt_file.empty())
      throw std::runtime_error("eval: --ckpt is required unless --expert");
    Policy policy = Policy::load(rc.ckpt_file);
    const PolicyConfig& pc = policy.config();
    if (pc.obs_dim != spec.obs_dim() || pc.state_dim != spec.state_dim() ||
        pc.num_tasks != spec.num_tasks || pc.action_dim != spec.action_dim())
      throw std::runtime_error(
          "eval: checkpoint dims (obs " + std::to_string(pc.obs_dim) +
          ", state " + std::to_string(pc.state_dim) + ", tasks " +
          std::to_string(pc.num_tasks) + ", action " +
          std::to_string(pc.action_dim) + ") incompatible with env (obs " +
          std::to_string(spec.obs_dim()) + ", state " +
          std::to_string(spec.state_dim()) + ", tasks " +
          std::to_string(spec.num_tasks) + ", action " +
          std::to_string(spec.action_dim()) + ")");
    res = evaluate(policy, spec, rc.episodes, rc.seed_bank);
  }

  std::cout << "success_rate=" << format_double(res.success_rate) << " ("
            << res.successes << "/" << res.episodes << "), mean_length="
            << res.mean_episode_length << ", seed_bank=" << res.seed_bank
            << "\n";
  for (const auto& [task, sr] : res.per_task_success)
    std::cout << "  task " << task << ": " << format_double(sr) << "\n";

  std::string csv_path = resolve_out(rc.out_dir, rc.csv_file);
  std::ofstream os(csv_path, std::ios::binary);
  if (!os) throw std::runtime_error("eval: cannot open '" + csv_path + "'");
  os << "episodes,success_rate,mean_episode_length,seed_bank\n"
     << res.episodes << "," << format_double(res.success_rate) << ","
     << format_double(res.mean_episode_length) << "," << res.seed_bank << "\n";
  if (!os) throw std::runtime_error("eval: write to '" + csv_path + "' failed");
  std::cout << "wrote " << csv_path << "\n";
  return 0;
}

int cmd_estimate_mi(const RunConfig& rc) {
  bool gaussian_mode = !rc.gaussian.empty();
  bool probe_mode = !rc.ckpt_file.empty() || !rc.data_file.empty();
  if (gaussian_mode == probe_mode)
    throw std::runtime_error(
        "estimate-mi: pass either --gaussian RHO DIMS or --ckpt with --data");

  if (gaussian_mode) {
    double rho = rc.gaussian[0];
    double dims_d = rc.gaussian[1];
    if (!(std::fabs(rho) < 1.0))
      throw std::runtime_error("estimate-mi: |rho| must be < 1");
    if (dims_d < 1.0 || dims_d != std::floor(dims_d))
      throw std::runtime_error("estimate-mi: dims must be a positive integer");
    size_t dims = static_cast<size_t>(dims_d);
    MineConfig mc;
    mc.hidden = rc.est_hidden;
    mc.layers = rc.est_layers;
    mc.lr = rc.est_lr;
    double est =
        estimate_gaussian_mi(rho, dims, rc.est_steps, rc.est_batch, mc, rc.seed);
    double oracle = gaussian_mi_oracle(rho, dims);
    std::cout << "estimate=" << format_double(est)
              << " oracle=" << format_double(oracle)
              << " abs_gap=" << format_double(std::fabs(est - oracle)) << "\n";
    return 0;
  }

  if (rc.ckpt_file.empty() || rc.data_file.empty())
    throw std::runtime_error("estimate-mi: probe mode needs --ckpt and --data");
  Policy policy = Policy::load(rc.ckpt_file);
  Dataset ds = load_dataset(rc.data_file);
  MineEstimator probe(policy.config().x_flat_dim(), policy.config().latent_dim,
                      probe_config_from(rc), derive_seed(rc.seed, "probe"));
  double est = track_mi(policy, probe, ds, rc.probe_steps,
                        derive_seed(rc.seed, "probe_batches"));
  std::cout << "probe_mi=" << format_double(est) << " steps=" << rc.probe_steps
            << "\n";
  return 0;
}

int cmd_sweep(const RunConfig& rc) {
  bool demos_axis = rc.axis == "demos" || rc.axis == "num_demos";
  std::string axis_label = demos_axis ? "num_demos" : "beta";
  for (double v : rc.values) {
    if (demos_axis && (v < 1.0 || v != std::floor(v)))
      throw std::runtime_error("sweep: demo counts must be positive integers");
    if (!demos_axis && v < 0.0)
      throw std::runtime_error("sweep: beta values must be >= 0");
  }

  Dataset ds = load_dataset(rc.data_file);
  ExperimentConfig ecfg = experiment_config_from(rc);
  std::vector<uint64_t> seeds;
  for (uint64_t s = 1; s <= rc.num_seeds; ++s) seeds.push_back(s);

  std::string stem = rc.stem;
  if (stem.empty()) stem = demos_axis ? "sweep_demos" : "sweep_beta";
  std::filesystem::create_directories(rc.out_dir);
  std::string csv_path = rc.out_dir + "/" + stem + ".csv";

  std::vector<SweepRun> existing;
  if (rc.resume && std::filesystem::exists(csv_path)) {
    existing = load_sweep_rows(csv_path, /*skip_malformed=*/true);
    if (!existing.empty())
      std::cout << "resuming: " << existing.size() << " completed runs found in "
                << csv_path << "\n";
  }

  struct Cell {
    double value;
    uint64_t seed;
  };
  std::vector<Cell> cells;
  for (double v : rc.values)
    for (uint64_t s : seeds) cells.push_back({v, s});

  std::vector<std::optional<SweepRun>> slots(cells.size());
  std::vector<size_t> todo;
  for (size_t i = 0; i < cells.size(); ++i) {
    const SweepRun* found = nullptr;
    for (const SweepRun& r : existing)
      if (r.axis_value == cells[i].value && r.seed == cells[i].seed) {
        found = &r;
        break;
      }
    if (found)
      slots[i] = *found;
    else
      todo.push_back(i);
  }

  // Completed rows are appended as they finish so an interrupted sweep can
  // resume; the canonical file is rewritten at the end.
  std::ofstream partial;
  if (!todo.empty()) {
    bool fresh = !(rc.resume && std::filesystem::exists(csv_path));
    partial.open(csv_path, fresh ? std::ios::binary
                                 : (std::ios::binary | std::ios::app));
    if (!partial)
      throw std::runtime_error("sweep: cannot open '" + csv_path + "'");
    if (fresh) partial << sweep_csv_header(axis_label) << std::flush;
  }

  std::mutex io;
  std::atomic<size_t> cursor{0};
  auto work = [&]() {
    for (;;) {
      size_t t = cursor.fetch_add(1);
      if (t >= todo.size()) return;
      size_t idx = todo[t];
      const Cell& c = cells[idx];
      SweepRun run;
      try {
        if (demos_axis) {
          Dataset sub = few_shot_subset(ds, static_cast<size_t>(c.value),
                                        derive_seed(c.seed, "subset"));
          run = run_experiment(ecfg, sub, ecfg.train.beta, c.seed, c.value);
        } else {
          run = run_experiment(ecfg, ds, c.value, c.seed, c.value);
        }
      } catch (const std::exception& ex) {
        run.axis_value = c.value;
        run.seed = c.seed;
        run.failed = true;
        run.error = ex.what();
      }
      std::lock_guard<std::mutex> lock(io);
      slots[idx] = run;
      if (run.failed) {
        std::cout << "[" << axis_label << "=" << c.value << " seed=" << c.seed
                  << "] FAILED: " << run.error << "\n";
      } else {
        partial << sweep_csv_row(axis_label, run) << std::flush;
        std::cout << "[" << axis_label << "=" << c.value << " seed=" << c.seed
                  << "] sr=" << run.success_rate << " mi=" << run.final_mi
                  << " epoch=" << run.selected_epoch << "\n";
      }
    }
  };

  size_t jobs = std::max<size_t>(1, rc.jobs);
  if (jobs <= 1 || todo.size() <= 1) {
    work();
  } else {
    jobs = std::min(jobs, todo.size());
    std::vector<std::thread> pool;
    for (size_t j = 0; j < jobs; ++j) pool.emplace_back(work);
    for (std::thread& th : pool) th.join();
  }
  if (partial.is_open()) partial.close();

  SweepResult result;
  result.axis_label = axis_label;
  result.seeds = seeds;
  for (const auto& slot : slots) result.runs.push_back(*slot);
  aggregate_sweep(result);
  for (const std::string& f : emit_sweep_artifacts(result, rc.out_dir, stem))
    std::cout << "wrote " << f << "\n";

  for (const SweepPoint& p : result.points) {
    std::cout << axis_label << "=" << p.axis_value
              << ": mean_sr=" << p.mean_success;
    if (p.has_sd) std::cout << " sd=" << p.sd_success;
    std::cout << " mean_mi=" << p.mean_final_mi << " seeds=" << p.seeds << "\n";
  }

  size_t ok = 0;
  for (const SweepRun& r : result.runs)
    if (!r.failed) ++ok;
  if (ok == 0) {
    std::cerr << "sweep: all " << result.runs.size() << " runs failed\n";
    return 3;
  }
  return 0;
}

// ---------------------------------------------------------------------------
// selfcheck

PolicyConfig tiny_policy_config(FusionKind fusion, uint64_t seed) {
  PolicyConfig pc;
  pc.obs_dim = 3;
  pc.state_dim = 2;
  pc.num_tasks = 2;
  pc.e_o = 3;
  pc.e_s = 2;
  pc.e_l = 2;
  pc.tau = 2;
  pc.fusion = fusion;
  pc.latent_dim = 4;
  pc.mlp_layers = 2;
  pc.mlp_hidden = 8;
  pc.attn_width = 8;
  pc.attn_layers = 1;
  pc.attn_heads = 2;
  pc.attn_ffn_hidden = 8;
  pc.head_hidden = 8;
  pc.action_dim = 2;
  pc.seed = seed;
  return pc;
}

std::vector<Window> tiny_windows(const PolicyConfig& pc, size_t n, Rng& rng) {
  std::vector<Window> ws;
  for (size_t i = 0; i < n; ++i) {
    Window w;
    w.task = i % pc.num_tasks;
    for (size_t t = 0; t < pc.tau; ++t) {
      std::vector<double> o(pc.obs_dim), s(pc.state_dim);
      for (double& v : o) v = rng.normal();
      for (double& v : s) v = rng.normal();
      w.obs.push_back(std::move(o));
      w.state.push_back(std::move(s));
    }
    ws.push_back(std::move(w));
  }
  return ws;
}

struct CheckResult {
  bool ok = false;
  std::string detail;
};

int cmd_selfcheck(const RunConfig& rc) {
  const std::set<std::string> known_ops = {
      "op_matmul",         "op_logsumexp",        "dv_constant",
      "dv_recompute",      "marginal_multiset",   "gradcheck_spatial_mlp",
      "gradcheck_temporal_rnn", "gradcheck_temporal_attn",
      "gradcheck_mi_penalty",   "gaussian_mi"};
  if (!rc.corrupt_op.empty() && !known_ops.count(rc.corrupt_op))
    throw std::runtime_error("selfcheck: unknown --corrupt-op '" +
                             rc.corrupt_op + "'");

  // Test hook: inject an error into the named check's computed value so the
  // report must flag exactly that op.
  auto nudge = [&rc](const std::string& op, double v) {
    return op == rc.corrupt_op ? v + 1e-2 : v;
  };

  auto policy_gradcheck = [&](FusionKind fusion,
                              const std::string& op) -> CheckResult {
    Policy policy(tiny_policy_config(fusion, derive_seed(rc.seed, op)));
    Rng rng(derive_seed(rc.seed, op + "_data"));
    std::vector<Window> ws = tiny_windows(policy.config(), 6, rng);
    std::vector<double> tvals(6 * policy.config().action_dim);
    for (double& v : tvals) v = rng.normal();
    Tensor targets = Tensor::from_values(6, policy.config().action_dim, tvals);
    ParamSet trainable = policy.trainable_params();
    GradcheckReport rep = gradcheck(
        trainable,
        [&] { return mse(policy.forward_batch(ws).actions, targets); }, 1e-4);
    double err = nudge(op, rep.max_rel_err);
    return {err <= 1e-4, "max_rel_err=" + format_double(err)};
  };

  std::vector<std::pair<std::string, std::function<CheckResult()>>> checks;

  checks.emplace_back("op_matmul", [&]() -> CheckResult {
    Tensor a = Tensor::from_values(2, 3, {1, -2, 3, 0.5, 4, -1});
    Tensor b = Tensor::from_values(3, 2, {2, 1, 0, -3, 1, 5});
    Tensor c = matmul(a, b);
    const double want[4] = {1 * 2 + -2 * 0 + 3 * 1,  1 * 1 + -2 * -3 + 3 * 5,
                            0.5 * 2 + 4 * 0 + -1 * 1, 0.5 * 1 + 4 * -3 + -1 * 5};
    double max_diff = 0.0;
    for (size_t i = 0; i < 4; ++i) {
      double got = i == 0 ? nudge("op_matmul", c.values()[i]) : c.values()[i];
      max_diff = std::max(max_diff, std::fabs(got - want[i]));
    }
    return {max_diff <= 1e-15, "max_diff=" + format_double(max_diff)};
  });

  checks.emplace_back("op_logsumexp", [&]() -> CheckResult {
    Rng rng(derive_seed(rc.seed, "lse"));
    std::vector<double> v(64);
    for (double& x : v) x = 10.0 * rng.normal();
    Tensor t = Tensor::from_values(64, 1, v);
    double got = nudge("op_logsumexp", logsumexp(t).item());
    double m = *std::max_element(v.begin(), v.end());
    double acc = 0.0;
    for (double x : v) acc += std::exp(x - m);
    double want = m + std::log(acc);
    return {std::fabs(got - want) <= 1e-12,
            "abs_diff=" + format_double(std::fabs(got - want))};
  });

  checks.emplace_back("dv_constant", [&]() -> CheckResult {
    std::vector<double> joint(32, 1.7), marg(32, 1.7);
    double got = nudge("dv_constant", dv_bound(joint, marg).value);
    return {got == 0.0, "value=" + format_double(got)};
  });

  checks.emplace_back("dv_recompute", [&]() -> CheckResult {
    Rng rng(derive_seed(rc.seed, "dv"));
    std::vector<double> joint(48), marg(48);
    for (double& x : joint) x = rng.normal();
    for (double& x : marg) x = rng.normal();
    double got = nudge("dv_recompute", dv_bound(joint, marg).value);
    double jm = 0.0, me = 0.0;
    for (double x : joint) jm += x;
    jm /= 48.0;
    for (double x : marg) me += std::exp(x);
    double want = jm - std::log(me / 48.0);
    return {std::fabs(got - want) <= 1e-12,
            "abs_diff=" + format_double(std::fabs(got - want))};
  });

  checks.emplace_back("marginal_multiset", [&]() -> CheckResult {
    Rng rng(derive_seed(rc.seed, "multiset"));
    std::vector<double> xv(8 * 3), zv(8 * 3);
    for (double& v : xv) v = rng.normal();
    for (double& v : zv) v = rng.normal();
    Tensor x = Tensor::from_values(8, 3, xv);
    Tensor z = Tensor::from_values(8, 3, zv);
    auto [xs, zs] = shuffle_marginals(x, z, derive_seed(rc.seed, "perm"));
    auto rows = [](const Tensor& t) {
      std::vector<std::vector<double>> r;
      for (size_t i = 0; i < t.rows(); ++i)
        r.emplace_back(t.values().begin() + static_cast<long>(i * t.cols()),
                       t.values().begin() + static_cast<long>((i + 1) * t.cols()));
      std::sort(r.begin(), r.end());
      return r;
    };
    bool same_x = xs.values() == x.values();
    bool z_multiset = rows(zs) == rows(z);
    bool moved = zs.values() != z.values();
    bool ok = same_x && z_multiset && moved;
    if (rc.corrupt_op == "marginal_multiset") ok = false;
    return {ok, std::string("x_fixed=") + (same_x ? "1" : "0") +
                    " z_multiset=" + (z_multiset ? "1" : "0") +
                    " z_permuted=" + (moved ? "1" : "0")};
  });

  checks.emplace_back("gradcheck_spatial_mlp", [&] {
    return policy_gradcheck(FusionKind::spatial_mlp, "gradcheck_spatial_mlp");
  });
  checks.emplace_back("gradcheck_temporal_rnn", [&] {
    return policy_gradcheck(FusionKind::temporal_rnn, "gradcheck_temporal_rnn");
  });
  checks.emplace_back("gradcheck_temporal_attn", [&] {
    return policy_gradcheck(FusionKind::temporal_attn,
                            "gradcheck_temporal_attn");
  });

  checks.emplace_back("gradcheck_mi_penalty", [&]() -> CheckResult {
    Policy policy(tiny_policy_config(FusionKind::spatial_mlp,
                                     derive_seed(rc.seed, "mi_pen")));
    Rng rng(derive_seed(rc.seed, "mi_pen_data"));
    std::vector<Window> ws = tiny_windows(policy.config(), 6, rng);
    MineConfig mc;
    mc.hidden = 8;
    mc.layers = 3;
    MineEstimator est(policy.config().x_flat_dim(), policy.config().latent_dim,
                      mc, derive_seed(rc.seed, "mi_pen_mine"));
    ParamSet trainable = policy.trainable_params();
    GradcheckReport rep = gradcheck(
        trainable,
        [&] {
          PolicyForward f = policy.forward_batch(ws);
          return est.mi_penalty(f.x_flat, f.z, derive_seed(rc.seed, "pen_perm"));
        },
        1e-4);
    double err = nudge("gradcheck_mi_penalty", rep.max_rel_err);
    return {err <= 1e-4, "max_rel_err=" + format_double(err)};
  });

  if (!rc.fast)
    checks.emplace_back("gaussian_mi", [&]() -> CheckResult {
      MineConfig mc;
      mc.hidden = 64;
      mc.layers = 4;
      mc.lr = 1e-3;
      double est = estimate_gaussian_mi(0.8, 1, 800, 256, mc,
                                        derive_seed(rc.seed, "gauss_check"));
      double gap = std::fabs(nudge("gaussian_mi", est) -
                             gaussian_mi_oracle(0.8, 1));
      return {gap <= 0.08, "abs_gap=" + format_double(gap)};
    });

  size_t passed = 0;
  for (const auto& [name, fn] : checks) {
    CheckResult r = fn();
    std::cout << (r.ok ? "PASS " : "FAIL ") << name << " (" << r.detail
              << ")\n";
    if (r.ok) ++passed;
  }
  std::cout << "selfcheck: " << passed << "/" << checks.size() << " passed\n";
  return passed == checks.size() ? 0 : 3;
}

// ---------------------------------------------------------------------------
// option wiring

void add_common_options(CLI::App* cmd, RunConfig& rc) {
  // --config lives on the root app (CLI11 only processes the root config),
  // so unmatched flags like it must fall through to the parent.
  cmd->fallthrough(true);
  cmd->add_option("--out", rc.out_dir,
                  "output directory (default: $BCIB_OUT or '.')");
  cmd->add_option("--seed", rc.seed,
                  "master seed; every random stream derives from it");
}

void add_env_options(CLI::App* cmd, RunConfig& rc) {
  cmd->add_option("--env", rc.env, "environment")
      ->check(CLI::IsMember({"reach", "pick_place"}));
  cmd->add_option("--noise-dims", rc.noise_dims, "nuisance observation dims");
  cmd->add_option("--noise-kind", rc.noise_kind, "nuisance generator")
      ->check(CLI::IsMember(
          {"iid_gaussian", "slow_drift", "copy_of_state_with_noise"}));
  cmd->add_option("--num-tasks", rc.num_tasks, "number of goals/tasks")
      ->check(CLI::PositiveNumber);
}

void add_arch_options(CLI::App* cmd, RunConfig& rc) {
  cmd->add_option("--fusion", rc.fusion, "fusion module")
      ->check(CLI::IsMember({"spatial_mlp", "temporal_rnn", "temporal_attn"}));
  cmd->add_option("--tau", rc.tau, "history length")->check(CLI::PositiveNumber);
  cmd->add_option("--embed-obs", rc.e_o, "observation encoder width")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--embed-state", rc.e_s, "state encoder width")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--embed-lang", rc.e_l, "language embedding width")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--latent-dim", rc.latent_dim, "fusion latent width")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--mlp-layers", rc.mlp_layers, "spatial MLP depth")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--mlp-hidden", rc.mlp_hidden, "spatial MLP width")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--attn-width", rc.attn_width, "attention model width")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--attn-layers", rc.attn_layers, "attention blocks")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--attn-heads", rc.attn_heads, "attention heads")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--attn-ffn-hidden", rc.attn_ffn_hidden,
                  "attention feed-forward width")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--head-hidden", rc.head_hidden, "policy head width")
      ->check(CLI::PositiveNumber);
}

void add_train_options(CLI::App* cmd, RunConfig& rc) {
  cmd->add_option("--beta", rc.beta, "IB Lagrange multiplier (0 = vanilla BC)")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--epochs", rc.epochs, "training epochs")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--batch-size", rc.batch_size, "minibatch size")
      ->check(CLI::Range(static_cast<size_t>(2),
                         std::numeric_limits<size_t>::max()));
  cmd->add_option("--lr", rc.lr, "policy learning rate")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--weight-decay", rc.weight_decay, "AdamW weight decay")
      ->check(CLI::NonNegativeNumber);
  cmd->add_option("--schedule", rc.schedule, "learning-rate schedule")
      ->check(CLI::IsMember({"cosine", "constant"}));
  cmd->add_option("--warmup-steps", rc.warmup_steps, "linear warmup steps");
  cmd->add_option("--clip-norm", rc.clip_norm, "global gradient-norm clip")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--model-selection", rc.model_selection,
                  "checkpoint selection rule")
      ->check(CLI::IsMember({"best_eval", "final_epoch"}));
  cmd->add_option("--eval-every", rc.eval_every,
                  "evaluate every N epochs (0 disables)");
  cmd->add_option("--eval-episodes", rc.eval_episodes,
                  "rollout episodes per evaluation (0 disables)");
  cmd->add_option("--eval-bank", rc.eval_bank, "evaluation seed bank");
}

void add_mine_options(CLI::App* cmd, RunConfig& rc) {
  cmd->add_option("--mine-hidden", rc.mine_hidden, "critic hidden width")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--mine-layers", rc.mine_layers, "critic layers")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--mine-lr", rc.mine_lr, "critic learning rate")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--ema-decay", rc.ema_decay,
                  "bias-correction EMA decay")
      ->check(CLI::Range(0.0, 1.0));
  cmd->add_option("--score-clip", rc.score_clip, "critic score clamp")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--critic-steps", rc.critic_steps,
                  "critic steps per policy step")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--critic-loss-weight", rc.critic_loss_weight,
                  "critic loss scale")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--ema-correction", rc.ema_correction,
                  "EMA-corrected marginal gradient (true/false)");
}

void add_probe_options(CLI::App* cmd, RunConfig& rc) {
  cmd->add_option("--probe-hidden", rc.probe_hidden, "probe hidden width")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--probe-layers", rc.probe_layers, "probe layers")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--probe-lr", rc.probe_lr, "probe learning rate")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--probe-steps", rc.probe_steps, "probe training steps")
      ->check(CLI::PositiveNumber);
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  RunConfig rc;
  if (const char* env_out = std::getenv("BCIB_OUT")) rc.out_dir = env_out;

  CLI::App app{"Information-bottleneck-regularized behavior cloning"};
  app.option_defaults()->always_capture_default(true);
  app.set_config("--config", "",
                 "TOML config file; keys live in a [subcommand] section and "
                 "command-line flags override file values");
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.require_subcommand(1);

  CLI::App* gen = app.add_subcommand(
      "gen-data", "Generate an expert demonstration dataset (JSONL)");
  add_common_options(gen, rc);
  add_env_options(gen, rc);
  gen->add_option("--demos", rc.demos, "demonstrations to record")
      ->check(CLI::PositiveNumber);
  gen->add_option("--out-file", rc.out_file,
                  "dataset filename (default derived from the spec)");

  CLI::App* train = app.add_subcommand(
      "train", "Fit a policy with the BC-IB objective; write checkpoint + report");
  add_common_options(train, rc);
  train->add_option("--data", rc.data_file, "training dataset (JSONL)")
      ->required()
      ->check(CLI::ExistingFile);
  add_arch_options(train, rc);
  add_train_options(train, rc);
  add_mine_options(train, rc);
  train->add_option("--ckpt-file", rc.ckpt_out, "checkpoint filename");
  train->add_option("--report-file", rc.report_file, "training report CSV");
  train->add_flag("--mi-curve", rc.mi_curve,
                  "also emit mi_curve.csv and mi_curve.svg");

  CLI::App* ev = app.add_subcommand(
      "eval", "Roll out a checkpoint (or the scripted expert) in an environment");
  add_common_options(ev, rc);
  add_env_options(ev, rc);
  ev->add_option("--ckpt", rc.ckpt_file, "policy checkpoint")
      ->check(CLI::ExistingFile);
  ev->add_option("--episodes", rc.episodes, "evaluation episodes")
      ->check(CLI::PositiveNumber);
  ev->add_option("--seed-bank", rc.seed_bank, "initial-condition bank id");
  ev->add_flag("--expert", rc.expert, "evaluate the scripted expert instead");
  ev->add_option("--csv-file", rc.csv_file, "result CSV filename");

  CLI::App* est = app.add_subcommand(
      "estimate-mi",
      "DV estimate: --gaussian oracle-validation mode or checkpoint probe mode");
  add_common_options(est, rc);
  est->add_option("--gaussian", rc.gaussian,
                  "rho dims: estimate MI of synthetic correlated Gaussians")
      ->expected(2);
  est->add_option("--steps", rc.est_steps, "training steps (Gaussian mode)")
      ->check(CLI::PositiveNumber);
  est->add_option("--batch", rc.est_batch, "batch size (Gaussian mode)")
      ->check(CLI::Range(static_cast<size_t>(2),
                         std::numeric_limits<size_t>::max()));
  est->add_option("--hidden", rc.est_hidden, "estimator hidden width")
      ->check(CLI::PositiveNumber);
  est->add_option("--layers", rc.est_layers, "estimator layers")
      ->check(CLI::PositiveNumber);
  est->add_option("--lr", rc.est_lr, "estimator learning rate")
      ->check(CLI::PositiveNumber);
  est->add_option("--ckpt", rc.ckpt_file, "policy checkpoint (probe mode)")
      ->check(CLI::ExistingFile);
  est->add_option("--data", rc.data_file, "dataset (probe mode)")
      ->check(CLI::ExistingFile);
  add_probe_options(est, rc);

  CLI::App* sweep = app.add_subcommand(
      "sweep", "Sweeps over beta or demo counts (CSV + SVG)");
  add_common_options(sweep, rc);
  sweep->add_option("--data", rc.data_file, "parent dataset (JSONL)")
      ->required()
      ->check(CLI::ExistingFile);
  sweep->add_option("--axis", rc.axis, "sweep axis")
      ->check(CLI::IsMember({"beta", "demos"}));
  sweep->add_option("--values", rc.values, "comma-separated axis values")
      ->required()
      ->delimiter(',');
  sweep->add_option("--seeds", rc.num_seeds, "seeds per value (1..N)")
      ->check(CLI::PositiveNumber);
  sweep->add_option("--jobs", rc.jobs, "parallel runs")
      ->check(CLI::PositiveNumber);
  sweep->add_option("--stem", rc.stem, "artifact name stem");
  sweep->add_option("--resume", rc.resume,
                    "reuse completed (value, seed) cells from an existing CSV "
                    "(true/false)");
  add_arch_options(sweep, rc);
  add_train_options(sweep, rc);
  add_mine_options(sweep, rc);
  add_probe_options(sweep, rc);

  CLI::App* self = app.add_subcommand(
      "selfcheck", "Oracle-checked numerics suite; exit 0 iff all pass");
  add_common_options(self, rc);
  self->add_flag("--fast", rc.fast, "skip the Gaussian convergence check");
  self->add_option("--corrupt-op", rc.corrupt_op,
                   "fault-injection hook: force the named check to fail");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  // All subcommands bind options into one shared RunConfig, so a config file
  // that sets keys for a command other than the one being run would silently
  // change shared fields without showing up in the effective-config echo.
  for (const CLI::App* other : {gen, train, ev, est, sweep, self}) {
    if (other == sub) continue;
    for (const CLI::Option* opt : other->get_options()) {
      if (opt->count() > 0) {
        std::cerr << "error: config file sets [" << other->get_name()
                  << "] keys, but the command being run is '" << sub->get_name()
                  << "'\n";
        return 2;
      }
    }
  }
  std::cout << "# effective config: " << sub->get_name() << "\n"
            << "[" << sub->get_name() << "]\n"
            << sub->config_to_str(/*default_also=*/true,
                                  /*write_description=*/false);

  try {
    if (sub == gen) return cmd_gen_data(rc);
    if (sub == train) return cmd_train(rc);
    if (sub == ev) return cmd_eval(rc);
    if (sub == est) return cmd_estimate_mi(rc);
    if (sub == sweep) return cmd_sweep(rc);
    return cmd_selfcheck(rc);
  } catch (const numerical_error& e) {
    std::cerr << "numerical abort: " << e.what() << "\n";
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace bcib
