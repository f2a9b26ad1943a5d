#include "bcib/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace bcib {

namespace {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

EvalResult evaluate_fn(const RolloutActFn& act, const EnvSpec& spec, size_t tau,
                       size_t episodes, uint64_t seed_bank) {
  if (episodes < 1) throw std::runtime_error("evaluate: episodes must be >= 1");
  if (tau < 1) throw std::runtime_error("evaluate: tau must be >= 1");
  EvalResult result;
  result.episodes = episodes;
  result.seed_bank = seed_bank;
  std::map<size_t, std::pair<size_t, size_t>> per_task;  // task -> (success, total)
  size_t total_steps = 0;

  for (size_t e = 0; e < episodes; ++e) {
    size_t task = e % spec.num_tasks;
    uint64_t episode_seed = derive_seed(seed_bank, "episode", e);
    EnvState state = env_reset(spec, task, episode_seed);
    Rng noise_rng(derive_seed(episode_seed, "nuisance"));
    std::vector<std::vector<double>> obs_hist, state_hist;

    while (!state.done) {
      obs_hist.push_back(make_observation(spec, state, noise_rng));
      state_hist.push_back(proprio(spec, state));
      Window w;
      w.task = task;
      size_t t = obs_hist.size() - 1;
      for (size_t offset = 0; offset < tau; ++offset) {
        size_t want = t + 1 + offset;
        size_t idx = want >= tau ? want - tau : 0;
        w.obs.push_back(obs_hist[idx]);
        w.state.push_back(state_hist[idx]);
      }
      env_step(spec, state, act(w, state));
    }
    total_steps += state.steps;
    per_task[task].second += 1;
    if (state.success) {
      result.successes += 1;
      per_task[task].first += 1;
    }
  }
  result.success_rate = static_cast<double>(result.successes) /
                        static_cast<double>(episodes);
  result.mean_episode_length =
      static_cast<double>(total_steps) / static_cast<double>(episodes);
  for (const auto& [task, counts] : per_task)
    result.per_task_success[task] = static_cast<double>(counts.first) /
                                    static_cast<double>(counts.second);
  return result;
}

EvalResult evaluate(const Policy& policy, const EnvSpec& spec, size_t episodes,
                    uint64_t seed_bank) {
  RolloutActFn act = [&policy](const Window& w, const EnvState&) {
    return policy.act(w);
  };
  return evaluate_fn(act, spec, policy.config().tau, episodes, seed_bank);
}

double track_mi(const Policy& policy, MineEstimator& probe,
                const Dataset& dataset, size_t steps, uint64_t seed) {
  if (steps < 1) throw std::runtime_error("track_mi: steps must be >= 1");
  std::vector<Window> windows;
  std::vector<std::vector<double>> targets;
  dataset_windows(dataset, policy.config().tau, windows, targets);
  if (windows.size() < 2)
    throw std::runtime_error("track_mi: dataset yields fewer than 2 windows");

  PolicyForward fwd = policy.forward_batch(windows);
  Tensor x_all = fwd.x_flat.detached();
  Tensor z_all = fwd.z.detached();
  size_t n = x_all.rows();
  size_t batch = std::min<size_t>(256, n);

  Rng rng(derive_seed(seed, "probe_batch"));
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), size_t{0});

  size_t tail = std::max<size_t>(1, steps / 10);
  double tail_sum = 0.0;
  for (size_t s = 0; s < steps; ++s) {
    rng.shuffle(order);
    std::vector<size_t> idx(order.begin(), order.begin() + batch);
    Tensor x = permute_rows(x_all, idx);
    Tensor z = permute_rows(z_all, idx);
    double dv = probe.critic_step(x, z, derive_seed(seed, "probe_perm", s));
    if (s + tail >= steps) tail_sum += dv;
  }
  return tail_sum / static_cast<double>(tail);
}

SweepRun run_experiment(const ExperimentConfig& cfg, const Dataset& dataset,
                        double beta, uint64_t seed, double axis_value,
                        TrainReport* report_out) {
  PolicyConfig pc = cfg.policy;
  pc.obs_dim = dataset.env_spec.obs_dim();
  pc.state_dim = dataset.env_spec.state_dim();
  pc.num_tasks = dataset.env_spec.num_tasks;
  pc.action_dim = dataset.env_spec.action_dim();
  pc.seed = derive_seed(seed, "policy");  // identical across beta values

  TrainConfig tc = cfg.train;
  tc.beta = beta;
  tc.seed = seed;

  Policy policy(pc);
  std::optional<MineEstimator> mine;
  if (beta != 0.0)
    mine.emplace(pc.x_flat_dim(), pc.latent_dim, cfg.mine,
                 derive_seed(seed, "mine"));

  const EnvSpec& spec = dataset.env_spec;
  EvalFn eval_fn = [&](const Policy& p) {
    return evaluate(p, spec, cfg.eval_episodes, cfg.eval_bank).success_rate;
  };
  TrainReport report =
      fit(policy, mine ? &*mine : nullptr, dataset, tc, eval_fn);

  EvalResult er = evaluate(policy, spec, cfg.eval_episodes, cfg.eval_bank);
  MineEstimator probe(pc.x_flat_dim(), pc.latent_dim, cfg.probe,
                      derive_seed(seed, "probe"));
  double final_mi = track_mi(policy, probe, dataset, cfg.probe_steps,
                             derive_seed(seed, "probe_batches"));

  if (report_out) *report_out = report;
  SweepRun run;
  run.axis_value = axis_value;
  run.seed = seed;
  run.success_rate = er.success_rate;
  run.final_mi = final_mi;
  run.selected_epoch = report.selected_epoch;
  return run;
}

void aggregate_sweep(SweepResult& result) {
  result.points.clear();
  std::vector<double> axis_order;
  for (const SweepRun& r : result.runs)
    if (std::find(axis_order.begin(), axis_order.end(), r.axis_value) ==
        axis_order.end())
      axis_order.push_back(r.axis_value);

  for (double v : axis_order) {
    std::vector<double> srs, mis;
    for (const SweepRun& r : result.runs)
      if (!r.failed && r.axis_value == v) {
        srs.push_back(r.success_rate);
        mis.push_back(r.final_mi);
      }
    if (srs.empty()) continue;
    SweepPoint p;
    p.axis_value = v;
    p.seeds = srs.size();
    p.mean_success = std::accumulate(srs.begin(), srs.end(), 0.0) /
                     static_cast<double>(srs.size());
    p.mean_final_mi = std::accumulate(mis.begin(), mis.end(), 0.0) /
                      static_cast<double>(mis.size());
    if (srs.size() >= 2) {
      double sq = 0.0;
      for (double s : srs) sq += (s - p.mean_success) * (s - p.mean_success);
      p.sd_success = std::sqrt(sq / static_cast<double>(srs.size() - 1));
      p.has_sd = true;
    }
    result.points.push_back(p);
  }
}

SweepResult sweep_beta(const ExperimentConfig& cfg, const Dataset& dataset,
                       const std::vector<double>& betas,
                       const std::vector<uint64_t>& seeds) {
  if (betas.empty()) throw std::runtime_error("sweep_beta: betas must be nonempty");
  SweepResult result;
  result.axis_label = "beta";
  result.seeds = seeds;
  for (double beta : betas) {
    for (uint64_t seed : seeds) {
      SweepRun run;
      try {
        run = run_experiment(cfg, dataset, beta, seed, beta);
      } catch (const std::exception& ex) {
        run.axis_value = beta;
        run.seed = seed;
        run.failed = true;
        run.error = ex.what();
      }
      result.runs.push_back(std::move(run));
    }
  }
  aggregate_sweep(result);
  return result;
}

SweepResult sweep_few_shot(const ExperimentConfig& cfg, const Dataset& dataset,
                           const std::vector<size_t>& demo_counts,
                           const std::vector<uint64_t>& seeds) {
  SweepResult result;
  result.axis_label = "num_demos";
  result.seeds = seeds;
  for (size_t k : demo_counts) {
    for (uint64_t seed : seeds) {
      SweepRun run;
      try {
        Dataset sub = few_shot_subset(dataset, k, derive_seed(seed, "subset"));
        run = run_experiment(cfg, sub, cfg.train.beta, seed,
                             static_cast<double>(k));
      } catch (const std::exception& ex) {
        run.axis_value = static_cast<double>(k);
        run.seed = seed;
        run.failed = true;
        run.error = ex.what();
      }
      result.runs.push_back(std::move(run));
    }
  }
  aggregate_sweep(result);
  return result;
}

namespace {

// Minimal polyline chart; coordinates rounded for readability, data values
// printed full precision in the CSV instead.
std::string svg_line_chart(const std::string& title, const std::string& x_label,
                           const std::string& y_label,
                           const std::vector<std::string>& x_ticks,
                           const std::vector<double>& ys) {
  const double width = 480, height = 320;
  const double ml = 60, mr = 20, mt = 40, mb = 50;
  const double pw = width - ml - mr, ph = height - mt - mb;
  double y_min = ys.empty() ? 0.0 : *std::min_element(ys.begin(), ys.end());
  double y_max = ys.empty() ? 1.0 : *std::max_element(ys.begin(), ys.end());
  if (y_max - y_min < 1e-12) {
    y_min -= 0.5;
    y_max += 0.5;
  }
  double pad = 0.05 * (y_max - y_min);
  y_min -= pad;
  y_max += pad;

  auto fx = [&](size_t i) {
    if (ys.size() <= 1) return ml + pw / 2;
    return ml + pw * static_cast<double>(i) / static_cast<double>(ys.size() - 1);
  };
  auto fy = [&](double v) { return mt + ph * (1.0 - (v - y_min) / (y_max - y_min)); };
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width
      << "\" height=\"" << height << "\" viewBox=\"0 0 " << width << " "
      << height << "\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<text x=\"" << width / 2 << "\" y=\"20\" text-anchor=\"middle\" "
         "font-family=\"sans-serif\" font-size=\"14\">" << title << "</text>\n";
  // axes
  svg << "<line x1=\"" << ml << "\" y1=\"" << mt << "\" x2=\"" << ml
      << "\" y2=\"" << mt + ph << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << ml << "\" y1=\"" << mt + ph << "\" x2=\"" << ml + pw
      << "\" y2=\"" << mt + ph << "\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << ml + pw / 2 << "\" y=\"" << height - 10
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
         "font-size=\"12\">" << x_label << "</text>\n";
  svg << "<text x=\"15\" y=\"" << mt + ph / 2
      << "\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"12\" "
         "transform=\"rotate(-90 15 " << mt + ph / 2 << ")\">" << y_label
      << "</text>\n";
  // y tick labels at min/max
  svg << "<text x=\"" << ml - 6 << "\" y=\"" << fy(y_min + pad) + 4
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">"
      << num(y_min + pad) << "</text>\n";
  svg << "<text x=\"" << ml - 6 << "\" y=\"" << fy(y_max - pad) + 4
      << "\" text-anchor=\"end\" font-family=\"sans-serif\" font-size=\"10\">"
      << num(y_max - pad) << "</text>\n";

  std::ostringstream pts;
  for (size_t i = 0; i < ys.size(); ++i) {
    pts << num(fx(i)) << "," << num(fy(ys[i])) << " ";
    svg << "<circle cx=\"" << num(fx(i)) << "\" cy=\"" << num(fy(ys[i]))
        << "\" r=\"3\" fill=\"steelblue\"/>\n";
    if (i < x_ticks.size())
      svg << "<text x=\"" << num(fx(i)) << "\" y=\"" << mt + ph + 16
          << "\" text-anchor=\"middle\" font-family=\"sans-serif\" "
             "font-size=\"10\">" << x_ticks[i] << "</text>\n";
  }
  svg << "<polyline points=\"" << pts.str()
      << "\" fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\"/>\n";
  svg << "</svg>\n";
  return svg.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("emit_artifacts: cannot open '" + path + "'");
  os.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!os) throw std::runtime_error("emit_artifacts: write to '" + path + "' failed");
}

std::string axis_value_string(const std::string& axis_label, double v) {
  if (axis_label == "num_demos")
    return std::to_string(static_cast<long long>(v));
  return format_double(v);
}

}  // namespace

std::string sweep_csv_header(const std::string& axis_label) {
  return axis_label + ",seed,success_rate,final_mi,selected_epoch\n";
}

std::string sweep_csv_row(const std::string& axis_label, const SweepRun& run) {
  std::string row = axis_value_string(axis_label, run.axis_value);
  row += "," + std::to_string(run.seed);
  row += "," + format_double(run.success_rate);
  row += "," + format_double(run.final_mi);
  row += "," + std::to_string(run.selected_epoch) + "\n";
  return row;
}

std::vector<std::string> emit_sweep_artifacts(const SweepResult& result,
                                              const std::string& out_dir,
                                              const std::string& stem) {
  std::filesystem::create_directories(out_dir);
  std::vector<std::string> files;

  std::string csv = sweep_csv_header(result.axis_label);
  for (const SweepRun& r : result.runs) {
    if (r.failed) continue;
    csv += sweep_csv_row(result.axis_label, r);
  }
  std::string csv_path = out_dir + "/" + stem + ".csv";
  write_file(csv_path, csv);
  files.push_back(csv_path);

  if (!result.points.empty()) {
    std::vector<std::string> ticks;
    std::vector<double> ys;
    for (const SweepPoint& p : result.points) {
      ticks.push_back(axis_value_string(result.axis_label, p.axis_value));
      ys.push_back(p.mean_success);
    }
    std::string svg_path = out_dir + "/" + stem + ".svg";
    write_file(svg_path, svg_line_chart("mean success vs " + result.axis_label,
                                        result.axis_label, "success rate",
                                        ticks, ys));
    files.push_back(svg_path);
  }
  return files;
}

std::vector<std::string> emit_mi_curve(const TrainReport& report,
                                       const std::string& out_dir) {
  std::filesystem::create_directories(out_dir);
  std::vector<std::string> files;

  std::string csv = "epoch,mi_estimate,bc_loss,success_rate\n";
  for (const EpochRecord& r : report.epochs) {
    csv += std::to_string(r.epoch);
    csv += "," + format_double(r.mi_estimate);
    csv += "," + format_double(r.bc_loss);
    csv += ",";
    if (r.has_eval) csv += format_double(r.eval_success_rate);
    csv += "\n";
  }
  std::string csv_path = out_dir + "/mi_curve.csv";
  write_file(csv_path, csv);
  files.push_back(csv_path);

  if (!report.epochs.empty()) {
    std::vector<std::string> ticks;
    std::vector<double> ys;
    for (const EpochRecord& r : report.epochs) {
      ticks.push_back(report.epochs.size() <= 12 ? std::to_string(r.epoch) : "");
      ys.push_back(r.mi_estimate);
    }
    std::string svg_path = out_dir + "/mi_curve.svg";
    write_file(svg_path, svg_line_chart("I(X;Z) during training", "epoch",
                                        "mi estimate (nats)", ticks, ys));
    files.push_back(svg_path);
  }
  return files;
}

std::vector<SweepRun> load_sweep_rows(const std::string& file,
                                      bool skip_malformed) {
  std::ifstream is(file);
  if (!is) throw std::runtime_error("load_sweep_rows: cannot open '" + file + "'");
  std::string line;
  if (!std::getline(is, line))
    throw std::runtime_error("load_sweep_rows: empty file '" + file + "'");
  std::vector<SweepRun> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    SweepRun r;
    try {
      if (fields.size() != 5) throw std::invalid_argument("field count");
      r.axis_value = std::stod(fields[0]);
      r.seed = std::stoull(fields[1]);
      r.success_rate = std::stod(fields[2]);
      r.final_mi = std::stod(fields[3]);
      r.selected_epoch = std::stoull(fields[4]);
    } catch (const std::logic_error&) {
      if (skip_malformed) continue;
      throw std::runtime_error("load_sweep_rows: malformed row '" + line + "'");
    }
    rows.push_back(r);
  }
  return rows;
}

}  // namespace bcib
