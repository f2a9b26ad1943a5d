#include "bcib/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <stdexcept>

#include "json.hpp"

namespace bcib {

Trajectory rollout_expert(const EnvSpec& spec, size_t task, uint64_t seed) {
  EnvState state = env_reset(spec, task, seed);
  Rng noise_rng(derive_seed(seed, "nuisance"));
  Trajectory traj;
  traj.task_label = task;
  while (!state.done) {
    traj.observations.push_back(make_observation(spec, state, noise_rng));
    traj.proprio.push_back(proprio(spec, state));
    std::vector<double> action = expert_policy(spec, state);
    traj.actions.push_back(action);
    env_step(spec, state, std::move(action));
  }
  traj.success = state.success;
  return traj;
}

Dataset generate_dataset(const EnvSpec& spec, size_t num_demos, uint64_t seed) {
  spec.validate();
  if (num_demos < 1)
    throw std::runtime_error("generate_dataset: num_demos must be >= 1");
  Dataset ds;
  ds.env_spec = spec;
  ds.seed = seed;
  size_t failures = 0;
  for (size_t i = 0; i < num_demos; ++i) {
    size_t task = i % spec.num_tasks;
    uint64_t demo_seed = derive_seed(seed, "demo", i);
    Trajectory traj;
    for (size_t attempt = 0;; ++attempt) {
      if (attempt >= 100)
        throw std::runtime_error("generate_dataset: demo " + std::to_string(i) +
                                 " failed 100 attempts");
      traj = rollout_expert(spec, task, derive_seed(demo_seed, "attempt", attempt));
      if (traj.success) break;
      failures += 1;
      double rate = static_cast<double>(failures) /
                    static_cast<double>(i + 1 + failures);
      if (rate > 0.01)
        throw std::runtime_error(
            "generate_dataset: expert failure rate above 1% (" +
            std::to_string(failures) + " failures); environment misconfigured");
    }
    ds.trajectories.push_back(std::move(traj));
  }
  return ds;
}

Dataset few_shot_subset(const Dataset& dataset, size_t k, uint64_t seed) {
  if (k < 1) throw std::runtime_error("few_shot_subset: k must be >= 1");
  std::map<size_t, std::vector<size_t>> by_label;
  for (size_t i = 0; i < dataset.trajectories.size(); ++i)
    by_label[dataset.trajectories[i].task_label].push_back(i);

  std::vector<size_t> selected;
  for (auto& [label, indices] : by_label) {
    if (k > indices.size())
      throw std::runtime_error("few_shot_subset: k = " + std::to_string(k) +
                               " exceeds the " + std::to_string(indices.size()) +
                               " demos with label " + std::to_string(label));
    Rng rng(derive_seed(seed, "fewshot", label));
    std::vector<size_t> pool = indices;
    rng.shuffle(pool);
    selected.insert(selected.end(), pool.begin(), pool.begin() + k);
  }
  std::sort(selected.begin(), selected.end());

  Dataset out;
  out.env_spec = dataset.env_spec;
  out.seed = dataset.seed;
  out.split = "fewshot";
  for (size_t i : selected) out.trajectories.push_back(dataset.trajectories[i]);
  return out;
}

namespace {

void append_double(std::string& out, double v) {
  if (!std::isfinite(v))
    throw std::runtime_error("save_dataset: non-finite value");
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out += buf;
}

void append_matrix(std::string& out, const std::vector<std::vector<double>>& m) {
  out += '[';
  for (size_t i = 0; i < m.size(); ++i) {
    if (i) out += ',';
    out += '[';
    for (size_t j = 0; j < m[i].size(); ++j) {
      if (j) out += ',';
      append_double(out, m[i][j]);
    }
    out += ']';
  }
  out += ']';
}

std::vector<std::vector<double>> parse_matrix(const nlohmann::json& j) {
  std::vector<std::vector<double>> m;
  for (const auto& row : j) m.push_back(row.get<std::vector<double>>());
  return m;
}

}  // namespace

void save_dataset(const Dataset& dataset, const std::string& file) {
  std::string out;
  out += "{\"version\":1,\"seed\":" + std::to_string(dataset.seed);
  out += ",\"split\":\"" + dataset.split + "\"";
  const EnvSpec& s = dataset.env_spec;
  out += ",\"env_spec\":{\"kind\":\"" + env_kind_name(s.kind) + "\"";
  out += ",\"dt\":";
  append_double(out, s.dt);
  out += ",\"a_max\":";
  append_double(out, s.a_max);
  out += ",\"max_steps\":" + std::to_string(s.max_steps);
  out += ",\"success_eps\":";
  append_double(out, s.success_eps);
  out += ",\"noise_dims\":" + std::to_string(s.noise_dims);
  out += ",\"noise_kind\":\"" + noise_kind_name(s.noise_kind) + "\"";
  out += ",\"num_tasks\":" + std::to_string(s.num_tasks);
  out += "}}\n";

  for (const Trajectory& t : dataset.trajectories) {
    out += "{\"obs\":";
    append_matrix(out, t.observations);
    out += ",\"state\":";
    append_matrix(out, t.proprio);
    out += ",\"label\":" + std::to_string(t.task_label);
    out += ",\"actions\":";
    append_matrix(out, t.actions);
    out += ",\"success\":";
    out += t.success ? "true" : "false";
    out += "}\n";
  }

  std::ofstream os(file, std::ios::binary);
  if (!os) throw std::runtime_error("save_dataset: cannot open '" + file + "'");
  os.write(out.data(), static_cast<std::streamsize>(out.size()));
  if (!os) throw std::runtime_error("save_dataset: write to '" + file + "' failed");
}

Dataset load_dataset(const std::string& file) {
  std::ifstream is(file);
  if (!is) throw std::runtime_error("load_dataset: cannot open '" + file + "'");
  std::string line;
  if (!std::getline(is, line))
    throw std::runtime_error("load_dataset: empty file '" + file + "'");

  nlohmann::json header = nlohmann::json::parse(line);
  if (header.at("version").get<int>() != 1)
    throw std::runtime_error("load_dataset: unsupported version");
  Dataset ds;
  ds.seed = header.at("seed").get<uint64_t>();
  ds.split = header.at("split").get<std::string>();
  const nlohmann::json& e = header.at("env_spec");
  ds.env_spec.kind = env_kind_from_name(e.at("kind").get<std::string>());
  ds.env_spec.dt = e.at("dt").get<double>();
  ds.env_spec.a_max = e.at("a_max").get<double>();
  ds.env_spec.max_steps = e.at("max_steps").get<size_t>();
  ds.env_spec.success_eps = e.at("success_eps").get<double>();
  ds.env_spec.noise_dims = e.at("noise_dims").get<size_t>();
  ds.env_spec.noise_kind = noise_kind_from_name(e.at("noise_kind").get<std::string>());
  ds.env_spec.num_tasks = e.at("num_tasks").get<size_t>();
  ds.env_spec.validate();

  while (std::getline(is, line)) {
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line);
    Trajectory t;
    t.observations = parse_matrix(j.at("obs"));
    t.proprio = parse_matrix(j.at("state"));
    t.task_label = j.at("label").get<size_t>();
    t.actions = parse_matrix(j.at("actions"));
    t.success = j.at("success").get<bool>();
    if (t.observations.size() != t.actions.size() ||
        t.proprio.size() != t.actions.size())
      throw std::runtime_error("load_dataset: unequal sequence lengths");
    for (const auto& row : t.observations)
      if (row.size() != ds.env_spec.obs_dim())
        throw std::runtime_error("load_dataset: observation dim mismatch");
    ds.trajectories.push_back(std::move(t));
  }
  return ds;
}

Window history_window(const Trajectory& traj, size_t t, size_t tau) {
  if (t >= traj.length())
    throw std::runtime_error("history_window: step " + std::to_string(t) +
                             " out of range");
  if (tau < 1) throw std::runtime_error("history_window: tau must be >= 1");
  Window w;
  w.task = traj.task_label;
  for (size_t offset = 0; offset < tau; ++offset) {
    // left-pad by repeating the first step
    size_t want = t + 1 + offset;
    size_t idx = want >= tau ? want - tau : 0;
    w.obs.push_back(traj.observations[idx]);
    w.state.push_back(traj.proprio[idx]);
  }
  return w;
}

std::vector<double> action_at(const Trajectory& traj, size_t t) {
  if (t >= traj.length())
    throw std::runtime_error("action_at: step out of range");
  return traj.actions[t];
}

void dataset_windows(const Dataset& dataset, size_t tau,
                     std::vector<Window>& windows,
                     std::vector<std::vector<double>>& targets) {
  windows.clear();
  targets.clear();
  for (const Trajectory& traj : dataset.trajectories) {
    for (size_t t = 0; t < traj.length(); ++t) {
      windows.push_back(history_window(traj, t, tau));
      targets.push_back(traj.actions[t]);
    }
  }
}

}  // namespace bcib
