#include "bcib/policy.hpp"

#include <cmath>
#include <stdexcept>

#include "json.hpp"

namespace bcib {

std::string fusion_kind_name(FusionKind kind) {
  switch (kind) {
    case FusionKind::spatial_mlp: return "spatial_mlp";
    case FusionKind::temporal_rnn: return "temporal_rnn";
    case FusionKind::temporal_attn: return "temporal_attn";
  }
  throw std::runtime_error("fusion_kind_name: invalid kind");
}

FusionKind fusion_kind_from_name(const std::string& name) {
  if (name == "spatial_mlp") return FusionKind::spatial_mlp;
  if (name == "temporal_rnn") return FusionKind::temporal_rnn;
  if (name == "temporal_attn") return FusionKind::temporal_attn;
  throw std::runtime_error("unknown fusion kind '" + name + "'");
}

std::string PolicyConfig::to_json() const {
  nlohmann::json j;
  j["obs_dim"] = obs_dim;
  j["state_dim"] = state_dim;
  j["num_tasks"] = num_tasks;
  j["e_o"] = e_o;
  j["e_s"] = e_s;
  j["e_l"] = e_l;
  j["tau"] = tau;
  j["fusion"] = fusion_kind_name(fusion);
  j["latent_dim"] = latent_dim;
  j["mlp_layers"] = mlp_layers;
  j["mlp_hidden"] = mlp_hidden;
  j["attn_width"] = attn_width;
  j["attn_layers"] = attn_layers;
  j["attn_heads"] = attn_heads;
  j["attn_ffn_hidden"] = attn_ffn_hidden;
  j["head_hidden"] = head_hidden;
  j["action_dim"] = action_dim;
  j["train_obs_encoder"] = train_obs_encoder;
  j["train_state_encoder"] = train_state_encoder;
  j["train_lang_encoder"] = train_lang_encoder;
  j["seed"] = seed;
  return j.dump();
}

PolicyConfig PolicyConfig::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text);
  PolicyConfig c;
  c.obs_dim = j.at("obs_dim").get<size_t>();
  c.state_dim = j.at("state_dim").get<size_t>();
  c.num_tasks = j.at("num_tasks").get<size_t>();
  c.e_o = j.at("e_o").get<size_t>();
  c.e_s = j.at("e_s").get<size_t>();
  c.e_l = j.at("e_l").get<size_t>();
  c.tau = j.at("tau").get<size_t>();
  c.fusion = fusion_kind_from_name(j.at("fusion").get<std::string>());
  c.latent_dim = j.at("latent_dim").get<size_t>();
  c.mlp_layers = j.at("mlp_layers").get<size_t>();
  c.mlp_hidden = j.at("mlp_hidden").get<size_t>();
  c.attn_width = j.at("attn_width").get<size_t>();
  c.attn_layers = j.at("attn_layers").get<size_t>();
  c.attn_heads = j.at("attn_heads").get<size_t>();
  c.attn_ffn_hidden = j.at("attn_ffn_hidden").get<size_t>();
  c.head_hidden = j.at("head_hidden").get<size_t>();
  c.action_dim = j.at("action_dim").get<size_t>();
  c.train_obs_encoder = j.at("train_obs_encoder").get<bool>();
  c.train_state_encoder = j.at("train_state_encoder").get<bool>();
  c.train_lang_encoder = j.at("train_lang_encoder").get<bool>();
  c.seed = j.at("seed").get<uint64_t>();
  return c;
}

namespace {

void validate(const PolicyConfig& c) {
  if (c.obs_dim < 1 || c.state_dim < 1 || c.num_tasks < 1)
    throw std::runtime_error("PolicyConfig: raw dims and num_tasks must be >= 1");
  if (c.e_o < 1 || c.e_s < 1 || c.e_l < 1)
    throw std::runtime_error("PolicyConfig: encoder widths must be >= 1");
  if (c.tau < 1) throw std::runtime_error("PolicyConfig: tau must be >= 1");
  if (c.latent_dim < 1) throw std::runtime_error("PolicyConfig: latent_dim must be >= 1");
  if (c.action_dim < 1) throw std::runtime_error("PolicyConfig: action_dim must be >= 1");
  if (c.fusion == FusionKind::spatial_mlp && c.mlp_layers < 2)
    throw std::runtime_error("PolicyConfig: mlp_layers must be >= 2");
  if (c.fusion == FusionKind::temporal_attn) {
    if (c.attn_heads < 1 || c.attn_layers < 1)
      throw std::runtime_error("PolicyConfig: attn_layers and attn_heads must be >= 1");
    if (c.attn_width % c.attn_heads != 0)
      throw std::runtime_error("PolicyConfig: attn_width must be divisible by attn_heads");
  }
}

}  // namespace

Policy::Policy(PolicyConfig config) : config_(std::move(config)) {
  validate(config_);
  const PolicyConfig& c = config_;
  Rng rng(derive_seed(c.seed, "policy_init"));

  params_.add("enc/obs/W", init_linear_weight(c.obs_dim, c.e_o, rng));
  params_.add("enc/obs/b", Tensor::zeros(1, c.e_o));
  params_.add("enc/state/W", init_linear_weight(c.state_dim, c.e_s, rng));
  params_.add("enc/state/b", Tensor::zeros(1, c.e_s));
  params_.add("enc/lang/E",
              init_uniform(c.num_tasks, c.e_l, 1.0 / std::sqrt(double(c.e_l)), rng));

  size_t d = c.step_dim();
  switch (c.fusion) {
    case FusionKind::spatial_mlp: {
      size_t in = c.tau * d;
      for (size_t l = 0; l < c.mlp_layers; ++l) {
        size_t out = (l + 1 == c.mlp_layers) ? c.latent_dim : c.mlp_hidden;
        std::string base = "fuse/mlp/l" + std::to_string(l) + "/";
        params_.add(base + "W", init_linear_weight(in, out, rng));
        params_.add(base + "b", Tensor::zeros(1, out));
        in = out;
      }
      break;
    }
    case FusionKind::temporal_rnn: {
      size_t h = c.latent_dim;
      params_.add("fuse/rnn/Wg", init_linear_weight(d, h, rng));
      params_.add("fuse/rnn/Ug", init_linear_weight(h, h, rng));
      params_.add("fuse/rnn/bg", Tensor::zeros(1, h));
      params_.add("fuse/rnn/Wx", init_linear_weight(d, h, rng));
      params_.add("fuse/rnn/Uh", init_linear_weight(h, h, rng));
      params_.add("fuse/rnn/bh", Tensor::zeros(1, h));
      break;
    }
    case FusionKind::temporal_attn: {
      size_t w = c.attn_width;
      params_.add("fuse/attn/proj_obs/W", init_linear_weight(c.e_o, w, rng));
      params_.add("fuse/attn/proj_state/W", init_linear_weight(c.e_s, w, rng));
      params_.add("fuse/attn/proj_lang/W", init_linear_weight(c.e_l, w, rng));
      params_.add("fuse/attn/pos", init_uniform(c.tau, w, 0.1, rng));
      for (size_t l = 0; l < c.attn_layers; ++l) {
        std::string base = "fuse/attn/l" + std::to_string(l) + "/";
        params_.add(base + "Wq", init_linear_weight(w, w, rng));
        params_.add(base + "bq", Tensor::zeros(1, w));
        params_.add(base + "Wk", init_linear_weight(w, w, rng));
        params_.add(base + "bk", Tensor::zeros(1, w));
        params_.add(base + "Wv", init_linear_weight(w, w, rng));
        params_.add(base + "bv", Tensor::zeros(1, w));
        params_.add(base + "Wo", init_linear_weight(w, w, rng));
        params_.add(base + "bo", Tensor::zeros(1, w));
        params_.add(base + "ffn/W1", init_linear_weight(w, c.attn_ffn_hidden, rng));
        params_.add(base + "ffn/b1", Tensor::zeros(1, c.attn_ffn_hidden));
        params_.add(base + "ffn/W2", init_linear_weight(c.attn_ffn_hidden, w, rng));
        params_.add(base + "ffn/b2", Tensor::zeros(1, w));
      }
      params_.add("fuse/attn/out/W", init_linear_weight(w, c.latent_dim, rng));
      params_.add("fuse/attn/out/b", Tensor::zeros(1, c.latent_dim));
      break;
    }
  }

  params_.add("head/l0/W", init_linear_weight(c.latent_dim, c.head_hidden, rng));
  params_.add("head/l0/b", Tensor::zeros(1, c.head_hidden));
  params_.add("head/l1/W", init_linear_weight(c.head_hidden, c.action_dim, rng));
  params_.add("head/l1/b", Tensor::zeros(1, c.action_dim));
}

Tensor Policy::encode_steps(const Tensor& obs, const Tensor& state,
                            const std::vector<size_t>& tasks) const {
  Tensor obs_f = tanh_op(add(matmul(obs, params_.at("enc/obs/W")),
                             params_.at("enc/obs/b")));
  Tensor st_f = add(matmul(state, params_.at("enc/state/W")),
                    params_.at("enc/state/b"));
  Tensor lang_f = permute_rows(params_.at("enc/lang/E"), tasks);
  return concat_cols({obs_f, st_f, lang_f});
}

namespace {

void check_window(const PolicyConfig& c, const Window& w) {
  if (w.obs.size() != c.tau || w.state.size() != c.tau)
    throw std::runtime_error("Policy: window must have exactly tau = " +
                             std::to_string(c.tau) + " steps");
  for (const auto& row : w.obs)
    if (row.size() != c.obs_dim)
      throw std::runtime_error("Policy: observation dim mismatch");
  for (const auto& row : w.state)
    if (row.size() != c.state_dim)
      throw std::runtime_error("Policy: state dim mismatch");
  if (w.task >= c.num_tasks)
    throw std::runtime_error("Policy: task index " + std::to_string(w.task) +
                             " out of range (num_tasks = " +
                             std::to_string(c.num_tasks) + ")");
}

}  // namespace

Tensor Policy::encode_concat(const Window& window) const {
  check_window(config_, window);
  const PolicyConfig& c = config_;
  std::vector<double> obs_v, st_v;
  obs_v.reserve(c.tau * c.obs_dim);
  st_v.reserve(c.tau * c.state_dim);
  std::vector<size_t> tasks(c.tau, window.task);
  for (size_t t = 0; t < c.tau; ++t) {
    obs_v.insert(obs_v.end(), window.obs[t].begin(), window.obs[t].end());
    st_v.insert(st_v.end(), window.state[t].begin(), window.state[t].end());
  }
  Tensor obs = Tensor::from_values(c.tau, c.obs_dim, obs_v);
  Tensor state = Tensor::from_values(c.tau, c.state_dim, st_v);
  return encode_steps(obs, state, tasks);
}

Tensor Policy::fuse(const Tensor& x_steps) const {
  if (x_steps.rows() != config_.tau || x_steps.cols() != config_.step_dim())
    throw std::runtime_error("Policy::fuse: expected " + std::to_string(config_.tau) +
                             "x" + std::to_string(config_.step_dim()) + " features");
  return fuse_batch(x_steps, 1);
}

Tensor Policy::fuse_batch(const Tensor& x_steps, size_t n) const {
  const PolicyConfig& c = config_;
  size_t d = c.step_dim();
  if (x_steps.rows() != n * c.tau || x_steps.cols() != d)
    throw std::runtime_error("Policy::fuse_batch: feature shape mismatch");

  switch (c.fusion) {
    case FusionKind::spatial_mlp: {
      Tensor h = reshape(x_steps, n, c.tau * d);
      for (size_t l = 0; l < c.mlp_layers; ++l) {
        std::string base = "fuse/mlp/l" + std::to_string(l) + "/";
        h = add(matmul(h, params_.at(base + "W")), params_.at(base + "b"));
        if (l + 1 < c.mlp_layers) h = relu(h);
      }
      return h;
    }
    case FusionKind::temporal_rnn: {
      Tensor h = Tensor::zeros(n, c.latent_dim);
      const Tensor& Wg = params_.at("fuse/rnn/Wg");
      const Tensor& Ug = params_.at("fuse/rnn/Ug");
      const Tensor& bg = params_.at("fuse/rnn/bg");
      const Tensor& Wx = params_.at("fuse/rnn/Wx");
      const Tensor& Uh = params_.at("fuse/rnn/Uh");
      const Tensor& bh = params_.at("fuse/rnn/bh");
      for (size_t t = 0; t < c.tau; ++t) {
        std::vector<size_t> idx(n);
        for (size_t i = 0; i < n; ++i) idx[i] = i * c.tau + t;
        Tensor x_t = permute_rows(x_steps, idx);
        // reset-gated recurrence: zeroing {Ug, Uh} removes all dependence
        // on earlier steps
        Tensor g = sigmoid(add(add(matmul(x_t, Wg), matmul(h, Ug)), bg));
        h = tanh_op(add(add(matmul(x_t, Wx), matmul(mul(g, h), Uh)), bh));
      }
      return h;
    }
    case FusionKind::temporal_attn: {
      size_t w = c.attn_width;
      size_t rows = n * c.tau;
      Tensor x_o = slice(x_steps, 0, rows, 0, c.e_o);
      Tensor x_s = slice(x_steps, 0, rows, c.e_o, c.e_o + c.e_s);
      Tensor x_l = slice(x_steps, 0, rows, c.e_o + c.e_s, d);
      Tensor tok = add(add(matmul(x_o, params_.at("fuse/attn/proj_obs/W")),
                           matmul(x_s, params_.at("fuse/attn/proj_state/W"))),
                       matmul(x_l, params_.at("fuse/attn/proj_lang/W")));
      std::vector<size_t> step_idx(rows);
      for (size_t j = 0; j < rows; ++j) step_idx[j] = j % c.tau;
      tok = add(tok, permute_rows(params_.at("fuse/attn/pos"), step_idx));

      size_t hd = w / c.attn_heads;
      double inv_sqrt_hd = 1.0 / std::sqrt(static_cast<double>(hd));
      for (size_t l = 0; l < c.attn_layers; ++l) {
        std::string base = "fuse/attn/l" + std::to_string(l) + "/";
        Tensor Q = add(matmul(tok, params_.at(base + "Wq")), params_.at(base + "bq"));
        Tensor K = add(matmul(tok, params_.at(base + "Wk")), params_.at(base + "bk"));
        Tensor V = add(matmul(tok, params_.at(base + "Wv")), params_.at(base + "bv"));
        std::vector<Tensor> per_window;
        per_window.reserve(n);
        for (size_t i = 0; i < n; ++i) {
          size_t r0 = i * c.tau, r1 = (i + 1) * c.tau;
          std::vector<Tensor> heads;
          heads.reserve(c.attn_heads);
          for (size_t hct = 0; hct < c.attn_heads; ++hct) {
            size_t c0 = hct * hd, c1 = (hct + 1) * hd;
            Tensor q = slice(Q, r0, r1, c0, c1);
            Tensor k = slice(K, r0, r1, c0, c1);
            Tensor v = slice(V, r0, r1, c0, c1);
            Tensor attn = softmax_rows(scale(matmul(q, transpose(k)), inv_sqrt_hd));
            heads.push_back(matmul(attn, v));
          }
          per_window.push_back(c.attn_heads == 1 ? heads[0] : concat_cols(heads));
        }
        Tensor mixed = n == 1 ? per_window[0] : concat_rows(per_window);
        tok = add(tok, add(matmul(mixed, params_.at(base + "Wo")),
                           params_.at(base + "bo")));
        Tensor ffn = relu(add(matmul(tok, params_.at(base + "ffn/W1")),
                              params_.at(base + "ffn/b1")));
        ffn = add(matmul(ffn, params_.at(base + "ffn/W2")),
                  params_.at(base + "ffn/b2"));
        tok = add(tok, ffn);
      }
      std::vector<size_t> last_idx(n);
      for (size_t i = 0; i < n; ++i) last_idx[i] = i * c.tau + (c.tau - 1);
      Tensor last = permute_rows(tok, last_idx);
      return add(matmul(last, params_.at("fuse/attn/out/W")),
                 params_.at("fuse/attn/out/b"));
    }
  }
  throw std::runtime_error("Policy::fuse_batch: invalid fusion kind");
}

Tensor Policy::head(const Tensor& z) const {
  Tensor h = tanh_op(add(matmul(z, params_.at("head/l0/W")),
                         params_.at("head/l0/b")));
  return add(matmul(h, params_.at("head/l1/W")), params_.at("head/l1/b"));
}

std::vector<double> Policy::act(const Window& window) const {
  PolicyForward fwd = forward_batch({window});
  std::vector<double> action = fwd.actions.values();
  for (double a : action)
    if (!std::isfinite(a)) throw std::runtime_error("Policy::act: non-finite action");
  return action;
}

PolicyForward Policy::forward_batch(const std::vector<Window>& windows) const {
  if (windows.empty())
    throw std::runtime_error("Policy::forward_batch: empty batch");
  const PolicyConfig& c = config_;
  size_t n = windows.size();
  std::vector<double> obs_v, st_v;
  obs_v.reserve(n * c.tau * c.obs_dim);
  st_v.reserve(n * c.tau * c.state_dim);
  std::vector<size_t> tasks;
  tasks.reserve(n * c.tau);
  for (const Window& w : windows) {
    check_window(c, w);
    for (size_t t = 0; t < c.tau; ++t) {
      obs_v.insert(obs_v.end(), w.obs[t].begin(), w.obs[t].end());
      st_v.insert(st_v.end(), w.state[t].begin(), w.state[t].end());
      tasks.push_back(w.task);
    }
  }
  Tensor obs = Tensor::from_values(n * c.tau, c.obs_dim, obs_v);
  Tensor state = Tensor::from_values(n * c.tau, c.state_dim, st_v);
  Tensor x_steps = encode_steps(obs, state, tasks);

  PolicyForward out;
  out.x_flat = reshape(x_steps, n, c.tau * c.step_dim());
  out.z = fuse_batch(x_steps, n);
  out.actions = head(out.z);
  return out;
}

ParamSet Policy::trainable_params() const {
  ParamSet out;
  for (const auto& [path, t] : params_) {
    if (!config_.train_obs_encoder && path.starts_with("enc/obs/")) continue;
    if (!config_.train_state_encoder && path.starts_with("enc/state/")) continue;
    if (!config_.train_lang_encoder && path.starts_with("enc/lang/")) continue;
    out.add(path, t);
  }
  return out;
}

void Policy::save(const std::string& file) const {
  save_params(file, params_, config_.to_json());
}

Policy Policy::load(const std::string& file) {
  std::string trailer;
  ParamSet loaded = load_params(file, &trailer);
  if (trailer.empty())
    throw std::runtime_error("Policy::load: checkpoint lacks a config trailer");
  Policy policy(PolicyConfig::from_json(trailer));
  if (loaded.size() != policy.params_.size())
    throw std::runtime_error("Policy::load: parameter count mismatch");
  policy.params_.restore(loaded);
  return policy;
}

}  // namespace bcib
