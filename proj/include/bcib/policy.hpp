#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "bcib/param_set.hpp"
#include "bcib/rng.hpp"
#include "bcib/tensor.hpp"

namespace bcib {

enum class FusionKind { spatial_mlp, temporal_rnn, temporal_attn };

std::string fusion_kind_name(FusionKind kind);
FusionKind fusion_kind_from_name(const std::string& name);

struct PolicyConfig {
  size_t obs_dim = 4;
  size_t state_dim = 4;
  size_t num_tasks = 4;
  size_t e_o = 8;  // observation encoder width
  size_t e_s = 4;  // state encoder width
  size_t e_l = 4;  // language embedding width
  size_t tau = 3;  // history length
  FusionKind fusion = FusionKind::spatial_mlp;
  size_t latent_dim = 16;
  // spatial_mlp sizes
  size_t mlp_layers = 4;
  size_t mlp_hidden = 64;
  // temporal_attn sizes
  size_t attn_width = 64;
  size_t attn_layers = 2;
  size_t attn_heads = 2;
  size_t attn_ffn_hidden = 64;
  // head
  size_t head_hidden = 64;
  size_t action_dim = 2;
  // frozen encoders skip optimizer updates but still pass gradients
  bool train_obs_encoder = true;
  bool train_state_encoder = true;
  bool train_lang_encoder = true;
  uint64_t seed = 0;

  size_t step_dim() const { return e_o + e_s + e_l; }
  size_t x_flat_dim() const { return tau * step_dim(); }

  std::string to_json() const;
  static PolicyConfig from_json(const std::string& text);
};

// One policy input: tau raw steps plus the trajectory's task label.
struct Window {
  std::vector<std::vector<double>> obs;    // tau x obs_dim
  std::vector<std::vector<double>> state;  // tau x state_dim
  size_t task = 0;
};

struct PolicyForward {
  Tensor x_flat;   // n x (tau * step_dim): the IB penalty's X
  Tensor z;        // n x latent_dim: the fused latent Z
  Tensor actions;  // n x action_dim
};

// Policy: modality encoders -> per-step feature concat -> fusion latent
// -> MLP head. Forward is deterministic given parameters and input.
class Policy {
 public:
  explicit Policy(PolicyConfig config);

  // Per-step encoded features for one window, tau x step_dim. Row order is
  // observation / proprioceptive state / language embedding.
  Tensor encode_concat(const Window& window) const;
  // Fusion of a tau x step_dim feature matrix into a 1 x latent_dim latent.
  Tensor fuse(const Tensor& x_steps) const;
  // head(fuse(encode_concat(window))) as plain values.
  std::vector<double> act(const Window& window) const;

  // Batched graph forward over n windows.
  PolicyForward forward_batch(const std::vector<Window>& windows) const;

  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  // Parameters the optimizer may update (honors frozen-encoder flags);
  // shares nodes with params().
  ParamSet trainable_params() const;
  const PolicyConfig& config() const { return config_; }

  // Checkpoint with the config as a JSON trailer.
  void save(const std::string& file) const;
  static Policy load(const std::string& file);

 private:
  Tensor encode_steps(const Tensor& obs, const Tensor& state,
                      const std::vector<size_t>& tasks) const;
  Tensor fuse_batch(const Tensor& x_steps, size_t n) const;
  Tensor head(const Tensor& z) const;

  PolicyConfig config_;
  ParamSet params_;
};

}  // namespace bcib
