#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "bcib/optim.hpp"
#include "bcib/param_set.hpp"
#include "bcib/rng.hpp"
#include "bcib/tensor.hpp"

namespace bcib {

struct MineConfig {
  size_t layers = 4;   // total linear layers in the statistics network
  size_t hidden = 64;  // desk-scale default; widen for harder problems
  double lr = 1e-5;
  double ema_decay = 0.99;
  double score_clip = 50.0;  // symmetric clamp on T outputs, pre-exponentiation
  size_t critic_steps_per_policy_step = 1;
  double critic_loss_weight = 1.0;
  bool ema_correction = true;  // bias-corrected marginal-term gradient
};

struct MiEstimate {
  double value = 0.0;  // nats; == joint_mean - log_marginal_mean exactly
  double joint_mean = 0.0;
  double log_marginal_mean = 0.0;
  size_t batch_size = 0;
};

// Uniform permutation of {0..n-1} reproducible from seed. n >= 2.
std::vector<size_t> marginal_permutation(size_t n, uint64_t seed);

// Batch-axis shuffle producing marginal samples: x unchanged, z rows
// permuted. Attachment to any existing graph is preserved.
std::pair<Tensor, Tensor> shuffle_marginals(const Tensor& x_batch,
                                            const Tensor& z_batch,
                                            uint64_t seed);

// Donsker-Varadhan lower bound from critic scores:
// value = mean(joint) - (logsumexp(marginal) - ln n).
MiEstimate dv_bound(const std::vector<double>& joint_scores,
                    const std::vector<double>& marginal_scores);

// Closed-form MI of `dims` independent correlated-Gaussian pairs.
double gaussian_mi_oracle(double rho, size_t dims = 1);

// (x, z) with z = rho*x + sqrt(1-rho^2)*eps per dimension; MI equals
// gaussian_mi_oracle(rho, dims).
std::pair<Tensor, Tensor> sample_gaussian_pairs(size_t n, size_t dims,
                                                double rho, Rng& rng);

// Oracle-validation loop: trains a fresh estimator on streaming
// correlated-Gaussian batches and returns the evaluation-mode estimate
// averaged over 20 held-out batches of 512. Deterministic given seed.
double estimate_gaussian_mi(double rho, size_t dims, size_t train_steps,
                            size_t batch, const MineConfig& config,
                            uint64_t seed);

// MINE estimator: ReLU MLP statistics network T over concat(x, z) trained
// by gradient ascent on the DV bound with an EMA-corrected marginal-term
// gradient.
class MineEstimator {
 public:
  MineEstimator(size_t x_dim, size_t z_dim, MineConfig config, uint64_t seed);

  // Clamped critic scores, n x 1. detach_weights routes gradients into the
  // inputs only (the mi_penalty path); otherwise the live weights are part
  // of the graph (the critic path).
  Tensor score(const Tensor& x, const Tensor& z, bool detach_weights = false) const;

  // One ascent step on the statistics network. x/z are treated as constants
  // regardless of attachment. Returns the pre-step DV estimate.
  double critic_step(const Tensor& x_batch, const Tensor& z_batch, uint64_t seed);

  // Differentiable DV estimate for the policy objective: gradients flow into
  // the x and z pathways, never into the statistics network.
  Tensor mi_penalty(const Tensor& x_batch, const Tensor& z_batch, uint64_t seed) const;

  // Forward-only DV estimate on a batch (no update).
  MiEstimate evaluate(const Tensor& x_batch, const Tensor& z_batch, uint64_t seed) const;

  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }
  const MineConfig& config() const { return config_; }
  OptimState& opt() { return opt_; }
  double ema_denominator() const { return ema_; }
  size_t x_dim() const { return x_dim_; }
  size_t z_dim() const { return z_dim_; }

 private:
  Tensor stats_net(const Tensor& input, bool detach_weights) const;

  size_t x_dim_;
  size_t z_dim_;
  MineConfig config_;
  ParamSet params_;
  OptimState opt_;
  double ema_ = 0.0;
  bool ema_initialized_ = false;
};

}  // namespace bcib
