#include "bcib/mine.hpp"

#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace bcib {

std::vector<size_t> marginal_permutation(size_t n, uint64_t seed) {
  if (n < 2)
    throw std::runtime_error("marginal_permutation: need at least 2 samples, got " +
                             std::to_string(n));
  std::vector<size_t> perm(n);
  std::iota(perm.begin(), perm.end(), size_t{0});
  Rng rng(seed);
  rng.shuffle(perm);
  return perm;
}

std::pair<Tensor, Tensor> shuffle_marginals(const Tensor& x_batch,
                                            const Tensor& z_batch,
                                            uint64_t seed) {
  if (x_batch.rows() != z_batch.rows())
    throw std::runtime_error("shuffle_marginals: row count mismatch");
  std::vector<size_t> perm = marginal_permutation(z_batch.rows(), seed);
  return {x_batch, permute_rows(z_batch, perm)};
}

MiEstimate dv_bound(const std::vector<double>& joint_scores,
                    const std::vector<double>& marginal_scores) {
  size_t n = joint_scores.size();
  if (n == 0) throw std::runtime_error("dv_bound: empty score vectors");
  if (marginal_scores.size() != n)
    throw std::runtime_error("dv_bound: score vector length mismatch");
  for (double s : joint_scores)
    if (!std::isfinite(s)) throw std::runtime_error("dv_bound: non-finite joint score");
  for (double s : marginal_scores)
    if (!std::isfinite(s)) throw std::runtime_error("dv_bound: non-finite marginal score");

  // Max-shifted reductions, ordered so a constant discriminator T = c gives
  // exactly zero: joint deviations sum to 0.0, and log(sum exp 0) = log n
  // cancels the bias term bitwise. mi_penalty builds the same expression
  // from graph ops, keeping penalty and evaluate values identical.
  double max_j = joint_scores[0];
  for (double s : joint_scores) max_j = std::max(max_j, s);
  double dev_sum = 0.0;
  for (double s : joint_scores) dev_sum += s - max_j;
  double joint_mean = dev_sum * (1.0 / static_cast<double>(n)) + max_j;

  double max_m = marginal_scores[0];
  for (double s : marginal_scores) max_m = std::max(max_m, s);
  double sum_exp = 0.0;
  for (double s : marginal_scores) sum_exp += std::exp(s - max_m);
  double log_marginal_mean =
      (std::log(sum_exp) - std::log(static_cast<double>(n))) + max_m;

  MiEstimate est;
  est.joint_mean = joint_mean;
  est.log_marginal_mean = log_marginal_mean;
  est.value = joint_mean - log_marginal_mean;
  est.batch_size = n;
  return est;
}

double gaussian_mi_oracle(double rho, size_t dims) {
  if (std::fabs(rho) >= 1.0)
    throw std::runtime_error("gaussian_mi_oracle: |rho| must be < 1");
  if (dims < 1) throw std::runtime_error("gaussian_mi_oracle: dims must be >= 1");
  return static_cast<double>(dims) * (-0.5 * std::log1p(-rho * rho));
}

std::pair<Tensor, Tensor> sample_gaussian_pairs(size_t n, size_t dims,
                                                double rho, Rng& rng) {
  if (std::fabs(rho) >= 1.0)
    throw std::runtime_error("sample_gaussian_pairs: |rho| must be < 1");
  std::vector<double> x(n * dims), z(n * dims);
  double noise_scale = std::sqrt(1.0 - rho * rho);
  for (size_t i = 0; i < n * dims; ++i) {
    x[i] = rng.normal();
    z[i] = rho * x[i] + noise_scale * rng.normal();
  }
  return {Tensor::from_values(n, dims, x), Tensor::from_values(n, dims, z)};
}

MineEstimator::MineEstimator(size_t x_dim, size_t z_dim, MineConfig config,
                             uint64_t seed)
    : x_dim_(x_dim), z_dim_(z_dim), config_(config) {
  if (x_dim_ < 1 || z_dim_ < 1)
    throw std::runtime_error("MineEstimator: x_dim and z_dim must be >= 1");
  if (config_.layers < 2)
    throw std::runtime_error("MineEstimator: layers must be >= 2");
  if (config_.hidden < 1)
    throw std::runtime_error("MineEstimator: hidden must be >= 1");
  if (config_.ema_decay <= 0.0 || config_.ema_decay >= 1.0)
    throw std::runtime_error("MineEstimator: ema_decay must be in (0, 1)");
  if (config_.score_clip <= 0.0)
    throw std::runtime_error("MineEstimator: score_clip must be > 0");

  Rng rng(derive_seed(seed, "mine_init"));
  size_t in = x_dim_ + z_dim_;
  for (size_t l = 0; l < config_.layers; ++l) {
    size_t out = (l + 1 == config_.layers) ? 1 : config_.hidden;
    std::string base = "mine/l" + std::to_string(l) + "/";
    params_.add(base + "W", init_linear_weight(in, out, rng));
    params_.add(base + "b", Tensor::zeros(1, out));
    in = out;
  }
  opt_.config.kind = OptimKind::adam;
  opt_.config.weight_decay = 0.0;
}

Tensor MineEstimator::stats_net(const Tensor& input, bool detach_weights) const {
  if (input.cols() != x_dim_ + z_dim_)
    throw std::runtime_error("MineEstimator: input width " + std::to_string(input.cols()) +
                             " != x_dim + z_dim = " + std::to_string(x_dim_ + z_dim_));
  Tensor h = input;
  for (size_t l = 0; l < config_.layers; ++l) {
    std::string base = "mine/l" + std::to_string(l) + "/";
    Tensor W = params_.at(base + "W");
    Tensor b = params_.at(base + "b");
    if (detach_weights) {
      W = W.detached();
      b = b.detached();
    }
    h = add(matmul(h, W), b);
    if (l + 1 < config_.layers) h = relu(h);
  }
  return h;
}

Tensor MineEstimator::score(const Tensor& x, const Tensor& z,
                            bool detach_weights) const {
  Tensor joined = concat_cols({x, z});
  Tensor raw = stats_net(joined, detach_weights);
  return clamp(raw, -config_.score_clip, config_.score_clip);
}

double MineEstimator::critic_step(const Tensor& x_batch, const Tensor& z_batch,
                                  uint64_t seed) {
  if (x_batch.rows() != z_batch.rows())
    throw std::runtime_error("critic_step: row count mismatch");
  size_t n = x_batch.rows();
  std::vector<size_t> perm = marginal_permutation(n, seed);

  Tensor x = x_batch.detached();
  Tensor z = z_batch.detached();
  Tensor z_perm = permute_rows(z, perm);

  Tensor t_joint = score(x, z);
  Tensor t_marg = score(x, z_perm);
  MiEstimate pre = dv_bound(t_joint.values(), t_marg.values());

  // EMA of the marginal denominator E[e^T], folded in before use so the
  // first step reduces to the uncorrected gradient.
  double batch_denom = 0.0;
  for (double s : t_marg.values()) batch_denom += std::exp(s);
  batch_denom /= static_cast<double>(n);
  if (!ema_initialized_) {
    ema_ = batch_denom;
    ema_initialized_ = true;
  } else {
    ema_ = config_.ema_decay * ema_ + (1.0 - config_.ema_decay) * batch_denom;
  }

  // Minimize the negated bound. With EMA correction the marginal term is
  // mean(e^T)/ema with ema held constant, whose gradient is the
  // bias-corrected estimate of grad log E[e^T].
  Tensor marginal_term;
  if (config_.ema_correction) {
    marginal_term = scale(mean(exp_op(t_marg)), 1.0 / ema_);
  } else {
    marginal_term = add_const(logsumexp(t_marg), -std::log(static_cast<double>(n)));
  }
  Tensor loss = scale(sub(marginal_term, mean(t_joint)), config_.critic_loss_weight);

  params_.zero_grad();
  backward(loss);
  optimizer_step(opt_, params_, config_.lr);
  return pre.value;
}

Tensor MineEstimator::mi_penalty(const Tensor& x_batch, const Tensor& z_batch,
                                 uint64_t seed) const {
  if (x_batch.rows() != z_batch.rows())
    throw std::runtime_error("mi_penalty: row count mismatch");
  size_t n = x_batch.rows();
  std::vector<size_t> perm = marginal_permutation(n, seed);

  Tensor t_joint = score(x_batch, z_batch, /*detach_weights=*/true);
  Tensor z_perm = permute_rows(z_batch, perm);
  Tensor t_marg = score(x_batch, z_perm, /*detach_weights=*/true);

  // Same shifted expression as dv_bound, op for op (see the note there).
  // The shifts are build-time constants; they cancel in the math, so the
  // gradients are those of mean and logsumexp.
  double max_j = t_joint.values()[0];
  for (double s : t_joint.values()) max_j = std::max(max_j, s);
  double max_m = t_marg.values()[0];
  for (double s : t_marg.values()) max_m = std::max(max_m, s);

  Tensor joint_mean = add_const(mean(add_const(t_joint, -max_j)), max_j);
  Tensor log_marginal_mean = add_const(
      add_const(log_op(sum(exp_op(add_const(t_marg, -max_m)))),
                -std::log(static_cast<double>(n))),
      max_m);
  return sub(joint_mean, log_marginal_mean);
}

MiEstimate MineEstimator::evaluate(const Tensor& x_batch, const Tensor& z_batch,
                                   uint64_t seed) const {
  if (x_batch.rows() != z_batch.rows())
    throw std::runtime_error("evaluate: row count mismatch");
  std::vector<size_t> perm = marginal_permutation(x_batch.rows(), seed);
  Tensor x = x_batch.detached();
  Tensor z = z_batch.detached();
  Tensor t_joint = score(x, z);
  Tensor t_marg = score(x, permute_rows(z, perm));
  return dv_bound(t_joint.values(), t_marg.values());
}

double estimate_gaussian_mi(double rho, size_t dims, size_t train_steps,
                            size_t batch, const MineConfig& config,
                            uint64_t seed) {
  if (dims < 1)
    throw std::runtime_error("estimate_gaussian_mi: dims must be >= 1");
  if (train_steps < 1)
    throw std::runtime_error("estimate_gaussian_mi: train_steps must be >= 1");
  if (batch < 2)
    throw std::runtime_error("estimate_gaussian_mi: batch must be >= 2");
  MineEstimator est(dims, dims, config, derive_seed(seed, "gauss_init"));
  Rng data_rng(derive_seed(seed, "gauss_data"));
  for (size_t s = 0; s < train_steps; ++s) {
    auto [x, z] = sample_gaussian_pairs(batch, dims, rho, data_rng);
    est.critic_step(x, z, derive_seed(seed, "gauss_perm", s));
  }
  double acc = 0.0;
  const size_t eval_batches = 20;
  for (size_t i = 0; i < eval_batches; ++i) {
    auto [x, z] = sample_gaussian_pairs(512, dims, rho, data_rng);
    acc += est.evaluate(x, z, derive_seed(seed, "gauss_eval", i)).value;
  }
  return acc / static_cast<double>(eval_batches);
}

}  // namespace bcib
