#pragma once

#include <map>
#include <string>
#include <vector>

#include "bcib/rng.hpp"
#include "bcib/tensor.hpp"

namespace bcib {

// Named trainable parameters. std::map gives the deterministic
// lexicographic iteration order the optimizer and checkpoint writer rely on.
class ParamSet {
 public:
  Tensor& add(const std::string& path, Tensor t);
  Tensor& at(const std::string& path);
  const Tensor& at(const std::string& path) const;
  bool contains(const std::string& path) const { return params_.count(path) > 0; }
  size_t size() const { return params_.size(); }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  void zero_grad();
  // L2 norm over all gradients
  double grad_norm() const;
  // scales gradients so the global norm is at most max_norm; returns the
  // pre-clip norm
  double clip_grad_norm(double max_norm);

  // deep copy of values (fresh nodes, grads zeroed)
  ParamSet snapshot() const;
  // copy values from a snapshot back into the live parameters
  void restore(const ParamSet& snap);

  // merge in all parameters of `other` under `prefix` (shared nodes)
  void adopt(const std::string& prefix, const ParamSet& other);

 private:
  std::map<std::string, Tensor> params_;
};

// fan-in-scaled uniform U(-1/sqrt(fan_in), +1/sqrt(fan_in))
Tensor init_linear_weight(size_t fan_in, size_t fan_out, Rng& rng);
Tensor init_uniform(size_t rows, size_t cols, double bound, Rng& rng);

// Flat binary checkpoint: magic "BCIB", version u32, count u32, then per
// parameter: path length u16, UTF-8 path, rows u32, cols u32, row-major
// little-endian f64. An optional UTF-8 trailer (config JSON) follows the
// last record.
inline constexpr uint32_t kCheckpointVersion = 1;

void save_params(const std::string& file, const ParamSet& params,
                 const std::string& trailer = "");
ParamSet load_params(const std::string& file, std::string* trailer = nullptr);

}  // namespace bcib
