#include "bcib/param_set.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

namespace bcib {

Tensor& ParamSet::add(const std::string& path, Tensor t) {
  if (params_.count(path))
    throw std::runtime_error("ParamSet::add: duplicate parameter path '" + path + "'");
  t.node()->requires_grad = true;
  auto [it, ok] = params_.emplace(path, std::move(t));
  (void)ok;
  return it->second;
}

Tensor& ParamSet::at(const std::string& path) {
  auto it = params_.find(path);
  if (it == params_.end())
    throw std::runtime_error("ParamSet::at: unknown parameter path '" + path + "'");
  return it->second;
}

const Tensor& ParamSet::at(const std::string& path) const {
  auto it = params_.find(path);
  if (it == params_.end())
    throw std::runtime_error("ParamSet::at: unknown parameter path '" + path + "'");
  return it->second;
}

void ParamSet::zero_grad() {
  for (auto& [path, t] : params_) t.zero_grad();
}

double ParamSet::grad_norm() const {
  double sq = 0.0;
  for (const auto& [path, t] : params_)
    for (double g : t.grad()) sq += g * g;
  return std::sqrt(sq);
}

double ParamSet::clip_grad_norm(double max_norm) {
  double norm = grad_norm();
  if (norm > max_norm && norm > 0.0) {
    double scale = max_norm / norm;
    for (auto& [path, t] : params_)
      for (double& g : t.node()->grad) g *= scale;
  }
  return norm;
}

ParamSet ParamSet::snapshot() const {
  ParamSet out;
  for (const auto& [path, t] : params_)
    out.add(path, Tensor::from_values(t.rows(), t.cols(), t.values()));
  return out;
}

void ParamSet::restore(const ParamSet& snap) {
  for (auto& [path, t] : params_) {
    const Tensor& s = snap.at(path);
    if (s.rows() != t.rows() || s.cols() != t.cols())
      throw std::runtime_error("ParamSet::restore: shape mismatch for '" + path + "'");
    t.node()->value = s.values();
  }
}

void ParamSet::adopt(const std::string& prefix, const ParamSet& other) {
  for (const auto& [path, t] : other.params_) {
    if (params_.count(prefix + path))
      throw std::runtime_error("ParamSet::adopt: duplicate parameter path '" + prefix + path + "'");
    params_.emplace(prefix + path, t);
  }
}

Tensor init_linear_weight(size_t fan_in, size_t fan_out, Rng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  return init_uniform(fan_in, fan_out, bound, rng);
}

Tensor init_uniform(size_t rows, size_t cols, double bound, Rng& rng) {
  std::vector<double> v(rows * cols);
  for (double& x : v) x = rng.uniform(-bound, bound);
  return Tensor::from_values(rows, cols, v);
}

namespace {

void put_u16(std::ostream& os, uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>(v >> 8)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

void put_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 4);
}

void put_f64(std::ostream& os, double v) {
  uint64_t bits;
  std::memcpy(&bits, &v, 8);
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
  os.write(reinterpret_cast<const char*>(b), 8);
}

uint16_t get_u16(std::istream& is) {
  unsigned char b[2];
  is.read(reinterpret_cast<char*>(b), 2);
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
  return v;
}

double get_f64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw std::runtime_error("checkpoint: truncated file");
  uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(b[i]) << (8 * i);
  double v;
  std::memcpy(&v, &bits, 8);
  return v;
}

}  // namespace

void save_params(const std::string& file, const ParamSet& params,
                 const std::string& trailer) {
  std::ofstream os(file, std::ios::binary);
  if (!os) throw std::runtime_error("checkpoint: cannot open '" + file + "' for writing");
  os.write("BCIB", 4);
  put_u32(os, kCheckpointVersion);
  put_u32(os, static_cast<uint32_t>(params.size()));
  for (const auto& [path, t] : params) {
    if (path.size() > 0xffff)
      throw std::runtime_error("checkpoint: parameter path too long");
    put_u16(os, static_cast<uint16_t>(path.size()));
    os.write(path.data(), static_cast<std::streamsize>(path.size()));
    put_u32(os, static_cast<uint32_t>(t.rows()));
    put_u32(os, static_cast<uint32_t>(t.cols()));
    for (double v : t.values()) put_f64(os, v);
  }
  if (!trailer.empty())
    os.write(trailer.data(), static_cast<std::streamsize>(trailer.size()));
  if (!os) throw std::runtime_error("checkpoint: write to '" + file + "' failed");
}

ParamSet load_params(const std::string& file, std::string* trailer) {
  std::ifstream is(file, std::ios::binary);
  if (!is) throw std::runtime_error("checkpoint: cannot open '" + file + "'");
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, "BCIB", 4) != 0)
    throw std::runtime_error("checkpoint: bad magic in '" + file + "'");
  uint32_t version = get_u32(is);
  if (version != kCheckpointVersion)
    throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
  uint32_t count = get_u32(is);
  ParamSet out;
  for (uint32_t i = 0; i < count; ++i) {
    uint16_t len = get_u16(is);
    std::string path(len, '\0');
    is.read(path.data(), len);
    if (!is) throw std::runtime_error("checkpoint: truncated file");
    uint32_t rows = get_u32(is);
    uint32_t cols = get_u32(is);
    std::vector<double> v(static_cast<size_t>(rows) * cols);
    for (double& x : v) x = get_f64(is);
    out.add(path, Tensor::from_values(rows, cols, v));
  }
  if (trailer) {
    std::string rest((std::istreambuf_iterator<char>(is)),
                     std::istreambuf_iterator<char>());
    *trailer = rest;
  }
  return out;
}

}  // namespace bcib
