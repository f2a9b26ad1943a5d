#include "bcib/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>
#include <unordered_set>

namespace bcib {

namespace {

std::string shape_str(size_t r, size_t c) {
  return std::to_string(r) + "x" + std::to_string(c);
}

[[noreturn]] void shape_fail(const char* op, const TensorNode& a, const TensorNode& b) {
  throw ShapeError(std::string(op) + ": shape mismatch (" + shape_str(a.rows, a.cols) +
                   " vs " + shape_str(b.rows, b.cols) + ")");
}

NodePtr make_node(size_t rows, size_t cols) {
  auto n = std::make_shared<TensorNode>();
  n->rows = rows;
  n->cols = cols;
  n->value.assign(rows * cols, 0.0);
  n->grad.assign(rows * cols, 0.0);
  return n;
}

NodePtr make_op_node(size_t rows, size_t cols, std::vector<NodePtr> parents) {
  auto n = make_node(rows, cols);
  n->parents = std::move(parents);
  for (const auto& p : n->parents) {
    if (p->requires_grad) n->requires_grad = true;
  }
  return n;
}

// broadcast class of b against a: 0 = same shape, 1 = 1xC row, 2 = 1x1 scalar
int broadcast_kind(const TensorNode& a, const TensorNode& b, const char* op) {
  if (a.rows == b.rows && a.cols == b.cols) return 0;
  if (b.rows == 1 && b.cols == a.cols) return 1;
  if (b.rows == 1 && b.cols == 1) return 2;
  shape_fail(op, a, b);
}

}  // namespace

Tensor Tensor::zeros(size_t rows, size_t cols, bool requires_grad) {
  auto n = make_node(rows, cols);
  n->requires_grad = requires_grad;
  return Tensor(n);
}

Tensor Tensor::full(size_t rows, size_t cols, double v, bool requires_grad) {
  auto t = zeros(rows, cols, requires_grad);
  std::fill(t.values().begin(), t.values().end(), v);
  return t;
}

Tensor Tensor::from_values(size_t rows, size_t cols, std::vector<double> values,
                           bool requires_grad) {
  if (values.size() != rows * cols) {
    throw ShapeError("from_values: " + std::to_string(values.size()) +
                     " values for shape " + shape_str(rows, cols));
  }
  auto n = make_node(rows, cols);
  n->value = std::move(values);
  n->requires_grad = requires_grad;
  return Tensor(n);
}

Tensor Tensor::scalar_of(double v, bool requires_grad) {
  return from_values(1, 1, {v}, requires_grad);
}

Tensor Tensor::row(const std::vector<double>& values, bool requires_grad) {
  return from_values(1, values.size(), values, requires_grad);
}

double Tensor::item() const {
  if (node_->size() != 1) {
    throw ShapeError("item: tensor is " + shape_str(node_->rows, node_->cols) + ", not 1x1");
  }
  return node_->value[0];
}

Tensor Tensor::detached() const {
  auto n = make_node(node_->rows, node_->cols);
  n->value = node_->value;
  return Tensor(n);
}

// ---- matmul kernels ----

void mm_nn_acc(const double* a, const double* b, double* c, size_t n, size_t k, size_t m) {
  for (size_t i = 0; i < n; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * m;
    for (size_t p = 0; p < k; ++p) {
      const double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b + p * m;
      for (size_t j = 0; j < m; ++j) ci[j] += av * bp[j];
    }
  }
}

// c(n x k) += a(n x m) * b(k x m)^T
void mm_nt_acc(const double* a, const double* b, double* c, size_t n, size_t k, size_t m) {
  for (size_t i = 0; i < n; ++i) {
    const double* ai = a + i * m;
    double* ci = c + i * k;
    for (size_t j = 0; j < k; ++j) {
      const double* bj = b + j * m;
      double s = 0.0;
      for (size_t l = 0; l < m; ++l) s += ai[l] * bj[l];
      ci[j] += s;
    }
  }
}

// c(k x m) += a(n x k)^T * b(n x m)
void mm_tn_acc(const double* a, const double* b, double* c, size_t n, size_t k, size_t m) {
  for (size_t i = 0; i < n; ++i) {
    const double* ai = a + i * k;
    const double* bi = b + i * m;
    for (size_t j = 0; j < k; ++j) {
      const double av = ai[j];
      if (av == 0.0) continue;
      double* cj = c + j * m;
      for (size_t l = 0; l < m; ++l) cj[l] += av * bi[l];
    }
  }
}

// ---- ops ----

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) shape_fail("matmul", *a.node(), *b.node());
  const size_t n = a.rows(), k = a.cols(), m = b.cols();
  auto out = make_op_node(n, m, {a.ptr(), b.ptr()});
  mm_nn_acc(a.values().data(), b.values().data(), out->value.data(), n, k, m);
  out->backward_rule = [n, k, m](const TensorNode& self, const std::vector<double>& g,
                                 const std::vector<std::vector<double>*>& gp) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    if (gp[0]) mm_nt_acc(g.data(), bv.data(), gp[0]->data(), n, k, m);
    if (gp[1]) mm_tn_acc(av.data(), g.data(), gp[1]->data(), n, k, m);
  };
  return Tensor(out);
}

Tensor add(const Tensor& a, const Tensor& b) {
  const int bk = broadcast_kind(*a.node(), *b.node(), "add");
  auto out = make_op_node(a.rows(), a.cols(), {a.ptr(), b.ptr()});
  const size_t rows = a.rows(), cols = a.cols();
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out->value;
  for (size_t i = 0; i < rows; ++i)
    for (size_t j = 0; j < cols; ++j) {
      const double bx = bk == 0 ? bv[i * cols + j] : (bk == 1 ? bv[j] : bv[0]);
      ov[i * cols + j] = av[i * cols + j] + bx;
    }
  out->backward_rule = [bk, rows, cols](const TensorNode&, const std::vector<double>& g,
                                        const std::vector<std::vector<double>*>& gp) {
    if (gp[0])
      for (size_t i = 0; i < g.size(); ++i) (*gp[0])[i] += g[i];
    if (gp[1]) {
      auto& gb = *gp[1];
      if (bk == 0) {
        for (size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      } else if (bk == 1) {
        for (size_t i = 0; i < rows; ++i)
          for (size_t j = 0; j < cols; ++j) gb[j] += g[i * cols + j];
      } else {
        for (double x : g) gb[0] += x;
      }
    }
  };
  return Tensor(out);
}

Tensor sub(const Tensor& a, const Tensor& b) { return add(a, scale(b, -1.0)); }

Tensor mul(const Tensor& a, const Tensor& b) {
  const int bk = broadcast_kind(*a.node(), *b.node(), "mul");
  auto out = make_op_node(a.rows(), a.cols(), {a.ptr(), b.ptr()});
  const size_t rows = a.rows(), cols = a.cols();
  const auto& av = a.values();
  const auto& bv = b.values();
  auto& ov = out->value;
  for (size_t i = 0; i < rows; ++i)
    for (size_t j = 0; j < cols; ++j) {
      const double bx = bk == 0 ? bv[i * cols + j] : (bk == 1 ? bv[j] : bv[0]);
      ov[i * cols + j] = av[i * cols + j] * bx;
    }
  out->backward_rule = [bk, rows, cols](const TensorNode& self, const std::vector<double>& g,
                                        const std::vector<std::vector<double>*>& gp) {
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    if (gp[0]) {
      auto& ga = *gp[0];
      for (size_t i = 0; i < rows; ++i)
        for (size_t j = 0; j < cols; ++j) {
          const double bx = bk == 0 ? bv[i * cols + j] : (bk == 1 ? bv[j] : bv[0]);
          ga[i * cols + j] += g[i * cols + j] * bx;
        }
    }
    if (gp[1]) {
      auto& gb = *gp[1];
      for (size_t i = 0; i < rows; ++i)
        for (size_t j = 0; j < cols; ++j) {
          const double contrib = g[i * cols + j] * av[i * cols + j];
          if (bk == 0)
            gb[i * cols + j] += contrib;
          else if (bk == 1)
            gb[j] += contrib;
          else
            gb[0] += contrib;
        }
    }
  };
  return Tensor(out);
}

namespace {

// scaffold for unary elementwise ops: fwd(value) and dfdx(value, out_value)
Tensor unary_op(const Tensor& a, double (*fwd)(double),
                double (*dfdx)(double, double)) {
  auto out = make_op_node(a.rows(), a.cols(), {a.ptr()});
  const auto& av = a.values();
  for (size_t i = 0; i < av.size(); ++i) out->value[i] = fwd(av[i]);
  out->backward_rule = [dfdx](const TensorNode& self, const std::vector<double>& g,
                              const std::vector<std::vector<double>*>& gp) {
    if (!gp[0]) return;
    const auto& av = self.parents[0]->value;
    auto& ga = *gp[0];
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * dfdx(av[i], self.value[i]);
  };
  return Tensor(out);
}

}  // namespace

Tensor scale(const Tensor& a, double c) {
  auto out = make_op_node(a.rows(), a.cols(), {a.ptr()});
  const auto& av = a.values();
  for (size_t i = 0; i < av.size(); ++i) out->value[i] = av[i] * c;
  out->backward_rule = [c](const TensorNode&, const std::vector<double>& g,
                           const std::vector<std::vector<double>*>& gp) {
    if (!gp[0]) return;
    auto& ga = *gp[0];
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * c;
  };
  return Tensor(out);
}

Tensor add_const(const Tensor& a, double c) {
  auto out = make_op_node(a.rows(), a.cols(), {a.ptr()});
  const auto& av = a.values();
  for (size_t i = 0; i < av.size(); ++i) out->value[i] = av[i] + c;
  out->backward_rule = [](const TensorNode&, const std::vector<double>& g,
                          const std::vector<std::vector<double>*>& gp) {
    if (!gp[0]) return;
    auto& ga = *gp[0];
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  };
  return Tensor(out);
}

Tensor relu(const Tensor& a) {
  return unary_op(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh_op(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor& a) {
  return unary_op(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor exp_op(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Tensor log_op(const Tensor& a) {
  return unary_op(
      a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Tensor clamp(const Tensor& a, double lo, double hi) {
  auto out = make_op_node(a.rows(), a.cols(), {a.ptr()});
  const auto& av = a.values();
  for (size_t i = 0; i < av.size(); ++i) out->value[i] = std::min(hi, std::max(lo, av[i]));
  out->backward_rule = [lo, hi](const TensorNode& self, const std::vector<double>& g,
                                const std::vector<std::vector<double>*>& gp) {
    if (!gp[0]) return;
    const auto& av = self.parents[0]->value;
    auto& ga = *gp[0];
    for (size_t i = 0; i < g.size(); ++i)
      if (av[i] > lo && av[i] < hi) ga[i] += g[i];
  };
  return Tensor(out);
}

Tensor mean(const Tensor& a) {
  auto out = make_op_node(1, 1, {a.ptr()});
  double s = 0.0;
  for (double x : a.values()) s += x;
  const double inv_n = 1.0 / static_cast<double>(a.size());
  out->value[0] = s * inv_n;
  out->backward_rule = [inv_n](const TensorNode&, const std::vector<double>& g,
                               const std::vector<std::vector<double>*>& gp) {
    if (!gp[0]) return;
    auto& ga = *gp[0];
    for (double& x : ga) x += g[0] * inv_n;
  };
  return Tensor(out);
}

Tensor sum(const Tensor& a) {
  auto out = make_op_node(1, 1, {a.ptr()});
  double s = 0.0;
  for (double x : a.values()) s += x;
  out->value[0] = s;
  out->backward_rule = [](const TensorNode&, const std::vector<double>& g,
                          const std::vector<std::vector<double>*>& gp) {
    if (!gp[0]) return;
    auto& ga = *gp[0];
    for (double& x : ga) x += g[0];
  };
  return Tensor(out);
}

Tensor logsumexp(const Tensor& a) {
  for (double x : a.values()) {
    if (!std::isfinite(x)) throw std::invalid_argument("logsumexp: non-finite input");
  }
  auto out = make_op_node(1, 1, {a.ptr()});
  const auto& av = a.values();
  const double m = *std::max_element(av.begin(), av.end());
  double s = 0.0;
  for (double x : av) s += std::exp(x - m);
  out->value[0] = m + std::log(s);
  // d lse / dx_i = softmax_i over all entries
  out->backward_rule = [m, s](const TensorNode& self, const std::vector<double>& g,
                              const std::vector<std::vector<double>*>& gp) {
    if (!gp[0]) return;
    const auto& av = self.parents[0]->value;
    auto& ga = *gp[0];
    for (size_t i = 0; i < av.size(); ++i) ga[i] += g[0] * std::exp(av[i] - m) / s;
  };
  return Tensor(out);
}

Tensor softmax_rows(const Tensor& a) {
  for (double x : a.values()) {
    if (!std::isfinite(x)) throw std::invalid_argument("softmax: non-finite input");
  }
  auto out = make_op_node(a.rows(), a.cols(), {a.ptr()});
  const size_t rows = a.rows(), cols = a.cols();
  const auto& av = a.values();
  for (size_t i = 0; i < rows; ++i) {
    const double* xi = av.data() + i * cols;
    double* yi = out->value.data() + i * cols;
    const double m = *std::max_element(xi, xi + cols);
    double s = 0.0;
    for (size_t j = 0; j < cols; ++j) {
      yi[j] = std::exp(xi[j] - m);
      s += yi[j];
    }
    for (size_t j = 0; j < cols; ++j) yi[j] /= s;
  }
  out->backward_rule = [rows, cols](const TensorNode& self, const std::vector<double>& g,
                                    const std::vector<std::vector<double>*>& gp) {
    if (!gp[0]) return;
    auto& ga = *gp[0];
    for (size_t i = 0; i < rows; ++i) {
      const double* yi = self.value.data() + i * cols;
      const double* gi = g.data() + i * cols;
      double dot = 0.0;
      for (size_t j = 0; j < cols; ++j) dot += gi[j] * yi[j];
      double* gai = ga.data() + i * cols;
      for (size_t j = 0; j < cols; ++j) gai[j] += yi[j] * (gi[j] - dot);
    }
  };
  return Tensor(out);
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no inputs");
  const size_t rows = parts[0].rows();
  size_t cols = 0;
  std::vector<NodePtr> parents;
  for (const auto& p : parts) {
    if (p.rows() != rows) shape_fail("concat_cols", *parts[0].node(), *p.node());
    cols += p.cols();
    parents.push_back(p.ptr());
  }
  auto out = make_op_node(rows, cols, std::move(parents));
  size_t off = 0;
  for (const auto& p : parts) {
    const auto& pv = p.values();
    for (size_t i = 0; i < rows; ++i)
      std::copy(pv.begin() + i * p.cols(), pv.begin() + (i + 1) * p.cols(),
                out->value.begin() + i * cols + off);
    off += p.cols();
  }
  out->backward_rule = [rows, cols](const TensorNode& self, const std::vector<double>& g,
                                    const std::vector<std::vector<double>*>& gp) {
    size_t off = 0;
    for (size_t pi = 0; pi < self.parents.size(); ++pi) {
      const size_t pc = self.parents[pi]->cols;
      if (gp[pi]) {
        auto& ga = *gp[pi];
        for (size_t i = 0; i < rows; ++i)
          for (size_t j = 0; j < pc; ++j) ga[i * pc + j] += g[i * cols + off + j];
      }
      off += pc;
    }
  };
  return Tensor(out);
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no inputs");
  const size_t cols = parts[0].cols();
  size_t rows = 0;
  std::vector<NodePtr> parents;
  for (const auto& p : parts) {
    if (p.cols() != cols) shape_fail("concat_rows", *parts[0].node(), *p.node());
    rows += p.rows();
    parents.push_back(p.ptr());
  }
  auto out = make_op_node(rows, cols, std::move(parents));
  size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.values().begin(), p.values().end(), out->value.begin() + off);
    off += p.size();
  }
  out->backward_rule = [](const TensorNode& self, const std::vector<double>& g,
                          const std::vector<std::vector<double>*>& gp) {
    size_t off = 0;
    for (size_t pi = 0; pi < self.parents.size(); ++pi) {
      const size_t sz = self.parents[pi]->size();
      if (gp[pi]) {
        auto& ga = *gp[pi];
        for (size_t i = 0; i < sz; ++i) ga[i] += g[off + i];
      }
      off += sz;
    }
  };
  return Tensor(out);
}

Tensor slice(const Tensor& a, size_t r0, size_t r1, size_t c0, size_t c1) {
  if (r1 > a.rows() || c1 > a.cols() || r0 >= r1 || c0 >= c1) {
    throw ShapeError("slice: range [" + std::to_string(r0) + "," + std::to_string(r1) +
                     ")x[" + std::to_string(c0) + "," + std::to_string(c1) +
                     ") out of " + shape_str(a.rows(), a.cols()));
  }
  const size_t rows = r1 - r0, cols = c1 - c0, acols = a.cols();
  auto out = make_op_node(rows, cols, {a.ptr()});
  const auto& av = a.values();
  for (size_t i = 0; i < rows; ++i)
    for (size_t j = 0; j < cols; ++j)
      out->value[i * cols + j] = av[(r0 + i) * acols + c0 + j];
  out->backward_rule = [r0, c0, rows, cols, acols](
                           const TensorNode&, const std::vector<double>& g,
                           const std::vector<std::vector<double>*>& gp) {
    if (!gp[0]) return;
    auto& ga = *gp[0];
    for (size_t i = 0; i < rows; ++i)
      for (size_t j = 0; j < cols; ++j)
        ga[(r0 + i) * acols + c0 + j] += g[i * cols + j];
  };
  return Tensor(out);
}

Tensor permute_rows(const Tensor& a, const std::vector<size_t>& indices) {
  const size_t cols = a.cols();
  for (size_t idx : indices) {
    if (idx >= a.rows()) {
      throw ShapeError("permute_rows: index " + std::to_string(idx) + " out of " +
                       shape_str(a.rows(), a.cols()));
    }
  }
  auto out = make_op_node(indices.size(), cols, {a.ptr()});
  const auto& av = a.values();
  for (size_t i = 0; i < indices.size(); ++i)
    std::copy(av.begin() + indices[i] * cols, av.begin() + (indices[i] + 1) * cols,
              out->value.begin() + i * cols);
  out->backward_rule = [indices, cols](const TensorNode&, const std::vector<double>& g,
                                       const std::vector<std::vector<double>*>& gp) {
    if (!gp[0]) return;
    auto& ga = *gp[0];
    for (size_t i = 0; i < indices.size(); ++i)
      for (size_t j = 0; j < cols; ++j) ga[indices[i] * cols + j] += g[i * cols + j];
  };
  return Tensor(out);
}

Tensor reshape(const Tensor& a, size_t rows, size_t cols) {
  if (rows * cols != a.size()) {
    throw ShapeError("reshape: " + shape_str(a.rows(), a.cols()) + " to " +
                     shape_str(rows, cols));
  }
  auto out = make_op_node(rows, cols, {a.ptr()});
  out->value = a.values();
  out->backward_rule = [](const TensorNode&, const std::vector<double>& g,
                          const std::vector<std::vector<double>*>& gp) {
    if (!gp[0]) return;
    auto& ga = *gp[0];
    for (size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
  };
  return Tensor(out);
}

Tensor transpose(const Tensor& a) {
  const size_t rows = a.rows(), cols = a.cols();
  auto out = make_op_node(cols, rows, {a.ptr()});
  const auto& av = a.values();
  for (size_t i = 0; i < rows; ++i)
    for (size_t j = 0; j < cols; ++j) out->value[j * rows + i] = av[i * cols + j];
  out->backward_rule = [rows, cols](const TensorNode&, const std::vector<double>& g,
                                    const std::vector<std::vector<double>*>& gp) {
    if (!gp[0]) return;
    auto& ga = *gp[0];
    for (size_t i = 0; i < rows; ++i)
      for (size_t j = 0; j < cols; ++j) ga[i * cols + j] += g[j * rows + i];
  };
  return Tensor(out);
}

Tensor mse(const Tensor& pred, const Tensor& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    shape_fail("mse", *pred.node(), *target.node());
  auto out = make_op_node(1, 1, {pred.ptr(), target.ptr()});
  const auto& pv = pred.values();
  const auto& tv = target.values();
  double s = 0.0;
  for (size_t i = 0; i < pv.size(); ++i) {
    const double d = pv[i] - tv[i];
    s += d * d;
  }
  const double inv_n = 1.0 / static_cast<double>(pv.size());
  out->value[0] = s * inv_n;
  out->backward_rule = [inv_n](const TensorNode& self, const std::vector<double>& g,
                               const std::vector<std::vector<double>*>& gp) {
    const auto& pv = self.parents[0]->value;
    const auto& tv = self.parents[1]->value;
    const double c = 2.0 * inv_n * g[0];
    if (gp[0]) {
      auto& ga = *gp[0];
      for (size_t i = 0; i < pv.size(); ++i) ga[i] += c * (pv[i] - tv[i]);
    }
    if (gp[1]) {
      auto& gb = *gp[1];
      for (size_t i = 0; i < pv.size(); ++i) gb[i] -= c * (pv[i] - tv[i]);
    }
  };
  return Tensor(out);
}

void backward(const Tensor& root) {
  if (root.rows() != 1 || root.cols() != 1) {
    throw ShapeError("backward: root must be 1x1, got " +
                     shape_str(root.rows(), root.cols()));
  }
  if (!root.requires_grad()) return;

  // reverse topological order over the requires_grad subgraph
  std::vector<TensorNode*> order;
  std::unordered_set<TensorNode*> seen;
  std::vector<std::pair<TensorNode*, size_t>> stack;
  stack.emplace_back(root.node(), 0);
  seen.insert(root.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      TensorNode* p = node->parents[next++].get();
      if (p->requires_grad && !seen.count(p)) {
        seen.insert(p);
        stack.emplace_back(p, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  // per-pass gradient buffers so repeated backward calls accumulate
  // exactly one extra contribution each
  std::unordered_map<TensorNode*, std::vector<double>> pass;
  pass.reserve(order.size());
  for (TensorNode* n : order) pass.emplace(n, std::vector<double>(n->size(), 0.0));
  pass[root.node()][0] = 1.0;

  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode* n = *it;
    if (!n->backward_rule) continue;
    std::vector<std::vector<double>*> gp(n->parents.size(), nullptr);
    for (size_t i = 0; i < n->parents.size(); ++i) {
      auto f = pass.find(n->parents[i].get());
      if (f != pass.end()) gp[i] = &f->second;
    }
    n->backward_rule(*n, pass[n], gp);
  }

  for (TensorNode* n : order) {
    const auto& pg = pass[n];
    for (size_t i = 0; i < pg.size(); ++i) n->grad[i] += pg[i];
  }
}

}  // namespace bcib
