#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace bcib {

class ShapeError : public std::runtime_error {
 public:
  explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

struct TensorNode;
using NodePtr = std::shared_ptr<TensorNode>;

// A node in the dynamic computation graph: a dense row-major grid of
// doubles, a same-shape accumulated gradient, parent links and a rule
// that routes an upstream pass-gradient into the parents' buffers.
struct TensorNode {
  size_t rows = 0;
  size_t cols = 0;
  std::vector<double> value;
  std::vector<double> grad;  // persistent; accumulates across backward passes
  bool requires_grad = false;
  std::vector<NodePtr> parents;
  // g_self: this node's gradient for the current pass.
  // g_parents[i]: pass buffer of parents[i], or nullptr if that parent
  // does not require grad.
  std::function<void(const TensorNode& self, const std::vector<double>& g_self,
                     const std::vector<std::vector<double>*>& g_parents)>
      backward_rule;

  size_t size() const { return rows * cols; }
};

// Value-semantic handle to a graph node. Copies share the node.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(NodePtr node) : node_(std::move(node)) {}

  static Tensor zeros(size_t rows, size_t cols, bool requires_grad = false);
  static Tensor full(size_t rows, size_t cols, double v, bool requires_grad = false);
  static Tensor from_values(size_t rows, size_t cols, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar_of(double v, bool requires_grad = false);
  static Tensor row(const std::vector<double>& values, bool requires_grad = false);

  bool empty() const { return node_ == nullptr; }
  size_t rows() const { return node_->rows; }
  size_t cols() const { return node_->cols; }
  size_t size() const { return node_->size(); }

  const std::vector<double>& values() const { return node_->value; }
  std::vector<double>& values() { return node_->value; }
  const std::vector<double>& grad() const { return node_->grad; }
  std::vector<double>& grad() { return node_->grad; }

  double at(size_t r, size_t c) const { return node_->value[r * node_->cols + c]; }
  double& at(size_t r, size_t c) { return node_->value[r * node_->cols + c]; }
  double item() const;  // value of a 1x1 tensor

  bool requires_grad() const { return node_->requires_grad; }
  void zero_grad() { std::fill(node_->grad.begin(), node_->grad.end(), 0.0); }

  // Leaf copy of the current value, detached from the graph.
  Tensor detached() const;

  TensorNode* node() const { return node_.get(); }
  const NodePtr& ptr() const { return node_; }

 private:
  NodePtr node_;
};

// ---- op set ----
Tensor matmul(const Tensor& a, const Tensor& b);
// add/mul accept equal shapes, a 1xC row broadcast over rows, or a 1x1 scalar
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor add_const(const Tensor& a, double c);
Tensor relu(const Tensor& a);
Tensor tanh_op(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor exp_op(const Tensor& a);
Tensor log_op(const Tensor& a);
Tensor clamp(const Tensor& a, double lo, double hi);
Tensor mean(const Tensor& a);        // 1x1, over all entries
Tensor sum(const Tensor& a);         // 1x1, over all entries
Tensor logsumexp(const Tensor& a);   // 1x1, max-shift stable
Tensor softmax_rows(const Tensor& a);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice(const Tensor& a, size_t r0, size_t r1, size_t c0, size_t c1);
Tensor permute_rows(const Tensor& a, const std::vector<size_t>& indices);
Tensor reshape(const Tensor& a, size_t rows, size_t cols);
Tensor transpose(const Tensor& a);
Tensor mse(const Tensor& pred, const Tensor& target);  // 1x1, mean over entries

// Backward pass from a 1x1 root. Gradients of reachable requires_grad
// nodes are accumulated into .grad; calling twice adds the same
// contribution twice.
void backward(const Tensor& root);

// C += A * B kernels shared by forward and backward paths.
void mm_nn_acc(const double* a, const double* b, double* c, size_t n, size_t k, size_t m);
void mm_nt_acc(const double* a, const double* b, double* c, size_t n, size_t k, size_t m);
void mm_tn_acc(const double* a, const double* b, double* c, size_t n, size_t k, size_t m);

}  // namespace bcib
