#pragma once

#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "domainmix/matrix.hpp"

namespace domainmix {

// Plain forward kernels, shared by the tape ops and the no-grad model paths.
Matrix affine_forward(const Matrix& x, const Matrix& w, const Matrix& b);
Matrix relu_forward(const Matrix& x);
// Row-wise softmax with max subtraction; rows sum to 1 within 1e-12.
Matrix softmax_rows(const Matrix& x);
// Row-wise L2 normalization; all-zero rows stay zero.
Matrix l2_normalize_rows(const Matrix& x);

// Reverse-mode tape over Matrix values. One tape records one forward pass;
// backward() walks the recording in reverse and accumulates gradients into
// per-node slots. Parameters are named leaves whose gradients are collected
// by name for the optimizer.
class GradTape {
 public:
  using NodeId = int;

  NodeId constant(Matrix value);
  NodeId param(const std::string& name, const Matrix& value);

  NodeId matmul(NodeId a, NodeId b);
  // x[BxI] * w[IxO] + row-broadcast b[1xO]
  NodeId affine(NodeId x, NodeId w, NodeId b);
  NodeId add(NodeId a, NodeId b);
  NodeId relu(NodeId x);
  NodeId softmax(NodeId x);
  NodeId concat_cols(NodeId a, NodeId b);
  NodeId normalize_rows(NodeId x);
  NodeId scale(NodeId x, double factor);
  NodeId sum_all(NodeId x);
  NodeId mean_all(NodeId x);
  // Weighted sum of 1x1 scalars.
  NodeId weighted_sum(const std::vector<std::pair<double, NodeId>>& terms);

  // Extension point for fused ops (the loss heads live in losses.cpp).
  // backward_fn(tape, self) runs only when the node requires grad; it must
  // accumulate into parent grads via grad_ref().
  NodeId make_node(Matrix value, const std::vector<NodeId>& parents, std::function<void(GradTape&, NodeId)> backward_fn);

  const Matrix& value(NodeId id) const;
  double scalar(NodeId id) const;
  bool requires_grad(NodeId id) const;

  // Seeds d(loss)/d(loss) = seed and back-propagates. loss must be 1x1.
  // Throws std::logic_error if nothing was recorded or if already run.
  void backward(NodeId loss, double seed = 1.0);

  const Matrix& grad(NodeId id) const;
  Matrix& grad_ref(NodeId id);

  // Gradients of all named parameters, by name. Valid after backward().
  std::map<std::string, Matrix> param_grads() const;

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    bool needs_grad = false;
    std::string param_name;
    std::function<void(GradTape&, NodeId)> backward_fn;
  };

  NodeId check(NodeId id) const;
  bool any_needs_grad(const std::vector<NodeId>& ids) const;

  std::vector<Node> nodes_;
  std::map<std::string, NodeId> params_;
  bool backward_done_ = false;
};

}  // namespace domainmix
