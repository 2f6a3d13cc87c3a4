#include "domainmix/tape.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace domainmix {

Matrix affine_forward(const Matrix& x, const Matrix& w, const Matrix& b) {
  return add_row_broadcast(matmul(x, w), b);
}

Matrix relu_forward(const Matrix& x) {
  Matrix out = x;
  for (double& v : out.data) v = v > 0.0 ? v : 0.0;
  return out;
}

Matrix softmax_rows(const Matrix& x) {
  Matrix out = x;
  for (int i = 0; i < x.rows; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (int j = 0; j < x.cols; ++j) mx = std::max(mx, x(i, j));
    double sum = 0.0;
    for (int j = 0; j < x.cols; ++j) {
      const double e = std::exp(x(i, j) - mx);
      out(i, j) = e;
      sum += e;
    }
    for (int j = 0; j < x.cols; ++j) out(i, j) /= sum;
  }
  return out;
}

Matrix l2_normalize_rows(const Matrix& x) {
  Matrix out = x;
  for (int i = 0; i < x.rows; ++i) {
    double sq = 0.0;
    for (int j = 0; j < x.cols; ++j) sq += x(i, j) * x(i, j);
    const double norm = std::sqrt(sq);
    if (norm == 0.0) continue;  // zero rows stay zero
    for (int j = 0; j < x.cols; ++j) out(i, j) /= norm;
  }
  return out;
}

GradTape::NodeId GradTape::check(NodeId id) const {
  if (id < 0 || id >= static_cast<NodeId>(nodes_.size())) {
    throw std::logic_error("GradTape: invalid node id " + std::to_string(id));
  }
  return id;
}

bool GradTape::any_needs_grad(const std::vector<NodeId>& ids) const {
  for (const NodeId id : ids) {
    if (nodes_[check(id)].needs_grad) return true;
  }
  return false;
}

GradTape::NodeId GradTape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = false;
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size()) - 1;
}

GradTape::NodeId GradTape::param(const std::string& name, const Matrix& value) {
  if (params_.count(name)) {
    throw std::logic_error("GradTape: duplicate parameter '" + name + "'");
  }
  Node n;
  n.value = value;
  n.needs_grad = true;
  n.param_name = name;
  nodes_.push_back(std::move(n));
  const NodeId id = static_cast<NodeId>(nodes_.size()) - 1;
  params_[name] = id;
  return id;
}

GradTape::NodeId GradTape::make_node(Matrix value, const std::vector<NodeId>& parents,
                                     std::function<void(GradTape&, NodeId)> backward_fn) {
  Node n;
  n.value = std::move(value);
  n.needs_grad = any_needs_grad(parents);
  if (n.needs_grad) n.backward_fn = std::move(backward_fn);
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size()) - 1;
}

GradTape::NodeId GradTape::matmul(NodeId a, NodeId b) {
  Matrix out = domainmix::matmul(value(a), value(b));
  return make_node(std::move(out), {a, b}, [a, b](GradTape& t, NodeId self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(a)) t.grad_ref(a) = domainmix::add(t.grad_ref(a), domainmix::matmul(g, transpose(t.value(b))));
    if (t.requires_grad(b)) t.grad_ref(b) = domainmix::add(t.grad_ref(b), domainmix::matmul(transpose(t.value(a)), g));
  });
}

GradTape::NodeId GradTape::affine(NodeId x, NodeId w, NodeId b) {
  Matrix out = affine_forward(value(x), value(w), value(b));
  return make_node(std::move(out), {x, w, b}, [x, w, b](GradTape& t, NodeId self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(x)) t.grad_ref(x) = domainmix::add(t.grad_ref(x), domainmix::matmul(g, transpose(t.value(w))));
    if (t.requires_grad(w)) t.grad_ref(w) = domainmix::add(t.grad_ref(w), domainmix::matmul(transpose(t.value(x)), g));
    if (t.requires_grad(b)) t.grad_ref(b) = domainmix::add(t.grad_ref(b), column_sums(g));
  });
}

GradTape::NodeId GradTape::add(NodeId a, NodeId b) {
  Matrix out = domainmix::add(value(a), value(b));
  return make_node(std::move(out), {a, b}, [a, b](GradTape& t, NodeId self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(a)) t.grad_ref(a) = domainmix::add(t.grad_ref(a), g);
    if (t.requires_grad(b)) t.grad_ref(b) = domainmix::add(t.grad_ref(b), g);
  });
}

GradTape::NodeId GradTape::relu(NodeId x) {
  Matrix out = relu_forward(value(x));
  return make_node(std::move(out), {x}, [x](GradTape& t, NodeId self) {
    if (!t.requires_grad(x)) return;
    const Matrix& g = t.grad(self);
    const Matrix& vx = t.value(x);
    Matrix& gx = t.grad_ref(x);
    // subgradient at 0 is 0
    for (size_t i = 0; i < gx.data.size(); ++i) {
      if (vx.data[i] > 0.0) gx.data[i] += g.data[i];
    }
  });
}

GradTape::NodeId GradTape::softmax(NodeId x) {
  Matrix out = softmax_rows(value(x));
  return make_node(std::move(out), {x}, [x](GradTape& t, NodeId self) {
    if (!t.requires_grad(x)) return;
    const Matrix& g = t.grad(self);
    const Matrix& y = t.value(self);
    Matrix& gx = t.grad_ref(x);
    for (int i = 0; i < y.rows; ++i) {
      double dot = 0.0;
      for (int j = 0; j < y.cols; ++j) dot += g(i, j) * y(i, j);
      for (int j = 0; j < y.cols; ++j) gx(i, j) += y(i, j) * (g(i, j) - dot);
    }
  });
}

GradTape::NodeId GradTape::concat_cols(NodeId a, NodeId b) {
  const Matrix& va = value(a);
  const Matrix& vb = value(b);
  if (va.rows != vb.rows) throw std::invalid_argument("concat_cols: row mismatch");
  Matrix out(va.rows, va.cols + vb.cols);
  for (int i = 0; i < va.rows; ++i) {
    for (int j = 0; j < va.cols; ++j) out(i, j) = va(i, j);
    for (int j = 0; j < vb.cols; ++j) out(i, va.cols + j) = vb(i, j);
  }
  return make_node(std::move(out), {a, b}, [a, b](GradTape& t, NodeId self) {
    const Matrix& g = t.grad(self);
    const int ca = t.value(a).cols;
    const int cb = t.value(b).cols;
    if (t.requires_grad(a)) {
      Matrix& ga = t.grad_ref(a);
      for (int i = 0; i < g.rows; ++i)
        for (int j = 0; j < ca; ++j) ga(i, j) += g(i, j);
    }
    if (t.requires_grad(b)) {
      Matrix& gb = t.grad_ref(b);
      for (int i = 0; i < g.rows; ++i)
        for (int j = 0; j < cb; ++j) gb(i, j) += g(i, ca + j);
    }
  });
}

GradTape::NodeId GradTape::normalize_rows(NodeId x) {
  Matrix out = l2_normalize_rows(value(x));
  return make_node(std::move(out), {x}, [x](GradTape& t, NodeId self) {
    if (!t.requires_grad(x)) return;
    const Matrix& g = t.grad(self);
    const Matrix& vx = t.value(x);
    const Matrix& y = t.value(self);
    Matrix& gx = t.grad_ref(x);
    for (int i = 0; i < vx.rows; ++i) {
      double sq = 0.0;
      for (int j = 0; j < vx.cols; ++j) sq += vx(i, j) * vx(i, j);
      const double norm = std::sqrt(sq);
      if (norm == 0.0) continue;
      double dot = 0.0;
      for (int j = 0; j < vx.cols; ++j) dot += g(i, j) * y(i, j);
      for (int j = 0; j < vx.cols; ++j) gx(i, j) += (g(i, j) - dot * y(i, j)) / norm;
    }
  });
}

GradTape::NodeId GradTape::scale(NodeId x, double factor) {
  Matrix out = domainmix::scale(value(x), factor);
  return make_node(std::move(out), {x}, [x, factor](GradTape& t, NodeId self) {
    if (!t.requires_grad(x)) return;
    const Matrix& g = t.grad(self);
    Matrix& gx = t.grad_ref(x);
    for (size_t i = 0; i < gx.data.size(); ++i) gx.data[i] += factor * g.data[i];
  });
}

GradTape::NodeId GradTape::sum_all(NodeId x) {
  double s = 0.0;
  for (const double v : value(x).data) s += v;
  return make_node(Matrix::filled(1, 1, s), {x}, [x](GradTape& t, NodeId self) {
    if (!t.requires_grad(x)) return;
    const double g = t.grad(self)(0, 0);
    for (double& v : t.grad_ref(x).data) v += g;
  });
}

GradTape::NodeId GradTape::mean_all(NodeId x) {
  const Matrix& vx = value(x);
  if (vx.empty()) throw std::invalid_argument("mean_all: empty matrix");
  double s = 0.0;
  for (const double v : vx.data) s += v;
  const double inv = 1.0 / static_cast<double>(vx.size());
  return make_node(Matrix::filled(1, 1, s * inv), {x}, [x, inv](GradTape& t, NodeId self) {
    if (!t.requires_grad(x)) return;
    const double g = t.grad(self)(0, 0) * inv;
    for (double& v : t.grad_ref(x).data) v += g;
  });
}

GradTape::NodeId GradTape::weighted_sum(const std::vector<std::pair<double, NodeId>>& terms) {
  double s = 0.0;
  std::vector<NodeId> parents;
  for (const auto& [w, id] : terms) {
    s += w * scalar(id);
    parents.push_back(id);
  }
  auto weights = terms;
  return make_node(Matrix::filled(1, 1, s), parents, [weights](GradTape& t, NodeId self) {
    const double g = t.grad(self)(0, 0);
    for (const auto& [w, id] : weights) {
      if (t.requires_grad(id)) t.grad_ref(id)(0, 0) += w * g;
    }
  });
}

const Matrix& GradTape::value(NodeId id) const { return nodes_[check(id)].value; }

double GradTape::scalar(NodeId id) const {
  const Matrix& v = value(id);
  if (v.rows != 1 || v.cols != 1) throw std::invalid_argument("scalar: node is not 1x1");
  return v(0, 0);
}

bool GradTape::requires_grad(NodeId id) const { return nodes_[check(id)].needs_grad; }

void GradTape::backward(NodeId loss, double seed) {
  if (nodes_.empty()) throw std::logic_error("GradTape::backward: no forward pass recorded");
  if (backward_done_) throw std::logic_error("GradTape::backward: already run on this tape");
  check(loss);
  const Matrix& lv = nodes_[loss].value;
  if (lv.rows != 1 || lv.cols != 1) throw std::invalid_argument("GradTape::backward: loss must be 1x1");
  backward_done_ = true;
  for (Node& n : nodes_) {
    if (n.needs_grad) n.grad = Matrix::zeros(n.value.rows, n.value.cols);
  }
  if (!nodes_[loss].needs_grad) return;  // no parameters feed the loss
  nodes_[loss].grad(0, 0) = seed;
  for (NodeId id = loss; id >= 0; --id) {
    Node& n = nodes_[id];
    if (n.needs_grad && n.backward_fn) n.backward_fn(*this, id);
  }
}

const Matrix& GradTape::grad(NodeId id) const {
  const Node& n = nodes_[check(id)];
  if (!backward_done_) throw std::logic_error("GradTape::grad: backward() has not run");
  if (!n.needs_grad) throw std::logic_error("GradTape::grad: node does not require grad");
  return n.grad;
}

Matrix& GradTape::grad_ref(NodeId id) {
  Node& n = nodes_[check(id)];
  if (!n.needs_grad) throw std::logic_error("GradTape::grad_ref: node does not require grad");
  return n.grad;
}

std::map<std::string, Matrix> GradTape::param_grads() const {
  if (!backward_done_) throw std::logic_error("GradTape::param_grads: backward() has not run");
  std::map<std::string, Matrix> out;
  for (const auto& [name, id] : params_) out[name] = nodes_[id].grad;
  return out;
}

}  // namespace domainmix
