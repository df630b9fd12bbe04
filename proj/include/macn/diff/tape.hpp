#pragma once

#include <functional>
#include <span>

#include "macn/diff/params.hpp"
#include "macn/diff/tensor.hpp"

namespace macn::diff {

/// Reverse-mode tape. Records every primitive application in topological
/// order; backward() walks the record once in reverse. One tape per rollout
/// worker; cleared (or discarded) after each update.
class Tape {
 public:
  // Leaves.
  TensorRef constant(Shape shape, std::vector<double> values);
  TensorRef constant_scalar(double v);
  TensorRef zeros(Shape shape);
  TensorRef onehot(int n, int index);
  TensorRef leaf(Shape shape, std::vector<double> values, bool requires_grad);
  TensorRef param(Param& p);

  // Network primitives.
  TensorRef conv2d(TensorRef input, TensorRef kernel, TensorRef bias);
  TensorRef maxpool2d(TensorRef input, int window);
  TensorRef channel_max(TensorRef input);
  TensorRef dense(TensorRef x, TensorRef W, TensorRef b, Activation act);
  struct LstmOut {
    TensorRef h;
    TensorRef c;
  };
  LstmOut lstm_step(TensorRef x, TensorRef h, TensorRef c, TensorRef Wx,
                    TensorRef Wh, TensorRef b);
  TensorRef softmax(TensorRef x);

  // Elementwise and shape plumbing.
  TensorRef add(TensorRef a, TensorRef b);
  TensorRef sub(TensorRef a, TensorRef b);
  TensorRef mul(TensorRef a, TensorRef b);
  TensorRef div(TensorRef a, TensorRef b);
  TensorRef mul_scalar(TensorRef x, TensorRef s);
  TensorRef affine(TensorRef x, double scale, double shift);
  TensorRef relu(TensorRef x);
  TensorRef tanh_act(TensorRef x);
  TensorRef sigmoid(TensorRef x);
  TensorRef softplus(TensorRef x);
  TensorRef vsqrt(TensorRef x);
  TensorRef vmax_const(TensorRef x, double c);
  TensorRef log_floor(TensorRef x, double floor);
  TensorRef reshape(TensorRef x, Shape shape);
  TensorRef concat(std::span<const TensorRef> parts);
  TensorRef concat2(TensorRef a, TensorRef b);
  TensorRef concat3(TensorRef a, TensorRef b, TensorRef c);
  TensorRef slice(TensorRef x, int offset, int len);
  TensorRef sum(TensorRef x);
  TensorRef mean(TensorRef x);
  TensorRef gather(TensorRef x, int index);
  TensorRef matvec(TensorRef M, TensorRef x);
  TensorRef vecmat(TensorRef w, TensorRef M);
  TensorRef outer(TensorRef a, TensorRef b);
  TensorRef row_sum(TensorRef M);
  /// out[i] = prod_{j<i} x[j]; out[0] = 1.
  TensorRef cumprod_exclusive(TensorRef x);

  /// Seeds d(loss)=1, sweeps the tape once in reverse, then accumulates
  /// leased-param gradients into their Param::grad. Loss must be scalar.
  void backward(TensorRef loss);

  std::span<const double> val(TensorRef t) const;
  std::span<const double> grad(TensorRef t) const;
  std::vector<double> val_copy(TensorRef t) const;
  double scalar(TensorRef t) const;
  const Shape& shape(TensorRef t) const;
  int size_of(TensorRef t) const;

  void clear();
  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Shape shape;
    std::vector<double> val;
    std::vector<double> grad;
    std::function<void(Tape&)> back;
    Param* bound_param = nullptr;
    bool requires_grad = false;
    bool has_grad = false;
  };

  std::vector<Node> nodes_;

  int push(Shape shape, std::vector<double> values, bool requires_grad,
           std::function<void(Tape&)> back);
  Node& at(TensorRef t);
  const Node& at(TensorRef t) const;
  bool rg(TensorRef t) const { return at(t).requires_grad; }
  const double* v(TensorRef t) const { return at(t).val.data(); }
  /// Gradient pointer for accumulation; marks the node as carrying gradient.
  double* g(TensorRef t);
  const double* gr(TensorRef t) const { return at(t).grad.data(); }
};

}  // namespace macn::diff
