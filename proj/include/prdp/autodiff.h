// Copyright 2026 The PRDP Lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Minimal reverse-mode differentiation over dense, row-major, double
// precision tensors.
//
// Graphs are built once through GraphBuilder and are immutable afterwards.
// Leaves are either named inputs (bound per evaluation) or constants baked
// into the graph. Evaluation is const and keeps no state on the graph, so a
// single graph can be evaluated concurrently with different bindings.
//
// Piecewise ops use these conventions:
//   clip(x, lo, hi)  gradient 1 for lo <= x <= hi, 0 outside (no
//                    straight-through estimate)
//   max(a, b)        gradient goes to a when a >= b, otherwise to b
//   min(a, b)        gradient goes to a when a <= b, otherwise to b

#ifndef PRDP_AUTODIFF_H_
#define PRDP_AUTODIFF_H_

#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace prdp::ad {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

class Tensor {
 public:
  // Scalar zero.
  Tensor() : data_(1, 0.0) {}
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape);
  static Tensor filled(Shape shape, double value);
  static Tensor scalar(double value) { return Tensor({}, {value}); }
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }
  std::vector<double>& values() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double at(std::size_t r, std::size_t c) const {
    return data_[r * shape_[1] + c];
  }

  // Value of a single-element tensor.
  double item() const;
  bool all_finite() const;

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

using Bindings = std::map<std::string, Tensor>;

// Handle to a node inside a GraphBuilder.
struct Var {
  int id = -1;
};

enum class Op : std::uint8_t {
  kInput,
  kConstant,
  kAdd,
  kSub,
  kMul,
  kNeg,
  kScale,
  kAddScalar,
  kSquare,
  kTanh,
  kExp,
  kMatMul,
  kAddRow,
  kRowSum,
  kSum,
  kMean,
  kReshape,
  kBroadcast,
  kClip,
  kMax,
  kMin,
  kGather,
  kLogSoftmaxRows,
};

const char* op_name(Op op);

struct Node {
  Op op = Op::kConstant;
  int a = -1;
  int b = -1;
  Shape shape;
  double scalar = 0.0;
  std::string name;
  bool learnable = false;
  bool needs_grad = false;
  std::shared_ptr<const Tensor> value;  // constants; clip lower bound
  std::shared_ptr<const Tensor> upper;  // clip upper bound
  std::shared_ptr<const std::vector<std::size_t>> index;
};

struct Gradients {
  Tensor output;
  std::map<std::string, Tensor> grads;
};

class Graph {
 public:
  Tensor forward(const Bindings& inputs) const;

  // Same as forward, additionally recording the branch taken by every
  // element of every clip/max/min node. Two evaluations with equal branch
  // records lie on the same smooth piece.
  Tensor forward(const Bindings& inputs,
                 std::vector<std::uint8_t>* branches) const;

  // Output must be a single element. Returns d output / d input for every
  // learnable input.
  Gradients backward(const Bindings& inputs) const;

  const std::vector<Node>& nodes() const { return nodes_; }
  int output() const { return output_; }
  const Shape& output_shape() const { return nodes_[output_].shape; }

  // Names and shapes of all inputs, in creation order.
  std::vector<std::pair<std::string, Shape>> inputs() const;
  std::vector<std::string> learnable_inputs() const;

 private:
  friend class GraphBuilder;
  std::vector<Node> nodes_;
  int output_ = -1;

  void evaluate(const Bindings& inputs, std::vector<Tensor>& storage,
                std::vector<const Tensor*>& values,
                std::vector<std::uint8_t>* branches) const;
};

class GraphBuilder {
 public:
  // Named leaf bound at evaluation time. Non-learnable inputs receive no
  // gradient.
  Var input(const std::string& name, Shape shape, bool learnable = true);
  Var constant(Tensor value);
  Var scalar(double value) { return constant(Tensor::scalar(value)); }

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var neg(Var a);
  Var scale(Var a, double factor);
  Var add_scalar(Var a, double offset);
  Var square(Var a);
  Var tanh(Var a);
  Var exp(Var a);
  // [m,k] x [k,n] -> [m,n]
  Var matmul(Var a, Var b);
  // [m,n] + [n] broadcast over rows.
  Var add_row(Var a, Var row);
  // [m,n] -> [m]
  Var row_sum(Var a);
  Var sum(Var a);
  Var mean(Var a);
  Var reshape(Var a, Shape shape);
  // Single element -> shape.
  Var broadcast(Var a, Shape shape);
  Var clip(Var a, double lo, double hi);
  // Element-wise bounds; each bound has one element or matches a's size.
  Var clip(Var a, Tensor lo, Tensor hi);
  Var maximum(Var a, Var b);
  Var minimum(Var a, Var b);
  // Flattened element selection; result is rank 1.
  Var gather(Var a, std::vector<std::size_t> index);
  Var log_softmax_rows(Var a);

  const Shape& shape(Var v) const;

  // Keeps only the ancestors of `output`.
  Graph build(Var output) const;

 private:
  std::vector<Node> nodes_;

  const Node& node(Var v) const;
  Var push(Node n);
  Var unary(Op op, Var a, Shape shape, double scalar = 0.0);
  Var binary_same(Op op, Var a, Var b);
};

Tensor forward(const Graph& graph, const Bindings& inputs);
Gradients backward(const Graph& graph, const Bindings& inputs);

struct FiniteDifferenceReport {
  double max_rel_error = 0.0;
  std::size_t coordinates_checked = 0;
  // "name[i]" for coordinates whose +h / -h evaluations straddle a clip,
  // max, or min kink. These are reported but excluded from max_rel_error.
  std::vector<std::string> boundary_coordinates;
};

// Central differences against the analytic gradient of every learnable input:
// max over coordinates of |fd - analytic| / max(1, |analytic|).
FiniteDifferenceReport finite_difference_check(const Graph& graph,
                                               const Bindings& at,
                                               double h = 1e-5);

}  // namespace prdp::ad

#endif  // PRDP_AUTODIFF_H_
