// Copyright 2026 The PRDP Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include "prdp/autodiff.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "prdp/error.h"

namespace prdp::ad {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  for (std::size_t d : shape_) {
    if (d == 0) throw ShapeError("tensor dimensions must be positive");
  }
  if (data_.size() != shape_size(shape_)) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_string(shape_));
  }
}

Tensor Tensor::zeros(Shape shape) { return filled(std::move(shape), 0.0); }

Tensor Tensor::filled(Shape shape, double value) {
  std::size_t n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::vector(std::vector<double> values) {
  std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols,
                      std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("rows() needs a rank-2 tensor");
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("cols() needs a rank-2 tensor");
  return shape_[1];
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw ShapeError("item() on tensor of shape " + shape_string(shape_));
  }
  return data_[0];
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

const char* op_name(Op op) {
  switch (op) {
    case Op::kInput: return "input";
    case Op::kConstant: return "constant";
    case Op::kAdd: return "add";
    case Op::kSub: return "sub";
    case Op::kMul: return "mul";
    case Op::kNeg: return "neg";
    case Op::kScale: return "scale";
    case Op::kAddScalar: return "add_scalar";
    case Op::kSquare: return "square";
    case Op::kTanh: return "tanh";
    case Op::kExp: return "exp";
    case Op::kMatMul: return "matmul";
    case Op::kAddRow: return "add_row";
    case Op::kRowSum: return "row_sum";
    case Op::kSum: return "sum";
    case Op::kMean: return "mean";
    case Op::kReshape: return "reshape";
    case Op::kBroadcast: return "broadcast";
    case Op::kClip: return "clip";
    case Op::kMax: return "max";
    case Op::kMin: return "min";
    case Op::kGather: return "gather";
    case Op::kLogSoftmaxRows: return "log_softmax_rows";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// GraphBuilder

const Node& GraphBuilder::node(Var v) const {
  if (v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size()) {
    throw std::invalid_argument("Var does not belong to this builder");
  }
  return nodes_[v.id];
}

const Shape& GraphBuilder::shape(Var v) const { return node(v).shape; }

Var GraphBuilder::push(Node n) {
  if (n.a >= 0) n.needs_grad = nodes_[n.a].needs_grad;
  if (n.b >= 0) n.needs_grad = n.needs_grad || nodes_[n.b].needs_grad;
  nodes_.push_back(std::move(n));
  return Var{static_cast<int>(nodes_.size()) - 1};
}

Var GraphBuilder::unary(Op op, Var a, Shape shape, double scalar) {
  node(a);
  Node n;
  n.op = op;
  n.a = a.id;
  n.shape = std::move(shape);
  n.scalar = scalar;
  return push(std::move(n));
}

Var GraphBuilder::binary_same(Op op, Var a, Var b) {
  if (node(a).shape != node(b).shape) {
    throw ShapeError(std::string(op_name(op)) + ": shape " +
                     shape_string(node(a).shape) + " vs " +
                     shape_string(node(b).shape));
  }
  Node n;
  n.op = op;
  n.a = a.id;
  n.b = b.id;
  n.shape = node(a).shape;
  return push(std::move(n));
}

Var GraphBuilder::input(const std::string& name, Shape shape, bool learnable) {
  for (const Node& n : nodes_) {
    if (n.op == Op::kInput && n.name == name) {
      throw std::invalid_argument("duplicate input name: " + name);
    }
  }
  shape_size(shape);
  Node n;
  n.op = Op::kInput;
  n.name = name;
  n.shape = std::move(shape);
  n.learnable = learnable;
  n.needs_grad = learnable;
  return push(std::move(n));
}

Var GraphBuilder::constant(Tensor value) {
  Node n;
  n.op = Op::kConstant;
  n.shape = value.shape();
  n.value = std::make_shared<const Tensor>(std::move(value));
  return push(std::move(n));
}

Var GraphBuilder::add(Var a, Var b) { return binary_same(Op::kAdd, a, b); }
Var GraphBuilder::sub(Var a, Var b) { return binary_same(Op::kSub, a, b); }
Var GraphBuilder::mul(Var a, Var b) { return binary_same(Op::kMul, a, b); }
Var GraphBuilder::maximum(Var a, Var b) { return binary_same(Op::kMax, a, b); }
Var GraphBuilder::minimum(Var a, Var b) { return binary_same(Op::kMin, a, b); }

Var GraphBuilder::neg(Var a) { return unary(Op::kNeg, a, shape(a)); }
Var GraphBuilder::scale(Var a, double factor) {
  return unary(Op::kScale, a, shape(a), factor);
}
Var GraphBuilder::add_scalar(Var a, double offset) {
  return unary(Op::kAddScalar, a, shape(a), offset);
}
Var GraphBuilder::square(Var a) { return unary(Op::kSquare, a, shape(a)); }
Var GraphBuilder::tanh(Var a) { return unary(Op::kTanh, a, shape(a)); }
Var GraphBuilder::exp(Var a) { return unary(Op::kExp, a, shape(a)); }
Var GraphBuilder::sum(Var a) { return unary(Op::kSum, a, {}); }
Var GraphBuilder::mean(Var a) { return unary(Op::kMean, a, {}); }

Var GraphBuilder::matmul(Var a, Var b) {
  const Shape& sa = shape(a);
  const Shape& sb = shape(b);
  if (sa.size() != 2 || sb.size() != 2 || sa[1] != sb[0]) {
    throw ShapeError("matmul: " + shape_string(sa) + " x " + shape_string(sb));
  }
  Node n;
  n.op = Op::kMatMul;
  n.a = a.id;
  n.b = b.id;
  n.shape = {sa[0], sb[1]};
  return push(std::move(n));
}

Var GraphBuilder::add_row(Var a, Var row) {
  const Shape& sa = shape(a);
  const Shape& sr = shape(row);
  if (sa.size() != 2 || sr.size() != 1 || sr[0] != sa[1]) {
    throw ShapeError("add_row: " + shape_string(sa) + " + " +
                     shape_string(sr));
  }
  Node n;
  n.op = Op::kAddRow;
  n.a = a.id;
  n.b = row.id;
  n.shape = sa;
  return push(std::move(n));
}

Var GraphBuilder::row_sum(Var a) {
  const Shape& sa = shape(a);
  if (sa.size() != 2) throw ShapeError("row_sum: " + shape_string(sa));
  return unary(Op::kRowSum, a, {sa[0]});
}

Var GraphBuilder::reshape(Var a, Shape new_shape) {
  if (shape_size(new_shape) != shape_size(shape(a))) {
    throw ShapeError("reshape: " + shape_string(shape(a)) + " -> " +
                     shape_string(new_shape));
  }
  return unary(Op::kReshape, a, std::move(new_shape));
}

Var GraphBuilder::broadcast(Var a, Shape new_shape) {
  if (shape_size(shape(a)) != 1) {
    throw ShapeError("broadcast needs a single-element operand, got " +
                     shape_string(shape(a)));
  }
  shape_size(new_shape);
  return unary(Op::kBroadcast, a, std::move(new_shape));
}

Var GraphBuilder::clip(Var a, double lo, double hi) {
  return clip(a, Tensor::scalar(lo), Tensor::scalar(hi));
}

Var GraphBuilder::clip(Var a, Tensor lo, Tensor hi) {
  std::size_t n = shape_size(shape(a));
  for (const Tensor* t : {&lo, &hi}) {
    if (t->size() != 1 && t->size() != n) {
      throw ShapeError("clip bound of size " + std::to_string(t->size()) +
                       " for operand of size " + std::to_string(n));
    }
  }
  for (std::size_t i = 0; i < std::max(lo.size(), hi.size()); ++i) {
    double l = lo[lo.size() == 1 ? 0 : i];
    double h = hi[hi.size() == 1 ? 0 : i];
    if (!(l <= h)) throw std::invalid_argument("clip: lower bound above upper");
  }
  Node nd;
  nd.op = Op::kClip;
  nd.a = a.id;
  nd.shape = shape(a);
  nd.value = std::make_shared<const Tensor>(std::move(lo));
  nd.upper = std::make_shared<const Tensor>(std::move(hi));
  return push(std::move(nd));
}

Var GraphBuilder::gather(Var a, std::vector<std::size_t> index) {
  std::size_t n = shape_size(shape(a));
  if (index.empty()) throw ShapeError("gather: empty index");
  for (std::size_t i : index) {
    if (i >= n) throw ShapeError("gather: index out of range");
  }
  Node nd;
  nd.op = Op::kGather;
  nd.a = a.id;
  nd.shape = {index.size()};
  nd.index = std::make_shared<const std::vector<std::size_t>>(std::move(index));
  return push(std::move(nd));
}

Var GraphBuilder::log_softmax_rows(Var a) {
  if (shape(a).size() != 2) {
    throw ShapeError("log_softmax_rows: " + shape_string(shape(a)));
  }
  return unary(Op::kLogSoftmaxRows, a, shape(a));
}

Graph GraphBuilder::build(Var output) const {
  node(output);
  std::vector<char> keep(nodes_.size(), 0);
  keep[output.id] = 1;
  for (int i = output.id; i >= 0; --i) {
    if (!keep[i]) continue;
    if (nodes_[i].a >= 0) keep[nodes_[i].a] = 1;
    if (nodes_[i].b >= 0) keep[nodes_[i].b] = 1;
  }
  std::vector<int> remap(nodes_.size(), -1);
  Graph g;
  for (int i = 0; i <= output.id; ++i) {
    if (!keep[i]) continue;
    Node n = nodes_[i];
    if (n.a >= 0) n.a = remap[n.a];
    if (n.b >= 0) n.b = remap[n.b];
    remap[i] = static_cast<int>(g.nodes_.size());
    g.nodes_.push_back(std::move(n));
  }
  g.output_ = remap[output.id];
  return g;
}

// ---------------------------------------------------------------------------
// Evaluation

namespace {

double bound_at(const Tensor& t, std::size_t i) {
  return t.size() == 1 ? t[0] : t[i];
}

void check_finite(const Tensor& t, const Node& n, std::size_t index) {
  if (!t.all_finite()) {
    throw NonFiniteError(std::string("non-finite value produced by ") +
                         op_name(n.op) + " (node " + std::to_string(index) +
                         (n.name.empty() ? "" : ", input '" + n.name + "'") +
                         ")");
  }
}

}  // namespace

std::vector<std::pair<std::string, Shape>> Graph::inputs() const {
  std::vector<std::pair<std::string, Shape>> out;
  for (const Node& n : nodes_) {
    if (n.op == Op::kInput) out.emplace_back(n.name, n.shape);
  }
  return out;
}

std::vector<std::string> Graph::learnable_inputs() const {
  std::vector<std::string> out;
  for (const Node& n : nodes_) {
    if (n.op == Op::kInput && n.learnable) out.push_back(n.name);
  }
  return out;
}

void Graph::evaluate(const Bindings& inputs, std::vector<Tensor>& storage,
                     std::vector<const Tensor*>& values,
                     std::vector<std::uint8_t>* branches) const {
  storage.assign(nodes_.size(), Tensor());
  values.assign(nodes_.size(), nullptr);
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    if (n.op == Op::kInput) {
      auto it = inputs.find(n.name);
      if (it == inputs.end()) {
        throw std::invalid_argument("unbound input: " + n.name);
      }
      if (it->second.shape() != n.shape) {
        throw ShapeError("input '" + n.name + "' bound with shape " +
                         shape_string(it->second.shape()) + ", expected " +
                         shape_string(n.shape));
      }
      check_finite(it->second, n, i);
      values[i] = &it->second;
      continue;
    }
    if (n.op == Op::kConstant) {
      values[i] = n.value.get();
      continue;
    }
    const Tensor& a = *values[n.a];
    const Tensor* b = n.b >= 0 ? values[n.b] : nullptr;
    Tensor out = Tensor::zeros(n.shape);
    auto& o = out.values();
    const auto& av = a.values();
    switch (n.op) {
      case Op::kAdd:
        for (std::size_t k = 0; k < o.size(); ++k) o[k] = av[k] + (*b)[k];
        break;
      case Op::kSub:
        for (std::size_t k = 0; k < o.size(); ++k) o[k] = av[k] - (*b)[k];
        break;
      case Op::kMul:
        for (std::size_t k = 0; k < o.size(); ++k) o[k] = av[k] * (*b)[k];
        break;
      case Op::kNeg:
        for (std::size_t k = 0; k < o.size(); ++k) o[k] = -av[k];
        break;
      case Op::kScale:
        for (std::size_t k = 0; k < o.size(); ++k) o[k] = n.scalar * av[k];
        break;
      case Op::kAddScalar:
        for (std::size_t k = 0; k < o.size(); ++k) o[k] = av[k] + n.scalar;
        break;
      case Op::kSquare:
        for (std::size_t k = 0; k < o.size(); ++k) o[k] = av[k] * av[k];
        break;
      case Op::kTanh:
        for (std::size_t k = 0; k < o.size(); ++k) o[k] = std::tanh(av[k]);
        break;
      case Op::kExp:
        for (std::size_t k = 0; k < o.size(); ++k) o[k] = std::exp(av[k]);
        break;
      case Op::kMatMul: {
        std::size_t m = a.shape()[0], kk = a.shape()[1], nn = b->shape()[1];
        const auto& bv = b->values();
        for (std::size_t r = 0; r < m; ++r) {
          double* orow = &o[r * nn];
          for (std::size_t j = 0; j < kk; ++j) {
            double s = av[r * kk + j];
            if (s == 0.0) continue;
            const double* brow = &bv[j * nn];
            for (std::size_t c = 0; c < nn; ++c) orow[c] += s * brow[c];
          }
        }
        break;
      }
      case Op::kAddRow: {
        std::size_t cols = n.shape[1];
        for (std::size_t k = 0; k < o.size(); ++k) {
          o[k] = av[k] + (*b)[k % cols];
        }
        break;
      }
      case Op::kRowSum: {
        std::size_t cols = a.shape()[1];
        for (std::size_t r = 0; r < n.shape[0]; ++r) {
          double s = 0.0;
          for (std::size_t c = 0; c < cols; ++c) s += av[r * cols + c];
          o[r] = s;
        }
        break;
      }
      case Op::kSum:
        o[0] = std::accumulate(av.begin(), av.end(), 0.0);
        break;
      case Op::kMean:
        o[0] = std::accumulate(av.begin(), av.end(), 0.0) /
               static_cast<double>(av.size());
        break;
      case Op::kReshape:
        o = av;
        break;
      case Op::kBroadcast:
        std::fill(o.begin(), o.end(), av[0]);
        break;
      case Op::kClip:
        for (std::size_t k = 0; k < o.size(); ++k) {
          double lo = bound_at(*n.value, k), hi = bound_at(*n.upper, k);
          double v = av[k];
          std::uint8_t br = 1;
          if (v < lo) {
            v = lo;
            br = 0;
          } else if (v > hi) {
            v = hi;
            br = 2;
          }
          o[k] = v;
          if (branches) branches->push_back(br);
        }
        break;
      case Op::kMax:
        for (std::size_t k = 0; k < o.size(); ++k) {
          bool first = av[k] >= (*b)[k];
          o[k] = first ? av[k] : (*b)[k];
          if (branches) branches->push_back(first ? 0 : 1);
        }
        break;
      case Op::kMin:
        for (std::size_t k = 0; k < o.size(); ++k) {
          bool first = av[k] <= (*b)[k];
          o[k] = first ? av[k] : (*b)[k];
          if (branches) branches->push_back(first ? 0 : 1);
        }
        break;
      case Op::kGather: {
        const auto& idx = *n.index;
        for (std::size_t k = 0; k < idx.size(); ++k) o[k] = av[idx[k]];
        break;
      }
      case Op::kLogSoftmaxRows: {
        std::size_t rows = n.shape[0], cols = n.shape[1];
        for (std::size_t r = 0; r < rows; ++r) {
          const double* in = &av[r * cols];
          double mx = *std::max_element(in, in + cols);
          double s = 0.0;
          for (std::size_t c = 0; c < cols; ++c) s += std::exp(in[c] - mx);
          double lse = mx + std::log(s);
          for (std::size_t c = 0; c < cols; ++c) o[r * cols + c] = in[c] - lse;
        }
        break;
      }
      case Op::kInput:
      case Op::kConstant:
        break;
    }
    check_finite(out, n, i);
    storage[i] = std::move(out);
    values[i] = &storage[i];
  }
}

Tensor Graph::forward(const Bindings& inputs) const {
  return forward(inputs, nullptr);
}

Tensor Graph::forward(const Bindings& inputs,
                      std::vector<std::uint8_t>* branches) const {
  std::vector<Tensor> storage;
  std::vector<const Tensor*> values;
  evaluate(inputs, storage, values, branches);
  return *values[output_];
}

Gradients Graph::backward(const Bindings& inputs) const {
  if (shape_size(nodes_[output_].shape) != 1) {
    throw ShapeError("backward needs a scalar output, got " +
                     shape_string(nodes_[output_].shape));
  }
  std::vector<Tensor> storage;
  std::vector<const Tensor*> values;
  evaluate(inputs, storage, values, nullptr);

  std::vector<Tensor> adj(nodes_.size(), Tensor());
  std::vector<char> has(nodes_.size(), 0);
  auto acc = [&](int idx) -> std::vector<double>& {
    if (!has[idx]) {
      adj[idx] = Tensor::zeros(nodes_[idx].shape);
      has[idx] = 1;
    }
    return adj[idx].values();
  };
  if (nodes_[output_].needs_grad) {
    acc(output_)[0] = 1.0;
  }

  for (int i = output_; i >= 0; --i) {
    const Node& n = nodes_[i];
    if (!has[i] || n.op == Op::kInput || n.op == Op::kConstant) continue;
    const auto& g = adj[i].values();
    const auto& av = values[n.a]->values();
    const Tensor* bt = n.b >= 0 ? values[n.b] : nullptr;
    const bool ga = nodes_[n.a].needs_grad;
    const bool gb = n.b >= 0 && nodes_[n.b].needs_grad;
    const auto& y = values[i]->values();
    switch (n.op) {
      case Op::kAdd:
        if (ga) { auto& d = acc(n.a); for (std::size_t k = 0; k < g.size(); ++k) d[k] += g[k]; }
        if (gb) { auto& d = acc(n.b); for (std::size_t k = 0; k < g.size(); ++k) d[k] += g[k]; }
        break;
      case Op::kSub:
        if (ga) { auto& d = acc(n.a); for (std::size_t k = 0; k < g.size(); ++k) d[k] += g[k]; }
        if (gb) { auto& d = acc(n.b); for (std::size_t k = 0; k < g.size(); ++k) d[k] -= g[k]; }
        break;
      case Op::kMul:
        if (ga) { auto& d = acc(n.a); for (std::size_t k = 0; k < g.size(); ++k) d[k] += g[k] * (*bt)[k]; }
        if (gb) { auto& d = acc(n.b); for (std::size_t k = 0; k < g.size(); ++k) d[k] += g[k] * av[k]; }
        break;
      case Op::kNeg:
        if (ga) { auto& d = acc(n.a); for (std::size_t k = 0; k < g.size(); ++k) d[k] -= g[k]; }
        break;
      case Op::kScale:
        if (ga) { auto& d = acc(n.a); for (std::size_t k = 0; k < g.size(); ++k) d[k] += n.scalar * g[k]; }
        break;
      case Op::kAddScalar:
      case Op::kReshape:
        if (ga) { auto& d = acc(n.a); for (std::size_t k = 0; k < g.size(); ++k) d[k] += g[k]; }
        break;
      case Op::kSquare:
        if (ga) { auto& d = acc(n.a); for (std::size_t k = 0; k < g.size(); ++k) d[k] += 2.0 * av[k] * g[k]; }
        break;
      case Op::kTanh:
        if (ga) { auto& d = acc(n.a); for (std::size_t k = 0; k < g.size(); ++k) d[k] += g[k] * (1.0 - y[k] * y[k]); }
        break;
      case Op::kExp:
        if (ga) { auto& d = acc(n.a); for (std::size_t k = 0; k < g.size(); ++k) d[k] += g[k] * y[k]; }
        break;
      case Op::kMatMul: {
        std::size_t m = nodes_[n.a].shape[0], kk = nodes_[n.a].shape[1],
                    nn = nodes_[n.b].shape[1];
        const auto& bv = bt->values();
        if (ga) {
          auto& d = acc(n.a);
          for (std::size_t r = 0; r < m; ++r) {
            const double* grow = &g[r * nn];
            for (std::size_t j = 0; j < kk; ++j) {
              const double* brow = &bv[j * nn];
              double s = 0.0;
              for (std::size_t c = 0; c < nn; ++c) s += grow[c] * brow[c];
              d[r * kk + j] += s;
            }
          }
        }
        if (gb) {
          auto& d = acc(n.b);
          for (std::size_t r = 0; r < m; ++r) {
            const double* grow = &g[r * nn];
            for (std::size_t j = 0; j < kk; ++j) {
              double s = av[r * kk + j];
              if (s == 0.0) continue;
              double* drow = &d[j * nn];
              for (std::size_t c = 0; c < nn; ++c) drow[c] += s * grow[c];
            }
          }
        }
        break;
      }
      case Op::kAddRow: {
        std::size_t cols = n.shape[1];
        if (ga) { auto& d = acc(n.a); for (std::size_t k = 0; k < g.size(); ++k) d[k] += g[k]; }
        if (gb) { auto& d = acc(n.b); for (std::size_t k = 0; k < g.size(); ++k) d[k % cols] += g[k]; }
        break;
      }
      case Op::kRowSum: {
        if (!ga) break;
        std::size_t cols = nodes_[n.a].shape[1];
        auto& d = acc(n.a);
        for (std::size_t k = 0; k < d.size(); ++k) d[k] += g[k / cols];
        break;
      }
      case Op::kSum:
        if (ga) { auto& d = acc(n.a); for (double& v : d) v += g[0]; }
        break;
      case Op::kMean:
        if (ga) {
          auto& d = acc(n.a);
          double s = g[0] / static_cast<double>(d.size());
          for (double& v : d) v += s;
        }
        break;
      case Op::kBroadcast:
        if (ga) acc(n.a)[0] += std::accumulate(g.begin(), g.end(), 0.0);
        break;
      case Op::kClip:
        if (ga) {
          auto& d = acc(n.a);
          for (std::size_t k = 0; k < g.size(); ++k) {
            double lo = bound_at(*n.value, k), hi = bound_at(*n.upper, k);
            if (av[k] >= lo && av[k] <= hi) d[k] += g[k];
          }
        }
        break;
      case Op::kMax:
      case Op::kMin:
        for (std::size_t k = 0; k < g.size(); ++k) {
          bool first = n.op == Op::kMax ? av[k] >= (*bt)[k] : av[k] <= (*bt)[k];
          if (first && ga) acc(n.a)[k] += g[k];
          if (!first && gb) acc(n.b)[k] += g[k];
        }
        break;
      case Op::kGather:
        if (ga) {
          auto& d = acc(n.a);
          const auto& idx = *n.index;
          for (std::size_t k = 0; k < idx.size(); ++k) d[idx[k]] += g[k];
        }
        break;
      case Op::kLogSoftmaxRows:
        if (ga) {
          auto& d = acc(n.a);
          std::size_t rows = n.shape[0], cols = n.shape[1];
          for (std::size_t r = 0; r < rows; ++r) {
            double gs = 0.0;
            for (std::size_t c = 0; c < cols; ++c) gs += g[r * cols + c];
            for (std::size_t c = 0; c < cols; ++c) {
              std::size_t k = r * cols + c;
              d[k] += g[k] - std::exp(y[k]) * gs;
            }
          }
        }
        break;
      case Op::kInput:
      case Op::kConstant:
        break;
    }
  }

  Gradients out;
  out.output = *values[output_];
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    if (n.op != Op::kInput || !n.learnable) continue;
    out.grads.emplace(n.name, has[i] ? adj[i] : Tensor::zeros(n.shape));
  }
  return out;
}

Tensor forward(const Graph& graph, const Bindings& inputs) {
  return graph.forward(inputs);
}

Gradients backward(const Graph& graph, const Bindings& inputs) {
  return graph.backward(inputs);
}

FiniteDifferenceReport finite_difference_check(const Graph& graph,
                                               const Bindings& at, double h) {
  if (!(h > 0.0)) throw std::invalid_argument("finite difference step h <= 0");
  Gradients analytic = graph.backward(at);
  FiniteDifferenceReport report;
  Bindings probe = at;
  std::vector<std::uint8_t> br_plus, br_minus;
  for (const auto& [name, grad] : analytic.grads) {
    Tensor& param = probe.at(name);
    for (std::size_t k = 0; k < param.size(); ++k) {
      const double orig = param[k];
      br_plus.clear();
      br_minus.clear();
      // Divide by the step actually representable around orig.
      const double xp = orig + h;
      const double xm = orig - h;
      param[k] = xp;
      double fp = graph.forward(probe, &br_plus).item();
      param[k] = xm;
      double fm = graph.forward(probe, &br_minus).item();
      param[k] = orig;
      if (br_plus != br_minus) {
        report.boundary_coordinates.push_back(name + "[" + std::to_string(k) +
                                              "]");
        continue;
      }
      double fd = (fp - fm) / (xp - xm);
      double an = grad[k];
      double rel = std::abs(fd - an) / std::max(1.0, std::abs(an));
      report.max_rel_error = std::max(report.max_rel_error, rel);
      ++report.coordinates_checked;
    }
  }
  return report;
}

}  // namespace prdp::ad
