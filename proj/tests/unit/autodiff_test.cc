// Copyright 2026 The PRDP Lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <limits>

#include "doctest.h"
#include "prdp/autodiff.h"
#include "prdp/error.h"
#include "prdp/optim.h"
#include "prdp/rng.h"

using namespace prdp;
using namespace prdp::ad;

namespace {

double grad_of(const Graph& g, const Bindings& at, const std::string& name) {
  return g.backward(at).grads.at(name).item();
}

}  // namespace

TEST_CASE("forward: product, sum of squares, clip") {
  GraphBuilder g;
  Var x = g.input("x", {});
  Var y = g.input("y", {});
  Graph prod = g.build(g.mul(x, y));
  CHECK(forward(prod, {{"x", Tensor::scalar(2)}, {"y", Tensor::scalar(3)}})
            .item() == 6.0);

  GraphBuilder h;
  Var v = h.input("v", {2});
  Graph ss = h.build(h.sum(h.square(v)));
  CHECK(forward(ss, {{"v", Tensor::vector({1, 2})}}).item() == 5.0);

  GraphBuilder c;
  Var cx = c.input("x", {});
  Graph clip = c.build(c.clip(cx, 0.0, 1.0));
  CHECK(forward(clip, {{"x", Tensor::scalar(2)}}).item() == 1.0);
}

TEST_CASE("backward: product rule, clamp, max branch") {
  GraphBuilder g;
  Var x = g.input("x", {});
  Var y = g.input("y", {});
  Graph prod = g.build(g.mul(x, y));
  Bindings at{{"x", Tensor::scalar(2)}, {"y", Tensor::scalar(3)}};
  CHECK(grad_of(prod, at, "x") == 3.0);
  CHECK(grad_of(prod, at, "y") == 2.0);

  GraphBuilder c;
  Var cx = c.input("x", {});
  Graph clip = c.build(c.clip(cx, 0.0, 1.0));
  CHECK(grad_of(clip, {{"x", Tensor::scalar(2)}}, "x") == 0.0);
  CHECK(grad_of(clip, {{"x", Tensor::scalar(0.5)}}, "x") == 1.0);
  // Boundary counts as inside.
  CHECK(grad_of(clip, {{"x", Tensor::scalar(1.0)}}, "x") == 1.0);

  GraphBuilder m;
  Var mx = m.input("x", {});
  Graph mg = m.build(m.maximum(m.square(mx), m.scale(mx, 2.0)));
  CHECK(grad_of(mg, {{"x", Tensor::scalar(3)}}, "x") == 6.0);
  // x = 2: x^2 = 2x = 4, tie goes to the first argument (d/dx x^2 = 4).
  CHECK(grad_of(mg, {{"x", Tensor::scalar(2)}}, "x") == 4.0);
}

TEST_CASE("min ties go to the first argument") {
  GraphBuilder g;
  Var a = g.input("a", {});
  Var b = g.input("b", {});
  Graph gr = g.build(g.minimum(a, b));
  Bindings at{{"a", Tensor::scalar(1)}, {"b", Tensor::scalar(1)}};
  auto r = backward(gr, at);
  CHECK(r.grads.at("a").item() == 1.0);
  CHECK(r.grads.at("b").item() == 0.0);
}

TEST_CASE("errors: shape mismatch, unbound input, non-scalar output, non-finite") {
  GraphBuilder g;
  Var a = g.input("a", {2});
  Var b = g.input("b", {3});
  CHECK_THROWS_AS(g.add(a, b), ShapeError);
  CHECK_THROWS_AS(g.matmul(a, b), ShapeError);

  Graph s = g.build(g.sum(a));
  CHECK_THROWS_AS(forward(s, {}), std::invalid_argument);
  CHECK_THROWS_AS(forward(s, {{"a", Tensor::vector({1, 2, 3})}}), ShapeError);

  Graph vec = g.build(g.square(a));
  CHECK_THROWS_AS(backward(vec, {{"a", Tensor::vector({1, 2})}}),
                  std::invalid_argument);

  GraphBuilder e;
  Var x = e.input("x", {});
  Graph ex = e.build(e.exp(x));
  CHECK_THROWS_AS(forward(ex, {{"x", Tensor::scalar(1000)}}), NonFiniteError);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(forward(ex, {{"x", Tensor::scalar(nan)}}), NonFiniteError);

  CHECK_THROWS_AS(Tensor({2, 2}, {1, 2, 3}), ShapeError);
}

TEST_CASE("non-learnable inputs get no gradient") {
  GraphBuilder g;
  Var x = g.input("x", {});
  Var k = g.input("k", {}, false);
  Graph gr = g.build(g.mul(x, k));
  auto r = backward(gr, {{"x", Tensor::scalar(2)}, {"k", Tensor::scalar(5)}});
  CHECK(r.grads.size() == 1);
  CHECK(r.grads.at("x").item() == 5.0);
}

TEST_CASE("finite differences: quadratic and linear graphs") {
  Rng rng(7);
  GraphBuilder g;
  Var w = g.input("w", {3, 2});
  Var a = g.constant(Tensor::matrix(4, 3, rng.normals(12)));
  Var y = g.matmul(a, w);
  Graph quad = g.build(g.sum(g.square(y)));
  Graph lin = g.build(g.sum(y));
  Bindings at{{"w", Tensor::matrix(3, 2, rng.normals(6))}};
  auto q = finite_difference_check(quad, at, 1e-5);
  CHECK(q.coordinates_checked == 6);
  CHECK(q.max_rel_error < 1e-6);
  // No truncation error on a linear map for any h; a wider step keeps
  // cancellation in f(x+h) - f(x-h) small.
  auto l = finite_difference_check(lin, at, 1e-2);
  CHECK(l.max_rel_error < 1e-10);
  CHECK_THROWS(finite_difference_check(lin, at, 0.0));
}

TEST_CASE("finite differences flag clip-boundary coordinates") {
  GraphBuilder g;
  Var x = g.input("x", {2});
  Graph gr = g.build(g.sum(g.square(g.clip(x, -1.0, 1.0))));
  // x[0] sits on the upper bound, x[1] well inside.
  auto r = finite_difference_check(gr, {{"x", Tensor::vector({1.0, 0.3})}});
  REQUIRE(r.boundary_coordinates.size() == 1);
  CHECK(r.boundary_coordinates[0] == "x[0]");
  CHECK(r.coordinates_checked == 1);
  CHECK(r.max_rel_error < 1e-8);
}

TEST_CASE("every op passes a finite-difference check") {
  Rng rng(11);
  GraphBuilder g;
  Var w = g.input("w", {3, 4});
  Var b = g.input("b", {4});
  Var v = g.input("v", {4});
  Var a = g.constant(Tensor::matrix(5, 3, rng.normals(15)));
  Var h = g.tanh(g.add_row(g.matmul(a, w), b));
  Var ls = g.log_softmax_rows(h);
  Var picked = g.gather(ls, {0, 5, 10, 15, 19});
  Var e = g.exp(g.scale(g.row_sum(h), 0.3));
  Var mixed = g.add(g.sum(picked), g.mean(e));
  Var vv = g.sub(g.mul(v, v), g.neg(g.add_scalar(v, 0.5)));
  Var r = g.reshape(g.broadcast(g.sum(vv), {2, 2}), {4});
  Var mm = g.maximum(g.clip(v, -0.4, 0.4), g.minimum(v, g.scale(v, 0.5)));
  Graph gr = g.build(g.add(mixed, g.sum(g.add(r, mm))));
  for (int trial = 0; trial < 10; ++trial) {
    Bindings at{{"w", Tensor::matrix(3, 4, rng.normals(12))},
                {"b", Tensor::vector(rng.normals(4))},
                {"v", Tensor::vector(rng.normals(4))}};
    auto rep = finite_difference_check(gr, at);
    CHECK(rep.max_rel_error < 1e-6);
  }
}

TEST_CASE("backward is linear in the graph output") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const auto ca = rng.normals(6);
    const auto cb = rng.normals(6);
    auto make = [&](bool use_a, bool use_b) {
      GraphBuilder g;
      Var w = g.input("w", {6});
      Var fa = g.sum(g.tanh(g.mul(w, g.constant(Tensor::vector(ca)))));
      Var fb = g.sum(g.square(g.sub(w, g.constant(Tensor::vector(cb)))));
      if (use_a && use_b) return g.build(g.add(fa, fb));
      return g.build(use_a ? fa : fb);
    };
    Bindings at{{"w", Tensor::vector(rng.normals(6))}};
    auto ga = backward(make(true, false), at).grads.at("w");
    auto gb = backward(make(false, true), at).grads.at("w");
    auto gs = backward(make(true, true), at).grads.at("w");
    for (int k = 0; k < 6; ++k) CHECK(gs[k] == doctest::Approx(ga[k] + gb[k]).epsilon(1e-12));
  }
}

TEST_CASE("graph pruning keeps only ancestors of the output") {
  GraphBuilder g;
  Var x = g.input("x", {});
  Var unused = g.input("unused", {});
  g.square(unused);
  Graph gr = g.build(g.scale(x, 2.0));
  CHECK(gr.inputs().size() == 1);
  CHECK(forward(gr, {{"x", Tensor::scalar(1.5)}}).item() == 3.0);
}

TEST_CASE("AdamW: first step moves each coordinate by about lr") {
  AdamW opt({.learning_rate = 0.1, .weight_decay = 0.0, .grad_clip_norm = 0.0});
  Bindings p{{"w", Tensor::vector({1.0, -2.0})}};
  std::map<std::string, Tensor> grads{{"w", Tensor::vector({3.0, -0.5})}};
  opt.step(p, grads);
  CHECK(p.at("w")[0] == doctest::Approx(0.9).epsilon(1e-7));
  CHECK(p.at("w")[1] == doctest::Approx(-1.9).epsilon(1e-7));
}

TEST_CASE("AdamW: decoupled decay and gradient clipping") {
  AdamW opt({.learning_rate = 0.1, .weight_decay = 0.5, .grad_clip_norm = 1.0});
  Bindings p{{"w", Tensor::vector({2.0})}};
  std::map<std::string, Tensor> zero{{"w", Tensor::vector({0.0})}};
  opt.step(p, zero);
  // Zero gradient: only the decay term acts, w <- w - lr*wd*w.
  CHECK(p.at("w")[0] == doctest::Approx(2.0 * (1 - 0.05)).epsilon(1e-12));

  std::map<std::string, Tensor> big{{"a", Tensor::vector({3.0, 4.0})}};
  CHECK(global_norm(big) == doctest::Approx(5.0));
  Bindings q{{"a", Tensor::vector({0.0, 0.0})}};
  AdamW opt2({.learning_rate = 0.1, .weight_decay = 0.0, .grad_clip_norm = 1.0});
  CHECK(opt2.step(q, big) == doctest::Approx(5.0));
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::map<std::string, Tensor> bad{{"a", Tensor::vector({nan, 0.0})}};
  CHECK_THROWS_AS(opt2.step(q, bad), NonFiniteError);
}

TEST_CASE("AdamW minimizes a convex quadratic") {
  AdamW opt({.learning_rate = 0.05, .weight_decay = 0.0, .grad_clip_norm = 0.0});
  GraphBuilder g;
  Var w = g.input("w", {2});
  Graph gr = g.build(g.sum(g.square(g.sub(w, g.constant(Tensor::vector({1, -3}))))));
  Bindings p{{"w", Tensor::vector({0, 0})}};
  for (int i = 0; i < 2000; ++i) opt.step(p, backward(gr, p).grads);
  CHECK(p.at("w")[0] == doctest::Approx(1.0).epsilon(1e-3));
  CHECK(p.at("w")[1] == doctest::Approx(-3.0).epsilon(1e-3));
}
