#pragma once

// Central finite-difference oracle. Only forward evaluation is used to build
// the reference, so it stays independent of the backward rules under test.

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "fgzsl/autodiff.hpp"

namespace fgzsl::oracle {

using Builder = std::function<NodeId(Graph<double>&, const std::vector<NodeId>&)>;

inline double scalar_of(const Builder& f, const std::vector<Tensor<double>>& inputs) {
  Graph<double> g;
  std::vector<NodeId> leaves;
  for (const auto& t : inputs) leaves.push_back(g.parameter(t, "in"));
  return g.value(f(g, leaves)).item();
}

// Central differences of f at `inputs`, one gradient tensor per input.
inline std::vector<Tensor<double>> finite_difference(const Builder& f, std::vector<Tensor<double>> inputs,
                                                     double step = 1e-4) {
  std::vector<Tensor<double>> out;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Tensor<double> grad(inputs[i].shape());
    for (std::size_t j = 0; j < inputs[i].size(); ++j) {
      const double saved = inputs[i][j];
      inputs[i][j] = saved + step;
      const double plus = scalar_of(f, inputs);
      inputs[i][j] = saved - step;
      const double minus = scalar_of(f, inputs);
      inputs[i][j] = saved;
      grad[j] = (plus - minus) / (2.0 * step);
    }
    out.push_back(std::move(grad));
  }
  return out;
}

inline std::vector<Tensor<double>> analytic_gradient(const Builder& f, const std::vector<Tensor<double>>& inputs) {
  Graph<double> g;
  std::vector<NodeId> leaves;
  for (const auto& t : inputs) leaves.push_back(g.parameter(t, "in"));
  const NodeId out = f(g, leaves);
  const auto grads = g.backward(out, leaves);
  std::vector<Tensor<double>> res;
  for (NodeId l : leaves) res.push_back(g.value(grads.at(l)));
  return res;
}

// ||analytic - fd||_2 / max(||analytic||_2, ||fd||_2, 1e-3), over all inputs jointly.
inline double relative_error(const std::vector<Tensor<double>>& a, const std::vector<Tensor<double>>& b) {
  double diff = 0, na = 0, nb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < a[i].size(); ++j) {
      diff += (a[i][j] - b[i][j]) * (a[i][j] - b[i][j]);
      na += a[i][j] * a[i][j];
      nb += b[i][j] * b[i][j];
    }
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nb), 1e-3});
}

inline double gradcheck(const Builder& f, const std::vector<Tensor<double>>& inputs, double step = 1e-4) {
  return relative_error(analytic_gradient(f, inputs), finite_difference(f, inputs, step));
}

struct CaseRng {
  std::mt19937_64 engine;
  explicit CaseRng(std::uint64_t seed) : engine(seed) {}

  std::size_t extent(std::size_t lo = 1, std::size_t hi = 8) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(engine);
  }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine); }

  Tensor<double> matrix(std::size_t r, std::size_t c, double lo = -1.0, double hi = 1.0) {
    Tensor<double> t = Tensor<double>::matrix(r, c);
    for (auto& v : t.values()) v = uniform(lo, hi);
    return t;
  }

  // Entries with magnitude in [lo, hi] and random sign; keeps kinked ops
  // (abs, leaky relu, sign) away from their non-differentiable point.
  Tensor<double> away_from_zero(std::size_t r, std::size_t c, double lo = 0.05, double hi = 1.5) {
    Tensor<double> t = Tensor<double>::matrix(r, c);
    for (auto& v : t.values()) v = uniform(lo, hi) * (uniform(0, 1) < 0.5 ? -1.0 : 1.0);
    return t;
  }
};

// Contracts a tensor-valued node with a fixed random weight tensor, giving a
// scalar whose gradient exercises the full vector-Jacobian product.
inline NodeId contract(Graph<double>& g, NodeId y, CaseRng& rng) {
  Tensor<double> w(g.shape(y));
  for (auto& v : w.values()) v = rng.uniform(-1.0, 1.0);
  return g.reduce_sum(g.mul(y, g.constant(std::move(w))));
}

struct OpCase {
  std::string op;
  Builder builder;
  std::vector<Tensor<double>> inputs;
};

// One randomized first-order case for the primitive named `op`.
inline OpCase make_op_case(const std::string& op, std::uint64_t seed) {
  CaseRng rng(seed);
  const std::size_t r = rng.extent(), c = rng.extent();
  // A fixed weight draw per case keeps the builder deterministic across calls.
  const std::uint64_t wseed = seed * 7919 + 17;
  auto wrap = [wseed](std::function<NodeId(Graph<double>&, const std::vector<NodeId>&)> body) -> Builder {
    return [wseed, body](Graph<double>& g, const std::vector<NodeId>& in) {
      CaseRng wr(wseed);
      return contract(g, body(g, in), wr);
    };
  };

  if (op == "matmul") {
    const std::size_t k = rng.extent();
    return {op, wrap([](auto& g, const auto& in) { return g.matmul(in[0], in[1]); }), {rng.matrix(r, k), rng.matrix(k, c)}};
  }
  if (op == "add") return {op, wrap([](auto& g, const auto& in) { return g.add(in[0], in[1]); }), {rng.matrix(r, c), rng.matrix(r, c)}};
  if (op == "sub") return {op, wrap([](auto& g, const auto& in) { return g.sub(in[0], in[1]); }), {rng.matrix(r, c), rng.matrix(r, c)}};
  if (op == "mul") return {op, wrap([](auto& g, const auto& in) { return g.mul(in[0], in[1]); }), {rng.matrix(r, c), rng.matrix(r, c)}};
  if (op == "scale") {
    const double s = rng.uniform(-3, 3);
    return {op, wrap([s](auto& g, const auto& in) { return g.scale(in[0], s); }), {rng.matrix(r, c)}};
  }
  if (op == "leaky_relu") {
    const double s = rng.uniform(0.01, 0.9);
    return {op, wrap([s](auto& g, const auto& in) { return g.leaky_relu(in[0], s); }), {rng.away_from_zero(r, c)}};
  }
  if (op == "exp") return {op, wrap([](auto& g, const auto& in) { return g.exp(in[0]); }), {rng.matrix(r, c, -2, 2)}};
  if (op == "log") return {op, wrap([](auto& g, const auto& in) { return g.log(in[0]); }), {rng.matrix(r, c, 0.5, 3)}};
  if (op == "concat") {
    const std::size_t c2 = rng.extent();
    return {op, wrap([](auto& g, const auto& in) { return g.concat(in[0], in[1]); }), {rng.matrix(r, c), rng.matrix(r, c2)}};
  }
  if (op == "slice") {
    const std::size_t wide = c + 1;
    const std::size_t b = rng.extent(0, wide - 1);
    const std::size_t e = rng.extent(b + 1, wide);
    return {op, wrap([b, e](auto& g, const auto& in) { return g.slice(in[0], b, e); }), {rng.matrix(r, wide)}};
  }
  if (op.rfind("reduce_", 0) == 0) {
    const bool mean = op.find("mean") != std::string::npos;
    const Reduce red = op.ends_with("per_row") ? Reduce::per_row : op.ends_with("per_col") ? Reduce::per_col : Reduce::all;
    return {op, wrap([mean, red](auto& g, const auto& in) { return mean ? g.reduce_mean(in[0], red) : g.reduce_sum(in[0], red); }),
            {rng.matrix(r, c)}};
  }
  if (op == "square") return {op, wrap([](auto& g, const auto& in) { return g.square(in[0]); }), {rng.matrix(r, c)}};
  if (op == "sqrt") return {op, wrap([](auto& g, const auto& in) { return g.sqrt(in[0]); }), {rng.matrix(r, c, 0.5, 3)}};
  if (op == "abs") return {op, wrap([](auto& g, const auto& in) { return g.abs(in[0]); }), {rng.away_from_zero(r, c)}};
  if (op == "l2_norm_rows") return {op, wrap([](auto& g, const auto& in) { return g.l2_norm_rows(in[0]); }), {rng.away_from_zero(r, c)}};
  if (op == "broadcast_row") {
    const std::size_t n = rng.extent();
    return {op, wrap([n](auto& g, const auto& in) { return g.broadcast_row(in[0], n); }), {Tensor<double>::vector(rng.matrix(1, c).values())}};
  }
  if (op == "transpose") return {op, wrap([](auto& g, const auto& in) { return g.transpose(in[0]); }), {rng.matrix(r, c)}};
  if (op == "reshape") return {op, wrap([r, c](auto& g, const auto& in) { return g.reshape(in[0], {c * r}); }), {rng.matrix(r, c)}};
  if (op == "reciprocal") return {op, wrap([](auto& g, const auto& in) { return g.reciprocal(in[0]); }), {rng.away_from_zero(r, c, 0.3, 2.0)}};
  if (op == "leaky_relu_slope") {
    const double s = rng.uniform(0.01, 0.9);
    return {op, wrap([s](auto& g, const auto& in) { return g.mul(in[0], g.leaky_relu_slope(in[0], s)); }), {rng.away_from_zero(r, c)}};
  }
  if (op == "sign") return {op, wrap([](auto& g, const auto& in) { return g.mul(in[0], g.sign(in[0])); }), {rng.away_from_zero(r, c)}};
  throw std::invalid_argument("make_op_case: unknown op " + op);
}

inline const std::vector<std::string>& all_op_cases() {
  static const std::vector<std::string> ops = {
      "matmul", "add", "sub", "mul", "scale", "leaky_relu", "exp", "log", "concat", "slice",
      "reduce_mean_all", "reduce_mean_per_row", "reduce_mean_per_col", "reduce_sum_all", "reduce_sum_per_row",
      "reduce_sum_per_col", "square", "sqrt", "abs", "l2_norm_rows", "broadcast_row", "transpose", "reshape",
      "reciprocal", "leaky_relu_slope", "sign"};
  return ops;
}

}  // namespace fgzsl::oracle
