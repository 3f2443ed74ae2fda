#pragma once

#include <Eigen/Core>

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "fgzsl/tensor.hpp"

namespace fgzsl {

using NodeId = std::size_t;

// Primitive set of the reverse-mode engine. The last four kinds exist so that
// every backward rule can be written as ordinary graph construction.
enum class OpKind {
  leaf,
  matmul,
  add,
  sub,
  mul,
  scale,
  leaky_relu,
  exp,
  log,
  concat,
  slice,
  reduce_mean,
  reduce_sum,
  square,
  sqrt,
  abs,
  l2_norm_rows,
  broadcast_row,
  transpose,
  reshape,
  reciprocal,
  leaky_relu_slope,
  sign,
};

inline std::string_view op_name(OpKind op) {
  switch (op) {
    case OpKind::leaf: return "leaf";
    case OpKind::matmul: return "matmul";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::scale: return "scale";
    case OpKind::leaky_relu: return "leaky_relu";
    case OpKind::exp: return "exp";
    case OpKind::log: return "log";
    case OpKind::concat: return "concat";
    case OpKind::slice: return "slice";
    case OpKind::reduce_mean: return "reduce_mean";
    case OpKind::reduce_sum: return "reduce_sum";
    case OpKind::square: return "square";
    case OpKind::sqrt: return "sqrt";
    case OpKind::abs: return "abs";
    case OpKind::l2_norm_rows: return "l2_norm_rows";
    case OpKind::broadcast_row: return "broadcast_row";
    case OpKind::transpose: return "transpose";
    case OpKind::reshape: return "reshape";
    case OpKind::reciprocal: return "reciprocal";
    case OpKind::leaky_relu_slope: return "leaky_relu_slope";
    case OpKind::sign: return "sign";
  }
  return "?";
}

// all: -> [1x1]; per_row: collapse the last axis -> [rows x 1];
// per_col: collapse the rows -> [1 x cols].
enum class Reduce { all, per_row, per_col };

struct OpAttrs {
  double scalar = 0.0;
  std::size_t begin = 0;
  std::size_t end = 0;
  Reduce reduce = Reduce::all;
  Shape shape;

  static OpAttrs of_scalar(double v) { OpAttrs a; a.scalar = v; return a; }
  static OpAttrs of_range(std::size_t b, std::size_t e) { OpAttrs a; a.begin = b; a.end = e; return a; }
  static OpAttrs of_reduce(Reduce r) { OpAttrs a; a.reduce = r; return a; }
  static OpAttrs of_shape(Shape s) { OpAttrs a; a.shape = std::move(s); return a; }
};

class GraphError : public std::runtime_error {
 public:
  GraphError(NodeId node, OpKind op, std::vector<Shape> shapes, const std::string& what)
      : std::runtime_error(format(node, op, shapes, what)), node_(node), op_(op), shapes_(std::move(shapes)) {}

  NodeId node() const { return node_; }
  OpKind op() const { return op_; }
  const std::vector<Shape>& shapes() const { return shapes_; }

 private:
  static std::string format(NodeId node, OpKind op, const std::vector<Shape>& shapes, const std::string& what) {
    std::string s = "node " + std::to_string(node) + " (" + std::string(op_name(op)) + "): " + what;
    if (!shapes.empty()) {
      s += "; input shapes";
      for (const auto& sh : shapes) s += " " + shape_str(sh);
    }
    return s;
  }

  NodeId node_;
  OpKind op_;
  std::vector<Shape> shapes_;
};

namespace detail {

template <typename T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename T>
Tensor<T> matmul_kernel(const Tensor<T>& a, const Tensor<T>& b) {
  const auto n = static_cast<Eigen::Index>(a.rows());
  const auto k = static_cast<Eigen::Index>(a.cols());
  const auto m = static_cast<Eigen::Index>(b.cols());
  Tensor<T> out = Tensor<T>::matrix(a.rows(), b.cols());
  Eigen::Map<const RowMatrix<T>> lhs(a.data(), n, k);
  Eigen::Map<const RowMatrix<T>> rhs(b.data(), k, m);
  Eigen::Map<RowMatrix<T>> res(out.data(), n, m);
  res.noalias() = lhs * rhs;
  return out;
}

template <typename T, typename F>
Tensor<T> map_values(const Tensor<T>& x, F f) {
  Tensor<T> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
  return out;
}

template <typename T, typename F>
Tensor<T> zip_values(const Tensor<T>& a, const Tensor<T>& b, F f) {
  Tensor<T> out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = f(a[i], b[i]);
  return out;
}

}  // namespace detail

// Append-only computation graph. Values are computed eagerly when a node is
// added; input ids of a node are always smaller than its own id.
template <typename T>
class Graph {
 public:
  struct Node {
    OpKind op = OpKind::leaf;
    std::vector<NodeId> inputs;
    OpAttrs attrs;
    Tensor<T> value;
    std::string name;
    bool parameter = false;
  };

  // ---- leaves --------------------------------------------------------------

  NodeId constant(Tensor<T> value, std::string name = {}) { return add_leaf(std::move(value), std::move(name), false); }
  NodeId parameter(Tensor<T> value, std::string name) { return add_leaf(std::move(value), std::move(name), true); }
  NodeId fill(Shape shape, T v) { return constant(Tensor<T>(std::move(shape), v)); }
  NodeId ones(std::size_t rows, std::size_t cols) { return fill({rows, cols}, T{1}); }

  void set_leaf(NodeId id, Tensor<T> value) {
    check_id(id);
    Node& n = nodes_[id];
    if (n.op != OpKind::leaf) throw GraphError(id, n.op, {}, "set_leaf on a non-leaf node");
    if (n.value.shape() != value.shape()) {
      throw GraphError(id, n.op, {n.value.shape(), value.shape()}, "set_leaf shape change");
    }
    n.value = std::move(value);
  }

  // Recomputes every non-leaf node from the current leaf values.
  void reevaluate() {
    for (NodeId k = 0; k < nodes_.size(); ++k) {
      if (nodes_[k].op == OpKind::leaf) continue;
      nodes_[k].value = compute(k, nodes_[k].op, nodes_[k].inputs, nodes_[k].attrs);
    }
  }

  // ---- inspection ----------------------------------------------------------

  std::size_t size() const { return nodes_.size(); }
  const Node& node(NodeId id) const {
    check_id(id);
    return nodes_[id];
  }
  const Tensor<T>& eval(NodeId id) const { return node(id).value; }
  const Tensor<T>& value(NodeId id) const { return node(id).value; }
  const Shape& shape(NodeId id) const { return node(id).value.shape(); }

  // ---- operations ----------------------------------------------------------

  NodeId matmul(NodeId a, NodeId b) { return push(OpKind::matmul, {a, b}); }
  NodeId add(NodeId a, NodeId b) { return push(OpKind::add, {a, b}); }
  NodeId sub(NodeId a, NodeId b) { return push(OpKind::sub, {a, b}); }
  NodeId mul(NodeId a, NodeId b) { return push(OpKind::mul, {a, b}); }
  NodeId scale(NodeId a, double c) { return push(OpKind::scale, {a}, OpAttrs::of_scalar(c)); }
  NodeId leaky_relu(NodeId a, double slope) { return push(OpKind::leaky_relu, {a}, OpAttrs::of_scalar(slope)); }
  NodeId relu(NodeId a) { return leaky_relu(a, 0.0); }
  NodeId exp(NodeId a) { return push(OpKind::exp, {a}); }
  NodeId log(NodeId a) { return push(OpKind::log, {a}); }
  NodeId concat(NodeId a, NodeId b) { return push(OpKind::concat, {a, b}); }
  NodeId slice(NodeId a, std::size_t begin, std::size_t end) {
    return push(OpKind::slice, {a}, OpAttrs::of_range(begin, end));
  }
  NodeId reduce_mean(NodeId a, Reduce r = Reduce::all) { return push(OpKind::reduce_mean, {a}, OpAttrs::of_reduce(r)); }
  NodeId reduce_sum(NodeId a, Reduce r = Reduce::all) { return push(OpKind::reduce_sum, {a}, OpAttrs::of_reduce(r)); }
  NodeId square(NodeId a) { return push(OpKind::square, {a}); }
  NodeId sqrt(NodeId a) { return push(OpKind::sqrt, {a}); }
  NodeId abs(NodeId a) { return push(OpKind::abs, {a}); }
  NodeId l2_norm_rows(NodeId a) { return push(OpKind::l2_norm_rows, {a}); }
  NodeId broadcast_row(NodeId a, std::size_t rows) { return push(OpKind::broadcast_row, {a}, OpAttrs::of_range(rows, 0)); }
  NodeId transpose(NodeId a) { return push(OpKind::transpose, {a}); }
  NodeId reshape(NodeId a, Shape shape) { return push(OpKind::reshape, {a}, OpAttrs::of_shape(std::move(shape))); }
  // 1/x, with 1/0 defined as 0 so that zero-norm rows get a zero gradient.
  NodeId reciprocal(NodeId a) { return push(OpKind::reciprocal, {a}); }
  NodeId leaky_relu_slope(NodeId a, double slope) {
    return push(OpKind::leaky_relu_slope, {a}, OpAttrs::of_scalar(slope));
  }
  NodeId sign(NodeId a) { return push(OpKind::sign, {a}); }

  // ---- differentiation -----------------------------------------------------

  // Gradients of a scalar node, each itself a node of this graph.
  std::unordered_map<NodeId, NodeId> backward(NodeId output, std::span<const NodeId> wrt) {
    check_id(output);
    if (nodes_[output].value.size() != 1) {
      throw GraphError(output, nodes_[output].op, {nodes_[output].value.shape()},
                       "backward needs a scalar output");
    }
    for (NodeId w : wrt) {
      if (w >= nodes_.size()) {
        throw GraphError(w, OpKind::leaf, {}, "gradient requested for a node not in the graph");
      }
    }

    const std::size_t n = output + 1;
    std::vector<char> reaches(n, 0);
    for (NodeId w : wrt)
      if (w < n) reaches[w] = 1;
    for (NodeId k = 0; k < n; ++k) {
      if (reaches[k] || has_zero_derivative(nodes_[k].op)) continue;
      for (NodeId i : nodes_[k].inputs) {
        if (reaches[i]) {
          reaches[k] = 1;
          break;
        }
      }
    }

    std::vector<std::optional<NodeId>> adj(n);
    if (reaches[output]) adj[output] = fill(nodes_[output].value.shape(), T{1});

    for (NodeId k = output + 1; k-- > 0;) {
      if (!adj[k] || !reaches[k]) continue;
      // nodes_ grows while rules run; keep copies, not references.
      const OpKind op = nodes_[k].op;
      const std::vector<NodeId> in = nodes_[k].inputs;
      const OpAttrs attrs = nodes_[k].attrs;
      const NodeId g = *adj[k];
      for (std::size_t slot = 0; slot < in.size(); ++slot) {
        const NodeId x = in[slot];
        if (!reaches[x]) continue;
        NodeId c = input_gradient(op, k, in, attrs, slot, g);
        if (nodes_[c].value.shape() != nodes_[x].value.shape()) c = reshape(c, nodes_[x].value.shape());
        adj[x] = adj[x] ? add(*adj[x], c) : c;
      }
    }

    std::unordered_map<NodeId, NodeId> grads;
    for (NodeId w : wrt) {
      if (w < n && adj[w]) {
        grads[w] = *adj[w];
      } else {
        grads[w] = fill(nodes_[w].value.shape(), T{0});
      }
    }
    return grads;
  }

 private:
  static bool has_zero_derivative(OpKind op) {
    return op == OpKind::leaky_relu_slope || op == OpKind::sign;
  }

  void check_id(NodeId id) const {
    if (id >= nodes_.size()) throw GraphError(id, OpKind::leaf, {}, "no such node");
  }

  NodeId add_leaf(Tensor<T> value, std::string name, bool parameter) {
    Node n;
    n.value = std::move(value);
    n.name = std::move(name);
    n.parameter = parameter;
    nodes_.push_back(std::move(n));
    return nodes_.size() - 1;
  }

  NodeId push(OpKind op, std::vector<NodeId> inputs, OpAttrs attrs = {}) {
    const NodeId id = nodes_.size();
    for (NodeId i : inputs) {
      if (i >= id) throw GraphError(id, op, {}, "input " + std::to_string(i) + " does not exist");
    }
    Node n;
    n.value = compute(id, op, inputs, attrs);
    n.op = op;
    n.inputs = std::move(inputs);
    n.attrs = std::move(attrs);
    nodes_.push_back(std::move(n));
    return id;
  }

  Tensor<T> compute(NodeId id, OpKind op, const std::vector<NodeId>& inputs, const OpAttrs& attrs) const {
    std::vector<const Tensor<T>*> v;
    v.reserve(inputs.size());
    for (NodeId i : inputs) v.push_back(&nodes_[i].value);
    auto fail = [&](const std::string& what) {
      std::vector<Shape> shapes;
      for (const auto* t : v) shapes.push_back(t->shape());
      return GraphError(id, op, std::move(shapes), what);
    };
    auto require_same_shape = [&] {
      if (v[0]->shape() != v[1]->shape()) throw fail("operand shapes differ");
    };

    switch (op) {
      case OpKind::leaf:
        throw fail("leaf has no forward rule");
      case OpKind::matmul:
        if (v[0]->cols() != v[1]->rows() || v[1]->rank() > 2 || v[0]->rank() > 2) {
          throw fail("inner extents do not match");
        }
        return detail::matmul_kernel(*v[0], *v[1]);
      case OpKind::add:
        require_same_shape();
        return detail::zip_values(*v[0], *v[1], [](T a, T b) { return a + b; });
      case OpKind::sub:
        require_same_shape();
        return detail::zip_values(*v[0], *v[1], [](T a, T b) { return a - b; });
      case OpKind::mul:
        require_same_shape();
        return detail::zip_values(*v[0], *v[1], [](T a, T b) { return a * b; });
      case OpKind::scale: {
        const T c = static_cast<T>(attrs.scalar);
        return detail::map_values(*v[0], [c](T a) { return c * a; });
      }
      case OpKind::leaky_relu: {
        const T s = static_cast<T>(attrs.scalar);
        return detail::map_values(*v[0], [s](T a) { return a > T{0} ? a : s * a; });
      }
      case OpKind::leaky_relu_slope: {
        const T s = static_cast<T>(attrs.scalar);
        return detail::map_values(*v[0], [s](T a) { return a > T{0} ? T{1} : s; });
      }
      case OpKind::exp:
        return detail::map_values(*v[0], [](T a) { return std::exp(a); });
      case OpKind::log:
        return detail::map_values(*v[0], [](T a) { return std::log(a); });
      case OpKind::square:
        return detail::map_values(*v[0], [](T a) { return a * a; });
      case OpKind::sqrt:
        return detail::map_values(*v[0], [](T a) { return std::sqrt(a); });
      case OpKind::abs:
        return detail::map_values(*v[0], [](T a) { return std::abs(a); });
      case OpKind::sign:
        return detail::map_values(*v[0], [](T a) { return static_cast<T>((a > T{0}) - (a < T{0})); });
      case OpKind::reciprocal:
        return detail::map_values(*v[0], [](T a) { return a == T{0} ? T{0} : T{1} / a; });
      case OpKind::concat:
        if (v[0]->rows() != v[1]->rows()) throw fail("row counts differ");
        return concat_cols(*v[0], *v[1]);
      case OpKind::slice:
        if (attrs.begin >= attrs.end || attrs.end > v[0]->cols()) {
          throw fail("bad column range [" + std::to_string(attrs.begin) + "," + std::to_string(attrs.end) + ")");
        }
        return slice_cols(*v[0], attrs.begin, attrs.end);
      case OpKind::reduce_sum:
      case OpKind::reduce_mean: {
        const Tensor<T>& x = *v[0];
        const std::size_t r = x.rows(), c = x.cols();
        Tensor<T> out;
        T denom{1};
        if (attrs.reduce == Reduce::all) {
          out = Tensor<T>::matrix(1, 1);
          for (std::size_t i = 0; i < x.size(); ++i) out[0] += x[i];
          denom = static_cast<T>(x.size());
        } else if (attrs.reduce == Reduce::per_row) {
          out = Tensor<T>::matrix(r, 1);
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) out[i] += x(i, j);
          denom = static_cast<T>(c);
        } else {
          out = Tensor<T>::matrix(1, c);
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) out[j] += x(i, j);
          denom = static_cast<T>(r);
        }
        if (op == OpKind::reduce_mean) {
          if (x.size() == 0) throw fail("mean of an empty tensor");
          for (auto& e : out.values()) e /= denom;
        }
        return out;
      }
      case OpKind::l2_norm_rows: {
        const Tensor<T>& x = *v[0];
        Tensor<T> out = Tensor<T>::matrix(x.rows(), 1);
        for (std::size_t i = 0; i < x.rows(); ++i) {
          T s{0};
          for (std::size_t j = 0; j < x.cols(); ++j) s += x(i, j) * x(i, j);
          out[i] = std::sqrt(s);
        }
        return out;
      }
      case OpKind::broadcast_row: {
        const Tensor<T>& x = *v[0];
        if (x.rows() != 1) throw fail("broadcast_row needs a single row");
        Tensor<T> out = Tensor<T>::matrix(attrs.begin, x.cols());
        for (std::size_t i = 0; i < attrs.begin; ++i) std::copy_n(x.data(), x.cols(), out.data() + i * x.cols());
        return out;
      }
      case OpKind::transpose: {
        const Tensor<T>& x = *v[0];
        if (x.rank() > 2) throw fail("transpose of rank > 2");
        Tensor<T> out = Tensor<T>::matrix(x.cols(), x.rows());
        for (std::size_t i = 0; i < x.rows(); ++i)
          for (std::size_t j = 0; j < x.cols(); ++j) out(j, i) = x(i, j);
        return out;
      }
      case OpKind::reshape:
        if (shape_numel(attrs.shape) != v[0]->size()) throw fail("reshape to " + shape_str(attrs.shape));
        return v[0]->reshaped(attrs.shape);
    }
    throw fail("unknown op");
  }

  // Contribution of node k (with upstream gradient g) to its input in `slot`.
  NodeId input_gradient(OpKind op, NodeId k, const std::vector<NodeId>& in, const OpAttrs& attrs,
                        std::size_t slot, NodeId g) {
    const NodeId x = in[slot];
    auto in_rows = [&] { return nodes_[x].value.rows(); };
    auto in_cols = [&] { return nodes_[x].value.cols(); };
    switch (op) {
      case OpKind::matmul:
        return slot == 0 ? matmul(g, transpose(in[1])) : matmul(transpose(in[0]), g);
      case OpKind::add:
        return g;
      case OpKind::sub:
        return slot == 0 ? g : scale(g, -1.0);
      case OpKind::mul:
        return mul(g, in[1 - slot]);
      case OpKind::scale:
        return scale(g, attrs.scalar);
      case OpKind::leaky_relu:
        return mul(g, leaky_relu_slope(x, attrs.scalar));
      case OpKind::exp:
        return mul(g, k);
      case OpKind::log:
        return mul(g, reciprocal(x));
      case OpKind::square:
        return mul(g, scale(x, 2.0));
      case OpKind::sqrt:
        return mul(g, scale(reciprocal(k), 0.5));
      case OpKind::abs:
        return mul(g, sign(x));
      case OpKind::reciprocal:
        return mul(g, scale(square(k), -1.0));
      case OpKind::concat: {
        const std::size_t ca = nodes_[in[0]].value.cols();
        const std::size_t cb = nodes_[in[1]].value.cols();
        return slot == 0 ? slice(g, 0, ca) : slice(g, ca, ca + cb);
      }
      case OpKind::slice: {
        NodeId out = g;
        const std::size_t r = in_rows();
        if (attrs.begin > 0) out = concat(fill({r, attrs.begin}, T{0}), out);
        if (attrs.end < in_cols()) out = concat(out, fill({r, in_cols() - attrs.end}, T{0}));
        return out;
      }
      case OpKind::reduce_sum:
      case OpKind::reduce_mean: {
        const std::size_t r = in_rows(), c = in_cols();
        NodeId out;
        double denom = 1.0;
        if (attrs.reduce == Reduce::all) {
          out = broadcast_row(matmul(g, ones(1, c)), r);
          denom = static_cast<double>(r * c);
        } else if (attrs.reduce == Reduce::per_row) {
          out = matmul(g, ones(1, c));
          denom = static_cast<double>(c);
        } else {
          out = broadcast_row(g, r);
          denom = static_cast<double>(r);
        }
        return op == OpKind::reduce_mean ? scale(out, 1.0 / denom) : out;
      }
      case OpKind::l2_norm_rows: {
        const NodeId per_row = mul(g, reciprocal(k));
        return mul(matmul(per_row, ones(1, in_cols())), x);
      }
      case OpKind::broadcast_row:
        return reduce_sum(g, Reduce::per_col);
      case OpKind::transpose:
        return transpose(g);
      case OpKind::reshape:
        return reshape(g, nodes_[x].value.shape());
      case OpKind::leaf:
      case OpKind::leaky_relu_slope:
      case OpKind::sign:
        break;
    }
    throw GraphError(k, op, {}, "no backward rule");
  }

  std::vector<Node> nodes_;
};

template <typename T>
struct SecondOrderResult {
  NodeId first_gradient;
  NodeId penalty;
  std::unordered_map<NodeId, NodeId> gradients;
};

// Differentiates `output` with respect to `inner_wrt`, turns that gradient into a
// scalar via `scalarize`, then differentiates the scalar with respect to `outer_wrt`.
template <typename T>
SecondOrderResult<T> grad_of_grad(Graph<T>& graph, NodeId output, NodeId inner_wrt,
                                  const std::function<NodeId(Graph<T>&, NodeId)>& scalarize,
                                  std::span<const NodeId> outer_wrt) {
  const NodeId inner[] = {inner_wrt};
  const NodeId first = graph.backward(output, inner).at(inner_wrt);
  const NodeId penalty = scalarize(graph, first);
  return {first, penalty, graph.backward(penalty, outer_wrt)};
}

}  // namespace fgzsl
