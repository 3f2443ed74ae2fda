#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fgzsl/autodiff.hpp"
#include "fgzsl/rng.hpp"
#include "fgzsl/tensor.hpp"

namespace fgzsl {

enum class FinalActivation { none, leaky_relu, sigmoid };

struct MlpSpec {
  std::vector<std::size_t> widths;
  double slope = 0.02;
  FinalActivation final_activation = FinalActivation::none;

  void validate() const {
    if (widths.size() < 2) throw std::invalid_argument("MlpSpec: need at least 2 widths");
    for (std::size_t w : widths)
      if (w == 0) throw std::invalid_argument("MlpSpec: widths must be positive");
    if (!(slope > 0.0 && slope < 1.0)) throw std::invalid_argument("MlpSpec: slope must lie in (0,1)");
  }

  std::size_t in_width() const { return widths.front(); }
  std::size_t out_width() const { return widths.back(); }
};

template <typename T>
struct LinearLayer {
  Tensor<T> weight;  // [out x in]
  Tensor<T> bias;    // [out]

  std::size_t in_width() const { return weight.cols(); }
  std::size_t out_width() const { return weight.rows(); }
};

// He-style init: N(0, 2/fan_in) weights, zero biases.
template <typename T>
std::vector<LinearLayer<T>> init_params(const MlpSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed, "init");
  std::vector<LinearLayer<T>> layers;
  for (std::size_t l = 0; l + 1 < spec.widths.size(); ++l) {
    const std::size_t in = spec.widths[l], out = spec.widths[l + 1];
    const double stddev = std::sqrt(2.0 / static_cast<double>(in));
    layers.push_back({rng.normal_matrix<T>(out, in, stddev), Tensor<T>({out}, T{0})});
  }
  return layers;
}

// Trainable network: spec plus its layers.
template <typename T>
struct Mlp {
  MlpSpec spec;
  std::vector<LinearLayer<T>> layers;

  static Mlp create(MlpSpec spec, std::uint64_t seed) {
    auto layers = init_params<T>(spec, seed);
    return {std::move(spec), std::move(layers)};
  }
};

struct BoundLayer {
  NodeId weight;
  NodeId bias;
};

// Registers the layers as parameter leaves of `graph`.
template <typename T>
std::vector<BoundLayer> bind(Graph<T>& graph, const std::vector<LinearLayer<T>>& layers, const std::string& prefix) {
  std::vector<BoundLayer> out;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string base = prefix + "." + std::to_string(l);
    out.push_back({graph.parameter(layers[l].weight, base + ".weight"), graph.parameter(layers[l].bias, base + ".bias")});
  }
  return out;
}

inline std::vector<NodeId> param_nodes(std::span<const BoundLayer> bound) {
  std::vector<NodeId> ids;
  for (const auto& b : bound) {
    ids.push_back(b.weight);
    ids.push_back(b.bias);
  }
  return ids;
}

template <typename T>
NodeId linear(Graph<T>& g, const BoundLayer& layer, NodeId x) {
  const std::size_t rows = g.value(x).rows();
  return g.add(g.matmul(x, g.transpose(layer.weight)), g.broadcast_row(layer.bias, rows));
}

template <typename T>
NodeId apply_activation(Graph<T>& g, NodeId x, FinalActivation act, double slope) {
  switch (act) {
    case FinalActivation::none:
      return x;
    case FinalActivation::leaky_relu:
      return g.leaky_relu(x, slope);
    case FinalActivation::sigmoid: {
      const NodeId one = g.fill(g.shape(x), T{1});
      return g.reciprocal(g.add(one, g.exp(g.scale(x, -1.0))));
    }
  }
  return x;
}

// Hidden layers use leaky-relu; the last layer uses spec.final_activation.
template <typename T>
NodeId mlp_forward(Graph<T>& g, const MlpSpec& spec, std::span<const BoundLayer> layers, NodeId input) {
  if (g.value(input).cols() != spec.in_width()) {
    throw std::invalid_argument("mlp_forward: input width " + std::to_string(g.value(input).cols()) +
                                " != " + std::to_string(spec.in_width()));
  }
  NodeId h = input;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    h = linear(g, layers[l], h);
    const bool last = l + 1 == layers.size();
    h = apply_activation(g, h, last ? spec.final_activation : FinalActivation::leaky_relu, spec.slope);
  }
  return h;
}

template <typename T>
NodeId mlp_forward(Graph<T>& g, const Mlp<T>& mlp, const std::string& prefix, const Tensor<T>& input) {
  const auto bound = bind(g, mlp.layers, prefix);
  return mlp_forward(g, mlp.spec, std::span<const BoundLayer>(bound), g.constant(input));
}

template <typename T>
struct ParamSlot {
  std::string name;
  Tensor<T>* value;
};

template <typename T>
void append_slots(std::vector<ParamSlot<T>>& out, std::vector<LinearLayer<T>>& layers, const std::string& prefix) {
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const std::string base = prefix + "." + std::to_string(l);
    out.push_back({base + ".weight", &layers[l].weight});
    out.push_back({base + ".bias", &layers[l].bias});
  }
}

struct AdamOptions {
  double lr = 1e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamState {
  AdamOptions options;
  std::size_t step = 0;
  std::vector<Tensor<T>> first_moment;
  std::vector<Tensor<T>> second_moment;

  AdamState() = default;
  explicit AdamState(AdamOptions opts) : options(opts) {}
};

// Bias-corrected Adam update, in place. Throws NumericError naming the
// parameter if any gradient entry is not finite; nothing is modified then.
template <typename T>
void adam_step(AdamState<T>& state, std::span<const ParamSlot<T>> params, std::span<const Tensor<T>> grads) {
  if (params.size() != grads.size()) throw std::invalid_argument("adam_step: params/grads count mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].value->shape() != grads[i].shape()) {
      throw std::invalid_argument("adam_step: gradient shape " + shape_str(grads[i].shape()) + " for " +
                                  params[i].name + " " + shape_str(params[i].value->shape()));
    }
    if (!check_finite(grads[i])) throw NumericError("non-finite gradient for parameter " + params[i].name);
  }
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.emplace_back(p.value->shape());
      state.second_moment.emplace_back(p.value->shape());
    }
  } else if (state.first_moment.size() != params.size()) {
    throw std::invalid_argument("adam_step: parameter set changed between steps");
  }

  ++state.step;
  const auto& o = state.options;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(o.beta1, t);
  const double c2 = 1.0 - std::pow(o.beta2, t);
  const T b1 = static_cast<T>(o.beta1), b2 = static_cast<T>(o.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor<T>& p = *params[i].value;
    Tensor<T>& m = state.first_moment[i];
    Tensor<T>& v = state.second_moment[i];
    if (m.shape() != p.shape()) throw std::invalid_argument("adam_step: moment shape mismatch for " + params[i].name);
    const Tensor<T>& g = grads[i];
    for (std::size_t k = 0; k < p.size(); ++k) {
      m[k] = b1 * m[k] + (T{1} - b1) * g[k];
      v[k] = b2 * v[k] + (T{1} - b2) * g[k] * g[k];
      const double m_hat = static_cast<double>(m[k]) / c1;
      const double v_hat = static_cast<double>(v[k]) / c2;
      p[k] -= static_cast<T>(o.lr * m_hat / (std::sqrt(v_hat) + o.eps));
    }
  }
}

// Runs backward for `loss` and applies one Adam step to the parameters whose
// nodes are `nodes` (paired index-wise with `slots`).
template <typename T>
void apply_gradients(Graph<T>& g, NodeId loss, std::span<const NodeId> nodes, std::span<const ParamSlot<T>> slots,
                     AdamState<T>& state) {
  const auto grads = g.backward(loss, nodes);
  std::vector<Tensor<T>> values;
  values.reserve(nodes.size());
  for (NodeId n : nodes) values.push_back(g.value(grads.at(n)));
  adam_step(state, slots, std::span<const Tensor<T>>(values));
}

}  // namespace fgzsl
