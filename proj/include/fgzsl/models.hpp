#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fgzsl/autodiff.hpp"
#include "fgzsl/nn.hpp"
#include "fgzsl/rng.hpp"
#include "fgzsl/tensor.hpp"

namespace fgzsl {

// Which FR activation stands in for the latent embedding h of the refined feature.
enum class HChoice { h1, mu };

// Columns kept in a refined feature: x, x+h, or x+h+a_hat.
enum class FeatureSet { x, x_h, x_h_ahat };

struct ModelDims {
  std::size_t feat_dim = 0;
  std::size_t attr_dim = 0;
  std::size_t latent_dim = 0;
  std::size_t hidden = 4096;     // E, G, D hidden layer
  std::size_t fr_hidden = 4096;  // FR first hidden layer
  std::size_t n_classes = 0;
  double slope = 0.02;

  void validate() const {
    if (!feat_dim || !attr_dim || !latent_dim || !hidden || !fr_hidden || !n_classes) {
      throw std::invalid_argument("ModelDims: all dimensions must be positive");
    }
    if (!(slope > 0.0 && slope < 1.0)) throw std::invalid_argument("ModelDims: slope must lie in (0,1)");
  }

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

// E(x,a) -> (mu_z, log_var_z); G(z,a) -> x_hat; D(x,a) -> score;
// FR: x -> h1 (fr_hidden) -> h2 (2*attr_dim) -> (mu, log_var); plus class centers.
template <typename T>
struct FreeModel {
  ModelDims dims;
  Mlp<T> encoder;
  Mlp<T> generator;
  Mlp<T> discriminator;
  Mlp<T> fr;
  Tensor<T> centers;  // [n_classes x attr_dim]

  static MlpSpec encoder_spec(const ModelDims& d) {
    return {{d.feat_dim + d.attr_dim, d.hidden, 2 * d.latent_dim}, d.slope, FinalActivation::none};
  }
  static MlpSpec generator_spec(const ModelDims& d) {
    return {{d.latent_dim + d.attr_dim, d.hidden, d.feat_dim}, d.slope, FinalActivation::none};
  }
  static MlpSpec discriminator_spec(const ModelDims& d) {
    return {{d.feat_dim + d.attr_dim, d.hidden, 1}, d.slope, FinalActivation::none};
  }
  // The last layer is the linear encoding layer splitting into (mu, log_var).
  static MlpSpec fr_spec(const ModelDims& d) {
    return {{d.feat_dim, d.fr_hidden, 2 * d.attr_dim, 2 * d.attr_dim}, d.slope, FinalActivation::none};
  }

  // Centers start at the class attribute vectors.
  static FreeModel create(const ModelDims& dims, const Tensor<T>& class_attributes, std::uint64_t seed) {
    dims.validate();
    if (class_attributes.rows() != dims.n_classes || class_attributes.cols() != dims.attr_dim) {
      throw std::invalid_argument("FreeModel: attribute matrix " + shape_str(class_attributes.shape()) +
                                  " does not match dims");
    }
    FreeModel m;
    m.dims = dims;
    m.encoder = Mlp<T>::create(encoder_spec(dims), stream_seed(seed, "init.E"));
    m.generator = Mlp<T>::create(generator_spec(dims), stream_seed(seed, "init.G"));
    m.discriminator = Mlp<T>::create(discriminator_spec(dims), stream_seed(seed, "init.D"));
    m.fr = Mlp<T>::create(fr_spec(dims), stream_seed(seed, "init.FR"));
    m.centers = class_attributes.reshaped({dims.n_classes, dims.attr_dim});
    return m;
  }

  std::vector<ParamSlot<T>> slots(std::string_view which) {
    std::vector<ParamSlot<T>> out;
    for (char c : which) {
      switch (c) {
        case 'E': append_slots(out, encoder.layers, "E"); break;
        case 'G': append_slots(out, generator.layers, "G"); break;
        case 'D': append_slots(out, discriminator.layers, "D"); break;
        case 'F': append_slots(out, fr.layers, "FR"); break;
        case 'C': out.push_back({"centers", &centers}); break;
        default: throw std::invalid_argument("FreeModel::slots: unknown group");
      }
    }
    return out;
  }
};

// A network whose parameters live in a graph.
struct BoundNet {
  MlpSpec spec;
  std::vector<BoundLayer> layers;
  std::vector<NodeId> params() const { return param_nodes(layers); }
};

template <typename T>
BoundNet bind_net(Graph<T>& g, const Mlp<T>& mlp, const std::string& prefix) {
  return {mlp.spec, bind(g, mlp.layers, prefix)};
}

template <typename T>
NodeId forward(Graph<T>& g, const BoundNet& net, NodeId x) {
  return mlp_forward(g, net.spec, std::span<const BoundLayer>(net.layers), x);
}

// mu + exp(log_var / 2) * eps
template <typename T>
NodeId reparameterize(Graph<T>& g, NodeId mu, NodeId log_var, NodeId eps) {
  return g.add(mu, g.mul(g.exp(g.scale(log_var, 0.5)), eps));
}

struct EncodeNodes {
  NodeId z;
  NodeId mu;
  NodeId log_var;
};

template <typename T>
EncodeNodes encode(Graph<T>& g, const BoundNet& encoder, NodeId x, NodeId a, NodeId eps) {
  const NodeId out = forward(g, encoder, g.concat(x, a));
  const std::size_t latent = encoder.spec.out_width() / 2;
  const NodeId mu = g.slice(out, 0, latent);
  const NodeId log_var = g.slice(out, latent, 2 * latent);
  return {reparameterize(g, mu, log_var, eps), mu, log_var};
}

template <typename T>
NodeId generate(Graph<T>& g, const BoundNet& generator, NodeId z, NodeId a) {
  return forward(g, generator, g.concat(z, a));
}

// Critic scores, [batch x 1].
template <typename T>
NodeId discriminate(Graph<T>& g, const BoundNet& discriminator, NodeId x, NodeId a) {
  return forward(g, discriminator, g.concat(x, a));
}

struct FrNodes {
  NodeId h1;
  NodeId mu;
  NodeId log_var;
  NodeId a_hat;
};

template <typename T>
FrNodes fr_forward(Graph<T>& g, const BoundNet& fr, NodeId x, NodeId eps) {
  if (fr.layers.size() != 3) throw std::invalid_argument("fr_forward: FR needs exactly 3 layers");
  if (g.value(x).cols() != fr.spec.in_width()) {
    throw std::invalid_argument("fr_forward: input width " + std::to_string(g.value(x).cols()) + " != " +
                                std::to_string(fr.spec.in_width()));
  }
  const double slope = fr.spec.slope;
  const NodeId h1 = g.leaky_relu(linear(g, fr.layers[0], x), slope);
  const NodeId h2 = g.leaky_relu(linear(g, fr.layers[1], h1), slope);
  const NodeId enc = linear(g, fr.layers[2], h2);
  const std::size_t attr = fr.spec.out_width() / 2;
  const NodeId mu = g.slice(enc, 0, attr);
  const NodeId log_var = g.slice(enc, attr, 2 * attr);
  return {h1, mu, log_var, reparameterize(g, mu, log_var, eps)};
}

// ---- tensor-level wrappers ---------------------------------------------------

template <typename T>
struct EncodeOutput {
  Tensor<T> z;
  Tensor<T> mu;
  Tensor<T> log_var;
};

template <typename T>
EncodeOutput<T> encode(const FreeModel<T>& m, const Tensor<T>& x, const Tensor<T>& a, const Tensor<T>& eps) {
  Graph<T> g;
  const auto e = encode(g, bind_net(g, m.encoder, "E"), g.constant(x), g.constant(a), g.constant(eps));
  return {g.value(e.z), g.value(e.mu), g.value(e.log_var)};
}

template <typename T>
Tensor<T> generate(const FreeModel<T>& m, const Tensor<T>& z, const Tensor<T>& a) {
  if (z.rows() != a.rows()) throw std::invalid_argument("generate: z and a are not batch-aligned");
  Graph<T> g;
  return g.value(generate(g, bind_net(g, m.generator, "G"), g.constant(z), g.constant(a)));
}

// One score per row, shape [batch].
template <typename T>
Tensor<T> discriminate(const FreeModel<T>& m, const Tensor<T>& x, const Tensor<T>& a) {
  Graph<T> g;
  const NodeId s = discriminate(g, bind_net(g, m.discriminator, "D"), g.constant(x), g.constant(a));
  return g.value(s).reshaped({x.rows()});
}

template <typename T>
struct FrOutput {
  Tensor<T> h1;       // [batch x fr_hidden]
  Tensor<T> mu;       // [batch x attr_dim]
  Tensor<T> log_var;  // [batch x attr_dim]
  Tensor<T> a_hat;    // [batch x attr_dim]
  Tensor<T> eps;      // noise used for a_hat
};

template <typename T>
FrOutput<T> fr_forward(const FreeModel<T>& m, const Tensor<T>& x, const Tensor<T>& eps) {
  Graph<T> g;
  const auto f = fr_forward(g, bind_net(g, m.fr, "FR"), g.constant(x), g.constant(eps));
  return {g.value(f.h1), g.value(f.mu), g.value(f.log_var), g.value(f.a_hat), eps};
}

template <typename T>
FrOutput<T> fr_forward(const FreeModel<T>& m, const Tensor<T>& x) {
  return fr_forward(m, x, Tensor<T>::matrix(x.rows(), m.dims.attr_dim));
}

// x (+) h (+) a_hat, truncated according to `features`.
template <typename T>
Tensor<T> refine(const Tensor<T>& x, const FrOutput<T>& fr, HChoice h_choice, FeatureSet features = FeatureSet::x_h_ahat) {
  const Tensor<T>& h = h_choice == HChoice::h1 ? fr.h1 : fr.mu;
  if (x.rows() != h.rows() || x.rows() != fr.a_hat.rows()) throw std::invalid_argument("refine: batch mismatch");
  switch (features) {
    case FeatureSet::x: return x.reshaped({x.rows(), x.cols()});
    case FeatureSet::x_h: return concat_cols(x, h);
    case FeatureSet::x_h_ahat: return concat_cols(concat_cols(x, h), fr.a_hat);
  }
  return x;
}

inline std::size_t refined_width(const ModelDims& d, HChoice h_choice, FeatureSet features) {
  const std::size_t h = h_choice == HChoice::h1 ? d.fr_hidden : d.attr_dim;
  switch (features) {
    case FeatureSet::x: return d.feat_dim;
    case FeatureSet::x_h: return d.feat_dim + h;
    case FeatureSet::x_h_ahat: return d.feat_dim + h + d.attr_dim;
  }
  return d.feat_dim;
}

// Refined features with zero FR noise (a_hat = mu), processed in row chunks.
template <typename T>
Tensor<T> refine_features(const FreeModel<T>& m, const Tensor<T>& x, HChoice h_choice, FeatureSet features) {
  constexpr std::size_t chunk = 512;
  std::vector<Tensor<T>> parts;
  for (std::size_t begin = 0; begin < x.rows(); begin += chunk) {
    const std::size_t end = std::min(x.rows(), begin + chunk);
    const Tensor<T> xb = x.row_range(begin, end);
    if (features == FeatureSet::x) {
      parts.push_back(xb);
    } else {
      parts.push_back(refine(xb, fr_forward(m, xb), h_choice, features));
    }
  }
  if (parts.empty()) return Tensor<T>::matrix(0, refined_width(m.dims, h_choice, features));
  std::vector<const Tensor<T>*> ptrs;
  for (const auto& p : parts) ptrs.push_back(&p);
  return stack_rows(ptrs);
}

}  // namespace fgzsl
