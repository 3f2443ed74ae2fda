#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fgzsl/data.hpp"
#include "fgzsl/losses.hpp"
#include "fgzsl/models.hpp"
#include "fgzsl/nn.hpp"
#include "fgzsl/rng.hpp"

namespace fgzsl {

enum class Precision { f32, f64 };

struct TrainConfig {
  std::size_t iterations = 3000;
  std::size_t batch_size = 64;
  std::size_t n_critic = 5;
  double lr = 1e-4;
  double classifier_lr = 1e-3;
  std::size_t classifier_epochs = 25;
  std::size_t classifier_batch = 64;
  LossWeights weights;
  std::size_t n_syn = 0;  // 0: per-dataset default
  std::uint64_t seed = 1;
  HChoice h_choice = HChoice::h1;
  FeatureSet features = FeatureSet::x_h_ahat;
  bool train_fr = true;
  bool samc_on_synthetic = true;
  std::size_t hidden = 4096;
  std::size_t fr_hidden = 4096;
  std::size_t latent_dim = 0;  // 0: attr_dim
  double slope = 0.02;
  Precision precision = Precision::f32;

  void validate(std::size_t train_size) const {
    if (n_critic < 1) throw std::invalid_argument("TrainConfig: n_critic must be >= 1");
    if (batch_size < 1 || batch_size > train_size) {
      throw std::invalid_argument("TrainConfig: batch_size " + std::to_string(batch_size) + " must lie in [1, " +
                                  std::to_string(train_size) + "]");
    }
    if (!(lr >= 0) || !(classifier_lr >= 0)) throw std::invalid_argument("TrainConfig: learning rates must be >= 0");
    if (classifier_batch < 1) throw std::invalid_argument("TrainConfig: classifier_batch must be >= 1");
    if (!hidden || !fr_hidden) throw std::invalid_argument("TrainConfig: hidden widths must be positive");
    if (!(slope > 0.0 && slope < 1.0)) throw std::invalid_argument("TrainConfig: slope must lie in (0,1)");
    weights.validate();
  }
};

// Synthesized features per unseen class for the named benchmarks.
inline constexpr std::size_t kFallbackNSyn = 200;

inline std::string upper(std::string s) {
  for (auto& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

inline std::size_t default_n_syn(const std::string& dataset) {
  const std::string n = upper(dataset);
  if (n == "AWA1" || n == "AWA2") return 4600;
  if (n == "FLO") return 2400;
  if (n == "CUB") return 700;
  if (n == "SUN") return 300;
  return kFallbackNSyn;
}

// gamma 0.8 on fine-grained sets, 0.1 on coarse ones; lambda_ra 0.1 on SUN.
inline LossWeights default_weights(const std::string& dataset) {
  LossWeights w;
  const std::string n = upper(dataset);
  if (n == "AWA1" || n == "AWA2") w.gamma = 0.1;
  if (n == "SUN") w.lambda_ra = 0.1;
  return w;
}

struct LossRecord {
  std::size_t iteration = 0;
  double loss_D = 0, loss_EG = 0, loss_FR = 0, samc = 0, cyc = 0, kl = 0, recon = 0;
};

// Each class row rescaled to unit root-mean-square; all-zero rows stay zero.
template <typename T>
Tensor<T> prepare_attributes(const Tensor<float>& attributes) {
  Tensor<T> out = attributes.cast<T>();
  const std::size_t d = out.cols();
  for (std::size_t r = 0; r < out.rows(); ++r) {
    double ss = 0;
    for (std::size_t c = 0; c < d; ++c) ss += static_cast<double>(out(r, c)) * out(r, c);
    const double rms = std::sqrt(ss / static_cast<double>(d));
    if (rms > 0)
      for (std::size_t c = 0; c < d; ++c) out(r, c) = static_cast<T>(out(r, c) / rms);
  }
  return out;
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& m, std::span<const ClassId> ids) {
  Tensor<T> out = Tensor<T>::matrix(ids.size(), m.cols());
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::copy_n(m.data() + static_cast<std::size_t>(ids[i]) * m.cols(), m.cols(), out.data() + i * m.cols());
  return out;
}

inline ModelDims model_dims(const DatasetBundle& b, const TrainConfig& cfg) {
  ModelDims d;
  d.feat_dim = b.feat_dim();
  d.attr_dim = b.attr_dim();
  d.latent_dim = cfg.latent_dim ? cfg.latent_dim : b.attr_dim();
  d.hidden = cfg.hidden;
  d.fr_hidden = cfg.fr_hidden;
  d.n_classes = b.n_classes();
  d.slope = cfg.slope;
  return d;
}

// Where a feature matrix came from. Classifier training accepts only real
// seen training features and synthesized features.
enum class Provenance { real_seen_train, synthetic_unseen, real_seen_test, real_unseen_test };

template <typename T>
struct LabeledFeatures {
  Tensor<T> x;
  std::vector<ClassId> y;
  Provenance source;
};

template <typename T>
struct Stage1Result {
  FreeModel<T> model;
  std::vector<LossRecord> curve;
};

namespace detail {

template <typename T>
struct SeenBatch {
  Tensor<T> x;
  std::vector<ClassId> y;
  Tensor<T> a;
};

template <typename T>
SeenBatch<T> sample_seen_batch(const DatasetBundle& b, const Tensor<T>& attrs, std::size_t n, Rng& rng) {
  IndexList idx(n);
  for (auto& i : idx) i = b.train_idx[rng.below(b.train_idx.size())];
  SeenBatch<T> out;
  for (auto i : idx) {
    const ClassId c = b.labels[i];
    if (!b.is_seen(c)) {
      throw std::invalid_argument("stage1_train: training batch holds sample " + std::to_string(i) +
                                  " of non-seen class " + std::to_string(c));
    }
    out.y.push_back(c);
  }
  out.x = b.rows(idx).cast<T>();
  out.a = gather_rows(attrs, out.y);
  return out;
}

template <typename T>
std::vector<ClassId> sample_other_class(std::span<const ClassId> y, const std::vector<ClassId>& seen, Rng& rng) {
  std::vector<ClassId> out;
  for (ClassId c : y) {
    ClassId pick = c;
    while (pick == c) pick = seen[rng.below(seen.size())];
    out.push_back(pick);
  }
  return out;
}

template <typename T>
double finite_value(const Graph<T>& g, NodeId n, std::size_t it, const char* what) {
  const double v = static_cast<double>(g.value(n).item());
  if (!std::isfinite(v)) throw NumericError("iteration " + std::to_string(it) + ": non-finite " + what);
  return v;
}

}  // namespace detail

// Alternating optimization per iteration: n_critic critic steps, one E+G step,
// one FR+centers step. Only seen training samples are read.
template <typename T>
Stage1Result<T> stage1_train(const DatasetBundle& bundle, const TrainConfig& cfg) {
  if (auto vs = validate_bundle(bundle); !vs.empty()) throw std::invalid_argument("stage1_train: " + describe(vs));
  cfg.validate(bundle.train_idx.size());
  if (bundle.seen_classes.size() < 2) throw std::invalid_argument("stage1_train: need at least 2 seen classes");

  const Tensor<T> attrs = prepare_attributes<T>(bundle.attributes);
  Stage1Result<T> res{FreeModel<T>::create(model_dims(bundle, cfg), attrs, cfg.seed), {}};
  FreeModel<T>& m = res.model;
  const LossWeights& w = cfg.weights;
  const ModelDims& d = m.dims;
  const bool fr_step = cfg.train_fr && (w.lambda_samc > 0 || w.lambda_ra > 0);
  const bool cyc_in_eg = cfg.train_fr && w.lambda_ra > 0;

  Rng batch_rng(cfg.seed, "stage1.batch");
  Rng noise_rng(cfg.seed, "stage1.noise");
  Rng tau_rng(cfg.seed, "stage1.tau");
  Rng other_rng(cfg.seed, "stage1.yprime");
  const AdamOptions opts{.lr = cfg.lr};
  AdamState<T> d_opt(opts), eg_opt(opts), fr_opt(opts);
  const std::size_t n = cfg.batch_size;

  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    LossRecord rec;
    rec.iteration = it;
    try {
      for (std::size_t k = 0; k < cfg.n_critic; ++k) {
        const auto b = detail::sample_seen_batch(bundle, attrs, n, batch_rng);
        const Tensor<T> x_fake = generate(m, noise_rng.normal_matrix<T>(n, d.latent_dim), b.a);
        std::vector<T> tau(n);
        for (auto& t : tau) t = static_cast<T>(tau_rng.uniform());
        Graph<T> g;
        const BoundNet dn = bind_net(g, m.discriminator, "D");
        const Critic<T> critic = [&dn](Graph<T>& gg, NodeId x, NodeId a) { return discriminate(gg, dn, x, a); };
        const NodeId loss = wgan_d_loss<T>(g, critic, b.x, x_fake, b.a, tau, w);
        rec.loss_D = detail::finite_value(g, loss, it, "critic loss");
        const auto slots = m.slots("D");
        const auto params = dn.params();
        apply_gradients<T>(g, loss, params, slots, d_opt);
      }

      const auto b = detail::sample_seen_batch(bundle, attrs, n, batch_rng);
      const Tensor<T> z_prior = noise_rng.normal_matrix<T>(n, d.latent_dim);
      {
        Graph<T> g;
        const BoundNet en = bind_net(g, m.encoder, "E");
        const BoundNet gn = bind_net(g, m.generator, "G");
        const BoundNet dn = bind_net(g, m.discriminator, "D");
        const NodeId x = g.constant(b.x), a = g.constant(b.a);
        const auto enc = encode(g, en, x, a, g.constant(noise_rng.normal_matrix<T>(n, d.latent_dim)));
        const NodeId kl = kl_gaussian(g, enc.mu, enc.log_var);
        const NodeId recon = recon_loss(g, x, generate(g, gn, enc.z, a));
        const NodeId x_syn = generate(g, gn, g.constant(z_prior), a);
        const Critic<T> critic = [&dn](Graph<T>& gg, NodeId xx, NodeId aa) { return discriminate(gg, dn, xx, aa); };
        NodeId loss = g.add(g.add(kl, recon), wgan_g_loss<T>(g, critic, x_syn, a));
        if (cyc_in_eg) {
          const BoundNet frn = bind_net(g, m.fr, "FR");
          const auto fr = fr_forward(g, frn, x_syn, g.constant(noise_rng.normal_matrix<T>(n, d.attr_dim)));
          loss = g.add(loss, g.scale(l1_residual(g, fr.a_hat, a), w.lambda_ra));
        }
        rec.kl = detail::finite_value(g, kl, it, "KL term");
        rec.recon = detail::finite_value(g, recon, it, "reconstruction loss");
        rec.loss_EG = detail::finite_value(g, loss, it, "encoder/generator loss");
        std::vector<NodeId> params = en.params();
        for (NodeId p : gn.params()) params.push_back(p);
        const auto slots = m.slots("EG");
        apply_gradients<T>(g, loss, params, slots, eg_opt);
      }

      if (fr_step) {
        const Tensor<T> x_syn = generate(m, z_prior, b.a);
        const auto y_other = detail::sample_other_class<T>(b.y, bundle.seen_classes, other_rng);
        Graph<T> g;
        const BoundNet frn = bind_net(g, m.fr, "FR");
        const NodeId centers = g.parameter(m.centers, "centers");
        const NodeId a = g.constant(b.a);
        const auto real = fr_forward(g, frn, g.constant(b.x), g.constant(noise_rng.normal_matrix<T>(n, d.attr_dim)));
        const auto syn = fr_forward(g, frn, g.constant(x_syn), g.constant(noise_rng.normal_matrix<T>(n, d.attr_dim)));
        NodeId samc = samc_loss(g, real.mu, b.y, y_other, centers, w);
        if (cfg.samc_on_synthetic) samc = g.scale(g.add(samc, samc_loss(g, syn.mu, b.y, y_other, centers, w)), 0.5);
        const NodeId cyc = cyc_loss(g, real.a_hat, syn.a_hat, a);
        const NodeId loss = g.add(g.scale(samc, w.lambda_samc), g.scale(cyc, w.lambda_ra));
        rec.samc = detail::finite_value(g, samc, it, "SAMC loss");
        rec.cyc = detail::finite_value(g, cyc, it, "cycle loss");
        rec.loss_FR = detail::finite_value(g, loss, it, "FR loss");
        std::vector<NodeId> params = frn.params();
        params.push_back(centers);
        const auto slots = m.slots("FC");
        apply_gradients<T>(g, loss, params, slots, fr_opt);
      }
    } catch (const NumericError& e) {
      const std::string msg = e.what();
      if (msg.rfind("iteration ", 0) == 0) throw;
      throw NumericError("iteration " + std::to_string(it) + ": " + msg);
    }
    res.curve.push_back(rec);
  }
  return res;
}

// N_syn features per unseen class, x = G(z, a_u) with z from the class's own
// stream (seed, "synth", u), so the result does not depend on class order.
template <typename T>
LabeledFeatures<T> synthesize_unseen(const FreeModel<T>& m, const DatasetBundle& bundle, std::size_t n_syn,
                                     std::uint64_t seed) {
  if (n_syn < 1) throw std::invalid_argument("synthesize_unseen: N_syn must be >= 1");
  const Tensor<T> attrs = prepare_attributes<T>(bundle.attributes);
  LabeledFeatures<T> out{Tensor<T>::matrix(0, m.dims.feat_dim), {}, Provenance::synthetic_unseen};
  std::vector<Tensor<T>> parts;
  for (ClassId u : bundle.unseen_classes) {
    if (u >= attrs.rows()) throw std::invalid_argument("synthesize_unseen: unknown class id " + std::to_string(u));
    Rng rng(seed, "synth", u);
    const Tensor<T> z = rng.normal_matrix<T>(n_syn, m.dims.latent_dim);
    const std::vector<ClassId> ys(n_syn, u);
    parts.push_back(generate(m, z, gather_rows(attrs, ys)));
    out.y.insert(out.y.end(), ys.begin(), ys.end());
  }
  std::vector<const Tensor<T>*> ptrs;
  for (const auto& p : parts) ptrs.push_back(&p);
  if (!ptrs.empty()) out.x = stack_rows(ptrs);
  return out;
}

// Linear softmax classifier; output k scores classes[k].
template <typename T>
struct SoftmaxClassifier {
  std::vector<ClassId> classes;
  Tensor<T> weight;  // [K x width]
  Tensor<T> bias;    // [K]

  Tensor<T> logits(const Tensor<T>& x) const {
    if (x.cols() != weight.cols()) throw std::invalid_argument("SoftmaxClassifier: input width mismatch");
    Graph<T> g;
    const std::vector<BoundLayer> l = {{g.constant(weight), g.constant(bias)}};
    return g.value(linear(g, l[0], g.constant(x)));
  }

  Tensor<T> probabilities(const Tensor<T>& x) const {
    Tensor<T> p = logits(x);
    for (std::size_t r = 0; r < p.rows(); ++r) {
      T mx = p(r, 0);
      for (std::size_t c = 1; c < p.cols(); ++c) mx = std::max(mx, p(r, c));
      T s{0};
      for (std::size_t c = 0; c < p.cols(); ++c) s += (p(r, c) = std::exp(p(r, c) - mx));
      for (std::size_t c = 0; c < p.cols(); ++c) p(r, c) /= s;
    }
    return p;
  }

  std::vector<ClassId> predict(const Tensor<T>& x) const {
    const Tensor<T> z = logits(x);
    std::vector<ClassId> out;
    for (std::size_t r = 0; r < z.rows(); ++r) {
      std::size_t best = 0;
      for (std::size_t c = 1; c < z.cols(); ++c)
        if (z(r, c) > z(r, best)) best = c;
      out.push_back(classes[best]);
    }
    return out;
  }
};

// Mean cross-entropy of softmax(x W^T + b) against `y`, with each row shifted by
// its (constant) max before exponentiation.
template <typename T>
NodeId softmax_cross_entropy(Graph<T>& g, NodeId logits, const std::vector<std::size_t>& targets) {
  const Tensor<T>& z = g.value(logits);
  Tensor<T> shift = Tensor<T>::matrix(z.rows(), 1);
  Tensor<T> onehot = Tensor<T>::matrix(z.rows(), z.cols());
  for (std::size_t r = 0; r < z.rows(); ++r) {
    T mx = z(r, 0);
    for (std::size_t c = 1; c < z.cols(); ++c) mx = std::max(mx, z(r, c));
    shift(r, 0) = mx;
    onehot(r, targets[r]) = T{1};
  }
  const NodeId shifted = g.sub(logits, g.matmul(g.constant(shift), g.ones(1, z.cols())));
  const NodeId lse = g.log(g.reduce_sum(g.exp(shifted), Reduce::per_row));
  const NodeId picked = g.reduce_sum(g.mul(shifted, g.constant(onehot)), Reduce::per_row);
  return g.reduce_mean(g.sub(lse, picked));
}

struct ClassifierOptions {
  double lr = 1e-3;
  std::size_t epochs = 25;
  std::size_t batch = 64;
  std::uint64_t seed = 1;
};

template <typename T>
SoftmaxClassifier<T> train_softmax(const Tensor<T>& x, const std::vector<ClassId>& y, std::vector<ClassId> classes,
                                   const ClassifierOptions& opt) {
  if (x.rows() != y.size()) throw std::invalid_argument("train_softmax: feature/label count mismatch");
  std::sort(classes.begin(), classes.end());
  std::map<ClassId, std::size_t> pos;
  for (std::size_t k = 0; k < classes.size(); ++k) pos[classes[k]] = k;
  std::vector<std::size_t> target(y.size()), count(classes.size(), 0);
  for (std::size_t i = 0; i < y.size(); ++i) {
    auto it = pos.find(y[i]);
    if (it == pos.end()) throw std::invalid_argument("train_softmax: label " + std::to_string(y[i]) + " not in class set");
    target[i] = it->second;
    ++count[it->second];
  }
  for (std::size_t k = 0; k < classes.size(); ++k) {
    if (count[k] == 0) {
      throw std::invalid_argument("train_softmax: class " + std::to_string(classes[k]) + " has no training rows");
    }
  }

  SoftmaxClassifier<T> clf{classes, Tensor<T>::matrix(classes.size(), x.cols()), Tensor<T>({classes.size()}, T{0})};
  AdamState<T> state(AdamOptions{.lr = opt.lr});
  const std::vector<ParamSlot<T>> slots = {{"classifier.weight", &clf.weight}, {"classifier.bias", &clf.bias}};
  Rng rng(opt.seed, "stage2.shuffle");
  std::vector<std::uint32_t> order(x.rows());
  for (std::size_t e = 0; e < opt.epochs; ++e) {
    std::iota(order.begin(), order.end(), 0u);
    std::shuffle(order.begin(), order.end(), rng.engine());
    for (std::size_t s = 0; s < order.size(); s += opt.batch) {
      const std::size_t end = std::min(order.size(), s + opt.batch);
      Tensor<T> xb = Tensor<T>::matrix(end - s, x.cols());
      std::vector<std::size_t> tb;
      for (std::size_t i = s; i < end; ++i) {
        std::copy_n(x.data() + static_cast<std::size_t>(order[i]) * x.cols(), x.cols(), xb.data() + (i - s) * x.cols());
        tb.push_back(target[order[i]]);
      }
      Graph<T> g;
      const BoundLayer layer{g.parameter(clf.weight, "W"), g.parameter(clf.bias, "b")};
      const NodeId loss = softmax_cross_entropy(g, linear(g, layer, g.constant(xb)), tb);
      if (!std::isfinite(static_cast<double>(g.value(loss).item()))) {
        throw NumericError("classifier epoch " + std::to_string(e) + ": non-finite loss");
      }
      const NodeId params[] = {layer.weight, layer.bias};
      apply_gradients<T>(g, loss, params, slots, state);
    }
  }
  return clf;
}

// Refines real seen training features and the synthesized unseen features,
// then fits the classifier over all seen and unseen classes.
template <typename T>
SoftmaxClassifier<T> stage2_train_classifier(const FreeModel<T>& m, const DatasetBundle& bundle,
                                             const LabeledFeatures<T>& synth, const TrainConfig& cfg) {
  if (synth.source != Provenance::synthetic_unseen) {
    throw std::invalid_argument("stage2_train_classifier: synthetic input must carry synthetic provenance");
  }
  for (ClassId c : synth.y) {
    if (!bundle.is_unseen(c)) throw std::invalid_argument("stage2_train_classifier: synthetic row of non-unseen class " + std::to_string(c));
  }
  LabeledFeatures<T> real{bundle.rows(bundle.train_idx).cast<T>(), {}, Provenance::real_seen_train};
  for (auto i : bundle.train_idx) real.y.push_back(bundle.labels[i]);

  for (const LabeledFeatures<T>* part : {static_cast<const LabeledFeatures<T>*>(&real), &synth}) {
    if (part->source != Provenance::real_seen_train && part->source != Provenance::synthetic_unseen) {
      throw std::logic_error("stage2_train_classifier: test features offered for training");
    }
  }
  const Tensor<T> xr = refine_features(m, real.x, cfg.h_choice, cfg.features);
  const Tensor<T> xs = refine_features(m, synth.x, cfg.h_choice, cfg.features);
  const Tensor<T> x = stack_rows<T>({&xr, &xs});
  std::vector<ClassId> y = real.y;
  y.insert(y.end(), synth.y.begin(), synth.y.end());

  std::vector<ClassId> classes = bundle.seen_classes;
  classes.insert(classes.end(), bundle.unseen_classes.begin(), bundle.unseen_classes.end());
  return train_softmax(x, y, classes,
                       ClassifierOptions{cfg.classifier_lr, cfg.classifier_epochs, cfg.classifier_batch, cfg.seed});
}

// Top-1 accuracy of each class in `classes` over the samples labelled with it.
inline std::map<ClassId, double> per_class_top1(std::span<const ClassId> predictions, std::span<const ClassId> labels,
                                                std::span<const ClassId> classes) {
  if (predictions.size() != labels.size()) throw std::invalid_argument("per_class_top1: prediction/label count mismatch");
  std::map<ClassId, std::pair<std::size_t, std::size_t>> tally;  // correct, total
  for (ClassId c : classes) tally[c] = {0, 0};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto it = tally.find(labels[i]);
    if (it == tally.end()) continue;
    ++it->second.second;
    if (predictions[i] == labels[i]) ++it->second.first;
  }
  std::map<ClassId, double> out;
  for (const auto& [c, t] : tally) {
    if (t.second == 0) throw std::invalid_argument("per_class_top1: class " + std::to_string(c) + " has no test samples");
    out[c] = static_cast<double>(t.first) / static_cast<double>(t.second);
  }
  return out;
}

inline double mean_accuracy(const std::map<ClassId, double>& per_class) {
  if (per_class.empty()) return 0.0;
  double s = 0;
  for (const auto& [c, a] : per_class) s += a;
  return s / static_cast<double>(per_class.size());
}

inline double harmonic_mean(double s, double u) {
  if (s < 0 || u < 0) throw std::invalid_argument("harmonic_mean: accuracies must be >= 0");
  if (s + u == 0) return 0.0;
  return 2.0 * s * u / (s + u);
}

struct GzslReport {
  std::map<ClassId, double> per_class;
  double S = 0, U = 0, H = 0;
  std::uint64_t seed = 0;
};

// Maps raw test features to predicted class ids.
template <typename T>
using Predictor = std::function<std::vector<ClassId>(const Tensor<T>&)>;

template <typename T>
GzslReport evaluate_predictor(const DatasetBundle& bundle, const Predictor<T>& predict, std::uint64_t seed) {
  GzslReport r;
  r.seed = seed;
  auto score = [&](const IndexList& idx, const std::vector<ClassId>& classes) {
    std::vector<ClassId> labels;
    for (auto i : idx) labels.push_back(bundle.labels[i]);
    const auto pred = predict(bundle.rows(idx).cast<T>());
    const auto pc = per_class_top1(pred, labels, classes);
    r.per_class.insert(pc.begin(), pc.end());
    return mean_accuracy(pc);
  };
  r.S = score(bundle.test_seen_idx, bundle.seen_classes);
  r.U = score(bundle.test_unseen_idx, bundle.unseen_classes);
  r.H = harmonic_mean(r.S, r.U);
  return r;
}

template <typename T>
GzslReport evaluate_gzsl(const FreeModel<T>& m, const SoftmaxClassifier<T>& clf, const DatasetBundle& bundle,
                         const TrainConfig& cfg) {
  const Predictor<T> predict = [&](const Tensor<T>& x) {
    return clf.predict(refine_features(m, x, cfg.h_choice, cfg.features));
  };
  return evaluate_predictor<T>(bundle, predict, cfg.seed);
}

// Degenerate reference that answers `c` for every input.
template <typename T>
Predictor<T> constant_predictor(ClassId c) {
  return [c](const Tensor<T>& x) { return std::vector<ClassId>(x.rows(), c); };
}

template <typename T>
struct Experiment {
  Stage1Result<T> stage1;
  SoftmaxClassifier<T> classifier;
  GzslReport report;
};

inline std::size_t resolved_n_syn(const DatasetBundle& b, const TrainConfig& cfg) {
  return cfg.n_syn ? cfg.n_syn : default_n_syn(b.name);
}

template <typename T>
Experiment<T> evaluate_model(Stage1Result<T> s1, const DatasetBundle& bundle, const TrainConfig& cfg) {
  const auto synth = synthesize_unseen(s1.model, bundle, resolved_n_syn(bundle, cfg), cfg.seed);
  auto clf = stage2_train_classifier(s1.model, bundle, synth, cfg);
  auto report = evaluate_gzsl(s1.model, clf, bundle, cfg);
  return {std::move(s1), std::move(clf), std::move(report)};
}

template <typename T>
Experiment<T> run_experiment(const DatasetBundle& bundle, const TrainConfig& cfg) {
  return evaluate_model<T>(stage1_train<T>(bundle, cfg), bundle, cfg);
}

// ---- ablation ----------------------------------------------------------------

struct Variant {
  std::string name;  // e.g. "full" or "fr-cyc:xh"
  std::string losses;
  FeatureSet features;
};

inline const char* feature_suffix(FeatureSet f) {
  switch (f) {
    case FeatureSet::x: return "x";
    case FeatureSet::x_h: return "xh";
    case FeatureSet::x_h_ahat: return "xha";
  }
  return "x";
}

// "<losses>[:<features>]" with losses in {baseline, fr-cyc, fr-samc, full} and
// features in {x, xh, xha}. The baseline defaults to raw features.
inline Variant parse_variant(const std::string& text) {
  const auto colon = text.find(':');
  Variant v{text, text.substr(0, colon), FeatureSet::x_h_ahat};
  if (v.losses == "no-fr") v.losses = "baseline";
  static const std::set<std::string> known = {"baseline", "fr-cyc", "fr-samc", "full"};
  if (!known.count(v.losses)) throw std::invalid_argument("unknown variant '" + text + "'");
  if (colon == std::string::npos) {
    if (v.losses == "baseline") v.features = FeatureSet::x;
  } else {
    const std::string f = text.substr(colon + 1);
    if (f == "x") v.features = FeatureSet::x;
    else if (f == "xh") v.features = FeatureSet::x_h;
    else if (f == "xha") v.features = FeatureSet::x_h_ahat;
    else throw std::invalid_argument("unknown feature set '" + f + "' in variant '" + text + "'");
  }
  return v;
}

inline TrainConfig apply_variant(TrainConfig cfg, const Variant& v) {
  if (v.losses == "baseline") {
    cfg.train_fr = false;
    cfg.weights.lambda_samc = 0;
    cfg.weights.lambda_ra = 0;
  } else if (v.losses == "fr-cyc") {
    cfg.weights.lambda_samc = 0;
  } else if (v.losses == "fr-samc") {
    cfg.weights.lambda_ra = 0;
  }
  cfg.features = v.features;
  return cfg;
}

struct AblationRow {
  std::string variant;
  std::uint64_t seed;
  GzslReport report;
};

struct AblationSummary {
  std::string variant;
  double S = 0, U = 0, H = 0;
  double delta_H = 0;  // H minus the reference variant's H
};

struct AblationTable {
  std::vector<AblationRow> rows;
  std::vector<AblationSummary> summary;
  std::string reference;
};

template <typename T>
AblationTable ablate(const DatasetBundle& bundle, const TrainConfig& cfg, const std::vector<std::string>& variants,
                     const std::vector<std::uint64_t>& seeds) {
  if (variants.empty() || seeds.empty()) throw std::invalid_argument("ablate: need at least one variant and one seed");
  std::vector<Variant> parsed;
  for (const auto& v : variants) parsed.push_back(parse_variant(v));

  AblationTable table;
  table.reference = parsed.front().name;
  for (const auto& v : parsed)
    if (v.losses == "baseline") {
      table.reference = v.name;
      break;
    }
  for (const auto& v : parsed) {
    AblationSummary s{v.name};
    for (std::uint64_t seed : seeds) {
      TrainConfig c = apply_variant(cfg, v);
      c.seed = seed;
      const auto exp = run_experiment<T>(bundle, c);
      table.rows.push_back({v.name, seed, exp.report});
      s.S += exp.report.S / static_cast<double>(seeds.size());
      s.U += exp.report.U / static_cast<double>(seeds.size());
      s.H += exp.report.H / static_cast<double>(seeds.size());
    }
    table.summary.push_back(s);
  }
  double ref_h = 0;
  for (const auto& s : table.summary)
    if (s.variant == table.reference) ref_h = s.H;
  for (auto& s : table.summary) s.delta_H = s.H - ref_h;
  return table;
}

}  // namespace fgzsl
