#pragma once

#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "fgzsl/autodiff.hpp"
#include "fgzsl/models.hpp"
#include "fgzsl/tensor.hpp"

namespace fgzsl {

struct LossWeights {
  double lambda_gp = 10.0;
  double lambda_samc = 0.5;
  double lambda_ra = 0.001;
  double gamma = 0.8;
  double delta = 1.0;

  void validate() const {
    if (lambda_gp < 0 || lambda_samc < 0 || lambda_ra < 0) throw std::invalid_argument("LossWeights: weights must be >= 0");
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw std::invalid_argument("LossWeights: gamma must lie in [0,1]");
    if (delta < 0) throw std::invalid_argument("LossWeights: delta must be >= 0");
  }
};

// Critic callback: scores [batch x 1] for features x and attributes a.
template <typename T>
using Critic = std::function<NodeId(Graph<T>&, NodeId x, NodeId a)>;

namespace detail {

template <typename T>
void require_same_shape(const Graph<T>& g, NodeId a, NodeId b, const char* what) {
  if (g.shape(a) != g.shape(b)) {
    throw std::invalid_argument(std::string(what) + ": shapes " + shape_str(g.shape(a)) + " and " + shape_str(g.shape(b)));
  }
}

}  // namespace detail

// Batch mean of -1/2 * sum_d (1 + log_var - mu^2 - exp(log_var)).
template <typename T>
NodeId kl_gaussian(Graph<T>& g, NodeId mu, NodeId log_var) {
  detail::require_same_shape(g, mu, log_var, "kl_gaussian");
  const std::size_t batch = g.value(mu).rows();
  const NodeId one = g.fill(g.shape(mu), T{1});
  const NodeId terms = g.sub(g.sub(g.add(one, log_var), g.square(mu)), g.exp(log_var));
  return g.scale(g.reduce_sum(terms), -0.5 / static_cast<double>(batch));
}

// Mean squared error over batch and dimensions.
template <typename T>
NodeId recon_loss(Graph<T>& g, NodeId x, NodeId x_hat) {
  detail::require_same_shape(g, x, x_hat, "recon_loss");
  return g.reduce_mean(g.square(g.sub(x, x_hat)));
}

// Batch mean of (||grad_x' D(x', a)||_2 - 1)^2 with x' = tau x_real + (1 - tau) x_fake
// per row. The returned node stays differentiable w.r.t. the critic parameters.
template <typename T>
NodeId gradient_penalty(Graph<T>& g, const Critic<T>& critic, const Tensor<T>& x_real, const Tensor<T>& x_fake,
                        const Tensor<T>& a, std::span<const T> tau) {
  if (x_real.shape() != x_fake.shape() || x_real.rows() != a.rows() || tau.size() != x_real.rows()) {
    throw std::invalid_argument("gradient_penalty: inputs are not batch-aligned");
  }
  Tensor<T> mixed(x_real.shape());
  const std::size_t c = x_real.cols();
  for (std::size_t i = 0; i < x_real.rows(); ++i) {
    if (!(tau[i] >= T{0} && tau[i] <= T{1})) throw std::invalid_argument("gradient_penalty: tau outside [0,1]");
    for (std::size_t j = 0; j < c; ++j) mixed(i, j) = tau[i] * x_real(i, j) + (T{1} - tau[i]) * x_fake(i, j);
  }
  const NodeId xp = g.constant(std::move(mixed), "x_interp");
  const NodeId scores = critic(g, xp, g.constant(a));
  // Rows are independent, so the gradient of the summed score is the per-row input gradient.
  const auto result = grad_of_grad<T>(
      g, g.reduce_sum(scores), xp,
      [](Graph<T>& gg, NodeId grad) {
        const NodeId norm = gg.l2_norm_rows(grad);
        const NodeId one = gg.fill(gg.shape(norm), T{1});
        return gg.reduce_mean(gg.square(gg.sub(norm, one)));
      },
      {});
  return result.penalty;
}

// E[D(x_hat)] - E[D(x)] + lambda_gp * GP; minimized by the critic.
template <typename T>
NodeId wgan_d_loss(Graph<T>& g, const Critic<T>& critic, const Tensor<T>& x, const Tensor<T>& x_hat, const Tensor<T>& a,
                   std::span<const T> tau, const LossWeights& w) {
  const NodeId a_node = g.constant(a);
  const NodeId real = g.reduce_mean(critic(g, g.constant(x), a_node));
  const NodeId fake = g.reduce_mean(critic(g, g.constant(x_hat), a_node));
  const NodeId gp = gradient_penalty(g, critic, x, x_hat, a, tau);
  return g.add(g.sub(fake, real), g.scale(gp, w.lambda_gp));
}

// -E[D(x_hat, a)].
template <typename T>
NodeId wgan_g_loss(Graph<T>& g, const Critic<T>& critic, NodeId x_hat, NodeId a) {
  if (g.value(x_hat).rows() != g.value(a).rows()) throw std::invalid_argument("wgan_g_loss: batch mismatch");
  return g.scale(g.reduce_mean(critic(g, x_hat, a)), -1.0);
}

template <typename T>
NodeId one_hot_rows(Graph<T>& g, std::span<const std::uint32_t> labels, std::size_t n_classes, const char* what) {
  Tensor<T> t = Tensor<T>::matrix(labels.size(), n_classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= n_classes) {
      throw std::invalid_argument(std::string(what) + ": label " + std::to_string(labels[i]) + " has no center row");
    }
    t(i, labels[i]) = T{1};
  }
  return g.constant(std::move(t));
}

// Batch mean of max(0, delta + gamma ||mu - c_y||^2 - (1 - gamma) ||mu - c_y'||^2).
// `centers` is a [n_classes x attr_dim] node; rows are picked with one-hot products
// so gradients reach both mu and the centers. The hinge has zero slope at 0.
template <typename T>
NodeId samc_loss(Graph<T>& g, NodeId mu, std::span<const std::uint32_t> y, std::span<const std::uint32_t> y_prime,
                 NodeId centers, const LossWeights& w) {
  const std::size_t batch = g.value(mu).rows();
  if (y.size() != batch || y_prime.size() != batch) throw std::invalid_argument("samc_loss: label count != batch");
  if (g.value(centers).cols() != g.value(mu).cols()) throw std::invalid_argument("samc_loss: center width != mu width");
  for (std::size_t i = 0; i < batch; ++i) {
    if (y[i] == y_prime[i]) {
      throw std::invalid_argument("samc_loss: sample " + std::to_string(i) + " has y == y' == " + std::to_string(y[i]));
    }
  }
  const std::size_t n_classes = g.value(centers).rows();
  const NodeId c_y = g.matmul(one_hot_rows(g, y, n_classes, "samc_loss"), centers);
  const NodeId c_other = g.matmul(one_hot_rows(g, y_prime, n_classes, "samc_loss"), centers);
  const NodeId intra = g.reduce_sum(g.square(g.sub(mu, c_y)), Reduce::per_row);
  const NodeId inter = g.reduce_sum(g.square(g.sub(mu, c_other)), Reduce::per_row);
  const NodeId margin = g.fill({batch, 1}, static_cast<T>(w.delta));
  const NodeId pre = g.sub(g.add(margin, g.scale(intra, w.gamma)), g.scale(inter, 1.0 - w.gamma));
  return g.reduce_mean(g.relu(pre));
}

// E||a_hat - a||_1 over the batch.
template <typename T>
NodeId l1_residual(Graph<T>& g, NodeId a_hat, NodeId a) {
  detail::require_same_shape(g, a_hat, a, "cyc_loss");
  const double batch = static_cast<double>(g.value(a).rows());
  return g.scale(g.reduce_sum(g.abs(g.sub(a_hat, a))), 1.0 / batch);
}

// E||a_hat_real - a||_1 + E||a_hat_syn - a||_1.
template <typename T>
NodeId cyc_loss(Graph<T>& g, NodeId a_hat_real, NodeId a_hat_syn, NodeId a) {
  return g.add(l1_residual(g, a_hat_real, a), l1_residual(g, a_hat_syn, a));
}

struct LossComponents {
  NodeId vae;   // L_KL + L_recon
  NodeId wgan;  // L_W
  NodeId samc;
  NodeId cyc;
};

// L_V + L_W + lambda_samc * L_SAMC + lambda_ra * L_Ra.
template <typename T>
NodeId total_loss(Graph<T>& g, const LossComponents& c, const LossWeights& w) {
  for (NodeId n : {c.vae, c.wgan, c.samc, c.cyc}) {
    if (g.value(n).size() != 1) throw std::invalid_argument("total_loss: components must be scalar");
  }
  return g.add(g.add(c.vae, c.wgan), g.add(g.scale(c.samc, w.lambda_samc), g.scale(c.cyc, w.lambda_ra)));
}

}  // namespace fgzsl
