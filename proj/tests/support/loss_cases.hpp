#pragma once

// Randomized finite-difference cases for every loss, including the critic
// objectives whose gradients pass through the gradient penalty.

#include <cmath>
#include <string>
#include <vector>

#include "fgzsl/losses.hpp"
#include "fgzsl/nn.hpp"
#include "gradcheck.hpp"

namespace fgzsl::oracle {

struct LossCase {
  std::string loss;
  Builder builder;
  std::vector<Tensor<double>> inputs;
  double tolerance;  // 1e-4 first order, 1e-3 through the penalty
};

namespace loss_detail {

using M = Tensor<double>;

// Two-layer leaky critic on concat(x, a); parameters are graph nodes.
inline Critic<double> mlp_critic(const std::vector<NodeId>& p, std::size_t in_width, std::size_t hidden) {
  const MlpSpec spec{{in_width, hidden, 1}, 0.2};
  return [spec, p](Graph<double>& g, NodeId x, NodeId a) {
    const std::vector<BoundLayer> layers = {{p[0], p[1]}, {p[2], p[3]}};
    return mlp_forward(g, spec, std::span<const BoundLayer>(layers), g.concat(x, a));
  };
}

// Smallest |pre-activation| of the critic's hidden layer over the given rows.
inline double min_preactivation(const M& w, const M& b, const M& x, const M& a) {
  double least = 1e300;
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t h = 0; h < w.rows(); ++h) {
      double s = b[h];
      for (std::size_t j = 0; j < x.cols(); ++j) s += w(h, j) * x(i, j);
      for (std::size_t j = 0; j < a.cols(); ++j) s += w(h, x.cols() + j) * a(i, j);
      least = std::min(least, std::abs(s));
    }
  return least;
}

inline M mix(const M& xr, const M& xf, const std::vector<double>& tau) {
  M out(xr.shape());
  for (std::size_t i = 0; i < xr.rows(); ++i)
    for (std::size_t j = 0; j < xr.cols(); ++j) out(i, j) = tau[i] * xr(i, j) + (1 - tau[i]) * xf(i, j);
  return out;
}

struct CriticDraw {
  M xr, xf, a;
  std::vector<double> tau;
  std::vector<M> params;  // W1 [h x in], b1 [h], w2 [1 x h], b2 [1]
  std::size_t hidden;
};

// Redraws until no hidden unit sits within 0.02 of its kink for real, fake or
// interpolated inputs.
inline CriticDraw critic_draw(std::uint64_t seed) {
  for (std::uint64_t attempt = 0;; ++attempt) {
    CaseRng rng(seed * 1000003 + attempt);
    CriticDraw d;
    const std::size_t n = rng.extent(2, 5), f = rng.extent(1, 4), k = rng.extent(1, 3);
    d.hidden = rng.extent(2, 6);
    d.xr = rng.matrix(n, f);
    d.xf = rng.matrix(n, f);
    d.a = rng.matrix(n, k);
    for (std::size_t i = 0; i < n; ++i) d.tau.push_back(rng.uniform(0, 1));
    d.params = {rng.matrix(d.hidden, f + k), M::vector(rng.matrix(1, d.hidden).values()), rng.matrix(1, d.hidden),
                M::vector({rng.uniform(-0.5, 0.5)})};
    const M& w = d.params[0];
    const M& b = d.params[1];
    const double least = std::min({min_preactivation(w, b, d.xr, d.a), min_preactivation(w, b, d.xf, d.a),
                                   min_preactivation(w, b, mix(d.xr, d.xf, d.tau), d.a)});
    if (least > 0.02) return d;
  }
}

inline std::vector<std::uint32_t> labels(CaseRng& rng, std::size_t n, std::size_t classes) {
  std::vector<std::uint32_t> y;
  for (std::size_t i = 0; i < n; ++i) y.push_back(static_cast<std::uint32_t>(rng.extent(0, classes - 1)));
  return y;
}

inline std::vector<std::uint32_t> other_labels(CaseRng& rng, const std::vector<std::uint32_t>& y, std::size_t classes) {
  std::vector<std::uint32_t> out;
  for (auto c : y) out.push_back(static_cast<std::uint32_t>((c + rng.extent(1, classes - 1)) % classes));
  return out;
}

inline bool samc_near_kink(const M& mu, const M& centers, const std::vector<std::uint32_t>& y,
                           const std::vector<std::uint32_t>& yp, const LossWeights& w) {
  for (std::size_t i = 0; i < mu.rows(); ++i) {
    double dp = 0, dn = 0;
    for (std::size_t d = 0; d < mu.cols(); ++d) {
      dp += std::pow(mu(i, d) - centers(y[i], d), 2);
      dn += std::pow(mu(i, d) - centers(yp[i], d), 2);
    }
    if (std::abs(w.delta + w.gamma * dp - (1 - w.gamma) * dn) < 2e-2) return true;
  }
  return false;
}

}  // namespace loss_detail

inline const std::vector<std::string>& all_loss_cases() {
  static const std::vector<std::string> names = {"kl_gaussian", "recon_loss", "gradient_penalty", "wgan_d_loss",
                                                 "wgan_g_loss", "samc_loss",  "cyc_loss",         "total_loss"};
  return names;
}

inline LossCase make_loss_case(const std::string& loss, std::uint64_t seed) {
  using namespace loss_detail;
  CaseRng rng(seed + 7777);
  const std::size_t n = rng.extent(1, 6), d = rng.extent(1, 5);

  if (loss == "kl_gaussian") {
    return {loss, [](Graph<double>& g, const std::vector<NodeId>& in) { return kl_gaussian(g, in[0], in[1]); },
            {rng.matrix(n, d, -2, 2), rng.matrix(n, d, -2, 2)}, 1e-4};
  }
  if (loss == "recon_loss") {
    return {loss, [](Graph<double>& g, const std::vector<NodeId>& in) { return recon_loss(g, in[0], in[1]); },
            {rng.matrix(n, d), rng.matrix(n, d)}, 1e-4};
  }
  if (loss == "gradient_penalty" || loss == "wgan_d_loss") {
    const CriticDraw cd = critic_draw(seed);
    LossWeights w;
    w.lambda_gp = 10.0;
    const bool full = loss == "wgan_d_loss";
    const std::size_t width = cd.xr.cols() + cd.a.cols();
    Builder f = [cd, w, full, width](Graph<double>& g, const std::vector<NodeId>& in) {
      const Critic<double> critic = mlp_critic(in, width, cd.hidden);
      if (full) return wgan_d_loss<double>(g, critic, cd.xr, cd.xf, cd.a, cd.tau, w);
      return gradient_penalty<double>(g, critic, cd.xr, cd.xf, cd.a, cd.tau);
    };
    return {loss, f, cd.params, 1e-3};
  }
  if (loss == "wgan_g_loss") {
    // Generator weights feed a fixed critic; the gradient reaches the weights.
    const CriticDraw cd = critic_draw(seed);
    const std::size_t f = cd.xr.cols(), width = f + cd.a.cols();
    for (std::uint64_t attempt = 0;; ++attempt) {
      CaseRng r2(seed * 131 + attempt);
      const M z = r2.matrix(cd.xr.rows(), 3), wg = r2.matrix(3, f, -0.5, 0.5);
      M x_hat = M::matrix(z.rows(), f);
      for (std::size_t i = 0; i < z.rows(); ++i)
        for (std::size_t j = 0; j < f; ++j)
          for (std::size_t k = 0; k < 3; ++k) x_hat(i, j) += z(i, k) * wg(k, j);
      if (min_preactivation(cd.params[0], cd.params[1], x_hat, cd.a) < 0.02) continue;
      Builder b = [cd, z, width](Graph<double>& g, const std::vector<NodeId>& in) {
        std::vector<NodeId> p;
        for (const auto& t : cd.params) p.push_back(g.constant(t));
        return wgan_g_loss<double>(g, mlp_critic(p, width, cd.hidden), g.matmul(g.constant(z), in[0]), g.constant(cd.a));
      };
      return {loss, b, {wg}, 1e-4};
    }
  }
  if (loss == "samc_loss" || loss == "total_loss") {
    LossWeights w;
    w.gamma = rng.uniform(0.1, 0.9);
    const std::size_t classes = rng.extent(2, 5);
    for (std::uint64_t attempt = 0;; ++attempt) {
      CaseRng r2(seed * 31 + attempt);
      const M mu = r2.matrix(n, d, -2, 2), centers = r2.matrix(classes, d, -2, 2);
      const auto y = labels(r2, n, classes);
      const auto yp = other_labels(r2, y, classes);
      if (samc_near_kink(mu, centers, y, yp, w)) continue;
      if (loss == "samc_loss") {
        return {loss, [y, yp, w](Graph<double>& g, const std::vector<NodeId>& in) { return samc_loss(g, in[0], y, yp, in[1], w); },
                {mu, centers}, 1e-4};
      }
      // All four components share inputs: mu_z, log_var_z, x, x_hat, centers, a_hat_real, a_hat_syn.
      w.lambda_ra = r2.uniform(0.001, 0.5);
      const M a = r2.matrix(n, d);
      const M wd = r2.matrix(d, 1);
      Builder b = [y, yp, w, a, wd](Graph<double>& g, const std::vector<NodeId>& in) {
        const NodeId vae = g.add(kl_gaussian(g, in[0], in[1]), recon_loss(g, in[2], in[3]));
        const Critic<double> critic = [&wd](Graph<double>& gg, NodeId x, NodeId) { return gg.matmul(x, gg.constant(wd)); };
        const NodeId wgan = wgan_g_loss<double>(g, critic, in[3], g.constant(a));
        const NodeId samc = samc_loss(g, in[0], y, yp, in[4], w);
        const NodeId cyc = cyc_loss(g, in[5], in[6], g.constant(a));
        return total_loss(g, {vae, wgan, samc, cyc}, w);
      };
      M ar(a.shape()), as(a.shape());
      const M off_r = r2.away_from_zero(n, d, 0.05, 1.0), off_s = r2.away_from_zero(n, d, 0.05, 1.0);
      for (std::size_t i = 0; i < a.size(); ++i) {
        ar[i] = a[i] + off_r[i];
        as[i] = a[i] + off_s[i];
      }
      return {loss, b, {mu, r2.matrix(n, d), r2.matrix(n, d), r2.matrix(n, d), centers, ar, as}, 1e-4};
    }
  }
  if (loss == "cyc_loss") {
    const M a = rng.matrix(n, d);
    M r(a.shape()), s(a.shape());
    const M off_r = rng.away_from_zero(n, d, 0.05, 1.0), off_s = rng.away_from_zero(n, d, 0.05, 1.0);
    for (std::size_t i = 0; i < a.size(); ++i) {
      r[i] = a[i] + off_r[i];
      s[i] = a[i] + off_s[i];
    }
    return {loss, [a](Graph<double>& g, const std::vector<NodeId>& in) { return cyc_loss(g, in[0], in[1], g.constant(a)); },
            {r, s}, 1e-4};
  }
  throw std::invalid_argument("make_loss_case: unknown loss " + loss);
}

}  // namespace fgzsl::oracle
