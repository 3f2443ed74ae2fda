#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "fgzsl/autodiff.hpp"
#include "support/gradcheck.hpp"

using namespace fgzsl;
using fgzsl::oracle::CaseRng;

namespace {

Tensor<double> row(std::vector<double> v) {
  const std::size_t n = v.size();
  return Tensor<double>::matrix(1, n, std::move(v));
}

}  // namespace

TEST(Eval, AddIsElementwise) {
  Graph<double> g;
  const NodeId s = g.add(g.constant(row({1, 2})), g.constant(row({3, 4})));
  EXPECT_EQ(g.eval(s).values(), (std::vector<double>{4, 6}));
}

TEST(Eval, IdentityMatmulReturnsOperand) {
  CaseRng rng(3);
  const auto m = rng.matrix(3, 3);
  Graph<double> g;
  const NodeId p = g.matmul(g.constant(Tensor<double>::identity(3)), g.constant(m));
  EXPECT_EQ(g.eval(p), m);
}

TEST(Eval, LeakyRelu) {
  Graph<double> g;
  const NodeId y = g.leaky_relu(g.constant(row({-1, 2})), 0.2);
  EXPECT_DOUBLE_EQ(g.eval(y)[0], -0.2);
  EXPECT_DOUBLE_EQ(g.eval(y)[1], 2.0);
}

TEST(Eval, ShapeMismatchNamesNodeAndShapes) {
  Graph<double> g;
  const NodeId a = g.constant(Tensor<double>::matrix(2, 3));
  const NodeId b = g.constant(Tensor<double>::matrix(4, 5));
  try {
    g.matmul(a, b);
    FAIL() << "expected GraphError";
  } catch (const GraphError& e) {
    EXPECT_EQ(e.node(), 2u);
    EXPECT_EQ(e.op(), OpKind::matmul);
    ASSERT_EQ(e.shapes().size(), 2u);
    EXPECT_EQ(e.shapes()[0], (Shape{2, 3}));
    EXPECT_NE(std::string(e.what()).find("[4x5]"), std::string::npos);
  }
  EXPECT_THROW(g.add(a, g.constant(Tensor<double>::matrix(3, 2))), GraphError);
  EXPECT_THROW(g.add(a, g.constant(Tensor<double>({6}))), GraphError);
}

TEST(Backward, SquareAtThree) {
  Graph<double> g;
  const NodeId x = g.parameter(Tensor<double>::scalar(3.0), "x");
  const NodeId y = g.mul(x, x);
  const NodeId in[] = {x};
  EXPECT_DOUBLE_EQ(g.value(g.backward(y, in).at(x)).item(), 6.0);
}

TEST(Backward, MeanLeakyReluOfLinearMapMatchesFiniteDifferences) {
  CaseRng rng(11);
  const auto x = rng.matrix(3, 1);
  Tensor<double> w;
  // Redraw until no pre-activation sits on the kink.
  for (;;) {
    w = rng.matrix(4, 3);
    Graph<double> g;
    const auto& pre = g.value(g.matmul(g.constant(w), g.constant(x)));
    if (std::all_of(pre.values().begin(), pre.values().end(), [](double v) { return std::abs(v) > 1e-3; })) break;
  }
  const fgzsl::oracle::Builder f = [x](Graph<double>& g, const std::vector<NodeId>& in) {
    return g.reduce_mean(g.leaky_relu(g.matmul(in[0], g.constant(x)), 0.2));
  };
  EXPECT_LT(fgzsl::oracle::gradcheck(f, {w}), 1e-4);
}

TEST(Backward, UnusedLeafGetsZeroGradient) {
  Graph<double> g;
  const NodeId x = g.parameter(Tensor<double>::scalar(2.0), "x");
  const NodeId unused = g.parameter(Tensor<double>::matrix(2, 3, 5.0), "u");
  const NodeId y = g.square(x);
  const NodeId wrt[] = {x, unused};
  const auto grads = g.backward(y, wrt);
  EXPECT_EQ(g.value(grads.at(unused)), Tensor<double>::matrix(2, 3, 0.0));
}

TEST(Backward, RejectsNonScalarOutputAndForeignNodes) {
  Graph<double> g;
  const NodeId x = g.parameter(Tensor<double>::matrix(2, 2, 1.0), "x");
  const NodeId y = g.square(x);
  const NodeId wrt[] = {x};
  EXPECT_THROW(g.backward(y, wrt), GraphError);
  const NodeId s = g.reduce_sum(y);
  const NodeId foreign[] = {NodeId{1000}};
  EXPECT_THROW(g.backward(s, foreign), GraphError);
}

TEST(GradOfGrad, CubeSecondDerivative) {
  Graph<double> g;
  const NodeId x = g.parameter(Tensor<double>::scalar(2.0), "x");
  const NodeId y = g.mul(g.square(x), x);
  const NodeId outer[] = {x};
  const auto r = grad_of_grad<double>(g, y, x, [](Graph<double>&, NodeId d) { return d; }, outer);
  EXPECT_DOUBLE_EQ(g.value(r.first_gradient).item(), 12.0);
  EXPECT_DOUBLE_EQ(g.value(r.gradients.at(x)).item(), 12.0);
}

TEST(GradOfGrad, LinearCriticPenaltyClosedForm) {
  // D(x) = w.x, so ||grad_x D|| = ||w|| and d/dw (||w|| - 1)^2 = 2(||w|| - 1) w / ||w||.
  Graph<double> g;
  const NodeId w = g.parameter(Tensor<double>::matrix(2, 1, {3.0, 4.0}), "w");
  const NodeId x = g.constant(Tensor<double>::matrix(1, 2, {0.3, -0.7}), "x");
  const NodeId d = g.reduce_sum(g.matmul(x, w));
  const NodeId outer[] = {w};
  const auto r = grad_of_grad<double>(
      g, d, x,
      [](Graph<double>& gg, NodeId grad) {
        const NodeId n = gg.l2_norm_rows(grad);
        return gg.reduce_sum(gg.square(gg.sub(n, gg.fill(gg.shape(n), 1.0))));
      },
      outer);
  EXPECT_NEAR(g.value(r.penalty).item(), 16.0, 1e-12);
  const auto& gw = g.value(r.gradients.at(w));
  EXPECT_NEAR(gw[0], 4.8, 1e-12);
  EXPECT_NEAR(gw[1], 6.4, 1e-12);
}

namespace {

// Penalty (||grad_x D(x)||_2 - 1)^2 batch-mean for a 2-layer leaky-relu critic.
NodeId mlp_penalty(Graph<double>& g, const std::vector<NodeId>& in, const Tensor<double>& x) {
  const NodeId xp = g.constant(x);
  const std::size_t n = x.rows();
  const NodeId h = g.leaky_relu(g.add(g.matmul(xp, in[0]), g.broadcast_row(in[1], n)), 0.2);
  const NodeId score = g.add(g.matmul(h, in[2]), g.broadcast_row(in[3], n));
  const NodeId outer[] = {xp};
  const NodeId grad = g.backward(g.reduce_sum(score), outer).at(xp);
  const NodeId norm = g.l2_norm_rows(grad);
  return g.reduce_mean(g.square(g.sub(norm, g.fill(g.shape(norm), 1.0))));
}

}  // namespace

TEST(GradOfGrad, MlpPenaltyMatchesFiniteDifferences) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    CaseRng rng(100 + seed);
    const auto x = rng.matrix(5, 4);
    std::vector<Tensor<double>> params = {rng.matrix(4, 6), rng.matrix(1, 6), rng.matrix(6, 1), rng.matrix(1, 1)};
    const fgzsl::oracle::Builder f = [x](Graph<double>& g, const std::vector<NodeId>& in) { return mlp_penalty(g, in, x); };
    EXPECT_LT(fgzsl::oracle::gradcheck(f, params), 1e-3) << "seed " << seed;
  }
}

TEST(CheckFinite, DetectsNanAndOverflow) {
  EXPECT_TRUE(check_finite(row({1.0, 2.0})));
  EXPECT_FALSE(check_finite(row({1.0, std::numeric_limits<double>::quiet_NaN()})));
  Graph<double> g;
  const NodeId e = g.exp(g.constant(Tensor<double>::scalar(1000.0)));
  EXPECT_FALSE(check_finite(g.eval(e)));
}

class OpGradient : public ::testing::TestWithParam<std::string> {};

TEST_P(OpGradient, MatchesFiniteDifferencesOnRandomShapes) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    const auto c = fgzsl::oracle::make_op_case(GetParam(), seed);
    EXPECT_LT(fgzsl::oracle::gradcheck(c.builder, c.inputs), 1e-4) << c.op << " seed " << seed;
  }
}

INSTANTIATE_TEST_SUITE_P(AllPrimitives, OpGradient, ::testing::ValuesIn(fgzsl::oracle::all_op_cases()));

TEST(SecondOrder, DepthThreeCompositionsMatchFiniteDifferencesOfFirstGradient) {
  // f(x) = sum(w * exp(sq(x) * 0.3)) etc.; the scalarized first gradient is
  // sum(g * v) for a fixed v, then differentiated again.
  const std::vector<std::function<NodeId(Graph<double>&, NodeId)>> comps = {
      [](Graph<double>& g, NodeId x) { return g.exp(g.scale(g.square(x), 0.3)); },
      [](Graph<double>& g, NodeId x) { return g.log(g.add(g.square(x), g.fill(g.shape(x), 1.0))); },
      [](Graph<double>& g, NodeId x) { return g.sqrt(g.add(g.mul(x, x), g.fill(g.shape(x), 0.5))); },
      [](Graph<double>& g, NodeId x) { return g.reciprocal(g.add(g.exp(x), g.fill(g.shape(x), 1.0))); },
      [](Graph<double>& g, NodeId x) { return g.matmul(g.transpose(g.square(x)), x); },
  };
  for (std::size_t k = 0; k < comps.size(); ++k) {
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      CaseRng rng(seed + 1000 * k);
      const auto x0 = rng.matrix(3, 3);
      const auto v = rng.matrix(3, 3);
      const auto comp = comps[k];
      const fgzsl::oracle::Builder f = [comp, v](Graph<double>& g, const std::vector<NodeId>& in) {
        CaseRng wr(5);
        const NodeId y = fgzsl::oracle::contract(g, comp(g, in[0]), wr);
        const NodeId wrt[] = {in[0]};
        const NodeId d = g.backward(y, wrt).at(in[0]);
        return g.reduce_sum(g.mul(d, g.constant(v)));
      };
      EXPECT_LT(fgzsl::oracle::gradcheck(f, {x0}), 1e-3) << "composition " << k << " seed " << seed;
    }
  }
}

TEST(GraphProperties, ReevaluationIsBitwiseDeterministic) {
  CaseRng rng(4);
  Graph<double> g;
  const NodeId a = g.parameter(rng.matrix(4, 5), "a");
  const NodeId b = g.parameter(rng.matrix(5, 3), "b");
  const NodeId y = g.reduce_mean(g.exp(g.leaky_relu(g.matmul(a, b), 0.1)));
  const NodeId wrt[] = {a, b};
  const auto grads = g.backward(y, wrt);
  std::vector<Tensor<double>> before;
  for (NodeId k = 0; k < g.size(); ++k) before.push_back(g.value(k));
  g.reevaluate();
  for (NodeId k = 0; k < g.size(); ++k) EXPECT_EQ(g.value(k), before[k]) << "node " << k;
  EXPECT_EQ(g.value(grads.at(a)), before[grads.at(a)]);
}

TEST(GraphProperties, SetLeafPropagatesOnReevaluate) {
  Graph<double> g;
  const NodeId x = g.parameter(Tensor<double>::scalar(2.0), "x");
  const NodeId y = g.mul(x, x);
  g.set_leaf(x, Tensor<double>::scalar(5.0));
  g.reevaluate();
  EXPECT_DOUBLE_EQ(g.value(y).item(), 25.0);
  EXPECT_THROW(g.set_leaf(x, Tensor<double>::matrix(2, 1)), GraphError);
  EXPECT_THROW(g.set_leaf(y, Tensor<double>::scalar(1.0)), GraphError);
}

TEST(GraphProperties, InputsPrecedeNodes) {
  Graph<double> g;
  const NodeId a = g.parameter(Tensor<double>::matrix(2, 2, 1.0), "a");
  const NodeId y = g.reduce_sum(g.square(g.abs(a)));
  const NodeId wrt[] = {a};
  g.backward(y, wrt);
  for (NodeId k = 0; k < g.size(); ++k)
    for (NodeId i : g.node(k).inputs) EXPECT_LT(i, k);
}

TEST(GraphProperties, ConcatThenSlicesRecoverInputs) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CaseRng rng(seed);
    const std::size_t r = rng.extent(), ca = rng.extent(), cb = rng.extent();
    const auto a = rng.matrix(r, ca), b = rng.matrix(r, cb);
    Graph<double> g;
    const NodeId c = g.concat(g.constant(a), g.constant(b));
    EXPECT_EQ(g.value(g.slice(c, 0, ca)), a);
    EXPECT_EQ(g.value(g.slice(c, ca, ca + cb)), b);
  }
}

TEST(GraphProperties, ReciprocalOfZeroIsZero) {
  Graph<double> g;
  const NodeId r = g.reciprocal(g.constant(row({0.0, 4.0})));
  EXPECT_EQ(g.value(r).values(), (std::vector<double>{0.0, 0.25}));
}

TEST(GraphProperties, SinglePrecisionGraphsEvaluate) {
  Graph<float> g;
  const NodeId x = g.parameter(Tensor<float>::scalar(3.0f), "x");
  const NodeId y = g.mul(x, x);
  const NodeId wrt[] = {x};
  EXPECT_FLOAT_EQ(g.value(g.backward(y, wrt).at(x)).item(), 6.0f);
}
