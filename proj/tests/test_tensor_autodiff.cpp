// Tensor container semantics and reverse-mode gradients of the elementwise
// and reduction primitives, verified against hand-derived formulas and
// central finite differences at 64-bit precision.

#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "mocae/gradcheck.hpp"
#include "mocae/ops.hpp"
#include "mocae/rng.hpp"

using namespace mocae;

namespace {

Tensor<double> random_tensor(std::vector<std::size_t> shape, Rng& rng,
                             double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST(Tensor, ShapeAccounting) {
  Tensor<double> t({2, 3, 4});
  EXPECT_EQ(t.numel(), 24u);
  EXPECT_EQ(t.rank(), 3u);
  EXPECT_EQ(t.dim(1), 3u);
  EXPECT_FALSE(t.is_scalar());
  EXPECT_EQ(t.shape_str(), "[2,3,4]");

  auto s = Tensor<double>::scalar(2.5);
  EXPECT_TRUE(s.is_scalar());
  EXPECT_DOUBLE_EQ(s.data[0], 2.5);
}

TEST(Tensor, RowMajorIndexing) {
  Tensor<double> t({2, 3});
  for (std::size_t i = 0; i < 6; ++i) t.data[i] = static_cast<double>(i);
  EXPECT_DOUBLE_EQ(t.at(0, 0), 0.0);
  EXPECT_DOUBLE_EQ(t.at(0, 2), 2.0);
  EXPECT_DOUBLE_EQ(t.at(1, 0), 3.0);
  EXPECT_DOUBLE_EQ(t.at(1, 2), 5.0);
}

TEST(Tensor, AllFinite) {
  Tensor<double> t({2});
  EXPECT_TRUE(t.all_finite());
  t.data[1] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_FALSE(t.all_finite());
}

TEST(Graph, BackwardRequiresScalar) {
  Graph<double> g;
  Tensor<double> v({2}, 1.0);
  int x = g.leaf(v, true);
  EXPECT_THROW(g.backward(x), ShapeError);
}

TEST(Graph, FanOutAccumulates) {
  // y = mean(x + x): dy/dx_i = 2/n.
  Graph<double> g;
  Tensor<double> v({4}, 3.0);
  int x = g.leaf(v, true);
  int y = op::mean_all(g, op::add(g, x, x));
  g.backward(y);
  for (double gi : g.grad(x).data) EXPECT_DOUBLE_EQ(gi, 0.5);
}

TEST(Graph, NonTrainableLeafGetsNoGradient) {
  Graph<double> g;
  Tensor<double> v({3}, 2.0);
  int x = g.leaf(v, false);
  int y = op::mean_all(g, op::relu(g, x));
  g.backward(y);
  EXPECT_FALSE(g.node(x).requires_grad);
}

TEST(Graph, HandDerivedChain) {
  // y = mean(tanh(x)); dy/dx_i = (1 - tanh(x_i)^2) / n.
  Graph<double> g;
  Tensor<double> v({3});
  v.data = {0.3, -0.7, 1.2};
  int x = g.leaf(v, true);
  int y = op::mean_all(g, op::tanh_act(g, x));
  g.backward(y);
  for (std::size_t i = 0; i < 3; ++i) {
    const double t = std::tanh(v.data[i]);
    EXPECT_NEAR(g.grad(x).data[i], (1.0 - t * t) / 3.0, 1e-12);
  }
}

TEST(Ops, ReluForward) {
  Graph<double> g;
  Tensor<double> v({4});
  v.data = {-1.0, 0.0, 0.5, 2.0};
  int y = op::relu(g, g.leaf(v));
  EXPECT_DOUBLE_EQ(g.val(y).data[0], 0.0);
  EXPECT_DOUBLE_EQ(g.val(y).data[2], 0.5);
  EXPECT_DOUBLE_EQ(g.val(y).data[3], 2.0);
}

TEST(Ops, SigmoidForwardOracle) {
  Graph<double> g;
  Tensor<double> v({2});
  v.data = {0.0, 2.0};
  int y = op::sigmoid(g, g.leaf(v));
  EXPECT_NEAR(g.val(y).data[0], 0.5, 1e-12);
  EXPECT_NEAR(g.val(y).data[1], 1.0 / (1.0 + std::exp(-2.0)), 1e-12);
}

TEST(Ops, MseForwardOracle) {
  Graph<double> g;
  Tensor<double> a({2}), b({2});
  a.data = {1.0, 3.0};
  b.data = {0.0, 1.0};
  int y = op::mse_loss(g, g.leaf(a), g.leaf(b));
  EXPECT_NEAR(g.val(y).data[0], (1.0 + 4.0) / 2.0, 1e-12);
}

TEST(Ops, BceForwardOracle) {
  // Independent formula: -[y log p + (1-y) log(1-p)], p = 1/(1+e^-z).
  Graph<double> g;
  Tensor<double> z({2});
  z.data = {1.3, -0.4};
  const std::vector<double> labels = {1.0, 0.0};
  int y = op::bce_with_logits(g, g.leaf(z), labels);
  double expect = 0.0;
  for (int i = 0; i < 2; ++i) {
    const double p = 1.0 / (1.0 + std::exp(-z.data[i]));
    expect += -(labels[i] * std::log(p) + (1.0 - labels[i]) * std::log(1.0 - p));
  }
  EXPECT_NEAR(g.val(y).data[0], expect / 2.0, 1e-12);
}

TEST(Ops, BceRejectsNonBinaryLabels) {
  Graph<double> g;
  Tensor<double> z({1}, 0.0);
  EXPECT_THROW(op::bce_with_logits(g, g.leaf(z), std::vector<double>{0.5}),
               ConfigError);
  EXPECT_THROW(op::bce_with_logits(g, g.leaf(z), std::vector<double>{1.0, 0.0}),
               ShapeError);
}

TEST(Ops, BceStableAtExtremeLogits) {
  Graph<double> g;
  Tensor<double> z({2});
  z.data = {60.0, -60.0};
  int y = op::bce_with_logits(g, g.leaf(z), std::vector<double>{1.0, 0.0});
  EXPECT_TRUE(std::isfinite(g.val(y).data[0]));
  EXPECT_NEAR(g.val(y).data[0], 0.0, 1e-12);
}

TEST(Ops, ReshapePreservesDataAndCount) {
  Graph<double> g;
  Tensor<double> v({2, 3});
  for (std::size_t i = 0; i < 6; ++i) v.data[i] = static_cast<double>(i);
  int y = op::reshape(g, g.leaf(v), {3, 2});
  EXPECT_EQ(g.val(y).shape, (std::vector<std::size_t>{3, 2}));
  EXPECT_EQ(g.val(y).data, v.data);
  EXPECT_THROW(op::reshape(g, g.leaf(v), {4, 2}), ShapeError);
}

TEST(Ops, AddShapeMismatch) {
  Graph<double> g;
  Tensor<double> a({2}), b({3});
  EXPECT_THROW(op::add(g, g.leaf(a), g.leaf(b)), ShapeError);
}

// Finite-difference checks at eps 1e-4; kink-free points keep the probe valid.
TEST(FiniteDifference, ElementwisePrimitives) {
  Rng rng(11);
  for (int rep = 0; rep < 5; ++rep) {
    Tensor<double> point = random_tensor({2, 5}, rng);
    // keep every coordinate away from the relu kink
    for (auto& v : point.data)
      if (std::abs(v) < 0.05) v = 0.1;

    struct Case {
      const char* name;
      std::function<int(Graph<double>&, int)> apply;
    };
    const Case cases[] = {
        {"relu", [](Graph<double>& g, int x) { return op::relu(g, x); }},
        {"tanh", [](Graph<double>& g, int x) { return op::tanh_act(g, x); }},
        {"sigmoid", [](Graph<double>& g, int x) { return op::sigmoid(g, x); }},
    };
    for (const auto& c : cases) {
      auto f = [&](const Tensor<double>& x, Tensor<double>* grad) {
        Graph<double> g;
        int p = g.leaf(x, true);
        int out = op::mean_all(g, c.apply(g, p));
        if (grad) {
          g.backward(out);
          *grad = g.grad(p);
        }
        return g.val(out).data[0];
      };
      auto r = finite_difference_check(f, point, 1e-4);
      ASSERT_TRUE(r.finite) << c.name;
      EXPECT_LT(r.max_rel_err, 1e-6) << c.name;
    }
  }
}

TEST(FiniteDifference, Losses) {
  Rng rng(12);
  Tensor<double> target = random_tensor({3, 4}, rng);
  auto f_mse = [&](const Tensor<double>& x, Tensor<double>* grad) {
    Graph<double> g;
    int p = g.leaf(x, true);
    int out = op::mse_loss(g, p, g.leaf(target));
    if (grad) {
      g.backward(out);
      *grad = g.grad(p);
    }
    return g.val(out).data[0];
  };
  auto r = finite_difference_check(f_mse, random_tensor({3, 4}, rng), 1e-4);
  ASSERT_TRUE(r.finite);
  EXPECT_LT(r.max_rel_err, 1e-7);

  const std::vector<double> labels = {1.0, 0.0, 1.0};
  auto f_bce = [&](const Tensor<double>& x, Tensor<double>* grad) {
    Graph<double> g;
    int p = g.leaf(x, true);
    int out = op::bce_with_logits(g, p, labels);
    if (grad) {
      g.backward(out);
      *grad = g.grad(p);
    }
    return g.val(out).data[0];
  };
  r = finite_difference_check(f_bce, random_tensor({3}, rng, -2.0, 2.0), 1e-4);
  ASSERT_TRUE(r.finite);
  EXPECT_LT(r.max_rel_err, 1e-7);
}

TEST(FiniteDifference, AxpbyCombination) {
  Rng rng(13);
  Tensor<double> other = random_tensor({2, 2}, rng);
  auto f = [&](const Tensor<double>& x, Tensor<double>* grad) {
    Graph<double> g;
    int p = g.leaf(x, true);
    int a = op::mse_loss(g, p, g.leaf(other));
    int b = op::mean_all(g, op::tanh_act(g, p));
    int out = op::axpby(g, 0.2, a, 0.8, b);
    if (grad) {
      g.backward(out);
      *grad = g.grad(p);
    }
    return g.val(out).data[0];
  };
  auto r = finite_difference_check(f, random_tensor({2, 2}, rng), 1e-4);
  ASSERT_TRUE(r.finite);
  EXPECT_LT(r.max_rel_err, 1e-7);
}

TEST(FiniteDifference, DenseLayerAllInputs) {
  Rng rng(14);
  Tensor<double> x0 = random_tensor({3, 4}, rng);
  Tensor<double> w0 = random_tensor({4, 5}, rng);
  Tensor<double> b0 = random_tensor({5}, rng);

  auto check_wrt = [&](int which, const Tensor<double>& point) {
    auto f = [&](const Tensor<double>& v, Tensor<double>* grad) {
      Graph<double> g;
      int x = g.leaf(which == 0 ? v : x0, which == 0);
      int w = g.leaf(which == 1 ? v : w0, which == 1);
      int b = g.leaf(which == 2 ? v : b0, which == 2);
      int out = op::mean_all(g, op::dense(g, x, w, b));
      int target = which == 0 ? x : which == 1 ? w : b;
      if (grad) {
        g.backward(out);
        *grad = g.grad(target);
      }
      return g.val(out).data[0];
    };
    auto r = finite_difference_check(f, point, 1e-4);
    ASSERT_TRUE(r.finite);
    EXPECT_LT(r.max_rel_err, 1e-7) << "wrt argument " << which;
  };
  check_wrt(0, x0);
  check_wrt(1, w0);
  check_wrt(2, b0);
}

TEST(FiniteDifference, Upsample2x) {
  Rng rng(15);
  auto f = [&](const Tensor<double>& x, Tensor<double>* grad) {
    Graph<double> g;
    int p = g.leaf(x, true);
    int out = op::mean_all(g, op::upsample2x(g, p));
    if (grad) {
      g.backward(out);
      *grad = g.grad(p);
    }
    return g.val(out).data[0];
  };
  auto r = finite_difference_check(f, random_tensor({1, 2, 3, 3}, rng), 1e-4);
  ASSERT_TRUE(r.finite);
  EXPECT_LT(r.max_rel_err, 1e-7);
}

TEST(FiniteDifference, NonFiniteProbeIsFlagged) {
  auto f = [&](const Tensor<double>& x, Tensor<double>* grad) {
    if (grad) grad->data[0] = 0.0;
    return std::log(x.data[0]);  // probe at x-eps goes non-finite near 0
  };
  Tensor<double> p({1}, 5e-5);
  auto r = finite_difference_check(f, p, 1e-4);
  EXPECT_FALSE(r.finite);
}

TEST(Rng, DeterministicStreamsAndFork) {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) EXPECT_DOUBLE_EQ(a.uniform(), b.uniform());
  Rng c(42);
  Rng f1 = c.fork(7);
  Rng f2 = Rng(42).fork(7);
  for (int i = 0; i < 10; ++i) EXPECT_DOUBLE_EQ(f1.uniform(), f2.uniform());
  // distinct salts give distinct streams
  Rng g1 = Rng(42).fork(1), g2 = Rng(42).fork(2);
  bool differs = false;
  for (int i = 0; i < 10; ++i) differs |= (g1.uniform() != g2.uniform());
  EXPECT_TRUE(differs);
}

TEST(Rng, UniformIntBoundsInclusive) {
  Rng r(5);
  bool saw_lo = false, saw_hi = false;
  for (int i = 0; i < 1000; ++i) {
    const auto v = r.uniform_int(2, 5);
    ASSERT_GE(v, 2);
    ASSERT_LE(v, 5);
    saw_lo |= (v == 2);
    saw_hi |= (v == 5);
  }
  EXPECT_TRUE(saw_lo);
  EXPECT_TRUE(saw_hi);
}
