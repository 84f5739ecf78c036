// Layer semantics: batch norm statistics and EMA updates, inverted dropout,
// parameter initialization, and the pre-activation residual block including
// its exact-identity property with zeroed convolution weights.

#include <gtest/gtest.h>

#include <cmath>

#include "mocae/gradcheck.hpp"
#include "mocae/nn.hpp"

using namespace mocae;
using nn::BatchNormLayer;
using nn::Conv2dLayer;
using nn::DenseLayer;
using nn::FwdCtx;
using nn::ParamMap;
using nn::PreactResidualBlock;
using nn::SeparableConvLayer;

namespace {

Tensor<double> random_tensor(std::vector<std::size_t> shape, Rng& rng) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.data) v = rng.uniform(-1.0, 1.0);
  return t;
}

}  // namespace

TEST(InitUniform, BoundsAndDeterminism) {
  Rng r1(3), r2(3);
  auto a = nn::init_uniform<double>({4, 4}, 16, r1);
  auto b = nn::init_uniform<double>({4, 4}, 16, r2);
  EXPECT_EQ(a.data, b.data);
  const double limit = std::sqrt(3.0 / 16.0);
  for (double v : a.data) {
    EXPECT_GE(v, -limit);
    EXPECT_LE(v, limit);
  }
}

TEST(FwdCtx, UnknownParameterThrows) {
  Graph<double> g;
  ParamMap<double> params;
  FwdCtx<double> c{g, params, Mode::Infer, nullptr};
  EXPECT_THROW(c.param("missing.w"), ConfigError);
  EXPECT_THROW(c.raw("missing.w"), ConfigError);
}

TEST(FwdCtx, LeafRegisteredOnceAndGradFlagFollowsMode) {
  Graph<double> g;
  ParamMap<double> params;
  Rng rng(1);
  params["p.w"] = {random_tensor({2, 2}, rng), true};
  params["p.stats"] = {random_tensor({2}, rng), false};

  FwdCtx<double> c{g, params, Mode::Train, nullptr};
  const int id1 = c.param("p.w");
  EXPECT_EQ(c.param("p.w"), id1);
  EXPECT_TRUE(g.node(id1).requires_grad);
  EXPECT_FALSE(g.node(c.param("p.stats")).requires_grad);

  Graph<double> g2;
  FwdCtx<double> c2{g2, params, Mode::Infer, nullptr};
  EXPECT_FALSE(g2.node(c2.param("p.w")).requires_grad);
}

TEST(BatchNorm, TrainStatisticsOracle) {
  // One channel, computed by hand: out = gamma*(x-mean)/sqrt(var+eps)+beta.
  Graph<double> g;
  ParamMap<double> params;
  Rng rng(2);
  BatchNormLayer<double> bn{"bn", 1};
  bn.init(params, rng);

  Tensor<double> x({2, 1, 1, 2});
  x.data = {1.0, 2.0, 3.0, 6.0};
  const double mean = (1.0 + 2.0 + 3.0 + 6.0) / 4.0;  // 3.0
  double var = 0.0;
  for (double v : x.data) var += (v - mean) * (v - mean);
  var /= 4.0;  // population variance

  FwdCtx<double> c{g, params, Mode::Train, nullptr};
  int y = bn.forward(c, g.leaf(x));
  for (std::size_t i = 0; i < 4; ++i)
    EXPECT_NEAR(g.val(y).data[i], (x.data[i] - mean) / std::sqrt(var + 1e-5),
                1e-12);

  // EMA with momentum 0.1 from the (0, 1) starting statistics
  EXPECT_NEAR(params.at("bn.running_mean").value.data[0], 0.1 * mean, 1e-12);
  EXPECT_NEAR(params.at("bn.running_var").value.data[0], 0.9 * 1.0 + 0.1 * var,
              1e-12);
  EXPECT_EQ(params.at("bn.stats_init").value.data[0], 1.0);
}

TEST(BatchNorm, InferBeforeStatsThrows) {
  Graph<double> g;
  ParamMap<double> params;
  Rng rng(2);
  BatchNormLayer<double> bn{"bn", 2};
  bn.init(params, rng);  // standalone layers start with unusable stats

  Tensor<double> x({1, 2, 2, 2}, 0.5);
  FwdCtx<double> c{g, params, Mode::Infer, nullptr};
  try {
    bn.forward(c, g.leaf(x));
    FAIL() << "expected ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("running statistics"), std::string::npos);
  }
}

TEST(BatchNorm, InferAppliesRunningStats) {
  Graph<double> g;
  ParamMap<double> params;
  Rng rng(2);
  BatchNormLayer<double> bn{"bn", 1};
  bn.init(params, rng, /*stats_valid=*/true);
  params.at("bn.running_mean").value.data[0] = 2.0;
  params.at("bn.running_var").value.data[0] = 4.0;

  Tensor<double> x({1, 1, 1, 1}, 6.0);
  FwdCtx<double> c{g, params, Mode::Infer, nullptr};
  int y = bn.forward(c, g.leaf(x));
  EXPECT_NEAR(g.val(y).data[0], (6.0 - 2.0) / std::sqrt(4.0 + 1e-5), 1e-9);
  // infer mode must not move the running statistics
  EXPECT_DOUBLE_EQ(params.at("bn.running_mean").value.data[0], 2.0);
  EXPECT_DOUBLE_EQ(params.at("bn.running_var").value.data[0], 4.0);
}

TEST(BatchNorm, InputGradientFiniteDifference) {
  Rng rng(4);
  ParamMap<double> params;
  BatchNormLayer<double> bn{"bn", 3};
  bn.init(params, rng);

  auto f = [&](const Tensor<double>& x, Tensor<double>* grad) {
    auto local = params;  // train mode mutates running stats
    Graph<double> g;
    FwdCtx<double> c{g, local, Mode::Train, nullptr};
    BatchNormLayer<double> layer{"bn", 3};
    int p = g.leaf(x, true);
    int out = op::mean_all(g, op::tanh_act(g, layer.forward(c, p)));
    if (grad) {
      g.backward(out);
      *grad = g.grad(p);
    }
    return g.val(out).data[0];
  };
  auto r = finite_difference_check(f, random_tensor({2, 3, 4, 4}, rng), 1e-3);
  ASSERT_TRUE(r.finite);
  EXPECT_LT(r.max_rel_err, 1e-4);
}

TEST(Dropout, InferAndZeroRateAreIdentity) {
  Graph<double> g;
  Rng rng(5);
  Tensor<double> x({8}, 1.5);
  int p = g.leaf(x);
  EXPECT_EQ(op::dropout(g, p, 0.5, Mode::Infer, rng), p);
  EXPECT_EQ(op::dropout(g, p, 0.0, Mode::Train, rng), p);
}

TEST(Dropout, RateValidation) {
  Graph<double> g;
  Rng rng(5);
  Tensor<double> x({2}, 1.0);
  int p = g.leaf(x);
  EXPECT_THROW(op::dropout(g, p, -0.1, Mode::Train, rng), ConfigError);
  EXPECT_THROW(op::dropout(g, p, 1.0, Mode::Train, rng), ConfigError);
}

TEST(Dropout, InvertedScalingKeepsExpectation) {
  // Survivors are scaled by 1/(1-rate), so the mean over many masks returns
  // to the input value; the drop fraction approaches the rate.
  Rng rng(6);
  const double rate = 0.3;
  const std::size_t n = 2000;
  Tensor<double> x({n}, 1.0);
  double sum = 0.0;
  std::size_t zeros = 0;
  Graph<double> g;
  int y = op::dropout(g, g.leaf(x), rate, Mode::Train, rng);
  for (double v : g.val(y).data) {
    sum += v;
    if (v == 0.0) {
      ++zeros;
    } else {
      EXPECT_NEAR(v, 1.0 / (1.0 - rate), 1e-12);
    }
  }
  EXPECT_NEAR(sum / static_cast<double>(n), 1.0, 0.05);
  EXPECT_NEAR(static_cast<double>(zeros) / static_cast<double>(n), rate, 0.05);
}

TEST(Conv2dLayer, BiasBroadcastOracle) {
  Graph<double> g;
  ParamMap<double> params;
  Rng rng(7);
  Conv2dLayer<double> conv{"c", 2, 3, 1, 1, 0, true};
  conv.init(params, rng);
  params.at("c.b").value.data = {0.5, -1.0, 2.0};

  Tensor<double> x = random_tensor({1, 2, 3, 3}, rng);
  FwdCtx<double> c{g, params, Mode::Infer, nullptr};
  int y = conv.forward(c, g.leaf(x));
  // subtracting the bias must recover the bias-free convolution
  Graph<double> g2;
  FwdCtx<double> c2{g2, params, Mode::Infer, nullptr};
  int y0 = op::conv2d(g2, g2.leaf(x), c2.param("c.w"), 1, 0);
  for (std::size_t f = 0; f < 3; ++f)
    for (std::size_t i = 0; i < 9; ++i)
      EXPECT_NEAR(g.val(y).data[f * 9 + i],
                  g2.val(y0).data[f * 9 + i] + params.at("c.b").value.data[f],
                  1e-12);
}

TEST(ResidualBlock, ZeroedConvWeightsGiveExactIdentity) {
  ParamMap<double> params;
  Rng rng(8);
  PreactResidualBlock<double> block;
  block.name = "b";
  block.in_ch = 3;
  block.out_ch = 3;
  block.stride = 1;
  block.dropout_rate = 0.0;
  block.configure();
  block.init(params, rng, /*stats_valid=*/true);
  for (const char* w : {"b.conv1.dw", "b.conv1.pw", "b.conv2.dw", "b.conv2.pw"})
    for (auto& v : params.at(w).value.data) v = 0.0;

  Tensor<double> x = random_tensor({2, 3, 8, 8}, rng);
  Graph<double> g;
  FwdCtx<double> c{g, params, Mode::Infer, nullptr};
  int y = block.forward(c, g.leaf(x));
  EXPECT_EQ(g.val(y).data, x.data);  // bitwise: the residual path is exactly 0
}

TEST(ResidualBlock, ProjectionChangesShapeAndChannels) {
  ParamMap<double> params;
  Rng rng(9);
  PreactResidualBlock<double> block;
  block.name = "b";
  block.in_ch = 4;
  block.out_ch = 8;
  block.stride = 2;
  block.dropout_rate = 0.0;
  block.configure();
  EXPECT_TRUE(block.needs_projection());
  block.init(params, rng, true);
  EXPECT_TRUE(params.count("b.proj.w"));

  Tensor<double> x = random_tensor({2, 4, 16, 16}, rng);
  Graph<double> g;
  FwdCtx<double> c{g, params, Mode::Infer, nullptr};
  int y = block.forward(c, g.leaf(x));
  EXPECT_EQ(g.val(y).shape, (std::vector<std::size_t>{2, 8, 8, 8}));
}

TEST(ResidualBlock, IdentityVariantHasNoProjectionParams) {
  ParamMap<double> params;
  Rng rng(10);
  PreactResidualBlock<double> block;
  block.name = "b";
  block.in_ch = 4;
  block.out_ch = 4;
  block.stride = 1;
  block.configure();
  EXPECT_FALSE(block.needs_projection());
  block.init(params, rng, true);
  EXPECT_FALSE(params.count("b.proj.w"));
}

TEST(ResidualBlock, ParameterGradientFiniteDifference) {
  ParamMap<double> params;
  Rng rng(11);
  PreactResidualBlock<double> block;
  block.name = "b";
  block.in_ch = 2;
  block.out_ch = 4;
  block.stride = 2;
  block.dropout_rate = 0.0;
  block.configure();
  block.init(params, rng, true);
  Tensor<double> x = random_tensor({2, 2, 8, 8}, rng);

  for (const char* pname : {"b.conv1.dw", "b.conv2.pw", "b.bn1.gamma", "b.proj.w"}) {
    auto f = [&](const Tensor<double>& v, Tensor<double>* grad) {
      auto local = params;
      local.at(pname).value = v;
      Graph<double> g;
      FwdCtx<double> c{g, local, Mode::Train, nullptr};
      int p = g.leaf(x);
      int out = op::mean_all(g, op::tanh_act(g, block.forward(c, p)));
      if (grad) {
        g.backward(out);
        *grad = g.grad(c.ids.at(pname));
      }
      return g.val(out).data[0];
    };
    auto r = finite_difference_check(f, params.at(pname).value, 1e-4);
    ASSERT_TRUE(r.finite) << pname;
    EXPECT_LT(r.max_rel_err, 1e-4) << pname;
  }
}
