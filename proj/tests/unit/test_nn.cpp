#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <random>

#include "difiv/denoiser.hpp"
#include "difiv/errors.hpp"
#include "difiv/nn.hpp"

using namespace difiv;
using namespace difiv::nn;

namespace {

constexpr double kStep = 1e-6;
constexpr double kTol = 1e-6;

Tensor random_tensor(std::size_t c, std::size_t r, std::size_t w, std::uint64_t seed, double lo = -1.0,
                     double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(c, r, w);
  for (auto& v : t.data) v = u(rng);
  return t;
}

// Keeps samples at least `gap` away from zero so ReLU kinks stay out of
// the finite-difference stencil.
void push_off_zero(Tensor& t, double gap) {
  for (auto& v : t.data) {
    if (std::abs(v) < gap) v = v < 0 ? -gap : gap;
  }
}

void fill_params(ParameterStore& s, std::uint64_t seed, double scale = 0.5) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, scale);
  for (auto& v : s.values()) v = n(rng);
}

double inner(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a.data[k] * b.data[k];
  return s;
}

double rel(double a, double b, double floor) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

// Compares reverse-mode gradients of L = <probe, f(x)> against central
// differences, with respect to both x and every parameter.
struct GradCase {
  std::function<Tensor(const Tensor&)> fwd;                  // forward on current params
  std::function<Tensor(const Tensor&, const Tensor&)> bwd;   // (x, probe) -> dx; fills store grads
  ParameterStore* store = nullptr;
};

double check_case(GradCase& c, Tensor x, const Tensor& probe) {
  const Tensor dx = c.bwd(x, probe);
  std::vector<double> dtheta;
  if (c.store) dtheta.assign(c.store->grads().begin(), c.store->grads().end());
  double scale = 1e-12;
  for (double v : dx.data) scale = std::max(scale, std::abs(v));
  for (double v : dtheta) scale = std::max(scale, std::abs(v));
  const double floor = 1e-3 * scale;
  auto loss = [&](const Tensor& in) { return inner(probe, c.fwd(in)); };
  double worst = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double saved = x.data[k];
    x.data[k] = saved + kStep;
    const double plus = loss(x);
    x.data[k] = saved - kStep;
    const double minus = loss(x);
    x.data[k] = saved;
    worst = std::max(worst, rel(dx.data[k], (plus - minus) / (2 * kStep), floor));
  }
  if (c.store) {
    auto vals = c.store->values();
    for (std::size_t k = 0; k < vals.size(); ++k) {
      const double saved = vals[k];
      vals[k] = saved + kStep;
      const double plus = loss(x);
      vals[k] = saved - kStep;
      const double minus = loss(x);
      vals[k] = saved;
      worst = std::max(worst, rel(dtheta[k], (plus - minus) / (2 * kStep), floor));
    }
  }
  return worst;
}

}  // namespace

TEST(Autodiff, DepthwiseConv) {
  ParameterStore store;
  DepthwiseConv3x3 layer(3, store);
  fill_params(store, 1);
  GradCase c;
  c.store = &store;
  c.fwd = [&](const Tensor& x) {
    Tensor y;
    layer.forward(x, y, store);
    return y;
  };
  c.bwd = [&](const Tensor& x, const Tensor& probe) {
    Tensor y, gx;
    layer.forward(x, y, store);
    store.zero_grad();
    layer.backward(probe, gx, store);
    return gx;
  };
  EXPECT_LE(check_case(c, random_tensor(3, 7, 6, 2), random_tensor(3, 7, 6, 3)), kTol);
}

TEST(Autodiff, PointwiseConv) {
  ParameterStore store;
  PointwiseConv layer(3, 4, store);
  fill_params(store, 4);
  GradCase c;
  c.store = &store;
  c.fwd = [&](const Tensor& x) {
    Tensor y;
    layer.forward(x, y, store);
    return y;
  };
  c.bwd = [&](const Tensor& x, const Tensor& probe) {
    Tensor y, gx;
    layer.forward(x, y, store);
    store.zero_grad();
    layer.backward(probe, gx, store);
    return gx;
  };
  EXPECT_LE(check_case(c, random_tensor(3, 5, 5, 5), random_tensor(4, 5, 5, 6)), kTol);
}

TEST(Autodiff, PointwiseLinearClosedForm) {
  // y = W x + b on a single pixel: dL/dW = probe x^T, dL/db = probe, dL/dx = W^T probe.
  ParameterStore store;
  PointwiseConv layer(2, 2, store);
  const std::vector<double> w{1.5, -2.0, 0.25, 3.0};
  std::copy(w.begin(), w.end(), store.values(layer.weight).begin());
  Tensor x(2, 1, 1);
  x.data = {0.7, -1.1};
  Tensor probe(2, 1, 1);
  probe.data = {2.0, -0.5};
  Tensor y, gx;
  layer.forward(x, y, store);
  store.zero_grad();
  layer.backward(probe, gx, store);
  const auto gw = store.grads(layer.weight);
  EXPECT_NEAR(gw[0], 2.0 * 0.7, 1e-12);
  EXPECT_NEAR(gw[1], 2.0 * -1.1, 1e-12);
  EXPECT_NEAR(gw[2], -0.5 * 0.7, 1e-12);
  EXPECT_NEAR(gw[3], -0.5 * -1.1, 1e-12);
  EXPECT_NEAR(store.grads(layer.bias)[0], 2.0, 1e-12);
  EXPECT_NEAR(store.grads(layer.bias)[1], -0.5, 1e-12);
  EXPECT_NEAR(gx.data[0], 1.5 * 2.0 + 0.25 * -0.5, 1e-12);
  EXPECT_NEAR(gx.data[1], -2.0 * 2.0 + 3.0 * -0.5, 1e-12);
}

TEST(Autodiff, BatchNormTraining) {
  ParameterStore store;
  BatchNorm layer(3, store);
  fill_params(store, 7, 1.0);
  GradCase c;
  c.store = &store;
  c.fwd = [&](const Tensor& x) {
    Tensor y;
    layer.forward(x, y, store, Mode::kTrain, false);
    return y;
  };
  c.bwd = [&](const Tensor& x, const Tensor& probe) {
    Tensor y, gx;
    layer.forward(x, y, store, Mode::kTrain, false);
    store.zero_grad();
    layer.backward(probe, gx, store);
    return gx;
  };
  EXPECT_LE(check_case(c, random_tensor(3, 6, 6, 8), random_tensor(3, 6, 6, 9)), kTol);
}

TEST(Autodiff, BatchNormInference) {
  ParameterStore store;
  BatchNorm layer(2, store);
  fill_params(store, 10, 1.0);
  layer.running_mean = {0.3, -0.2};
  layer.running_var = {1.7, 0.4};
  GradCase c;
  c.store = &store;
  c.fwd = [&](const Tensor& x) {
    Tensor y;
    layer.forward(x, y, store, Mode::kEval, false);
    return y;
  };
  c.bwd = [&](const Tensor& x, const Tensor& probe) {
    Tensor y, gx;
    layer.forward(x, y, store, Mode::kEval, false);
    store.zero_grad();
    layer.backward(probe, gx, store);
    return gx;
  };
  EXPECT_LE(check_case(c, random_tensor(2, 4, 5, 11), random_tensor(2, 4, 5, 12)), kTol);
}

TEST(Autodiff, Relu) {
  Relu layer;
  GradCase c;
  c.fwd = [&](const Tensor& x) {
    Tensor y;
    layer.forward(x, y);
    return y;
  };
  c.bwd = [&](const Tensor& x, const Tensor& probe) {
    Tensor y, gx;
    layer.forward(x, y);
    layer.backward(probe, gx);
    return gx;
  };
  Tensor x = random_tensor(2, 5, 5, 13);
  push_off_zero(x, 1e-3);
  EXPECT_LE(check_case(c, x, random_tensor(2, 5, 5, 14)), kTol);
}

TEST(Autodiff, SeparableBlocks) {
  for (const LayerSpec spec : {LayerSpec{3, 4, false, true}, LayerSpec{4, 4, true, true},
                               LayerSpec{4, 3, false, false}}) {
    ParameterStore store;
    SeparableBlock block;
    block.depthwise = DepthwiseConv3x3(spec.in_channels, store);
    block.pointwise = PointwiseConv(spec.in_channels, spec.out_channels, store);
    if (spec.batch_norm) block.norm.emplace(spec.out_channels, store);
    block.relu = spec.relu;
    fill_params(store, 15);
    GradCase c;
    c.store = &store;
    c.fwd = [&](const Tensor& x) {
      Tensor y;
      block.forward(x, y, store, Mode::kTrain, false);
      return y;
    };
    c.bwd = [&](const Tensor& x, const Tensor& probe) {
      Tensor y, gx;
      block.forward(x, y, store, Mode::kTrain, false);
      store.zero_grad();
      block.backward(probe, gx, store);
      return gx;
    };
    const double err = check_case(c, random_tensor(spec.in_channels, 6, 6, 16), random_tensor(spec.out_channels, 6, 6, 17));
    EXPECT_LE(err, kTol) << "block " << spec.in_channels << "->" << spec.out_channels;
  }
}

TEST(Autodiff, FullNetworkInputAndParameters) {
  Network net(residual_denoiser_layout(3, 12, 8));
  std::mt19937_64 rng(18);
  net.initialize(rng);
  GradCase c;
  c.store = &net.store();
  c.fwd = [&](const Tensor& x) { return net.forward(x, Mode::kTrain, false); };
  c.bwd = [&](const Tensor& x, const Tensor& probe) {
    net.forward(x, Mode::kTrain, false);
    net.store().zero_grad();
    return net.backward(probe);
  };
  EXPECT_LE(check_case(c, random_tensor(3, 8, 8, 19), random_tensor(3, 8, 8, 20)), kTol);
}

TEST(Autodiff, LibraryGradientCheck) {
  DenoiserModel zero(3);
  const Tensor x = random_tensor(3, 8, 8, 21);
  EXPECT_LE(gradient_check(zero, x, {}), kTol);

  DenoiserModel model(3);
  std::mt19937_64 rng(22);
  model.net.initialize(rng);
  std::vector<double> dir(model.parameter_count());
  std::normal_distribution<double> n(0.0, 1.0);
  for (auto& d : dir) d = n(rng);
  EXPECT_LE(gradient_check(model, random_tensor(3, 16, 16, 23), dir), kTol);
  EXPECT_THROW(gradient_check(model, x, std::vector<double>(3)), DimensionError);
}

// --- losses and optimizer ---------------------------------------------------------

TEST(Losses, L1AndHuber) {
  Tensor p(1, 1, 3), t(1, 1, 3), g;
  p.data = {1.0, -2.0, 0.5};
  t.data = {0.0, 0.0, 0.5};
  EXPECT_DOUBLE_EQ(l1_loss(p, t, &g), 3.0);
  EXPECT_EQ(g.data, (difiv::AlignedVector{1.0, -1.0, 0.0}));
  p.data = {0.5e-4, -2.0, 0.5};
  const double h = huber_loss(p, t, 1e-4, &g);
  EXPECT_NEAR(h, (0.5e-4 * 0.5e-4) / 2e-4 + (2.0 - 0.5e-4), 1e-15);
  EXPECT_NEAR(g.data[0], 0.5, 1e-12);
  EXPECT_NEAR(g.data[1], -1.0, 1e-12);
  EXPECT_NEAR(g.data[2], 0.0, 1e-12);
}

TEST(Adam, MatchesReferenceRecurrence) {
  AdamState a;
  a.reset(2);
  std::vector<double> theta{1.0, -1.0};
  const std::vector<std::vector<double>> grads{{0.5, -2.0}, {0.1, 0.3}, {-0.4, 1.0}};
  double m[2] = {0, 0}, v[2] = {0, 0}, ref[2] = {1.0, -1.0};
  const double lr = 0.01;
  for (std::size_t t = 1; t <= grads.size(); ++t) {
    a.update(theta, grads[t - 1], lr);
    for (int k = 0; k < 2; ++k) {
      const double g = grads[t - 1][static_cast<std::size_t>(k)];
      m[k] = 0.9 * m[k] + 0.1 * g;
      v[k] = 0.999 * v[k] + 0.001 * g * g;
      const double mh = m[k] / (1 - std::pow(0.9, static_cast<double>(t)));
      const double vh = v[k] / (1 - std::pow(0.999, static_cast<double>(t)));
      ref[k] -= lr * mh / (std::sqrt(vh) + 1e-8);
    }
    EXPECT_NEAR(theta[0], ref[0], 1e-14);
    EXPECT_NEAR(theta[1], ref[1], 1e-14);
  }
  EXPECT_EQ(a.step, 3u);
}

// --- architecture -----------------------------------------------------------------

TEST(Architecture, LayoutFollowsReferenceDesign) {
  const auto layout = residual_denoiser_layout(5, 20, 8);
  ASSERT_EQ(layout.size(), 8u);
  EXPECT_EQ(layout.front().in_channels, 5u);
  EXPECT_EQ(layout.front().out_channels, 20u);
  EXPECT_TRUE(layout.front().relu);
  EXPECT_FALSE(layout.front().batch_norm);
  for (std::size_t k = 1; k + 1 < 8; ++k) {
    EXPECT_EQ(layout[k].in_channels, 20u);
    EXPECT_EQ(layout[k].out_channels, 20u);
    EXPECT_TRUE(layout[k].batch_norm);
    EXPECT_TRUE(layout[k].relu);
  }
  EXPECT_EQ(layout.back().out_channels, 5u);
  EXPECT_FALSE(layout.back().relu);
  EXPECT_FALSE(layout.back().batch_norm);
}

TEST(Architecture, ParameterCountMatchesTally) {
  // First block 5->20, six hidden 20->20 with BN, last 20->5.
  const std::size_t first = 9 * 5 + 5 * 20 + 20;
  const std::size_t hidden = 9 * 20 + 20 * 20 + 20 + 2 * 20;
  const std::size_t last = 9 * 20 + 20 * 5 + 5;
  const std::size_t tally = first + 6 * hidden + last;
  EXPECT_EQ(tally, 4290u);
  const auto layout = residual_denoiser_layout(5, 20, 8);
  EXPECT_EQ(separable_parameter_count(layout), tally);
  EXPECT_EQ(DenoiserModel(5).parameter_count(), tally);
  EXPECT_EQ(dense_parameter_count(layout), (9 * 5 * 20 + 20) + 6 * (9 * 400 + 20 + 40) + (9 * 100 + 5));
}

TEST(Architecture, SeparableReductionRate) {
  // Separable filters cost about 1/Depth + 1/9 of dense 3x3 filters.
  const auto layout = residual_denoiser_layout(5, 20, 8);
  const double ratio = static_cast<double>(separable_parameter_count(layout)) /
                       static_cast<double>(dense_parameter_count(layout));
  EXPECT_LE(ratio, 1.0 / 20.0 + 1.0 / 9.0 + 0.03);
}

TEST(Network, ZeroNetworkIsIdentityAndShapesHold) {
  Network net(residual_denoiser_layout(3, 12, 8));
  const Tensor x = random_tensor(3, 9, 7, 24);
  for (Mode m : {Mode::kTrain, Mode::kEval}) {
    const Tensor& y = net.forward(x, m, false);
    ASSERT_TRUE(y.same_shape(x));
    for (std::size_t k = 0; k < x.size(); ++k) EXPECT_EQ(y.data[k], x.data[k]);
  }
  EXPECT_THROW(net.forward(random_tensor(2, 4, 4, 1), Mode::kEval), DimensionError);
}

TEST(Network, InferenceIsFixedMap) {
  Network net(residual_denoiser_layout(3, 12, 8));
  std::mt19937_64 rng(25);
  net.initialize(rng);
  const Tensor x = random_tensor(3, 8, 8, 26);
  net.forward(x, Mode::kTrain, true);
  const Tensor a = net.forward(x, Mode::kEval);
  const Tensor b = net.forward(x, Mode::kEval);
  EXPECT_EQ(a.data, b.data);
}

TEST(Network, RunningStatisticsMomentum) {
  ParameterStore store;
  BatchNorm bn(1, store);
  Tensor x(1, 1, 4);
  x.data = {1.0, 2.0, 3.0, 4.0};
  Tensor y;
  bn.forward(x, y, store, Mode::kTrain, true);
  // mean 2.5, unbiased variance 5/3
  EXPECT_NEAR(bn.running_mean[0], 0.1 * 2.5, 1e-15);
  EXPECT_NEAR(bn.running_var[0], 0.9 + 0.1 * (5.0 / 3.0), 1e-15);
}
