#pragma once
// Named-parameter layers: separable convolutions, batch norm, dense layers
// and the full pre-activation residual block.

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "mocae/ops.hpp"
#include "mocae/rng.hpp"

namespace mocae::nn {

template <class S>
struct Param {
  Tensor<S> value;
  bool trainable = true;
};

template <class S>
using ParamMap = std::map<std::string, Param<S>>;

// Fan-in-scaled uniform init: U(-sqrt(3/fan_in), sqrt(3/fan_in)).
template <class S>
Tensor<S> init_uniform(std::vector<std::size_t> shape, std::size_t fan_in, Rng& rng) {
  Tensor<S> t(std::move(shape));
  const double limit = std::sqrt(3.0 / static_cast<double>(fan_in));
  for (S& v : t.data) v = static_cast<S>(rng.uniform(-limit, limit));
  return t;
}

// Per-pass binding of the parameter store onto a graph. Leaves are
// registered lazily; running statistics stay outside the tape and are
// mutated through the ParamMap reference.
template <class S>
struct FwdCtx {
  Graph<S>& g;
  ParamMap<S>& params;
  Mode mode = Mode::Infer;
  Rng* rng = nullptr;  // needed only for train-mode dropout
  std::map<std::string, int> ids;

  int param(const std::string& name) {
    auto it = ids.find(name);
    if (it != ids.end()) return it->second;
    auto pit = params.find(name);
    if (pit == params.end())
      throw ConfigError("unknown parameter: " + name);
    const bool rg = (mode == Mode::Train) && pit->second.trainable;
    int id = g.leaf(pit->second.value, rg);
    ids.emplace(name, id);
    return id;
  }

  Tensor<S>& raw(const std::string& name) {
    auto pit = params.find(name);
    if (pit == params.end())
      throw ConfigError("unknown parameter: " + name);
    return pit->second.value;
  }
};

template <class S>
struct Conv2dLayer {
  std::string name;
  std::size_t in_ch = 0, out_ch = 0, k = 1;
  int stride = 1, pad = 0;
  bool bias = false;

  void init(ParamMap<S>& p, Rng& rng) const {
    p[name + ".w"] = {init_uniform<S>({out_ch, in_ch, k, k}, in_ch * k * k, rng), true};
    if (bias) p[name + ".b"] = {Tensor<S>({out_ch}), true};
  }

  int forward(FwdCtx<S>& c, int x) const {
    int y = op::conv2d(c.g, x, c.param(name + ".w"), stride, pad);
    if (bias) {
      // broadcast bias over [N,F,H,W] via a tiny custom node
      int b = c.param(name + ".b");
      const Tensor<S>& yv = c.g.val(y);
      Tensor<S> out = yv;
      const std::size_t N = yv.dim(0), F = yv.dim(1), HW = yv.dim(2) * yv.dim(3);
      const Tensor<S>& bv = c.g.val(b);
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t f = 0; f < F; ++f) {
          S* o = out.data.data() + (n * F + f) * HW;
          for (std::size_t i = 0; i < HW; ++i) o[i] += bv.data[f];
        }
      y = c.g.make(std::move(out), {y, b}, [y, b, N, F, HW](Graph<S>& g, int id) {
        const Tensor<S>& go = g.grad(id);
        g.accum(y, go);
        if (g.node(b).requires_grad) {
          Tensor<S>& gb = g.grad(b);
          for (std::size_t n = 0; n < N; ++n)
            for (std::size_t f = 0; f < F; ++f) {
              const S* p = go.data.data() + (n * F + f) * HW;
              for (std::size_t i = 0; i < HW; ++i) gb.data[f] += p[i];
            }
        }
      });
    }
    return y;
  }
};

template <class S>
struct SeparableConvLayer {
  std::string name;
  std::size_t in_ch = 0, out_ch = 0, k = 3;
  int stride = 1;

  void init(ParamMap<S>& p, Rng& rng) const {
    p[name + ".dw"] = {init_uniform<S>({in_ch, 1, k, k}, k * k, rng), true};
    p[name + ".pw"] = {init_uniform<S>({out_ch, in_ch, 1, 1}, in_ch, rng), true};
  }

  int forward(FwdCtx<S>& c, int x) const {
    return op::separable_conv(c.g, x, c.param(name + ".dw"), c.param(name + ".pw"),
                              stride);
  }
};

template <class S>
struct BatchNormLayer {
  std::string name;
  std::size_t channels = 0;
  S momentum = S(0.1);
  S eps = S(1e-5);

  // stats_valid marks the deterministic (0, 1) running statistics written at
  // init as usable for inference; standalone layers start uninitialized.
  void init(ParamMap<S>& p, Rng&, bool stats_valid = false) const {
    p[name + ".gamma"] = {Tensor<S>({channels}, S(1)), true};
    p[name + ".beta"] = {Tensor<S>({channels}), true};
    p[name + ".running_mean"] = {Tensor<S>({channels}), false};
    p[name + ".running_var"] = {Tensor<S>({channels}, S(1)), false};
    p[name + ".stats_init"] = {Tensor<S>({1}, stats_valid ? S(1) : S(0)), false};
  }

  int forward(FwdCtx<S>& c, int x) const {
    Tensor<S>& flag = c.raw(name + ".stats_init");
    bool initialized = flag.data[0] != S(0);
    int y = op::batch_norm(c.g, x, c.param(name + ".gamma"), c.param(name + ".beta"),
                           c.raw(name + ".running_mean"), c.raw(name + ".running_var"),
                           initialized, c.mode, momentum, eps);
    flag.data[0] = initialized ? S(1) : S(0);
    return y;
  }
};

template <class S>
struct DenseLayer {
  std::string name;
  std::size_t in = 0, out = 0;

  void init(ParamMap<S>& p, Rng& rng) const {
    p[name + ".w"] = {init_uniform<S>({in, out}, in, rng), true};
    p[name + ".b"] = {Tensor<S>({out}), true};
  }

  int forward(FwdCtx<S>& c, int x) const {
    return op::dense(c.g, x, c.param(name + ".w"), c.param(name + ".b"));
  }
};

// Full pre-activation residual block:
//   out = skip(x) + D(S2(relu(BN2( D(S1(relu(BN1(x))))))))
// where S* are separable convolutions and D is dropout. The skip path is
// identity when shape is preserved, otherwise a 1x1 (optionally strided)
// projection convolution.
template <class S>
struct PreactResidualBlock {
  std::string name;
  std::size_t in_ch = 0, out_ch = 0;
  int stride = 1;
  double dropout_rate = 0.1;

  BatchNormLayer<S> bn1, bn2;
  SeparableConvLayer<S> conv1, conv2;
  Conv2dLayer<S> proj;

  void configure() {
    bn1 = {name + ".bn1", in_ch};
    bn2 = {name + ".bn2", out_ch};
    conv1 = {name + ".conv1", in_ch, out_ch, 3, stride};
    conv2 = {name + ".conv2", out_ch, out_ch, 3, 1};
    proj = {name + ".proj", in_ch, out_ch, 1, stride, 0, false};
  }

  bool needs_projection() const { return in_ch != out_ch || stride != 1; }

  void init(ParamMap<S>& p, Rng& rng, bool stats_valid = false) const {
    bn1.init(p, rng, stats_valid);
    conv1.init(p, rng);
    bn2.init(p, rng, stats_valid);
    conv2.init(p, rng);
    if (needs_projection()) proj.init(p, rng);
  }

  int forward(FwdCtx<S>& c, int x) const {
    int h = bn1.forward(c, x);
    h = op::relu(c.g, h);
    h = conv1.forward(c, h);
    if (c.mode == Mode::Train && dropout_rate > 0.0)
      h = op::dropout(c.g, h, dropout_rate, c.mode, *c.rng);
    h = bn2.forward(c, h);
    h = op::relu(c.g, h);
    h = conv2.forward(c, h);
    if (c.mode == Mode::Train && dropout_rate > 0.0)
      h = op::dropout(c.g, h, dropout_rate, c.mode, *c.rng);
    int skip = needs_projection() ? proj.forward(c, x) : x;
    return op::add(c.g, skip, h);
  }
};

}  // namespace mocae::nn
