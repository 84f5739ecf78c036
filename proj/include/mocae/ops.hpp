#pragma once
// Differentiable operations recorded on the Graph tape.

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "mocae/kernels.hpp"
#include "mocae/rng.hpp"
#include "mocae/tensor.hpp"

namespace mocae::op {

template <class S>
int conv2d(Graph<S>& g, int x, int w, int stride, int pad) {
  Tensor<S> out = kernels::conv2d_fwd(g.val(x), g.val(w), stride, pad);
  return g.make(std::move(out), {x, w}, [x, w, stride, pad](Graph<S>& g, int id) {
    const Tensor<S>& go = g.grad(id);
    Tensor<S>* gx = g.node(x).requires_grad ? &g.grad(x) : nullptr;
    Tensor<S>* gw = g.node(w).requires_grad ? &g.grad(w) : nullptr;
    kernels::conv2d_bwd(g.val(x), g.val(w), stride, pad, go, gx, gw);
  });
}

template <class S>
int depthwise_conv2d(Graph<S>& g, int x, int w, int stride, int pad) {
  Tensor<S> out = kernels::depthwise_fwd(g.val(x), g.val(w), stride, pad);
  return g.make(std::move(out), {x, w}, [x, w, stride, pad](Graph<S>& g, int id) {
    const Tensor<S>& go = g.grad(id);
    Tensor<S>* gx = g.node(x).requires_grad ? &g.grad(x) : nullptr;
    Tensor<S>* gw = g.node(w).requires_grad ? &g.grad(w) : nullptr;
    kernels::depthwise_bwd(g.val(x), g.val(w), stride, pad, go, gx, gw);
  });
}

// Depthwise followed by 1x1 pointwise; same spatial size at stride 1.
template <class S>
int separable_conv(Graph<S>& g, int x, int depthwise_kernel, int pointwise_kernel,
                   int stride = 1) {
  const Tensor<S>& dk = g.val(depthwise_kernel);
  const int pad = static_cast<int>(dk.dim(2)) / 2;
  int mid = depthwise_conv2d(g, x, depthwise_kernel, stride, pad);
  return conv2d(g, mid, pointwise_kernel, 1, 0);
}

template <class S>
int dense(Graph<S>& g, int x, int w, int b) {
  Tensor<S> out = kernels::dense_fwd(g.val(x), g.val(w), g.val(b));
  return g.make(std::move(out), {x, w, b}, [x, w, b](Graph<S>& g, int id) {
    const Tensor<S>& go = g.grad(id);
    Tensor<S>* gx = g.node(x).requires_grad ? &g.grad(x) : nullptr;
    Tensor<S>* gw = g.node(w).requires_grad ? &g.grad(w) : nullptr;
    Tensor<S>* gb = g.node(b).requires_grad ? &g.grad(b) : nullptr;
    kernels::dense_bwd(g.val(x), g.val(w), go, gx, gw, gb);
  });
}

template <class S>
int add(Graph<S>& g, int a, int b) {
  check_same_shape(g.val(a), g.val(b), "add");
  Tensor<S> out = g.val(a);
  const S* bd = g.val(b).data.data();
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += bd[i];
  return g.make(std::move(out), {a, b}, [a, b](Graph<S>& g, int id) {
    g.accum(a, g.grad(id));
    g.accum(b, g.grad(id));
  });
}

template <class S>
int relu(Graph<S>& g, int x) {
  Tensor<S> out = g.val(x);
  for (S& v : out.data) v = v > S(0) ? v : S(0);
  return g.make(std::move(out), {x}, [x](Graph<S>& g, int id) {
    if (!g.node(x).requires_grad) return;
    const Tensor<S>& go = g.grad(id);
    const Tensor<S>& xin = g.val(x);
    Tensor<S>& gx = g.grad(x);
    for (std::size_t i = 0; i < go.data.size(); ++i)
      if (xin.data[i] > S(0)) gx.data[i] += go.data[i];
  });
}

template <class S>
int tanh_act(Graph<S>& g, int x) {
  Tensor<S> out = g.val(x);
  for (S& v : out.data) v = std::tanh(v);
  return g.make(std::move(out), {x}, [x](Graph<S>& g, int id) {
    if (!g.node(x).requires_grad) return;
    const Tensor<S>& go = g.grad(id);
    const Tensor<S>& y = g.val(id);
    Tensor<S>& gx = g.grad(x);
    for (std::size_t i = 0; i < go.data.size(); ++i)
      gx.data[i] += go.data[i] * (S(1) - y.data[i] * y.data[i]);
  });
}

template <class S>
int sigmoid(Graph<S>& g, int x) {
  Tensor<S> out = g.val(x);
  for (S& v : out.data) v = S(1) / (S(1) + std::exp(-v));
  return g.make(std::move(out), {x}, [x](Graph<S>& g, int id) {
    if (!g.node(x).requires_grad) return;
    const Tensor<S>& go = g.grad(id);
    const Tensor<S>& y = g.val(id);
    Tensor<S>& gx = g.grad(x);
    for (std::size_t i = 0; i < go.data.size(); ++i)
      gx.data[i] += go.data[i] * y.data[i] * (S(1) - y.data[i]);
  });
}

template <class S>
int reshape(Graph<S>& g, int x, std::vector<std::size_t> new_shape) {
  Tensor<S> out;
  out.shape = std::move(new_shape);
  out.data = g.val(x).data;
  std::size_t n = 1;
  for (std::size_t e : out.shape) n *= e;
  if (n != out.data.size())
    throw ShapeError("reshape: cannot view " + g.val(x).shape_str() + " as " +
                     out.shape_str());
  return g.make(std::move(out), {x}, [x](Graph<S>& g, int id) {
    if (!g.node(x).requires_grad) return;
    const Tensor<S>& go = g.grad(id);
    Tensor<S>& gx = g.grad(x);
    for (std::size_t i = 0; i < go.data.size(); ++i) gx.data[i] += go.data[i];
  });
}

template <class S>
int upsample2x(Graph<S>& g, int x) {
  Tensor<S> out = kernels::upsample2x_fwd(g.val(x));
  return g.make(std::move(out), {x}, [x](Graph<S>& g, int id) {
    if (!g.node(x).requires_grad) return;
    kernels::upsample2x_bwd(g.grad(id), &g.grad(x));
  });
}

// Inverted dropout: zero with probability `rate`, scale survivors by 1/(1-rate).
// Identity in infer mode and at rate 0.
template <class S>
int dropout(Graph<S>& g, int x, double rate, Mode mode, Rng& rng) {
  if (rate < 0.0 || rate >= 1.0)
    throw ConfigError("dropout: rate must be in [0,1), got " + std::to_string(rate));
  if (mode == Mode::Infer || rate == 0.0) return x;
  const std::size_t n = g.val(x).numel();
  std::vector<S> mask(n);
  const S keep_scale = S(1.0 / (1.0 - rate));
  for (std::size_t i = 0; i < n; ++i)
    mask[i] = rng.uniform() < rate ? S(0) : keep_scale;
  Tensor<S> out = g.val(x);
  for (std::size_t i = 0; i < n; ++i) out.data[i] *= mask[i];
  return g.make(std::move(out), {x}, [x, mask = std::move(mask)](Graph<S>& g, int id) {
    if (!g.node(x).requires_grad) return;
    const Tensor<S>& go = g.grad(id);
    Tensor<S>& gx = g.grad(x);
    for (std::size_t i = 0; i < go.data.size(); ++i) gx.data[i] += go.data[i] * mask[i];
  });
}

// Batch normalization over [N,C,H,W] with per-channel scale/shift.
// Train mode uses batch statistics and updates the running EMA in place;
// infer mode applies the running statistics as constants.
template <class S>
int batch_norm(Graph<S>& g, int x, int gamma, int beta, Tensor<S>& running_mean,
               Tensor<S>& running_var, bool& stats_initialized, Mode mode,
               S momentum, S eps) {
  if (eps <= S(0)) throw ConfigError("batch_norm: eps must be > 0");
  const Tensor<S>& in = g.val(x);
  if (in.rank() != 4)
    throw ShapeError("batch_norm: expected [N,C,H,W], got " + in.shape_str());
  const std::size_t N = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
  const std::size_t M = N * H * W;
  if (M < 1) throw ShapeError("batch_norm: empty batch");
  if (g.val(gamma).numel() != C || g.val(beta).numel() != C)
    throw ShapeError("batch_norm: scale/shift must have one entry per channel");

  std::vector<S> mean(C), var(C);
  if (mode == Mode::Train) {
    for (std::size_t c = 0; c < C; ++c) {
      double acc = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        const S* p = in.data.data() + (n * C + c) * H * W;
        for (std::size_t i = 0; i < H * W; ++i) acc += p[i];
      }
      mean[c] = static_cast<S>(acc / static_cast<double>(M));
      double vacc = 0.0;
      for (std::size_t n = 0; n < N; ++n) {
        const S* p = in.data.data() + (n * C + c) * H * W;
        for (std::size_t i = 0; i < H * W; ++i) {
          const double d = static_cast<double>(p[i]) - static_cast<double>(mean[c]);
          vacc += d * d;
        }
      }
      var[c] = static_cast<S>(vacc / static_cast<double>(M));
    }
    for (std::size_t c = 0; c < C; ++c) {
      running_mean.data[c] = (S(1) - momentum) * running_mean.data[c] + momentum * mean[c];
      running_var.data[c] = (S(1) - momentum) * running_var.data[c] + momentum * var[c];
    }
    stats_initialized = true;
  } else {
    if (!stats_initialized)
      throw ConfigError("batch_norm: infer mode requested before any running statistics exist");
    for (std::size_t c = 0; c < C; ++c) {
      mean[c] = running_mean.data[c];
      var[c] = running_var.data[c];
    }
  }

  std::vector<S> invstd(C);
  for (std::size_t c = 0; c < C; ++c)
    invstd[c] = S(1) / static_cast<S>(std::sqrt(static_cast<double>(var[c] + eps)));

  Tensor<S> xhat(in.shape);
  Tensor<S> out(in.shape);
  const Tensor<S>& gv = g.val(gamma);
  const Tensor<S>& bv = g.val(beta);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      const S* p = in.data.data() + (n * C + c) * H * W;
      S* xh = xhat.data.data() + (n * C + c) * H * W;
      S* o = out.data.data() + (n * C + c) * H * W;
      for (std::size_t i = 0; i < H * W; ++i) {
        xh[i] = (p[i] - mean[c]) * invstd[c];
        o[i] = gv.data[c] * xh[i] + bv.data[c];
      }
    }

  const bool batch_stats = (mode == Mode::Train);
  return g.make(std::move(out), {x, gamma, beta},
                [x, gamma, beta, xhat = std::move(xhat), invstd = std::move(invstd),
                 batch_stats, N, C, H, W](Graph<S>& g, int id) {
    const Tensor<S>& go = g.grad(id);
    const std::size_t M = N * H * W;
    const Tensor<S>& gv = g.val(gamma);
    // per-channel reductions
    std::vector<double> sum_go(C, 0.0), sum_go_xhat(C, 0.0);
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t c = 0; c < C; ++c) {
        const S* gop = go.data.data() + (n * C + c) * H * W;
        const S* xh = xhat.data.data() + (n * C + c) * H * W;
        for (std::size_t i = 0; i < H * W; ++i) {
          sum_go[c] += gop[i];
          sum_go_xhat[c] += static_cast<double>(gop[i]) * xh[i];
        }
      }
    if (g.node(gamma).requires_grad) {
      Tensor<S>& gg = g.grad(gamma);
      for (std::size_t c = 0; c < C; ++c) gg.data[c] += static_cast<S>(sum_go_xhat[c]);
    }
    if (g.node(beta).requires_grad) {
      Tensor<S>& gb = g.grad(beta);
      for (std::size_t c = 0; c < C; ++c) gb.data[c] += static_cast<S>(sum_go[c]);
    }
    if (g.node(x).requires_grad) {
      Tensor<S>& gx = g.grad(x);
      for (std::size_t n = 0; n < N; ++n)
        for (std::size_t c = 0; c < C; ++c) {
          const S* gop = go.data.data() + (n * C + c) * H * W;
          const S* xh = xhat.data.data() + (n * C + c) * H * W;
          S* gxp = gx.data.data() + (n * C + c) * H * W;
          const S a = gv.data[c] * invstd[c];
          if (batch_stats) {
            const S mean_go = static_cast<S>(sum_go[c] / static_cast<double>(M));
            const S mean_go_xhat = static_cast<S>(sum_go_xhat[c] / static_cast<double>(M));
            for (std::size_t i = 0; i < H * W; ++i)
              gxp[i] += a * (gop[i] - mean_go - xh[i] * mean_go_xhat);
          } else {
            for (std::size_t i = 0; i < H * W; ++i) gxp[i] += a * gop[i];
          }
        }
    }
  });
}

template <class S>
int mean_all(Graph<S>& g, int x) {
  const Tensor<S>& in = g.val(x);
  double acc = 0.0;
  for (S v : in.data) acc += static_cast<double>(v);
  const std::size_t n = in.numel();
  Tensor<S> out = Tensor<S>::scalar(static_cast<S>(acc / static_cast<double>(n)));
  return g.make(std::move(out), {x}, [x, n](Graph<S>& g, int id) {
    if (!g.node(x).requires_grad) return;
    const S go = g.grad(id).data[0] / static_cast<S>(n);
    Tensor<S>& gx = g.grad(x);
    for (S& v : gx.data) v += go;
  });
}

// Mean over all elements of squared differences (the reconstruction loss).
template <class S>
int mse_loss(Graph<S>& g, int pred, int target) {
  check_same_shape(g.val(pred), g.val(target), "mse_loss");
  const Tensor<S>& a = g.val(pred);
  const Tensor<S>& b = g.val(target);
  const std::size_t n = a.numel();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(a.data[i]) - static_cast<double>(b.data[i]);
    acc += d * d;
  }
  Tensor<S> out = Tensor<S>::scalar(static_cast<S>(acc / static_cast<double>(n)));
  return g.make(std::move(out), {pred, target}, [pred, target, n](Graph<S>& g, int id) {
    const S go = g.grad(id).data[0];
    const Tensor<S>& a = g.val(pred);
    const Tensor<S>& b = g.val(target);
    const S scale = S(2) * go / static_cast<S>(n);
    if (g.node(pred).requires_grad) {
      Tensor<S>& gp = g.grad(pred);
      for (std::size_t i = 0; i < gp.data.size(); ++i)
        gp.data[i] += scale * (a.data[i] - b.data[i]);
    }
    if (g.node(target).requires_grad) {
      Tensor<S>& gt = g.grad(target);
      for (std::size_t i = 0; i < gt.data.size(); ++i)
        gt.data[i] += scale * (b.data[i] - a.data[i]);
    }
  });
}

// Numerically stable binary cross-entropy on logits.
// labels must be 0/1; logits shape [N] or [N,1].
template <class S>
int bce_with_logits(Graph<S>& g, int logits, const std::vector<S>& labels) {
  const Tensor<S>& z = g.val(logits);
  const std::size_t n = z.numel();
  if (n != labels.size())
    throw ShapeError("bce_with_logits: " + std::to_string(n) + " logits vs " +
                     std::to_string(labels.size()) + " labels");
  if (n == 0) throw ShapeError("bce_with_logits: empty batch");
  for (S y : labels)
    if (y != S(0) && y != S(1))
      throw ConfigError("bce_with_logits: labels must be 0 or 1");
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double zi = static_cast<double>(z.data[i]);
    const double yi = static_cast<double>(labels[i]);
    acc += std::max(zi, 0.0) - zi * yi + std::log1p(std::exp(-std::abs(zi)));
  }
  Tensor<S> out = Tensor<S>::scalar(static_cast<S>(acc / static_cast<double>(n)));
  return g.make(std::move(out), {logits}, [logits, labels, n](Graph<S>& g, int id) {
    if (!g.node(logits).requires_grad) return;
    const S go = g.grad(id).data[0];
    const Tensor<S>& z = g.val(logits);
    Tensor<S>& gz = g.grad(logits);
    for (std::size_t i = 0; i < n; ++i) {
      const double p = 1.0 / (1.0 + std::exp(-static_cast<double>(z.data[i])));
      gz.data[i] += go * static_cast<S>((p - static_cast<double>(labels[i])) /
                                        static_cast<double>(n));
    }
  });
}

// a*x + b*y for scalar nodes (combines the loss terms).
template <class S>
int axpby(Graph<S>& g, S a, int x, S b, int y) {
  if (!g.val(x).is_scalar() || !g.val(y).is_scalar())
    throw ShapeError("axpby: expected scalar nodes");
  Tensor<S> out = Tensor<S>::scalar(a * g.val(x).data[0] + b * g.val(y).data[0]);
  return g.make(std::move(out), {x, y}, [x, y, a, b](Graph<S>& g, int id) {
    const S go = g.grad(id).data[0];
    if (g.node(x).requires_grad) g.grad(x).data[0] += a * go;
    if (g.node(y).requires_grad) g.grad(y).data[0] += b * go;
  });
}

}  // namespace mocae::op
