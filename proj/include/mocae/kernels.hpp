#pragma once
// Raw forward/backward compute kernels on plain tensors. Graph-aware
// wrappers live in ops.hpp; these functions know nothing about the tape.

#include <cstddef>
#include <vector>

#include "mocae/tensor.hpp"

namespace mocae::kernels {

// C[M,N] (+)= A[M,K] * B[K,N]
template <class S>
void gemm_nn(std::size_t M, std::size_t N, std::size_t K, const S* A, const S* B,
             S* C, bool accumulate) {
  if (!accumulate)
    for (std::size_t i = 0; i < M * N; ++i) C[i] = S(0);
  for (std::size_t m = 0; m < M; ++m) {
    S* c = C + m * N;
    const S* a = A + m * K;
    for (std::size_t k = 0; k < K; ++k) {
      const S av = a[k];
      const S* b = B + k * N;
      for (std::size_t n = 0; n < N; ++n) c[n] += av * b[n];
    }
  }
}

// C[M,N] (+)= A[M,K] * B[N,K]^T
template <class S>
void gemm_nt(std::size_t M, std::size_t N, std::size_t K, const S* A, const S* B,
             S* C, bool accumulate) {
  for (std::size_t m = 0; m < M; ++m) {
    const S* a = A + m * K;
    for (std::size_t n = 0; n < N; ++n) {
      const S* b = B + n * K;
      S acc = S(0);
      for (std::size_t k = 0; k < K; ++k) acc += a[k] * b[k];
      S& c = C[m * N + n];
      c = accumulate ? c + acc : acc;
    }
  }
}

// C[M,N] (+)= A[K,M]^T * B[K,N]
template <class S>
void gemm_tn(std::size_t M, std::size_t N, std::size_t K, const S* A, const S* B,
             S* C, bool accumulate) {
  if (!accumulate)
    for (std::size_t i = 0; i < M * N; ++i) C[i] = S(0);
  for (std::size_t k = 0; k < K; ++k) {
    const S* a = A + k * M;
    const S* b = B + k * N;
    for (std::size_t m = 0; m < M; ++m) {
      const S av = a[m];
      S* c = C + m * N;
      for (std::size_t n = 0; n < N; ++n) c[n] += av * b[n];
    }
  }
}

inline std::size_t conv_out_extent(std::size_t in, std::size_t k, int stride, int pad) {
  return (in + 2 * static_cast<std::size_t>(pad) - k) / static_cast<std::size_t>(stride) + 1;
}

// Unpack one sample's receptive fields into col[C*kh*kw, OH*OW].
template <class S>
void im2col(const S* im, std::size_t C, std::size_t H, std::size_t W, std::size_t kh,
            std::size_t kw, int stride, int pad, S* col) {
  const std::size_t OH = conv_out_extent(H, kh, stride, pad);
  const std::size_t OW = conv_out_extent(W, kw, stride, pad);
  std::size_t row = 0;
  for (std::size_t c = 0; c < C; ++c) {
    const S* ic = im + c * H * W;
    for (std::size_t dh = 0; dh < kh; ++dh) {
      for (std::size_t dw = 0; dw < kw; ++dw, ++row) {
        S* dst = col + row * OH * OW;
        for (std::size_t oh = 0; oh < OH; ++oh) {
          const long ih = static_cast<long>(oh) * stride - pad + static_cast<long>(dh);
          if (ih < 0 || ih >= static_cast<long>(H)) {
            for (std::size_t ow = 0; ow < OW; ++ow) dst[oh * OW + ow] = S(0);
            continue;
          }
          const S* src = ic + static_cast<std::size_t>(ih) * W;
          for (std::size_t ow = 0; ow < OW; ++ow) {
            const long iw = static_cast<long>(ow) * stride - pad + static_cast<long>(dw);
            dst[oh * OW + ow] =
                (iw < 0 || iw >= static_cast<long>(W)) ? S(0) : src[iw];
          }
        }
      }
    }
  }
}

// Scatter-accumulate col[C*kh*kw, OH*OW] back into one sample image.
template <class S>
void col2im_accum(const S* col, std::size_t C, std::size_t H, std::size_t W,
                  std::size_t kh, std::size_t kw, int stride, int pad, S* im) {
  const std::size_t OH = conv_out_extent(H, kh, stride, pad);
  const std::size_t OW = conv_out_extent(W, kw, stride, pad);
  std::size_t row = 0;
  for (std::size_t c = 0; c < C; ++c) {
    S* ic = im + c * H * W;
    for (std::size_t dh = 0; dh < kh; ++dh) {
      for (std::size_t dw = 0; dw < kw; ++dw, ++row) {
        const S* src = col + row * OH * OW;
        for (std::size_t oh = 0; oh < OH; ++oh) {
          const long ih = static_cast<long>(oh) * stride - pad + static_cast<long>(dh);
          if (ih < 0 || ih >= static_cast<long>(H)) continue;
          S* dstrow = ic + static_cast<std::size_t>(ih) * W;
          for (std::size_t ow = 0; ow < OW; ++ow) {
            const long iw = static_cast<long>(ow) * stride - pad + static_cast<long>(dw);
            if (iw >= 0 && iw < static_cast<long>(W))
              dstrow[iw] += src[oh * OW + ow];
          }
        }
      }
    }
  }
}

template <class S>
void conv2d_check(const Tensor<S>& in, const Tensor<S>& ker, int stride, int pad) {
  if (in.rank() != 4 || ker.rank() != 4)
    throw ShapeError("conv2d: expected rank-4 input and kernel, got " +
                     in.shape_str() + " and " + ker.shape_str());
  if (in.dim(1) != ker.dim(1))
    throw ShapeError("conv2d: channel mismatch between input " + in.shape_str() +
                     " and kernel " + ker.shape_str());
  if (stride < 1) throw ConfigError("conv2d: stride must be >= 1");
  if (pad < 0) throw ConfigError("conv2d: padding must be >= 0");
  const std::size_t H = in.dim(2), W = in.dim(3);
  if (ker.dim(2) > H + 2 * static_cast<std::size_t>(pad) ||
      ker.dim(3) > W + 2 * static_cast<std::size_t>(pad))
    throw ShapeError("conv2d: kernel " + ker.shape_str() +
                     " larger than padded input " + in.shape_str());
}

// Cross-correlation (no kernel flip), zero padding.
// in[N,C,H,W], ker[F,C,kh,kw] -> out[N,F,OH,OW]
template <class S>
Tensor<S> conv2d_fwd(const Tensor<S>& in, const Tensor<S>& ker, int stride, int pad) {
  conv2d_check(in, ker, stride, pad);
  const std::size_t N = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
  const std::size_t F = ker.dim(0), kh = ker.dim(2), kw = ker.dim(3);
  const std::size_t OH = conv_out_extent(H, kh, stride, pad);
  const std::size_t OW = conv_out_extent(W, kw, stride, pad);
  Tensor<S> out({N, F, OH, OW});
  const bool pointwise = (kh == 1 && kw == 1 && stride == 1 && pad == 0);
  std::vector<S> col;
  if (!pointwise) col.resize(C * kh * kw * OH * OW);
  for (std::size_t n = 0; n < N; ++n) {
    const S* im = in.data.data() + n * C * H * W;
    const S* colp = im;
    if (!pointwise) {
      im2col(im, C, H, W, kh, kw, stride, pad, col.data());
      colp = col.data();
    }
    gemm_nn(F, OH * OW, C * kh * kw, ker.data.data(), colp,
            out.data.data() + n * F * OH * OW, false);
  }
  return out;
}

// Accumulates into *gin / *gker when non-null; both must be pre-sized.
template <class S>
void conv2d_bwd(const Tensor<S>& in, const Tensor<S>& ker, int stride, int pad,
                const Tensor<S>& gout, Tensor<S>* gin, Tensor<S>* gker) {
  const std::size_t N = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
  const std::size_t F = ker.dim(0), kh = ker.dim(2), kw = ker.dim(3);
  const std::size_t OH = gout.dim(2), OW = gout.dim(3);
  const std::size_t CKK = C * kh * kw;
  const bool pointwise = (kh == 1 && kw == 1 && stride == 1 && pad == 0);
  std::vector<S> col;
  std::vector<S> colgrad;
  std::vector<S> kerT;
  if (!pointwise && (gker || gin)) col.resize(CKK * OH * OW);
  if (gin) {
    colgrad.resize(CKK * OH * OW);
    kerT.resize(CKK * F);
    for (std::size_t f = 0; f < F; ++f)
      for (std::size_t r = 0; r < CKK; ++r) kerT[r * F + f] = ker.data[f * CKK + r];
  }
  for (std::size_t n = 0; n < N; ++n) {
    const S* im = in.data.data() + n * C * H * W;
    const S* go = gout.data.data() + n * F * OH * OW;
    const S* colp = im;
    if (!pointwise) {
      im2col(im, C, H, W, kh, kw, stride, pad, col.data());
      colp = col.data();
    }
    if (gker)
      gemm_nt(F, CKK, OH * OW, go, colp, gker->data.data(), true);
    if (gin) {
      if (pointwise) {
        // col grad is the image grad itself; accumulate directly.
        S* gi = gin->data.data() + n * C * H * W;
        gemm_nn(CKK, OH * OW, F, kerT.data(), go, colgrad.data(), false);
        for (std::size_t i = 0; i < CKK * OH * OW; ++i) gi[i] += colgrad[i];
      } else {
        gemm_nn(CKK, OH * OW, F, kerT.data(), go, colgrad.data(), false);
        col2im_accum(colgrad.data(), C, H, W, kh, kw, stride, pad,
                     gin->data.data() + n * C * H * W);
      }
    }
  }
}

// Depthwise convolution: one kernel per channel.
// in[N,C,H,W], ker[C,1,kh,kw] -> out[N,C,OH,OW]
template <class S>
Tensor<S> depthwise_fwd(const Tensor<S>& in, const Tensor<S>& ker, int stride, int pad) {
  if (in.rank() != 4 || ker.rank() != 4 || ker.dim(1) != 1)
    throw ShapeError("depthwise_conv: expected input [N,C,H,W] and kernel [C,1,kh,kw], got " +
                     in.shape_str() + " and " + ker.shape_str());
  if (in.dim(1) != ker.dim(0))
    throw ShapeError("depthwise_conv: channel mismatch between input " + in.shape_str() +
                     " and kernel " + ker.shape_str());
  const std::size_t N = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
  const std::size_t kh = ker.dim(2), kw = ker.dim(3);
  const std::size_t OH = conv_out_extent(H, kh, stride, pad);
  const std::size_t OW = conv_out_extent(W, kw, stride, pad);
  Tensor<S> out({N, C, OH, OW});
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      const S* im = in.data.data() + (n * C + c) * H * W;
      const S* k = ker.data.data() + c * kh * kw;
      S* o = out.data.data() + (n * C + c) * OH * OW;
      for (std::size_t oh = 0; oh < OH; ++oh)
        for (std::size_t ow = 0; ow < OW; ++ow) {
          S acc = S(0);
          for (std::size_t dh = 0; dh < kh; ++dh) {
            const long ih = static_cast<long>(oh) * stride - pad + static_cast<long>(dh);
            if (ih < 0 || ih >= static_cast<long>(H)) continue;
            for (std::size_t dw = 0; dw < kw; ++dw) {
              const long iw = static_cast<long>(ow) * stride - pad + static_cast<long>(dw);
              if (iw < 0 || iw >= static_cast<long>(W)) continue;
              acc += im[static_cast<std::size_t>(ih) * W + iw] * k[dh * kw + dw];
            }
          }
          o[oh * OW + ow] = acc;
        }
    }
  return out;
}

template <class S>
void depthwise_bwd(const Tensor<S>& in, const Tensor<S>& ker, int stride, int pad,
                   const Tensor<S>& gout, Tensor<S>* gin, Tensor<S>* gker) {
  const std::size_t N = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
  const std::size_t kh = ker.dim(2), kw = ker.dim(3);
  const std::size_t OH = gout.dim(2), OW = gout.dim(3);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t c = 0; c < C; ++c) {
      const S* im = in.data.data() + (n * C + c) * H * W;
      const S* k = ker.data.data() + c * kh * kw;
      const S* go = gout.data.data() + (n * C + c) * OH * OW;
      S* gi = gin ? gin->data.data() + (n * C + c) * H * W : nullptr;
      S* gk = gker ? gker->data.data() + c * kh * kw : nullptr;
      for (std::size_t oh = 0; oh < OH; ++oh)
        for (std::size_t ow = 0; ow < OW; ++ow) {
          const S g = go[oh * OW + ow];
          for (std::size_t dh = 0; dh < kh; ++dh) {
            const long ih = static_cast<long>(oh) * stride - pad + static_cast<long>(dh);
            if (ih < 0 || ih >= static_cast<long>(H)) continue;
            for (std::size_t dw = 0; dw < kw; ++dw) {
              const long iw = static_cast<long>(ow) * stride - pad + static_cast<long>(dw);
              if (iw < 0 || iw >= static_cast<long>(W)) continue;
              const std::size_t ii = static_cast<std::size_t>(ih) * W + iw;
              if (gi) gi[ii] += g * k[dh * kw + dw];
              if (gk) gk[dh * kw + dw] += g * im[ii];
            }
          }
        }
    }
}

// x[N,I] * w[I,O] + b[O]
template <class S>
Tensor<S> dense_fwd(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& b) {
  if (x.rank() != 2 || w.rank() != 2 || x.dim(1) != w.dim(0))
    throw ShapeError("dense: input " + x.shape_str() + " incompatible with weight " +
                     w.shape_str());
  if (b.numel() != w.dim(1))
    throw ShapeError("dense: bias " + b.shape_str() + " incompatible with weight " +
                     w.shape_str());
  const std::size_t N = x.dim(0), I = x.dim(1), O = w.dim(1);
  Tensor<S> out({N, O});
  gemm_nn(N, O, I, x.data.data(), w.data.data(), out.data.data(), false);
  for (std::size_t n = 0; n < N; ++n)
    for (std::size_t o = 0; o < O; ++o) out.data[n * O + o] += b.data[o];
  return out;
}

template <class S>
void dense_bwd(const Tensor<S>& x, const Tensor<S>& w, const Tensor<S>& gout,
               Tensor<S>* gx, Tensor<S>* gw, Tensor<S>* gb) {
  const std::size_t N = x.dim(0), I = x.dim(1), O = w.dim(1);
  if (gx) gemm_nt(N, I, O, gout.data.data(), w.data.data(), gx->data.data(), true);
  if (gw) gemm_tn(I, O, N, x.data.data(), gout.data.data(), gw->data.data(), true);
  if (gb)
    for (std::size_t n = 0; n < N; ++n)
      for (std::size_t o = 0; o < O; ++o) gb->data[o] += gout.data[n * O + o];
}

// Nearest-neighbour 2x upsampling of [N,C,H,W].
template <class S>
Tensor<S> upsample2x_fwd(const Tensor<S>& in) {
  const std::size_t N = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
  Tensor<S> out({N, C, 2 * H, 2 * W});
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    const S* src = in.data.data() + nc * H * W;
    S* dst = out.data.data() + nc * 4 * H * W;
    for (std::size_t h = 0; h < 2 * H; ++h) {
      const S* srow = src + (h / 2) * W;
      S* drow = dst + h * 2 * W;
      for (std::size_t w = 0; w < 2 * W; ++w) drow[w] = srow[w / 2];
    }
  }
  return out;
}

template <class S>
void upsample2x_bwd(const Tensor<S>& gout, Tensor<S>* gin) {
  const std::size_t N = gin->dim(0), C = gin->dim(1), H = gin->dim(2), W = gin->dim(3);
  for (std::size_t nc = 0; nc < N * C; ++nc) {
    const S* go = gout.data.data() + nc * 4 * H * W;
    S* gi = gin->data.data() + nc * H * W;
    for (std::size_t h = 0; h < 2 * H; ++h) {
      const S* grow = go + h * 2 * W;
      S* girow = gi + (h / 2) * W;
      for (std::size_t w = 0; w < 2 * W; ++w) girow[w / 2] += grow[w];
    }
  }
}

}  // namespace mocae::kernels
