#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "bdh/tensor.hpp"

namespace bdh::ops {

// ---------------------------------------------------------------------------
// scalar math

template <typename T>
T sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
T sigmoid_grad(T x) {
  T s = sigmoid(x);
  return s * (T(1) - s);
}

template <typename T>
T gelu(T x) {
  return T(0.5) * x * (T(1) + std::erf(x * T(0.70710678118654752440)));
}

template <typename T>
T gelu_grad(T x) {
  const T kInvSqrt2Pi = T(0.39894228040143267794);
  return T(0.5) * (T(1) + std::erf(x * T(0.70710678118654752440))) +
         x * kInvSqrt2Pi * std::exp(T(-0.5) * x * x);
}

// ---------------------------------------------------------------------------
// conv2d: cross-correlation, input [H x W x Cin], kernel [K x K x Cin x Cout],
// bias [Cout], zero padding. Output spatial size floor((H+2p-K)/s)+1.

template <typename T>
TensorT<T> conv2d(const TensorT<T>& input, const TensorT<T>& kernel,
                  const TensorT<T>& bias, int stride, int padding) {
  require(input.rank() == 3, "conv2d: input must be [HxWxC], got " +
                                 input.shape_str());
  require(kernel.rank() == 4, "conv2d: kernel must be [KxKxCinxCout], got " +
                                  kernel.shape_str());
  const int h = input.extent(0), w = input.extent(1), cin = input.extent(2);
  const int k = kernel.extent(0);
  require(kernel.extent(1) == k, "conv2d: kernel must be square, got " +
                                     kernel.shape_str());
  require(k % 2 == 1, "conv2d: kernel size must be odd");
  require(kernel.extent(2) == cin,
          "conv2d: kernel Cin " + std::to_string(kernel.extent(2)) +
              " does not match input channels " + std::to_string(cin));
  const int cout = kernel.extent(3);
  require(bias.rank() == 1 && bias.extent(0) == cout,
          "conv2d: bias must be [Cout=" + std::to_string(cout) + "], got " +
              bias.shape_str());
  require(stride >= 1, "conv2d: stride must be >= 1");
  require(padding >= 0, "conv2d: padding must be >= 0");

  const int ho = (h + 2 * padding - k) / stride + 1;
  const int wo = (w + 2 * padding - k) / stride + 1;
  require(ho >= 1 && wo >= 1, "conv2d: kernel larger than padded input");

  // Repack kernel as [Cout][K][K][Cin] so the inner dot product is contiguous.
  std::vector<T> kt(static_cast<std::size_t>(cout) * k * k * cin);
  for (int ky = 0; ky < k; ++ky)
    for (int kx = 0; kx < k; ++kx)
      for (int ci = 0; ci < cin; ++ci)
        for (int co = 0; co < cout; ++co)
          kt[((static_cast<std::size_t>(co) * k + ky) * k + kx) * cin + ci] =
              kernel.at(ky, kx, ci, co);

  TensorT<T> out({ho, wo, cout});
  for (int oy = 0; oy < ho; ++oy) {
    for (int ox = 0; ox < wo; ++ox) {
      const int iy0 = oy * stride - padding;
      const int ix0 = ox * stride - padding;
      const int ky_lo = std::max(0, -iy0), ky_hi = std::min(k, h - iy0);
      const int kx_lo = std::max(0, -ix0), kx_hi = std::min(k, w - ix0);
      for (int co = 0; co < cout; ++co) {
        T acc = bias.at(co);
        const T* kbase = kt.data() + static_cast<std::size_t>(co) * k * k * cin;
        for (int ky = ky_lo; ky < ky_hi; ++ky) {
          const T* in_row = &input.at(iy0 + ky, ix0 + kx_lo, 0);
          const T* k_row = kbase + (static_cast<std::size_t>(ky) * k + kx_lo) * cin;
          for (int kx = kx_lo; kx < kx_hi; ++kx) {
            for (int ci = 0; ci < cin; ++ci) acc += in_row[ci] * k_row[ci];
            in_row += cin;
            k_row += cin;
          }
        }
        out.at(oy, ox, co) = acc;
      }
    }
  }
  return out;
}

// Gradients for conv2d. grad_out is [Ho x Wo x Cout].
template <typename T>
void conv2d_backward(const TensorT<T>& input, const TensorT<T>& kernel,
                     const TensorT<T>& grad_out, int stride, int padding,
                     TensorT<T>* grad_input, TensorT<T>* grad_kernel,
                     TensorT<T>* grad_bias) {
  const int h = input.extent(0), w = input.extent(1), cin = input.extent(2);
  const int k = kernel.extent(0);
  const int cout = kernel.extent(3);
  const int ho = grad_out.extent(0), wo = grad_out.extent(1);

  for (int oy = 0; oy < ho; ++oy) {
    for (int ox = 0; ox < wo; ++ox) {
      const int iy0 = oy * stride - padding;
      const int ix0 = ox * stride - padding;
      const int ky_lo = std::max(0, -iy0), ky_hi = std::min(k, h - iy0);
      const int kx_lo = std::max(0, -ix0), kx_hi = std::min(k, w - ix0);
      for (int co = 0; co < cout; ++co) {
        const T g = grad_out.at(oy, ox, co);
        if (grad_bias) grad_bias->at(co) += g;
        for (int ky = ky_lo; ky < ky_hi; ++ky) {
          for (int kx = kx_lo; kx < kx_hi; ++kx) {
            const int iy = iy0 + ky, ix = ix0 + kx;
            for (int ci = 0; ci < cin; ++ci) {
              if (grad_kernel)
                grad_kernel->at(ky, kx, ci, co) += g * input.at(iy, ix, ci);
              if (grad_input)
                grad_input->at(iy, ix, ci) += g * kernel.at(ky, kx, ci, co);
            }
          }
        }
      }
    }
  }
}

// ---------------------------------------------------------------------------
// bilinear sampling with clamp-to-edge borders; exact at integer coordinates.

template <typename T>
T bilinear_sample(const TensorT<T>& map, double x, double y) {
  require(map.rank() == 2, "bilinear_sample: map must be [HxW], got " +
                               map.shape_str());
  const int h = map.extent(0), w = map.extent(1);
  const double fx = std::floor(x), fy = std::floor(y);
  const T ax = static_cast<T>(x - fx), ay = static_cast<T>(y - fy);
  auto cx = [&](int ix) { return std::clamp(ix, 0, w - 1); };
  auto cy = [&](int iy) { return std::clamp(iy, 0, h - 1); };
  const int x0 = cx(static_cast<int>(fx)), x1 = cx(static_cast<int>(fx) + 1);
  const int y0 = cy(static_cast<int>(fy)), y1 = cy(static_cast<int>(fy) + 1);
  const T v00 = map.at(y0, x0), v01 = map.at(y0, x1);
  const T v10 = map.at(y1, x0), v11 = map.at(y1, x1);
  return (T(1) - ay) * ((T(1) - ax) * v00 + ax * v01) +
         ay * ((T(1) - ax) * v10 + ax * v11);
}

// Scatter gradients of one bilinear sample: into the four support cells and
// into the coordinates. Clamped directions contribute zero coordinate slope.
template <typename T>
void bilinear_sample_backward(const TensorT<T>& map, double x, double y, T g,
                              TensorT<T>* grad_map, T* grad_x, T* grad_y) {
  const int h = map.extent(0), w = map.extent(1);
  const double fx = std::floor(x), fy = std::floor(y);
  const T ax = static_cast<T>(x - fx), ay = static_cast<T>(y - fy);
  auto cx = [&](int ix) { return std::clamp(ix, 0, w - 1); };
  auto cy = [&](int iy) { return std::clamp(iy, 0, h - 1); };
  const int x0 = cx(static_cast<int>(fx)), x1 = cx(static_cast<int>(fx) + 1);
  const int y0 = cy(static_cast<int>(fy)), y1 = cy(static_cast<int>(fy) + 1);
  const T v00 = map.at(y0, x0), v01 = map.at(y0, x1);
  const T v10 = map.at(y1, x0), v11 = map.at(y1, x1);
  if (grad_map) {
    grad_map->at(y0, x0) += g * (T(1) - ay) * (T(1) - ax);
    grad_map->at(y0, x1) += g * (T(1) - ay) * ax;
    grad_map->at(y1, x0) += g * ay * (T(1) - ax);
    grad_map->at(y1, x1) += g * ay * ax;
  }
  if (grad_x)
    *grad_x += g * ((T(1) - ay) * (v01 - v00) + ay * (v11 - v10));
  if (grad_y)
    *grad_y += g * ((T(1) - ax) * (v10 - v00) + ax * (v11 - v01));
}

// ---------------------------------------------------------------------------
// softmax rows and single-head attention on token matrices.

template <typename T>
TensorT<T> softmax_rows(const TensorT<T>& logits) {
  require(logits.rank() == 2, "softmax_rows: need [NxM]");
  const int n = logits.extent(0), m = logits.extent(1);
  TensorT<T> out({n, m});
  for (int i = 0; i < n; ++i) {
    T mx = logits.at(i, 0);
    for (int j = 1; j < m; ++j) mx = std::max(mx, logits.at(i, j));
    T sum = T(0);
    for (int j = 0; j < m; ++j) {
      const T e = std::exp(logits.at(i, j) - mx);
      out.at(i, j) = e;
      sum += e;
    }
    for (int j = 0; j < m; ++j) out.at(i, j) /= sum;
  }
  return out;
}

template <typename T>
TensorT<T> matmul(const TensorT<T>& a, const TensorT<T>& b) {
  require(a.rank() == 2 && b.rank() == 2, "matmul: need 2-d operands");
  require(a.extent(1) == b.extent(0),
          "matmul: inner dimensions " + std::to_string(a.extent(1)) + " vs " +
              std::to_string(b.extent(0)));
  const int n = a.extent(0), k = a.extent(1), m = b.extent(1);
  TensorT<T> out({n, m});
  for (int i = 0; i < n; ++i)
    for (int p = 0; p < k; ++p) {
      const T av = a.at(i, p);
      for (int j = 0; j < m; ++j) out.at(i, j) += av * b.at(p, j);
    }
  return out;
}

template <typename T>
TensorT<T> transpose2d(const TensorT<T>& a) {
  require(a.rank() == 2, "transpose2d: need 2-d operand");
  TensorT<T> out({a.extent(1), a.extent(0)});
  for (int i = 0; i < a.extent(0); ++i)
    for (int j = 0; j < a.extent(1); ++j) out.at(j, i) = a.at(i, j);
  return out;
}

// rows of softmax(Q K^T / sqrt(d)) V. Optionally returns the probabilities.
template <typename T>
TensorT<T> softmax_attention(const TensorT<T>& q, const TensorT<T>& k,
                             const TensorT<T>& v, TensorT<T>* probs_out = nullptr) {
  require(q.rank() == 2 && k.rank() == 2 && v.rank() == 2,
          "softmax_attention: need 2-d Q, K, V");
  const int d = q.extent(1);
  require(d > 0, "softmax_attention: feature dimension must be positive");
  require(k.extent(1) == d, "softmax_attention: K dim " +
                                std::to_string(k.extent(1)) + " vs Q dim " +
                                std::to_string(d));
  require(v.extent(0) == k.extent(0),
          "softmax_attention: V rows must match K rows");
  TensorT<T> logits = matmul(q, transpose2d(k));
  const T scale = T(1) / std::sqrt(static_cast<T>(d));
  for (long long i = 0; i < logits.numel(); ++i) logits.at(i) *= scale;
  TensorT<T> probs = softmax_rows(logits);
  TensorT<T> out = matmul(probs, v);
  if (probs_out) *probs_out = std::move(probs);
  return out;
}

// Standard attention backward given cached probabilities.
template <typename T>
void softmax_attention_backward(const TensorT<T>& q, const TensorT<T>& k,
                                const TensorT<T>& v, const TensorT<T>& probs,
                                const TensorT<T>& grad_out, TensorT<T>* grad_q,
                                TensorT<T>* grad_k, TensorT<T>* grad_v) {
  const int n = q.extent(0), m = k.extent(0), d = q.extent(1);
  const T scale = T(1) / std::sqrt(static_cast<T>(d));
  // dV = P^T dO
  for (int j = 0; j < m; ++j)
    for (int i = 0; i < n; ++i) {
      const T p = probs.at(i, j);
      for (int c = 0; c < d; ++c) grad_v->at(j, c) += p * grad_out.at(i, c);
    }
  // dP = dO V^T ; dS = P o (dP - rowsum(dP o P)) ; dQ = dS K * scale, etc.
  for (int i = 0; i < n; ++i) {
    std::vector<T> dp(m, T(0));
    for (int j = 0; j < m; ++j)
      for (int c = 0; c < d; ++c) dp[j] += grad_out.at(i, c) * v.at(j, c);
    T dot = T(0);
    for (int j = 0; j < m; ++j) dot += dp[j] * probs.at(i, j);
    for (int j = 0; j < m; ++j) {
      const T ds = probs.at(i, j) * (dp[j] - dot) * scale;
      for (int c = 0; c < d; ++c) {
        grad_q->at(i, c) += ds * k.at(j, c);
        grad_k->at(j, c) += ds * q.at(i, c);
      }
    }
  }
}

// ---------------------------------------------------------------------------
// min-max normalization; constant input maps to all zeros.

template <typename T>
struct MinMaxResult {
  TensorT<T> value;
  long long argmin = 0;
  long long argmax = 0;
  bool degenerate = false;  // max == min
};

template <typename T>
MinMaxResult<T> minmax_norm_full(const TensorT<T>& x) {
  require(x.numel() > 0, "minmax_norm: empty tensor");
  MinMaxResult<T> r;
  T mn = x.at(0), mx = x.at(0);
  for (long long i = 1; i < x.numel(); ++i) {
    if (x.at(i) < mn) { mn = x.at(i); r.argmin = i; }
    if (x.at(i) > mx) { mx = x.at(i); r.argmax = i; }
  }
  r.value = TensorT<T>(x.shape);
  if (mx == mn) {
    r.degenerate = true;
    return r;
  }
  const T span = mx - mn;
  for (long long i = 0; i < x.numel(); ++i) r.value.at(i) = (x.at(i) - mn) / span;
  return r;
}

template <typename T>
TensorT<T> minmax_norm(const TensorT<T>& x) {
  return minmax_norm_full(x).value;
}

// Rigid box sum with clamp-to-edge sampling; the zero-offset limit of the
// deformable aggregation.
template <typename T>
TensorT<T> box_sum3x3(const TensorT<T>& map) {
  require(map.rank() == 2, "box_sum3x3: need [HxW]");
  const int h = map.extent(0), w = map.extent(1);
  TensorT<T> out({h, w});
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      T acc = T(0);
      for (int dy = -1; dy <= 1; ++dy)
        for (int dx = -1; dx <= 1; ++dx)
          acc += map.at(std::clamp(y + dy, 0, h - 1),
                        std::clamp(x + dx, 0, w - 1));
      out.at(y, x) = acc;
    }
  return out;
}

}  // namespace bdh::ops
