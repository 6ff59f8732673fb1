#pragma once

#include <cmath>
#include <functional>
#include <utility>
#include <vector>

#include "bdh/ops.hpp"
#include "bdh/tensor.hpp"

namespace bdh {

/*
 * Recorded-operation tape for reverse-mode differentiation.
 *
 * Every op evaluates eagerly and, when recording, appends a closure that
 * scatters the node's gradient into its parents. backward() walks the tape
 * in reverse creation order, which is a valid topological order because ops
 * only consume already-created nodes. Time-unrolled spiking layers fall out
 * naturally: each timestep appends more nodes and backward() is BPTT.
 *
 * Gradient buffers are allocated on first touch, so subgraphs that do not
 * influence the loss cost nothing in the backward pass.
 */
template <typename T>
class Graph {
 public:
  using Tensor = TensorT<T>;
  using BackFn = std::function<void(Graph&, int)>;

  explicit Graph(bool record = true) : record_(record) {}

  bool recording() const { return record_; }

  int leaf(Tensor value, bool requires_grad = true) {
    return push(std::move(value), {}, nullptr, requires_grad && record_);
  }

  int constant(Tensor value) { return push(std::move(value), {}, nullptr, false); }

  const Tensor& value(int id) const { return nodes_[id].value; }

  // Extension point for fused module-level ops (attention, deformable sum).
  int make_node(Tensor value, std::vector<int> parents, BackFn back) {
    bool rg = false;
    if (record_)
      for (int p : parents) rg = rg || nodes_[p].requires_grad;
    return push(std::move(value), std::move(parents), rg ? std::move(back) : nullptr, rg);
  }

  bool requires_grad(int id) const { return nodes_[id].requires_grad; }

  // Accumulation buffer, allocated zero on first use.
  Tensor& grad_buf(int id) {
    Node& n = nodes_[id];
    if (n.grad.numel() == 0 && n.value.numel() > 0) n.grad = Tensor(n.value.shape);
    return n.grad;
  }

  Tensor grad_or_zero(int id) const {
    const Node& n = nodes_[id];
    if (n.grad.numel() == 0) return Tensor(n.value.shape);
    return n.grad;
  }

  void backward(int loss_id) {
    require(record_, "backward: graph was built without trace recording");
    require(loss_id >= 0 && loss_id < static_cast<int>(nodes_.size()),
            "backward: bad node id");
    require(nodes_[loss_id].value.numel() == 1,
            "backward: loss must be a scalar node");
    grad_buf(loss_id).at(0) = T(1);
    for (int id = loss_id; id >= 0; --id) {
      Node& n = nodes_[id];
      if (n.back && n.grad.numel() > 0) n.back(*this, id);
    }
  }

  std::size_t size() const { return nodes_.size(); }

  // ---- elementwise -------------------------------------------------------

  int add(int a, int b) {
    require_same_shape(value(a), value(b), "add");
    Tensor out = value(a);
    for (long long i = 0; i < out.numel(); ++i) out.at(i) += value(b).at(i);
    return make_node(std::move(out), {a, b}, [a, b](Graph& g, int self) {
      const Tensor& go = g.grad_buf(self);
      if (g.requires_grad(a)) {
        Tensor& ga = g.grad_buf(a);
        for (long long i = 0; i < go.numel(); ++i) ga.at(i) += go.at(i);
      }
      if (g.requires_grad(b)) {
        Tensor& gb = g.grad_buf(b);
        for (long long i = 0; i < go.numel(); ++i) gb.at(i) += go.at(i);
      }
    });
  }

  int sub(int a, int b) {
    require_same_shape(value(a), value(b), "sub");
    Tensor out = value(a);
    for (long long i = 0; i < out.numel(); ++i) out.at(i) -= value(b).at(i);
    return make_node(std::move(out), {a, b}, [a, b](Graph& g, int self) {
      const Tensor& go = g.grad_buf(self);
      if (g.requires_grad(a)) {
        Tensor& ga = g.grad_buf(a);
        for (long long i = 0; i < go.numel(); ++i) ga.at(i) += go.at(i);
      }
      if (g.requires_grad(b)) {
        Tensor& gb = g.grad_buf(b);
        for (long long i = 0; i < go.numel(); ++i) gb.at(i) -= go.at(i);
      }
    });
  }

  int mul(int a, int b) {
    require_same_shape(value(a), value(b), "mul");
    Tensor out = value(a);
    for (long long i = 0; i < out.numel(); ++i) out.at(i) *= value(b).at(i);
    return make_node(std::move(out), {a, b}, [a, b](Graph& g, int self) {
      const Tensor& go = g.grad_buf(self);
      const Tensor& va = g.value(a);
      const Tensor& vb = g.value(b);
      if (g.requires_grad(a)) {
        Tensor& ga = g.grad_buf(a);
        for (long long i = 0; i < go.numel(); ++i) ga.at(i) += go.at(i) * vb.at(i);
      }
      if (g.requires_grad(b)) {
        Tensor& gb = g.grad_buf(b);
        for (long long i = 0; i < go.numel(); ++i) gb.at(i) += go.at(i) * va.at(i);
      }
    });
  }

  int scale(int a, double c) {
    Tensor out = value(a);
    for (long long i = 0; i < out.numel(); ++i) out.at(i) *= static_cast<T>(c);
    return make_node(std::move(out), {a}, [a, c](Graph& g, int self) {
      const Tensor& go = g.grad_buf(self);
      Tensor& ga = g.grad_buf(a);
      for (long long i = 0; i < go.numel(); ++i)
        ga.at(i) += go.at(i) * static_cast<T>(c);
    });
  }

  int add_const(int a, double c) {
    Tensor out = value(a);
    for (long long i = 0; i < out.numel(); ++i) out.at(i) += static_cast<T>(c);
    return make_node(std::move(out), {a}, [a](Graph& g, int self) {
      const Tensor& go = g.grad_buf(self);
      Tensor& ga = g.grad_buf(a);
      for (long long i = 0; i < go.numel(); ++i) ga.at(i) += go.at(i);
    });
  }

  int relu(int a) {
    Tensor out = value(a);
    for (long long i = 0; i < out.numel(); ++i) out.at(i) = std::max(out.at(i), T(0));
    return make_node(std::move(out), {a}, [a](Graph& g, int self) {
      const Tensor& go = g.grad_buf(self);
      const Tensor& va = g.value(a);
      Tensor& ga = g.grad_buf(a);
      for (long long i = 0; i < go.numel(); ++i)
        if (va.at(i) > T(0)) ga.at(i) += go.at(i);
    });
  }

  int gelu(int a) {
    Tensor out = value(a);
    for (long long i = 0; i < out.numel(); ++i) out.at(i) = ops::gelu(out.at(i));
    return make_node(std::move(out), {a}, [a](Graph& g, int self) {
      const Tensor& go = g.grad_buf(self);
      const Tensor& va = g.value(a);
      Tensor& ga = g.grad_buf(a);
      for (long long i = 0; i < go.numel(); ++i)
        ga.at(i) += go.at(i) * ops::gelu_grad(va.at(i));
    });
  }

  int sigmoid(int a) {
    Tensor out = value(a);
    for (long long i = 0; i < out.numel(); ++i) out.at(i) = ops::sigmoid(out.at(i));
    return make_node(std::move(out), {a}, [a](Graph& g, int self) {
      const Tensor& go = g.grad_buf(self);
      const Tensor& vo = g.value(self);
      Tensor& ga = g.grad_buf(a);
      for (long long i = 0; i < go.numel(); ++i)
        ga.at(i) += go.at(i) * vo.at(i) * (T(1) - vo.at(i));
    });
  }

  int log_(int a) {
    Tensor out = value(a);
    for (long long i = 0; i < out.numel(); ++i) out.at(i) = std::log(out.at(i));
    return make_node(std::move(out), {a}, [a](Graph& g, int self) {
      const Tensor& go = g.grad_buf(self);
      const Tensor& va = g.value(a);
      Tensor& ga = g.grad_buf(a);
      for (long long i = 0; i < go.numel(); ++i) ga.at(i) += go.at(i) / va.at(i);
    });
  }

  int sum_all(int a) {
    T s = T(0);
    for (long long i = 0; i < value(a).numel(); ++i) s += value(a).at(i);
    return make_node(Tensor::scalar(s), {a}, [a](Graph& g, int self) {
      const T go = g.grad_buf(self).at(0);
      Tensor& ga = g.grad_buf(a);
      for (long long i = 0; i < ga.numel(); ++i) ga.at(i) += go;
    });
  }

  int mean_all(int a) {
    const long long n = value(a).numel();
    require(n > 0, "mean_all: empty tensor");
    T s = T(0);
    for (long long i = 0; i < n; ++i) s += value(a).at(i);
    s /= static_cast<T>(n);
    return make_node(Tensor::scalar(s), {a}, [a, n](Graph& g, int self) {
      const T go = g.grad_buf(self).at(0) / static_cast<T>(n);
      Tensor& ga = g.grad_buf(a);
      for (long long i = 0; i < n; ++i) ga.at(i) += go;
    });
  }

  // ---- linear algebra ----------------------------------------------------

  int matmul(int a, int b) {
    Tensor out = ops::matmul(value(a), value(b));
    return make_node(std::move(out), {a, b}, [a, b](Graph& g, int self) {
      const Tensor& go = g.grad_buf(self);
      const Tensor& va = g.value(a);
      const Tensor& vb = g.value(b);
      const int n = va.extent(0), k = va.extent(1), m = vb.extent(1);
      if (g.requires_grad(a)) {
        Tensor& ga = g.grad_buf(a);
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < m; ++j) {
            const T gg = go.at(i, j);
            for (int p = 0; p < k; ++p) ga.at(i, p) += gg * vb.at(p, j);
          }
      }
      if (g.requires_grad(b)) {
        Tensor& gb = g.grad_buf(b);
        for (int i = 0; i < n; ++i)
          for (int p = 0; p < k; ++p) {
            const T av = va.at(i, p);
            for (int j = 0; j < m; ++j) gb.at(p, j) += av * go.at(i, j);
          }
      }
    });
  }

  int softmax_rows(int a) {
    Tensor out = ops::softmax_rows(value(a));
    return make_node(std::move(out), {a}, [a](Graph& g, int self) {
      const Tensor& go = g.grad_buf(self);
      const Tensor& y = g.value(self);
      Tensor& ga = g.grad_buf(a);
      const int n = y.extent(0), m = y.extent(1);
      for (int i = 0; i < n; ++i) {
        T dot = T(0);
        for (int j = 0; j < m; ++j) dot += go.at(i, j) * y.at(i, j);
        for (int j = 0; j < m; ++j)
          ga.at(i, j) += y.at(i, j) * (go.at(i, j) - dot);
      }
    });
  }

  // ---- convolution and layout ops ----------------------------------------

  int conv2d(int x, int w, int b, int stride, int padding) {
    Tensor out = ops::conv2d(value(x), value(w), value(b), stride, padding);
    return make_node(
        std::move(out), {x, w, b}, [x, w, b, stride, padding](Graph& g, int self) {
          const Tensor& go = g.grad_buf(self);
          TensorT<T>* gi = g.requires_grad(x) ? &g.grad_buf(x) : nullptr;
          TensorT<T>* gw = g.requires_grad(w) ? &g.grad_buf(w) : nullptr;
          TensorT<T>* gb = g.requires_grad(b) ? &g.grad_buf(b) : nullptr;
          ops::conv2d_backward(g.value(x), g.value(w), go, stride, padding, gi,
                               gw, gb);
        });
  }

  int concat_c(int a, int b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    require(va.rank() == 3 && vb.rank() == 3, "concat_c: need [HxWxC]");
    require(va.extent(0) == vb.extent(0) && va.extent(1) == vb.extent(1),
            "concat_c: spatial mismatch");
    const int h = va.extent(0), w = va.extent(1);
    const int ca = va.extent(2), cb = vb.extent(2);
    Tensor out({h, w, ca + cb});
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        for (int c = 0; c < ca; ++c) out.at(y, x, c) = va.at(y, x, c);
        for (int c = 0; c < cb; ++c) out.at(y, x, ca + c) = vb.at(y, x, c);
      }
    return make_node(std::move(out), {a, b}, [a, b, h, w, ca, cb](Graph& g, int self) {
      const Tensor& go = g.grad_buf(self);
      if (g.requires_grad(a)) {
        Tensor& ga = g.grad_buf(a);
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x)
            for (int c = 0; c < ca; ++c) ga.at(y, x, c) += go.at(y, x, c);
      }
      if (g.requires_grad(b)) {
        Tensor& gb = g.grad_buf(b);
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x)
            for (int c = 0; c < cb; ++c) gb.at(y, x, c) += go.at(y, x, ca + c);
      }
    });
  }

  int slice_c(int a, int c0, int c1) {
    const Tensor& va = value(a);
    require(va.rank() == 3, "slice_c: need [HxWxC]");
    require(0 <= c0 && c0 < c1 && c1 <= va.extent(2), "slice_c: bad range");
    const int h = va.extent(0), w = va.extent(1);
    Tensor out({h, w, c1 - c0});
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = c0; c < c1; ++c) out.at(y, x, c - c0) = va.at(y, x, c);
    return make_node(std::move(out), {a}, [a, c0, c1, h, w](Graph& g, int self) {
      const Tensor& go = g.grad_buf(self);
      Tensor& ga = g.grad_buf(a);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          for (int c = c0; c < c1; ++c) ga.at(y, x, c) += go.at(y, x, c - c0);
    });
  }

  int upsample2x(int a) {
    const Tensor& va = value(a);
    require(va.rank() == 3, "upsample2x: need [HxWxC]");
    const int h = va.extent(0), w = va.extent(1), c = va.extent(2);
    Tensor out({2 * h, 2 * w, c});
    for (int y = 0; y < 2 * h; ++y)
      for (int x = 0; x < 2 * w; ++x)
        for (int ch = 0; ch < c; ++ch)
          out.at(y, x, ch) = va.at(y / 2, x / 2, ch);
    return make_node(std::move(out), {a}, [a, h, w, c](Graph& g, int self) {
      const Tensor& go = g.grad_buf(self);
      Tensor& ga = g.grad_buf(a);
      for (int y = 0; y < 2 * h; ++y)
        for (int x = 0; x < 2 * w; ++x)
          for (int ch = 0; ch < c; ++ch)
            ga.at(y / 2, x / 2, ch) += go.at(y, x, ch);
    });
  }

  int pad_reflect(int a, int top, int bottom, int left, int right) {
    const Tensor& va = value(a);
    require(va.rank() == 3, "pad_reflect: need [HxWxC]");
    const int h = va.extent(0), w = va.extent(1), c = va.extent(2);
    require(top < h && bottom < h && left < w && right < w,
            "pad_reflect: pad must be smaller than the image");
    const int ho = h + top + bottom, wo = w + left + right;
    auto ry = [&](int y) { int s = y - top; if (s < 0) s = -s; if (s >= h) s = 2 * h - 2 - s; return s; };
    auto rx = [&](int x) { int s = x - left; if (s < 0) s = -s; if (s >= w) s = 2 * w - 2 - s; return s; };
    Tensor out({ho, wo, c});
    for (int y = 0; y < ho; ++y)
      for (int x = 0; x < wo; ++x)
        for (int ch = 0; ch < c; ++ch) out.at(y, x, ch) = va.at(ry(y), rx(x), ch);
    return make_node(std::move(out), {a},
                     [a, top, left, h, w, c, ho, wo](Graph& g, int self) {
                       const Tensor& go = g.grad_buf(self);
                       Tensor& ga = g.grad_buf(a);
                       auto ry = [&](int y) { int s = y - top; if (s < 0) s = -s; if (s >= h) s = 2 * h - 2 - s; return s; };
                       auto rx = [&](int x) { int s = x - left; if (s < 0) s = -s; if (s >= w) s = 2 * w - 2 - s; return s; };
                       for (int y = 0; y < ho; ++y)
                         for (int x = 0; x < wo; ++x)
                           for (int ch = 0; ch < c; ++ch)
                             ga.at(ry(y), rx(x), ch) += go.at(y, x, ch);
                     });
  }

  int crop(int a, int y0, int x0, int h, int w) {
    const Tensor& va = value(a);
    require(va.rank() == 3, "crop: need [HxWxC]");
    require(y0 >= 0 && x0 >= 0 && y0 + h <= va.extent(0) && x0 + w <= va.extent(1),
            "crop: window out of range");
    const int c = va.extent(2);
    Tensor out({h, w, c});
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int ch = 0; ch < c; ++ch) out.at(y, x, ch) = va.at(y0 + y, x0 + x, ch);
    return make_node(std::move(out), {a}, [a, y0, x0, h, w, c](Graph& g, int self) {
      const Tensor& go = g.grad_buf(self);
      Tensor& ga = g.grad_buf(a);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
          for (int ch = 0; ch < c; ++ch) ga.at(y0 + y, x0 + x, ch) += go.at(y, x, ch);
    });
  }

  // Broadcast a single-channel gate over the channels of a feature map.
  int mask_mul(int feat, int mask) {
    const Tensor& vf = value(feat);
    const Tensor& vm = value(mask);
    require(vf.rank() == 3 && vm.rank() == 2, "mask_mul: need [HxWxC], [HxW]");
    require(vf.extent(0) == vm.extent(0) && vf.extent(1) == vm.extent(1),
            "mask_mul: spatial mismatch");
    const int h = vf.extent(0), w = vf.extent(1), c = vf.extent(2);
    Tensor out = vf;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        const T m = vm.at(y, x);
        for (int ch = 0; ch < c; ++ch) out.at(y, x, ch) *= m;
      }
    return make_node(std::move(out), {feat, mask},
                     [feat, mask, h, w, c](Graph& g, int self) {
                       const Tensor& go = g.grad_buf(self);
                       const Tensor& vf = g.value(feat);
                       const Tensor& vm = g.value(mask);
                       if (g.requires_grad(feat)) {
                         Tensor& gf = g.grad_buf(feat);
                         for (int y = 0; y < h; ++y)
                           for (int x = 0; x < w; ++x) {
                             const T m = vm.at(y, x);
                             for (int ch = 0; ch < c; ++ch)
                               gf.at(y, x, ch) += go.at(y, x, ch) * m;
                           }
                       }
                       if (g.requires_grad(mask)) {
                         Tensor& gm = g.grad_buf(mask);
                         for (int y = 0; y < h; ++y)
                           for (int x = 0; x < w; ++x) {
                             T acc = T(0);
                             for (int ch = 0; ch < c; ++ch)
                               acc += go.at(y, x, ch) * vf.at(y, x, ch);
                             gm.at(y, x) += acc;
                           }
                       }
                     });
  }

  // Multiply by a learned per-timestep scalar held in a [1]-shaped node.
  int scale_by(int a, int s) {
    require(value(s).numel() == 1, "scale_by: scale must be a scalar node");
    const T sv = value(s).at(0);
    Tensor out = value(a);
    for (long long i = 0; i < out.numel(); ++i) out.at(i) *= sv;
    return make_node(std::move(out), {a, s}, [a, s](Graph& g, int self) {
      const Tensor& go = g.grad_buf(self);
      const Tensor& va = g.value(a);
      const T sv = g.value(s).at(0);
      if (g.requires_grad(a)) {
        Tensor& ga = g.grad_buf(a);
        for (long long i = 0; i < go.numel(); ++i) ga.at(i) += go.at(i) * sv;
      }
      if (g.requires_grad(s)) {
        T acc = T(0);
        for (long long i = 0; i < go.numel(); ++i) acc += go.at(i) * va.at(i);
        g.grad_buf(s).at(0) += acc;
      }
    });
  }

  // Per-channel scaling of [HxWxC] by a [C] node.
  int channel_scale(int a, int s) {
    const Tensor& va = value(a);
    const Tensor& vs = value(s);
    require(va.rank() == 3 && vs.rank() == 1 && vs.extent(0) == va.extent(2),
            "channel_scale: need [HxWxC] and [C]");
    const int h = va.extent(0), w = va.extent(1), c = va.extent(2);
    Tensor out = va;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int ch = 0; ch < c; ++ch) out.at(y, x, ch) *= vs.at(ch);
    return make_node(std::move(out), {a, s}, [a, s, h, w, c](Graph& g, int self) {
      const Tensor& go = g.grad_buf(self);
      const Tensor& va = g.value(a);
      const Tensor& vs = g.value(s);
      if (g.requires_grad(a)) {
        Tensor& ga = g.grad_buf(a);
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < c; ++ch)
              ga.at(y, x, ch) += go.at(y, x, ch) * vs.at(ch);
      }
      if (g.requires_grad(s)) {
        Tensor& gs = g.grad_buf(s);
        for (int y = 0; y < h; ++y)
          for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < c; ++ch)
              gs.at(ch) += go.at(y, x, ch) * va.at(y, x, ch);
      }
    });
  }

  // ---- threshold nonlinearities ------------------------------------------

  /*
   * Spike emission s = step(u - vth), with the Heaviside derivative replaced
   * by the derivative of sigmoid((u - vth)/alpha). In smoothed mode the
   * forward pass itself uses the sigmoid, so the recorded backward is the
   * exact derivative and the whole stack is finite-difference checkable.
   */
  int spike(int u, int vth, double alpha, bool smoothed) {
    const Tensor& vu = value(u);
    const Tensor& vt = value(vth);
    require_same_shape(vu, vt, "spike");
    require(alpha > 0, "spike: alpha must be positive");
    Tensor out(vu.shape);
    for (long long i = 0; i < vu.numel(); ++i) {
      const T z = vu.at(i) - vt.at(i);
      out.at(i) = smoothed ? ops::sigmoid(z / static_cast<T>(alpha))
                           : (z >= T(0) ? T(1) : T(0));
    }
    return make_node(std::move(out), {u, vth}, [u, vth, alpha](Graph& g, int self) {
      const Tensor& go = g.grad_buf(self);
      const Tensor& vu = g.value(u);
      const Tensor& vt = g.value(vth);
      const T inv_a = T(1) / static_cast<T>(alpha);
      for (long long i = 0; i < go.numel(); ++i) {
        const T d = ops::sigmoid_grad((vu.at(i) - vt.at(i)) * inv_a) * inv_a;
        const T gg = go.at(i) * d;
        if (g.requires_grad(u)) g.grad_buf(u).at(i) += gg;
        if (g.requires_grad(vth)) g.grad_buf(vth).at(i) -= gg;
      }
    });
  }

  /*
   * Hard comparator m = 1[a >= b] with a straight-through backward: identity
   * within |a - b| <= band, zero outside. Smoothed mode uses
   * sigmoid((a - b)/alpha) in the forward pass as well.
   */
  int binarize_ge(int a, int b, double alpha, bool smoothed, double band = 0.5) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    require_same_shape(va, vb, "binarize_ge");
    Tensor out(va.shape);
    for (long long i = 0; i < va.numel(); ++i) {
      const T z = va.at(i) - vb.at(i);
      out.at(i) = smoothed ? ops::sigmoid(z / static_cast<T>(alpha))
                           : (z >= T(0) ? T(1) : T(0));
    }
    return make_node(std::move(out), {a, b},
                     [a, b, alpha, smoothed, band](Graph& g, int self) {
                       const Tensor& go = g.grad_buf(self);
                       const Tensor& va = g.value(a);
                       const Tensor& vb = g.value(b);
                       const T inv_a = T(1) / static_cast<T>(alpha);
                       for (long long i = 0; i < go.numel(); ++i) {
                         const T z = va.at(i) - vb.at(i);
                         T d;
                         if (smoothed)
                           d = ops::sigmoid_grad(z * inv_a) * inv_a;
                         else
                           d = (std::abs(z) <= static_cast<T>(band)) ? T(1) : T(0);
                         const T gg = go.at(i) * d;
                         if (g.requires_grad(a)) g.grad_buf(a).at(i) += gg;
                         if (g.requires_grad(b)) g.grad_buf(b).at(i) -= gg;
                       }
                     });
  }

  int minmax_norm(int a) {
    ops::MinMaxResult<T> r = ops::minmax_norm_full(value(a));
    const long long imin = r.argmin, imax = r.argmax;
    const bool degenerate = r.degenerate;
    return make_node(std::move(r.value), {a},
                     [a, imin, imax, degenerate](Graph& g, int self) {
                       if (degenerate) return;  // flat output, zero gradient
                       const Tensor& go = g.grad_buf(self);
                       const Tensor& y = g.value(self);
                       const Tensor& x = g.value(a);
                       Tensor& ga = g.grad_buf(a);
                       const T span = x.at(imax) - x.at(imin);
                       T gmin = T(0), gmax = T(0);
                       for (long long i = 0; i < go.numel(); ++i) {
                         const T gg = go.at(i) / span;
                         ga.at(i) += gg;
                         gmin -= gg * (T(1) - y.at(i));
                         gmax -= gg * y.at(i);
                       }
                       ga.at(imin) += gmin;
                       ga.at(imax) += gmax;
                     });
  }
};

using Graph32 = Graph<float>;
using Graph64 = Graph<double>;

}  // namespace bdh
