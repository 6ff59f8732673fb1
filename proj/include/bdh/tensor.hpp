#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "bdh/error.hpp"
#include "bdh/rng.hpp"

namespace bdh {

/*
 * Dense row-major n-d array. float for training, double for the
 * verification paths (gradient checks, physics oracles).
 *
 * Layout conventions used across the project:
 *   images / feature maps  [H x W] or [H x W x C]
 *   conv kernels           [K x K x Cin x Cout]
 *   spike rasters          [T x H x W x C]
 */
template <typename T>
struct TensorT {
  std::vector<int> shape;
  std::vector<T> data;

  TensorT() = default;

  explicit TensorT(std::vector<int> s, T fill = T(0)) : shape(std::move(s)) {
    for (int e : shape) require(e >= 0, "tensor extent must be non-negative");
    data.assign(static_cast<std::size_t>(numel_of(shape)), fill);
  }

  static TensorT zeros(std::vector<int> s) { return TensorT(std::move(s)); }

  static TensorT full(std::vector<int> s, T v) {
    return TensorT(std::move(s), v);
  }

  static TensorT scalar(T v) { return TensorT({1}, v); }

  static TensorT from(std::vector<int> s, std::initializer_list<T> vals) {
    TensorT t(std::move(s));
    require(static_cast<std::size_t>(t.numel()) == vals.size(),
            "initializer size does not match shape");
    std::size_t i = 0;
    for (T v : vals) t.data[i++] = v;
    return t;
  }

  static long long numel_of(const std::vector<int>& s) {
    long long n = 1;
    for (int e : s) n *= e;
    return n;
  }

  int rank() const { return static_cast<int>(shape.size()); }
  long long numel() const { return static_cast<long long>(data.size()); }

  int extent(int axis) const {
    require(axis >= 0 && axis < rank(), "axis out of range");
    return shape[static_cast<std::size_t>(axis)];
  }

  bool same_shape(const TensorT& o) const { return shape == o.shape; }

  T& at(long long i) { return data[static_cast<std::size_t>(i)]; }
  const T& at(long long i) const { return data[static_cast<std::size_t>(i)]; }

  // [H x W]
  T& at(int y, int x) { return data[idx2(y, x)]; }
  const T& at(int y, int x) const { return data[idx2(y, x)]; }

  // [H x W x C]
  T& at(int y, int x, int c) { return data[idx3(y, x, c)]; }
  const T& at(int y, int x, int c) const { return data[idx3(y, x, c)]; }

  // [T x H x W x C] and kernels [K x K x Cin x Cout]
  T& at(int a, int b, int c, int d) { return data[idx4(a, b, c, d)]; }
  const T& at(int a, int b, int c, int d) const { return data[idx4(a, b, c, d)]; }

  bool all_finite() const {
    for (T v : data)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

  void fill_uniform(Rng& rng, double lo, double hi) {
    for (T& v : data) v = static_cast<T>(rng.uniform(lo, hi));
  }

  std::string shape_str() const {
    std::ostringstream os;
    os << "[";
    for (int i = 0; i < rank(); ++i) os << (i ? "x" : "") << shape[i];
    os << "]";
    return os.str();
  }

 private:
  std::size_t idx2(int y, int x) const {
    return static_cast<std::size_t>(y) * shape[1] + x;
  }
  std::size_t idx3(int y, int x, int c) const {
    return (static_cast<std::size_t>(y) * shape[1] + x) * shape[2] + c;
  }
  std::size_t idx4(int a, int b, int c, int d) const {
    return ((static_cast<std::size_t>(a) * shape[1] + b) * shape[2] + c) *
               shape[3] +
           d;
  }
};

using Tensor32 = TensorT<float>;
using Tensor64 = TensorT<double>;

template <typename To, typename From>
TensorT<To> tensor_cast(const TensorT<From>& a) {
  TensorT<To> out(a.shape);
  for (long long i = 0; i < a.numel(); ++i)
    out.at(i) = static_cast<To>(a.at(i));
  return out;
}

template <typename T>
void require_same_shape(const TensorT<T>& a, const TensorT<T>& b,
                        const char* op) {
  if (!a.same_shape(b))
    fail(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
         b.shape_str());
}

template <typename T>
void require_finite(const TensorT<T>& a, const std::string& where) {
  if (!a.all_finite()) fail("non-finite values at " + where);
}

}  // namespace bdh
