#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "sinkdem/errors.hpp"

namespace sinkdem::nn {

// Dense row-major buffer, shape (N,C,H,W) or (N,F).
template <typename T>
struct TensorT {
  std::vector<int> shape;
  std::vector<T> data;

  TensorT() = default;
  explicit TensorT(std::vector<int> s) : shape(std::move(s)) {
    data.assign(numel_of(shape), T(0));
  }

  static std::size_t numel_of(const std::vector<int>& s) {
    std::size_t n = 1;
    for (int d : s) {
      if (d <= 0) throw ShapeError("tensor: nonpositive dimension");
      n *= static_cast<std::size_t>(d);
    }
    return s.empty() ? 0 : n;
  }

  std::size_t numel() const { return data.size(); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
  bool is4d() const { return shape.size() == 4; }
  bool is2d() const { return shape.size() == 2; }

  T& at4(int n, int c, int h, int w) {
    return data[((static_cast<std::size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }
  const T& at4(int n, int c, int h, int w) const {
    return data[((static_cast<std::size_t>(n) * shape[1] + c) * shape[2] + h) * shape[3] + w];
  }
  T& at2(int n, int f) { return data[static_cast<std::size_t>(n) * shape[1] + f]; }
  const T& at2(int n, int f) const { return data[static_cast<std::size_t>(n) * shape[1] + f]; }

  bool same_shape(const TensorT& o) const { return shape == o.shape; }

  TensorT zeros_like() const { return TensorT(shape); }

  template <typename U>
  TensorT<U> cast() const {
    TensorT<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

using Tensor = TensorT<float>;
using TensorD = TensorT<double>;

std::string shape_str(const std::vector<int>& s);

template <typename T>
bool all_finite(const TensorT<T>& t) {
  for (T v : t.data)
    if (!(v == v) || v > std::numeric_limits<T>::max() || v < std::numeric_limits<T>::lowest())
      return false;
  return true;
}

}  // namespace sinkdem::nn
