#pragma once

#include <initializer_list>
#include <utility>
#include <vector>

#include "scribblemix/common.hpp"

namespace scribblemix {

// Dense row-major N-d array. grad is empty until a backward pass touches it;
// when present it always matches data's length.
template <typename T>
struct TensorT {
  std::vector<int> shape;
  std::vector<T> data;
  std::vector<T> grad;

  TensorT() = default;
  explicit TensorT(std::vector<int> s)
      : shape(std::move(s)), data(static_cast<size_t>(numel_of(shape)), T(0)) {}
  TensorT(std::vector<int> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    check(numel_of(shape) == static_cast<int64_t>(data.size()), "tensor shape ",
          shape_str(shape), " does not match data length ", data.size());
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  bool is_scalar() const { return data.size() == 1; }

  bool same_shape(const TensorT& o) const { return shape == o.shape; }

  void ensure_grad() {
    if (grad.size() != data.size()) grad.assign(data.size(), T(0));
  }
  void zero_grad() {
    if (!grad.empty()) grad.assign(grad.size(), T(0));
  }

  template <typename U>
  TensorT<U> cast() const {
    TensorT<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

using Tensor = TensorT<float>;

template <typename T>
TensorT<T> full(std::vector<int> shape, T v) {
  TensorT<T> t(std::move(shape));
  for (auto& x : t.data) x = v;
  return t;
}

}  // namespace scribblemix
