#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

namespace streamadapt {

template <class T>
struct BasicTensor {
  std::vector<std::size_t> dims;
  std::vector<T> data;

  BasicTensor() = default;
  explicit BasicTensor(std::vector<std::size_t> shape, T fill = T{})
      : dims(std::move(shape)), data(element_count(dims), fill) {}

  static std::size_t element_count(const std::vector<std::size_t>& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
  }

  std::size_t size() const { return data.size(); }
  std::size_t rank() const { return dims.size(); }
  std::span<T> span() { return data; }
  std::span<const T> span() const { return data; }

  bool same_shape(const BasicTensor& o) const { return dims == o.dims; }
  void check_invariant() const {
    if (data.size() != element_count(dims))
      throw std::invalid_argument("tensor data length does not match its dims");
  }

  template <class U>
  BasicTensor<U> cast() const {
    BasicTensor<U> out;
    out.dims = dims;
    out.data.assign(data.begin(), data.end());
    return out;
  }

  bool operator==(const BasicTensor&) const = default;
};

using Tensor = BasicTensor<float>;

}  // namespace streamadapt
