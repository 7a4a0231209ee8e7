#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <utility>
#include <vector>

namespace kinface {

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

template <typename T>
concept Real = std::is_same_v<T, float> || std::is_same_v<T, double>;

/**
 * Dense row-major array of real scalars.
 *
 * A zero-rank shape is a scalar holding one element. Every dimension must be
 * positive.
 */
// 64-byte aligned storage, so vectorised kernels split every sum the same
// way regardless of where the allocator placed the buffer.
template <Real T>
using AlignedVector = std::vector<T, Eigen::aligned_allocator<T>>;

template <Real T>
class Tensor {
 public:
  using value_type = T;

  Tensor() : shape_{}, data_(1, T{0}) {}

  explicit Tensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)) {
    check_dims(shape_);
    data_.assign(shape_size(shape_), fill);
  }

  Tensor(Shape shape, const std::vector<T>& data) : Tensor(std::move(shape), AlignedVector<T>(data.begin(), data.end())) {}

  Tensor(Shape shape, AlignedVector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_dims(shape_);
    if (shape_size(shape_) != data_.size()) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_string(shape_));
    }
  }

  static Tensor scalar(T v) { return Tensor(Shape{}, AlignedVector<T>{v}); }

  static Tensor from(Shape shape, std::initializer_list<T> values) {
    return Tensor(std::move(shape), AlignedVector<T>(values));
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool is_scalar() const noexcept { return data_.size() == 1; }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T item() const {
    if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape_));
    return data_[0];
  }

  Tensor reshaped(Shape shape) const {
    if (shape_size(shape) != data_.size()) {
      throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    return Tensor(std::move(shape), data_);
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
  }

  template <Real U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, AlignedVector<U>(data_.begin(), data_.end()));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  static void check_dims(const Shape& shape) {
    for (auto d : shape) {
      if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape));
    }
  }

  Shape shape_;
  AlignedVector<T> data_;
};

template <Real T>
T max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) throw ShapeError("max_abs_diff shape mismatch");
  T m{0};
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace kinface
