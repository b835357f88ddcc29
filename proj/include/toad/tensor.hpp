#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "toad/error.hpp"

namespace toad {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

// Dense row-major tensor. No strides or views: every tensor owns its buffer.
//
// Kernels treat a tensor of rank >= 1 as a matrix of `rows()` x `cols()`, where
// `cols()` is the last extent and `rows()` the product of the others. A rank-0
// tensor holds one scalar.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0});
  Tensor(Shape shape, std::vector<T> data);

  static Tensor matrix(std::size_t rows, std::size_t cols,
                       std::initializer_list<T> values);
  static Tensor vector(std::initializer_list<T> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  T* raw() { return data_.data(); }
  const T* raw() const { return data_.data(); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }
  T& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  const T& at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  std::span<T> row(std::size_t r);
  std::span<const T> row(std::size_t r) const;

  void fill(T value);
  void reshape(Shape shape);

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

// Throws NumericError naming `where` if any element is NaN or Inf.
template <typename T>
void check_finite(const Tensor<T>& t, const char* where);

template <typename T>
bool all_finite(std::span<const T> values) {
  for (T v : values) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

// FNV-1a over the raw bytes. Used to prove frozen tensors never change.
std::uint64_t checksum_bytes(const void* data, std::size_t bytes,
                             std::uint64_t seed = 0xcbf29ce484222325ULL);

template <typename T>
std::uint64_t checksum(const Tensor<T>& t, std::uint64_t seed = 0xcbf29ce484222325ULL) {
  return checksum_bytes(t.raw(), t.size() * sizeof(T), seed);
}

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace toad
