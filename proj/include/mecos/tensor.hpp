#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "mecos/error.hpp"

namespace mecos {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

/// Dense row-major tensor. Rank-1 tensors behave as a single row
/// (1 x n) wherever a matrix view is needed.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T{0})
      : shape_(std::move(shape)), values_(shape_count(shape_), fill) {}

  Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)), values_(std::move(values)) {
    if (values_.size() != shape_count(shape_)) {
      throw DimensionError("value count " + std::to_string(values_.size()) +
                           " does not match shape " + shape_str(shape_));
    }
  }

  static Tensor vector(std::initializer_list<T> values) {
    return Tensor({values.size()}, std::vector<T>(values));
  }
  static Tensor vector(std::vector<T> values) {
    const std::size_t n = values.size();
    return Tensor({n}, std::move(values));
  }
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<T> values) {
    return Tensor({rows, cols}, std::move(values));
  }
  static Tensor matrix(std::initializer_list<std::initializer_list<T>> rows) {
    std::vector<T> values;
    const std::size_t cols = rows.size() ? rows.begin()->size() : 0;
    for (const auto& row : rows) {
      if (row.size() != cols) throw DimensionError("ragged matrix literal");
      values.insert(values.end(), row.begin(), row.end());
    }
    return Tensor({rows.size(), cols}, std::move(values));
  }
  static Tensor identity(std::size_t n) {
    Tensor out({n, n});
    for (std::size_t i = 0; i < n; ++i) out(i, i) = T{1};
    return out;
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return values_.size(); }
  bool empty() const noexcept { return values_.empty(); }

  std::size_t rows() const noexcept {
    if (shape_.size() < 2) return 1;
    return shape_count(Shape(shape_.begin(), shape_.end() - 1));
  }
  std::size_t cols() const noexcept { return shape_.empty() ? 1 : shape_.back(); }

  T* data() noexcept { return values_.data(); }
  const T* data() const noexcept { return values_.data(); }
  std::span<T> values() noexcept { return values_; }
  std::span<const T> values() const noexcept { return values_; }
  std::vector<T>& storage() noexcept { return values_; }
  const std::vector<T>& storage() const noexcept { return values_; }

  T& operator[](std::size_t i) noexcept { return values_[i]; }
  const T& operator[](std::size_t i) const noexcept { return values_[i]; }
  T& operator()(std::size_t r, std::size_t c) noexcept { return values_[r * cols() + c]; }
  const T& operator()(std::size_t r, std::size_t c) const noexcept { return values_[r * cols() + c]; }

  std::span<T> row(std::size_t r) noexcept { return {values_.data() + r * cols(), cols()}; }
  std::span<const T> row(std::size_t r) const noexcept {
    return {values_.data() + r * cols(), cols()};
  }

  void fill(T value) { std::fill(values_.begin(), values_.end(), value); }

  Tensor reshaped(Shape shape) const {
    if (shape_count(shape) != values_.size()) {
      throw DimensionError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    }
    return Tensor(std::move(shape), values_);
  }

  bool all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](T v) { return std::isfinite(v); });
  }

  /// Throws NumericError in debug builds when a NaN/Inf is present.
  void check_finite([[maybe_unused]] const char* where) const {
#ifndef NDEBUG
    if (!all_finite()) throw NumericError(std::string("non-finite value in ") + where);
#endif
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(values_.begin(), values_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.values_ == b.values_;
  }

 private:
  Shape shape_;
  std::vector<T> values_;
};

namespace kernel {

template <typename T>
inline T dot(const T* a, const T* b, std::size_t n) {
  // Four independent accumulators; fixed order keeps results deterministic.
  T s0{}, s1{}, s2{}, s3{};
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
  }
  for (; i < n; ++i) s0 += a[i] * b[i];
  return (s0 + s1) + (s2 + s3);
}

template <typename T>
inline void axpy(T alpha, const T* x, T* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

/// out(r x o) = x(r x k) * w(o x k)^T
template <typename T>
inline void matmul_nt(const T* x, const T* w, T* out, std::size_t r, std::size_t k, std::size_t o) {
  for (std::size_t i = 0; i < r; ++i) {
    const T* xi = x + i * k;
    T* oi = out + i * o;
    for (std::size_t j = 0; j < o; ++j) oi[j] = dot(xi, w + j * k, k);
  }
}

}  // namespace kernel

/// Wx + b for a matrix W (out x in), vector x (in) and bias b (out).
template <typename T>
Tensor<T> affine(const Tensor<T>& w, const Tensor<T>& x, const Tensor<T>& b) {
  if (w.shape().size() != 2 || w.cols() != x.size() || w.rows() != b.size()) {
    throw DimensionError("affine: W " + shape_str(w.shape()) + ", x " + shape_str(x.shape()) +
                         ", b " + shape_str(b.shape()));
  }
  Tensor<T> out({w.rows()});
  kernel::matmul_nt(x.data(), w.data(), out.data(), 1, w.cols(), w.rows());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b[i];
  return out;
}

/// Max-subtracted softmax over a vector.
template <typename T>
Tensor<T> softmax(const Tensor<T>& z) {
  if (z.empty()) throw DomainError("softmax of an empty vector");
  const T peak = *std::max_element(z.values().begin(), z.values().end());
  Tensor<T> out(z.shape());
  T total{0};
  for (std::size_t i = 0; i < z.size(); ++i) {
    out[i] = std::exp(z[i] - peak);
    total += out[i];
  }
  for (auto& v : out.values()) v /= total;
  return out;
}

template <typename T>
T norm2(std::span<const T> v) {
  return std::sqrt(kernel::dot(v.data(), v.data(), v.size()));
}

/// Cosine similarity; rejects zero-norm inputs instead of returning 0.
template <typename T>
T cosine(std::span<const T> u, std::span<const T> v) {
  if (u.size() != v.size()) throw DimensionError("cosine: length mismatch");
  const T nu = norm2(u);
  const T nv = norm2(v);
  if (!(nu > T{0}) || !(nv > T{0})) throw DegenerateVectorError("cosine of a zero-norm vector");
  const T c = kernel::dot(u.data(), v.data(), u.size()) / (nu * nv);
  return std::clamp(c, T{-1}, T{1});
}

template <typename T>
T cosine(const Tensor<T>& u, const Tensor<T>& v) {
  return cosine<T>(u.values(), v.values());
}

template <typename T>
T sigmoid(T x) {
  return T{1} / (T{1} + std::exp(-x));
}

}  // namespace mecos
