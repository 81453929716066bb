#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "crpl/common.hpp"

namespace crpl {

// Dense row-major tensor. Activations use NCHW, conv kernels use
// (Cout, Cin/groups, Kh, Kw). Scalar is float on the compute path;
// the double instantiation exists for gradient checking.
template <class Scalar>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(std::vector<std::int64_t> shape) : shape_(std::move(shape)) {
    data_.assign(checked_numel(shape_), Scalar(0));
  }

  Tensor(std::vector<std::int64_t> shape, std::vector<Scalar> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    check_arg(static_cast<std::int64_t>(data_.size()) == checked_numel(shape_),
              "tensor data length ", data_.size(), " does not match shape numel ",
              checked_numel(shape_));
  }

  static Tensor full(std::vector<std::int64_t> shape, Scalar value) {
    Tensor t(std::move(shape));
    std::fill(t.data_.begin(), t.data_.end(), value);
    return t;
  }

  const std::vector<std::int64_t>& shape() const { return shape_; }
  int rank() const { return static_cast<int>(shape_.size()); }
  std::int64_t dim(int i) const { return shape_.at(static_cast<std::size_t>(i)); }
  std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  std::vector<Scalar>& values() { return data_; }
  const std::vector<Scalar>& values() const { return data_; }

  Scalar& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
  const Scalar& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

  Scalar& at2(std::int64_t i, std::int64_t j) { return data_[static_cast<std::size_t>(i * dim(1) + j)]; }
  const Scalar& at2(std::int64_t i, std::int64_t j) const {
    return data_[static_cast<std::size_t>(i * dim(1) + j)];
  }

  Scalar& at3(std::int64_t c, std::int64_t h, std::int64_t w) {
    return data_[static_cast<std::size_t>((c * dim(1) + h) * dim(2) + w)];
  }
  const Scalar& at3(std::int64_t c, std::int64_t h, std::int64_t w) const {
    return data_[static_cast<std::size_t>((c * dim(1) + h) * dim(2) + w)];
  }

  Scalar& at4(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
    return data_[static_cast<std::size_t>(((n * dim(1) + c) * dim(2) + h) * dim(3) + w)];
  }
  const Scalar& at4(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
    return data_[static_cast<std::size_t>(((n * dim(1) + c) * dim(2) + h) * dim(3) + w)];
  }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  // Same data, new shape; numel must match.
  Tensor reshaped(std::vector<std::int64_t> shape) const {
    Tensor t;
    t.shape_ = std::move(shape);
    check_arg(checked_numel(t.shape_) == numel(), "reshape numel mismatch");
    t.data_ = data_;
    return t;
  }

  template <class T>
  Tensor<T> cast() const {
    std::vector<T> out(data_.size());
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<T>(data_[i]);
    return Tensor<T>(shape_, std::move(out));
  }

  void fill(Scalar v) { std::fill(data_.begin(), data_.end(), v); }

  static std::int64_t checked_numel(const std::vector<std::int64_t>& shape) {
    std::int64_t n = 1;
    for (std::int64_t d : shape) {
      check_arg(d >= 0, "negative tensor extent ", d);
      n *= d;
    }
    return n;
  }

 private:
  std::vector<std::int64_t> shape_;
  std::vector<Scalar> data_;
};

template <class S>
std::string shape_str(const Tensor<S>& t) {
  std::string s = "(";
  for (int i = 0; i < t.rank(); ++i) s += (i ? "," : "") + std::to_string(t.dim(i));
  return s + ")";
}

template <class S>
double max_abs_diff(const Tensor<S>& a, const Tensor<S>& b) {
  check_arg(a.same_shape(b), "max_abs_diff: shape mismatch ", shape_str(a), " vs ", shape_str(b));
  double m = 0.0;
  for (std::int64_t i = 0; i < a.numel(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a[i]) - static_cast<double>(b[i])));
  return m;
}

template <class S>
bool bitwise_equal(const Tensor<S>& a, const Tensor<S>& b) {
  if (!a.same_shape(b)) return false;
  for (std::int64_t i = 0; i < a.numel(); ++i)
    if (!(a[i] == b[i])) return false;
  return true;
}

// NaN/Inf is surfaced as an error, never propagated. The fast path sums in
// double (any non-finite value poisons the sum); the slow path locates it.
template <class S>
void assert_all_finite(const Tensor<S>& t, const char* what) {
  double s = 0.0;
  const S* p = t.data();
  const std::int64_t n = t.numel();
  for (std::int64_t i = 0; i < n; ++i) s += static_cast<double>(p[i]);
  if (std::isfinite(s)) return;
  for (std::int64_t i = 0; i < n; ++i) {
    if (!std::isfinite(static_cast<double>(p[i])))
      throw std::runtime_error(cat("non-finite value ", static_cast<double>(p[i]), " at flat index ",
                                   i, " produced by ", what));
  }
  // A finite-but-huge cancellation tripped the sum; nothing actually non-finite.
}

}  // namespace crpl
