#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ganinv {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

inline bool same_shape(const Shape& a, const Shape& b) { return a == b; }

/// Dense row-major array of arbitrary rank. Batch dimension, when present,
/// is always axis 0.
template <class T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_numel(shape_), T(0)) {}
  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<int64_t>(data_.size()) != shape_numel(shape_))
      throw std::invalid_argument("tensor data size does not match shape " + shape_str(shape_));
  }

  const Shape& shape() const { return shape_; }
  int64_t rank() const { return static_cast<int64_t>(shape_.size()); }
  int64_t dim(int i) const { return shape_.at(i); }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](int64_t i) { return data_[i]; }
  const T& operator[](int64_t i) const { return data_[i]; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  /// Same storage reinterpreted under a new shape (element count must match).
  Tensor<T> reshaped(Shape s) const& {
    if (shape_numel(s) != size())
      throw std::invalid_argument("reshape " + shape_str(shape_) + " -> " + shape_str(s));
    return Tensor<T>(std::move(s), data_);
  }
  Tensor<T> reshaped(Shape s) && {
    if (shape_numel(s) != size())
      throw std::invalid_argument("reshape " + shape_str(shape_) + " -> " + shape_str(s));
    return Tensor<T>(std::move(s), std::move(data_));
  }

  /// Rows [row_begin, row_end) along axis 0.
  Tensor<T> slice_rows(int64_t row_begin, int64_t row_end) const {
    if (shape_.empty()) throw std::logic_error("slice_rows on rank-0 tensor");
    const int64_t stride = size() / shape_[0];
    Shape s = shape_;
    s[0] = row_end - row_begin;
    Tensor<T> out(s);
    std::copy(data_.begin() + row_begin * stride, data_.begin() + row_end * stride,
              out.data_.begin());
    return out;
  }

  void set_row(int64_t row, const Tensor<T>& src) {
    const int64_t stride = size() / shape_[0];
    if (src.size() != stride) throw std::invalid_argument("set_row: stride mismatch");
    std::copy(src.data_.begin(), src.data_.end(), data_.begin() + row * stride);
  }

  template <class U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    for (int64_t i = 0; i < size(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

  bool all_finite() const {
    for (const T& v : data_)
      if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

template <class T>
Tensor<T> zeros_like(const Tensor<T>& t) {
  return Tensor<T>(t.shape());
}

/// y += a * x
template <class T>
void axpy(T a, const Tensor<T>& x, Tensor<T>& y) {
  if (x.size() != y.size()) throw std::invalid_argument("axpy size mismatch");
  const T* xs = x.data();
  T* ys = y.data();
  for (int64_t i = 0; i < x.size(); ++i) ys[i] += a * xs[i];
}

template <class T>
double sum_squares(const Tensor<T>& t) {
  double s = 0;
  for (int64_t i = 0; i < t.size(); ++i) s += double(t[i]) * double(t[i]);
  return s;
}

/// Per-sample L2 norms over all non-batch axes of a [B, ...] tensor.
template <class T>
std::vector<double> row_l2_norms(const Tensor<T>& t) {
  const int64_t b = t.dim(0);
  const int64_t stride = t.size() / b;
  std::vector<double> out(b, 0.0);
  for (int64_t i = 0; i < b; ++i) {
    double s = 0;
    const T* p = t.data() + i * stride;
    for (int64_t j = 0; j < stride; ++j) s += double(p[j]) * double(p[j]);
    out[i] = std::sqrt(s);
  }
  return out;
}

}  // namespace ganinv
