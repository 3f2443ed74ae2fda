#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace fgzsl {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream oss;
  oss << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) oss << 'x';
    oss << shape[i];
  }
  oss << ']';
  return oss.str();
}

// Dense row-major array. Every op in the library reads a tensor as a matrix:
// cols() is the last extent, rows() the product of the others (1 for rank <= 1).
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() : shape_{0} {}

  explicit Tensor(Shape shape, T fill = T{0})
      : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != data_.size()) {
      throw std::invalid_argument("Tensor: shape " + shape_str(shape_) + " holds " +
                                  std::to_string(shape_numel(shape_)) + " values, got " +
                                  std::to_string(data_.size()));
    }
  }

  static Tensor matrix(std::size_t rows, std::size_t cols, T fill = T{0}) {
    return Tensor({rows, cols}, fill);
  }

  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<T> data) {
    return Tensor({rows, cols}, std::move(data));
  }

  static Tensor vector(std::vector<T> data) {
    const std::size_t n = data.size();
    return Tensor({n}, std::move(data));
  }

  static Tensor scalar(T v) { return Tensor({1, 1}, std::vector<T>{v}); }

  static Tensor identity(std::size_t n) {
    Tensor t = matrix(n, n);
    for (std::size_t i = 0; i < n; ++i) t(i, i) = T{1};
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  std::size_t cols() const { return shape_.empty() ? 1 : shape_.back(); }
  std::size_t rows() const {
    if (shape_.size() <= 1) return 1;
    return std::accumulate(shape_.begin(), shape_.end() - 1, std::size_t{1}, std::multiplies<>());
  }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }
  T& operator()(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  const T& operator()(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  // Value of a tensor whose extents are all 1.
  T item() const {
    if (data_.size() != 1) {
      throw std::invalid_argument("Tensor::item on shape " + shape_str(shape_));
    }
    return data_[0];
  }

  Tensor reshaped(Shape shape) const {
    if (shape_numel(shape) != data_.size()) {
      throw std::invalid_argument("Tensor::reshaped " + shape_str(shape_) + " -> " + shape_str(shape));
    }
    return Tensor(std::move(shape), data_);
  }

  // Rows [begin, end) of the matrix view.
  Tensor row_range(std::size_t begin, std::size_t end) const {
    const std::size_t c = cols();
    return Tensor({end - begin, c},
                  std::vector<T>(data_.begin() + static_cast<std::ptrdiff_t>(begin * c),
                                 data_.begin() + static_cast<std::ptrdiff_t>(end * c)));
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.size());
    std::transform(data_.begin(), data_.end(), out.begin(), [](T v) { return static_cast<U>(v); });
    return Tensor<U>(shape_, std::move(out));
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<T> data_;
};

// Raised when a value that must be finite is not (losses, gradients).
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

template <typename T>
bool check_finite(const Tensor<T>& t) {
  return std::all_of(t.values().begin(), t.values().end(), [](T v) { return std::isfinite(v); });
}

// Row-wise concatenation of matrices with equal column counts.
template <typename T>
Tensor<T> stack_rows(const std::vector<const Tensor<T>*>& parts) {
  if (parts.empty()) return Tensor<T>::matrix(0, 0);
  const std::size_t c = parts.front()->cols();
  std::size_t r = 0;
  for (const auto* p : parts) {
    if (p->cols() != c) {
      throw std::invalid_argument("stack_rows: column mismatch " + shape_str(p->shape()));
    }
    r += p->rows();
  }
  std::vector<T> out;
  out.reserve(r * c);
  for (const auto* p : parts) out.insert(out.end(), p->values().begin(), p->values().end());
  return Tensor<T>::matrix(r, c, std::move(out));
}

// Columns of a and b side by side.
template <typename T>
Tensor<T> concat_cols(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rows() != b.rows()) {
    throw std::invalid_argument("concat_cols: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  const std::size_t r = a.rows(), ca = a.cols(), cb = b.cols();
  Tensor<T> out = Tensor<T>::matrix(r, ca + cb);
  for (std::size_t i = 0; i < r; ++i) {
    std::copy_n(a.data() + i * ca, ca, out.data() + i * (ca + cb));
    std::copy_n(b.data() + i * cb, cb, out.data() + i * (ca + cb) + ca);
  }
  return out;
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& x, std::size_t begin, std::size_t end) {
  if (begin > end || end > x.cols()) {
    throw std::invalid_argument("slice_cols: [" + std::to_string(begin) + "," + std::to_string(end) +
                                ") out of " + shape_str(x.shape()));
  }
  const std::size_t r = x.rows(), c = x.cols(), w = end - begin;
  Tensor<T> out = Tensor<T>::matrix(r, w);
  for (std::size_t i = 0; i < r; ++i) std::copy_n(x.data() + i * c + begin, w, out.data() + i * w);
  return out;
}

}  // namespace fgzsl
