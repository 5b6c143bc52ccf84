#pragma once

#include <complex>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "sok/errors.hpp"

namespace sok {

using Complex = std::complex<double>;
using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major n-dimensional array. A rank-0 tensor holds one element.
template <class T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T{}) : shape_(std::move(shape)) {
    check_extents();
    data_.assign(shape_size(shape_), fill);
  }

  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_extents();
    if (data_.size() != shape_size(shape_)) {
      throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                       " does not match shape " + shape_string(shape_));
    }
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  /// Row-major strides in elements.
  std::vector<std::size_t> strides() const {
    std::vector<std::size_t> s(shape_.size(), 1);
    for (std::size_t a = shape_.size(); a-- > 1;) s[a - 1] = s[a] * shape_[a];
    return s;
  }

  std::size_t offset(std::span<const std::size_t> index) const {
    if (index.size() != shape_.size()) throw ShapeError("index rank mismatch");
    std::size_t off = 0;
    for (std::size_t a = 0; a < shape_.size(); ++a) {
      if (index[a] >= shape_[a]) throw ShapeError("index out of range");
      off = off * shape_[a] + index[a];
    }
    return off;
  }

  T& at(std::initializer_list<std::size_t> index) {
    return data_[offset(std::span<const std::size_t>(index.begin(), index.size()))];
  }
  const T& at(std::initializer_list<std::size_t> index) const {
    return data_[offset(std::span<const std::size_t>(index.begin(), index.size()))];
  }

  /// Same data, new shape with identical element count.
  Tensor reshaped(Shape shape) const {
    if (shape_size(shape) != data_.size()) {
      throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
    }
    return Tensor(std::move(shape), data_);
  }

  void fill(T value) { std::fill(data_.begin(), data_.end(), value); }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void check_extents() const {
    for (std::size_t e : shape_) {
      if (e == 0) throw ShapeError("tensor extents must be >= 1, got " + shape_string(shape_));
    }
  }

  Shape shape_;
  std::vector<T> data_ = std::vector<T>(1);
};

using RealTensor = Tensor<double>;
using ComplexTensor = Tensor<Complex>;

ComplexTensor to_complex(const RealTensor& x);
ComplexTensor make_complex(const RealTensor& re, const RealTensor& im);
RealTensor real_part(const ComplexTensor& x);
RealTensor imag_part(const ComplexTensor& x);

/// Largest |a_i - b_i|; shapes must match.
double max_abs_diff(const RealTensor& a, const RealTensor& b);
double max_abs_diff(const ComplexTensor& a, const ComplexTensor& b);
double max_abs(const RealTensor& a);
double max_abs(const ComplexTensor& a);
double l2_norm(const RealTensor& a);
double l2_norm(const ComplexTensor& a);
/// Hermitian inner product sum conj(a_i) b_i.
Complex inner(const ComplexTensor& a, const ComplexTensor& b);
double dot(const RealTensor& a, const RealTensor& b);

/// Copy out one leading-axis slice: x[index, ...].
template <class T>
Tensor<T> slice_leading(const Tensor<T>& x, std::size_t index) {
  if (x.rank() < 2) throw ShapeError("slice_leading needs rank >= 2");
  Shape rest(x.shape().begin() + 1, x.shape().end());
  const std::size_t n = shape_size(rest);
  if (index >= x.extent(0)) throw ShapeError("slice index out of range");
  std::vector<T> out(x.data().begin() + static_cast<std::ptrdiff_t>(index * n),
                     x.data().begin() + static_cast<std::ptrdiff_t>((index + 1) * n));
  return Tensor<T>(std::move(rest), std::move(out));
}

/// Stack equally shaped tensors along a new leading axis.
template <class T>
Tensor<T> stack(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw ShapeError("stack of zero tensors");
  Shape shape = parts.front().shape();
  std::vector<T> out;
  out.reserve(parts.size() * parts.front().size());
  for (const auto& p : parts) {
    if (p.shape() != shape) throw ShapeError("stack: shape mismatch");
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  shape.insert(shape.begin(), parts.size());
  return Tensor<T>(std::move(shape), std::move(out));
}

}  // namespace sok
