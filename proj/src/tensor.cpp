#include "sok/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace sok {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

ComplexTensor to_complex(const RealTensor& x) {
  std::vector<Complex> out(x.size());
  std::transform(x.data().begin(), x.data().end(), out.begin(), [](double v) { return Complex(v, 0.0); });
  return ComplexTensor(x.shape(), std::move(out));
}

ComplexTensor make_complex(const RealTensor& re, const RealTensor& im) {
  if (re.shape() != im.shape()) throw ShapeError("make_complex: shape mismatch");
  std::vector<Complex> out(re.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = Complex(re[i], im[i]);
  return ComplexTensor(re.shape(), std::move(out));
}

RealTensor real_part(const ComplexTensor& x) {
  std::vector<double> out(x.size());
  std::transform(x.data().begin(), x.data().end(), out.begin(), [](Complex v) { return v.real(); });
  return RealTensor(x.shape(), std::move(out));
}

RealTensor imag_part(const ComplexTensor& x) {
  std::vector<double> out(x.size());
  std::transform(x.data().begin(), x.data().end(), out.begin(), [](Complex v) { return v.imag(); });
  return RealTensor(x.shape(), std::move(out));
}

namespace {
template <class T>
double max_abs_diff_impl(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("max_abs_diff: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}
template <class T>
double max_abs_impl(const Tensor<T>& a) {
  double m = 0.0;
  for (const auto& v : a.data()) m = std::max(m, std::abs(v));
  return m;
}
template <class T>
double l2_impl(const Tensor<T>& a) {
  double s = 0.0;
  for (const auto& v : a.data()) s += std::norm(v);
  return std::sqrt(s);
}
}  // namespace

double max_abs_diff(const RealTensor& a, const RealTensor& b) { return max_abs_diff_impl(a, b); }
double max_abs_diff(const ComplexTensor& a, const ComplexTensor& b) { return max_abs_diff_impl(a, b); }
double max_abs(const RealTensor& a) { return max_abs_impl(a); }
double max_abs(const ComplexTensor& a) { return max_abs_impl(a); }
double l2_norm(const RealTensor& a) { return l2_impl(a); }
double l2_norm(const ComplexTensor& a) { return l2_impl(a); }

Complex inner(const ComplexTensor& a, const ComplexTensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("inner: shape mismatch");
  Complex s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::conj(a[i]) * b[i];
  return s;
}

double dot(const RealTensor& a, const RealTensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("dot: shape mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

}  // namespace sok
