#include "sok/fft.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <mutex>
#include <numbers>

namespace sok {

namespace {

constexpr std::size_t kMaxLog2 = 40;

// Twiddles exp(-2 pi i k / N), k < N/2, one table per power of two, built once.
const std::vector<Complex>& twiddles(std::size_t n) {
  static std::array<std::once_flag, kMaxLog2> flags;
  static std::array<std::vector<Complex>, kMaxLog2> tables;
  const auto lg = static_cast<std::size_t>(std::countr_zero(n));
  std::call_once(flags[lg], [n, lg] {
    std::vector<Complex> t(n / 2);
    for (std::size_t k = 0; k < n / 2; ++k) {
      const double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
      t[k] = Complex(std::cos(angle), std::sin(angle));
    }
    tables[lg] = std::move(t);
  });
  return tables[lg];
}

void check_axes(const Shape& shape, std::span<const std::size_t> axes) {
  for (std::size_t a : axes) {
    if (a >= shape.size()) throw ShapeError("transform axis " + std::to_string(a) + " out of range");
  }
}

template <class F>
void for_each_line(std::vector<Complex>& data, const Shape& shape, std::size_t axis, F&& f) {
  const std::size_t n = shape[axis];
  std::size_t inner = 1;
  for (std::size_t a = axis + 1; a < shape.size(); ++a) inner *= shape[a];
  std::size_t outer = 1;
  for (std::size_t a = 0; a < axis; ++a) outer *= shape[a];
  std::vector<Complex> line(n);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      const std::size_t base = o * n * inner + i;
      for (std::size_t j = 0; j < n; ++j) line[j] = data[base + j * inner];
      f(std::span<Complex>(line));
      for (std::size_t j = 0; j < n; ++j) data[base + j * inner] = line[j];
    }
  }
}

}  // namespace

bool is_power_of_two(std::size_t n) noexcept { return n != 0 && (n & (n - 1)) == 0; }

bool fft_uses_fast_path(const Shape& shape, std::span<const std::size_t> axes) {
  check_axes(shape, axes);
  for (std::size_t a : axes) {
    if (!is_power_of_two(shape[a])) return false;
  }
  return true;
}

void naive_dft_line(std::span<Complex> line, bool inverse) {
  const std::size_t n = line.size();
  if (n <= 1) return;
  std::vector<Complex> table(n);
  for (std::size_t m = 0; m < n; ++m) {
    const double angle = (inverse ? 2.0 : -2.0) * std::numbers::pi * static_cast<double>(m) /
                         static_cast<double>(n);
    table[m] = Complex(std::cos(angle), std::sin(angle));
  }
  std::vector<Complex> out(n);
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (std::size_t k = 0; k < n; ++k) {
    Complex acc = 0.0;
    std::size_t idx = 0;
    for (std::size_t j = 0; j < n; ++j) {
      acc += line[j] * table[idx];
      idx += k;
      if (idx >= n) idx -= n;
    }
    out[k] = acc * scale;
  }
  std::copy(out.begin(), out.end(), line.begin());
}

void fft_line(std::span<Complex> line, bool inverse) {
  const std::size_t n = line.size();
  if (n <= 1) return;
  if (!is_power_of_two(n)) {
    naive_dft_line(line, inverse);
    return;
  }
  // bit reversal
  for (std::size_t i = 1, j = 0; i < n; ++i) {
    std::size_t bit = n >> 1;
    for (; j & bit; bit >>= 1) j ^= bit;
    j ^= bit;
    if (i < j) std::swap(line[i], line[j]);
  }
  const auto& tw = twiddles(n);
  for (std::size_t len = 2; len <= n; len <<= 1) {
    const std::size_t half = len / 2;
    const std::size_t step = n / len;
    for (std::size_t i = 0; i < n; i += len) {
      for (std::size_t j = 0; j < half; ++j) {
        const Complex w = inverse ? std::conj(tw[j * step]) : tw[j * step];
        const Complex u = line[i + j];
        const Complex v = line[i + j + half] * w;
        line[i + j] = u + v;
        line[i + j + half] = u - v;
      }
    }
  }
  const double scale = 1.0 / std::sqrt(static_cast<double>(n));
  for (auto& v : line) v *= scale;
}

std::vector<Complex> dft_1d(std::span<const Complex> signal) {
  if (signal.empty()) throw ShapeError("dft_1d: empty signal");
  std::vector<Complex> out(signal.begin(), signal.end());
  naive_dft_line(out, false);
  return out;
}

std::vector<Complex> idft_1d(std::span<const Complex> spectrum) {
  if (spectrum.empty()) throw ShapeError("idft_1d: empty spectrum");
  std::vector<Complex> out(spectrum.begin(), spectrum.end());
  naive_dft_line(out, true);
  return out;
}

std::vector<Complex> idft_1d(const Spectrum& spectrum) {
  if (spectrum.layout != SpectrumLayout::Natural) {
    throw LayoutError("idft_1d: spectrum is centered; apply ifftshift first");
  }
  if (spectrum.coeffs.rank() != 1) throw ShapeError("idft_1d: expected a vector");
  return idft_1d(spectrum.coeffs.data());
}

Spectrum dft_1d_spectrum(std::span<const Complex> signal) {
  auto coeffs = dft_1d(signal);
  const std::size_t n = coeffs.size();
  return Spectrum{ComplexTensor({n}, std::move(coeffs)), SpectrumLayout::Natural, {0}};
}

void fft_inplace(ComplexTensor& x, std::span<const std::size_t> axes, bool inverse) {
  check_axes(x.shape(), axes);
  const Shape shape = x.shape();
  for (std::size_t axis : axes) {
    if (shape[axis] == 1) continue;
    if (axis + 1 == shape.size()) {
      // contiguous lines: transform in place without gathering
      const std::size_t n = shape[axis];
      auto& data = x.storage();
      for (std::size_t base = 0; base < data.size(); base += n) {
        fft_line(std::span<Complex>(data.data() + base, n), inverse);
      }
    } else {
      for_each_line(x.storage(), shape, axis, [inverse](std::span<Complex> line) { fft_line(line, inverse); });
    }
  }
}

ComplexTensor fft_axes(ComplexTensor x, std::span<const std::size_t> axes) {
  fft_inplace(x, axes, false);
  return x;
}

ComplexTensor ifft_axes(ComplexTensor x, std::span<const std::size_t> axes) {
  fft_inplace(x, axes, true);
  return x;
}

Spectrum fft(const ComplexTensor& signal, std::vector<std::size_t> axes) {
  ComplexTensor c = fft_axes(signal, axes);
  return Spectrum{std::move(c), SpectrumLayout::Natural, std::move(axes)};
}

Spectrum fft(const ComplexTensor& signal) {
  std::vector<std::size_t> axes(signal.rank());
  std::iota(axes.begin(), axes.end(), std::size_t{0});
  return fft(signal, std::move(axes));
}

ComplexTensor ifft(const Spectrum& spectrum) {
  if (spectrum.layout != SpectrumLayout::Natural) {
    throw LayoutError("ifft: spectrum is centered; apply ifftshift first");
  }
  return ifft_axes(spectrum.coeffs, spectrum.axes);
}

ComplexTensor roll_axes(const ComplexTensor& x, std::span<const std::size_t> axes, bool to_centered) {
  check_axes(x.shape(), axes);
  ComplexTensor out = x;
  const Shape& shape = x.shape();
  for (std::size_t axis : axes) {
    const std::size_t n = shape[axis];
    // fftshift rotates right by floor(n/2); ifftshift rotates right by ceil(n/2)
    const std::size_t shift = to_centered ? n / 2 : (n + 1) / 2;
    if (shift % n == 0) continue;
    for_each_line(out.storage(), shape, axis, [shift, n](std::span<Complex> line) {
      std::vector<Complex> tmp(line.begin(), line.end());
      for (std::size_t j = 0; j < n; ++j) line[(j + shift) % n] = tmp[j];
    });
  }
  return out;
}

Spectrum fftshift(const Spectrum& s) {
  if (s.layout != SpectrumLayout::Natural) throw LayoutError("fftshift: spectrum already centered");
  return Spectrum{roll_axes(s.coeffs, s.axes, true), SpectrumLayout::Centered, s.axes};
}

Spectrum ifftshift(const Spectrum& s) {
  if (s.layout != SpectrumLayout::Centered) throw LayoutError("ifftshift: spectrum is not centered");
  return Spectrum{roll_axes(s.coeffs, s.axes, false), SpectrumLayout::Natural, s.axes};
}

RealTensor power_spectrum(const ComplexTensor& signal, std::vector<std::size_t> axes) {
  const Spectrum s = fft(signal, std::move(axes));
  std::vector<double> p(s.coeffs.size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = std::norm(s.coeffs[i]);
  return RealTensor(signal.shape(), std::move(p));
}

RealTensor power_spectrum(const RealTensor& signal, std::vector<std::size_t> axes) {
  return power_spectrum(to_complex(signal), std::move(axes));
}

std::vector<std::size_t> trailing_axes(std::size_t rank, std::size_t count) {
  if (count > rank) throw ShapeError("more transform axes than tensor rank");
  std::vector<std::size_t> axes(count);
  for (std::size_t i = 0; i < count; ++i) axes[i] = rank - count + i;
  return axes;
}

}  // namespace sok
