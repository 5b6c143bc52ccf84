#pragma once

// Orthonormal discrete Fourier transforms over n-dimensional tensors.
//
// Forward:  X_k = N^{-1/2} sum_n x_n exp(-2 pi i k n / N)
// Inverse:  x_n = N^{-1/2} sum_k X_k exp(+2 pi i k n / N)
//
// Power-of-two axes use an iterative radix-2 transform with cached twiddle
// tables; other lengths fall back to the quadratic DFT.

#include <span>
#include <vector>

#include "sok/tensor.hpp"

namespace sok {

enum class SpectrumLayout { Natural, Centered };

/// Frequency-domain coefficients plus the layout of the transformed axes.
struct Spectrum {
  ComplexTensor coeffs;
  SpectrumLayout layout = SpectrumLayout::Natural;
  std::vector<std::size_t> axes;
};

std::vector<Complex> dft_1d(std::span<const Complex> signal);
std::vector<Complex> idft_1d(std::span<const Complex> spectrum);

/// idft of a Spectrum; rejects Centered layout.
std::vector<Complex> idft_1d(const Spectrum& spectrum);

/// 1-D transforms wrapped in Spectrum for symmetry with the n-d API.
Spectrum dft_1d_spectrum(std::span<const Complex> signal);

bool is_power_of_two(std::size_t n) noexcept;

/// True when every listed axis takes the radix-2 path.
bool fft_uses_fast_path(const Shape& shape, std::span<const std::size_t> axes);

/// In-place transforms of a contiguous line. `inverse` selects the sign; both
/// directions carry the 1/sqrt(N) factor.
void fft_line(std::span<Complex> line, bool inverse);
void naive_dft_line(std::span<Complex> line, bool inverse);

/// In-place transform of a tensor along the given axes (no layout bookkeeping).
void fft_inplace(ComplexTensor& x, std::span<const std::size_t> axes, bool inverse);

Spectrum fft(const ComplexTensor& signal, std::vector<std::size_t> axes);
Spectrum fft(const ComplexTensor& signal);  // all axes
ComplexTensor ifft(const Spectrum& spectrum);

/// Raw transforms without the Spectrum wrapper, used by internal kernels.
ComplexTensor fft_axes(ComplexTensor x, std::span<const std::size_t> axes);
ComplexTensor ifft_axes(ComplexTensor x, std::span<const std::size_t> axes);

/// Move the zero mode to index floor(N/2) on each transformed axis.
Spectrum fftshift(const Spectrum& s);
Spectrum ifftshift(const Spectrum& s);

/// Raw index rotations (shift > 0 rotates right) used by the layout ops.
ComplexTensor roll_axes(const ComplexTensor& x, std::span<const std::size_t> axes,
                        bool to_centered);

/// |X_k|^2 of the orthonormal transform over `axes`.
RealTensor power_spectrum(const ComplexTensor& signal, std::vector<std::size_t> axes);
RealTensor power_spectrum(const RealTensor& signal, std::vector<std::size_t> axes);

/// Trailing `count` axes of a tensor of rank `rank`.
std::vector<std::size_t> trailing_axes(std::size_t rank, std::size_t count);

}  // namespace sok
