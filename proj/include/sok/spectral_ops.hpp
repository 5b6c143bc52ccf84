#pragma once

// Resampling, differentiation, filtering and aliasing diagnostics on periodic
// grids. Every routine transforms the trailing `grid.rank()` (or
// `new_resolution.size()`) axes of its input; leading axes are treated as
// batch or channel axes.

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "sok/fft.hpp"
#include "sok/grid.hpp"

namespace sok {

/// Crop or zero-pad a centered spectrum along `axes` to `extents`. The block
/// kept (or filled) starts at floor(N/2) - floor(M/2) of the larger axis.
ComplexTensor center_resize(const ComplexTensor& centered, std::span<const std::size_t> axes,
                            std::span<const std::size_t> extents);

/// Fourier resampling of the trailing axes to `new_resolution` (up or down),
/// scaled by sqrt(M/N) per axis so that function values are preserved.
ComplexTensor spectral_resample(const ComplexTensor& signal, const std::vector<std::size_t>& new_resolution);
RealTensor spectral_resample(const RealTensor& signal, const std::vector<std::size_t>& new_resolution);

/// Resampling guarded by the grid: rejects non-periodic axes.
ComplexTensor spectral_interpolate(const ComplexTensor& signal, const GridSpec& grid,
                                   const std::vector<std::size_t>& new_resolution);
RealTensor spectral_interpolate(const RealTensor& signal, const GridSpec& grid,
                                const std::vector<std::size_t>& new_resolution);

/// Downward-only resampling (ideal low-pass then coarse sampling).
ComplexTensor spectral_truncate(const ComplexTensor& signal, const std::vector<std::size_t>& new_resolution);
RealTensor spectral_truncate(const RealTensor& signal, const std::vector<std::size_t>& new_resolution);

/// m-th derivative along spatial axis `axis` of the grid (0-based among the
/// trailing grid axes). For even N and odd m the Nyquist coefficient is zeroed.
ComplexTensor spectral_derivative(const ComplexTensor& signal, const GridSpec& grid, std::size_t axis, int order);
RealTensor spectral_derivative(const RealTensor& signal, const GridSpec& grid, std::size_t axis, int order);

/// Zero every coefficient with |k| > cutoff on the trailing axes.
ComplexTensor low_pass(const ComplexTensor& signal, const std::vector<std::size_t>& cutoff);
RealTensor low_pass(const RealTensor& signal, const std::vector<std::size_t>& cutoff);

/// Keep every `factor`-th sample on the trailing axes.
template <class T>
Tensor<T> stride_downsample(const Tensor<T>& x, const std::vector<std::size_t>& factor);

/// Coarse spectrum seen after stride sampling: Y_k = s^{-1/2} sum_m X_{k + m M}
/// on each transformed axis. Input and output are in Natural layout.
Spectrum aliasing_fold(const Spectrum& fine, const std::vector<std::size_t>& coarse_n);

enum class ProbeActivation { Gelu, Square, Tanh };

double apply_probe_activation(ProbeActivation a, double x);

struct BandwidthLevel {
  std::size_t resolution = 0;
  /// |a_k|^2 with a_k = X_k / sqrt(N) (function coefficients), indexed by
  /// signed mode k = -N/2 .. N/2 - 1 in centered order.
  std::vector<long> modes;
  std::vector<double> power;
  /// Largest |k| whose power exceeds 1e-20 of the total.
  long max_mode = 0;
  /// ||coarse low band - finest truncated low band|| / ||finest truncated low band||;
  /// zero for the finest level.
  double aliased_energy = 0.0;
};

struct BandwidthReport {
  ProbeActivation activation = ProbeActivation::Gelu;
  std::vector<BandwidthLevel> levels;
};

/// Resamples a band-limited 1-D signal to each resolution, applies the
/// activation pointwise, and compares spectra against the finest resolution.
BandwidthReport nonlinearity_bandwidth_probe(const RealTensor& signal, ProbeActivation activation,
                                             std::vector<std::size_t> resolutions);

void write_bandwidth_csv(std::ostream& os, const BandwidthReport& report);

enum class NyquistSeverity { Ok, Soft, Hard };

struct NyquistAxisReport {
  std::size_t axis = 0;
  std::size_t n_modes = 0;
  std::size_t resolution = 0;
  NyquistSeverity severity = NyquistSeverity::Ok;
  std::string message;
};

struct NyquistReport {
  std::vector<NyquistAxisReport> axes;
  bool ok() const;            // no hard violation
  bool has_warning() const;   // any soft warning
  std::string summary() const;
};

/// Hard violation when n_modes exceeds the resolution; soft warning when it
/// exceeds `soft_ratio` times the resolution.
NyquistReport validate_nyquist(const std::vector<std::size_t>& n_modes, const GridSpec& grid,
                               double soft_ratio = 0.5);

void write_nyquist_csv(std::ostream& os, const NyquistReport& report);

}  // namespace sok
