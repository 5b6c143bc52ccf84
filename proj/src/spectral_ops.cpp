#include "sok/spectral_ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <sstream>

namespace sok {

namespace {

std::vector<std::size_t> grid_axes(std::size_t rank, std::size_t spatial) { return trailing_axes(rank, spatial); }

// Visit every element, passing its multi-index restricted to `axes`.
template <class F>
void for_each_index(const Shape& shape, F&& f) {
  std::vector<std::size_t> idx(shape.size(), 0);
  const std::size_t total = shape_size(shape);
  for (std::size_t flat = 0; flat < total; ++flat) {
    f(flat, idx);
    for (std::size_t a = shape.size(); a-- > 0;) {
      if (++idx[a] < shape[a]) break;
      idx[a] = 0;
    }
  }
}

}  // namespace

ComplexTensor center_resize(const ComplexTensor& centered, std::span<const std::size_t> axes,
                            std::span<const std::size_t> extents) {
  if (axes.size() != extents.size()) throw ShapeError("center_resize: axes/extents mismatch");
  Shape out_shape = centered.shape();
  for (std::size_t i = 0; i < axes.size(); ++i) {
    if (axes[i] >= out_shape.size()) throw ShapeError("center_resize: axis out of range");
    if (extents[i] == 0) throw ShapeError("center_resize: zero extent");
    out_shape[axes[i]] = extents[i];
  }
  ComplexTensor out(out_shape);
  const Shape& in_shape = centered.shape();
  const std::size_t rank = in_shape.size();
  // per-axis signed offset: in index = out index + offset
  std::vector<long> offset(rank, 0);
  for (std::size_t i = 0; i < axes.size(); ++i) {
    const auto n = static_cast<long>(in_shape[axes[i]]);
    const auto m = static_cast<long>(extents[i]);
    offset[axes[i]] = n / 2 - m / 2;
  }
  const auto in_strides = centered.strides();
  for_each_index(out_shape, [&](std::size_t flat, const std::vector<std::size_t>& idx) {
    std::size_t in_off = 0;
    for (std::size_t a = 0; a < rank; ++a) {
      const long j = static_cast<long>(idx[a]) + offset[a];
      if (j < 0 || j >= static_cast<long>(in_shape[a])) return;
      in_off += static_cast<std::size_t>(j) * in_strides[a];
    }
    out[flat] = centered[in_off];
  });
  return out;
}

ComplexTensor spectral_resample(const ComplexTensor& signal, const std::vector<std::size_t>& new_resolution) {
  const auto axes = grid_axes(signal.rank(), new_resolution.size());
  for (std::size_t m : new_resolution) {
    if (m < 1) throw ShapeError("spectral_resample: resolution must be >= 1");
  }
  ComplexTensor spec = roll_axes(fft_axes(signal, axes), axes, true);
  double scale = 1.0;
  for (std::size_t i = 0; i < axes.size(); ++i) {
    scale *= std::sqrt(static_cast<double>(new_resolution[i]) / static_cast<double>(signal.extent(axes[i])));
  }
  ComplexTensor resized = center_resize(spec, axes, new_resolution);
  ComplexTensor out = ifft_axes(roll_axes(resized, axes, false), axes);
  for (auto& v : out.storage()) v *= scale;
  return out;
}

RealTensor spectral_resample(const RealTensor& signal, const std::vector<std::size_t>& new_resolution) {
  return real_part(spectral_resample(to_complex(signal), new_resolution));
}

ComplexTensor spectral_interpolate(const ComplexTensor& signal, const GridSpec& grid,
                                   const std::vector<std::size_t>& new_resolution) {
  grid.validate();
  if (!grid.all_periodic()) {
    throw ShapeError("spectral_interpolate needs a periodic grid; build a periodic extension first");
  }
  if (new_resolution.size() != grid.rank()) throw ShapeError("spectral_interpolate: rank mismatch");
  return spectral_resample(signal, new_resolution);
}

RealTensor spectral_interpolate(const RealTensor& signal, const GridSpec& grid,
                                const std::vector<std::size_t>& new_resolution) {
  return real_part(spectral_interpolate(to_complex(signal), grid, new_resolution));
}

ComplexTensor spectral_truncate(const ComplexTensor& signal, const std::vector<std::size_t>& new_resolution) {
  const auto axes = grid_axes(signal.rank(), new_resolution.size());
  for (std::size_t i = 0; i < axes.size(); ++i) {
    if (new_resolution[i] > signal.extent(axes[i])) {
      throw ShapeError("spectral_truncate cannot increase resolution; use spectral_interpolate");
    }
  }
  return spectral_resample(signal, new_resolution);
}

RealTensor spectral_truncate(const RealTensor& signal, const std::vector<std::size_t>& new_resolution) {
  return real_part(spectral_truncate(to_complex(signal), new_resolution));
}

ComplexTensor spectral_derivative(const ComplexTensor& signal, const GridSpec& grid, std::size_t axis, int order) {
  grid.validate();
  if (order < 0) throw ShapeError("spectral_derivative: negative order");
  if (!grid.all_periodic()) {
    throw ShapeError("spectral_derivative needs a periodic grid; build a periodic extension first");
  }
  if (axis >= grid.rank()) throw ShapeError("spectral_derivative: axis out of range");
  const auto axes = grid_axes(signal.rank(), grid.rank());
  const std::size_t tensor_axis = axes[axis];
  const std::size_t n = signal.extent(tensor_axis);
  if (n != grid.resolution[axis]) throw ShapeError("spectral_derivative: signal/grid resolution mismatch");
  if (order == 0) return signal;

  const std::size_t one_axis[] = {tensor_axis};
  ComplexTensor spec = fft_axes(signal, one_axis);
  std::vector<Complex> mult(n);
  for (std::size_t j = 0; j < n; ++j) {
    const long k = signed_frequency(j, n);
    const bool nyquist = (n % 2 == 0) && (j == n / 2);
    if (nyquist && order % 2 == 1) {
      mult[j] = 0.0;
    } else {
      mult[j] = std::pow(Complex(0.0, grid.wavenumber(axis, k)), order);
    }
  }
  const auto strides = spec.strides();
  const std::size_t stride = strides[tensor_axis];
  for (std::size_t i = 0; i < spec.size(); ++i) spec[i] *= mult[(i / stride) % n];
  return ifft_axes(std::move(spec), one_axis);
}

RealTensor spectral_derivative(const RealTensor& signal, const GridSpec& grid, std::size_t axis, int order) {
  return real_part(spectral_derivative(to_complex(signal), grid, axis, order));
}

ComplexTensor low_pass(const ComplexTensor& signal, const std::vector<std::size_t>& cutoff) {
  const auto axes = grid_axes(signal.rank(), cutoff.size());
  for (std::size_t i = 0; i < axes.size(); ++i) {
    if (cutoff[i] > signal.extent(axes[i]) / 2) {
      throw NyquistError("low_pass: cutoff " + std::to_string(cutoff[i]) + " above Nyquist " +
                         std::to_string(signal.extent(axes[i]) / 2));
    }
  }
  ComplexTensor spec = fft_axes(signal, axes);
  for_each_index(spec.shape(), [&](std::size_t flat, const std::vector<std::size_t>& idx) {
    for (std::size_t i = 0; i < axes.size(); ++i) {
      const long k = signed_frequency(idx[axes[i]], spec.extent(axes[i]));
      if (static_cast<std::size_t>(std::labs(k)) > cutoff[i]) {
        spec[flat] = 0.0;
        return;
      }
    }
  });
  return ifft_axes(std::move(spec), axes);
}

RealTensor low_pass(const RealTensor& signal, const std::vector<std::size_t>& cutoff) {
  return real_part(low_pass(to_complex(signal), cutoff));
}

template <class T>
Tensor<T> stride_downsample(const Tensor<T>& x, const std::vector<std::size_t>& factor) {
  const auto axes = grid_axes(x.rank(), factor.size());
  Shape out_shape = x.shape();
  for (std::size_t i = 0; i < axes.size(); ++i) {
    if (factor[i] == 0 || x.extent(axes[i]) % factor[i] != 0) {
      throw ShapeError("stride_downsample: factor " + std::to_string(factor[i]) + " does not divide " +
                       std::to_string(x.extent(axes[i])));
    }
    out_shape[axes[i]] = x.extent(axes[i]) / factor[i];
  }
  Tensor<T> out(out_shape);
  const auto in_strides = x.strides();
  std::vector<std::size_t> step(x.rank(), 1);
  for (std::size_t i = 0; i < axes.size(); ++i) step[axes[i]] = factor[i];
  for_each_index(out_shape, [&](std::size_t flat, const std::vector<std::size_t>& idx) {
    std::size_t off = 0;
    for (std::size_t a = 0; a < idx.size(); ++a) off += idx[a] * step[a] * in_strides[a];
    out[flat] = x[off];
  });
  return out;
}

template RealTensor stride_downsample(const RealTensor&, const std::vector<std::size_t>&);
template ComplexTensor stride_downsample(const ComplexTensor&, const std::vector<std::size_t>&);

Spectrum aliasing_fold(const Spectrum& fine, const std::vector<std::size_t>& coarse_n) {
  if (fine.layout != SpectrumLayout::Natural) throw LayoutError("aliasing_fold expects Natural layout");
  if (coarse_n.size() != fine.axes.size()) throw ShapeError("aliasing_fold: one coarse size per transformed axis");
  ComplexTensor cur = fine.coeffs;
  for (std::size_t i = 0; i < fine.axes.size(); ++i) {
    const std::size_t axis = fine.axes[i];
    const std::size_t n = cur.extent(axis);
    const std::size_t m = coarse_n[i];
    if (m == 0 || n % m != 0) {
      throw ShapeError("aliasing_fold: coarse size " + std::to_string(m) + " does not divide " + std::to_string(n));
    }
    const double scale = 1.0 / std::sqrt(static_cast<double>(n / m));
    Shape out_shape = cur.shape();
    out_shape[axis] = m;
    ComplexTensor out(out_shape);
    for_each_index(cur.shape(), [&](std::size_t flat, const std::vector<std::size_t>& idx) {
      std::size_t off = 0;
      for (std::size_t a = 0; a < idx.size(); ++a) off = off * out_shape[a] + (a == axis ? idx[a] % m : idx[a]);
      out[off] += cur[flat] * scale;
    });
    cur = std::move(out);
  }
  return Spectrum{std::move(cur), SpectrumLayout::Natural, fine.axes};
}

double apply_probe_activation(ProbeActivation a, double x) {
  switch (a) {
    case ProbeActivation::Gelu: return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2));
    case ProbeActivation::Square: return x * x;
    case ProbeActivation::Tanh: return std::tanh(x);
  }
  return x;
}

BandwidthReport nonlinearity_bandwidth_probe(const RealTensor& signal, ProbeActivation activation,
                                             std::vector<std::size_t> resolutions) {
  if (signal.rank() != 1) throw ShapeError("nonlinearity_bandwidth_probe expects a 1-D signal");
  if (resolutions.empty()) throw ShapeError("nonlinearity_bandwidth_probe: no resolutions");
  std::sort(resolutions.begin(), resolutions.end());
  BandwidthReport report;
  report.activation = activation;
  std::vector<ComplexTensor> centered;
  for (std::size_t n : resolutions) {
    RealTensor x = spectral_resample(signal, {n});
    for (auto& v : x.storage()) v = apply_probe_activation(activation, v);
    const std::size_t axis0[] = {0};
    ComplexTensor spec = roll_axes(fft_axes(to_complex(x), axis0), axis0, true);
    const double norm = 1.0 / std::sqrt(static_cast<double>(n));
    for (auto& c : spec.storage()) c *= norm;
    BandwidthLevel level;
    level.resolution = n;
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      level.modes.push_back(static_cast<long>(j) - static_cast<long>(n / 2));
      level.power.push_back(std::norm(spec[j]));
      total += level.power.back();
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (level.power[j] > 1e-20 * total) level.max_mode = std::max(level.max_mode, std::labs(level.modes[j]));
    }
    report.levels.push_back(std::move(level));
    centered.push_back(std::move(spec));
  }
  const ComplexTensor& finest = centered.back();
  for (std::size_t l = 0; l + 1 < centered.size(); ++l) {
    const std::size_t extent[] = {resolutions[l]};
    const std::size_t axis0[] = {0};
    ComplexTensor truncated = center_resize(finest, axis0, extent);
    double diff = 0.0;
    double ref = 0.0;
    for (std::size_t j = 0; j < truncated.size(); ++j) {
      diff += std::norm(centered[l][j] - truncated[j]);
      ref += std::norm(truncated[j]);
    }
    report.levels[l].aliased_energy = ref > 0.0 ? std::sqrt(diff / ref) : std::sqrt(diff);
  }
  return report;
}

void write_bandwidth_csv(std::ostream& os, const BandwidthReport& report) {
  os << "mode,power,resolution\n";
  os.precision(17);
  for (const auto& level : report.levels) {
    for (std::size_t j = 0; j < level.modes.size(); ++j) {
      os << level.modes[j] << ',' << level.power[j] << ",N" << level.resolution << '\n';
    }
  }
}

bool NyquistReport::ok() const {
  return std::none_of(axes.begin(), axes.end(), [](const auto& a) { return a.severity == NyquistSeverity::Hard; });
}

bool NyquistReport::has_warning() const {
  return std::any_of(axes.begin(), axes.end(), [](const auto& a) { return a.severity == NyquistSeverity::Soft; });
}

std::string NyquistReport::summary() const {
  std::ostringstream os;
  for (const auto& a : axes) {
    if (a.severity != NyquistSeverity::Ok) os << a.message << '\n';
  }
  return os.str();
}

NyquistReport validate_nyquist(const std::vector<std::size_t>& n_modes, const GridSpec& grid, double soft_ratio) {
  if (n_modes.size() != grid.rank()) throw ShapeError("validate_nyquist: one mode count per grid axis");
  NyquistReport report;
  for (std::size_t a = 0; a < n_modes.size(); ++a) {
    NyquistAxisReport r;
    r.axis = a;
    r.n_modes = n_modes[a];
    r.resolution = grid.resolution[a];
    std::ostringstream msg;
    if (n_modes[a] > grid.resolution[a]) {
      r.severity = NyquistSeverity::Hard;
      msg << "axis " << a << ": n_modes " << n_modes[a] << " exceeds resolution " << grid.resolution[a];
    } else if (static_cast<double>(n_modes[a]) > soft_ratio * static_cast<double>(grid.resolution[a])) {
      r.severity = NyquistSeverity::Soft;
      msg << "axis " << a << ": n_modes " << n_modes[a] << " above " << soft_ratio << " x resolution "
          << grid.resolution[a] << "; reduce modes for stable super-resolution";
    }
    r.message = msg.str();
    report.axes.push_back(std::move(r));
  }
  return report;
}

void write_nyquist_csv(std::ostream& os, const NyquistReport& report) {
  os << "axis,n_modes,resolution,severity\n";
  for (const auto& a : report.axes) {
    const char* sev = a.severity == NyquistSeverity::Ok ? "ok" : a.severity == NyquistSeverity::Soft ? "soft" : "hard";
    os << a.axis << ',' << a.n_modes << ',' << a.resolution << ',' << sev << '\n';
  }
}

}  // namespace sok
