#include "sok/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>

#include <json.hpp>

#include "binio.hpp"
#include "sok/fft.hpp"
#include "sok/spectral_ops.hpp"

namespace sok {

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
  // splitmix64 over a mix of both words
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (index + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

GridSpec GrfSpec::grid() const { return GridSpec::periodic_box(std::vector<std::size_t>(dim, resolution), length); }

void GrfSpec::validate() const {
  if (dim < 1 || dim > 3) throw ShapeError("grf: dim must be 1, 2 or 3");
  if (resolution < 4) throw ShapeError("grf: resolution must be >= 4");
  if (k_max < 1) throw ShapeError("grf: k_max must be >= 1");
  if (2 * k_max >= resolution) {
    throw NyquistError("grf: k_max " + std::to_string(k_max) + " needs resolution > " + std::to_string(2 * k_max));
  }
  if (!(length > 0)) throw ShapeError("grf: domain length must be positive");
}

namespace {

// Visits every multi-index of the trailing `d` axes of shape; f(flat, signed k per axis).
void for_each_mode(const Shape& shape, std::size_t d, const std::function<void(std::size_t, const std::vector<long>&)>& f) {
  const std::size_t rank = shape.size();
  std::size_t inner = 1;
  for (std::size_t a = rank - d; a < rank; ++a) inner *= shape[a];
  std::vector<long> k(d);
  const std::size_t total = shape_size(shape);
  for (std::size_t flat = 0; flat < total; ++flat) {
    std::size_t r = flat % inner;
    for (std::size_t j = d; j-- > 0;) {
      const std::size_t n = shape[rank - d + j];
      k[j] = signed_frequency(r % n, n);
      r /= n;
    }
    f(flat, k);
  }
}

// Multiplies the spectrum of u on the trailing grid axes by symbol(k).
RealTensor apply_symbol(const RealTensor& u, const GridSpec& grid,
                        const std::function<Complex(const std::vector<double>&)>& symbol) {
  const std::size_t d = grid.rank();
  if (u.rank() < d) throw ShapeError("field rank below grid rank");
  for (std::size_t j = 0; j < d; ++j) {
    if (u.extent(u.rank() - d + j) != grid.resolution[j]) throw ShapeError("field/grid resolution mismatch");
  }
  const auto axes = trailing_axes(u.rank(), d);
  ComplexTensor spec = fft_axes(to_complex(u), axes);
  std::vector<double> kw(d);
  for_each_mode(spec.shape(), d, [&](std::size_t flat, const std::vector<long>& k) {
    for (std::size_t j = 0; j < d; ++j) kw[j] = grid.wavenumber(j, k[j]);
    spec[flat] *= symbol(kw);
  });
  return real_part(ifft_axes(std::move(spec), axes));
}

double norm2(const std::vector<double>& k) {
  double s = 0;
  for (double v : k) s += v * v;
  return s;
}

}  // namespace

ComplexTensor grf_coefficients(const GrfSpec& spec, std::uint64_t index) {
  spec.validate();
  const Shape shape(spec.dim, spec.resolution);
  const std::size_t total = shape_size(shape);
  std::mt19937_64 rng(derive_seed(spec.seed, index));
  std::normal_distribution<double> g;
  // c_k over the box |k_j| <= k_max, drawn in a fixed order that does not
  // depend on the grid, so one seed gives the same function at every N
  const long km = static_cast<long>(spec.k_max);
  const std::size_t side = 2 * spec.k_max + 1;
  std::vector<Complex> c(static_cast<std::size_t>(std::pow(double(side), double(spec.dim)) + 0.5));
  for (auto& z : c) {
    const double re = g(rng);
    const double im = g(rng);
    z = Complex(re, im) / std::numbers::sqrt2;
  }
  ComplexTensor a(shape, Complex(0.0));
  const double scale = std::sqrt(static_cast<double>(total));  // function -> orthonormal coefficients
  for_each_mode(shape, spec.dim, [&](std::size_t flat, const std::vector<long>& k) {
    double k2 = 0;
    std::size_t box = 0, mirror = 0;
    for (long kj : k) {
      if (std::labs(kj) > km) return;
      k2 += double(kj) * double(kj);
      box = box * side + static_cast<std::size_t>(kj + km);
      mirror = mirror * side + static_cast<std::size_t>(km - kj);
    }
    if (k2 == 0.0) return;
    const double amp = spec.amplitude * std::pow(std::sqrt(k2), -spec.gamma);
    // Hermitian part of c keeps E|a_k|^2 = amp^2
    a[flat] = scale * amp * (c[box] + std::conj(c[mirror])) / std::numbers::sqrt2;
  });
  return a;
}

RealTensor sample_grf(const GrfSpec& spec, std::uint64_t index) {
  const auto a = grf_coefficients(spec, index);
  std::vector<std::size_t> axes(spec.dim);
  std::iota(axes.begin(), axes.end(), 0);
  return real_part(ifft_axes(a, axes));
}

RealTensor heat_operator_exact(const RealTensor& u0, double nu, double t, const GridSpec& grid) {
  if (nu < 0 || t < 0) throw ShapeError("heat: nu and t must be non-negative");
  if (!grid.all_periodic()) throw ShapeError("heat: periodic grid required");
  if (nu == 0.0 || t == 0.0) return u0;
  return apply_symbol(u0, grid, [&](const std::vector<double>& k) { return Complex(std::exp(-nu * norm2(k) * t)); });
}

double relative_mean(const RealTensor& f) {
  double s = 0, q = 0;
  for (double v : f.data()) {
    s += v;
    q += v * v;
  }
  const double n = static_cast<double>(f.size());
  if (q == 0.0) return 0.0;
  return (s / n) / std::sqrt(q / n);
}

RealTensor poisson_solve_exact(const RealTensor& f, const GridSpec& grid, double mean_tol) {
  if (!grid.all_periodic()) throw ShapeError("poisson: periodic grid required");
  // solvability per field (leading axes are independent samples)
  const std::size_t pts = grid.points();
  for (std::size_t s = 0; s < f.size() / pts; ++s) {
    RealTensor one({pts}, std::vector<double>(f.data().begin() + long(s * pts), f.data().begin() + long((s + 1) * pts)));
    const double m = relative_mean(one);
    if (std::abs(m) > mean_tol) {
      throw NumericalError("poisson: source has nonzero mean (mean/rms = " + std::to_string(m) +
                           "); a periodic solution needs mean(f) = 0");
    }
  }
  return apply_symbol(f, grid, [](const std::vector<double>& k) {
    const double k2 = norm2(k);
    return k2 == 0.0 ? Complex(0.0) : Complex(1.0 / k2);
  });
}

RealTensor burgers_step(const RealTensor& u, double nu, double dt, const GridSpec& grid) {
  if (grid.rank() != 1 || u.rank() != 1 || u.extent(0) != grid.resolution[0]) {
    throw ShapeError("burgers: 1D field on a matching grid expected");
  }
  const std::size_t n = u.extent(0);
  const std::size_t ax[] = {0};
  std::vector<double> k(n), e(n), e2(n);
  std::vector<bool> keep(n);
  for (std::size_t j = 0; j < n; ++j) {
    const long kk = signed_frequency(j, n);
    k[j] = grid.wavenumber(0, kk);
    e[j] = std::exp(-nu * k[j] * k[j] * dt);
    e2[j] = std::exp(-nu * k[j] * k[j] * dt / 2);
    // 2/3 rule: keep |k| < N/3; the Nyquist mode never survives
    keep[j] = 3 * static_cast<std::size_t>(std::labs(kk)) < n && !(n % 2 == 0 && j == n / 2);
  }
  // N(v) = -i k/2 FFT(u^2), both factors and the product dealiased
  auto nonlinear = [&](const ComplexTensor& vh) {
    ComplexTensor w = vh;
    for (std::size_t j = 0; j < n; ++j) {
      if (!keep[j]) w[j] = 0.0;
    }
    w = ifft_axes(std::move(w), ax);
    for (auto& z : w.storage()) z = Complex(z.real() * z.real(), 0.0);
    w = fft_axes(std::move(w), ax);
    for (std::size_t j = 0; j < n; ++j) w[j] = keep[j] ? Complex(0.0, -0.5 * k[j]) * w[j] : Complex(0.0);
    return w;
  };
  ComplexTensor v = fft_axes(to_complex(u), ax);
  auto lin = [&](const std::vector<double>& f, const ComplexTensor& x) {
    ComplexTensor y = x;
    for (std::size_t j = 0; j < n; ++j) y[j] *= f[j];
    return y;
  };
  auto axpy = [&](const ComplexTensor& x, double a, const ComplexTensor& y) {
    ComplexTensor z = x;
    for (std::size_t j = 0; j < n; ++j) z[j] += a * y[j];
    return z;
  };
  ComplexTensor a = nonlinear(v);
  for (auto& z : a.storage()) z *= dt;
  ComplexTensor b = nonlinear(lin(e2, axpy(v, 0.5, a)));
  for (auto& z : b.storage()) z *= dt;
  ComplexTensor c = nonlinear(axpy(lin(e2, v), 0.5, b));
  for (auto& z : c.storage()) z *= dt;
  ComplexTensor d = nonlinear(axpy(lin(e, v), 1.0, lin(e2, c)));
  for (auto& z : d.storage()) z *= dt;
  ComplexTensor next(v.shape());
  for (std::size_t j = 0; j < n; ++j) {
    next[j] = e[j] * v[j] + (e[j] * a[j] + 2.0 * e2[j] * (b[j] + c[j]) + d[j]) / 6.0;
  }
  return real_part(ifft_axes(std::move(next), ax));
}

RealTensor burgers_solve(const RealTensor& u0, double nu, double dt, std::size_t steps, const GridSpec& grid) {
  RealTensor u = u0;
  for (std::size_t s = 0; s < steps; ++s) u = burgers_step(u, nu, dt, grid);
  return u;
}

// ---------------------------------------------------------------------------
// downsampling

std::string_view to_string(DownsampleStrategy s) {
  switch (s) {
    case DownsampleStrategy::Stride: return "stride";
    case DownsampleStrategy::Spectral: return "spectral";
    case DownsampleStrategy::LowPassThenStride: return "lowpass-stride";
    case DownsampleStrategy::MeanPool: return "mean-pool";
    case DownsampleStrategy::MaxPool: return "max-pool";
    case DownsampleStrategy::LinearInterp: return "linear";
  }
  return "?";
}

DownsampleStrategy parse_downsample(std::string_view s) {
  if (s == "stride") return DownsampleStrategy::Stride;
  if (s == "spectral") return DownsampleStrategy::Spectral;
  if (s == "lowpass-stride" || s == "lowpass") return DownsampleStrategy::LowPassThenStride;
  if (s == "mean-pool" || s == "mean") return DownsampleStrategy::MeanPool;
  if (s == "max-pool" || s == "max") return DownsampleStrategy::MaxPool;
  if (s == "linear" || s == "linear-interp") return DownsampleStrategy::LinearInterp;
  throw ShapeError("unknown downsample strategy '" + std::string(s) + "'");
}

namespace {

// Applies a 1-D reduction along one axis: out line of length m from in line of length n.
RealTensor along_axis(const RealTensor& x, std::size_t axis, std::size_t m,
                      const std::function<void(const std::vector<double>&, std::vector<double>&)>& f) {
  const Shape& s = x.shape();
  const std::size_t n = s[axis];
  std::size_t inner = 1, outer = 1;
  for (std::size_t a = axis + 1; a < s.size(); ++a) inner *= s[a];
  for (std::size_t a = 0; a < axis; ++a) outer *= s[a];
  Shape os = s;
  os[axis] = m;
  RealTensor out(os);
  std::vector<double> line(n), res(m);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t i = 0; i < inner; ++i) {
      for (std::size_t j = 0; j < n; ++j) line[j] = x[(o * n + j) * inner + i];
      f(line, res);
      for (std::size_t j = 0; j < m; ++j) out[(o * m + j) * inner + i] = res[j];
    }
  return out;
}

}  // namespace

RealTensor downsample(const RealTensor& field, DownsampleStrategy strategy, std::size_t factor, std::size_t dims) {
  if (dims < 1 || dims > field.rank()) throw ShapeError("downsample: bad number of axes");
  if (factor < 1) throw ShapeError("downsample: factor must be >= 1");
  const auto axes = trailing_axes(field.rank(), dims);
  std::vector<std::size_t> coarse;
  for (auto a : axes) {
    if (field.extent(a) % factor != 0) {
      throw ShapeError("downsample: factor " + std::to_string(factor) + " does not divide " +
                       std::to_string(field.extent(a)));
    }
    coarse.push_back(field.extent(a) / factor);
  }
  if (factor == 1) return field;
  const std::vector<std::size_t> fac(dims, factor);
  switch (strategy) {
    case DownsampleStrategy::Stride: return stride_downsample(field, fac);
    case DownsampleStrategy::Spectral: return spectral_resample(field, coarse);
    case DownsampleStrategy::LowPassThenStride: {
      // ideal filter onto the coarse band; a coarse Nyquist mode keeps half of
      // each of its two fine images, which is what the coarse grid can hold
      ComplexTensor spec = fft_axes(to_complex(field), axes);
      for_each_mode(spec.shape(), dims, [&](std::size_t flat, const std::vector<long>& k) {
        double w = 1.0;
        for (std::size_t j = 0; j < dims; ++j) {
          const long m = static_cast<long>(coarse[j]);
          const long ak = std::labs(k[j]);
          if (2 * ak > m) w = 0.0;
          else if (m % 2 == 0 && 2 * ak == m) w *= 0.5;
        }
        spec[flat] *= w;
      });
      return stride_downsample(real_part(ifft_axes(std::move(spec), axes)), fac);
    }
    case DownsampleStrategy::MeanPool:
    case DownsampleStrategy::MaxPool: {
      const bool mean = strategy == DownsampleStrategy::MeanPool;
      RealTensor x = field;
      for (std::size_t j = 0; j < dims; ++j) {
        x = along_axis(x, axes[j], coarse[j], [&](const std::vector<double>& in, std::vector<double>& out) {
          for (std::size_t c = 0; c < out.size(); ++c) {
            double acc = mean ? 0.0 : -HUGE_VAL;
            for (std::size_t q = 0; q < factor; ++q) {
              const double v = in[c * factor + q];
              acc = mean ? acc + v : std::max(acc, v);
            }
            out[c] = mean ? acc / double(factor) : acc;
          }
        });
      }
      return x;
    }
    case DownsampleStrategy::LinearInterp: {
      // periodic linear interpolation at the block centres (the points a
      // pooled value represents): fine coordinate c*s + (s-1)/2
      RealTensor x = field;
      for (std::size_t j = 0; j < dims; ++j) {
        x = along_axis(x, axes[j], coarse[j], [&](const std::vector<double>& in, std::vector<double>& out) {
          const std::size_t n = in.size();
          for (std::size_t c = 0; c < out.size(); ++c) {
            const double pos = double(c * factor) + 0.5 * double(factor - 1);
            const auto i0 = static_cast<std::size_t>(std::floor(pos));
            const double t = pos - double(i0);
            out[c] = (1 - t) * in[i0 % n] + t * in[(i0 + 1) % n];
          }
        });
      }
      return x;
    }
  }
  return field;
}

// ---------------------------------------------------------------------------
// stats

ChannelStats compute_channel_stats(const RealTensor& fields) {
  if (fields.rank() < 2) throw ShapeError("stats: fields must be [S, C, ...]");
  const std::size_t S = fields.extent(0), C = fields.extent(1), P = fields.size() / (S * C);
  ChannelStats st;
  st.mean.assign(C, 0.0);
  st.std.assign(C, 0.0);
  for (std::size_t c = 0; c < C; ++c) {
    double m = 0;
    for (std::size_t s = 0; s < S; ++s)
      for (std::size_t p = 0; p < P; ++p) m += fields[(s * C + c) * P + p];
    m /= double(S * P);
    double v = 0;
    for (std::size_t s = 0; s < S; ++s)
      for (std::size_t p = 0; p < P; ++p) {
        const double d = fields[(s * C + c) * P + p] - m;
        v += d * d;
      }
    v /= double(S * P);
    st.mean[c] = m;
    st.std[c] = v > 0 ? std::sqrt(v) : 1.0;  // constant channel: leave the scale alone
  }
  return st;
}

namespace {

RealTensor affine_channels(const RealTensor& x, const ChannelStats& st, bool forward) {
  if (st.empty()) return x;
  if (x.rank() < 2 || x.extent(1) != st.mean.size()) throw ShapeError("normalize: channel count mismatch");
  const std::size_t S = x.extent(0), C = x.extent(1), P = x.size() / (S * C);
  RealTensor y = x;
  for (std::size_t s = 0; s < S; ++s)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t p = 0; p < P; ++p) {
        double& v = y[(s * C + c) * P + p];
        v = forward ? (v - st.mean[c]) / st.std[c] : v * st.std[c] + st.mean[c];
      }
  return y;
}

}  // namespace

RealTensor normalize(const RealTensor& fields, const ChannelStats& stats) { return affine_channels(fields, stats, true); }
RealTensor denormalize(const RealTensor& fields, const ChannelStats& stats) {
  return affine_channels(fields, stats, false);
}

// ---------------------------------------------------------------------------
// datasets

namespace {

template <class T>
Tensor<T> leading_slice(const Tensor<T>& x, std::size_t begin, std::size_t end) {
  Shape s = x.shape();
  const std::size_t per = x.size() / s[0];
  s[0] = end - begin;
  return Tensor<T>(s, std::vector<T>(x.data().begin() + long(begin * per), x.data().begin() + long(end * per)));
}

}  // namespace

void Dataset::compute_stats() {
  if (n_train == 0 || n_train > samples()) throw ShapeError("dataset: training split must be non-empty");
  input_stats = compute_channel_stats(leading_slice(inputs, 0, n_train));
  output_stats = compute_channel_stats(leading_slice(outputs, 0, n_train));
}

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
  if (begin >= end || end > samples()) throw ShapeError("dataset: bad slice");
  Dataset d = *this;
  d.inputs = leading_slice(inputs, begin, end);
  d.outputs = leading_slice(outputs, begin, end);
  d.n_train = std::min(end, n_train) > begin ? std::min(end, n_train) - begin : 0;
  return d;
}

Dataset generate_dataset(const GenSpec& spec) {
  spec.grf.validate();
  if (spec.samples < 1) throw ShapeError("gen: need at least one sample");
  const GridSpec grid = spec.grf.grid();
  Dataset ds;
  ds.problem = spec.problem;
  ds.grid = grid;
  ds.n_train = spec.n_train == 0 ? spec.samples : spec.n_train;
  if (ds.n_train > spec.samples) throw ShapeError("gen: n_train exceeds the sample count");
  ds.attrs = {{"gamma", spec.grf.gamma},
              {"k_max", double(spec.grf.k_max)},
              {"amplitude", spec.grf.amplitude},
              {"seed", double(spec.grf.seed)}};
  Shape field(spec.grf.dim, spec.grf.resolution);
  Shape s{spec.samples, 1};
  s.insert(s.end(), field.begin(), field.end());
  ds.inputs = RealTensor(s);
  ds.outputs = RealTensor(s);
  const std::size_t per = shape_size(field);
  std::function<RealTensor(const RealTensor&)> op;
  if (spec.problem == "heat") {
    ds.attrs["nu"] = spec.nu;
    ds.attrs["t"] = spec.t;
    op = [&](const RealTensor& a) { return heat_operator_exact(a, spec.nu, spec.t, grid); };
  } else if (spec.problem == "poisson") {
    op = [&](const RealTensor& a) { return poisson_solve_exact(a, grid, 1e-8); };
  } else if (spec.problem == "burgers") {
    if (spec.grf.dim != 1) throw ShapeError("gen: burgers is 1D only");
    ds.attrs["nu"] = spec.nu;
    ds.attrs["dt"] = spec.dt;
    ds.attrs["steps"] = double(spec.steps);
    ds.attrs["t"] = spec.dt * double(spec.steps);
    op = [&](const RealTensor& a) { return burgers_solve(a, spec.nu, spec.dt, spec.steps, grid); };
  } else {
    throw ShapeError("gen: unknown problem '" + spec.problem + "' (heat | poisson | burgers)");
  }
  for (std::size_t i = 0; i < spec.samples; ++i) {
    const RealTensor a = sample_grf(spec.grf, i);
    const RealTensor u = op(a);
    std::copy(a.data().begin(), a.data().end(), ds.inputs.data().begin() + long(i * per));
    std::copy(u.data().begin(), u.data().end(), ds.outputs.data().begin() + long(i * per));
  }
  ds.compute_stats();
  return ds;
}

bool dataset_band_limited(const Dataset& ds, std::size_t k_max, double tol) {
  const std::size_t d = ds.grid.rank();
  const auto axes = trailing_axes(ds.inputs.rank(), d);
  const ComplexTensor spec = fft_axes(to_complex(ds.inputs), axes);
  double outside = 0, total = 0;
  for_each_mode(spec.shape(), d, [&](std::size_t flat, const std::vector<long>& k) {
    const double p = std::norm(spec[flat]);
    total += p;
    for (long kk : k) {
      if (std::labs(kk) > static_cast<long>(k_max)) {
        outside += p;
        return;
      }
    }
  });
  return total == 0 || outside <= tol * total;
}

// ---------------------------------------------------------------------------
// FNOD IO

namespace {

constexpr char kMagic[4] = {'F', 'N', 'O', 'D'};
constexpr std::uint16_t kVersion = 1;

Shape per_sample(const RealTensor& t) { return Shape(t.shape().begin() + 1, t.shape().end()); }

}  // namespace

std::string dataset_header_json(const Dataset& ds, int indent) {
  nlohmann::ordered_json j;
  j["format"] = "FNOD";
  j["version"] = kVersion;
  j["problem"] = ds.problem;
  j["samples"] = ds.samples();
  j["n_train"] = ds.n_train;
  j["precision"] = ds.f32 ? "f32" : "f64";
  j["attrs"] = ds.attrs;
  j["input_shape"] = per_sample(ds.inputs);
  j["output_shape"] = per_sample(ds.outputs);
  j["grid"] = {{"resolution", ds.grid.resolution}, {"domain_length", ds.grid.domain_length},
               {"periodic", ds.grid.periodic}};
  j["input_stats"] = {{"mean", ds.input_stats.mean}, {"std", ds.input_stats.std}};
  j["output_stats"] = {{"mean", ds.output_stats.mean}, {"std", ds.output_stats.std}};
  return j.dump(indent);
}

void write_dataset(const std::filesystem::path& path, const Dataset& ds) {
  if (ds.samples() == 0 || ds.outputs.rank() == 0 || ds.outputs.extent(0) != ds.samples()) {
    throw ShapeError("write_dataset: inputs and outputs must hold the same number of samples");
  }
  {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open " + path.string() + " for writing");
    binio::Writer w(os);
    w.bytes(kMagic, 4);
    w.u16(kVersion);
    w.u16(ds.f32 ? 1 : 0);
    w.u64(ds.samples());
    w.u64(ds.n_train);
    w.str(ds.problem);
    w.u32(static_cast<std::uint32_t>(ds.attrs.size()));
    for (const auto& [k, v] : ds.attrs) {
      w.str(k);
      w.f64(v);
    }
    w.u64s(per_sample(ds.inputs));
    w.u64s(per_sample(ds.outputs));
    w.u64s(ds.grid.resolution);
    w.f64s(ds.grid.domain_length);
    w.u32(static_cast<std::uint32_t>(ds.grid.periodic.size()));
    for (bool p : ds.grid.periodic) w.u8(p ? 1 : 0);
    w.f64s(ds.input_stats.mean);
    w.f64s(ds.input_stats.std);
    w.f64s(ds.output_stats.mean);
    w.f64s(ds.output_stats.std);
    const std::size_t in_per = ds.inputs.size() / ds.samples(), out_per = ds.outputs.size() / ds.samples();
    for (std::size_t s = 0; s < ds.samples(); ++s) {
      for (std::size_t i = 0; i < in_per; ++i) {
        const double v = ds.inputs[s * in_per + i];
        ds.f32 ? w.f32(static_cast<float>(v)) : w.f64(v);
      }
      for (std::size_t i = 0; i < out_per; ++i) {
        const double v = ds.outputs[s * out_per + i];
        ds.f32 ? w.f32(static_cast<float>(v)) : w.f64(v);
      }
    }
    if (!os) throw FormatError("write failed for " + path.string());
  }
  std::ofstream js(path.string() + ".json");
  js << dataset_header_json(ds) << '\n';
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open dataset " + path.string());
  binio::Reader r(is, "dataset " + path.string());
  char magic[4];
  r.bytes(magic, 4);
  if (!std::equal(magic, magic + 4, kMagic)) throw FormatError(path.string() + " is not an FNOD dataset (bad magic)");
  const auto version = r.u16();
  if (version != kVersion) throw FormatError("dataset: unsupported version " + std::to_string(version));
  const auto flags = r.u16();
  if (flags & ~1u) throw FormatError("dataset: unknown flag bits " + std::to_string(flags));
  Dataset ds;
  ds.f32 = flags & 1u;
  const auto samples = r.u64();
  ds.n_train = r.u64();
  ds.problem = r.str();
  const auto na = r.count(4096);
  for (std::uint32_t i = 0; i < na; ++i) {
    auto k = r.str();
    ds.attrs[k] = r.f64();
  }
  const Shape in_shape = r.u64s();
  const Shape out_shape = r.u64s();
  std::vector<std::size_t> res = r.u64s();
  std::vector<double> len = r.f64s();
  std::vector<bool> per(r.count(16));
  for (std::size_t i = 0; i < per.size(); ++i) per[i] = r.u8() != 0;
  try {
    ds.grid = GridSpec(res, len, per);
  } catch (const ShapeError& e) {
    throw FormatError(std::string("dataset: invalid grid: ") + e.what());
  }
  ds.input_stats.mean = r.f64s();
  ds.input_stats.std = r.f64s();
  ds.output_stats.mean = r.f64s();
  ds.output_stats.std = r.f64s();
  if (samples == 0) throw IntegrityError("dataset: header declares zero samples");
  if (ds.n_train > samples) throw IntegrityError("dataset: n_train exceeds the sample count");
  for (auto e : in_shape) {
    if (e == 0) throw IntegrityError("dataset: zero extent in input shape");
  }
  for (auto e : out_shape) {
    if (e == 0) throw IntegrityError("dataset: zero extent in output shape");
  }
  const std::size_t in_per = shape_size(in_shape), out_per = shape_size(out_shape);
  const std::size_t word = ds.f32 ? 4 : 8;
  // the payload must be exactly what the header promises
  const auto here = is.tellg();
  is.seekg(0, std::ios::end);
  const auto end = is.tellg();
  is.seekg(here);
  const auto expected = static_cast<std::uintmax_t>(samples) * (in_per + out_per) * word;
  const auto actual = static_cast<std::uintmax_t>(end - here);
  if (actual != expected) {
    throw IntegrityError("dataset: header promises " + std::to_string(expected) + " payload bytes, file holds " +
                         std::to_string(actual));
  }
  Shape is_full = in_shape, os_full = out_shape;
  is_full.insert(is_full.begin(), samples);
  os_full.insert(os_full.begin(), samples);
  ds.inputs = RealTensor(is_full);
  ds.outputs = RealTensor(os_full);
  for (std::size_t s = 0; s < samples; ++s) {
    for (std::size_t i = 0; i < in_per; ++i) ds.inputs[s * in_per + i] = ds.f32 ? double(r.f32()) : r.f64();
    for (std::size_t i = 0; i < out_per; ++i) ds.outputs[s * out_per + i] = ds.f32 ? double(r.f32()) : r.f64();
  }
  return ds;
}

}  // namespace sok
