#include "sok/fno.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <numbers>
#include <optional>

#include <json.hpp>

#include "binio.hpp"
#include "sok/fft.hpp"
#include "sok/spectral_ops.hpp"
#include "sok/tucker.hpp"

namespace sok {

using ad::Var;

// ---------------------------------------------------------------------------
// enums

std::string_view to_string(SkipKind k) {
  switch (k) {
    case SkipKind::Identity: return "identity";
    case SkipKind::Linear: return "linear";
    case SkipKind::SoftGating: return "soft-gating";
    case SkipKind::None: return "none";
  }
  return "?";
}

std::string_view to_string(NormKind k) { return k == NormKind::None ? "none" : "instance"; }
std::string_view to_string(Factorization k) { return k == Factorization::Dense ? "dense" : "tucker"; }

std::string_view to_string(ad::Activation a) {
  switch (a) {
    case ad::Activation::Identity: return "identity";
    case ad::Activation::Gelu: return "gelu";
    case ad::Activation::Relu: return "relu";
    case ad::Activation::Tanh: return "tanh";
  }
  return "?";
}

SkipKind parse_skip_kind(std::string_view s) {
  if (s == "identity") return SkipKind::Identity;
  if (s == "linear") return SkipKind::Linear;
  if (s == "soft-gating" || s == "soft_gating" || s == "softgating") return SkipKind::SoftGating;
  if (s == "none") return SkipKind::None;
  throw ShapeError("unknown skip kind '" + std::string(s) + "'");
}

NormKind parse_norm_kind(std::string_view s) {
  if (s == "none") return NormKind::None;
  if (s == "instance" || s == "instance_norm" || s == "instance-norm") return NormKind::InstanceNorm;
  throw ShapeError("unknown norm '" + std::string(s) + "'");
}

Factorization parse_factorization(std::string_view s) {
  if (s == "dense") return Factorization::Dense;
  if (s == "tucker") return Factorization::Tucker;
  throw ShapeError("unknown factorization '" + std::string(s) + "'");
}

ad::Activation parse_activation(std::string_view s) {
  if (s == "gelu") return ad::Activation::Gelu;
  if (s == "relu") return ad::Activation::Relu;
  if (s == "tanh") return ad::Activation::Tanh;
  if (s == "identity" || s == "linear") return ad::Activation::Identity;
  throw ShapeError("unknown activation '" + std::string(s) + "'");
}

// ---------------------------------------------------------------------------
// config

namespace {

std::size_t scaled_width(double ratio, std::size_t c) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(ratio * static_cast<double>(c))));
}

std::size_t product(const std::vector<std::size_t>& v) {
  return std::accumulate(v.begin(), v.end(), std::size_t{1}, std::multiplies<>());
}

bool near_integer(double x) { return std::abs(x - std::round(x)) < 1e-9 * std::max(1.0, std::abs(x)); }

}  // namespace

std::vector<std::size_t> FnoConfig::stored_modes() const { return max_n_modes.empty() ? n_modes : max_n_modes; }
std::size_t FnoConfig::lifting_hidden() const { return scaled_width(lifting_channel_ratio, hidden_channels); }
std::size_t FnoConfig::projection_hidden() const { return scaled_width(projection_channel_ratio, hidden_channels); }
std::size_t FnoConfig::mlp_hidden() const { return scaled_width(channel_mlp_expansion, hidden_channels); }

void FnoConfig::validate() const {
  if (n_modes.empty()) throw ShapeError("fno: n_modes must list at least one axis");
  for (auto k : n_modes) {
    if (k < 1) throw ShapeError("fno: n_modes entries must be >= 1");
  }
  if (!max_n_modes.empty()) {
    if (max_n_modes.size() != n_modes.size()) throw ShapeError("fno: max_n_modes needs one entry per axis");
    for (std::size_t j = 0; j < n_modes.size(); ++j) {
      if (n_modes[j] > max_n_modes[j]) {
        throw ShapeError("fno: n_modes[" + std::to_string(j) + "] = " + std::to_string(n_modes[j]) +
                         " exceeds max_n_modes " + std::to_string(max_n_modes[j]));
      }
    }
  }
  if (n_layers < 1) throw ShapeError("fno: n_layers must be >= 1");
  if (hidden_channels < 1 || in_channels < 1 || out_channels < 1) throw ShapeError("fno: channel counts must be >= 1");
  if (channel_mlp_expansion <= 0.0) throw ShapeError("fno: channel_mlp_expansion must be positive");
  if (!domain_padding.empty()) {
    if (domain_padding.size() != n_modes.size()) throw ShapeError("fno: domain_padding needs one fraction per axis");
    for (double f : domain_padding) {
      if (!(f >= 0.0 && f < 1.0)) throw ShapeError("fno: domain_padding fractions must lie in [0, 1)");
    }
  }
  if (!resolution_scaling_factor.empty()) {
    if (resolution_scaling_factor.size() != n_layers) {
      throw ShapeError("fno: resolution_scaling_factor needs one entry per layer (" + std::to_string(n_layers) + ")");
    }
    for (double s : resolution_scaling_factor) {
      if (!(s > 0.0)) throw ShapeError("fno: resolution scaling factors must be positive");
    }
  }
  if (factorization == Factorization::Tucker) {
    if (!(rank > 0.0 && rank <= 1.0)) throw ShapeError("fno: Tucker rank must lie in (0, 1]");
    if (separable) throw ShapeError("fno: separable Tucker weights are not supported");
  }
  if (dropout != 0.0) throw ShapeError("fno: dropout is not supported; set it to 0");
}

// ---------------------------------------------------------------------------
// ParamStore

std::size_t ParamStore::add(std::string name, RealTensor t) {
  if (by_name_.count(name)) throw ShapeError("duplicate parameter " + name);
  by_name_[name] = params_.size();
  params_.push_back(Param{std::move(name), false, std::move(t), {}});
  return params_.size() - 1;
}

std::size_t ParamStore::add(std::string name, ComplexTensor t) {
  if (by_name_.count(name)) throw ShapeError("duplicate parameter " + name);
  by_name_[name] = params_.size();
  params_.push_back(Param{std::move(name), true, {}, std::move(t)});
  return params_.size() - 1;
}

std::size_t ParamStore::index(const std::string& name) const {
  auto it = by_name_.find(name);
  if (it == by_name_.end()) throw ShapeError("no parameter named " + name);
  return it->second;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) {
    n += p.complex ? 2 * p.c.size() : p.r.size();
  }
  return n;
}

std::vector<double> ParamStore::flatten() const {
  std::vector<double> out;
  out.reserve(scalar_count());
  for (const auto& p : params_) {
    if (p.complex) {
      for (auto z : p.c.data()) {
        out.push_back(z.real());
        out.push_back(z.imag());
      }
    } else {
      out.insert(out.end(), p.r.data().begin(), p.r.data().end());
    }
  }
  return out;
}

void ParamStore::unflatten(std::span<const double> flat) {
  if (flat.size() != scalar_count()) throw ShapeError("unflatten: length mismatch");
  std::size_t i = 0;
  for (auto& p : params_) {
    if (p.complex) {
      for (auto& z : p.c.storage()) {
        z = Complex(flat[i], flat[i + 1]);
        i += 2;
      }
    } else {
      for (auto& x : p.r.storage()) x = flat[i++];
    }
  }
}

std::vector<Var> ParamStore::bind(ad::Tape& tape, bool trainable) const {
  std::vector<Var> out;
  out.reserve(params_.size());
  for (const auto& p : params_) {
    if (p.complex) {
      out.push_back(trainable ? tape.variable(p.c) : tape.constant(p.c));
    } else {
      out.push_back(trainable ? tape.variable(p.r) : tape.constant(p.r));
    }
  }
  return out;
}

std::vector<double> ParamStore::gather_grads(const ad::Tape& tape, const std::vector<Var>& bound) const {
  std::vector<double> out;
  out.reserve(scalar_count());
  for (std::size_t k = 0; k < params_.size(); ++k) {
    if (params_[k].complex) {
      const auto g = tape.cgrad(bound[k]);
      for (auto z : g.data()) {
        out.push_back(z.real());
        out.push_back(z.imag());
      }
    } else {
      auto g = tape.grad(bound[k]);
      out.insert(out.end(), g.data().begin(), g.data().end());
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// counting

std::size_t channel_mlp_param_count(std::size_t in, std::size_t out, std::size_t hidden, std::size_t n_layers) {
  if (n_layers == 0) throw ShapeError("channel MLP needs at least one layer");
  if (n_layers == 1) return out * (in + 1);
  if (n_layers == 2) return hidden * (in + 1) + out * (hidden + 1);
  return hidden * (in + 1) + (n_layers - 2) * hidden * (hidden + 1) + out * (hidden + 1);
}

std::size_t spectral_conv_param_count(std::size_t cin, std::size_t cout, const std::vector<std::size_t>& modes,
                                      std::size_t eta) {
  return eta * cin * cout * product(modes) + cout;
}

std::vector<std::size_t> tucker_conv_ranks(std::size_t cin, std::size_t cout, const std::vector<std::size_t>& modes,
                                           double rank) {
  return ranks_from_param_fraction(Shape{cin, cout, product(modes)}, rank);
}

std::size_t tucker_conv_param_count(std::size_t cin, std::size_t cout, const std::vector<std::size_t>& modes,
                                    double rank) {
  const auto r = tucker_conv_ranks(cin, cout, modes, rank);
  const std::size_t kf = product(modes);
  return 2 * (r[0] * r[1] * r[2] + kf * r[2] + cin * r[0] + cout * r[1]) + cout;
}

ParamCounts count_params(const FnoConfig& cfg) {
  cfg.validate();
  const std::size_t C = cfg.hidden_channels;
  const std::size_t wrap = cfg.complex_data ? 2 : 1;
  const auto K = cfg.stored_modes();
  ParamCounts pc;
  const std::size_t lift_layers = cfg.lifting_channel_ratio > 0 ? 2 : 1;
  const std::size_t proj_layers = cfg.projection_channel_ratio > 0 ? 2 : 1;
  pc.lifting = wrap * channel_mlp_param_count(cfg.in_channels, C, cfg.lifting_hidden(), lift_layers);
  pc.projection = wrap * channel_mlp_param_count(C, cfg.out_channels, cfg.projection_hidden(), proj_layers);

  std::size_t weights = 0;  // real scalars of complex weights per layer
  if (cfg.factorization == Factorization::Tucker) {
    weights = tucker_conv_param_count(C, C, K, cfg.rank) - C;
  } else if (cfg.separable) {
    weights = 2 * C * C * std::accumulate(K.begin(), K.end(), std::size_t{0});
  } else {
    weights = 2 * C * C * product(K);
  }
  const std::size_t bias = wrap * C;
  pc.spectral = cfg.n_layers * (weights + bias);
  pc.spectral_effective = cfg.complex_data ? pc.spectral : cfg.n_layers * (weights / 2 + bias);

  pc.channel_mlp = cfg.n_layers * wrap * channel_mlp_param_count(C, C, cfg.mlp_hidden(), 2);
  auto skip_count = [&](SkipKind k) -> std::size_t {
    switch (k) {
      case SkipKind::Linear: return wrap * C * C;
      case SkipKind::SoftGating: return wrap * 2 * C;
      default: return 0;
    }
  };
  pc.fno_skip = cfg.n_layers * skip_count(cfg.fno_skip);
  pc.mlp_skip = cfg.n_layers * skip_count(cfg.channel_mlp_skip);
  const std::size_t rest = pc.lifting + pc.projection + pc.channel_mlp + pc.fno_skip + pc.mlp_skip;
  pc.total = rest + pc.spectral;
  pc.total_effective = rest + pc.spectral_effective;
  return pc;
}

// ---------------------------------------------------------------------------
// spectral conv on the tape

namespace {

std::vector<std::size_t> spatial_of(const Shape& s) { return {s.begin() + 2, s.end()}; }

std::vector<std::size_t> range_axes(std::size_t from, std::size_t count) {
  std::vector<std::size_t> a(count);
  std::iota(a.begin(), a.end(), from);
  return a;
}

void check_modes(const std::vector<std::size_t>& n_modes, const std::vector<std::size_t>& res, const char* who) {
  if (n_modes.size() != res.size()) {
    throw ShapeError(std::string(who) + ": " + std::to_string(n_modes.size()) + " mode counts for a " +
                     std::to_string(res.size()) + "-d field");
  }
  for (std::size_t j = 0; j < res.size(); ++j) {
    if (n_modes[j] > res[j]) {
      throw NyquistError(std::string(who) + ": n_modes[" + std::to_string(j) + "] = " + std::to_string(n_modes[j]) +
                         " exceeds resolution " + std::to_string(res[j]));
    }
  }
}

// fft -> centered -> K block
Var to_mode_block(Var x, const std::vector<std::size_t>& n_modes) {
  const auto axes = range_axes(2, n_modes.size());
  Var z = ad::fft(ad::to_complex(x), axes);
  z = ad::roll(z, axes, true);
  return ad::center_resize(z, axes, n_modes);
}

// K block -> embed at out_res -> ifft, rescaled so function values are kept
Var from_mode_block(Var y, const std::vector<std::size_t>& in_res, const std::vector<std::size_t>& out_res,
                    bool keep_complex) {
  const auto axes = range_axes(2, out_res.size());
  y = ad::center_resize(y, axes, out_res);
  y = ad::roll(y, axes, false);
  y = ad::fft(y, axes, true);
  double factor = 1.0;
  for (std::size_t j = 0; j < out_res.size(); ++j) {
    factor *= std::sqrt(static_cast<double>(out_res[j]) / static_cast<double>(in_res[j]));
  }
  if (factor != 1.0) y = ad::scale(y, factor);
  return keep_complex ? y : ad::real_part(y);
}

}  // namespace

Var spectral_conv(Var x, Var weight, const std::vector<std::size_t>& n_modes,
                  const std::vector<std::size_t>& out_res_in) {
  const Shape& xs = x.shape();
  const Shape& ws = weight.shape();
  const std::size_t d = n_modes.size();
  if (xs.size() != d + 2) throw ShapeError("spectral_conv: x " + shape_string(xs) + " is not [B, C, N...]");
  if (ws.size() != d + 2 || ws[0] != xs[1]) {
    throw ShapeError("spectral_conv: weight " + shape_string(ws) + " does not fit x " + shape_string(xs));
  }
  const auto res = spatial_of(xs);
  check_modes(n_modes, res, "spectral_conv");
  for (std::size_t j = 0; j < d; ++j) {
    if (ws[2 + j] < n_modes[j]) throw ShapeError("spectral_conv: weight holds fewer modes than requested");
  }
  const auto out_res = out_res_in.empty() ? res : out_res_in;
  if (out_res.size() != d) throw ShapeError("spectral_conv: out_res rank mismatch");
  Var w = weight;
  if (spatial_of(ws) != n_modes) w = ad::center_resize(weight, range_axes(2, d), n_modes);
  Var y = ad::mode_mix(to_mode_block(x, n_modes), w);
  return from_mode_block(y, res, out_res, x.is_complex());
}

Var separable_spectral_conv(Var x, const std::vector<Var>& weights, const std::vector<std::size_t>& n_modes,
                            const std::vector<std::size_t>& out_res_in) {
  const Shape& xs = x.shape();
  const std::size_t d = n_modes.size();
  if (xs.size() != d + 2) throw ShapeError("separable_spectral_conv: x is not [B, C, N...]");
  if (weights.size() != d) throw ShapeError("separable_spectral_conv: one weight per axis expected");
  const auto res = spatial_of(xs);
  check_modes(n_modes, res, "separable_spectral_conv");
  const auto out_res = out_res_in.empty() ? res : out_res_in;
  Var y = to_mode_block(x, n_modes);
  for (std::size_t j = 0; j < d; ++j) {
    Var w = weights[j];
    if (w.shape().size() != 3) throw ShapeError("separable_spectral_conv: per-axis weights are [Cin, Cout, K_j]");
    if (w.shape()[2] < n_modes[j]) throw ShapeError("separable_spectral_conv: weight holds fewer modes than requested");
    if (w.shape()[2] != n_modes[j]) w = ad::center_resize(w, {2}, {n_modes[j]});
    y = ad::mode_mix_axis(y, w, 2 + j);
  }
  return from_mode_block(y, res, out_res, x.is_complex());
}

std::vector<std::size_t> padded_resolution(const std::vector<std::size_t>& res, const std::vector<double>& fractions) {
  if (fractions.empty()) return res;
  if (fractions.size() != res.size()) throw ShapeError("domain_pad: one fraction per axis expected");
  std::vector<std::size_t> out(res.size());
  for (std::size_t j = 0; j < res.size(); ++j) {
    if (!(fractions[j] >= 0.0 && fractions[j] < 1.0)) throw ShapeError("domain_pad: fractions must lie in [0, 1)");
    out[j] = res[j] + static_cast<std::size_t>(std::lround(static_cast<double>(res[j]) * fractions[j]));
  }
  return out;
}

Var domain_pad(Var x, const std::vector<double>& fractions) {
  const auto res = spatial_of(x.shape());
  const auto padded = padded_resolution(res, fractions);
  if (padded == res) return x;
  return ad::corner_resize(x, range_axes(2, res.size()), padded);
}

Var domain_unpad(Var x, const std::vector<std::size_t>& original_res) {
  const auto res = spatial_of(x.shape());
  if (res == original_res) return x;
  if (original_res.size() != res.size()) throw ShapeError("domain_unpad: rank mismatch");
  for (std::size_t j = 0; j < res.size(); ++j) {
    if (original_res[j] > res[j]) throw ShapeError("domain_unpad: target larger than the padded field");
  }
  return ad::corner_resize(x, range_axes(2, res.size()), original_res);
}

// ---------------------------------------------------------------------------
// eager wrappers

namespace {

template <class T>
Tensor<T> add_batch(const Tensor<T>& x) {
  Shape s = x.shape();
  s.insert(s.begin(), 1);
  return x.reshaped(s);
}

template <class T>
Tensor<T> drop_batch(const Tensor<T>& x) {
  Shape s(x.shape().begin() + 1, x.shape().end());
  return x.reshaped(s);
}

}  // namespace

RealTensor spectral_conv_forward(const RealTensor& x, const ComplexTensor& weight,
                                 const std::vector<std::size_t>& n_modes, const std::vector<std::size_t>& out_res) {
  ad::Tape t;
  return drop_batch(spectral_conv(t.constant(add_batch(x)), t.constant(weight), n_modes, out_res).value());
}

ComplexTensor spectral_conv_forward(const ComplexTensor& x, const ComplexTensor& weight,
                                    const std::vector<std::size_t>& n_modes, const std::vector<std::size_t>& out_res) {
  ad::Tape t;
  return drop_batch(spectral_conv(t.constant(add_batch(x)), t.constant(weight), n_modes, out_res).cvalue());
}

RealTensor separable_spectral_conv_forward(const RealTensor& x, const std::vector<ComplexTensor>& weights,
                                           const std::vector<std::size_t>& n_modes,
                                           const std::vector<std::size_t>& out_res) {
  ad::Tape t;
  std::vector<Var> w;
  for (const auto& wi : weights) w.push_back(t.constant(wi));
  return drop_batch(separable_spectral_conv(t.constant(add_batch(x)), w, n_modes, out_res).value());
}

RealTensor channel_mlp_forward(const RealTensor& x, const std::vector<RealTensor>& weights,
                               const std::vector<RealTensor>& biases, ad::Activation act, double dropout) {
  if (dropout != 0.0) throw ShapeError("channel_mlp: dropout is not supported");
  if (weights.empty() || weights.size() != biases.size()) throw ShapeError("channel_mlp: weights/biases mismatch");
  ad::Tape t;
  Var h = t.constant(add_batch(x));
  for (std::size_t l = 0; l < weights.size(); ++l) {
    h = ad::channel_linear(h, t.constant(weights[l]), t.constant(biases[l]));
    if (l + 1 < weights.size()) h = ad::activation(h, act);
  }
  return drop_batch(h.value());
}

RealTensor skip_forward(const RealTensor& x, SkipKind kind, const RealTensor& w, const RealTensor& b) {
  ad::Tape t;
  Var v = t.constant(add_batch(x));
  switch (kind) {
    case SkipKind::Identity: return x;
    case SkipKind::None: return RealTensor(x.shape(), 0.0);
    case SkipKind::Linear: return drop_batch(ad::channel_linear(v, t.constant(w)).value());
    case SkipKind::SoftGating: return drop_batch(ad::channel_affine(v, t.constant(w), t.constant(b)).value());
  }
  return x;
}

ComplexTensor complex_wrap_linear(const ComplexTensor& x, const RealTensor& w_re, const RealTensor& w_im) {
  ad::Tape t;
  Var xr = t.constant(add_batch(sok::real_part(x)));
  Var xi = t.constant(add_batch(sok::imag_part(x)));
  Var wr = t.constant(w_re), wi = t.constant(w_im);
  Var yr = ad::sub(ad::channel_linear(xr, wr), ad::channel_linear(xi, wi));
  Var yi = ad::add(ad::channel_linear(xi, wr), ad::channel_linear(xr, wi));
  return drop_batch(sok::make_complex(yr.value(), yi.value()));
}

RealTensor domain_pad(const RealTensor& x, const std::vector<double>& fractions) {
  ad::Tape t;
  return drop_batch(domain_pad(t.constant(add_batch(x)), fractions).value());
}

RealTensor domain_unpad(const RealTensor& x, const std::vector<std::size_t>& original_res) {
  ad::Tape t;
  return drop_batch(domain_unpad(t.constant(add_batch(x)), original_res).value());
}

RealTensor sinusoidal_embed(double p, const EmbeddingSpec& spec) {
  if (spec.grid.rank() != 1) throw ShapeError("sinusoidal_embed: 1D grid expected");
  if (spec.harmonics < 1) throw ShapeError("sinusoidal_embed: need at least one harmonic");
  const std::size_t n = spec.grid.resolution[0];
  const double L = static_cast<double>(spec.harmonics);
  const double top = spec.mode == EmbeddingMode::FrequencyMod ? std::abs(spec.c * p) * L : L;
  // frequencies are in units of the fundamental 2 pi / length
  const double fundamental = 2.0 * std::numbers::pi / spec.grid.domain_length[0];
  const double max_cycles = top * (1.0 / fundamental);
  if (max_cycles > static_cast<double>(n) / 2.0) {
    throw NyquistError("sinusoidal_embed: top frequency " + std::to_string(max_cycles) + " exceeds Nyquist " +
                       std::to_string(n / 2));
  }
  RealTensor out({2 * spec.harmonics, n});
  for (std::size_t j = 1; j <= spec.harmonics; ++j) {
    for (std::size_t i = 0; i < n; ++i) {
      const double x = spec.grid.node(0, i);
      const double jj = static_cast<double>(j);
      double s, c;
      if (spec.mode == EmbeddingMode::AmplitudeMod) {
        s = p * std::sin(jj * x);
        c = p * std::cos(jj * x);
      } else {
        s = std::sin(spec.c * p * jj * x);
        c = std::cos(spec.c * p * jj * x);
      }
      out[(2 * (j - 1)) * n + i] = s;
      out[(2 * (j - 1) + 1) * n + i] = c;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// model

namespace {

RealTensor glorot(std::size_t out, std::size_t in, std::mt19937_64* rng) {
  RealTensor w({out, in}, 0.0);
  if (!rng) return w;
  const double bound = std::sqrt(6.0 / static_cast<double>(in + out));
  std::uniform_real_distribution<double> u(-bound, bound);
  for (auto& x : w.storage()) x = u(*rng);
  return w;
}

ComplexTensor complex_gaussian(Shape shape, double scale, std::mt19937_64* rng) {
  ComplexTensor w(std::move(shape), Complex(0.0));
  if (!rng) return w;
  std::normal_distribution<double> g;
  const double s = scale / std::numbers::sqrt2;
  for (auto& z : w.storage()) {
    const double re = g(*rng);
    const double im = g(*rng);
    z = Complex(s * re, s * im);
  }
  return w;
}

}  // namespace

FnoModel::FnoModel(FnoConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  build(&rng);
}

FnoModel FnoModel::zeros(FnoConfig cfg) {
  FnoModel m;
  m.cfg_ = std::move(cfg);
  m.cfg_.validate();
  m.build(nullptr);
  return m;
}

void FnoModel::build(std::mt19937_64* rng) {
  params_ = ParamStore{};
  const bool cplx = cfg_.complex_data;
  const std::size_t C = cfg_.hidden_channels;

  auto linear = [&](const std::string& name, std::size_t in, std::size_t out, bool bias) {
    if (cplx) {
      params_.add(name + ".weight.re", glorot(out, in, rng));
      params_.add(name + ".weight.im", glorot(out, in, rng));
      if (bias) {
        params_.add(name + ".bias.re", RealTensor({out}, 0.0));
        params_.add(name + ".bias.im", RealTensor({out}, 0.0));
      }
    } else {
      params_.add(name + ".weight", glorot(out, in, rng));
      if (bias) params_.add(name + ".bias", RealTensor({out}, 0.0));
    }
  };
  auto mlp = [&](const std::string& name, std::size_t in, std::size_t out, std::size_t hidden, bool two) {
    if (two) {
      linear(name + ".0", in, hidden, true);
      linear(name + ".1", hidden, out, true);
    } else {
      linear(name + ".0", in, out, true);
    }
  };
  auto skip = [&](const std::string& name, SkipKind kind) {
    if (kind == SkipKind::Linear) linear(name, C, C, false);
    if (kind == SkipKind::SoftGating) {
      const double one = rng ? 1.0 : 0.0;
      if (cplx) {
        params_.add(name + ".weight.re", RealTensor({C}, one));
        params_.add(name + ".weight.im", RealTensor({C}, 0.0));
        params_.add(name + ".bias.re", RealTensor({C}, 0.0));
        params_.add(name + ".bias.im", RealTensor({C}, 0.0));
      } else {
        params_.add(name + ".weight", RealTensor({C}, one));
        params_.add(name + ".bias", RealTensor({C}, 0.0));
      }
    }
  };

  mlp("lifting", cfg_.in_channels, C, cfg_.lifting_hidden(), cfg_.lifting_channel_ratio > 0);
  const auto K = cfg_.stored_modes();
  const double scale = 1.0 / std::sqrt(static_cast<double>(C * product(K)));
  for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
    const std::string p = prefix(l);
    if (cfg_.factorization == Factorization::Tucker) {
      const auto r = tucker_conv_ranks(C, C, K, cfg_.rank);
      const std::size_t kf = product(K);
      // E|W|^2 = scale^2 when factor entries have variance 1/dim
      const double core_scale = scale * std::sqrt(static_cast<double>(C * C * kf) / static_cast<double>(r[0] * r[1] * r[2]));
      params_.add(p + "spectral.core", complex_gaussian({r[0], r[1], r[2]}, core_scale, rng));
      params_.add(p + "spectral.factor.in", complex_gaussian({C, r[0]}, 1.0 / std::sqrt(double(C)), rng));
      params_.add(p + "spectral.factor.out", complex_gaussian({C, r[1]}, 1.0 / std::sqrt(double(C)), rng));
      params_.add(p + "spectral.factor.modes", complex_gaussian({kf, r[2]}, 1.0 / std::sqrt(double(kf)), rng));
    } else if (cfg_.separable) {
      const double s1 = 1.0 / std::sqrt(static_cast<double>(C * K.size()));
      for (std::size_t j = 0; j < K.size(); ++j) {
        params_.add(p + "spectral.weight.axis" + std::to_string(j), complex_gaussian({C, C, K[j]}, s1, rng));
      }
    } else {
      Shape ws{C, C};
      ws.insert(ws.end(), K.begin(), K.end());
      params_.add(p + "spectral.weight", complex_gaussian(ws, scale, rng));
    }
    if (cplx) {
      params_.add(p + "spectral.bias.re", RealTensor({C}, 0.0));
      params_.add(p + "spectral.bias.im", RealTensor({C}, 0.0));
    } else {
      params_.add(p + "spectral.bias", RealTensor({C}, 0.0));
    }
    skip(p + "fno_skip", cfg_.fno_skip);
    mlp(p + "mlp", C, C, cfg_.mlp_hidden(), true);
    skip(p + "mlp_skip", cfg_.channel_mlp_skip);
  }
  mlp("projection", C, cfg_.out_channels, cfg_.projection_hidden(), cfg_.projection_channel_ratio > 0);
}

std::vector<std::vector<std::size_t>> FnoModel::block_resolutions(const std::vector<std::size_t>& input_res) const {
  std::vector<std::vector<std::size_t>> out;
  auto res = padded_resolution(input_res, cfg_.domain_padding);
  out.push_back(res);
  for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
    if (!cfg_.resolution_scaling_factor.empty()) {
      const double s = cfg_.resolution_scaling_factor[l];
      for (auto& n : res) {
        const double m = static_cast<double>(n) * s;
        if (!near_integer(m) || std::lround(m) < 1) {
          throw ShapeError("fno: scaling resolution " + std::to_string(n) + " by " + std::to_string(s) +
                           " in layer " + std::to_string(l) + " is not an integer");
        }
        n = static_cast<std::size_t>(std::lround(m));
      }
    }
    out.push_back(res);
  }
  return out;
}

std::vector<std::size_t> FnoModel::output_resolution(const std::vector<std::size_t>& input_res) const {
  double total = 1.0;
  for (double s : cfg_.resolution_scaling_factor) total *= s;
  std::vector<std::size_t> out;
  for (auto n : input_res) {
    const double m = static_cast<double>(n) * total;
    if (!near_integer(m) || std::lround(m) < 1) {
      throw ShapeError("fno: output resolution " + std::to_string(m) + " is not an integer");
    }
    out.push_back(static_cast<std::size_t>(std::lround(m)));
  }
  return out;
}

namespace {

struct Ctx {
  const ParamStore& ps;
  const std::vector<Var>& bound;
  ad::Tape& tape;
  bool cplx;
  Var get(const std::string& name) const { return bound.at(ps.index(name)); }
};

Field apply_linear(const Ctx& c, const std::string& name, const Field& x, bool bias) {
  if (!c.cplx) {
    return {bias ? ad::channel_linear(x.re, c.get(name + ".weight"), c.get(name + ".bias"))
                 : ad::channel_linear(x.re, c.get(name + ".weight")),
            {}};
  }
  Var wr = c.get(name + ".weight.re"), wi = c.get(name + ".weight.im");
  Var yr = ad::channel_linear(x.re, wr);
  Var yi = ad::channel_linear(x.re, wi);
  if (x.is_complex()) {
    yr = ad::sub(yr, ad::channel_linear(x.im, wi));
    yi = ad::add(yi, ad::channel_linear(x.im, wr));
  }
  if (bias) {
    yr = ad::add_channel_bias(yr, c.get(name + ".bias.re"));
    yi = ad::add_channel_bias(yi, c.get(name + ".bias.im"));
  }
  return {yr, yi};
}

Field apply_act(const Field& x, ad::Activation a) {
  Field y{ad::activation(x.re, a), {}};
  if (x.is_complex()) y.im = ad::activation(x.im, a);
  return y;
}

Field apply_mlp(const Ctx& c, const std::string& name, const Field& x, ad::Activation a) {
  if (!c.ps.contains(name + ".1.weight") && !c.ps.contains(name + ".1.weight.re")) {
    return apply_linear(c, name + ".0", x, true);
  }
  Field h = apply_act(apply_linear(c, name + ".0", x, true), a);
  return apply_linear(c, name + ".1", h, true);
}

Field field_add(const Field& a, const Field& b) {
  Field y{ad::add(a.re, b.re), {}};
  if (a.is_complex() && b.is_complex()) {
    y.im = ad::add(a.im, b.im);
  } else if (a.is_complex()) {
    y.im = a.im;
  } else if (b.is_complex()) {
    y.im = b.im;
  }
  return y;
}

Field apply_norm(const Field& x, NormKind k) {
  if (k == NormKind::None) return x;
  Field y{ad::instance_norm(x.re), {}};
  if (x.is_complex()) y.im = ad::instance_norm(x.im);
  return y;
}

Field resample(const Field& x, const std::vector<std::size_t>& res) {
  Field y{ad::spectral_resample(x.re, res), {}};
  if (x.is_complex()) y.im = ad::spectral_resample(x.im, res);
  return y;
}

std::optional<Field> apply_skip(const Ctx& c, const std::string& name, SkipKind kind, const Field& x,
                                const std::vector<std::size_t>& out_res) {
  std::optional<Field> y;
  switch (kind) {
    case SkipKind::None: return std::nullopt;
    case SkipKind::Identity: y = x; break;
    case SkipKind::Linear: y = apply_linear(c, name, x, false); break;
    case SkipKind::SoftGating: {
      if (!c.cplx) {
        y = Field{ad::channel_affine(x.re, c.get(name + ".weight"), c.get(name + ".bias")), {}};
      } else {
        Var wr = c.get(name + ".weight.re"), wi = c.get(name + ".weight.im");
        Var br = c.get(name + ".bias.re"), bi = c.get(name + ".bias.im");
        Var yr = ad::channel_affine(x.re, wr, br);
        Var yi = ad::channel_affine(x.re, wi, bi);
        if (x.is_complex()) {
          Var zero = c.tape.constant(RealTensor({x.shape()[1]}, 0.0));
          yr = ad::sub(yr, ad::channel_affine(x.im, wi, zero));
          yi = ad::add(yi, ad::channel_affine(x.im, wr, zero));
        }
        y = Field{yr, yi};
      }
      break;
    }
  }
  if (spatial_of(y->shape()) != out_res) y = resample(*y, out_res);
  return y;
}

}  // namespace

Var FnoModel::spectral_weight_var(ad::Tape& tape, const std::vector<Var>& bound, std::size_t layer) const {
  (void)tape;
  const std::string p = prefix(layer);
  if (cfg_.factorization == Factorization::Dense) return bound.at(params_.index(p + "spectral.weight"));
  Var w = bound.at(params_.index(p + "spectral.core"));
  w = ad::mode_product(w, bound.at(params_.index(p + "spectral.factor.in")), 0);
  w = ad::mode_product(w, bound.at(params_.index(p + "spectral.factor.out")), 1);
  w = ad::mode_product(w, bound.at(params_.index(p + "spectral.factor.modes")), 2);
  Shape ws{cfg_.hidden_channels, cfg_.hidden_channels};
  const auto K = cfg_.stored_modes();
  ws.insert(ws.end(), K.begin(), K.end());
  return ad::reshape(w, ws);
}

ComplexTensor FnoModel::spectral_weight(std::size_t layer) const {
  if (cfg_.separable) throw ShapeError("spectral_weight: separable layers store per-axis weights");
  ad::Tape t;
  return spectral_weight_var(t, params_.bind(t, false), layer).cvalue();
}

std::vector<double> FnoModel::mode_power(std::size_t axis) const {
  const auto K = cfg_.stored_modes();
  if (axis >= K.size()) throw ShapeError("mode_power: axis out of range");
  const std::size_t ka = K[axis];
  std::vector<double> power(ka, 0.0);
  // centered index j holds frequency f = j - ka/2; the m-th mode to be
  // switched on (m = 1, 2, ...) is f = 0, -1, +1, -2, +2, ...
  auto rank_of = [ka](std::size_t j) {
    const long f = static_cast<long>(j) - static_cast<long>(ka / 2);
    return f == 0 ? 0 : f < 0 ? static_cast<std::size_t>(-2 * f - 1) : static_cast<std::size_t>(2 * f);
  };
  for (std::size_t l = 0; l < cfg_.n_layers; ++l) {
    if (cfg_.separable) {
      const auto& w = params_.at(prefix(l) + "spectral.weight.axis" + std::to_string(axis)).c;
      for (std::size_t i = 0; i < w.size(); ++i) power[rank_of(i % ka)] += std::norm(w[i]);
      continue;
    }
    const auto w = spectral_weight(l);
    std::size_t inner = 1;
    for (std::size_t a = axis + 1; a < K.size(); ++a) inner *= K[a];
    for (std::size_t i = 0; i < w.size(); ++i) power[rank_of((i / inner) % ka)] += std::norm(w[i]);
  }
  return power;
}

Field FnoModel::block(ad::Tape& tape, const std::vector<Var>& bound, std::size_t layer, const Field& x,
                      const std::vector<std::size_t>& out_res) const {
  const Ctx c{params_, bound, tape, cfg_.complex_data};
  const std::string p = prefix(layer);
  const bool last = layer + 1 == cfg_.n_layers;

  // spectral path
  Var xin = x.re;
  if (x.is_complex()) xin = ad::make_complex(x.re, x.im);
  Var s;
  if (cfg_.separable) {
    std::vector<Var> ws;
    for (std::size_t j = 0; j < cfg_.dim(); ++j) {
      ws.push_back(c.get(p + "spectral.weight.axis" + std::to_string(j)));
    }
    s = separable_spectral_conv(xin, ws, cfg_.n_modes, out_res);
  } else {
    s = spectral_conv(xin, spectral_weight_var(tape, bound, layer), cfg_.n_modes, out_res);
  }
  Field spec;
  if (s.is_complex()) {
    spec = {ad::real_part(s), ad::imag_part(s)};
  } else if (cfg_.complex_data) {
    spec = {s, {}};
  } else {
    spec = {s, {}};
  }
  if (cfg_.complex_data) {
    spec.re = ad::add_channel_bias(spec.re, c.get(p + "spectral.bias.re"));
    Var bim = c.get(p + "spectral.bias.im");
    if (spec.is_complex()) {
      spec.im = ad::add_channel_bias(spec.im, bim);
    } else {
      spec.im = ad::add_channel_bias(tape.constant(RealTensor(spec.re.shape(), 0.0)), bim);
    }
  } else {
    spec.re = ad::add_channel_bias(spec.re, c.get(p + "spectral.bias"));
  }

  Field half = apply_norm(spec, cfg_.norm);
  if (auto sk = apply_skip(c, p + "fno_skip", cfg_.fno_skip, x, out_res)) half = field_add(half, *sk);
  half = apply_act(half, cfg_.activation);

  Field out = apply_mlp(c, p + "mlp", half, cfg_.activation);
  if (auto sk = apply_skip(c, p + "mlp_skip", cfg_.channel_mlp_skip, x, out_res)) out = field_add(out, *sk);
  out = apply_norm(out, cfg_.norm);
  if (!last) out = apply_act(out, cfg_.activation);
  return out;
}

Field FnoModel::forward(ad::Tape& tape, const std::vector<Var>& bound, const Field& x) const {
  cfg_.validate();
  const Shape& xs = x.shape();
  if (xs.size() != cfg_.dim() + 2) {
    throw ShapeError("fno: input " + shape_string(xs) + " is not [B, C, N...] with " + std::to_string(cfg_.dim()) +
                     " spatial axes");
  }
  if (xs[1] != cfg_.in_channels) {
    throw ShapeError("fno: input has " + std::to_string(xs[1]) + " channels, model expects " +
                     std::to_string(cfg_.in_channels));
  }
  const auto res = spatial_of(xs);
  const auto report = validate_nyquist(cfg_.n_modes, GridSpec::periodic_box(res));
  if (!report.ok()) throw NyquistError("fno: " + report.summary());
  const auto levels = block_resolutions(res);
  const auto out_res = output_resolution(res);
  for (std::size_t l = 0; l < cfg_.n_layers; ++l) check_modes(cfg_.n_modes, levels[l], "fno block");

  const Ctx c{params_, bound, tape, cfg_.complex_data};
  Field h = apply_mlp(c, "lifting", x, cfg_.activation);
  h.re = domain_pad(h.re, cfg_.domain_padding);
  if (h.is_complex()) h.im = domain_pad(h.im, cfg_.domain_padding);
  for (std::size_t l = 0; l < cfg_.n_layers; ++l) h = block(tape, bound, l, h, levels[l + 1]);
  h.re = domain_unpad(h.re, out_res);
  if (h.is_complex()) h.im = domain_unpad(h.im, out_res);
  return apply_mlp(c, "projection", h, cfg_.activation);
}

Var FnoModel::forward(ad::Tape& tape, const std::vector<Var>& bound, Var x) const {
  if (cfg_.complex_data) throw ShapeError("fno: complex_data models take a Field input");
  return forward(tape, bound, Field{x, {}}).re;
}

RealTensor FnoModel::forward(const RealTensor& x) const {
  ad::Tape t;
  const auto bound = params_.bind(t, false);
  Field y = forward(t, bound, Field{t.constant(x), {}});
  return y.re.value();
}

ComplexTensor FnoModel::forward(const ComplexTensor& x) const {
  if (!cfg_.complex_data) throw ShapeError("fno: complex input needs complex_data = true");
  ad::Tape t;
  const auto bound = params_.bind(t, false);
  Field y = forward(t, bound, Field{t.constant(sok::real_part(x)), t.constant(sok::imag_part(x))});
  return sok::make_complex(y.re.value(), y.is_complex() ? y.im.value() : RealTensor(y.re.shape(), 0.0));
}

RealTensor FnoModel::block_forward(std::size_t layer, const RealTensor& x) const {
  if (layer >= cfg_.n_layers) throw ShapeError("block_forward: layer out of range");
  ad::Tape t;
  const auto bound = params_.bind(t, false);
  const auto res = spatial_of(x.shape());
  std::vector<std::size_t> out = res;
  if (!cfg_.resolution_scaling_factor.empty()) {
    for (auto& n : out) n = static_cast<std::size_t>(std::lround(double(n) * cfg_.resolution_scaling_factor[layer]));
  }
  return block(t, bound, layer, Field{t.constant(x), {}}, out).re.value();
}

// ---------------------------------------------------------------------------
// checkpoint

namespace {

constexpr char kMagic[4] = {'F', 'N', 'O', 'M'};
constexpr std::uint16_t kVersion = 1;

void write_config(binio::Writer& w, const FnoConfig& c) {
  w.u64s(c.n_modes);
  w.u64s(c.max_n_modes);
  w.u64(c.hidden_channels);
  w.u64(c.in_channels);
  w.u64(c.out_channels);
  w.u64(c.n_layers);
  w.f64(c.lifting_channel_ratio);
  w.f64(c.projection_channel_ratio);
  w.f64(c.channel_mlp_expansion);
  w.u8(static_cast<std::uint8_t>(c.fno_skip));
  w.u8(static_cast<std::uint8_t>(c.channel_mlp_skip));
  w.u8(static_cast<std::uint8_t>(c.activation));
  w.f64s(c.domain_padding);
  w.f64s(c.resolution_scaling_factor);
  w.u8(static_cast<std::uint8_t>(c.factorization));
  w.f64(c.rank);
  w.u8(c.separable ? 1 : 0);
  w.u8(c.complex_data ? 1 : 0);
  w.u8(static_cast<std::uint8_t>(c.norm));
  w.f64(c.dropout);
}

template <class E>
E read_enum(binio::Reader& r, std::uint8_t count, const char* what) {
  const auto v = r.u8();
  if (v >= count) throw FormatError(std::string("checkpoint: invalid ") + what + " code " + std::to_string(v));
  return static_cast<E>(v);
}

FnoConfig read_config(binio::Reader& r) {
  FnoConfig c;
  c.n_modes = r.u64s();
  c.max_n_modes = r.u64s();
  c.hidden_channels = r.u64();
  c.in_channels = r.u64();
  c.out_channels = r.u64();
  c.n_layers = r.u64();
  c.lifting_channel_ratio = r.f64();
  c.projection_channel_ratio = r.f64();
  c.channel_mlp_expansion = r.f64();
  c.fno_skip = read_enum<SkipKind>(r, 4, "skip");
  c.channel_mlp_skip = read_enum<SkipKind>(r, 4, "skip");
  c.activation = read_enum<ad::Activation>(r, 4, "activation");
  c.domain_padding = r.f64s();
  c.resolution_scaling_factor = r.f64s();
  c.factorization = read_enum<Factorization>(r, 2, "factorization");
  c.rank = r.f64();
  c.separable = r.u8() != 0;
  c.complex_data = r.u8() != 0;
  c.norm = read_enum<NormKind>(r, 2, "norm");
  c.dropout = r.f64();
  return c;
}

void write_stats(binio::Writer& w, const ChannelStats& s) {
  w.f64s(s.mean);
  w.f64s(s.std);
}

ChannelStats read_stats(binio::Reader& r) {
  ChannelStats s;
  s.mean = r.f64s();
  s.std = r.f64s();
  if (s.mean.size() != s.std.size()) throw IntegrityError("checkpoint: normalizer mean/std length mismatch");
  return s;
}

}  // namespace

std::string config_json(const FnoConfig& c, int indent) {
  nlohmann::ordered_json j;
  j["n_modes"] = c.n_modes;
  j["max_n_modes"] = c.stored_modes();
  j["hidden_channels"] = c.hidden_channels;
  j["in_channels"] = c.in_channels;
  j["out_channels"] = c.out_channels;
  j["n_layers"] = c.n_layers;
  j["lifting_channel_ratio"] = c.lifting_channel_ratio;
  j["projection_channel_ratio"] = c.projection_channel_ratio;
  j["channel_mlp_expansion"] = c.channel_mlp_expansion;
  j["fno_skip"] = std::string(to_string(c.fno_skip));
  j["channel_mlp_skip"] = std::string(to_string(c.channel_mlp_skip));
  j["activation"] = std::string(to_string(c.activation));
  j["domain_padding"] = c.domain_padding;
  j["resolution_scaling_factor"] = c.resolution_scaling_factor;
  j["factorization"] = std::string(to_string(c.factorization));
  j["rank"] = c.rank;
  j["separable"] = c.separable;
  j["complex_data"] = c.complex_data;
  j["norm"] = std::string(to_string(c.norm));
  j["dropout"] = c.dropout;
  return j.dump(indent);
}

void write_checkpoint(const std::filesystem::path& path, const FnoModel& model, const ChannelStats& input_stats,
                      const ChannelStats& output_stats) {
  {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw FormatError("cannot open " + path.string() + " for writing");
    binio::Writer w(os);
    w.bytes(kMagic, 4);
    w.u16(kVersion);
    write_config(w, model.config());
    w.u32(static_cast<std::uint32_t>(model.params().size()));
    for (const auto& p : model.params()) {
      w.str(p.name);
      w.u8(p.complex ? 1 : 0);
      w.u64s(p.shape());
      if (p.complex) {
        for (auto z : p.c.data()) {
          w.f64(z.real());
          w.f64(z.imag());
        }
      } else {
        for (double x : p.r.data()) w.f64(x);
      }
    }
    // normalizer block
    const bool has = !input_stats.empty() || !output_stats.empty();
    w.u8(has ? 1 : 0);
    if (has) {
      write_stats(w, input_stats);
      write_stats(w, output_stats);
    }
    if (!os) throw FormatError("write failed for " + path.string());
  }
  const auto counts = count_params(model.config());
  nlohmann::ordered_json j;
  j["format"] = "FNOM";
  j["version"] = kVersion;
  j["config"] = nlohmann::ordered_json::parse(config_json(model.config()));
  j["params"] = {{"total", counts.total},
                 {"total_effective", counts.total_effective},
                 {"lifting", counts.lifting},
                 {"spectral", counts.spectral},
                 {"channel_mlp", counts.channel_mlp},
                 {"fno_skip", counts.fno_skip},
                 {"mlp_skip", counts.mlp_skip},
                 {"projection", counts.projection},
                 {"stored_scalars", model.params().scalar_count()}};
  j["normalized"] = !input_stats.empty() || !output_stats.empty();
  std::ofstream js(path.string() + ".json");
  js << j.dump(2) << '\n';
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open checkpoint " + path.string());
  binio::Reader r(is, "checkpoint " + path.string());
  char magic[4];
  r.bytes(magic, 4);
  if (!std::equal(magic, magic + 4, kMagic)) throw FormatError(path.string() + " is not an FNOM checkpoint (bad magic)");
  const auto version = r.u16();
  if (version != kVersion) throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  FnoConfig cfg;
  try {
    cfg = read_config(r);
    cfg.validate();
  } catch (const IntegrityError&) {
    throw;
  } catch (const FormatError&) {
    throw;
  } catch (const Error& e) {
    throw FormatError(std::string("checkpoint: invalid config: ") + e.what());
  }
  Checkpoint ck{FnoModel::zeros(cfg), {}, {}};
  const auto n = r.u32();
  if (n != ck.model.params().size()) {
    throw IntegrityError("checkpoint: " + std::to_string(n) + " tensors stored, config implies " +
                         std::to_string(ck.model.params().size()));
  }
  for (auto& p : ck.model.params()) {
    const auto name = r.str();
    const bool cplx = r.u8() != 0;
    const auto shape = r.u64s();
    if (name != p.name || cplx != p.complex || shape != p.shape()) {
      throw IntegrityError("checkpoint: tensor " + name + " " + shape_string(shape) + " does not match expected " +
                           p.name + " " + shape_string(p.shape()));
    }
    if (cplx) {
      for (auto& z : p.c.storage()) {
        const double re = r.f64();
        z = Complex(re, r.f64());
      }
    } else {
      for (auto& x : p.r.storage()) x = r.f64();
    }
  }
  if (r.u8() != 0) {
    ck.input_stats = read_stats(r);
    ck.output_stats = read_stats(r);
  }
  if (!r.at_end()) throw IntegrityError("checkpoint: trailing bytes after payload");
  return ck;
}

}  // namespace sok
