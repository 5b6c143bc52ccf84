#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "helpers.hpp"
#include "sok/data.hpp"
#include "sok/errors.hpp"
#include "sok/fft.hpp"
#include "sok/spectral_ops.hpp"

using namespace sok;
using namespace testing_helpers;
namespace fs = std::filesystem;

namespace {

std::vector<Complex> dft_of(const RealTensor& x) {
  std::vector<Complex> v(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) v[i] = x[i];
  return oracle_dft(v);
}

RealTensor row(const RealTensor& x, std::size_t s) {
  const std::size_t per = x.size() / x.extent(0);
  Shape sh(x.shape().begin() + 1, x.shape().end());
  return RealTensor(sh, std::vector<double>(x.data().begin() + long(s * per), x.data().begin() + long((s + 1) * per)));
}

fs::path temp_file(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "sok_data_test";
  fs::create_directories(dir);
  return dir / name;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(is), {});
}

}  // namespace

TEST_CASE("grf: determinism, realness, band limit") {
  GrfSpec spec;
  spec.resolution = 64;
  spec.k_max = 12;
  spec.seed = 11;
  const auto a = sample_grf(spec, 3);
  const auto b = sample_grf(spec, 3);
  CHECK(a.storage() == b.storage());
  CHECK(sample_grf(spec, 4).storage() != a.storage());
  spec.seed = 12;
  CHECK(sample_grf(spec, 3).storage() != a.storage());
  spec.seed = 11;

  // inverse transform of the coefficients is real up to round-off
  const auto coeffs = grf_coefficients(spec, 3);
  const std::vector<Complex> inv = oracle_dft(coeffs.storage(), true);
  double im = 0;
  for (auto z : inv) im = std::max(im, std::abs(z.imag()));
  CHECK(im <= 1e-12);
  for (std::size_t j = 0; j < 64; ++j) CHECK(std::abs(inv[j].real() - a[j]) < 1e-12);

  const auto spec_a = dft_of(a);
  for (std::size_t j = 0; j < 64; ++j) {
    const long k = signed_frequency(j, 64);
    if (k == 0 || std::labs(k) > 12) CHECK(std::abs(spec_a[j]) < 1e-12);
  }

  // 2D: still real
  GrfSpec s2 = spec;
  s2.dim = 2;
  s2.resolution = 16;
  s2.k_max = 5;
  const auto c2 = grf_coefficients(s2, 0);
  const auto f2 = ifft_axes(c2, std::vector<std::size_t>{0, 1});
  CHECK(max_abs(imag_part(f2)) <= 1e-12);

  GrfSpec bad = spec;
  bad.k_max = 32;
  CHECK_THROWS_AS(sample_grf(bad), NyquistError);
}

TEST_CASE("grf: one seed, one function at every resolution") {
  // the coarse grid is every other point of the fine grid
  for (std::size_t dim : {1u, 2u}) {
    GrfSpec c;
    c.dim = dim;
    c.resolution = 24;
    c.k_max = 5;
    c.seed = 77;
    GrfSpec f = c;
    f.resolution = 48;
    for (std::uint64_t i = 0; i < 3; ++i) {
      const auto a = sample_grf(c, i), b = sample_grf(f, i);
      double worst = 0;
      if (dim == 1) {
        for (std::size_t j = 0; j < 24; ++j) worst = std::max(worst, std::abs(a[j] - b[2 * j]));
      } else {
        for (std::size_t p = 0; p < 24; ++p) {
          for (std::size_t q = 0; q < 24; ++q) worst = std::max(worst, std::abs(a[p * 24 + q] - b[2 * p * 48 + 2 * q]));
        }
      }
      CHECK(worst <= 1e-12);
    }
  }
}

TEST_CASE("grf: ensemble power follows |k|^-2gamma") {
  GrfSpec spec;
  spec.resolution = 64;
  spec.k_max = 16;
  spec.gamma = 1.5;
  spec.amplitude = 2.0;
  spec.seed = 5;
  const std::size_t samples = 1000;
  std::vector<double> power(17, 0.0);
  for (std::size_t s = 0; s < samples; ++s) {
    const auto f = dft_of(sample_grf(spec, s));
    for (long k = 1; k <= 16; ++k) power[k] += std::norm(f[k]) / double(samples);
  }
  // expected |a_k|^2 = N A^2 k^-2gamma under the orthonormal DFT
  for (long k = 1; k <= 16; ++k) {
    const double expect = 64.0 * 4.0 * std::pow(double(k), -2 * spec.gamma);
    CHECK(std::abs(power[k] / expect - 1.0) < 0.10);
  }
}

TEST_CASE("heat: analytic modes, identity, semigroup, spectra") {
  const auto grid = GridSpec::periodic_box({64});
  for (int k : {1, 3, 7}) {
    const auto u0 = sample(64, 2 * kPi, [&](double x) { return std::sin(k * x); });
    const auto u = heat_operator_exact(u0, 0.05, 1.3, grid);
    const auto ref = sample(64, 2 * kPi, [&](double x) { return std::exp(-0.05 * k * k * 1.3) * std::sin(k * x); });
    CHECK(max_diff(u.storage(), ref.storage()) <= 1e-12);
  }
  GrfSpec gs;
  gs.seed = 2;
  const auto u0 = sample_grf(gs, 0);
  CHECK(heat_operator_exact(u0, 0.0, 1.0, grid).storage() == u0.storage());
  CHECK(heat_operator_exact(u0, 0.3, 0.0, grid).storage() == u0.storage());
  const auto two = heat_operator_exact(heat_operator_exact(u0, 0.05, 0.4, grid), 0.05, 0.7, grid);
  const auto one = heat_operator_exact(u0, 0.05, 1.1, grid);
  CHECK(max_diff(two.storage(), one.storage()) <= 1e-12);

  // other domain length: wavenumber 2 pi k / L
  const auto g3 = GridSpec::periodic_box({32}, 3.0);
  const auto v0 = sample(32, 3.0, [](double x) { return std::cos(2 * kPi * 2 * x / 3.0); });
  const double kk = 2 * kPi * 2 / 3.0;
  const auto v = heat_operator_exact(v0, 0.01, 2.0, g3);
  for (std::size_t j = 0; j < 32; ++j) CHECK(std::abs(v[j] - std::exp(-0.01 * kk * kk * 2.0) * v0[j]) < 1e-12);

  // batched 2D heat acts per sample
  GrfSpec g2 = gs;
  g2.dim = 2;
  g2.resolution = 16;
  g2.k_max = 4;
  const auto grid2 = g2.grid();
  const auto a = sample_grf(g2, 0), b = sample_grf(g2, 1);
  const std::vector<RealTensor> parts{a, b};
  const auto batch = stack<double>(parts);
  const auto out = heat_operator_exact(batch, 0.1, 0.5, grid2);
  CHECK(max_diff(row(out, 1).storage(), heat_operator_exact(b, 0.1, 0.5, grid2).storage()) <= 1e-14);
  CHECK_THROWS_AS(heat_operator_exact(u0, -1.0, 1.0, grid), ShapeError);
}

TEST_CASE("poisson: exact solve, solvability") {
  const auto grid = GridSpec::periodic_box({64});
  for (int k : {1, 2, 5}) {
    const auto f = sample(64, 2 * kPi, [&](double x) { return std::sin(k * x); });
    const auto u = poisson_solve_exact(f, grid);
    for (std::size_t j = 0; j < 64; ++j) CHECK(std::abs(u[j] - f[j] / (k * k)) < 1e-12);
  }
  // -u'' reproduces f (second derivative via spectral_derivative)
  GrfSpec gs;
  gs.seed = 9;
  const auto f = sample_grf(gs, 0);
  const auto u = poisson_solve_exact(f, grid);
  const auto lap = spectral_derivative(u, grid, 0, 2);
  for (std::size_t j = 0; j < 64; ++j) CHECK(std::abs(-lap[j] - f[j]) < 1e-10);
  double mean = 0;
  for (double v : u.data()) mean += v / 64.0;
  CHECK(std::abs(mean) < 1e-14);

  auto shifted = f;
  for (auto& v : shifted.storage()) v += 0.3;
  CHECK_THROWS_AS(poisson_solve_exact(shifted, grid), NumericalError);
  CHECK(std::abs(relative_mean(RealTensor({4}, 0.0))) == 0.0);
}

TEST_CASE("burgers: conservation, refinement, linear limit") {
  GrfSpec gs;
  gs.resolution = 256;
  gs.k_max = 8;
  gs.seed = 4;
  const auto grid = GridSpec::periodic_box({256});
  auto u0 = sample_grf(gs, 0);
  for (auto& v : u0.storage()) v += 0.2;  // nonzero mean to watch
  double m0 = 0;
  for (double v : u0.data()) m0 += v / 256.0;
  auto u = u0;
  for (int s = 0; s < 20; ++s) {
    u = burgers_step(u, 0.05, 1e-3, grid);
    double m = 0;
    for (double v : u.data()) m += v / 256.0;
    CHECK(std::abs(m - m0) <= 1e-10);
    m0 = m;
  }

  // refinement: same band-limited u0 on 256 and 512 points
  const auto fine0 = spectral_resample(u0, {512});
  const auto coarse = burgers_solve(u0, 0.05, 1e-3, 100, grid);
  const auto fine = burgers_solve(fine0, 0.05, 1e-3, 100, GridSpec::periodic_box({512}));
  double diff = 0;
  for (std::size_t j = 0; j < 256; ++j) diff = std::max(diff, std::abs(coarse[j] - fine[2 * j]));
  CHECK(diff <= 1e-6);

  // linear limit: tiny amplitude behaves like the heat equation. The gap is
  // the quadratic term, O(eps |u0| |k| t) relative, so it must also shrink
  // linearly with eps.
  auto base = sample_grf(gs, 0);
  const double peak = max_abs(base);
  for (auto& v : base.storage()) v /= peak;  // unit amplitude u0
  auto linear_gap = [&](double eps) {
    auto tiny = base;
    for (auto& v : tiny.storage()) v *= eps;
    const auto nl = burgers_solve(tiny, 0.05, 1e-3, 10, grid);
    const auto lin = heat_operator_exact(tiny, 0.05, 1e-2, grid);
    auto delta = nl;
    for (std::size_t j = 0; j < delta.size(); ++j) delta[j] -= lin[j];
    return l2_norm(delta) / l2_norm(lin);
  };
  const double g6 = linear_gap(1e-6), g5 = linear_gap(1e-5);
  MESSAGE("linear-limit rel " << g6 << " (eps 1e-5: " << g5 << "), refinement " << diff);
  CHECK(g6 <= 1e-8);
  CHECK(g5 / g6 == doctest::Approx(10.0).epsilon(0.01));

  CHECK_THROWS_AS(burgers_step(RealTensor({2, 256}), 0.1, 1e-3, grid), ShapeError);
}

TEST_CASE("downsample: constants, stride, spectral, pooling") {
  const std::vector<DownsampleStrategy> all{DownsampleStrategy::Stride,        DownsampleStrategy::Spectral,
                                            DownsampleStrategy::LowPassThenStride, DownsampleStrategy::MeanPool,
                                            DownsampleStrategy::MaxPool,       DownsampleStrategy::LinearInterp};
  for (auto s : all) {
    CHECK(parse_downsample(to_string(s)) == s);
    const auto c = downsample(RealTensor({3, 64}, 1.75), s, 4);
    CHECK(c.shape() == Shape{3, 16});
    for (double v : c.data()) CHECK(std::abs(v - 1.75) < 1e-13);
    const auto c2 = downsample(RealTensor({16, 16}, -0.5), s, 2, 2);
    CHECK(c2.shape() == Shape{8, 8});
    for (double v : c2.data()) CHECK(std::abs(v + 0.5) < 1e-13);
    CHECK_THROWS_AS(downsample(RealTensor({30}, 0.0), s, 4), ShapeError);
  }
  CHECK_THROWS_AS(parse_downsample("wavelet"), ShapeError);

  std::mt19937_64 rng(3);
  const RealTensor x({64}, random_real(64, rng));
  // stride keeps the retained nodes
  const auto st = downsample(x, DownsampleStrategy::Stride, 4);
  for (std::size_t j = 0; j < 16; ++j) CHECK(st[j] == x[4 * j]);

  // pooling oracles
  const auto mp = downsample(x, DownsampleStrategy::MeanPool, 4);
  const auto xp = downsample(x, DownsampleStrategy::MaxPool, 4);
  const auto li = downsample(x, DownsampleStrategy::LinearInterp, 4);
  for (std::size_t j = 0; j < 16; ++j) {
    const double* b = &x[4 * j];
    CHECK(std::abs(mp[j] - (b[0] + b[1] + b[2] + b[3]) / 4) < 1e-14);
    CHECK(xp[j] == std::max({b[0], b[1], b[2], b[3]}));
    CHECK(std::abs(li[j] - (b[1] + b[2]) / 2) < 1e-14);
  }
  // odd factor: the centre is a node
  const auto li3 = downsample(x.reshaped({64}), DownsampleStrategy::LinearInterp, 2);
  for (std::size_t j = 0; j < 32; ++j) CHECK(std::abs(li3[j] - (x[2 * j] + x[2 * j + 1]) / 2) < 1e-14);
  const RealTensor x63({63}, random_real(63, rng));
  const auto l3 = downsample(x63, DownsampleStrategy::LinearInterp, 3);
  for (std::size_t j = 0; j < 21; ++j) CHECK(std::abs(l3[j] - x63[3 * j + 1]) < 1e-14);

  // spectral on a band-limited field is exact resampling
  const auto bl = sample(64, 2 * kPi, [](double t) { return std::cos(2 * t) + 0.5 * std::sin(5 * t) - 0.1; });
  const auto sp = downsample(bl, DownsampleStrategy::Spectral, 4);
  for (std::size_t j = 0; j < 16; ++j) CHECK(std::abs(sp[j] - bl[4 * j]) < 1e-12);
}

TEST_CASE("downsample: stride minus spectral is the fold-back term") {
  std::mt19937_64 rng(17);
  for (auto [n, s] : std::vector<std::pair<std::size_t, std::size_t>>{{64, 4}, {60, 4}, {128, 8}, {63, 3}}) {
    const std::size_t m = n / s;
    const RealTensor x({n}, random_real(n, rng));
    const auto X = dft_of(x);
    // high part: everything the coarse band does not keep; a coarse Nyquist
    // mode keeps half of each of its two images
    ComplexTensor high({n});
    for (std::size_t j = 0; j < n; ++j) {
      const long k = signed_frequency(j, n);
      const long ak = std::labs(k), mm = static_cast<long>(m);
      double keep = 2 * ak < mm ? 1.0 : 0.0;
      if (mm % 2 == 0 && 2 * ak == mm) keep = 0.5;
      high[j] = (1.0 - keep) * X[j];
    }
    const auto fold = aliasing_fold(Spectrum{high, SpectrumLayout::Natural, {0}}, {m});
    const auto dst = dft_of(downsample(x, DownsampleStrategy::Stride, s));
    const auto dsp = dft_of(downsample(x, DownsampleStrategy::Spectral, s));
    const auto dlp = downsample(x, DownsampleStrategy::LowPassThenStride, s);
    const auto spv = downsample(x, DownsampleStrategy::Spectral, s);
    double err = 0, gap = 0;
    for (std::size_t k = 0; k < m; ++k) {
      err = std::max(err, std::abs(dst[k] - dsp[k] - fold.coeffs[k]));
      gap = std::max(gap, std::abs(dst[k] - dsp[k]));
    }
    CHECK(err <= 1e-12);
    CHECK(gap > 1e-3);  // the strategies really differ here
    CHECK(max_diff(dlp.storage(), spv.storage()) <= 1e-12);
    // spectral never adds energy
    CHECK(l2_norm(spv) * std::sqrt(double(s)) <= l2_norm(x) + 1e-12);
  }
}

TEST_CASE("normalization from the training split") {
  std::mt19937_64 rng(8);
  RealTensor f({10, 2, 8}, random_real(160, rng));
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = 3 * f[i] + ((i / 8) % 2 ? 5.0 : -2.0);
  const auto st = compute_channel_stats(f);
  const auto z = normalize(f, st);
  CHECK(max_diff(denormalize(z, st).storage(), f.storage()) <= 1e-12);
  for (std::size_t c = 0; c < 2; ++c) {
    double m = 0, q = 0;
    for (std::size_t s = 0; s < 10; ++s)
      for (std::size_t p = 0; p < 8; ++p) m += z[(s * 2 + c) * 8 + p] / 80.0;
    for (std::size_t s = 0; s < 10; ++s)
      for (std::size_t p = 0; p < 8; ++p) q += std::pow(z[(s * 2 + c) * 8 + p] - m, 2) / 80.0;
    CHECK(std::abs(m) <= 1e-10);
    CHECK(std::abs(std::sqrt(q) - 1.0) <= 1e-10);
  }
  // constant channel: std replaced by 1 so normalization stays finite
  const auto sc = compute_channel_stats(RealTensor({3, 1, 4}, 2.0));
  CHECK(sc.std[0] == 1.0);
  CHECK(sc.mean[0] == 2.0);

  GenSpec g;
  g.samples = 12;
  g.n_train = 8;
  g.grf.resolution = 32;
  g.grf.k_max = 8;
  g.grf.seed = 3;
  const auto ds = generate_dataset(g);
  const auto train_stats = compute_channel_stats(ds.slice(0, 8).inputs);
  CHECK(ds.input_stats == train_stats);
  CHECK(!(ds.input_stats == compute_channel_stats(ds.inputs)));
  // validation split keeps the training statistics
  const auto val = ds.slice(8, 12);
  CHECK(val.input_stats == ds.input_stats);
  CHECK(val.n_train == 0);
  CHECK(ds.slice(4, 10).n_train == 4);
}

TEST_CASE("generate_dataset: heat/poisson/burgers") {
  GenSpec g;
  g.samples = 6;
  g.grf.resolution = 64;
  g.grf.k_max = 12;
  g.grf.seed = 7;
  const auto ds = generate_dataset(g);
  CHECK(ds.inputs.shape() == Shape{6, 1, 64});
  CHECK(ds.outputs.shape() == Shape{6, 1, 64});
  CHECK(ds.n_train == 6);
  CHECK(ds.attrs.at("nu") == 0.05);
  CHECK(dataset_band_limited(ds, 12));
  CHECK(!dataset_band_limited(ds, 6));
  CHECK(validate_nyquist({12}, ds.grid).ok());
  // exact operator: per-mode multiplier e^{-nu k^2 t}
  for (std::size_t s = 0; s < 6; ++s) {
    const auto a = dft_of(row(ds.inputs, s)), u = dft_of(row(ds.outputs, s));
    for (std::size_t j = 0; j < 64; ++j) {
      const double k = double(signed_frequency(j, 64));
      CHECK(std::abs(u[j] - a[j] * std::exp(-0.05 * k * k)) < 1e-12);
    }
  }
  // deterministic and order-independent: sample i depends only on (seed, i)
  const auto again = generate_dataset(g);
  CHECK(again.inputs.storage() == ds.inputs.storage());
  GenSpec g1 = g;
  g1.samples = 3;
  CHECK(row(generate_dataset(g1).inputs, 2).storage() == row(ds.inputs, 2).storage());
  CHECK(derive_seed(7, 0) != derive_seed(7, 1));
  CHECK(derive_seed(7, 0) != derive_seed(8, 0));

  GenSpec p = g;
  p.problem = "poisson";
  const auto dp = generate_dataset(p);
  const auto lap = spectral_derivative(row(dp.outputs, 0).reshaped({64}), dp.grid, 0, 2);
  for (std::size_t j = 0; j < 64; ++j) CHECK(std::abs(lap[j] + dp.inputs[j]) < 1e-10);

  GenSpec b = g;
  b.problem = "burgers";
  b.samples = 2;
  b.steps = 20;
  const auto db = generate_dataset(b);
  CHECK(db.attrs.at("t") == doctest::Approx(0.02));
  CHECK(max_abs(db.outputs) > 0);

  GenSpec bad = g;
  bad.problem = "navier-stokes";
  CHECK_THROWS_AS(generate_dataset(bad), ShapeError);
  bad = g;
  bad.n_train = 9;
  CHECK_THROWS_AS(generate_dataset(bad), ShapeError);
}

TEST_CASE("FNOD: round trip and corruption") {
  GenSpec g;
  g.samples = 5;
  g.n_train = 4;
  g.grf.resolution = 32;
  g.grf.k_max = 6;
  g.grf.seed = 1;
  const auto ds = generate_dataset(g);
  const auto path = temp_file("rt.fnod");
  write_dataset(path, ds);
  const auto back = read_dataset(path);
  CHECK(back.inputs.storage() == ds.inputs.storage());
  CHECK(back.outputs.storage() == ds.outputs.storage());
  CHECK(back.inputs.shape() == ds.inputs.shape());
  CHECK(back.grid == ds.grid);
  CHECK(back.input_stats == ds.input_stats);
  CHECK(back.output_stats == ds.output_stats);
  CHECK(back.attrs == ds.attrs);
  CHECK(back.problem == ds.problem);
  CHECK(back.n_train == 4);
  // rewrite is byte-identical
  const auto path2 = temp_file("rt2.fnod");
  write_dataset(path2, back);
  CHECK(slurp(path) == slurp(path2));
  CHECK(fs::exists(path.string() + ".json"));
  const auto side = slurp(path.string() + ".json");
  CHECK(side.find("\"samples\": 5") != std::string::npos);

  // f32 payload
  auto d32 = ds;
  d32.f32 = true;
  const auto p32 = temp_file("f32.fnod");
  write_dataset(p32, d32);
  CHECK(fs::file_size(p32) < fs::file_size(path));
  const auto b32 = read_dataset(p32);
  CHECK(b32.f32);
  for (std::size_t i = 0; i < ds.inputs.size(); ++i) CHECK(b32.inputs[i] == double(float(ds.inputs[i])));

  const std::string bytes = slurp(path);
  auto write_bytes = [&](const std::string& name, const std::string& content) {
    const auto p = temp_file(name);
    std::ofstream(p, std::ios::binary) << content;
    return p;
  };
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(read_dataset(write_bytes("magic.fnod", bad_magic)), FormatError);
  CHECK_THROWS_AS(read_dataset(write_bytes("short.fnod", bytes.substr(0, bytes.size() - 8))), IntegrityError);
  CHECK_THROWS_AS(read_dataset(write_bytes("long.fnod", bytes + "xx")), IntegrityError);
  CHECK_THROWS_AS(read_dataset(write_bytes("tiny.fnod", bytes.substr(0, 10))), IntegrityError);
  // samples field (offset 8) says one more sample than stored
  std::string more = bytes;
  more[8] = static_cast<char>(more[8] + 1);
  CHECK_THROWS_AS(read_dataset(write_bytes("count.fnod", more)), IntegrityError);
  CHECK_THROWS_AS(read_dataset(temp_file("missing.fnod")), FormatError);
}
