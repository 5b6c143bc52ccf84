#include "doctest.h"
#include "helpers.hpp"

#include <sstream>

#include "sok/spectral_ops.hpp"

using namespace sok;
using namespace testing_helpers;

namespace {

RealTensor band_limited(std::size_t n, int kmax, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g;
  std::vector<double> a(static_cast<std::size_t>(kmax) + 1), b(static_cast<std::size_t>(kmax) + 1);
  for (int k = 0; k <= kmax; ++k) {
    a[static_cast<std::size_t>(k)] = g(rng);
    b[static_cast<std::size_t>(k)] = g(rng);
  }
  return sample(n, 2 * kPi, [&](double x) {
    double s = a[0];
    for (int k = 1; k <= kmax; ++k) s += a[static_cast<std::size_t>(k)] * std::cos(k * x) + b[static_cast<std::size_t>(k)] * std::sin(k * x);
    return s;
  });
}

}  // namespace

TEST_CASE("spectral interpolation reproduces nodes and band-limited functions") {
  auto f = [](double x) { return std::cos(2 * x) + std::exp(std::sin(4 * x)); };
  auto coarse = sample(40, 2 * kPi, f);
  auto fine = spectral_interpolate(coarse, GridSpec::periodic_box({40}), {120});
  CHECK(fine.extent(0) == 120);
  double err = 0.0;
  for (std::size_t j = 0; j < 40; ++j) err = std::max(err, std::abs(fine[3 * j] - coarse[j]));
  CHECK(err <= 1e-10);

  auto s = sample(16, 2 * kPi, [](double x) { return std::sin(3 * x); });
  auto up = spectral_interpolate(s, GridSpec::periodic_box({16}), {64});
  CHECK(max_abs_diff(up, sample(64, 2 * kPi, [](double x) { return std::sin(3 * x); })) <= 1e-12);

  auto bl = band_limited(64, 7, 11);
  auto rt = spectral_resample(spectral_resample(bl, {32}), {64});
  CHECK(max_abs_diff(rt, bl) <= 1e-12);

  GridSpec np({16}, {1.0}, {false});
  CHECK_THROWS_AS(spectral_interpolate(s, np, {32}), ShapeError);
}

TEST_CASE("spectral truncation") {
  auto s = sample(64, 2 * kPi, [](double x) { return std::sin(3 * x); });
  CHECK(max_abs_diff(spectral_truncate(s, {16}), sample(16, 2 * kPi, [](double x) { return std::sin(3 * x); })) <= 1e-12);
  CHECK_THROWS_AS(spectral_truncate(s, {128}), ShapeError);

  std::mt19937_64 rng(12);
  ComplexTensor noise({64}, random_complex(64, rng));
  auto coarse = spectral_truncate(noise, {32});
  auto fc = roll_axes(fft_axes(coarse, std::vector<std::size_t>{0}), std::vector<std::size_t>{0}, true);
  auto ff = roll_axes(fft_axes(noise, std::vector<std::size_t>{0}), std::vector<std::size_t>{0}, true);
  // centered block of the fine spectrum, rescaled by the resolution change
  double err = 0.0;
  for (std::size_t j = 0; j < 32; ++j) err = std::max(err, std::abs(fc[j] - ff[16 + j] * std::sqrt(0.5)));
  CHECK(err <= 1e-12);

  // band-limited below 16: truncation equals low-pass then stride
  auto bl = band_limited(64, 12, 13);
  auto via_lp = stride_downsample(low_pass(bl, {15}), {2});
  CHECK(max_abs_diff(spectral_truncate(bl, {32}), via_lp) <= 1e-12);
}

TEST_CASE("spectral derivative") {
  const auto g = GridSpec::periodic_box({64});
  auto s = sample(64, 2 * kPi, [](double x) { return std::sin(3 * x); });
  CHECK(max_abs_diff(spectral_derivative(s, g, 0, 1), sample(64, 2 * kPi, [](double x) { return 3 * std::cos(3 * x); })) <= 1e-12);
  auto c = sample(64, 2 * kPi, [](double x) { return std::cos(5 * x); });
  CHECK(max_abs_diff(spectral_derivative(c, g, 0, 2), sample(64, 2 * kPi, [](double x) { return -25 * std::cos(5 * x); })) <= 1e-11);
  auto e = sample(64, 2 * kPi, [](double x) { return std::exp(std::sin(x)); });
  CHECK(max_abs_diff(spectral_derivative(e, g, 0, 1),
                     sample(64, 2 * kPi, [](double x) { return std::cos(x) * std::exp(std::sin(x)); })) <= 1e-10);
  CHECK(max_abs(spectral_derivative(RealTensor({64}, 3.0), g, 0, 1)) == 0.0);
  CHECK_THROWS_AS(spectral_derivative(s, g, 0, -1), ShapeError);

  auto bl = band_limited(64, 10, 14);
  auto d3 = spectral_derivative(bl, g, 0, 3);
  auto d12 = spectral_derivative(spectral_derivative(bl, g, 0, 1), g, 0, 2);
  CHECK(max_abs_diff(d3, d12) <= 1e-9);

  // derivative on a non-unit domain scales by 2 pi / L
  GridSpec unit({32}, {1.0}, {true});
  auto u = sample(32, 1.0, [](double x) { return std::sin(2 * kPi * 2 * x); });
  CHECK(max_abs_diff(spectral_derivative(u, unit, 0, 1),
                     sample(32, 1.0, [](double x) { return 4 * kPi * std::cos(4 * kPi * x); })) <= 1e-11);

  // 2-D: derivative along the second grid axis
  GridSpec g2 = GridSpec::periodic_box({16, 16});
  RealTensor f2({16, 16});
  for (std::size_t i = 0; i < 16; ++i)
    for (std::size_t j = 0; j < 16; ++j) f2.at({i, j}) = std::sin(g2.node(0, i)) * std::cos(2 * g2.node(1, j));
  auto dy = spectral_derivative(f2, g2, 1, 1);
  double err = 0.0;
  for (std::size_t i = 0; i < 16; ++i)
    for (std::size_t j = 0; j < 16; ++j)
      err = std::max(err, std::abs(dy.at({i, j}) + 2 * std::sin(g2.node(0, i)) * std::sin(2 * g2.node(1, j))));
  CHECK(err < 1e-12);
}

TEST_CASE("low pass") {
  CHECK(max_abs_diff(low_pass(RealTensor({32}, 1.5), {4}), RealTensor({32}, 1.5)) < 1e-14);
  auto s = sample(64, 2 * kPi, [](double x) { return std::sin(20 * x); });
  CHECK(max_abs(low_pass(s, {10})) <= 1e-12);
  std::mt19937_64 rng(15);
  RealTensor r({64}, random_real(64, rng));
  auto once = low_pass(r, {9});
  CHECK(max_abs_diff(low_pass(once, {9}), once) <= 1e-13);
  CHECK_THROWS_AS(low_pass(r, {33}), NyquistError);
}

TEST_CASE("aliasing fold") {
  auto f = sample(128, 1.0, [](double x) { return std::cos(2 * kPi * 10 * x); });
  auto coarse = stride_downsample(f, {8});
  CHECK(coarse.extent(0) == 16);
  auto p = power_spectrum(coarse, {0});
  std::size_t argmax = 0;
  for (std::size_t k = 0; k < 16; ++k)
    if (p[k] > p[argmax]) argmax = k;
  CHECK(std::labs(signed_frequency(argmax, 16)) == 6);

  std::mt19937_64 rng(16);
  ComplexTensor x({128}, random_complex(128, rng));
  for (std::size_t s : {2u, 4u, 8u}) {
    auto lhs = fft(stride_downsample(x, {s})).coeffs;
    auto rhs = aliasing_fold(fft(x, {0}), {128 / s}).coeffs;
    CHECK(max_abs_diff(lhs, rhs) <= 1e-12);
  }
  // band-limited: fold equals truncation of the rescaled spectrum
  auto bl = to_complex(band_limited(64, 5, 17));
  auto folded = aliasing_fold(fft(bl, {0}), {16}).coeffs;
  auto direct = fft(spectral_truncate(bl, {16})).coeffs;
  CHECK(max_abs_diff(folded, direct) <= 1e-12);
  CHECK_THROWS_AS(aliasing_fold(fft(x, {0}), {48}), ShapeError);

  // 2-D commutation
  ComplexTensor y({16, 32}, random_complex(16 * 32, rng));
  auto l2 = fft(stride_downsample(y, {2, 4})).coeffs;
  auto r2 = aliasing_fold(fft(y, {0, 1}), {8, 8}).coeffs;
  CHECK(max_abs_diff(l2, r2) <= 1e-12);
}

TEST_CASE("squared-signal bandwidth") {
  for (int kmax : {1, 3, 5, 8, 16}) {
    auto x = band_limited(64, kmax, 100 + static_cast<std::uint64_t>(kmax));
    RealTensor sq = x;
    for (auto& v : sq.storage()) v = v * v;
    auto p = power_spectrum(sq, {0});
    double outside = 0.0, total = 0.0, edge = 0.0;
    for (std::size_t j = 0; j < 64; ++j) {
      const long k = std::labs(signed_frequency(j, 64));
      total += p[j];
      if (k > 2 * kmax) outside += p[j];
      if (k == 2 * kmax) edge += p[j];
    }
    CHECK(outside <= 1e-12 * total);
    CHECK(edge > 1e-8 * total);
  }
}

TEST_CASE("nonlinearity probe") {
  auto sig = sample(128, 2 * kPi, [](double x) { return 0.5 * std::sin(5 * x) + 0.5 * std::cos(20 * x); });
  auto rep = nonlinearity_bandwidth_probe(sig, ProbeActivation::Gelu, {64, 128});
  REQUIRE(rep.levels.size() == 2);
  double beyond = 0.0;
  for (std::size_t j = 0; j < 128; ++j)
    if (std::labs(rep.levels[1].modes[j]) > 32) beyond += rep.levels[1].power[j];
  CHECK(beyond > 0.0);
  CHECK(rep.levels[0].aliased_energy > 1e-8);

  auto k5 = sample(64, 2 * kPi, [](double x) { return std::cos(5 * x) + 0.3 * std::sin(2 * x); });
  auto sq = nonlinearity_bandwidth_probe(k5, ProbeActivation::Square, {64});
  CHECK(sq.levels[0].max_mode == 10);

  auto flat = nonlinearity_bandwidth_probe(RealTensor({32}, 0.7), ProbeActivation::Tanh, {32, 64});
  for (const auto& l : flat.levels) {
    CHECK(l.max_mode == 0);
    CHECK(l.aliased_energy < 1e-14);
  }
  std::ostringstream os;
  write_bandwidth_csv(os, flat);
  CHECK(os.str().rfind("mode,power,resolution", 0) == 0);
}

TEST_CASE("nyquist validation") {
  const auto g = GridSpec::periodic_box({64});
  auto ok = validate_nyquist({16}, g);
  CHECK(ok.ok());
  CHECK_FALSE(ok.has_warning());
  auto hard = validate_nyquist({65}, g);
  CHECK_FALSE(hard.ok());
  auto soft = validate_nyquist({48}, g);
  CHECK(soft.ok());
  CHECK(soft.has_warning());
  CHECK(validate_nyquist({48}, g, 0.8).has_warning() == false);
}
