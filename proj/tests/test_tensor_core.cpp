#include "doctest.h"
#include "helpers.hpp"

#include "sok/fft.hpp"
#include "sok/grid.hpp"

using namespace sok;
using namespace testing_helpers;

TEST_CASE("tensor basics") {
  RealTensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.strides() == std::vector<std::size_t>{3, 1});
  t.at({1, 2}) = 4.0;
  CHECK(t[5] == 4.0);
  CHECK_THROWS_AS(RealTensor({2, 0}), ShapeError);
  CHECK_THROWS_AS(RealTensor({2, 2}, std::vector<double>(3)), ShapeError);
  CHECK_THROWS_AS(t.reshaped({4}), ShapeError);
  CHECK(t.reshaped({3, 2}).shape() == Shape{3, 2});
  RealTensor scalar;
  CHECK(scalar.size() == 1);
}

TEST_CASE("dft of constant, impulse and pure mode") {
  std::vector<Complex> c(6, Complex(2.0, -1.0));
  auto x = dft_1d(c);
  CHECK(std::abs(x[0] - std::sqrt(6.0) * Complex(2.0, -1.0)) < 1e-12);
  for (std::size_t k = 1; k < 6; ++k) CHECK(std::abs(x[k]) < 1e-12);

  std::vector<Complex> imp{1.0, 0.0, 0.0, 0.0};
  for (auto v : dft_1d(imp)) CHECK(std::abs(v - 0.5) < 1e-15);

  std::vector<Complex> mode(8);
  for (std::size_t n = 0; n < 8; ++n) mode[n] = std::polar(1.0, 2.0 * kPi * 3.0 * static_cast<double>(n) / 8.0);
  auto m = dft_1d(mode);
  for (std::size_t k = 0; k < 8; ++k) CHECK(std::abs(m[k] - (k == 3 ? std::sqrt(8.0) : 0.0)) < 1e-12);
  auto back = idft_1d(m);
  for (std::size_t n = 0; n < 8; ++n) CHECK(std::abs(back[n] - mode[n]) < 1e-12);
}

TEST_CASE("idft inverts and rejects centered layout") {
  std::mt19937_64 rng(1);
  auto x = random_complex(32, rng);
  auto y = idft_1d(dft_1d(x));
  for (std::size_t i = 0; i < 32; ++i) CHECK(std::abs(x[i] - y[i]) < 1e-12);
  auto zero = idft_1d(std::vector<Complex>(5, 0.0));
  for (auto v : zero) CHECK(v == Complex(0.0));
  Spectrum s = dft_1d_spectrum(x);
  CHECK_THROWS_AS(idft_1d(fftshift(s)), LayoutError);
}

TEST_CASE("fft against oracle dft on every power-of-two length and fallback lengths") {
  std::mt19937_64 rng(2);
  for (std::size_t n : {1u, 2u, 3u, 4u, 5u, 8u, 12u, 16u, 32u, 64u, 100u, 128u, 256u}) {
    auto x = random_complex(n, rng);
    auto ref = oracle_dft(x);
    ComplexTensor t({n}, x);
    Spectrum s = fft(t);
    double err = 0.0;
    for (std::size_t k = 0; k < n; ++k) err = std::max(err, std::abs(s.coeffs[k] - ref[k]));
    CHECK(err <= 1e-12);
    CHECK(max_abs_diff(ifft(s), t) <= 1e-12);
    CHECK(fft_uses_fast_path(t.shape(), std::vector<std::size_t>{0}) == is_power_of_two(n));
  }
}

TEST_CASE("fft is linear and unitary; 2d equals axis composition") {
  std::mt19937_64 rng(3);
  ComplexTensor x({64}, random_complex(64, rng)), y({64}, random_complex(64, rng));
  const Complex a(0.3, -1.2), b(2.0, 0.5);
  ComplexTensor comb({64});
  for (std::size_t i = 0; i < 64; ++i) comb[i] = a * x[i] + b * y[i];
  auto fx = fft(x).coeffs, fy = fft(y).coeffs, fc = fft(comb).coeffs;
  for (std::size_t i = 0; i < 64; ++i) CHECK(std::abs(fc[i] - (a * fx[i] + b * fy[i])) < 1e-12);
  CHECK(std::abs(inner(fx, fy) - inner(x, y)) < 1e-12 * std::abs(inner(x, y)) + 1e-12);
  CHECK(std::abs(l2_norm(fx) - l2_norm(x)) < 1e-12 * l2_norm(x));

  ComplexTensor f2({32, 32}, random_complex(32 * 32, rng));
  auto full = fft(f2).coeffs;
  // oracle: rows then columns
  std::vector<Complex> tmp(f2.data().begin(), f2.data().end());
  for (std::size_t r = 0; r < 32; ++r) {
    std::vector<Complex> row(tmp.begin() + r * 32, tmp.begin() + (r + 1) * 32);
    auto out = oracle_dft(row);
    std::copy(out.begin(), out.end(), tmp.begin() + r * 32);
  }
  for (std::size_t c = 0; c < 32; ++c) {
    std::vector<Complex> col(32);
    for (std::size_t r = 0; r < 32; ++r) col[r] = tmp[r * 32 + c];
    auto out = oracle_dft(col);
    for (std::size_t r = 0; r < 32; ++r) tmp[r * 32 + c] = out[r];
  }
  double err = 0.0;
  for (std::size_t i = 0; i < tmp.size(); ++i) err = std::max(err, std::abs(tmp[i] - full[i]));
  CHECK(err < 1e-12);
}

TEST_CASE("fftshift conventions") {
  auto idx = [](std::size_t n) {
    ComplexTensor t({n});
    for (std::size_t i = 0; i < n; ++i) t[i] = static_cast<double>(i);
    return Spectrum{t, SpectrumLayout::Natural, {0}};
  };
  auto s4 = fftshift(idx(4));
  std::vector<double> e4{2, 3, 0, 1};
  for (std::size_t i = 0; i < 4; ++i) CHECK(s4.coeffs[i].real() == e4[i]);
  auto s5 = fftshift(idx(5));
  std::vector<double> e5{3, 4, 0, 1, 2};
  for (std::size_t i = 0; i < 5; ++i) CHECK(s5.coeffs[i].real() == e5[i]);
  CHECK(ifftshift(s5).coeffs == idx(5).coeffs);
  CHECK_THROWS_AS(fftshift(s5), LayoutError);
  CHECK_THROWS_AS(ifftshift(idx(5)), LayoutError);
  CHECK_THROWS_AS(ifft(s5), LayoutError);
}

TEST_CASE("power spectrum peaks and Parseval") {
  auto f = sample(128, 2 * kPi, [](double x) { return 3 * std::cos(4 * x) + 0.1 * std::sin(10 * x) + std::cos(22 * x); });
  auto p = power_spectrum(f, {0});
  for (std::size_t k = 0; k <= 64; ++k) {
    const bool peak = k == 4 || k == 10 || k == 22;
    if (peak) CHECK(p[k] > 1e-3);
    else CHECK(p[k] < 1e-20);
  }
  CHECK(p[4] > p[22]);
  CHECK(p[22] > p[10]);

  auto c = power_spectrum(RealTensor({16}, 2.0), {0});
  CHECK(std::abs(c[0] - 64.0) < 1e-12);
  for (std::size_t k = 1; k < 16; ++k) CHECK(c[k] < 1e-24);

  std::mt19937_64 rng(4);
  ComplexTensor x({100}, random_complex(100, rng));
  auto px = power_spectrum(x, {0});
  double e1 = 0, e2 = 0;
  for (std::size_t i = 0; i < 100; ++i) {
    e1 += std::norm(x[i]);
    e2 += px[i];
  }
  CHECK(std::abs(e1 - e2) <= 1e-10 * e1);
}

TEST_CASE("hermitian symmetry for real input") {
  std::mt19937_64 rng(5);
  RealTensor x({64}, random_real(64, rng));
  auto s = fft(to_complex(x)).coeffs;
  for (std::size_t k = 1; k < 64; ++k) CHECK(std::abs(s[64 - k] - std::conj(s[k])) < 1e-12);
}

TEST_CASE("grid wavenumbers") {
  GridSpec g({8, 16}, {1.0, 2.0 * kPi}, {true, true});
  CHECK(std::abs(g.wavenumber(0, 3) - 6.0 * kPi) < 1e-14);
  CHECK(std::abs(g.wavenumber(1, -2) + 2.0) < 1e-14);
  CHECK(signed_frequency(5, 8) == -3);
  CHECK(signed_frequency(4, 8) == -4);
  CHECK(signed_frequency(2, 5) == 2);
  CHECK_THROWS_AS(GridSpec({1}, {1.0}, {true}).validate(), ShapeError);
  CHECK_THROWS_AS(GridSpec({4}, {0.0}, {true}).validate(), ShapeError);
}
