#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

#include "sok/tensor.hpp"

namespace testing_helpers {

using sok::Complex;

inline constexpr double kPi = std::numbers::pi;

// Textbook O(N^2) DFT with orthonormal scaling; deliberately independent of the library.
inline std::vector<Complex> oracle_dft(const std::vector<Complex>& x, bool inverse = false) {
  const std::size_t n = x.size();
  std::vector<Complex> out(n);
  const double sign = inverse ? 1.0 : -1.0;
  for (std::size_t k = 0; k < n; ++k) {
    Complex acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double angle = sign * 2.0 * kPi * static_cast<double>(k) * static_cast<double>(j) / static_cast<double>(n);
      acc += x[j] * std::polar(1.0, angle);
    }
    out[k] = acc / std::sqrt(static_cast<double>(n));
  }
  return out;
}

inline std::vector<Complex> random_complex(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  std::vector<Complex> v(n);
  for (auto& z : v) z = Complex(g(rng), g(rng));
  return v;
}

inline std::vector<double> random_real(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  std::vector<double> v(n);
  for (auto& z : v) z = g(rng);
  return v;
}

// Samples f at x_j = j L / n.
inline sok::RealTensor sample(std::size_t n, double length, const std::function<double(double)>& f) {
  sok::RealTensor t({n});
  for (std::size_t j = 0; j < n; ++j) t[j] = f(static_cast<double>(j) * length / static_cast<double>(n));
  return t;
}

inline double max_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace testing_helpers
