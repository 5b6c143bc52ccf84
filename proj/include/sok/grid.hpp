#pragma once

#include <cstddef>
#include <numbers>
#include <vector>

namespace sok {

/// Uniform grid: per-axis point count, physical length and periodicity.
///
/// Integer mode k on axis j has angular wavenumber k * 2*pi / L_j. Nodes sit at
/// x_n = n * L_j / N_j, n = 0..N_j-1 (the right endpoint is the periodic image
/// of the left one).
struct GridSpec {
  std::vector<std::size_t> resolution;
  std::vector<double> domain_length;
  std::vector<bool> periodic;

  GridSpec() = default;
  GridSpec(std::vector<std::size_t> res, std::vector<double> length, std::vector<bool> per);

  /// Periodic grid of the given resolution on [0, L)^d.
  static GridSpec periodic_box(std::vector<std::size_t> res, double length = 2.0 * std::numbers::pi);

  std::size_t rank() const noexcept { return resolution.size(); }
  std::size_t points() const;
  double spacing(std::size_t axis) const;
  /// Volume element prod_j L_j / N_j.
  double cell_volume() const;
  double wavenumber(std::size_t axis, long k) const;
  double node(std::size_t axis, std::size_t n) const;
  bool all_periodic() const;

  /// Same domain sampled at a new resolution.
  GridSpec resampled(std::vector<std::size_t> res) const;

  /// Throws ShapeError unless N_j >= 2, L_j > 0 and the vectors agree in length.
  void validate() const;

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

/// Signed frequency of DFT index i on an axis of length n (natural layout):
/// 0, 1, ..., ceil(n/2)-1, -floor(n/2), ..., -1.
inline long signed_frequency(std::size_t i, std::size_t n) {
  const auto ii = static_cast<long>(i);
  const auto nn = static_cast<long>(n);
  return ii < (nn + 1) / 2 ? ii : ii - nn;
}

}  // namespace sok
