#pragma once

// Benchmark data: Gaussian random fields, exact heat/Poisson operators, a
// pseudo-spectral Burgers integrator, downsampling strategies and the FNOD
// dataset format.

#include <cstdint>
#include <filesystem>
#include <map>
#include <numbers>
#include <string>
#include <string_view>
#include <vector>

#include "sok/grid.hpp"
#include "sok/stats.hpp"
#include "sok/tensor.hpp"

namespace sok {

/// splitmix64 of (seed, index): per-sample streams independent of generation order.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

struct GrfSpec {
  std::size_t resolution = 64;
  std::size_t dim = 1;
  double length = 2.0 * std::numbers::pi;
  double gamma = 2.0;      // amplitude decays like |k|^-gamma
  std::size_t k_max = 16;  // per-axis integer cutoff
  double amplitude = 1.0;
  std::uint64_t seed = 0;

  GridSpec grid() const;
  void validate() const;
};

/// Orthonormal-FFT coefficients (natural layout) of sample `index`. Hermitian
/// symmetric: a_k = A sqrt(N^d) |k|^-gamma (c_k + conj(c_-k)) / sqrt(2) with c
/// complex normal of unit variance, zero mean mode, support |k_j| <= k_max.
/// E|a_k|^2 = N^d A^2 |k|^-2gamma.
ComplexTensor grf_coefficients(const GrfSpec& spec, std::uint64_t index = 0);
/// Real field [N] or [N, N].
RealTensor sample_grf(const GrfSpec& spec, std::uint64_t index = 0);

/// e^{-nu |k|^2 t} per mode on the trailing grid axes.
RealTensor heat_operator_exact(const RealTensor& u0, double nu, double t, const GridSpec& grid);
/// -lap u = f with mean(u) = 0; throws NumericalError when mean(f) is not ~0.
RealTensor poisson_solve_exact(const RealTensor& f, const GridSpec& grid, double mean_tol = 1e-10);
/// Mean of f relative to its RMS (0 for f == 0).
double relative_mean(const RealTensor& f);

/// One integrating-factor RK4 step of u_t + (u^2/2)_x = nu u_xx (1D periodic),
/// with the 2/3 rule applied to the quadratic term.
RealTensor burgers_step(const RealTensor& u, double nu, double dt, const GridSpec& grid);
RealTensor burgers_solve(const RealTensor& u0, double nu, double dt, std::size_t steps, const GridSpec& grid);

enum class DownsampleStrategy { Stride, Spectral, LowPassThenStride, MeanPool, MaxPool, LinearInterp };
std::string_view to_string(DownsampleStrategy s);
DownsampleStrategy parse_downsample(std::string_view s);

/// Reduces every trailing axis (`dims` of them) by `factor`.
RealTensor downsample(const RealTensor& field, DownsampleStrategy strategy, std::size_t factor, std::size_t dims = 1);

// ---- datasets --------------------------------------------------------------

struct Dataset {
  std::string problem;                  // heat | poisson | burgers | ...
  std::map<std::string, double> attrs;  // nu, t, gamma, k_max, seed, ...
  RealTensor inputs;                    // [S, Cin, N...]
  RealTensor outputs;                   // [S, Cout, N...]
  GridSpec grid;                        // grid of the input fields
  std::size_t n_train = 0;              // leading samples forming the training split
  ChannelStats input_stats;             // from the training split only
  ChannelStats output_stats;
  bool f32 = false;                     // payload precision on disk

  std::size_t samples() const { return inputs.rank() == 0 ? 0 : inputs.extent(0); }
  /// Recomputes the stats from the first n_train samples.
  void compute_stats();
  /// Samples [begin, end) as a new dataset (same stats).
  Dataset slice(std::size_t begin, std::size_t end) const;
};

struct GenSpec {
  std::string problem = "heat";
  std::size_t samples = 200;
  std::size_t n_train = 0;  // 0: all samples
  GrfSpec grf;
  double nu = 0.05;
  double t = 1.0;
  double dt = 1e-3;  // burgers
  std::size_t steps = 1000;
};

Dataset generate_dataset(const GenSpec& spec);

/// Samples with energy above `k_max` would violate the declared band limit.
bool dataset_band_limited(const Dataset& ds, std::size_t k_max, double tol = 1e-20);

void write_dataset(const std::filesystem::path& path, const Dataset& ds);
Dataset read_dataset(const std::filesystem::path& path);
std::string dataset_header_json(const Dataset& ds, int indent = 2);

}  // namespace sok
