#pragma once

// Periodic extension of non-periodic samples.
//
// A signal f of length n is embedded into one period of length n + c:
//
//   (ext[c/2], ..., ext[c-1], f[0], ..., f[n-1], ext[0], ..., ext[c/2-1])
//
// so ext[0] follows f[n-1] and ext[c-1] precedes f[0] around the period. The
// "wrap coordinate" used by the continuation methods runs through the right
// stencil f[n-d..n-1] (positions 0..d-1), the extension (d..d+c-1) and the
// left stencil f[0..d-1] (d+c..2d+c-1).

#include <span>
#include <string_view>
#include <vector>

#include "sok/tensor.hpp"

namespace sok {

enum class ExtensionMethod { ZeroPad, MirrorPad, FcLegendre, FcGram, SpectrumOpt };

std::string_view to_string(ExtensionMethod m);
ExtensionMethod parse_extension_method(std::string_view name);

/// Precomputed, immutable extension map.
struct ExtensionOperator {
  ExtensionMethod method = ExtensionMethod::ZeroPad;
  std::size_t d = 0;  ///< boundary stencil width
  std::size_t c = 0;  ///< total extension length (even)
  double s = 0.0;     ///< Sobolev order (SpectrumOpt)
  bool seminorm = false;  ///< SpectrumOpt: drop k = 0 and weight by |k|^{2s}
  std::size_t n = 0;  ///< interior length the matrices were built for (SpectrumOpt), 0 if any

  /// FcLegendre: E (c x 2d) acting on y = (f_r, f_l).
  /// FcGram: [A_r Q_r^T | A_l Q_l^T] (c x 2d) acting on the same y.
  /// SpectrumOpt: c x n acting on the whole interior.
  RealTensor matrix;
  /// FcGram only: A_l Q_l^T and A_r Q_r^T (each c x d).
  RealTensor left;
  RealTensor right;

  /// The c extension values for interior samples f.
  std::vector<double> extension_values(std::span<const double> f) const;

  /// Dense (n + c) x n matrix of the full linear map f -> extended f.
  RealTensor dense_map(std::size_t n_interior) const;

  void check_applicable(std::size_t n_interior) const;
};

ExtensionOperator build_zero_pad(std::size_t c);
ExtensionOperator build_mirror_pad(std::size_t c);
ExtensionOperator build_fc_legendre(std::size_t d, std::size_t c, std::size_t n);
ExtensionOperator build_fc_gram(std::size_t d, std::size_t c, std::size_t n);
/// Minimizes sum_k (1 + k^2)^s |u_hat(k)|^2 over the extension values. With
/// `seminorm` the weight is |k|^{2s} and the mean is free, so constants extend
/// to constants.
ExtensionOperator build_spectrum_opt(std::size_t n, std::size_t c, double s, bool seminorm = false);

/// FcGram blending weight on the right-boundary fit, t in [0, 1].
double gram_blend_weight(double t);

std::vector<double> extend_1d(std::span<const double> f, const ExtensionOperator& op);
std::vector<double> extend_spectrum_opt(std::span<const double> f, std::size_t c, double s, bool seminorm = false);
std::vector<double> restrict_1d(std::span<const double> extended, std::size_t n, std::size_t c);

/// Extends the trailing ops.size() axes, axis by axis in order. Complex fields
/// are extended part-wise (every map is real and linear).
ComplexTensor extend_nd(const ComplexTensor& field, std::span<const ExtensionOperator> ops);
RealTensor extend_nd(const RealTensor& field, std::span<const ExtensionOperator> ops);
ComplexTensor restrict_nd(const ComplexTensor& extended, std::span<const ExtensionOperator> ops,
                          const Shape& original_shape);
RealTensor restrict_nd(const RealTensor& extended, std::span<const ExtensionOperator> ops,
                       const Shape& original_shape);

/// Discrete Sobolev functional sum_k (1 + k^2)^s |g_hat(k)|^2, integer k, orthonormal DFT.
double sobolev_energy(std::span<const double> periodic, double s, bool seminorm = false);

/// Gradient of sobolev_energy with respect to the c extension values of an
/// extended sequence laid out as above.
std::vector<double> sobolev_extension_gradient(std::span<const double> extended, std::size_t c, double s,
                                               bool seminorm = false);

/// Mismatch at the wrap point of a periodic sequence: each side is
/// extrapolated one step across the seam with a degree-`order` polynomial
/// through its own last order+1 samples; the larger miss is returned.
double seam_jump(std::span<const double> periodic, std::size_t order = 5);

}  // namespace sok
