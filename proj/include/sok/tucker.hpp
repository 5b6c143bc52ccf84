#pragma once

// Tucker factorization of complex tensors by higher-order orthogonal
// iteration, initialized from the truncated HOSVD.

#include <string>
#include <vector>

#include "sok/tensor.hpp"

namespace sok {

struct TuckerFactors {
  ComplexTensor core;                  // shape = ranks
  std::vector<ComplexTensor> factors;  // factor n: dims[n] x ranks[n], orthonormal columns
};

struct TuckerResult : TuckerFactors {
  /// ||T - reconstruction||_F after the HOSVD start and after every sweep.
  std::vector<double> error_history;
  std::size_t sweeps = 0;
  bool converged = false;
  std::string diagnostic;
};

/// ceil(rank * dim) per mode, clamped to [1, dim].
std::vector<std::size_t> ranks_from_mode_fraction(const Shape& dims, double rank);

/// Ranks R_n = round(f * dim_n) with f chosen so that the factorized parameter
/// count prod R + sum dim_n R_n is about `rank` times prod dim.
std::vector<std::size_t> ranks_from_param_fraction(const Shape& dims, double rank);

/// x_n M: contracts axis `mode` of t with the columns of M (rows x dims[mode]).
ComplexTensor mode_product(const ComplexTensor& t, const ComplexTensor& m, std::size_t mode);
/// Same with the conjugate transpose of M (M is dims[mode] x cols).
ComplexTensor mode_product_adjoint(const ComplexTensor& t, const ComplexTensor& m, std::size_t mode);

ComplexTensor tucker_reconstruct(const TuckerFactors& tf);
ComplexTensor tucker_reconstruct(const ComplexTensor& core, const std::vector<ComplexTensor>& factors);

TuckerResult tucker_decompose(const ComplexTensor& t, std::vector<std::size_t> ranks, std::size_t max_sweeps = 100,
                              double tol = 1e-13);
/// Per-mode ranks ceil(rank * dim).
TuckerResult tucker_decompose(const ComplexTensor& t, double rank, std::size_t max_sweeps = 100, double tol = 1e-13);

}  // namespace sok
