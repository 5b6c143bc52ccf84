#include "sok/tucker.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>

namespace sok {

namespace {

using CMatrix = Eigen::MatrixXcd;

// rows: index along `mode`; columns: every other index in row-major order
CMatrix unfold(const ComplexTensor& t, std::size_t mode) {
  const Shape& s = t.shape();
  std::size_t inner = 1, outer = 1;
  for (std::size_t a = mode + 1; a < s.size(); ++a) inner *= s[a];
  for (std::size_t a = 0; a < mode; ++a) outer *= s[a];
  const std::size_t n = s[mode];
  CMatrix m(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(outer * inner));
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t i = 0; i < inner; ++i)
        m(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(o * inner + i)) = t[(o * n + j) * inner + i];
  return m;
}

ComplexTensor leading_left_vectors(const ComplexTensor& t, std::size_t mode, std::size_t r) {
  const CMatrix m = unfold(t, mode);
  Eigen::BDCSVD<CMatrix> svd(m, Eigen::ComputeThinU);
  const CMatrix& u = svd.matrixU();
  const std::size_t rows = t.extent(mode);
  ComplexTensor f({rows, r});
  const auto avail = static_cast<std::size_t>(u.cols());
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < r; ++j)
      f[i * r + j] = j < avail ? u(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) : Complex(0.0);
  if (avail < r) {
    // unfolding narrower than the requested rank: complete the basis
    CMatrix full(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(r));
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < r; ++j) full(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = f[i * r + j];
    for (std::size_t j = avail; j < r; ++j) full(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(j)) += 1.0;
    Eigen::HouseholderQR<CMatrix> qr(full);
    CMatrix q = qr.householderQ() * CMatrix::Identity(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(r));
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < r; ++j) f[i * r + j] = q(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
  }
  return f;
}

double squared_norm(const ComplexTensor& t) {
  double acc = 0.0;
  for (const auto& v : t.data()) acc += std::norm(v);
  return acc;
}

ComplexTensor project_all(const ComplexTensor& t, const std::vector<ComplexTensor>& factors, std::size_t skip) {
  ComplexTensor cur = t;
  for (std::size_t n = 0; n < factors.size(); ++n) {
    if (n != skip) cur = mode_product_adjoint(cur, factors[n], n);
  }
  return cur;
}

}  // namespace

std::vector<std::size_t> ranks_from_mode_fraction(const Shape& dims, double rank) {
  if (!(rank > 0.0 && rank <= 1.0)) throw ShapeError("tucker rank fraction must lie in (0, 1]");
  std::vector<std::size_t> r;
  for (std::size_t d : dims) {
    const auto v = static_cast<std::size_t>(std::ceil(rank * static_cast<double>(d) - 1e-12));
    r.push_back(std::clamp<std::size_t>(v, 1, d));
  }
  return r;
}

std::vector<std::size_t> ranks_from_param_fraction(const Shape& dims, double rank) {
  if (!(rank > 0.0 && rank <= 1.0)) throw ShapeError("tucker rank fraction must lie in (0, 1]");
  if (rank >= 1.0) return std::vector<std::size_t>(dims.begin(), dims.end());
  double prod = 1.0, sum_sq = 0.0;
  for (std::size_t d : dims) {
    prod *= static_cast<double>(d);
    sum_sq += static_cast<double>(d) * static_cast<double>(d);
  }
  const double order = static_cast<double>(dims.size());
  const double target = rank * prod;
  auto count = [&](double f) { return std::pow(f, order) * prod + f * sum_sq; };
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (count(mid) < target ? lo : hi) = mid;
  }
  std::vector<std::size_t> r;
  for (std::size_t d : dims) {
    const auto v = static_cast<std::size_t>(std::llround(lo * static_cast<double>(d)));
    r.push_back(std::clamp<std::size_t>(v, 1, d));
  }
  return r;
}

ComplexTensor mode_product(const ComplexTensor& t, const ComplexTensor& m, std::size_t mode) {
  if (mode >= t.rank()) throw ShapeError("mode_product: mode out of range");
  if (m.rank() != 2 || m.extent(1) != t.extent(mode)) throw ShapeError("mode_product: factor shape mismatch");
  const Shape& s = t.shape();
  const std::size_t n = s[mode], rows = m.extent(0);
  std::size_t inner = 1, outer = 1;
  for (std::size_t a = mode + 1; a < s.size(); ++a) inner *= s[a];
  for (std::size_t a = 0; a < mode; ++a) outer *= s[a];
  Shape out_shape = s;
  out_shape[mode] = rows;
  ComplexTensor out(out_shape);
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < n; ++j) {
        const Complex w = m[r * n + j];
        const Complex* src = t.data().data() + (o * n + j) * inner;
        Complex* dst = out.data().data() + (o * rows + r) * inner;
        for (std::size_t i = 0; i < inner; ++i) dst[i] += w * src[i];
      }
  return out;
}

ComplexTensor mode_product_adjoint(const ComplexTensor& t, const ComplexTensor& m, std::size_t mode) {
  if (m.rank() != 2) throw ShapeError("mode_product_adjoint: factor must be a matrix");
  const std::size_t rows = m.extent(0), cols = m.extent(1);
  ComplexTensor mh({cols, rows});
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) mh[j * rows + i] = std::conj(m[i * cols + j]);
  return mode_product(t, mh, mode);
}

ComplexTensor tucker_reconstruct(const ComplexTensor& core, const std::vector<ComplexTensor>& factors) {
  if (factors.size() != core.rank()) throw ShapeError("tucker_reconstruct: one factor per core mode");
  ComplexTensor cur = core;
  for (std::size_t n = 0; n < factors.size(); ++n) cur = mode_product(cur, factors[n], n);
  return cur;
}

ComplexTensor tucker_reconstruct(const TuckerFactors& tf) { return tucker_reconstruct(tf.core, tf.factors); }

TuckerResult tucker_decompose(const ComplexTensor& t, std::vector<std::size_t> ranks, std::size_t max_sweeps,
                              double tol) {
  if (ranks.size() != t.rank()) throw ShapeError("tucker_decompose: one rank per mode");
  for (std::size_t n = 0; n < ranks.size(); ++n) {
    if (ranks[n] < 1 || ranks[n] > t.extent(n)) throw ShapeError("tucker_decompose: rank out of range");
  }
  const double total = squared_norm(t);
  auto error_of = [&](const ComplexTensor& core) { return std::sqrt(std::max(0.0, total - squared_norm(core))); };

  TuckerResult res;
  for (std::size_t n = 0; n < ranks.size(); ++n) res.factors.push_back(leading_left_vectors(t, n, ranks[n]));
  res.core = project_all(t, res.factors, ranks.size());
  res.error_history.push_back(error_of(res.core));

  TuckerFactors best{res.core, res.factors};
  double best_err = res.error_history.back();
  const double scale = std::sqrt(total) + 1e-300;
  for (std::size_t sweep = 0; sweep < max_sweeps; ++sweep) {
    for (std::size_t n = 0; n < ranks.size(); ++n) {
      res.factors[n] = leading_left_vectors(project_all(t, res.factors, n), n, ranks[n]);
    }
    res.core = project_all(t, res.factors, ranks.size());
    const double err = error_of(res.core);
    const double prev = res.error_history.back();
    res.error_history.push_back(err);
    res.sweeps = sweep + 1;
    if (err < best_err) {
      best_err = err;
      best = TuckerFactors{res.core, res.factors};
    }
    if (std::abs(prev - err) <= tol * scale || err <= tol * scale) {
      res.converged = true;
      break;
    }
  }
  if (!res.converged) {
    res.diagnostic = "HOOI did not converge in " + std::to_string(max_sweeps) + " sweeps; returning best iterate (error " +
                     std::to_string(best_err) + ")";
  }
  res.core = std::move(best.core);
  res.factors = std::move(best.factors);
  return res;
}

TuckerResult tucker_decompose(const ComplexTensor& t, double rank, std::size_t max_sweeps, double tol) {
  return tucker_decompose(t, ranks_from_mode_fraction(t.shape(), rank), max_sweeps, tol);
}

}  // namespace sok
