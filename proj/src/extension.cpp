#include "sok/extension.hpp"

#include "sok/fft.hpp"
#include "sok/grid.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <sstream>

namespace sok {

namespace {

using Matrix = Eigen::MatrixXd;

void check_c(std::size_t c) {
  if (c < 2 || c % 2 != 0) throw ShapeError("extension length c must be even and >= 2, got " + std::to_string(c));
}

RealTensor to_tensor(const Matrix& m) {
  RealTensor t({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())});
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) t[static_cast<std::size_t>(i * m.cols() + j)] = m(i, j);
  }
  return t;
}

// Legendre P_0..P_{deg} at x in [-1, 1].
std::vector<double> legendre(double x, std::size_t deg) {
  std::vector<double> p(deg + 1);
  p[0] = 1.0;
  if (deg >= 1) p[1] = x;
  for (std::size_t k = 1; k < deg; ++k) {
    const auto kk = static_cast<double>(k);
    p[k + 1] = ((2.0 * kk + 1.0) * x * p[k] - kk * p[k - 1]) / (kk + 1.0);
  }
  return p;
}

// Solve V^T-style interpolation: returns Eval * Basis^{-1} with rank checks.
Matrix interpolation_map(const Matrix& basis_at_nodes, const Matrix& basis_at_targets, const char* what) {
  Eigen::ColPivHouseholderQR<Matrix> qr(basis_at_nodes);
  if (qr.rank() < basis_at_nodes.cols()) {
    Eigen::JacobiSVD<Matrix> svd(basis_at_nodes);
    const auto& sv = svd.singularValues();
    std::ostringstream os;
    os << what << ": rank-deficient boundary system (rank " << qr.rank() << " of " << basis_at_nodes.cols()
       << ", condition ~" << sv(0) / sv(sv.size() - 1) << ")";
    throw NumericalError(os.str());
  }
  // X solves basis_at_nodes^T X^T = basis_at_targets^T
  Matrix inv = qr.solve(Matrix::Identity(basis_at_nodes.rows(), basis_at_nodes.rows()));
  return basis_at_targets * inv;
}

}  // namespace

std::string_view to_string(ExtensionMethod m) {
  switch (m) {
    case ExtensionMethod::ZeroPad: return "zero";
    case ExtensionMethod::MirrorPad: return "mirror";
    case ExtensionMethod::FcLegendre: return "fc-legendre";
    case ExtensionMethod::FcGram: return "fc-gram";
    case ExtensionMethod::SpectrumOpt: return "spectrum-opt";
  }
  return "?";
}

ExtensionMethod parse_extension_method(std::string_view name) {
  if (name == "zero" || name == "zero-pad") return ExtensionMethod::ZeroPad;
  if (name == "mirror" || name == "mirror-pad") return ExtensionMethod::MirrorPad;
  if (name == "fc-legendre" || name == "legendre") return ExtensionMethod::FcLegendre;
  if (name == "fc-gram" || name == "gram") return ExtensionMethod::FcGram;
  if (name == "spectrum-opt" || name == "hs") return ExtensionMethod::SpectrumOpt;
  throw ShapeError("unknown extension method '" + std::string(name) + "'");
}

ExtensionOperator build_zero_pad(std::size_t c) {
  check_c(c);
  ExtensionOperator op;
  op.method = ExtensionMethod::ZeroPad;
  op.c = c;
  return op;
}

ExtensionOperator build_mirror_pad(std::size_t c) {
  check_c(c);
  ExtensionOperator op;
  op.method = ExtensionMethod::MirrorPad;
  op.c = c;
  return op;
}

ExtensionOperator build_fc_legendre(std::size_t d, std::size_t c, std::size_t n) {
  check_c(c);
  if (d < 1) throw ShapeError("fc-legendre: d must be >= 1");
  if (n != 0 && n < 2 * d) throw ShapeError("fc-legendre: need n >= 2d");
  const std::size_t deg = 2 * d - 1;
  const double span = static_cast<double>(2 * d + c - 1);
  auto to_unit = [span](double t) { return 2.0 * t / span - 1.0; };

  Matrix nodes(static_cast<Eigen::Index>(2 * d), static_cast<Eigen::Index>(2 * d));
  for (std::size_t r = 0; r < 2 * d; ++r) {
    // rows 0..d-1: right stencil at t = r; rows d..2d-1: left stencil at t = c + r
    const double t = r < d ? static_cast<double>(r) : static_cast<double>(c + r);
    const auto p = legendre(to_unit(t), deg);
    for (std::size_t j = 0; j <= deg; ++j) nodes(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = p[j];
  }
  Matrix targets(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(2 * d));
  for (std::size_t r = 0; r < c; ++r) {
    const auto p = legendre(to_unit(static_cast<double>(d + r)), deg);
    for (std::size_t j = 0; j <= deg; ++j) targets(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = p[j];
  }
  ExtensionOperator op;
  op.method = ExtensionMethod::FcLegendre;
  op.d = d;
  op.c = c;
  op.matrix = to_tensor(interpolation_map(nodes, targets, "fc-legendre"));
  return op;
}

double gram_blend_weight(double t) { return 0.5 * (1.0 + std::cos(std::numbers::pi * t)); }

ExtensionOperator build_fc_gram(std::size_t d, std::size_t c, std::size_t n) {
  check_c(c);
  if (d < 1) throw ShapeError("fc-gram: d must be >= 1");
  if (n != 0 && n < 2 * d) throw ShapeError("fc-gram: need n >= 2d");
  const auto dd = static_cast<Eigen::Index>(d);
  const auto cc = static_cast<Eigen::Index>(c);
  const double center_r = 0.5 * static_cast<double>(d - 1);
  const double center_l = static_cast<double>(d + c) + 0.5 * static_cast<double>(d - 1);
  const double scale = static_cast<double>(d);

  auto vander = [&](const std::vector<double>& t, double center) {
    Matrix v(static_cast<Eigen::Index>(t.size()), dd);
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double u = (t[i] - center) / scale;
      double p = 1.0;
      for (Eigen::Index j = 0; j < dd; ++j) {
        v(static_cast<Eigen::Index>(i), j) = p;
        p *= u;
      }
    }
    return v;
  };
  std::vector<double> t_right(d), t_left(d), t_ext(c);
  for (std::size_t i = 0; i < d; ++i) {
    t_right[i] = static_cast<double>(i);
    t_left[i] = static_cast<double>(d + c + i);
  }
  for (std::size_t i = 0; i < c; ++i) t_ext[i] = static_cast<double>(d + i);

  // Gram basis on each stencil: V = Q R with orthonormal Q, then the fitted
  // polynomial evaluated off-stencil is V_ext R^{-1} Q^T f.
  auto continuation = [&](const std::vector<double>& t_stencil, double center) -> Matrix {
    Matrix v = vander(t_stencil, center);
    Eigen::HouseholderQR<Matrix> qr(v);
    Matrix q = qr.householderQ() * Matrix::Identity(dd, dd);
    Matrix r = q.transpose() * v;
    Eigen::FullPivLU<Matrix> lu(r);
    if (lu.rank() < dd) throw NumericalError("fc-gram: singular stencil basis");
    Matrix a = vander(t_ext, center) * lu.inverse();  // A: evaluation in the Gram basis
    return a * q.transpose();
  };
  Matrix right = continuation(t_right, center_r);
  Matrix left = continuation(t_left, center_l);
  for (Eigen::Index i = 0; i < cc; ++i) {
    const double w = gram_blend_weight(static_cast<double>(i + 1) / static_cast<double>(c + 1));
    right.row(i) *= w;
    left.row(i) *= 1.0 - w;
  }
  Matrix both(cc, 2 * dd);
  both << right, left;
  ExtensionOperator op;
  op.method = ExtensionMethod::FcGram;
  op.d = d;
  op.c = c;
  op.matrix = to_tensor(both);
  op.left = to_tensor(left);
  op.right = to_tensor(right);
  return op;
}

namespace {

// Circulant Gram matrix of the Sobolev functional on a period of length m.
double sobolev_weight(double k, double s, bool seminorm) {
  if (seminorm) return k == 0.0 ? 0.0 : std::pow(k * k, s);
  return std::pow(1.0 + k * k, s);
}

Matrix sobolev_circulant(std::size_t m, double s, bool seminorm) {
  std::vector<double> h(m, 0.0);
  for (std::size_t lag = 0; lag < m; ++lag) {
    double acc = 0.0;
    for (std::size_t j = 0; j < m; ++j) {
      const auto k = static_cast<double>(signed_frequency(j, m));
      acc += sobolev_weight(k, s, seminorm) * std::cos(2.0 * std::numbers::pi * static_cast<double>(j * lag % m) /
                                                 static_cast<double>(m));
    }
    h[lag] = acc / static_cast<double>(m);
  }
  const auto mm = static_cast<Eigen::Index>(m);
  Matrix out(mm, mm);
  for (Eigen::Index a = 0; a < mm; ++a) {
    for (Eigen::Index b = 0; b < mm; ++b) {
      out(a, b) = h[static_cast<std::size_t>((a - b + mm) % mm)];
    }
  }
  return out;
}

// Position in the extended sequence of extension value j.
std::size_t ext_position(std::size_t j, std::size_t n, std::size_t c) {
  return j < c / 2 ? c / 2 + n + j : j - c / 2;
}

}  // namespace

ExtensionOperator build_spectrum_opt(std::size_t n, std::size_t c, double s, bool seminorm) {
  check_c(c);
  if (s < 0.0) throw ShapeError("spectrum-opt: Sobolev order must be >= 0");
  if (n < 1) throw ShapeError("spectrum-opt: empty interior");
  const std::size_t m = n + c;
  const Matrix h = sobolev_circulant(m, s, seminorm);
  const auto cc = static_cast<Eigen::Index>(c);
  const auto nn = static_cast<Eigen::Index>(n);
  Matrix hee(cc, cc), hei(cc, nn);
  for (std::size_t a = 0; a < c; ++a) {
    const auto pa = static_cast<Eigen::Index>(ext_position(a, n, c));
    for (std::size_t b = 0; b < c; ++b) {
      hee(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = h(pa, static_cast<Eigen::Index>(ext_position(b, n, c)));
    }
    for (std::size_t b = 0; b < n; ++b) {
      hei(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = h(pa, static_cast<Eigen::Index>(c / 2 + b));
    }
  }
  Eigen::LDLT<Matrix> ldlt(hee);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive()) throw NumericalError("spectrum-opt: singular system");
  ExtensionOperator op;
  op.method = ExtensionMethod::SpectrumOpt;
  op.c = c;
  op.s = s;
  op.seminorm = seminorm;
  op.n = n;
  op.matrix = to_tensor(-ldlt.solve(hei));
  return op;
}

void ExtensionOperator::check_applicable(std::size_t n_interior) const {
  check_c(c);
  switch (method) {
    case ExtensionMethod::ZeroPad: break;
    case ExtensionMethod::MirrorPad:
      if (n_interior <= c / 2) throw ShapeError("mirror-pad: need n > c/2");
      break;
    case ExtensionMethod::FcLegendre:
    case ExtensionMethod::FcGram:
      if (n_interior < 2 * d) throw ShapeError("fc extension: need n >= 2d (n=" + std::to_string(n_interior) + ")");
      break;
    case ExtensionMethod::SpectrumOpt:
      if (n_interior != n) throw ShapeError("spectrum-opt operator built for a different interior length");
      break;
  }
}

std::vector<double> ExtensionOperator::extension_values(std::span<const double> f) const {
  const std::size_t len = f.size();
  check_applicable(len);
  std::vector<double> ext(c, 0.0);
  switch (method) {
    case ExtensionMethod::ZeroPad: break;
    case ExtensionMethod::MirrorPad: {
      const std::size_t h = c / 2;
      for (std::size_t j = 0; j < h; ++j) {
        ext[j] = f[len - 2 - j];
        ext[h + j] = f[h - j];
      }
      break;
    }
    case ExtensionMethod::FcLegendre:
    case ExtensionMethod::FcGram: {
      for (std::size_t r = 0; r < c; ++r) {
        double acc = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
          acc += matrix[r * 2 * d + j] * f[len - d + j];
          acc += matrix[r * 2 * d + d + j] * f[j];
        }
        ext[r] = acc;
      }
      break;
    }
    case ExtensionMethod::SpectrumOpt: {
      for (std::size_t r = 0; r < c; ++r) {
        double acc = 0.0;
        for (std::size_t j = 0; j < len; ++j) acc += matrix[r * len + j] * f[j];
        ext[r] = acc;
      }
      break;
    }
  }
  return ext;
}

RealTensor ExtensionOperator::dense_map(std::size_t n_interior) const {
  check_applicable(n_interior);
  const std::size_t m = n_interior + c;
  RealTensor out({m, n_interior}, 0.0);
  std::vector<double> unit(n_interior, 0.0);
  for (std::size_t col = 0; col < n_interior; ++col) {
    unit[col] = 1.0;
    const auto column = extend_1d(unit, *this);
    for (std::size_t row = 0; row < m; ++row) out[row * n_interior + col] = column[row];
    unit[col] = 0.0;
  }
  return out;
}

std::vector<double> extend_1d(std::span<const double> f, const ExtensionOperator& op) {
  const auto ext = op.extension_values(f);
  const std::size_t h = op.c / 2;
  std::vector<double> out;
  out.reserve(f.size() + op.c);
  out.insert(out.end(), ext.begin() + static_cast<std::ptrdiff_t>(h), ext.end());
  out.insert(out.end(), f.begin(), f.end());
  out.insert(out.end(), ext.begin(), ext.begin() + static_cast<std::ptrdiff_t>(h));
  return out;
}

std::vector<double> extend_spectrum_opt(std::span<const double> f, std::size_t c, double s, bool seminorm) {
  return extend_1d(f, build_spectrum_opt(f.size(), c, s, seminorm));
}

std::vector<double> restrict_1d(std::span<const double> extended, std::size_t n, std::size_t c) {
  if (extended.size() != n + c) {
    throw ShapeError("restrict: length " + std::to_string(extended.size()) + " != n + c = " + std::to_string(n + c));
  }
  return std::vector<double>(extended.begin() + static_cast<std::ptrdiff_t>(c / 2),
                             extended.begin() + static_cast<std::ptrdiff_t>(c / 2 + n));
}

namespace {

// Apply `f` to every line along `axis`, producing lines of length `out_len`.
template <class Fn>
RealTensor map_lines(const RealTensor& x, std::size_t axis, std::size_t out_len, Fn&& fn) {
  const Shape& shape = x.shape();
  const std::size_t n = shape[axis];
  std::size_t inner = 1, outer = 1;
  for (std::size_t a = axis + 1; a < shape.size(); ++a) inner *= shape[a];
  for (std::size_t a = 0; a < axis; ++a) outer *= shape[a];
  Shape out_shape = shape;
  out_shape[axis] = out_len;
  RealTensor out(out_shape);
  std::vector<double> line(n);
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t i = 0; i < inner; ++i) {
      for (std::size_t j = 0; j < n; ++j) line[j] = x[o * n * inner + j * inner + i];
      const std::vector<double> res = fn(std::span<const double>(line));
      for (std::size_t j = 0; j < out_len; ++j) out[o * out_len * inner + j * inner + i] = res[j];
    }
  }
  return out;
}

}  // namespace

RealTensor extend_nd(const RealTensor& field, std::span<const ExtensionOperator> ops) {
  const auto axes = trailing_axes(field.rank(), ops.size());
  RealTensor cur = field;
  for (std::size_t i = 0; i < ops.size(); ++i) {
    const std::size_t n = cur.extent(axes[i]);
    cur = map_lines(cur, axes[i], n + ops[i].c, [&](std::span<const double> line) { return extend_1d(line, ops[i]); });
  }
  return cur;
}

ComplexTensor extend_nd(const ComplexTensor& field, std::span<const ExtensionOperator> ops) {
  return make_complex(extend_nd(real_part(field), ops), extend_nd(imag_part(field), ops));
}

RealTensor restrict_nd(const RealTensor& extended, std::span<const ExtensionOperator> ops, const Shape& original_shape) {
  const auto axes = trailing_axes(extended.rank(), ops.size());
  RealTensor cur = extended;
  for (std::size_t i = ops.size(); i-- > 0;) {
    const std::size_t n = original_shape.at(axes[i]);
    const std::size_t c = ops[i].c;
    cur = map_lines(cur, axes[i], n, [&](std::span<const double> line) { return restrict_1d(line, n, c); });
  }
  if (cur.shape() != original_shape) throw ShapeError("restrict_nd: shape mismatch after restriction");
  return cur;
}

ComplexTensor restrict_nd(const ComplexTensor& extended, std::span<const ExtensionOperator> ops,
                          const Shape& original_shape) {
  return make_complex(restrict_nd(real_part(extended), ops, original_shape),
                      restrict_nd(imag_part(extended), ops, original_shape));
}

double sobolev_energy(std::span<const double> periodic, double s, bool seminorm) {
  const std::size_t m = periodic.size();
  std::vector<Complex> g(periodic.begin(), periodic.end());
  fft_line(g, false);
  double acc = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    const auto k = static_cast<double>(signed_frequency(j, m));
    acc += sobolev_weight(k, s, seminorm) * std::norm(g[j]);
  }
  return acc;
}

std::vector<double> sobolev_extension_gradient(std::span<const double> extended, std::size_t c, double s,
                                               bool seminorm) {
  check_c(c);
  const std::size_t m = extended.size();
  if (m <= c) throw ShapeError("sobolev_extension_gradient: sequence shorter than extension");
  const std::size_t n = m - c;
  const Matrix h = sobolev_circulant(m, s, seminorm);
  Eigen::Map<const Eigen::VectorXd> g(extended.data(), static_cast<Eigen::Index>(m));
  const Eigen::VectorXd hg = 2.0 * h * g;
  std::vector<double> out(c);
  for (std::size_t j = 0; j < c; ++j) out[j] = hg(static_cast<Eigen::Index>(ext_position(j, n, c)));
  return out;
}

double seam_jump(std::span<const double> periodic, std::size_t order) {
  const std::size_t m = periodic.size();
  if (m < order + 2) throw ShapeError("seam_jump: sequence too short for extrapolation order");
  // forward difference of order q+1 vanishes for a degree-q polynomial
  std::vector<double> binom(order + 2, 1.0);
  for (std::size_t k = 1; k <= order + 1; ++k) {
    binom[k] = binom[k - 1] * static_cast<double>(order + 2 - k) / static_cast<double>(k);
  }
  auto extrapolate = [&](auto sample) {
    // predicts sample(q+1) from sample(0..q)
    double acc = 0.0;
    for (std::size_t j = 0; j <= order; ++j) {
      const double sign = ((order + 1 - j) % 2 == 0) ? 1.0 : -1.0;
      acc -= sign * binom[j] * sample(j);
    }
    return acc;
  };
  const double from_left = extrapolate([&](std::size_t j) { return periodic[m - order - 1 + j]; });
  const double from_right = extrapolate([&](std::size_t j) { return periodic[order - j]; });
  return std::max(std::abs(from_left - periodic[0]), std::abs(from_right - periodic[m - 1]));
}

}  // namespace sok
