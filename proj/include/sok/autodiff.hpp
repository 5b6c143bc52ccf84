#pragma once

// Reverse-mode differentiation over whole tensors.
//
// Every recorded node holds a real or complex value. Gradients of complex
// nodes are stored as dL/dRe + i dL/dIm, so a complex-linear map A has
// adjoint A^H applied to the cotangent (the unitary FFT's adjoint is the
// inverse FFT).

#include <functional>
#include <vector>

#include "sok/grid.hpp"
#include "sok/tensor.hpp"

namespace sok::ad {

class Tape;

struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  bool is_complex() const;
  const Shape& shape() const;
  const RealTensor& value() const;
  const ComplexTensor& cvalue() const;
  bool requires_grad() const;
};

class Tape {
 public:
  using Backward = std::function<void(Tape&, std::size_t self)>;

  Var constant(RealTensor v);
  Var constant(ComplexTensor v);
  Var variable(RealTensor v);
  Var variable(ComplexTensor v);

  Var record(RealTensor v, bool requires_grad, Backward bw);
  Var record(ComplexTensor v, bool requires_grad, Backward bw);

  /// Seeds d root / d root = 1 and visits every node once, newest first.
  void backward(Var root);

  RealTensor grad(Var v) const;
  ComplexTensor cgrad(Var v) const;

  bool is_complex(std::size_t id) const { return nodes_[id].complex; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const RealTensor& value(std::size_t id) const { return nodes_[id].rv; }
  const ComplexTensor& cvalue(std::size_t id) const { return nodes_[id].cv; }
  const Shape& shape(std::size_t id) const;

  /// Gradient accumulators for use inside backward closures.
  RealTensor& grad_acc(std::size_t id);
  ComplexTensor& cgrad_acc(std::size_t id);
  bool has_grad(std::size_t id) const { return nodes_[id].has_grad; }
  const RealTensor& grad_of(std::size_t id) const { return nodes_[id].rg; }
  const ComplexTensor& cgrad_of(std::size_t id) const { return nodes_[id].cg; }

  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    bool complex = false;
    bool requires_grad = false;
    bool has_grad = false;
    RealTensor rv, rg;
    ComplexTensor cv, cg;
    Backward backward;
  };
  std::vector<Node> nodes_;
};

enum class Activation { Identity, Gelu, Relu, Tanh };

double activate(Activation a, double x);
double activate_derivative(Activation a, double x);

// ---- elementwise -----------------------------------------------------------
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);  // real, same shape
Var div(Var a, Var b);  // real, same shape
Var scale(Var a, double s);
Var scale(Var a, Complex s);
/// Multiply by a constant whose shape is a trailing suffix of a's shape.
Var mul_const(Var a, const RealTensor& c);
Var mul_const(Var a, const ComplexTensor& c);
Var add_const(Var a, const RealTensor& c);
Var activation(Var a, Activation kind);
Var square(Var a);
/// |a|^p
Var abs_pow(Var a, double p);

// ---- reductions ------------------------------------------------------------
Var sum(Var a);           // -> rank 0
Var mean(Var a);          // -> rank 0
Var sum_trailing(Var a);  // [B, ...] -> [B]

// ---- channel maps on [B, C, spatial...] -------------------------------------
/// y[b,o,p] = sum_i W[o,i] x[b,i,p] + bias[o]; `bias` may be a null Var.
Var channel_linear(Var x, Var weight, Var bias);
Var channel_linear(Var x, Var weight);
/// y[b,c,p] = w[c] x[b,c,p] + bias[c]
Var channel_affine(Var x, Var w, Var bias);
Var add_channel_bias(Var x, Var bias);
/// Per (b, c) standardization over the spatial axes.
Var instance_norm(Var x, double eps = 1e-5);

// ---- complex plumbing ------------------------------------------------------
Var to_complex(Var x);
Var real_part(Var z);
Var imag_part(Var z);
Var make_complex(Var re, Var im);
Var fft(Var z, std::vector<std::size_t> axes, bool inverse = false);
Var roll(Var z, std::vector<std::size_t> axes, bool to_centered);
Var center_resize(Var z, std::vector<std::size_t> axes, std::vector<std::size_t> extents);
/// Zero-pad or crop on the high-index side (real or complex).
Var corner_resize(Var x, std::vector<std::size_t> axes, std::vector<std::size_t> extents);
Var reshape(Var a, Shape shape);

// ---- spectral contractions -------------------------------------------------
/// y[b,o,k] = sum_i x[b,i,k] W[i,o,k] for x [B,Cin,K...], W [Cin,Cout,K...].
Var mode_mix(Var x, Var w);
/// Mix along one spectral axis only: W [Cin,Cout,K_axis]; `axis` is the tensor axis of x.
Var mode_mix_axis(Var x, Var w, std::size_t axis);
/// t x_mode M with M [rows, dim_mode], both complex.
Var mode_product(Var t, Var m, std::size_t mode);
/// Dense real matrix [M, N] applied along one tensor axis.
Var matvec_axis(Var x, const RealTensor& matrix, std::size_t axis);

// ---- composites ------------------------------------------------------------
/// Fourier resampling of the trailing new_res.size() axes of a real x.
Var spectral_resample(Var x, const std::vector<std::size_t>& new_res);
/// Spectral derivative of a real x along trailing grid axis `axis`.
Var spectral_derivative(Var x, const GridSpec& grid, std::size_t axis, int order);

}  // namespace sok::ad
