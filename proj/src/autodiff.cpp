#include "sok/autodiff.hpp"

#include <cmath>
#include <numbers>

#include "sok/fft.hpp"
#include "sok/spectral_ops.hpp"
#include "sok/tucker.hpp"

namespace sok::ad {

// ---------------------------------------------------------------------------
// Var / Tape

bool Var::is_complex() const { return tape->is_complex(id); }
const Shape& Var::shape() const { return tape->shape(id); }
const RealTensor& Var::value() const {
  if (is_complex()) throw ShapeError("ad: real value requested from a complex node");
  return tape->value(id);
}
const ComplexTensor& Var::cvalue() const {
  if (!is_complex()) throw ShapeError("ad: complex value requested from a real node");
  return tape->cvalue(id);
}
bool Var::requires_grad() const { return tape->requires_grad(id); }

const Shape& Tape::shape(std::size_t id) const {
  return nodes_[id].complex ? nodes_[id].cv.shape() : nodes_[id].rv.shape();
}

Var Tape::constant(RealTensor v) { return record(std::move(v), false, nullptr); }
Var Tape::constant(ComplexTensor v) { return record(std::move(v), false, nullptr); }
Var Tape::variable(RealTensor v) { return record(std::move(v), true, nullptr); }
Var Tape::variable(ComplexTensor v) { return record(std::move(v), true, nullptr); }

Var Tape::record(RealTensor v, bool requires_grad, Backward bw) {
  Node n;
  n.rv = std::move(v);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(bw);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Var Tape::record(ComplexTensor v, bool requires_grad, Backward bw) {
  Node n;
  n.complex = true;
  n.cv = std::move(v);
  n.requires_grad = requires_grad;
  if (requires_grad) n.backward = std::move(bw);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

RealTensor& Tape::grad_acc(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.rg = RealTensor(n.rv.shape(), 0.0);
    n.has_grad = true;
  }
  return n.rg;
}

ComplexTensor& Tape::cgrad_acc(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.cg = ComplexTensor(n.cv.shape(), Complex(0.0));
    n.has_grad = true;
  }
  return n.cg;
}

void Tape::backward(Var root) {
  if (root.tape != this) throw ShapeError("ad: root belongs to another tape");
  Node& r = nodes_[root.id];
  if (r.complex || r.rv.size() != 1) throw ShapeError("ad: backward needs a real scalar root");
  for (auto& n : nodes_) {
    n.has_grad = false;
  }
  grad_acc(root.id)[0] = 1.0;
  for (std::size_t id = root.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.has_grad || !n.requires_grad || !n.backward) continue;
    n.backward(*this, id);
  }
}

RealTensor Tape::grad(Var v) const {
  const Node& n = nodes_[v.id];
  if (n.complex) throw ShapeError("ad: use cgrad for complex nodes");
  return n.has_grad ? n.rg : RealTensor(n.rv.shape(), 0.0);
}

ComplexTensor Tape::cgrad(Var v) const {
  const Node& n = nodes_[v.id];
  if (!n.complex) throw ShapeError("ad: use grad for real nodes");
  return n.has_grad ? n.cg : ComplexTensor(n.cv.shape(), Complex(0.0));
}

namespace {

void same_tape(Var a, Var b) {
  if (a.tape != b.tape) throw ShapeError("ad: operands recorded on different tapes");
}

void same_shape(Var a, Var b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
  }
}

// Accumulate a gradient tensor into node `id` (real or complex).
void accumulate(Tape& t, std::size_t id, const RealTensor& g, double s = 1.0) {
  if (!t.requires_grad(id)) return;
  auto& acc = t.grad_acc(id);
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += s * g[i];
}

void accumulate(Tape& t, std::size_t id, const ComplexTensor& g, Complex s = 1.0) {
  if (!t.requires_grad(id)) return;
  auto& acc = t.cgrad_acc(id);
  for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += s * g[i];
}

struct ChannelDims {
  std::size_t batch, channels, points;
};

ChannelDims channel_dims(const Shape& s, const char* what) {
  if (s.size() < 2) throw ShapeError(std::string(what) + ": expected [B, C, ...]");
  std::size_t p = 1;
  for (std::size_t a = 2; a < s.size(); ++a) p *= s[a];
  return {s[0], s[1], p};
}

bool suffix_of(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.begin(), small.end(), big.end() - static_cast<std::ptrdiff_t>(small.size()));
}

template <class T>
Tensor<T> corner_copy(const Tensor<T>& x, const Shape& out_shape) {
  Tensor<T> out(out_shape);
  const std::size_t rank = out_shape.size();
  std::vector<std::size_t> idx(rank, 0);
  const auto in_strides = x.strides();
  for (std::size_t flat = 0; flat < out.size(); ++flat) {
    bool inside = true;
    std::size_t off = 0;
    for (std::size_t a = 0; a < rank; ++a) {
      if (idx[a] >= x.extent(a)) {
        inside = false;
        break;
      }
      off += idx[a] * in_strides[a];
    }
    if (inside) out[flat] = x[off];
    for (std::size_t a = rank; a-- > 0;) {
      if (++idx[a] < out_shape[a]) break;
      idx[a] = 0;
    }
  }
  return out;
}

}  // namespace

double activate(Activation a, double x) {
  switch (a) {
    case Activation::Identity: return x;
    case Activation::Gelu: return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2));
    case Activation::Relu: return x > 0.0 ? x : 0.0;
    case Activation::Tanh: return std::tanh(x);
  }
  return x;
}

double activate_derivative(Activation a, double x) {
  switch (a) {
    case Activation::Identity: return 1.0;
    case Activation::Gelu: {
      const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
      const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
      return cdf + x * pdf;
    }
    case Activation::Relu: return x > 0.0 ? 1.0 : 0.0;
    case Activation::Tanh: {
      const double t = std::tanh(x);
      return 1.0 - t * t;
    }
  }
  return 1.0;
}

// ---------------------------------------------------------------------------
// elementwise

Var add(Var a, Var b) {
  same_tape(a, b);
  same_shape(a, b, "add");
  Tape& t = *a.tape;
  const bool rg = a.requires_grad() || b.requires_grad();
  const std::size_t ia = a.id, ib = b.id;
  if (a.is_complex() != b.is_complex()) throw ShapeError("add: mixed real/complex operands");
  if (a.is_complex()) {
    ComplexTensor v = a.cvalue();
    const auto& bv = b.cvalue();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] += bv[i];
    return t.record(std::move(v), rg, [ia, ib](Tape& tp, std::size_t self) {
      accumulate(tp, ia, tp.cgrad_of(self));
      accumulate(tp, ib, tp.cgrad_of(self));
    });
  }
  RealTensor v = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += bv[i];
  return t.record(std::move(v), rg, [ia, ib](Tape& tp, std::size_t self) {
    accumulate(tp, ia, tp.grad_of(self));
    accumulate(tp, ib, tp.grad_of(self));
  });
}

Var sub(Var a, Var b) {
  same_tape(a, b);
  same_shape(a, b, "sub");
  Tape& t = *a.tape;
  const bool rg = a.requires_grad() || b.requires_grad();
  const std::size_t ia = a.id, ib = b.id;
  if (a.is_complex() != b.is_complex()) throw ShapeError("sub: mixed real/complex operands");
  if (a.is_complex()) {
    ComplexTensor v = a.cvalue();
    const auto& bv = b.cvalue();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= bv[i];
    return t.record(std::move(v), rg, [ia, ib](Tape& tp, std::size_t self) {
      accumulate(tp, ia, tp.cgrad_of(self));
      accumulate(tp, ib, tp.cgrad_of(self), -1.0);
    });
  }
  RealTensor v = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] -= bv[i];
  return t.record(std::move(v), rg, [ia, ib](Tape& tp, std::size_t self) {
    accumulate(tp, ia, tp.grad_of(self));
    accumulate(tp, ib, tp.grad_of(self), -1.0);
  });
}

Var mul(Var a, Var b) {
  same_tape(a, b);
  same_shape(a, b, "mul");
  if (a.is_complex() || b.is_complex()) throw ShapeError("mul: real operands only");
  RealTensor v = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] *= bv[i];
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(std::move(v), a.requires_grad() || b.requires_grad(), [ia, ib](Tape& tp, std::size_t self) {
    const auto& g = tp.grad_of(self);
    if (tp.requires_grad(ia)) {
      auto& acc = tp.grad_acc(ia);
      const auto& bv2 = tp.value(ib);
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i] * bv2[i];
    }
    if (tp.requires_grad(ib)) {
      auto& acc = tp.grad_acc(ib);
      const auto& av = tp.value(ia);
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i] * av[i];
    }
  });
}

Var div(Var a, Var b) {
  same_tape(a, b);
  same_shape(a, b, "div");
  if (a.is_complex() || b.is_complex()) throw ShapeError("div: real operands only");
  RealTensor v = a.value();
  const auto& bv = b.value();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] /= bv[i];
  const std::size_t ia = a.id, ib = b.id;
  return a.tape->record(std::move(v), a.requires_grad() || b.requires_grad(), [ia, ib](Tape& tp, std::size_t self) {
    const auto& g = tp.grad_of(self);
    const auto& bv2 = tp.value(ib);
    if (tp.requires_grad(ia)) {
      auto& acc = tp.grad_acc(ia);
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i] / bv2[i];
    }
    if (tp.requires_grad(ib)) {
      const auto& q = tp.value(self);
      auto& acc = tp.grad_acc(ib);
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] -= g[i] * q[i] / bv2[i];
    }
  });
}

Var scale(Var a, double s) {
  const std::size_t ia = a.id;
  if (a.is_complex()) {
    ComplexTensor v = a.cvalue();
    for (auto& x : v.storage()) x *= s;
    return a.tape->record(std::move(v), a.requires_grad(),
                          [ia, s](Tape& tp, std::size_t self) { accumulate(tp, ia, tp.cgrad_of(self), s); });
  }
  RealTensor v = a.value();
  for (auto& x : v.storage()) x *= s;
  return a.tape->record(std::move(v), a.requires_grad(),
                        [ia, s](Tape& tp, std::size_t self) { accumulate(tp, ia, tp.grad_of(self), s); });
}

Var scale(Var a, Complex s) {
  if (!a.is_complex()) throw ShapeError("scale: complex factor on a real node");
  const std::size_t ia = a.id;
  ComplexTensor v = a.cvalue();
  for (auto& x : v.storage()) x *= s;
  return a.tape->record(std::move(v), a.requires_grad(),
                        [ia, s](Tape& tp, std::size_t self) { accumulate(tp, ia, tp.cgrad_of(self), std::conj(s)); });
}

Var mul_const(Var a, const RealTensor& c) {
  if (!suffix_of(c.shape(), a.shape())) throw ShapeError("mul_const: constant shape must be a suffix");
  const std::size_t ia = a.id, m = c.size();
  if (a.is_complex()) {
    ComplexTensor v = a.cvalue();
    for (std::size_t i = 0; i < v.size(); ++i) v[i] *= c[i % m];
    return a.tape->record(std::move(v), a.requires_grad(), [ia, c, m](Tape& tp, std::size_t self) {
      const auto& g = tp.cgrad_of(self);
      auto& acc = tp.cgrad_acc(ia);
      for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i] * c[i % m];
    });
  }
  RealTensor v = a.value();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] *= c[i % m];
  return a.tape->record(std::move(v), a.requires_grad(), [ia, c, m](Tape& tp, std::size_t self) {
    const auto& g = tp.grad_of(self);
    auto& acc = tp.grad_acc(ia);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i] * c[i % m];
  });
}

Var mul_const(Var a, const ComplexTensor& c) {
  if (!a.is_complex()) throw ShapeError("mul_const: complex constant on a real node");
  if (!suffix_of(c.shape(), a.shape())) throw ShapeError("mul_const: constant shape must be a suffix");
  const std::size_t ia = a.id, m = c.size();
  ComplexTensor v = a.cvalue();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] *= c[i % m];
  return a.tape->record(std::move(v), a.requires_grad(), [ia, c, m](Tape& tp, std::size_t self) {
    const auto& g = tp.cgrad_of(self);
    auto& acc = tp.cgrad_acc(ia);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i] * std::conj(c[i % m]);
  });
}

Var add_const(Var a, const RealTensor& c) {
  if (a.is_complex()) throw ShapeError("add_const: real node expected");
  if (!suffix_of(c.shape(), a.shape())) throw ShapeError("add_const: constant shape must be a suffix");
  const std::size_t ia = a.id, m = c.size();
  RealTensor v = a.value();
  for (std::size_t i = 0; i < v.size(); ++i) v[i] += c[i % m];
  return a.tape->record(std::move(v), a.requires_grad(),
                        [ia](Tape& tp, std::size_t self) { accumulate(tp, ia, tp.grad_of(self)); });
}

Var activation(Var a, Activation kind) {
  if (a.is_complex()) throw ShapeError("activation: real node expected; split complex fields first");
  if (kind == Activation::Identity) return a;
  RealTensor v = a.value();
  for (auto& x : v.storage()) x = activate(kind, x);
  const std::size_t ia = a.id;
  return a.tape->record(std::move(v), a.requires_grad(), [ia, kind](Tape& tp, std::size_t self) {
    const auto& g = tp.grad_of(self);
    const auto& x = tp.value(ia);
    auto& acc = tp.grad_acc(ia);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i] * activate_derivative(kind, x[i]);
  });
}

Var square(Var a) {
  if (a.is_complex()) throw ShapeError("square: real node expected");
  RealTensor v = a.value();
  for (auto& x : v.storage()) x *= x;
  const std::size_t ia = a.id;
  return a.tape->record(std::move(v), a.requires_grad(), [ia](Tape& tp, std::size_t self) {
    const auto& g = tp.grad_of(self);
    const auto& x = tp.value(ia);
    auto& acc = tp.grad_acc(ia);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += 2.0 * g[i] * x[i];
  });
}

Var abs_pow(Var a, double p) {
  if (a.is_complex()) throw ShapeError("abs_pow: real node expected");
  if (p < 1.0) throw ShapeError("abs_pow: exponent must be >= 1");
  RealTensor v = a.value();
  for (auto& x : v.storage()) x = std::pow(std::abs(x), p);
  const std::size_t ia = a.id;
  return a.tape->record(std::move(v), a.requires_grad(), [ia, p](Tape& tp, std::size_t self) {
    const auto& g = tp.grad_of(self);
    const auto& x = tp.value(ia);
    auto& acc = tp.grad_acc(ia);
    for (std::size_t i = 0; i < acc.size(); ++i) {
      if (x[i] == 0.0) continue;
      const double d = p == 2.0 ? 2.0 * x[i] : p * std::pow(std::abs(x[i]), p - 1.0) * (x[i] > 0 ? 1.0 : -1.0);
      acc[i] += g[i] * d;
    }
  });
}

// ---------------------------------------------------------------------------
// reductions

Var sum(Var a) {
  if (a.is_complex()) throw ShapeError("sum: real node expected");
  double s = 0.0;
  for (double x : a.value().data()) s += x;
  const std::size_t ia = a.id;
  return a.tape->record(RealTensor(Shape{}, s), a.requires_grad(), [ia](Tape& tp, std::size_t self) {
    const double g = tp.grad_of(self)[0];
    auto& acc = tp.grad_acc(ia);
    for (auto& x : acc.storage()) x += g;
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var sum_trailing(Var a) {
  if (a.is_complex()) throw ShapeError("sum_trailing: real node expected");
  const auto& x = a.value();
  if (x.rank() < 1) throw ShapeError("sum_trailing: needs a leading axis");
  const std::size_t b = x.extent(0), per = x.size() / b;
  RealTensor v({b}, 0.0);
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < per; ++j) v[i] += x[i * per + j];
  const std::size_t ia = a.id;
  return a.tape->record(std::move(v), a.requires_grad(), [ia, per](Tape& tp, std::size_t self) {
    const auto& g = tp.grad_of(self);
    auto& acc = tp.grad_acc(ia);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i / per];
  });
}

// ---------------------------------------------------------------------------
// channel maps

Var channel_linear(Var x, Var weight) { return channel_linear(x, weight, Var{}); }

Var channel_linear(Var x, Var weight, Var bias) {
  same_tape(x, weight);
  const bool has_bias = bias.tape != nullptr;
  if (x.is_complex() || weight.is_complex() || (has_bias && bias.is_complex())) {
    throw ShapeError("channel_linear: real operands only (wrap complex layers)");
  }
  const auto d = channel_dims(x.shape(), "channel_linear");
  const auto& w = weight.value();
  if (w.rank() != 2 || w.extent(1) != d.channels) {
    throw ShapeError("channel_linear: weight " + shape_string(w.shape()) + " does not take " +
                     std::to_string(d.channels) + " channels");
  }
  const std::size_t cout = w.extent(0), cin = d.channels, P = d.points;
  if (has_bias && bias.value().shape() != Shape{cout}) throw ShapeError("channel_linear: bias shape mismatch");
  Shape out_shape = x.shape();
  out_shape[1] = cout;
  RealTensor y(out_shape, 0.0);
  const auto& xv = x.value();
  for (std::size_t b = 0; b < d.batch; ++b)
    for (std::size_t o = 0; o < cout; ++o) {
      double* dst = y.data().data() + (b * cout + o) * P;
      if (has_bias) {
        const double bo = bias.value()[o];
        for (std::size_t p = 0; p < P; ++p) dst[p] = bo;
      }
      for (std::size_t i = 0; i < cin; ++i) {
        const double wi = w[o * cin + i];
        const double* src = xv.data().data() + (b * cin + i) * P;
        for (std::size_t p = 0; p < P; ++p) dst[p] += wi * src[p];
      }
    }
  const std::size_t ix = x.id, iw = weight.id, ib = has_bias ? bias.id : 0;
  const bool rg = x.requires_grad() || weight.requires_grad() || (has_bias && bias.requires_grad());
  return x.tape->record(std::move(y), rg, [=](Tape& tp, std::size_t self) {
    const auto& g = tp.grad_of(self);
    const auto& wv = tp.value(iw);
    if (tp.requires_grad(ix)) {
      auto& gx = tp.grad_acc(ix);
      for (std::size_t b = 0; b < d.batch; ++b)
        for (std::size_t o = 0; o < cout; ++o) {
          const double* go = g.data().data() + (b * cout + o) * P;
          for (std::size_t i = 0; i < cin; ++i) {
            const double wi = wv[o * cin + i];
            double* dst = gx.data().data() + (b * cin + i) * P;
            for (std::size_t p = 0; p < P; ++p) dst[p] += wi * go[p];
          }
        }
    }
    if (tp.requires_grad(iw)) {
      auto& gw = tp.grad_acc(iw);
      const auto& xv2 = tp.value(ix);
      for (std::size_t b = 0; b < d.batch; ++b)
        for (std::size_t o = 0; o < cout; ++o) {
          const double* go = g.data().data() + (b * cout + o) * P;
          for (std::size_t i = 0; i < cin; ++i) {
            const double* src = xv2.data().data() + (b * cin + i) * P;
            double acc = 0.0;
            for (std::size_t p = 0; p < P; ++p) acc += go[p] * src[p];
            gw[o * cin + i] += acc;
          }
        }
    }
    if (has_bias && tp.requires_grad(ib)) {
      auto& gb = tp.grad_acc(ib);
      for (std::size_t b = 0; b < d.batch; ++b)
        for (std::size_t o = 0; o < cout; ++o) {
          const double* go = g.data().data() + (b * cout + o) * P;
          double acc = 0.0;
          for (std::size_t p = 0; p < P; ++p) acc += go[p];
          gb[o] += acc;
        }
    }
  });
}

Var channel_affine(Var x, Var w, Var bias) {
  same_tape(x, w);
  same_tape(x, bias);
  if (x.is_complex() || w.is_complex() || bias.is_complex()) throw ShapeError("channel_affine: real operands only");
  const auto d = channel_dims(x.shape(), "channel_affine");
  if (w.value().shape() != Shape{d.channels} || bias.value().shape() != Shape{d.channels}) {
    throw ShapeError("channel_affine: per-channel parameters expected");
  }
  RealTensor y = x.value();
  const auto& wv = w.value();
  const auto& bv = bias.value();
  for (std::size_t b = 0; b < d.batch; ++b)
    for (std::size_t c = 0; c < d.channels; ++c) {
      double* p = y.data().data() + (b * d.channels + c) * d.points;
      for (std::size_t j = 0; j < d.points; ++j) p[j] = wv[c] * p[j] + bv[c];
    }
  const std::size_t ix = x.id, iw = w.id, ib = bias.id;
  const bool rg = x.requires_grad() || w.requires_grad() || bias.requires_grad();
  return x.tape->record(std::move(y), rg, [=](Tape& tp, std::size_t self) {
    const auto& g = tp.grad_of(self);
    const auto& wv2 = tp.value(iw);
    const auto& xv = tp.value(ix);
    for (std::size_t b = 0; b < d.batch; ++b)
      for (std::size_t c = 0; c < d.channels; ++c) {
        const std::size_t base = (b * d.channels + c) * d.points;
        double sg = 0.0, sgx = 0.0;
        for (std::size_t j = 0; j < d.points; ++j) {
          sg += g[base + j];
          sgx += g[base + j] * xv[base + j];
        }
        if (tp.requires_grad(ix)) {
          auto& gx = tp.grad_acc(ix);
          for (std::size_t j = 0; j < d.points; ++j) gx[base + j] += wv2[c] * g[base + j];
        }
        if (tp.requires_grad(iw)) tp.grad_acc(iw)[c] += sgx;
        if (tp.requires_grad(ib)) tp.grad_acc(ib)[c] += sg;
      }
  });
}

Var add_channel_bias(Var x, Var bias) {
  same_tape(x, bias);
  if (x.is_complex() || bias.is_complex()) throw ShapeError("add_channel_bias: real operands only");
  const auto d = channel_dims(x.shape(), "add_channel_bias");
  if (bias.value().shape() != Shape{d.channels}) throw ShapeError("add_channel_bias: bias shape mismatch");
  RealTensor y = x.value();
  const auto& bv = bias.value();
  for (std::size_t b = 0; b < d.batch; ++b)
    for (std::size_t c = 0; c < d.channels; ++c) {
      double* p = y.data().data() + (b * d.channels + c) * d.points;
      for (std::size_t j = 0; j < d.points; ++j) p[j] += bv[c];
    }
  const std::size_t ix = x.id, ib = bias.id;
  return x.tape->record(std::move(y), x.requires_grad() || bias.requires_grad(), [=](Tape& tp, std::size_t self) {
    const auto& g = tp.grad_of(self);
    accumulate(tp, ix, g);
    if (tp.requires_grad(ib)) {
      auto& gb = tp.grad_acc(ib);
      for (std::size_t b = 0; b < d.batch; ++b)
        for (std::size_t c = 0; c < d.channels; ++c) {
          const std::size_t base = (b * d.channels + c) * d.points;
          double acc = 0.0;
          for (std::size_t j = 0; j < d.points; ++j) acc += g[base + j];
          gb[c] += acc;
        }
    }
  });
}

Var instance_norm(Var x, double eps) {
  if (x.is_complex()) throw ShapeError("instance_norm: real node expected");
  const auto d = channel_dims(x.shape(), "instance_norm");
  RealTensor y = x.value();
  std::vector<double> inv_std(d.batch * d.channels);
  const auto np = static_cast<double>(d.points);
  for (std::size_t bc = 0; bc < d.batch * d.channels; ++bc) {
    double* p = y.data().data() + bc * d.points;
    double mu = 0.0;
    for (std::size_t j = 0; j < d.points; ++j) mu += p[j];
    mu /= np;
    double var = 0.0;
    for (std::size_t j = 0; j < d.points; ++j) var += (p[j] - mu) * (p[j] - mu);
    var /= np;
    inv_std[bc] = 1.0 / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d.points; ++j) p[j] = (p[j] - mu) * inv_std[bc];
  }
  const std::size_t ix = x.id;
  return x.tape->record(std::move(y), x.requires_grad(), [=](Tape& tp, std::size_t self) {
    const auto& g = tp.grad_of(self);
    const auto& yv = tp.value(self);
    auto& gx = tp.grad_acc(ix);
    for (std::size_t bc = 0; bc < d.batch * d.channels; ++bc) {
      const std::size_t base = bc * d.points;
      double mg = 0.0, mgy = 0.0;
      for (std::size_t j = 0; j < d.points; ++j) {
        mg += g[base + j];
        mgy += g[base + j] * yv[base + j];
      }
      mg /= np;
      mgy /= np;
      for (std::size_t j = 0; j < d.points; ++j) gx[base + j] += inv_std[bc] * (g[base + j] - mg - yv[base + j] * mgy);
    }
  });
}

// ---------------------------------------------------------------------------
// complex plumbing

Var to_complex(Var x) {
  if (x.is_complex()) return x;
  const std::size_t ix = x.id;
  return x.tape->record(sok::to_complex(x.value()), x.requires_grad(), [ix](Tape& tp, std::size_t self) {
    const auto& g = tp.cgrad_of(self);
    auto& acc = tp.grad_acc(ix);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i].real();
  });
}

Var real_part(Var z) {
  if (!z.is_complex()) return z;
  const std::size_t iz = z.id;
  return z.tape->record(sok::real_part(z.cvalue()), z.requires_grad(), [iz](Tape& tp, std::size_t self) {
    const auto& g = tp.grad_of(self);
    auto& acc = tp.cgrad_acc(iz);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += g[i];
  });
}

Var imag_part(Var z) {
  if (!z.is_complex()) throw ShapeError("imag_part: complex node expected");
  const std::size_t iz = z.id;
  return z.tape->record(sok::imag_part(z.cvalue()), z.requires_grad(), [iz](Tape& tp, std::size_t self) {
    const auto& g = tp.grad_of(self);
    auto& acc = tp.cgrad_acc(iz);
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += Complex(0.0, g[i]);
  });
}

Var make_complex(Var re, Var im) {
  same_tape(re, im);
  same_shape(re, im, "make_complex");
  const std::size_t ir = re.id, ii = im.id;
  return re.tape->record(sok::make_complex(re.value(), im.value()), re.requires_grad() || im.requires_grad(),
                         [ir, ii](Tape& tp, std::size_t self) {
                           const auto& g = tp.cgrad_of(self);
                           if (tp.requires_grad(ir)) {
                             auto& a = tp.grad_acc(ir);
                             for (std::size_t i = 0; i < a.size(); ++i) a[i] += g[i].real();
                           }
                           if (tp.requires_grad(ii)) {
                             auto& a = tp.grad_acc(ii);
                             for (std::size_t i = 0; i < a.size(); ++i) a[i] += g[i].imag();
                           }
                         });
}

Var fft(Var z, std::vector<std::size_t> axes, bool inverse) {
  if (!z.is_complex()) z = to_complex(z);
  ComplexTensor v = z.cvalue();
  fft_inplace(v, axes, inverse);
  const std::size_t iz = z.id;
  return z.tape->record(std::move(v), z.requires_grad(), [iz, axes, inverse](Tape& tp, std::size_t self) {
    ComplexTensor g = tp.cgrad_of(self);
    fft_inplace(g, axes, !inverse);
    accumulate(tp, iz, g);
  });
}

Var roll(Var z, std::vector<std::size_t> axes, bool to_centered) {
  if (!z.is_complex()) throw ShapeError("roll: complex node expected");
  const std::size_t iz = z.id;
  return z.tape->record(roll_axes(z.cvalue(), axes, to_centered), z.requires_grad(),
                        [iz, axes, to_centered](Tape& tp, std::size_t self) {
                          accumulate(tp, iz, roll_axes(tp.cgrad_of(self), axes, !to_centered));
                        });
}

Var center_resize(Var z, std::vector<std::size_t> axes, std::vector<std::size_t> extents) {
  if (!z.is_complex()) throw ShapeError("center_resize: complex node expected");
  std::vector<std::size_t> original;
  for (std::size_t a : axes) original.push_back(z.shape().at(a));
  const std::size_t iz = z.id;
  return z.tape->record(sok::center_resize(z.cvalue(), axes, extents), z.requires_grad(),
                        [iz, axes, original](Tape& tp, std::size_t self) {
                          accumulate(tp, iz, sok::center_resize(tp.cgrad_of(self), axes, original));
                        });
}

Var corner_resize(Var x, std::vector<std::size_t> axes, std::vector<std::size_t> extents) {
  if (axes.size() != extents.size()) throw ShapeError("corner_resize: axes/extents mismatch");
  const Shape in_shape = x.shape();
  Shape out_shape = in_shape;
  for (std::size_t i = 0; i < axes.size(); ++i) out_shape.at(axes[i]) = extents[i];
  const std::size_t ix = x.id;
  if (x.is_complex()) {
    return x.tape->record(corner_copy(x.cvalue(), out_shape), x.requires_grad(), [ix, in_shape](Tape& tp, std::size_t self) {
      accumulate(tp, ix, corner_copy(tp.cgrad_of(self), in_shape));
    });
  }
  return x.tape->record(corner_copy(x.value(), out_shape), x.requires_grad(), [ix, in_shape](Tape& tp, std::size_t self) {
    accumulate(tp, ix, corner_copy(tp.grad_of(self), in_shape));
  });
}

Var reshape(Var a, Shape shape) {
  const std::size_t ia = a.id;
  if (a.is_complex()) {
    return a.tape->record(a.cvalue().reshaped(shape), a.requires_grad(),
                          [ia](Tape& tp, std::size_t self) { accumulate(tp, ia, tp.cgrad_of(self)); });
  }
  return a.tape->record(a.value().reshaped(shape), a.requires_grad(),
                        [ia](Tape& tp, std::size_t self) { accumulate(tp, ia, tp.grad_of(self)); });
}

// ---------------------------------------------------------------------------
// spectral contractions

Var mode_mix(Var x, Var w) {
  same_tape(x, w);
  if (!x.is_complex() || !w.is_complex()) throw ShapeError("mode_mix: complex operands expected");
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (xs.size() < 2 || ws.size() != xs.size() || ws[0] != xs[1] ||
      !std::equal(xs.begin() + 2, xs.end(), ws.begin() + 2)) {
    throw ShapeError("mode_mix: x " + shape_string(xs) + " incompatible with weight " + shape_string(ws));
  }
  const std::size_t B = xs[0], cin = xs[1], cout = ws[1];
  const std::size_t K = x.cvalue().size() / (B * cin);
  Shape ys = xs;
  ys[1] = cout;
  ComplexTensor y(ys, Complex(0.0));
  const Complex* xv = x.cvalue().data().data();
  const Complex* wv = w.cvalue().data().data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < cin; ++i) {
      const Complex* xi = xv + (b * cin + i) * K;
      for (std::size_t o = 0; o < cout; ++o) {
        const Complex* wio = wv + (i * cout + o) * K;
        Complex* yo = y.data().data() + (b * cout + o) * K;
        for (std::size_t k = 0; k < K; ++k) yo[k] += xi[k] * wio[k];
      }
    }
  const std::size_t ix = x.id, iw = w.id;
  return x.tape->record(std::move(y), x.requires_grad() || w.requires_grad(), [=](Tape& tp, std::size_t self) {
    const Complex* g = tp.cgrad_of(self).data().data();
    const Complex* xv2 = tp.cvalue(ix).data().data();
    const Complex* wv2 = tp.cvalue(iw).data().data();
    Complex* gx = tp.requires_grad(ix) ? tp.cgrad_acc(ix).data().data() : nullptr;
    Complex* gw = tp.requires_grad(iw) ? tp.cgrad_acc(iw).data().data() : nullptr;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t i = 0; i < cin; ++i)
        for (std::size_t o = 0; o < cout; ++o) {
          const Complex* go = g + (b * cout + o) * K;
          if (gx) {
            Complex* dst = gx + (b * cin + i) * K;
            const Complex* wio = wv2 + (i * cout + o) * K;
            for (std::size_t k = 0; k < K; ++k) dst[k] += go[k] * std::conj(wio[k]);
          }
          if (gw) {
            Complex* dst = gw + (i * cout + o) * K;
            const Complex* xi = xv2 + (b * cin + i) * K;
            for (std::size_t k = 0; k < K; ++k) dst[k] += go[k] * std::conj(xi[k]);
          }
        }
  });
}

Var mode_mix_axis(Var x, Var w, std::size_t axis) {
  same_tape(x, w);
  if (!x.is_complex() || !w.is_complex()) throw ShapeError("mode_mix_axis: complex operands expected");
  const Shape& xs = x.shape();
  const Shape& ws = w.shape();
  if (axis < 2 || axis >= xs.size() || ws.size() != 3 || ws[0] != xs[1] || ws[2] != xs[axis]) {
    throw ShapeError("mode_mix_axis: x " + shape_string(xs) + " incompatible with weight " + shape_string(ws));
  }
  const std::size_t B = xs[0], cin = xs[1], cout = ws[1], Ka = xs[axis];
  const std::size_t P = x.cvalue().size() / (B * cin);
  std::size_t inner = 1;
  for (std::size_t a = axis + 1; a < xs.size(); ++a) inner *= xs[a];
  std::vector<std::size_t> kidx(P);
  for (std::size_t p = 0; p < P; ++p) kidx[p] = (p / inner) % Ka;
  Shape ys = xs;
  ys[1] = cout;
  ComplexTensor y(ys, Complex(0.0));
  const Complex* xv = x.cvalue().data().data();
  const Complex* wv = w.cvalue().data().data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t i = 0; i < cin; ++i)
      for (std::size_t o = 0; o < cout; ++o) {
        const Complex* xi = xv + (b * cin + i) * P;
        const Complex* wio = wv + (i * cout + o) * Ka;
        Complex* yo = y.data().data() + (b * cout + o) * P;
        for (std::size_t p = 0; p < P; ++p) yo[p] += xi[p] * wio[kidx[p]];
      }
  const std::size_t ix = x.id, iw = w.id;
  return x.tape->record(std::move(y), x.requires_grad() || w.requires_grad(), [=](Tape& tp, std::size_t self) {
    const Complex* g = tp.cgrad_of(self).data().data();
    const Complex* xv2 = tp.cvalue(ix).data().data();
    const Complex* wv2 = tp.cvalue(iw).data().data();
    Complex* gx = tp.requires_grad(ix) ? tp.cgrad_acc(ix).data().data() : nullptr;
    Complex* gw = tp.requires_grad(iw) ? tp.cgrad_acc(iw).data().data() : nullptr;
    for (std::size_t b = 0; b < B; ++b)
      for (std::size_t i = 0; i < cin; ++i)
        for (std::size_t o = 0; o < cout; ++o) {
          const Complex* go = g + (b * cout + o) * P;
          const Complex* wio = wv2 + (i * cout + o) * Ka;
          const Complex* xi = xv2 + (b * cin + i) * P;
          for (std::size_t p = 0; p < P; ++p) {
            if (gx) gx[(b * cin + i) * P + p] += go[p] * std::conj(wio[kidx[p]]);
            if (gw) gw[(i * cout + o) * Ka + kidx[p]] += go[p] * std::conj(xi[p]);
          }
        }
  });
}

Var mode_product(Var t, Var m, std::size_t mode) {
  same_tape(t, m);
  if (!t.is_complex() || !m.is_complex()) throw ShapeError("mode_product: complex operands expected");
  const std::size_t it = t.id, im = m.id;
  return t.tape->record(sok::mode_product(t.cvalue(), m.cvalue(), mode), t.requires_grad() || m.requires_grad(),
                        [it, im, mode](Tape& tp, std::size_t self) {
                          const auto& g = tp.cgrad_of(self);
                          const auto& mv = tp.cvalue(im);
                          if (tp.requires_grad(it)) accumulate(tp, it, sok::mode_product_adjoint(g, mv, mode));
                          if (tp.requires_grad(im)) {
                            const auto& tv = tp.cvalue(it);
                            const Shape& s = tv.shape();
                            const std::size_t n = s[mode], rows = mv.extent(0);
                            std::size_t inner = 1, outer = 1;
                            for (std::size_t a = mode + 1; a < s.size(); ++a) inner *= s[a];
                            for (std::size_t a = 0; a < mode; ++a) outer *= s[a];
                            auto& gm = tp.cgrad_acc(im);
                            for (std::size_t o = 0; o < outer; ++o)
                              for (std::size_t r = 0; r < rows; ++r)
                                for (std::size_t j = 0; j < n; ++j) {
                                  Complex acc = 0.0;
                                  const Complex* gy = g.data().data() + (o * rows + r) * inner;
                                  const Complex* tx = tv.data().data() + (o * n + j) * inner;
                                  for (std::size_t i = 0; i < inner; ++i) acc += gy[i] * std::conj(tx[i]);
                                  gm[r * n + j] += acc;
                                }
                          }
                        });
}

Var matvec_axis(Var x, const RealTensor& matrix, std::size_t axis) {
  if (x.is_complex()) throw ShapeError("matvec_axis: real node expected");
  const Shape& s = x.shape();
  if (matrix.rank() != 2 || axis >= s.size() || matrix.extent(1) != s[axis]) {
    throw ShapeError("matvec_axis: matrix does not match the axis length");
  }
  const std::size_t rows = matrix.extent(0), n = s[axis];
  std::size_t inner = 1, outer = 1;
  for (std::size_t a = axis + 1; a < s.size(); ++a) inner *= s[a];
  for (std::size_t a = 0; a < axis; ++a) outer *= s[a];
  Shape ys = s;
  ys[axis] = rows;
  RealTensor y(ys, 0.0);
  const auto& xv = x.value();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t j = 0; j < n; ++j) {
        const double a = matrix[r * n + j];
        if (a == 0.0) continue;
        const double* src = xv.data().data() + (o * n + j) * inner;
        double* dst = y.data().data() + (o * rows + r) * inner;
        for (std::size_t i = 0; i < inner; ++i) dst[i] += a * src[i];
      }
  const std::size_t ix = x.id;
  return x.tape->record(std::move(y), x.requires_grad(), [=](Tape& tp, std::size_t self) {
    const auto& g = tp.grad_of(self);
    auto& gx = tp.grad_acc(ix);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < n; ++j) {
          const double a = matrix[r * n + j];
          if (a == 0.0) continue;
          const double* src = g.data().data() + (o * rows + r) * inner;
          double* dst = gx.data().data() + (o * n + j) * inner;
          for (std::size_t i = 0; i < inner; ++i) dst[i] += a * src[i];
        }
  });
}

// ---------------------------------------------------------------------------
// composites

Var spectral_resample(Var x, const std::vector<std::size_t>& new_res) {
  const auto axes = trailing_axes(x.shape().size(), new_res.size());
  bool same = true;
  double factor = 1.0;
  for (std::size_t i = 0; i < axes.size(); ++i) {
    const std::size_t n = x.shape()[axes[i]];
    if (new_res[i] != n) same = false;
    factor *= std::sqrt(static_cast<double>(new_res[i]) / static_cast<double>(n));
  }
  if (same) return x;
  Var z = fft(to_complex(x), axes);
  z = roll(z, axes, true);
  z = center_resize(z, axes, new_res);
  z = roll(z, axes, false);
  z = fft(z, axes, true);
  return scale(real_part(z), factor);
}

Var spectral_derivative(Var x, const GridSpec& grid, std::size_t axis, int order) {
  if (order < 0) throw ShapeError("spectral_derivative: negative order");
  if (!grid.all_periodic()) throw ShapeError("spectral_derivative needs a periodic grid");
  if (axis >= grid.rank()) throw ShapeError("spectral_derivative: axis out of range");
  const auto axes = trailing_axes(x.shape().size(), grid.rank());
  for (std::size_t i = 0; i < axes.size(); ++i) {
    if (x.shape()[axes[i]] != grid.resolution[i]) throw ShapeError("spectral_derivative: grid/field mismatch");
  }
  if (order == 0) return x;
  Shape gshape(grid.resolution.begin(), grid.resolution.end());
  ComplexTensor mult(gshape);
  const std::size_t n = grid.resolution[axis];
  std::size_t inner = 1;
  for (std::size_t a = axis + 1; a < gshape.size(); ++a) inner *= gshape[a];
  for (std::size_t p = 0; p < mult.size(); ++p) {
    const std::size_t j = (p / inner) % n;
    const bool nyquist = (n % 2 == 0) && j == n / 2;
    mult[p] = (nyquist && order % 2 == 1) ? Complex(0.0)
                                          : std::pow(Complex(0.0, grid.wavenumber(axis, signed_frequency(j, n))), order);
  }
  const bool was_complex = x.is_complex();
  Var z = fft(to_complex(x), axes);
  z = mul_const(z, mult);
  z = fft(z, axes, true);
  return was_complex ? z : real_part(z);
}

}  // namespace sok::ad
