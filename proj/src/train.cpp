#include "sok/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include "sok/errors.hpp"
#include "sok/fft.hpp"
#include "sok/spectral_ops.hpp"

namespace sok {

using ad::Var;

// ---------------------------------------------------------------------------
// enum names

std::string_view to_string(LossKind k) {
  switch (k) {
    case LossKind::LpAbs: return "lp";
    case LossKind::LpRel: return "lp-rel";
    case LossKind::H1Abs: return "h1";
    case LossKind::H1Rel: return "h1-rel";
    case LossKind::WeightedLp: return "weighted-lp";
    case LossKind::Spectral: return "spectral";
  }
  return "?";
}

LossKind parse_loss_kind(std::string_view s) {
  if (s == "lp" || s == "lp-abs" || s == "l2") return LossKind::LpAbs;
  if (s == "lp-rel" || s == "rel-l2" || s == "relative") return LossKind::LpRel;
  if (s == "h1" || s == "h1-abs") return LossKind::H1Abs;
  if (s == "h1-rel") return LossKind::H1Rel;
  if (s == "weighted-lp" || s == "weighted") return LossKind::WeightedLp;
  if (s == "spectral") return LossKind::Spectral;
  throw ShapeError("unknown loss '" + std::string(s) + "' (lp | lp-rel | h1 | h1-rel | weighted-lp | spectral)");
}

std::string_view to_string(OptimizerKind k) { return k == OptimizerKind::Adam ? "adam" : "sgd"; }
std::string_view to_string(ScheduleKind k) {
  switch (k) {
    case ScheduleKind::Constant: return "constant";
    case ScheduleKind::Step: return "step";
    case ScheduleKind::Cosine: return "cosine";
  }
  return "?";
}
OptimizerKind parse_optimizer(std::string_view s) {
  if (s == "adam") return OptimizerKind::Adam;
  if (s == "sgd") return OptimizerKind::Sgd;
  throw ShapeError("unknown optimizer '" + std::string(s) + "' (adam | sgd)");
}
ScheduleKind parse_schedule(std::string_view s) {
  if (s == "constant") return ScheduleKind::Constant;
  if (s == "step") return ScheduleKind::Step;
  if (s == "cosine") return ScheduleKind::Cosine;
  throw ShapeError("unknown schedule '" + std::string(s) + "' (constant | step | cosine)");
}

std::string_view to_string(BalancerKind k) {
  switch (k) {
    case BalancerKind::Fixed: return "fixed";
    case BalancerKind::SoftAdapt: return "softadapt";
    case BalancerKind::ReLoBRaLo: return "relobralo";
  }
  return "?";
}
BalancerKind parse_balancer(std::string_view s) {
  if (s == "fixed") return BalancerKind::Fixed;
  if (s == "softadapt") return BalancerKind::SoftAdapt;
  if (s == "relobralo") return BalancerKind::ReLoBRaLo;
  throw ShapeError("unknown balancer '" + std::string(s) + "' (fixed | softadapt | relobralo)");
}

std::string_view to_string(IfnoCriterion c) {
  return c == IfnoCriterion::ExplainedRatio ? "explained-ratio" : "loss-stagnation";
}
IfnoCriterion parse_ifno_criterion(std::string_view s) {
  if (s == "explained-ratio" || s == "explained" || s == "ratio") return IfnoCriterion::ExplainedRatio;
  if (s == "loss-stagnation" || s == "stagnation") return IfnoCriterion::LossStagnation;
  throw ShapeError("unknown iFNO criterion '" + std::string(s) + "' (explained-ratio | loss-stagnation)");
}

// ---------------------------------------------------------------------------
// losses

void LossSpec::validate() const {
  if (p < 1.0) throw ShapeError("loss: p must be >= 1");
  if (!(epsilon >= 0)) throw ShapeError("loss: epsilon must be >= 0");
  if (kind == LossKind::WeightedLp && weights.rank() == 0) throw ShapeError("weighted loss needs a weight field");
  for (double q : quadrature.rank() == 0 ? std::span<const double>() : quadrature.data()) {
    if (!(q > 0)) throw ShapeError("loss: quadrature weights must be positive");
  }
}

namespace {

void check_fields(const Shape& a, const Shape& b, const GridSpec& grid) {
  if (a != b) throw ShapeError("loss: prediction and target shapes differ");
  const std::size_t d = grid.rank();
  if (a.size() != d + 2) throw ShapeError("loss: fields must be [B, C, N...] matching the grid rank");
  for (std::size_t j = 0; j < d; ++j) {
    if (a[2 + j] != grid.resolution[j]) throw ShapeError("loss: field resolution does not match the grid");
  }
}

// x * quadrature, per point
Var weigh(Var x, const LossSpec& spec, const GridSpec& grid) {
  if (spec.quadrature.rank() == 0) return ad::scale(x, grid.cell_volume());
  return ad::mul_const(x, spec.quadrature);
}

Var integral_pow(Var x, double p, const LossSpec& spec, const GridSpec& grid) {
  return ad::sum_trailing(weigh(ad::abs_pow(x, p), spec, grid));
}

Var ratio(Var num, Var den, double eps) {
  RealTensor e(den.shape(), eps);
  return ad::div(num, ad::add_const(den, e));
}

Var h1_integral(Var x, const LossSpec& spec, const GridSpec& grid) {
  Var s = integral_pow(x, 2.0, spec, grid);
  for (std::size_t a = 0; a < grid.rank(); ++a) {
    s = ad::add(s, integral_pow(ad::spectral_derivative(x, grid, a, 1), 2.0, spec, grid));
  }
  return s;
}

}  // namespace

Var sample_losses(Var pred, Var target, const LossSpec& spec, const GridSpec& grid) {
  spec.validate();
  check_fields(pred.shape(), target.shape(), grid);
  const Var diff = ad::sub(pred, target);
  switch (spec.kind) {
    case LossKind::LpAbs: return integral_pow(diff, spec.p, spec, grid);
    case LossKind::LpRel:
      return ratio(integral_pow(diff, spec.p, spec, grid), integral_pow(target, spec.p, spec, grid), spec.epsilon);
    case LossKind::WeightedLp:
      return ad::sum_trailing(weigh(ad::mul_const(ad::abs_pow(diff, spec.p), spec.weights), spec, grid));
    case LossKind::H1Abs: return h1_integral(diff, spec, grid);
    case LossKind::H1Rel: return ratio(h1_integral(diff, spec, grid), h1_integral(target, spec, grid), spec.epsilon);
    case LossKind::Spectral: {
      const auto axes = trailing_axes(pred.shape().size(), grid.rank());
      Var z = ad::fft(ad::to_complex(diff), axes);
      if (spec.band > 0) {
        Shape gs(grid.resolution.begin(), grid.resolution.end());
        RealTensor mask(gs, 1.0);
        std::size_t inner = mask.size();
        for (std::size_t a = 0; a < gs.size(); ++a) {
          inner /= gs[a];
          for (std::size_t i = 0; i < mask.size(); ++i) {
            const long k = signed_frequency((i / inner) % gs[a], gs[a]);
            if (std::labs(k) > static_cast<long>(spec.band)) mask[i] = 0.0;
          }
        }
        z = ad::mul_const(z, mask);
      }
      // orthonormal transform: sum |Z|^2 = sum |e|^2 (uniform quadrature)
      const Var e2 = ad::add(ad::square(ad::real_part(z)), ad::square(ad::imag_part(z)));
      return ad::sum_trailing(ad::scale(e2, grid.cell_volume()));
    }
  }
  throw ShapeError("loss: unknown kind");
}

Var loss(Var pred, Var target, const LossSpec& spec, const GridSpec& grid) {
  return ad::mean(sample_losses(pred, target, spec, grid));
}

double evaluate_loss(const RealTensor& pred, const RealTensor& target, const LossSpec& spec, const GridSpec& grid) {
  ad::Tape t;
  return loss(t.constant(pred), t.constant(target), spec, grid).value()[0];
}

double lp_loss(const RealTensor& pred, const RealTensor& target, const GridSpec& grid, double p, bool relative,
               double epsilon) {
  LossSpec s;
  s.kind = relative ? LossKind::LpRel : LossKind::LpAbs;
  s.p = p;
  s.epsilon = epsilon;
  return evaluate_loss(pred, target, s, grid);
}

double h1_loss(const RealTensor& pred, const RealTensor& target, const GridSpec& grid, bool relative) {
  LossSpec s;
  s.kind = relative ? LossKind::H1Rel : LossKind::H1Abs;
  return evaluate_loss(pred, target, s, grid);
}

double spectral_loss(const RealTensor& pred, const RealTensor& target, const GridSpec& grid, std::size_t band) {
  LossSpec s;
  s.kind = LossKind::Spectral;
  s.band = band;
  return evaluate_loss(pred, target, s, grid);
}

std::vector<double> relative_l2_per_sample(const RealTensor& pred, const RealTensor& target) {
  if (pred.shape() != target.shape() || pred.rank() < 1) throw ShapeError("relative_l2: shape mismatch");
  const std::size_t b = pred.extent(0), per = pred.size() / b;
  std::vector<double> out(b);
  for (std::size_t s = 0; s < b; ++s) {
    double num = 0, den = 0;
    for (std::size_t j = 0; j < per; ++j) {
      const double e = pred[s * per + j] - target[s * per + j];
      num += e * e;
      den += target[s * per + j] * target[s * per + j];
    }
    out[s] = den > 0 ? std::sqrt(num / den) : std::sqrt(num);
  }
  return out;
}

double mean_relative_l2(const RealTensor& pred, const RealTensor& target) {
  const auto v = relative_l2_per_sample(pred, target);
  if (v.empty()) throw ShapeError("relative_l2: no samples");
  double s = 0;
  for (double x : v) s += x;
  return s / double(v.size());
}

// ---------------------------------------------------------------------------
// optimizers

double scheduled_lr(const OptimizerConfig& cfg, std::size_t epoch, std::size_t total) {
  switch (cfg.schedule) {
    case ScheduleKind::Constant: return cfg.lr;
    case ScheduleKind::Step:
      return cfg.lr * std::pow(cfg.gamma, double(epoch / std::max<std::size_t>(cfg.step_size, 1)));
    case ScheduleKind::Cosine: {
      const double f = total == 0 ? 0.0 : double(epoch) / double(total);
      return cfg.min_lr + 0.5 * (cfg.lr - cfg.min_lr) * (1.0 + std::cos(std::numbers::pi * f));
    }
  }
  return cfg.lr;
}

void Optimizer::reset() {
  m_.clear();
  v_.clear();
  t_ = 0;
}

void Optimizer::step(std::vector<double>& params, const std::vector<double>& grads, double lr) {
  if (params.size() != grads.size()) throw ShapeError("optimizer: parameter/gradient size mismatch");
  if (m_.size() != params.size()) {
    m_.assign(params.size(), 0.0);
    v_.assign(params.size(), 0.0);
  }
  ++t_;
  const double wd = cfg_.weight_decay;
  if (cfg_.kind == OptimizerKind::Sgd) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double g = grads[i] + wd * params[i];
      if (cfg_.momentum > 0) {
        m_[i] = cfg_.momentum * m_[i] + g;
        params[i] -= lr * m_[i];
      } else {
        params[i] -= lr * g;
      }
    }
    return;
  }
  const double b1 = cfg_.beta1, b2 = cfg_.beta2;
  const double c1 = 1.0 - std::pow(b1, double(t_)), c2 = 1.0 - std::pow(b2, double(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i] + wd * params[i];
    m_[i] = b1 * m_[i] + (1 - b1) * g;
    v_[i] = b2 * v_[i] + (1 - b2) * g * g;
    params[i] -= lr * (m_[i] / c1) / (std::sqrt(v_[i] / c2) + cfg_.eps);
  }
}

// ---------------------------------------------------------------------------
// balancing

namespace {

std::vector<double> softmax(std::vector<double> z) {
  const double top = *std::max_element(z.begin(), z.end());
  double s = 0;
  for (auto& v : z) {
    v = std::exp(v - top);
    s += v;
  }
  for (auto& v : z) v /= s;
  return z;
}

}  // namespace

std::vector<double> softadapt_weights(const std::vector<double>& previous, const std::vector<double>& current,
                                      double tau) {
  if (previous.size() != current.size() || current.empty()) throw ShapeError("softadapt: loss count mismatch");
  std::vector<double> z(current.size());
  for (std::size_t i = 0; i < z.size(); ++i) z[i] = tau * (current[i] - previous[i]);
  return softmax(z);
}

std::vector<double> relobralo_balance(const std::vector<double>& current, const std::vector<double>& reference,
                                      double tau) {
  if (reference.size() != current.size() || current.empty()) throw ShapeError("relobralo: loss count mismatch");
  if (!(tau > 0)) throw ShapeError("relobralo: tau must be positive");
  std::vector<double> z(current.size());
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double ref = reference[i] != 0.0 ? reference[i] : 1e-300;
    z[i] = current[i] / (tau * ref);
  }
  auto w = softmax(z);
  for (auto& v : w) v *= double(w.size());
  return w;
}

Balancer::Balancer(BalancerConfig cfg, std::size_t terms, std::uint64_t seed)
    : cfg_(std::move(cfg)), m_(terms), rng_(derive_seed(seed, 0xBA1A)) {
  if (terms == 0) throw ShapeError("balancer: no loss terms");
  if (cfg_.kind == BalancerKind::Fixed) {
    lambda_ = cfg_.fixed.empty() ? std::vector<double>(terms, 1.0) : cfg_.fixed;
    if (lambda_.size() != terms) throw ShapeError("balancer: fixed weight count mismatch");
  } else if (cfg_.kind == BalancerKind::SoftAdapt) {
    lambda_.assign(terms, 1.0 / double(terms));
  } else {
    lambda_.assign(terms, 1.0);
  }
}

std::vector<double> Balancer::update(const std::vector<double>& losses) {
  if (losses.size() != m_) throw ShapeError("balancer: loss count mismatch");
  if (cfg_.kind == BalancerKind::Fixed) return lambda_;
  if (first_.empty()) {
    first_ = previous_ = losses;
    return lambda_;
  }
  if (cfg_.kind == BalancerKind::SoftAdapt) {
    lambda_ = softadapt_weights(previous_, losses, cfg_.tau);
  } else {
    const double rho = std::bernoulli_distribution(cfg_.rho_prob)(rng_) ? 1.0 : 0.0;
    const auto hist = relobralo_balance(losses, first_, cfg_.tau);
    const auto recent = relobralo_balance(losses, previous_, cfg_.tau);
    for (std::size_t i = 0; i < m_; ++i) {
      lambda_[i] = cfg_.alpha * (rho * lambda_[i] + (1 - rho) * hist[i]) + (1 - cfg_.alpha) * recent[i];
    }
  }
  previous_ = losses;
  return lambda_;
}

// ---------------------------------------------------------------------------
// iFNO

double explained_ratio(const std::vector<double>& power, std::size_t k) {
  if (power.empty()) throw ShapeError("explained_ratio: empty spectrum");
  const double total = std::accumulate(power.begin(), power.end(), 0.0);
  if (total <= 0) return 1.0;
  k = std::min(k, power.size());
  return std::accumulate(power.begin(), power.begin() + long(k), 0.0) / total;
}

bool loss_stagnated(const std::vector<double>& history, std::size_t window, double eps) {
  if (window == 0 || history.size() <= window) return false;
  const double ref = history[history.size() - 1 - window];
  const double best = *std::min_element(history.end() - long(window), history.end());
  return ref - best < eps * std::abs(ref);
}

bool IfnoSchedule::capped() const {
  for (std::size_t a = 0; a < current.size(); ++a) {
    if (current[a] < maximum.at(a)) return false;
  }
  return true;
}

bool ifno_should_expand(const IfnoSchedule& s, std::size_t axis, const std::vector<double>& power,
                        const std::vector<double>& loss_history) {
  if (axis >= s.current.size() || axis >= s.maximum.size()) throw ShapeError("ifno: axis out of range");
  if (s.current[axis] >= s.maximum[axis]) return false;
  if (s.criterion == IfnoCriterion::ExplainedRatio) return explained_ratio(power, s.current[axis]) < s.alpha_ratio;
  return loss_stagnated(loss_history, s.window, s.eps_improve);
}

bool ifno_step(IfnoSchedule& s, const FnoModel& model, const std::vector<double>& loss_history) {
  bool grew = false;
  for (std::size_t a = 0; a < s.current.size(); ++a) {
    const auto power = s.criterion == IfnoCriterion::ExplainedRatio ? model.mode_power(a) : std::vector<double>{};
    if (ifno_should_expand(s, a, power, loss_history)) {
      s.current[a] = std::min(s.current[a] + std::max<std::size_t>(s.increment, 1), s.maximum[a]);
      grew = true;
    }
  }
  return grew;
}

// ---------------------------------------------------------------------------
// physics

namespace {

void check_zero_mean(const RealTensor& f, double tol) {
  const std::size_t b = f.extent(0), per = f.size() / b;
  for (std::size_t s = 0; s < b; ++s) {
    RealTensor one({per}, std::vector<double>(f.data().begin() + long(s * per), f.data().begin() + long((s + 1) * per)));
    const double m = relative_mean(one);
    if (std::abs(m) > tol) {
      throw NumericalError("poisson residual: source sample " + std::to_string(s) + " has mean/rms " +
                           std::to_string(m) + "; a periodic solution needs mean(f) = 0");
    }
  }
}

}  // namespace

Var physics_residual_poisson(Var u, const RealTensor& f, const GridSpec& grid, double mean_tol) {
  if (u.shape() != f.shape()) throw ShapeError("poisson residual: u and f shapes differ");
  if (u.shape().size() != grid.rank() + 2 || u.shape()[1] != 1) {
    throw ShapeError("poisson residual: fields must be [B, 1, N...]");
  }
  check_zero_mean(f, mean_tol);
  Var lap = ad::spectral_derivative(u, grid, 0, 2);
  for (std::size_t a = 1; a < grid.rank(); ++a) lap = ad::add(lap, ad::spectral_derivative(u, grid, a, 2));
  RealTensor neg_f = f;
  for (auto& v : neg_f.storage()) v = -v;
  const Var r = ad::add_const(ad::scale(lap, -1.0), neg_f);
  const Var res = ad::sum_trailing(ad::scale(ad::square(r), grid.cell_volume()));
  const Var pin = ad::square(ad::scale(ad::sum_trailing(u), 1.0 / double(grid.points())));
  return ad::mean(ad::add(res, pin));
}

double physics_residual_poisson(const RealTensor& u, const RealTensor& f, const GridSpec& grid,
                                const ExtensionOperator* extension, double mean_tol) {
  if (!extension) {
    ad::Tape t;
    return physics_residual_poisson(t.constant(u), f, grid, mean_tol).value()[0];
  }
  if (grid.rank() != 1 || u.shape() != f.shape() || u.rank() != 3 || u.extent(1) != 1) {
    throw ShapeError("poisson residual with continuation: 1D fields [B, 1, N] expected");
  }
  const std::size_t n = grid.resolution[0], c = extension->c, b = u.extent(0);
  const auto ext_grid = GridSpec::periodic_box({n + c}, grid.spacing(0) * double(n + c));
  double total = 0;
  for (std::size_t s = 0; s < b; ++s) {
    const std::span<const double> us(u.data().data() + s * n, n);
    const auto ext = extend_1d(us, *extension);
    const auto d2 = spectral_derivative(RealTensor({n + c}, ext), ext_grid, 0, 2);
    const auto inner = restrict_1d(d2.data(), n, c);
    // no mean pin here: a continued (non-periodic) problem has no constant nullspace
    double r = 0;
    for (std::size_t j = 0; j < n; ++j) {
      const double e = -inner[j] - f[s * n + j];
      r += e * e * grid.spacing(0);
    }
    total += r;
  }
  return total / double(b);
}

// ---------------------------------------------------------------------------
// training

namespace {

template <class T>
Tensor<T> rows(const Tensor<T>& x, const std::vector<std::size_t>& idx) {
  Shape s = x.shape();
  const std::size_t per = x.size() / s[0];
  s[0] = idx.size();
  Tensor<T> out(s);
  for (std::size_t i = 0; i < idx.size(); ++i) {
    std::copy_n(x.data().begin() + long(idx[i] * per), per, out.data().begin() + long(i * per));
  }
  return out;
}

std::vector<std::size_t> iota_n(std::size_t b, std::size_t e) {
  std::vector<std::size_t> v(e - b);
  std::iota(v.begin(), v.end(), b);
  return v;
}

// y * std + mean per channel on the tape
Var denormalize_var(Var y, const ChannelStats& st) {
  if (st.empty()) return y;
  const Shape& s = y.shape();
  Shape cs(s.begin() + 1, s.end());
  const std::size_t per = shape_size(cs) / cs[0];
  RealTensor scale(cs), shift(cs);
  for (std::size_t i = 0; i < scale.size(); ++i) {
    scale[i] = st.std.at(i / per);
    shift[i] = st.mean.at(i / per);
  }
  return ad::add_const(ad::mul_const(y, scale), shift);
}

}  // namespace

RealTensor predict(const FnoModel& model, const RealTensor& inputs, const ChannelStats& input_stats,
                   const ChannelStats& output_stats, std::size_t batch) {
  if (inputs.rank() < 3 || inputs.extent(0) == 0) throw ShapeError("predict: inputs must be [S, C, N...] with S > 0");
  const std::size_t S = inputs.extent(0);
  const RealTensor x = normalize(inputs, input_stats);
  std::vector<RealTensor> parts;
  for (std::size_t b = 0; b < S; b += batch) {
    const auto idx = iota_n(b, std::min(S, b + batch));
    parts.push_back(denormalize(model.forward(rows(x, idx)), output_stats));
  }
  if (parts.size() == 1) return parts[0];
  Shape s = parts[0].shape();
  s[0] = S;
  RealTensor out(s);
  std::size_t off = 0;
  for (const auto& p : parts) {
    std::copy(p.data().begin(), p.data().end(), out.data().begin() + long(off));
    off += p.size();
  }
  return out;
}

TrainResult train(FnoModel& model, const Dataset& ds, const TrainConfig& cfg) {
  const std::size_t S = ds.samples();
  if (S == 0) throw ShapeError("train: empty dataset");
  const std::size_t n_train = ds.n_train == 0 ? S : ds.n_train;
  if (n_train > S) throw ShapeError("train: n_train exceeds the sample count");
  if (cfg.batch_size == 0) throw ShapeError("train: batch size must be positive");
  const auto& mc = model.config();
  if (ds.inputs.extent(1) != mc.in_channels || ds.outputs.extent(1) != mc.out_channels) {
    throw ShapeError("train: dataset channels do not match the model");
  }
  cfg.loss.validate();

  TrainResult result;
  if (cfg.normalize) {
    Dataset tmp = ds;
    tmp.n_train = n_train;
    if (tmp.input_stats.empty() || tmp.output_stats.empty()) tmp.compute_stats();
    result.input_stats = tmp.input_stats;
    result.output_stats = tmp.output_stats;
  }
  result.term_names = {"data"};
  const bool physics = cfg.physics_weight > 0;
  if (physics) {
    if (mc.in_channels != 1 || mc.out_channels != 1) throw ShapeError("train: the Poisson term needs 1 -> 1 channels");
    result.term_names.push_back("physics");
  }
  BalancerConfig bc = cfg.balancer;
  if (bc.kind == BalancerKind::Fixed && bc.fixed.empty()) {
    bc.fixed.assign(result.term_names.size(), 1.0);
    if (physics) bc.fixed[1] = cfg.physics_weight;
  }
  Balancer balancer(bc, result.term_names.size(), cfg.seed);
  Optimizer opt(cfg.optimizer);
  std::mt19937_64 rng(derive_seed(cfg.seed, 0x5EED));

  const auto train_idx = iota_n(0, n_train);
  const RealTensor x_train_phys = rows(ds.inputs, train_idx);
  const RealTensor y_train_phys = rows(ds.outputs, train_idx);
  const RealTensor x_test_phys = n_train < S ? rows(ds.inputs, iota_n(n_train, S)) : RealTensor();
  const RealTensor y_test_phys = n_train < S ? rows(ds.outputs, iota_n(n_train, S)) : RealTensor();

  std::optional<IfnoSchedule> ifno = cfg.ifno;
  std::size_t ladder_level = 0;
  if (ifno) {
    if (mc.max_n_modes.empty()) throw ShapeError("train: incremental modes need max_n_modes");
    ifno->current = mc.n_modes;
    ifno->maximum = mc.stored_modes();
  }
  // training data at the current resolution (the ladder may start coarse)
  RealTensor xin = normalize(x_train_phys, result.input_stats);
  RealTensor yin = normalize(y_train_phys, result.output_stats);
  RealTensor fin = x_train_phys;  // physical source for the physics term
  GridSpec grid = ds.grid;
  auto load_level = [&]() {
    xin = normalize(x_train_phys, result.input_stats);
    yin = normalize(y_train_phys, result.output_stats);
    fin = x_train_phys;
    grid = ds.grid;
    if (!ifno || ifno->resolution_ladder.empty()) return;
    const std::size_t r = ifno->resolution_ladder[std::min(ladder_level, ifno->resolution_ladder.size() - 1)];
    std::vector<std::size_t> res(grid.rank(), r);
    if (res == grid.resolution) return;
    xin = spectral_resample(xin, res);
    yin = spectral_resample(yin, res);
    fin = spectral_resample(fin, res);
    grid = ds.grid.resampled(res);
  };
  load_level();

  std::vector<double> metric_history;
  std::size_t since_growth = 0;
  std::vector<std::size_t> order = train_idx;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    const double lr = scheduled_lr(cfg.optimizer, epoch, cfg.epochs);
    if (cfg.shuffle) std::shuffle(order.begin(), order.end(), rng);
    std::vector<double> term_sum(result.term_names.size(), 0.0);
    std::size_t batches = 0;
    for (std::size_t b = 0; b < n_train; b += cfg.batch_size) {
      const std::vector<std::size_t> idx(order.begin() + long(b), order.begin() + long(std::min(n_train, b + cfg.batch_size)));
      ad::Tape tape;
      const auto bound = model.params().bind(tape, true);
      const Var x = tape.constant(rows(xin, idx));
      const Var y = tape.constant(rows(yin, idx));
      const Var pred = model.forward(tape, bound, x);
      std::vector<Var> terms{loss(pred, y, cfg.loss, grid)};
      if (physics) {
        terms.push_back(physics_residual_poisson(denormalize_var(pred, result.output_stats), rows(fin, idx), grid));
      }
      std::vector<double> values;
      for (auto& t : terms) values.push_back(t.value()[0]);
      const auto& lambda = balancer.weights();
      Var total = ad::scale(terms[0], lambda[0]);
      for (std::size_t i = 1; i < terms.size(); ++i) total = ad::add(total, ad::scale(terms[i], lambda[i]));
      tape.backward(total);
      auto flat = model.params().flatten();
      opt.step(flat, model.params().gather_grads(tape, bound), lr);
      model.params().unflatten(flat);
      balancer.update(values);
      for (std::size_t i = 0; i < values.size(); ++i) term_sum[i] += values[i];
      ++batches;
    }
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.lr = lr;
    for (double& v : term_sum) v /= double(batches);
    rec.terms = term_sum;
    rec.lambdas = balancer.weights();
    rec.train_rel_l2 = mean_relative_l2(predict(model, x_train_phys, result.input_stats, result.output_stats),
                                        y_train_phys);
    if (x_test_phys.rank() > 0) {
      rec.test_rel_l2 =
          mean_relative_l2(predict(model, x_test_phys, result.input_stats, result.output_stats), y_test_phys);
    }
    metric_history.push_back(rec.train_rel_l2);
    ++since_growth;
    if (ifno && (epoch + 1) % std::max<std::size_t>(ifno->check_every, 1) == 0) {
      const std::vector<double> recent(metric_history.end() - long(since_growth), metric_history.end());
      if (ifno_step(*ifno, model, recent)) {
        model.config().n_modes = ifno->current;
        since_growth = 0;
        ++ladder_level;
        load_level();
      }
    }
    rec.modes = model.config().n_modes;
    result.history.push_back(std::move(rec));
  }
  result.ifno = ifno.has_value();
  return result;
}

void write_history_csv(const std::filesystem::path& path, const TrainResult& result, const std::string& invocation) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot write " + path.string());
  os << "epoch,lr";
  for (const auto& n : result.term_names) os << ',' << n;
  for (const auto& n : result.term_names) os << ",lambda_" << n;
  os << ",train_rel_l2,test_rel_l2";
  const std::size_t axes = result.history.empty() ? 0 : result.history[0].modes.size();
  if (result.ifno) {
    for (std::size_t a = 0; a < axes; ++a) os << ",K" << a;
  }
  os << '\n';
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (const auto& r : result.history) {
    os << r.epoch << ',' << num(r.lr);
    for (double v : r.terms) os << ',' << num(v);
    for (double v : r.lambdas) os << ',' << num(v);
    os << ',' << num(r.train_rel_l2) << ',' << (r.test_rel_l2 < 0 ? std::string() : num(r.test_rel_l2));
    if (result.ifno) {
      for (auto k : r.modes) os << ',' << k;
    }
    os << '\n';
  }
  os << "# invocation: " << invocation << '\n';
}

std::vector<RealTensor> rollout(const FnoModel& model, const RealTensor& u0, std::size_t steps, bool residual,
                                const ChannelStats& input_stats, const ChannelStats& output_stats) {
  if (model.config().in_channels != model.config().out_channels) {
    throw ShapeError("rollout: the model must map a state to a state (in == out channels)");
  }
  std::vector<RealTensor> traj{u0};
  Shape batched = u0.shape();
  batched.insert(batched.begin(), 1);
  for (std::size_t s = 0; s < steps; ++s) {
    const RealTensor x = traj.back().reshaped(batched);
    RealTensor y = predict(model, x, input_stats, output_stats).reshaped(u0.shape());
    if (residual) {
      for (std::size_t i = 0; i < y.size(); ++i) y[i] += traj.back()[i];
    }
    traj.push_back(std::move(y));
  }
  return traj;
}

FinetuneResult finetune_anchor(FnoModel& model, const RealTensor& f, const GridSpec& grid, const FinetuneConfig& cfg,
                               const ChannelStats& input_stats, const ChannelStats& output_stats) {
  Shape bs = f.shape();
  bs.insert(bs.begin(), 1);
  const RealTensor fb = f.reshaped(bs);
  const RealTensor xin = normalize(fb, input_stats);
  const RealTensor anchor = predict(model, fb, input_stats, output_stats);
  const auto theta0 = model.params().flatten();
  Optimizer opt(cfg.optimizer);
  FinetuneResult out;
  for (std::size_t step = 0; step <= cfg.steps; ++step) {
    ad::Tape tape;
    const auto bound = model.params().bind(tape, step < cfg.steps);
    const Var u = denormalize_var(model.forward(tape, bound, tape.constant(xin)), output_stats);
    const Var r = physics_residual_poisson(u, fb, grid);
    out.residuals.push_back(r.value()[0]);
    if (step == cfg.steps) break;
    Var total = r;
    if (cfg.anchor_weight > 0) {
      RealTensor neg = anchor;
      for (auto& v : neg.storage()) v = -v;
      const Var d = ad::add_const(u, neg);
      const Var a = ad::sum(ad::scale(ad::square(d), grid.cell_volume()));
      total = ad::add(total, ad::scale(a, cfg.anchor_weight));
    }
    tape.backward(total);
    auto flat = model.params().flatten();
    opt.step(flat, model.params().gather_grads(tape, bound), cfg.optimizer.lr);
    model.params().unflatten(flat);
  }
  const auto theta = model.params().flatten();
  double s = 0;
  for (std::size_t i = 0; i < theta.size(); ++i) s += (theta[i] - theta0[i]) * (theta[i] - theta0[i]);
  out.update_norm = std::sqrt(s);
  const RealTensor after = predict(model, fb, input_stats, output_stats);
  double d = 0;
  for (std::size_t i = 0; i < after.size(); ++i) d += (after[i] - anchor[i]) * (after[i] - anchor[i]);
  out.output_change = std::sqrt(d * grid.cell_volume());
  return out;
}

}  // namespace sok
