#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

#include "doctest.h"
#include "helpers.hpp"
#include "sok/errors.hpp"
#include "sok/spectral_ops.hpp"
#include "sok/train.hpp"

using namespace sok;
using namespace testing_helpers;
namespace fs = std::filesystem;

namespace {

// [1, 1, N] batch from samples of f on [0, L)
RealTensor field(std::size_t n, double length, const std::function<double(double)>& f) {
  return sample(n, length, f).reshaped({1, 1, n});
}

// Normwise relative error between the tape gradient and central differences.
double grad_error(const RealTensor& x0, const std::function<ad::Var(ad::Tape&, ad::Var)>& build, double h = 1e-5) {
  ad::Tape t;
  const auto v = t.variable(x0);
  t.backward(build(t, v));
  const auto g = t.grad(v);
  double num = 0, den = 0;
  for (std::size_t i = 0; i < x0.size(); ++i) {
    auto xp = x0, xm = x0;
    xp[i] += h;
    xm[i] -= h;
    ad::Tape tp, tm;
    const double fp = build(tp, tp.constant(xp)).value()[0];
    const double fm = build(tm, tm.constant(xm)).value()[0];
    const double fd = (fp - fm) / (2 * h);
    num += (fd - g[i]) * (fd - g[i]);
    den += fd * fd;
  }
  return std::sqrt(num / std::max(den, 1e-300));
}

double sum_abs_pow(const RealTensor& a, const RealTensor& b, double p) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::pow(std::abs(a[i] - b[i]), p);
  return s;
}

Dataset small_heat(std::size_t samples, std::size_t n_train, std::size_t res = 32, std::uint64_t seed = 1) {
  GenSpec g;
  g.samples = samples;
  g.n_train = n_train;
  g.grf.resolution = res;
  g.grf.k_max = 6;
  g.grf.seed = seed;
  return generate_dataset(g);
}

FnoConfig small_cfg() {
  FnoConfig c;
  c.n_modes = {6};
  c.hidden_channels = 4;
  c.n_layers = 2;
  return c;
}

}  // namespace

TEST_CASE("lp losses: definitions, quadrature, refinement") {
  const auto grid = GridSpec::periodic_box({64}, 1.0);
  const auto t = field(64, 1.0, [](double x) { return std::sin(2 * kPi * x) + 0.3; });
  CHECK(lp_loss(t, t, grid) == 0.0);
  CHECK(lp_loss(t, t, grid, 2.0, true) == 0.0);
  auto p1 = t;
  for (auto& v : p1.storage()) v += 1.0;
  // constant offset on the unit domain: sum of the quadrature weights
  CHECK(std::abs(lp_loss(p1, t, grid) - 1.0) < 1e-14);

  std::mt19937_64 rng(2);
  const RealTensor a({3, 2, 64}, random_real(384, rng)), b({3, 2, 64}, random_real(384, rng));
  for (double p : {1.0, 2.0, 3.5}) {
    // batch mean of per-sample sums (channels included)
    CHECK(std::abs(lp_loss(a, b, grid, p) - sum_abs_pow(a, b, p) / 64.0 / 3.0) < 1e-12);
  }
  double rel = 0;
  for (std::size_t s = 0; s < 3; ++s) {
    double num = 0, den = 0;
    for (std::size_t j = 0; j < 128; ++j) {
      num += std::pow(a[s * 128 + j] - b[s * 128 + j], 2);
      den += std::pow(b[s * 128 + j], 2);
    }
    rel += num / den / 3.0;
  }
  CHECK(std::abs(lp_loss(a, b, grid, 2.0, true, 0.0) - rel) < 1e-12);

  // custom quadrature and weights
  LossSpec q;
  q.kind = LossKind::LpAbs;
  q.quadrature = RealTensor({64}, 0.5);
  CHECK(std::abs(evaluate_loss(a, b, q, grid) - sum_abs_pow(a, b, 2) * 0.5 / 3.0) < 1e-10);
  LossSpec w;
  w.kind = LossKind::WeightedLp;
  w.weights = RealTensor({64}, 2.0);
  CHECK(std::abs(evaluate_loss(a, b, w, grid) - 2.0 * lp_loss(a, b, grid)) < 1e-12);

  // Riemann sums of a smooth pair at two resolutions
  auto pair_loss = [](std::size_t n) {
    const auto g = GridSpec::periodic_box({n}, 1.0);
    const auto p = field(n, 1.0, [](double x) { return std::exp(std::sin(2 * kPi * x)); });
    const auto z = field(n, 1.0, [](double) { return 0.0; });
    return lp_loss(p, z, g);
  };
  const double exact = std::cyl_bessel_i(0.0, 2.0);  // int_0^1 exp(2 sin 2 pi x) dx
  CHECK(std::abs(pair_loss(64) - pair_loss(256)) / pair_loss(256) <= 1e-3);
  const double e8 = std::abs(pair_loss(8) - exact), e16 = std::abs(pair_loss(16) - exact);
  CHECK((e16 <= 1e-13 || e8 / e16 >= 4.0));

  LossSpec bad;
  bad.p = 0.5;
  CHECK_THROWS_AS(evaluate_loss(a, b, bad, grid), ShapeError);
  CHECK_THROWS_AS(lp_loss(a, RealTensor({3, 2, 32}), grid), ShapeError);
  CHECK(parse_loss_kind(to_string(LossKind::H1Rel)) == LossKind::H1Rel);
}

TEST_CASE("h1 and spectral losses") {
  const auto grid = GridSpec::periodic_box({64});
  const auto t = field(64, 2 * kPi, [](double x) { return std::cos(x) + 0.5 * std::sin(4 * x); });
  auto off = t;
  for (auto& v : off.storage()) v += 0.7;
  CHECK(std::abs(h1_loss(off, t, grid) - lp_loss(off, t, grid)) < 1e-12);

  for (int k : {1, 3, 6}) {
    auto p = t;
    const auto s = sample(64, 2 * kPi, [k](double x) { return std::sin(k * x); });
    for (std::size_t j = 0; j < 64; ++j) p[j] += s[j];
    const double value = lp_loss(p, t, grid);
    CHECK(std::abs(value - kPi) < 1e-12);
    CHECK(std::abs(h1_loss(p, t, grid) - (1.0 + k * k) * value) < 1e-10);
  }
  // composition with separately computed derivatives
  std::mt19937_64 rng(4);
  GrfSpec gs;
  gs.k_max = 10;
  gs.seed = 3;
  RealTensor a({2, 1, 64}), b({2, 1, 64});
  for (std::size_t s = 0; s < 2; ++s) {
    const auto fa = sample_grf(gs, s), fb = sample_grf(gs, 10 + s);
    std::copy(fa.data().begin(), fa.data().end(), a.data().begin() + long(64 * s));
    std::copy(fb.data().begin(), fb.data().end(), b.data().begin() + long(64 * s));
  }
  const auto da = spectral_derivative(a, grid, 0, 1), db = spectral_derivative(b, grid, 0, 1);
  CHECK(std::abs(h1_loss(a, b, grid) - (lp_loss(a, b, grid) + lp_loss(da, db, grid))) < 1e-12);

  // Parseval: full spectral loss equals L2
  CHECK(std::abs(spectral_loss(a, b, grid) - lp_loss(a, b, grid)) < 1e-12);
  CHECK(spectral_loss(a, a, grid) == 0.0);
  // band-restricted: a k = 20 difference is invisible, k = 2 is not
  auto hi = t, lo = t;
  const auto s20 = sample(64, 2 * kPi, [](double x) { return std::sin(20 * x); });
  const auto s2 = sample(64, 2 * kPi, [](double x) { return std::sin(2 * x); });
  for (std::size_t j = 0; j < 64; ++j) {
    hi[j] += s20[j] + s2[j];
    lo[j] += s2[j];
  }
  CHECK(std::abs(spectral_loss(hi, t, grid, 10) - kPi) < 1e-12);
  CHECK(std::abs(spectral_loss(hi, t, grid, 10) - spectral_loss(lo, t, grid, 10)) < 1e-12);
  CHECK(std::abs(spectral_loss(hi, t, grid) - 2 * kPi) < 1e-12);
}

TEST_CASE("loss gradients match central differences") {
  std::mt19937_64 rng(6);
  const auto grid = GridSpec::periodic_box({16});
  const RealTensor x0({2, 1, 16}, random_real(32, rng));
  const RealTensor tgt({2, 1, 16}, random_real(32, rng));
  for (auto kind : {LossKind::LpAbs, LossKind::LpRel, LossKind::H1Abs, LossKind::H1Rel, LossKind::Spectral,
                    LossKind::WeightedLp}) {
    LossSpec s;
    s.kind = kind;
    s.p = kind == LossKind::LpRel ? 3.0 : 2.0;
    s.band = kind == LossKind::Spectral ? 4 : 0;
    s.weights = RealTensor({16}, random_real(16, rng));
    for (auto& v : s.weights.storage()) v = 1.0 + v * v;
    const double e = grad_error(x0, [&](ad::Tape& t, ad::Var v) { return loss(v, t.constant(tgt), s, grid); });
    INFO(to_string(kind));
    CHECK(e < 1e-6);
  }
}

TEST_CASE("optimizers and schedules") {
  // quadratic bowl sum a_i (x_i - c_i)^2
  const std::vector<double> a{0.5, 1.0, 2.0, 3.0}, c{1.0, -2.0, 0.5, 3.0};
  auto grad = [&](const std::vector<double>& x) {
    std::vector<double> g(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) g[i] = 2 * a[i] * (x[i] - c[i]);
    return g;
  };
  for (auto kind : {OptimizerKind::Adam, OptimizerKind::Sgd}) {
    OptimizerConfig cfg;
    cfg.kind = kind;
    cfg.lr = kind == OptimizerKind::Adam ? 0.05 : 0.1;
    Optimizer opt(cfg);
    std::vector<double> x(4, 0.0);
    for (int s = 0; s < 500; ++s) opt.step(x, grad(x), cfg.lr);
    INFO(to_string(kind));
    CHECK(max_diff(x, c) <= 1e-6);
  }
  // sgd with zero gradient leaves parameters alone
  Optimizer sgd(OptimizerConfig{OptimizerKind::Sgd, 0.1});
  std::vector<double> x{1.5, -2.5};
  sgd.step(x, {0.0, 0.0}, 0.1);
  CHECK(x == std::vector<double>{1.5, -2.5});
  // adam's first step is lr * g / (|g| + eps)
  Optimizer adam(OptimizerConfig{});
  std::vector<double> y{0.0, 0.0, 0.0};
  adam.step(y, {1e3, -50.0, 1e-9}, 0.01);
  CHECK(std::abs(y[0] + 0.01) < 1e-10);
  CHECK(std::abs(y[1] - 0.01) < 1e-10);
  CHECK(std::abs(y[2] + 0.01 * 1e-9 / (1e-9 + 1e-8)) < 1e-12);

  OptimizerConfig sc;
  sc.lr = 0.1;
  sc.schedule = ScheduleKind::Step;
  sc.step_size = 10;
  sc.gamma = 0.5;
  CHECK(scheduled_lr(sc, 9, 100) == 0.1);
  CHECK(std::abs(scheduled_lr(sc, 25, 100) - 0.025) < 1e-15);
  sc.schedule = ScheduleKind::Cosine;
  sc.min_lr = 0.01;
  CHECK(scheduled_lr(sc, 0, 100) == 0.1);
  CHECK(std::abs(scheduled_lr(sc, 50, 100) - 0.055) < 1e-15);
  CHECK(std::abs(scheduled_lr(sc, 100, 100) - 0.01) < 1e-15);
  CHECK(parse_schedule("cosine") == ScheduleKind::Cosine);
  CHECK_THROWS_AS(parse_optimizer("lbfgs"), ShapeError);
}

TEST_CASE("softadapt") {
  const std::vector<double> prev{1.0, 2.0, 3.0};
  auto w = softadapt_weights(prev, {1.5, 2.1, 2.0}, 1.0);
  CHECK(std::abs(w[0] + w[1] + w[2] - 1.0) <= 1e-12);
  CHECK(w[0] > w[1]);
  CHECK(w[1] > w[2]);  // largest increase, largest weight
  // equal deltas, tau = 0: uniform
  for (const auto& v : {softadapt_weights(prev, {1.2, 2.2, 3.2}, 3.0), softadapt_weights(prev, {5.0, 0.0, 1.0}, 0.0)}) {
    for (double x : v) CHECK(std::abs(x - 1.0 / 3.0) < 1e-15);
  }
  // invariant to a common shift of the deltas
  const auto s = softadapt_weights(prev, {1.5 + 0.4, 2.1 + 0.4, 2.0 + 0.4}, 1.0);
  CHECK(max_diff(s, w) < 1e-14);
  // closed form
  const double z = std::exp(0.5) + std::exp(0.1) + std::exp(-1.0);
  CHECK(std::abs(w[0] - std::exp(0.5) / z) < 1e-15);
}

TEST_CASE("relobralo") {
  const auto bal = relobralo_balance({2.0, 1.0, 0.5}, {1.0, 1.0, 1.0}, 1.0);
  CHECK(std::abs(bal[0] + bal[1] + bal[2] - 3.0) <= 1e-12);
  const double z = std::exp(2.0) + std::exp(1.0) + std::exp(0.5);
  CHECK(std::abs(bal[0] - 3 * std::exp(2.0) / z) < 1e-14);
  for (double v : relobralo_balance({0.3, 0.3}, {0.3, 0.3}, 0.7)) CHECK(std::abs(v - 1.0) < 1e-15);

  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0.1, 5.0);
  std::vector<std::vector<double>> hist;
  for (int s = 0; s < 30; ++s) hist.push_back({u(rng), u(rng), u(rng), u(rng)});

  // alpha = 1, rho always 0: weights equal the history (t, 0) balance
  BalancerConfig c0{BalancerKind::ReLoBRaLo, {}, 1.0, 1.0, 0.0};
  Balancer b0(c0, 4, 1);
  b0.update(hist[0]);
  for (int s = 1; s < 30; ++s) {
    const auto w = b0.update(hist[s]);
    CHECK(max_diff(w, relobralo_balance(hist[s], hist[0], 1.0)) < 1e-14);
  }
  // rho always 1: pure recent-lookback EMA
  BalancerConfig c1{BalancerKind::ReLoBRaLo, {}, 0.5, 0.9, 1.0};
  Balancer b1(c1, 4, 1);
  std::vector<double> lam(4, 1.0);
  b1.update(hist[0]);
  for (int s = 1; s < 30; ++s) {
    const auto rec = relobralo_balance(hist[s], hist[s - 1], 0.5);
    for (std::size_t i = 0; i < 4; ++i) lam[i] = 0.9 * lam[i] + 0.1 * rec[i];
    const auto w = b1.update(hist[s]);
    CHECK(max_diff(w, lam) < 1e-13);
  }
  // defaults: random lookback, weights stay positive and sum to m
  Balancer b2(BalancerConfig{BalancerKind::ReLoBRaLo}, 4, 3);
  for (const auto& h : hist) {
    const auto w = b2.update(h);
    double sum = 0;
    for (double v : w) {
      CHECK(v > 0);
      sum += v;
    }
    CHECK(std::abs(sum - 4.0) <= 1e-12);
  }
  Balancer sa(BalancerConfig{BalancerKind::SoftAdapt}, 2, 0);
  CHECK(sa.update({1.0, 1.0}) == std::vector<double>{0.5, 0.5});
  CHECK(std::abs(sa.update({2.0, 1.0})[0] - std::exp(1.0) / (std::exp(1.0) + 1.0)) < 1e-15);
  CHECK(parse_balancer("relobralo") == BalancerKind::ReLoBRaLo);
}

TEST_CASE("ifno criteria") {
  const std::vector<double> P{4, 3, 2, 1};
  CHECK(std::abs(explained_ratio(P, 2) - 0.7) < 1e-15);
  IfnoSchedule s;
  s.criterion = IfnoCriterion::ExplainedRatio;
  s.alpha_ratio = 0.8;
  s.current = {2};
  s.maximum = {4};
  CHECK(ifno_should_expand(s, 0, P, {}));
  s.alpha_ratio = 0.6;
  CHECK(!ifno_should_expand(s, 0, P, {}));
  s.alpha_ratio = 0.8;
  s.current = {4};
  CHECK(!ifno_should_expand(s, 0, P, {}));
  CHECK(s.capped());

  s.criterion = IfnoCriterion::LossStagnation;
  s.current = {2};
  s.window = 5;
  s.eps_improve = 1e-3;
  std::vector<double> dec, flat;
  for (int i = 0; i < 12; ++i) {
    dec.push_back(std::pow(0.9, i));
    flat.push_back(1.0 + 1e-6 * (i % 2));
  }
  CHECK(!ifno_should_expand(s, 0, {}, dec));
  CHECK(ifno_should_expand(s, 0, {}, flat));
  CHECK(!ifno_should_expand(s, 0, {}, {1.0, 1.0}));  // not enough history
  s.current = {4};
  CHECK(!ifno_should_expand(s, 0, {}, flat));

  // on a model: uniform-ish spectra expand until the cap
  FnoConfig c = small_cfg();
  c.n_modes = {2};
  c.max_n_modes = {6};
  FnoModel m(c, 5);
  IfnoSchedule r;
  r.alpha_ratio = 0.999;
  r.increment = 3;
  r.current = {2};
  r.maximum = {6};
  CHECK(ifno_step(r, m, {}));
  CHECK(r.current == std::vector<std::size_t>{5});
  CHECK(ifno_step(r, m, {}));
  CHECK(r.current == std::vector<std::size_t>{6});
  CHECK(!ifno_step(r, m, {}));
}

TEST_CASE("poisson physics residual") {
  const auto grid = GridSpec::periodic_box({64});
  GrfSpec gs;
  gs.k_max = 12;
  gs.seed = 21;
  const auto f = sample_grf(gs, 0).reshaped({1, 1, 64});
  const auto u = poisson_solve_exact(f, grid);
  CHECK(physics_residual_poisson(u, f, grid) <= 1e-10);

  // closed form for u = 0: ||f||^2
  double ff = 0;
  for (double v : f.data()) ff += v * v * grid.cell_volume();
  CHECK(std::abs(physics_residual_poisson(RealTensor({1, 1, 64}, 0.0), f, grid) - ff) < 1e-12);
  // constant u only pays the mean pin
  const double pr = physics_residual_poisson(RealTensor({1, 1, 64}, 0.5), RealTensor({1, 1, 64}, 0.0), grid);
  CHECK(std::abs(pr - 0.25) < 1e-14);

  // 4th-order finite-difference oracle at N = 512
  const std::size_t n = 512;
  const auto g512 = GridSpec::periodic_box({n});
  GrfSpec s512 = gs;
  s512.resolution = n;
  s512.k_max = 8;
  const auto us = sample_grf(s512, 1).reshaped({1, 1, n});
  const auto fs = sample_grf(s512, 2).reshaped({1, 1, n});
  const double h = g512.spacing(0);
  double fd = 0, mean = 0;
  for (std::size_t j = 0; j < n; ++j) {
    auto at = [&](long o) { return us[static_cast<std::size_t>((long(j) + o + long(n)) % long(n))]; };
    const double d2 = (-at(2) + 16 * at(1) - 30 * at(0) + 16 * at(-1) - at(-2)) / (12 * h * h);
    fd += std::pow(-d2 - fs[j], 2) * h;
    mean += us[j] / double(n);
  }
  fd += mean * mean;
  const double spec = physics_residual_poisson(us, fs, g512);
  CHECK(std::abs(spec - fd) / fd <= 1e-4);

  auto shifted = f;
  for (auto& v : shifted.storage()) v += 1.0;
  CHECK_THROWS_AS(physics_residual_poisson(u, shifted, grid), NumericalError);

  // gradient through the residual
  std::mt19937_64 rng(1);
  const auto g16 = GridSpec::periodic_box({16});
  gs.resolution = 16;
  gs.k_max = 5;
  const auto f16 = sample_grf(gs, 4).reshaped({1, 1, 16});
  const RealTensor u16({1, 1, 16}, random_real(16, rng));
  CHECK(grad_error(u16, [&](ad::Tape&, ad::Var v) { return physics_residual_poisson(v, f16, g16); }) < 1e-6);
}

TEST_CASE("poisson residual with continuation on a non-periodic problem") {
  const std::size_t n = 101;
  const double h = 0.01;
  RealTensor u({1, 1, n}), f({1, 1, n});
  for (std::size_t j = 0; j < n; ++j) {
    const double x = double(j) * h;
    u[j] = std::exp(-x) + std::sin(3 * x);
    f[j] = -std::exp(-x) + 9 * std::sin(3 * x);  // -u''
  }
  const GridSpec grid({n}, {h * double(n)}, {false});
  const auto fc = build_fc_legendre(6, 40, n);
  const auto zp = build_zero_pad(40);
  const double r_fc = physics_residual_poisson(u, f, grid, &fc);
  const double r_zp = physics_residual_poisson(u, f, grid, &zp);
  MESSAGE("continued residual " << r_fc << " vs zero padding " << r_zp);
  CHECK(r_fc < 1e-3 * r_zp);
}

TEST_CASE("train: zero epochs, determinism, history, eval consistency") {
  const auto ds = small_heat(24, 16);
  FnoModel m0(small_cfg(), 3);
  TrainConfig tc;
  tc.epochs = 0;
  auto same = m0;
  const auto r0 = train(same, ds, tc);
  CHECK(r0.history.empty());
  CHECK(same.params().flatten() == m0.params().flatten());

  tc.epochs = 6;
  tc.batch_size = 5;
  tc.seed = 4;
  tc.optimizer.lr = 5e-3;
  auto a = m0, b = m0;
  const auto ra = train(a, ds, tc);
  const auto rb = train(b, ds, tc);
  CHECK(a.params().flatten() == b.params().flatten());
  REQUIRE(ra.history.size() == 6);
  for (std::size_t e = 0; e < 6; ++e) {
    CHECK(ra.history[e].terms == rb.history[e].terms);
    CHECK(ra.history[e].train_rel_l2 == rb.history[e].train_rel_l2);
    CHECK(ra.history[e].epoch == e + 1);
    CHECK(ra.history[e].test_rel_l2 > 0);
  }
  CHECK(ra.history.back().train_rel_l2 < ra.history.front().train_rel_l2);
  tc.seed = 5;
  auto c = m0;
  train(c, ds, tc);
  CHECK(c.params().flatten() != a.params().flatten());

  // the logged training metric is reproducible from the final parameters
  const auto train_in = ds.slice(0, 16);
  const auto pred = predict(a, train_in.inputs, ra.input_stats, ra.output_stats);
  CHECK(std::abs(mean_relative_l2(pred, train_in.outputs) - ra.history.back().train_rel_l2) <= 1e-10);
  CHECK(ra.input_stats == compute_channel_stats(train_in.inputs));

  const auto dir = fs::temp_directory_path() / "sok_train_test";
  fs::create_directories(dir);
  write_history_csv(dir / "h.csv", ra, "sok train --epochs 6");
  std::ifstream is(dir / "h.csv");
  std::vector<std::string> lines;
  for (std::string l; std::getline(is, l);) lines.push_back(l);
  REQUIRE(lines.size() == 8);
  CHECK(lines[0] == "epoch,lr,data,lambda_data,train_rel_l2,test_rel_l2");
  CHECK(lines[7] == "# invocation: sok train --epochs 6");
  CHECK(lines[6].rfind("6,", 0) == 0);

  auto bad = ds;
  bad.inputs = RealTensor({4, 2, 32});
  CHECK_THROWS_AS(train(a, bad, tc), ShapeError);
}

TEST_CASE("train: physics term with a balancer, incremental modes") {
  GenSpec g;
  g.problem = "poisson";
  g.samples = 12;
  g.n_train = 10;
  g.grf.resolution = 32;
  g.grf.k_max = 6;
  g.grf.seed = 8;
  const auto ds = generate_dataset(g);
  FnoModel m(small_cfg(), 1);
  TrainConfig tc;
  tc.epochs = 3;
  tc.batch_size = 5;
  tc.physics_weight = 0.1;
  tc.balancer.kind = BalancerKind::ReLoBRaLo;
  const auto r = train(m, ds, tc);
  CHECK(r.term_names == std::vector<std::string>{"data", "physics"});
  for (const auto& e : r.history) {
    CHECK(std::abs(e.lambdas[0] + e.lambdas[1] - 2.0) < 1e-12);
    CHECK(e.terms[1] > 0);
  }

  FnoConfig c = small_cfg();
  c.n_modes = {2};
  c.max_n_modes = {8};
  FnoModel mi(c, 2);
  TrainConfig ti;
  ti.epochs = 8;
  ti.batch_size = 8;
  IfnoSchedule s;
  s.alpha_ratio = 0.9;
  s.increment = 2;
  s.resolution_ladder = {16, 24, 32};
  ti.ifno = s;
  const auto ri = train(mi, small_heat(16, 16), ti);
  CHECK(ri.ifno);
  std::size_t prev = 0;
  for (const auto& e : ri.history) {
    CHECK(e.modes[0] >= prev);
    CHECK(e.modes[0] <= 8);
    prev = e.modes[0];
  }
  CHECK(ri.history.back().modes[0] > 2);
  CHECK(mi.config().n_modes == ri.history.back().modes);
}

TEST_CASE("rollout") {
  // a zero network in residual mode keeps the state
  FnoConfig c = small_cfg();
  const auto zero = FnoModel::zeros(c);
  GrfSpec gs;
  gs.resolution = 32;
  gs.k_max = 6;
  const auto u0 = sample_grf(gs, 0).reshaped({1, 32});
  const auto still = rollout(zero, u0, 4, true);
  REQUIRE(still.size() == 5);
  for (const auto& s : still) CHECK(s.storage() == u0.storage());
  CHECK(rollout(zero, u0, 0).size() == 1);
  CHECK(rollout(zero, u0, 0)[0].storage() == u0.storage());

  // a linear one-layer FNO that is exactly one heat step of dt
  FnoConfig h;
  h.n_modes = {32};
  h.hidden_channels = 1;
  h.n_layers = 1;
  h.lifting_channel_ratio = 0;
  h.projection_channel_ratio = 0;
  h.channel_mlp_expansion = 1.0;
  h.fno_skip = SkipKind::None;
  h.channel_mlp_skip = SkipKind::None;
  h.activation = ad::Activation::Identity;
  auto heat = FnoModel::zeros(h);
  const double nu = 0.05, dt = 0.3;
  heat.params().at("lifting.0.weight").r[0] = 1.0;
  heat.params().at("projection.0.weight").r[0] = 1.0;
  heat.params().at("block0.mlp.0.weight").r[0] = 1.0;
  heat.params().at("block0.mlp.1.weight").r[0] = 1.0;
  auto& w = heat.params().at("block0.spectral.weight").c;
  for (std::size_t j = 0; j < 32; ++j) {
    const double f = double(j) - 16.0;
    w[j] = std::exp(-nu * f * f * dt);
  }
  gs.k_max = 15;  // the -16 mode is the Nyquist of N = 32
  const auto v0 = sample_grf(gs, 3).reshaped({1, 32});
  const auto traj = rollout(heat, v0, 7);
  const auto grid = GridSpec::periodic_box({32});
  for (std::size_t s = 0; s <= 7; ++s) {
    const auto exact = heat_operator_exact(v0, nu, dt * double(s), grid);
    CHECK(max_diff(traj[s].storage(), exact.storage()) < 1e-12);
  }
}

TEST_CASE("finetune with an anchor") {
  GenSpec g;
  g.problem = "poisson";
  g.samples = 21;
  g.n_train = 20;
  g.grf.resolution = 32;
  g.grf.k_max = 6;
  g.grf.seed = 2;
  const auto ds = generate_dataset(g);
  FnoModel base(small_cfg(), 7);
  TrainConfig tc;
  tc.epochs = 10;
  tc.batch_size = 10;
  tc.optimizer.lr = 5e-3;
  const auto r = train(base, ds, tc);
  const auto f = ds.slice(20, 21).inputs.reshaped({1, 32});

  FinetuneConfig fc;
  fc.steps = 10;
  auto free = base;
  const auto plain = finetune_anchor(free, f, ds.grid, fc, r.input_stats, r.output_stats);
  REQUIRE(plain.residuals.size() == 11);
  MESSAGE("residual " << plain.residuals.front() << " -> " << plain.residuals.back());
  for (std::size_t i = 1; i < plain.residuals.size(); ++i) CHECK(plain.residuals[i] <= plain.residuals[i - 1]);

  // anchor 0 is plain physics fine-tuning
  fc.anchor_weight = 0.0;
  auto zero = base;
  const auto z = finetune_anchor(zero, f, ds.grid, fc, r.input_stats, r.output_stats);
  CHECK(z.residuals == plain.residuals);

  fc.anchor_weight = 1.0;
  auto one = base;
  const auto u1 = finetune_anchor(one, f, ds.grid, fc, r.input_stats, r.output_stats);
  CHECK(u1.update_norm > 0);
  CHECK(u1.output_change > 0);

  // a stiff anchor pins the prediction on the instance; gradient steps on a
  // 1e6-weighted quadratic need Adam (plain SGD at any useful lr diverges)
  fc.steps = 200;
  fc.anchor_weight = 1e6;
  auto stiff = base, soft = base;
  const auto big = finetune_anchor(stiff, f, ds.grid, fc, r.input_stats, r.output_stats);
  fc.anchor_weight = 1.0;
  const auto small = finetune_anchor(soft, f, ds.grid, fc, r.input_stats, r.output_stats);
  MESSAGE("output change: anchor 1e6 " << big.output_change << ", anchor 1 " << small.output_change
                                       << "; parameter change " << big.update_norm << " vs " << small.update_norm);
  CHECK(big.output_change < 1e-2 * small.output_change);
  CHECK(big.update_norm < small.update_norm);
  CHECK(big.residuals.back() > small.residuals.back());
}
