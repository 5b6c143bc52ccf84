#pragma once

// Losses with quadrature, optimizers, loss balancing, incremental mode
// growth, physics residuals and the training / rollout loops.
//
// Batched fields are [B, C, N...]; a "sample loss" sums over channels and
// grid points and the batch loss is the mean over samples.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "sok/autodiff.hpp"
#include "sok/data.hpp"
#include "sok/extension.hpp"
#include "sok/fno.hpp"
#include "sok/grid.hpp"
#include "sok/tensor.hpp"

namespace sok {

// ---- losses ----------------------------------------------------------------

enum class LossKind { LpAbs, LpRel, H1Abs, H1Rel, WeightedLp, Spectral };
std::string_view to_string(LossKind k);
LossKind parse_loss_kind(std::string_view s);

struct LossSpec {
  LossKind kind = LossKind::LpRel;
  double p = 2.0;
  double epsilon = 1e-12;  // relative-loss stabilizer
  RealTensor weights;      // WeightedLp: spatial weight field [N...]; rank 0 = unset
  RealTensor quadrature;   // per-point weights [N...]; rank 0: cell volume
  std::size_t band = 0;    // Spectral: keep |k_j| <= band on every axis; 0 = all
  void validate() const;
};

/// Scalar loss on the tape; pred/target [B, C, N...] on `grid`.
ad::Var loss(ad::Var pred, ad::Var target, const LossSpec& spec, const GridSpec& grid);
/// Per-sample losses [B] (same definitions, no batch mean).
ad::Var sample_losses(ad::Var pred, ad::Var target, const LossSpec& spec, const GridSpec& grid);

/// Eager evaluation; fields [B, C, N...].
double lp_loss(const RealTensor& pred, const RealTensor& target, const GridSpec& grid, double p = 2.0,
               bool relative = false, double epsilon = 1e-12);
double h1_loss(const RealTensor& pred, const RealTensor& target, const GridSpec& grid, bool relative = false);
double spectral_loss(const RealTensor& pred, const RealTensor& target, const GridSpec& grid, std::size_t band = 0);
double evaluate_loss(const RealTensor& pred, const RealTensor& target, const LossSpec& spec, const GridSpec& grid);

/// Relative L2 per sample, sqrt(sum |p-t|^2 / sum |t|^2) (quadrature cancels).
std::vector<double> relative_l2_per_sample(const RealTensor& pred, const RealTensor& target);
double mean_relative_l2(const RealTensor& pred, const RealTensor& target);

// ---- optimizers -------------------------------------------------------------

enum class OptimizerKind { Adam, Sgd };
enum class ScheduleKind { Constant, Step, Cosine };
std::string_view to_string(OptimizerKind k);
std::string_view to_string(ScheduleKind k);
OptimizerKind parse_optimizer(std::string_view s);
ScheduleKind parse_schedule(std::string_view s);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Adam;
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double momentum = 0.0;  // sgd
  double weight_decay = 0.0;
  ScheduleKind schedule = ScheduleKind::Constant;
  std::size_t step_size = 100;  // step decay period (epochs)
  double gamma = 0.5;           // step decay factor
  double min_lr = 0.0;          // cosine floor
};

/// Learning rate at `epoch` of `total`.
double scheduled_lr(const OptimizerConfig& cfg, std::size_t epoch, std::size_t total);

class Optimizer {
 public:
  explicit Optimizer(OptimizerConfig cfg = {}) : cfg_(cfg) {}
  /// One update with learning rate `lr` on flat parameters.
  void step(std::vector<double>& params, const std::vector<double>& grads, double lr);
  std::size_t steps() const noexcept { return t_; }
  const OptimizerConfig& config() const noexcept { return cfg_; }
  /// Forget moments (used when the parameter layout stays but the problem changes).
  void reset();

 private:
  OptimizerConfig cfg_;
  std::vector<double> m_, v_;
  std::size_t t_ = 0;
};

// ---- loss balancing ---------------------------------------------------------

enum class BalancerKind { Fixed, SoftAdapt, ReLoBRaLo };
std::string_view to_string(BalancerKind k);
BalancerKind parse_balancer(std::string_view s);

/// exp(tau (L_i(t) - L_i(t-1))) normalized to sum 1.
std::vector<double> softadapt_weights(const std::vector<double>& previous, const std::vector<double>& current,
                                      double tau);
/// m * softmax_i(L_i(t) / (tau L_i(t'))).
std::vector<double> relobralo_balance(const std::vector<double>& current, const std::vector<double>& reference,
                                      double tau);

struct BalancerConfig {
  BalancerKind kind = BalancerKind::Fixed;
  std::vector<double> fixed;  // Fixed weights; empty = all ones
  double tau = 1.0;           // temperature (SoftAdapt, ReLoBRaLo)
  double alpha = 0.999;       // ReLoBRaLo history coefficient
  double rho_prob = 0.999;    // ReLoBRaLo Bernoulli lookback probability
};

class Balancer {
 public:
  Balancer(BalancerConfig cfg, std::size_t terms, std::uint64_t seed);
  /// Weights for the current loss values; updates the history.
  std::vector<double> update(const std::vector<double>& losses);
  const std::vector<double>& weights() const noexcept { return lambda_; }
  const BalancerConfig& config() const noexcept { return cfg_; }

 private:
  BalancerConfig cfg_;
  std::size_t m_;
  std::vector<double> first_, previous_, lambda_;
  std::mt19937_64 rng_;
};

// ---- incremental FNO --------------------------------------------------------

enum class IfnoCriterion { LossStagnation, ExplainedRatio };
std::string_view to_string(IfnoCriterion c);
IfnoCriterion parse_ifno_criterion(std::string_view s);

/// sum_{k<K} P_k / sum_k P_k.
double explained_ratio(const std::vector<double>& power, std::size_t k);
/// True when the loss has not improved by eps (relative) over the last `window` values.
bool loss_stagnated(const std::vector<double>& history, std::size_t window, double eps);

struct IfnoSchedule {
  IfnoCriterion criterion = IfnoCriterion::ExplainedRatio;
  double alpha_ratio = 0.99;
  std::size_t window = 10;
  double eps_improve = 1e-3;
  std::size_t increment = 1;
  std::size_t check_every = 1;               // epochs between decisions
  std::vector<std::size_t> resolution_ladder;  // optional training resolutions, advanced per expansion
  std::vector<std::size_t> current;           // K per axis
  std::vector<std::size_t> maximum;           // max_n_modes per axis

  bool capped() const;
};

/// Decision for one axis; power is ordered f = 0, -1, +1, -2, ... (model mode_power).
bool ifno_should_expand(const IfnoSchedule& s, std::size_t axis, const std::vector<double>& power,
                        const std::vector<double>& loss_history);
/// Applies the criterion on every axis; returns true if any K grew.
bool ifno_step(IfnoSchedule& s, const FnoModel& model, const std::vector<double>& loss_history);

// ---- physics ----------------------------------------------------------------

/// Mean over the batch of ||-lap u - f||^2 (quadrature) + mean(u)^2; u, f [B, 1, N...].
ad::Var physics_residual_poisson(ad::Var u, const RealTensor& f, const GridSpec& grid, double mean_tol = 1e-8);
/// Eager version; with `extension` (1D only) u is continued periodically
/// before differentiation, the residual is measured on the interior, and
/// neither the mean pin nor the zero-mean check applies.
double physics_residual_poisson(const RealTensor& u, const RealTensor& f, const GridSpec& grid,
                                const ExtensionOperator* extension = nullptr, double mean_tol = 1e-8);

// ---- training ----------------------------------------------------------------

struct TrainConfig {
  std::size_t epochs = 100;
  std::size_t batch_size = 20;
  std::uint64_t seed = 0;
  bool normalize = true;
  bool shuffle = true;
  LossSpec loss;
  OptimizerConfig optimizer;
  BalancerConfig balancer;
  double physics_weight = 0.0;   // > 0 adds the Poisson residual as a second term
  std::optional<IfnoSchedule> ifno;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0;
  std::vector<double> terms;    // mean per-batch value of each loss term
  std::vector<double> lambdas;  // balancer weights after the epoch
  double train_rel_l2 = 0;      // full training split, physical units, end of epoch
  double test_rel_l2 = -1;      // held-out split, -1 when absent
  std::vector<std::size_t> modes;
};

struct TrainResult {
  std::vector<EpochRecord> history;
  std::vector<std::string> term_names;
  ChannelStats input_stats;
  ChannelStats output_stats;
  bool ifno = false;  // history carries K columns
};

/// Trains `model` in place on ds[0, n_train); the rest of ds is the test split.
TrainResult train(FnoModel& model, const Dataset& ds, const TrainConfig& cfg);

/// Model prediction in physical units for inputs [S, Cin, N...].
RealTensor predict(const FnoModel& model, const RealTensor& inputs, const ChannelStats& input_stats = {},
                   const ChannelStats& output_stats = {}, std::size_t batch = 32);

void write_history_csv(const std::filesystem::path& path, const TrainResult& result, const std::string& invocation);

/// u [C, N...]; returns steps + 1 states. residual: state += prediction.
std::vector<RealTensor> rollout(const FnoModel& model, const RealTensor& u0, std::size_t steps, bool residual = false,
                                const ChannelStats& input_stats = {}, const ChannelStats& output_stats = {});

struct FinetuneConfig {
  std::size_t steps = 200;
  double anchor_weight = 0.0;
  OptimizerConfig optimizer{OptimizerKind::Adam, 1e-3};
};

struct FinetuneResult {
  std::vector<double> residuals;  // before each step, then the final value
  double update_norm = 0;         // ||theta - theta_0||
  double output_change = 0;       // ||G(f) - G_0(f)|| (quadrature L2, physical units)
};

/// Data-free fine-tuning on one Poisson instance f [1, N...]: minimizes the
/// physics residual plus anchor_weight * ||G(f) - G_0(f)||^2 (quadrature).
FinetuneResult finetune_anchor(FnoModel& model, const RealTensor& f, const GridSpec& grid, const FinetuneConfig& cfg,
                               const ChannelStats& input_stats = {}, const ChannelStats& output_stats = {});

}  // namespace sok
