#pragma once

// Fourier Neural Operator: configuration, parameter storage, forward pass on
// an autodiff tape, parameter accounting and checkpoint IO.
//
// Fields are batched as [B, C, N_1, ..., N_d].

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "sok/autodiff.hpp"
#include "sok/grid.hpp"
#include "sok/stats.hpp"
#include "sok/tensor.hpp"

namespace sok {

enum class SkipKind { Identity, Linear, SoftGating, None };
enum class NormKind { None, InstanceNorm };
enum class Factorization { Dense, Tucker };

std::string_view to_string(SkipKind k);
std::string_view to_string(NormKind k);
std::string_view to_string(Factorization k);
std::string_view to_string(ad::Activation a);
SkipKind parse_skip_kind(std::string_view s);
NormKind parse_norm_kind(std::string_view s);
Factorization parse_factorization(std::string_view s);
ad::Activation parse_activation(std::string_view s);

struct FnoConfig {
  std::vector<std::size_t> n_modes{16};
  std::vector<std::size_t> max_n_modes;  // empty: same as n_modes
  std::size_t hidden_channels = 16;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;
  std::size_t n_layers = 4;
  double lifting_channel_ratio = 2.0;     // <= 0: single linear layer
  double projection_channel_ratio = 2.0;  // <= 0: single linear layer
  double channel_mlp_expansion = 0.5;
  SkipKind fno_skip = SkipKind::Linear;
  SkipKind channel_mlp_skip = SkipKind::SoftGating;
  ad::Activation activation = ad::Activation::Gelu;
  std::vector<double> domain_padding;             // empty or one fraction per axis
  std::vector<double> resolution_scaling_factor;  // empty or one factor per layer
  Factorization factorization = Factorization::Dense;
  double rank = 1.0;
  bool separable = false;
  bool complex_data = false;
  NormKind norm = NormKind::None;
  double dropout = 0.0;

  std::size_t dim() const noexcept { return n_modes.size(); }
  std::vector<std::size_t> stored_modes() const;
  std::size_t lifting_hidden() const;
  std::size_t projection_hidden() const;
  std::size_t mlp_hidden() const;
  /// Structural checks only; resolution-dependent checks happen in forward.
  void validate() const;

  friend bool operator==(const FnoConfig&, const FnoConfig&) = default;
};

/// One named trainable tensor.
struct Param {
  std::string name;
  bool complex = false;
  RealTensor r;
  ComplexTensor c;

  const Shape& shape() const { return complex ? c.shape() : r.shape(); }
  std::size_t scalars() const { return complex ? 2 * c.size() : r.size(); }
};

/// Parameters in declaration order.
class ParamStore {
 public:
  std::size_t add(std::string name, RealTensor t);
  std::size_t add(std::string name, ComplexTensor t);

  std::size_t index(const std::string& name) const;
  bool contains(const std::string& name) const { return by_name_.count(name) > 0; }
  Param& operator[](std::size_t i) { return params_[i]; }
  const Param& operator[](std::size_t i) const { return params_[i]; }
  Param& at(const std::string& name) { return params_[index(name)]; }
  const Param& at(const std::string& name) const { return params_[index(name)]; }
  std::size_t size() const noexcept { return params_.size(); }
  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  /// Brute enumeration of stored real scalars (complex entries count twice).
  std::size_t scalar_count() const;
  /// Real scalars in declaration order, complex entries as (re, im) pairs.
  std::vector<double> flatten() const;
  void unflatten(std::span<const double> flat);

  /// Registers every tensor on the tape; result is indexed like the store.
  std::vector<ad::Var> bind(ad::Tape& tape, bool trainable) const;
  /// Gradients in the flatten() layout.
  std::vector<double> gather_grads(const ad::Tape& tape, const std::vector<ad::Var>& bound) const;

 private:
  std::vector<Param> params_;
  std::map<std::string, std::size_t> by_name_;
};

struct ParamCounts {
  std::size_t lifting = 0;
  std::size_t projection = 0;
  std::size_t spectral = 0;            // all layers, as stored
  std::size_t spectral_effective = 0;  // all layers, eta = 1 figure
  std::size_t channel_mlp = 0;
  std::size_t fno_skip = 0;
  std::size_t mlp_skip = 0;
  std::size_t total = 0;
  std::size_t total_effective = 0;
};

/// Channel MLP with n_layers affine maps and hidden width `hidden`.
std::size_t channel_mlp_param_count(std::size_t in, std::size_t out, std::size_t hidden, std::size_t n_layers);
/// Dense spectral conv: eta * Cin * Cout * prod K + Cout.
std::size_t spectral_conv_param_count(std::size_t cin, std::size_t cout, const std::vector<std::size_t>& modes,
                                      std::size_t eta = 2);
/// 2 (R_K R_I R_O + prod K R_K + Cin R_I + Cout R_O) + Cout.
std::size_t tucker_conv_param_count(std::size_t cin, std::size_t cout, const std::vector<std::size_t>& modes,
                                    double rank);
/// Tucker ranks (R_I, R_O, R_K) used for the [Cin, Cout, prod K] weight tensor.
std::vector<std::size_t> tucker_conv_ranks(std::size_t cin, std::size_t cout, const std::vector<std::size_t>& modes,
                                           double rank);
ParamCounts count_params(const FnoConfig& cfg);

// ---- tape-level building blocks --------------------------------------------

/// A field that is real, or complex carried as a (re, im) pair.
struct Field {
  ad::Var re;
  ad::Var im;  // null tape when real
  bool is_complex() const { return im.tape != nullptr; }
  const Shape& shape() const { return re.shape(); }
};

/// Spectral conv on a tape: x [B, Cin, N...], weight [Cin, Cout, K...] (complex,
/// any K >= n_modes, stored centered). Returns [B, Cout, out_res...].
ad::Var spectral_conv(ad::Var x, ad::Var weight, const std::vector<std::size_t>& n_modes,
                      const std::vector<std::size_t>& out_res);
/// Separable variant: one weight [Cin, Cout, K_j] per axis.
ad::Var separable_spectral_conv(ad::Var x, const std::vector<ad::Var>& weights,
                                const std::vector<std::size_t>& n_modes, const std::vector<std::size_t>& out_res);

/// Zero padding on the high side: round(N * fraction) points per axis.
std::vector<std::size_t> padded_resolution(const std::vector<std::size_t>& res, const std::vector<double>& fractions);
ad::Var domain_pad(ad::Var x, const std::vector<double>& fractions);
ad::Var domain_unpad(ad::Var x, const std::vector<std::size_t>& original_res);

// ---- eager single-op API ---------------------------------------------------

/// x [Cin, N...], weight [Cin, Cout, K...]; out_res empty means N.
RealTensor spectral_conv_forward(const RealTensor& x, const ComplexTensor& weight,
                                 const std::vector<std::size_t>& n_modes, const std::vector<std::size_t>& out_res = {});
ComplexTensor spectral_conv_forward(const ComplexTensor& x, const ComplexTensor& weight,
                                    const std::vector<std::size_t>& n_modes,
                                    const std::vector<std::size_t>& out_res = {});
RealTensor separable_spectral_conv_forward(const RealTensor& x, const std::vector<ComplexTensor>& weights,
                                           const std::vector<std::size_t>& n_modes,
                                           const std::vector<std::size_t>& out_res = {});
/// x [C, N...]; weights[l] is [out, in]; activation between layers only.
RealTensor channel_mlp_forward(const RealTensor& x, const std::vector<RealTensor>& weights,
                               const std::vector<RealTensor>& biases, ad::Activation act, double dropout = 0.0);
/// x [C, N...]; Linear uses w [C, C]; SoftGating uses w [C], b [C].
RealTensor skip_forward(const RealTensor& x, SkipKind kind, const RealTensor& w = {}, const RealTensor& b = {});
/// (W_r + i W_i)(x_r + i x_i) per location; x [C, N...], W [Cout, Cin].
ComplexTensor complex_wrap_linear(const ComplexTensor& x, const RealTensor& w_re, const RealTensor& w_im);
RealTensor domain_pad(const RealTensor& x, const std::vector<double>& fractions);
RealTensor domain_unpad(const RealTensor& x, const std::vector<std::size_t>& original_res);

enum class EmbeddingMode { AmplitudeMod, FrequencyMod };

struct EmbeddingSpec {
  EmbeddingMode mode = EmbeddingMode::AmplitudeMod;
  std::size_t harmonics = 1;  // L
  double c = 1.0;             // frequency scale for FrequencyMod
  GridSpec grid;              // 1D
};

/// [2L, N]: AmplitudeMod p sin(jx), p cos(jx); FrequencyMod sin(c p j x), cos(c p j x).
RealTensor sinusoidal_embed(double p, const EmbeddingSpec& spec);

// ---- the model -------------------------------------------------------------

class FnoModel {
 public:
  FnoModel() = default;
  /// Allocates and initializes parameters from `seed`.
  FnoModel(FnoConfig cfg, std::uint64_t seed);
  /// Structure only, every parameter zero.
  static FnoModel zeros(FnoConfig cfg);

  const FnoConfig& config() const noexcept { return cfg_; }
  FnoConfig& config() noexcept { return cfg_; }
  ParamStore& params() noexcept { return params_; }
  const ParamStore& params() const noexcept { return params_; }

  /// Resolution entering each block and leaving the last one (padded grid).
  std::vector<std::vector<std::size_t>> block_resolutions(const std::vector<std::size_t>& input_res) const;
  std::vector<std::size_t> output_resolution(const std::vector<std::size_t>& input_res) const;

  /// Full forward on a tape; x is [B, Cin, N...] real (complex_data: re/im pair).
  Field forward(ad::Tape& tape, const std::vector<ad::Var>& bound, const Field& x) const;
  ad::Var forward(ad::Tape& tape, const std::vector<ad::Var>& bound, ad::Var x) const;
  /// One FNO block (index `layer`) with explicit output resolution.
  Field block(ad::Tape& tape, const std::vector<ad::Var>& bound, std::size_t layer, const Field& x,
              const std::vector<std::size_t>& out_res) const;

  /// Eager conveniences.
  RealTensor forward(const RealTensor& x) const;
  ComplexTensor forward(const ComplexTensor& x) const;
  RealTensor block_forward(std::size_t layer, const RealTensor& x) const;

  /// Spectral weight of a layer at stored size (Tucker: reconstructed).
  ComplexTensor spectral_weight(std::size_t layer) const;
  /// Mean |W|^2 per signed frequency |k| along `axis` over all layers (for iFNO).
  std::vector<double> mode_power(std::size_t axis) const;

 private:
  void build(std::mt19937_64* rng);
  ad::Var spectral_weight_var(ad::Tape& tape, const std::vector<ad::Var>& bound, std::size_t layer) const;
  std::string prefix(std::size_t layer) const { return "block" + std::to_string(layer) + "."; }

  FnoConfig cfg_;
  ParamStore params_;
};

// ---- checkpoint ------------------------------------------------------------

struct Checkpoint {
  FnoModel model;
  ChannelStats input_stats;
  ChannelStats output_stats;
};

void write_checkpoint(const std::filesystem::path& path, const FnoModel& model, const ChannelStats& input_stats = {},
                      const ChannelStats& output_stats = {});
Checkpoint read_checkpoint(const std::filesystem::path& path);
std::string config_json(const FnoConfig& cfg, int indent = 2);

}  // namespace sok
