#pragma once

// Linear layer with an optional nonlinear low-rank branch:
//
//   y = x W + b + act(x W_down) W_up
//
// The branch activation is picked from ActivationKind. The cosine kinds carry
// per-dimension frequency/phase vectors and, for the deeper variants, r x r
// mixing matrices between cosine stages.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "noble/optim.hpp"
#include "noble/rng.hpp"
#include "noble/tensor.hpp"

namespace noble {

enum class ActivationKind { identity, tanh, leaky_relu, gelu, cosine_1layer, cosnet_2layer, cosnet_3layer };

std::string_view to_string(ActivationKind kind);
ActivationKind parse_activation(std::string_view name);
/// Number of cos(freq * h + phase) stages (0 for non-cosine kinds).
std::size_t cosine_stage_count(ActivationKind kind);
/// Number of r x r mixing matrices (cosine stages minus one).
std::size_t mixing_matrix_count(ActivationKind kind);

struct NobleConfig {
  std::size_t d_in = 0;
  std::size_t d_out = 0;
  std::size_t rank = 64;
  ActivationKind activation = ActivationKind::cosnet_2layer;
  double up_init_scale = 0.01;   // W_up std = up_init_scale / sqrt(r)
  double main_init_scale = 0.5;  // W std = main_init_scale / sqrt(d_in)
  double lr_power = 0.3;
  double mixing_lr_power = 0.45;
  double omega_min = 0.8;
  double omega_max = 1.2;
  double phase_init_std = 0.1;
  double freq_lr_mult = 3.0;
  double phase_lr_mult = 5.0;

  /// Throws std::invalid_argument describing the first violated constraint.
  void validate() const;
  LrRuleInputs lr_rule() const;
};

template <typename Real>
struct CosNetParams {
  std::vector<Tensor<Real>> frequencies;  // one [r] vector per cosine stage
  std::vector<Tensor<Real>> phases;       // one [r] vector per cosine stage
  std::vector<Tensor<Real>> mixing;       // one [r, r] matrix between stages
};

/// depth 1: cos(w1*h + p1)
/// depth 2: cos(w2 * (M1 . cos(w1*h + p1)) + p2)
/// depth 3: one more (M2, w3, p3) stage of the same pattern.
/// Rows of h are bottleneck vectors; M . v is applied to each row.
template <typename Real>
Tensor<Real> cosnet_apply(const CosNetParams<Real>& params, const Tensor<Real>& h, std::size_t depth);

/// Closed-form size of the branch: (d_in + d_out) r for the projections,
/// r^2 per mixing matrix and 2r per cosine stage.
std::size_t branch_param_count(const NobleConfig& cfg);

template <typename Real>
class NobleLinear {
 public:
  NobleLinear() = default;

  /// Main path plus branch, initialized per the config.
  static NobleLinear init(const NobleConfig& cfg, Rng& rng);
  /// Main path only, W std = init_scale / sqrt(d_in), zero bias.
  static NobleLinear plain(std::size_t d_in, std::size_t d_out, double init_scale, Rng& rng);

  /// x: [batch, d_in] -> [batch, d_out]
  Tensor<Real> forward(const Tensor<Real>& x) const;
  /// act(x W_down) W_up alone.
  Tensor<Real> branch_forward(const Tensor<Real>& x) const;
  /// act(x W_down), the bottleneck activations.
  Tensor<Real> bottleneck(const Tensor<Real>& x) const;

  bool has_branch() const { return config_.has_value(); }
  const std::optional<NobleConfig>& config() const { return config_; }
  std::size_t d_in() const { return weight_.dim(0); }
  std::size_t d_out() const { return weight_.dim(1); }

  Tensor<Real>& weight() { return weight_; }
  Tensor<Real>& bias() { return bias_; }
  Tensor<Real>& down() { return down_; }
  Tensor<Real>& up() { return up_; }
  CosNetParams<Real>& cosnet() { return cosnet_; }
  const Tensor<Real>& weight() const { return weight_; }
  const Tensor<Real>& bias() const { return bias_; }
  const Tensor<Real>& down() const { return down_; }
  const Tensor<Real>& up() const { return up_; }
  const CosNetParams<Real>& cosnet() const { return cosnet_; }

  /// Appends every trainable tensor with its role tag and learning-rate
  /// multiplier; names are `prefix.weight`, `prefix.up`, `prefix.freq0`, ...
  void collect_parameters(const std::string& prefix, ParameterList<Real>& out) const;
  std::size_t main_param_count() const { return weight_.numel() + bias_.numel(); }
  std::size_t branch_param_count() const;

 private:
  Tensor<Real> weight_;
  Tensor<Real> bias_;
  std::optional<NobleConfig> config_;
  Tensor<Real> down_;
  Tensor<Real> up_;
  CosNetParams<Real> cosnet_;
};

}  // namespace noble
