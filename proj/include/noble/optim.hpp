#pragma once

// AdamW with per-group learning-rate multipliers and a linear
// warmup / linear decay schedule.

#include <cstddef>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "noble/tensor.hpp"

namespace noble {

/// Role of a trainable parameter; decides its learning-rate multiplier and
/// whether weight decay applies.
enum class RoleTag { main_weight, bias_or_gain, w_down, w_up, mixing_M, frequency, phase, embedding };

std::string_view to_string(RoleTag tag);
RoleTag parse_role(std::string_view name);

template <typename Real>
struct Parameter {
  std::string name;
  RoleTag tag = RoleTag::main_weight;
  double lr_mult = 1.0;
  Tensor<Real> tensor;
};

template <typename Real>
using ParameterList = std::vector<Parameter<Real>>;

struct LrRuleInputs {
  std::size_t d_in = 0;
  std::size_t d_out = 0;
  std::size_t rank = 0;
  double lr_power = 0.3;         // gamma; W_up uses 2 * gamma
  double mixing_lr_power = 0.45;  // gamma_M
  double freq_lr_mult = 3.0;
  double phase_lr_mult = 5.0;
};

/// w_up -> (min(d_in,d_out)/r)^(2 gamma); mixing_M -> (min(d_in,d_out)/r)^gamma_M;
/// frequency / phase -> flat multipliers; every other tag -> 1.
double lr_multiplier(RoleTag tag, const LrRuleInputs& in);

/// Biases, norm gains, frequencies and phases are exempt from weight decay.
bool weight_decay_enabled(RoleTag tag);

/// t / warmup during warmup, then linear from 1 down to 0 at total.
double schedule(std::size_t t, std::size_t warmup, std::size_t total);

struct ParamGroup {
  std::vector<std::size_t> members;  // indices into the optimizer's parameter list
  double lr_mult = 1.0;
  bool weight_decay_enabled = true;
};

/// Partitions parameters by (lr_mult, weight-decay flag). Rejects a tensor
/// listed twice and non-positive multipliers.
template <typename Real>
std::vector<ParamGroup> build_param_groups(const ParameterList<Real>& params);

struct AdamWOptions {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
  double weight_decay = 0.01;
  std::size_t warmup_steps = 0;
  std::size_t total_steps = 0;  // 0 disables the schedule
};

class NonFiniteGradient : public std::runtime_error {
 public:
  NonFiniteGradient(const std::string& param, RoleTag tag)
      : std::runtime_error("non-finite gradient in " + param + " (" + std::string(to_string(tag)) + ")"),
        param_name(param),
        role(tag) {}
  std::string param_name;
  RoleTag role;
};

template <typename Real>
class AdamW {
 public:
  AdamW(ParameterList<Real> params, AdamWOptions options);

  /// One decoupled-weight-decay Adam update with
  /// lr = base_lr * schedule(t) * group multiplier. Checks every gradient
  /// first; on a non-finite value nothing is modified.
  void step();
  void zero_grad();

  std::size_t step_count() const { return t_; }
  double schedule_scale(std::size_t t) const;
  const AdamWOptions& options() const { return options_; }
  const ParameterList<Real>& parameters() const { return params_; }
  const std::vector<ParamGroup>& groups() const { return groups_; }

  const std::vector<std::vector<Real>>& first_moments() const { return m_; }
  const std::vector<std::vector<Real>>& second_moments() const { return v_; }
  void restore_state(std::size_t t, std::vector<std::vector<Real>> m, std::vector<std::vector<Real>> v);

 private:
  ParameterList<Real> params_;
  AdamWOptions options_;
  std::vector<ParamGroup> groups_;
  std::vector<std::vector<Real>> m_;
  std::vector<std::vector<Real>> v_;
  std::size_t t_ = 0;
};

}  // namespace noble
