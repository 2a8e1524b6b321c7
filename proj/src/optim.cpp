#include "noble/optim.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <utility>

namespace noble {

namespace {
constexpr std::array<std::pair<RoleTag, std::string_view>, 8> kRoleNames{{
    {RoleTag::main_weight, "main_weight"},
    {RoleTag::bias_or_gain, "bias_or_gain"},
    {RoleTag::w_down, "w_down"},
    {RoleTag::w_up, "w_up"},
    {RoleTag::mixing_M, "mixing_M"},
    {RoleTag::frequency, "frequency"},
    {RoleTag::phase, "phase"},
    {RoleTag::embedding, "embedding"},
}};
}  // namespace

std::string_view to_string(RoleTag tag) {
  for (const auto& [t, name] : kRoleNames)
    if (t == tag) return name;
  return "unknown";
}

RoleTag parse_role(std::string_view name) {
  for (const auto& [t, n] : kRoleNames)
    if (n == name) return t;
  throw std::invalid_argument("unknown role tag: " + std::string(name));
}

double lr_multiplier(RoleTag tag, const LrRuleInputs& in) {
  if (in.rank == 0) throw std::invalid_argument("lr_multiplier: rank must be positive");
  const std::size_t narrow = std::min(in.d_in, in.d_out);
  if (in.rank > narrow) {
    throw std::invalid_argument("lr_multiplier: rank " + std::to_string(in.rank) + " exceeds min(d_in, d_out) = " +
                                std::to_string(narrow));
  }
  const double ratio = static_cast<double>(narrow) / static_cast<double>(in.rank);
  switch (tag) {
    case RoleTag::w_up: return std::pow(ratio, 2.0 * in.lr_power);
    case RoleTag::mixing_M: return std::pow(ratio, in.mixing_lr_power);
    case RoleTag::frequency: return in.freq_lr_mult;
    case RoleTag::phase: return in.phase_lr_mult;
    default: return 1.0;
  }
}

bool weight_decay_enabled(RoleTag tag) {
  switch (tag) {
    case RoleTag::bias_or_gain:
    case RoleTag::frequency:
    case RoleTag::phase: return false;
    default: return true;
  }
}

double schedule(std::size_t t, std::size_t warmup, std::size_t total) {
  if (warmup >= total) throw std::invalid_argument("schedule: warmup must be shorter than total");
  if (t > total) throw std::invalid_argument("schedule: step " + std::to_string(t) + " beyond total " +
                                             std::to_string(total));
  if (t < warmup) return static_cast<double>(t) / static_cast<double>(warmup);
  return static_cast<double>(total - t) / static_cast<double>(total - warmup);
}

template <typename Real>
std::vector<ParamGroup> build_param_groups(const ParameterList<Real>& params) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].tensor.defined()) throw std::invalid_argument("parameter " + params[i].name + " is undefined");
    if (!(params[i].lr_mult > 0.0)) {
      throw std::invalid_argument("parameter " + params[i].name + " has non-positive lr multiplier");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (params[i].tensor.same_node(params[j].tensor)) {
        throw std::invalid_argument("parameter tensor listed twice: " + params[j].name + " and " + params[i].name);
      }
    }
  }
  std::map<std::pair<double, bool>, std::size_t> index;
  std::vector<ParamGroup> groups;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const bool decay = weight_decay_enabled(params[i].tag);
    const auto key = std::make_pair(params[i].lr_mult, decay);
    auto [it, inserted] = index.emplace(key, groups.size());
    if (inserted) groups.push_back({{}, params[i].lr_mult, decay});
    groups[it->second].members.push_back(i);
  }
  return groups;
}

template <typename Real>
AdamW<Real>::AdamW(ParameterList<Real> params, AdamWOptions options)
    : params_(std::move(params)), options_(options), groups_(build_param_groups(params_)) {
  if (options_.total_steps > 0 && options_.warmup_steps >= options_.total_steps) {
    throw std::invalid_argument("AdamW: warmup_steps must be below total_steps");
  }
  std::size_t covered = 0;
  for (const auto& g : groups_) covered += g.members.size();
  if (covered != params_.size()) throw std::logic_error("AdamW: parameter groups do not cover every parameter");
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const auto& p : params_) {
    m_.emplace_back(p.tensor.numel(), Real(0));
    v_.emplace_back(p.tensor.numel(), Real(0));
  }
}

template <typename Real>
double AdamW<Real>::schedule_scale(std::size_t t) const {
  if (options_.total_steps == 0) return 1.0;
  return schedule(t, options_.warmup_steps, options_.total_steps);
}

template <typename Real>
void AdamW<Real>::step() {
  for (const auto& p : params_) {
    if (!p.tensor.has_grad()) continue;
    for (Real g : p.tensor.grad()) {
      if (!std::isfinite(g)) throw NonFiniteGradient(p.name, p.tag);
    }
  }
  ++t_;
  const double sched = schedule_scale(t_);
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(t_));
  const Real b1 = static_cast<Real>(options_.beta1);
  const Real b2 = static_cast<Real>(options_.beta2);
  for (const auto& group : groups_) {
    const double lr = options_.lr * sched * group.lr_mult;
    const Real decay = group.weight_decay_enabled ? static_cast<Real>(1.0 - lr * options_.weight_decay) : Real(1);
    for (std::size_t idx : group.members) {
      auto& tensor = params_[idx].tensor;
      if (!tensor.has_grad()) continue;
      auto data = tensor.data();
      auto grad = tensor.grad();
      auto& m = m_[idx];
      auto& v = v_[idx];
      for (std::size_t i = 0; i < data.size(); ++i) {
        m[i] = b1 * m[i] + (Real(1) - b1) * grad[i];
        v[i] = b2 * v[i] + (Real(1) - b2) * grad[i] * grad[i];
        const double m_hat = static_cast<double>(m[i]) / bc1;
        const double v_hat = static_cast<double>(v[i]) / bc2;
        data[i] = static_cast<Real>(static_cast<double>(data[i] * decay) -
                                    lr * m_hat / (std::sqrt(v_hat) + options_.eps));
      }
    }
  }
}

template <typename Real>
void AdamW<Real>::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

template <typename Real>
void AdamW<Real>::restore_state(std::size_t t, std::vector<std::vector<Real>> m, std::vector<std::vector<Real>> v) {
  if (m.size() != params_.size() || v.size() != params_.size()) {
    throw std::invalid_argument("AdamW::restore_state: moment count does not match parameter count");
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (m[i].size() != params_[i].tensor.numel() || v[i].size() != params_[i].tensor.numel()) {
      throw std::invalid_argument("AdamW::restore_state: moment shape mismatch for " + params_[i].name);
    }
  }
  t_ = t;
  m_ = std::move(m);
  v_ = std::move(v);
}

template std::vector<ParamGroup> build_param_groups(const ParameterList<float>&);
template std::vector<ParamGroup> build_param_groups(const ParameterList<double>&);
template class AdamW<float>;
template class AdamW<double>;

}  // namespace noble
