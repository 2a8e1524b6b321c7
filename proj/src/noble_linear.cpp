#include "noble/noble_linear.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>
#include <utility>

#include "noble/ops.hpp"

namespace noble {

namespace {

constexpr std::array<std::pair<ActivationKind, std::string_view>, 7> kActivationNames{{
    {ActivationKind::identity, "identity"},
    {ActivationKind::tanh, "tanh"},
    {ActivationKind::leaky_relu, "leaky_relu"},
    {ActivationKind::gelu, "gelu"},
    {ActivationKind::cosine_1layer, "cosine_1layer"},
    {ActivationKind::cosnet_2layer, "cosnet_2layer"},
    {ActivationKind::cosnet_3layer, "cosnet_3layer"},
}};

template <typename Real>
Tensor<Real> normal_tensor(Shape shape, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<Real> values(shape_numel(shape));
  for (auto& v : values) v = static_cast<Real>(dist(rng));
  return Tensor<Real>::from(std::move(shape), std::move(values), true);
}

template <typename Real>
Tensor<Real> uniform_tensor(Shape shape, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<Real> values(shape_numel(shape));
  for (auto& v : values) v = static_cast<Real>(dist(rng));
  return Tensor<Real>::from(std::move(shape), std::move(values), true);
}

}  // namespace

std::string_view to_string(ActivationKind kind) {
  for (const auto& [k, name] : kActivationNames)
    if (k == kind) return name;
  return "unknown";
}

ActivationKind parse_activation(std::string_view name) {
  for (const auto& [k, n] : kActivationNames)
    if (n == name) return k;
  throw std::invalid_argument("unknown activation: " + std::string(name));
}

std::size_t cosine_stage_count(ActivationKind kind) {
  switch (kind) {
    case ActivationKind::cosine_1layer: return 1;
    case ActivationKind::cosnet_2layer: return 2;
    case ActivationKind::cosnet_3layer: return 3;
    default: return 0;
  }
}

std::size_t mixing_matrix_count(ActivationKind kind) {
  const std::size_t stages = cosine_stage_count(kind);
  return stages > 0 ? stages - 1 : 0;
}

void NobleConfig::validate() const {
  if (d_in == 0 || d_out == 0) throw std::invalid_argument("NobleConfig: d_in and d_out must be positive");
  if (rank == 0) throw std::invalid_argument("NobleConfig: rank must be at least 1");
  if (rank > std::min(d_in, d_out)) {
    throw std::invalid_argument("NobleConfig: rank " + std::to_string(rank) + " exceeds min(d_in, d_out) = " +
                                std::to_string(std::min(d_in, d_out)));
  }
  if (!(omega_min > 0.0) || !(omega_min <= omega_max)) {
    throw std::invalid_argument("NobleConfig: need 0 < omega_min <= omega_max");
  }
  for (double mult : {up_init_scale, main_init_scale, freq_lr_mult, phase_lr_mult}) {
    if (!(mult > 0.0)) throw std::invalid_argument("NobleConfig: scales and multipliers must be positive");
  }
  if (phase_init_std < 0.0) throw std::invalid_argument("NobleConfig: phase_init_std must be non-negative");
}

LrRuleInputs NobleConfig::lr_rule() const {
  return {d_in, d_out, rank, lr_power, mixing_lr_power, freq_lr_mult, phase_lr_mult};
}

template <typename Real>
Tensor<Real> cosnet_apply(const CosNetParams<Real>& params, const Tensor<Real>& h, std::size_t depth) {
  if (depth < 1 || depth > 3) throw std::invalid_argument("cosnet_apply: depth must be 1, 2 or 3");
  if (params.frequencies.size() < depth || params.phases.size() < depth) {
    throw std::invalid_argument("cosnet_apply: depth " + std::to_string(depth) + " needs " + std::to_string(depth) +
                                " frequency/phase vectors");
  }
  if (params.mixing.size() < depth - 1) {
    throw std::invalid_argument("cosnet_apply: depth " + std::to_string(depth) + " needs " +
                                std::to_string(depth - 1) + " mixing matrices, have " +
                                std::to_string(params.mixing.size()));
  }
  auto out = ops::cosine_map(h, params.frequencies[0], params.phases[0]);
  for (std::size_t stage = 1; stage < depth; ++stage) {
    auto mixed = ops::matmul(out, ops::transpose(params.mixing[stage - 1]));
    out = ops::cosine_map(mixed, params.frequencies[stage], params.phases[stage]);
  }
  return out;
}

std::size_t branch_param_count(const NobleConfig& cfg) {
  const std::size_t r = cfg.rank;
  return (cfg.d_in + cfg.d_out) * r + mixing_matrix_count(cfg.activation) * r * r +
         cosine_stage_count(cfg.activation) * 2 * r;
}

template <typename Real>
NobleLinear<Real> NobleLinear<Real>::init(const NobleConfig& cfg, Rng& rng) {
  cfg.validate();
  NobleLinear layer;
  const double d_in = static_cast<double>(cfg.d_in);
  const double r = static_cast<double>(cfg.rank);
  layer.weight_ = normal_tensor<Real>({cfg.d_in, cfg.d_out}, cfg.main_init_scale / std::sqrt(d_in), rng);
  layer.bias_ = Tensor<Real>::zeros({cfg.d_out}, true);
  layer.down_ = normal_tensor<Real>({cfg.d_in, cfg.rank}, 1.0 / std::sqrt(d_in), rng);
  layer.up_ = normal_tensor<Real>({cfg.rank, cfg.d_out}, cfg.up_init_scale / std::sqrt(r), rng);
  const std::size_t stages = cosine_stage_count(cfg.activation);
  for (std::size_t s = 0; s < stages; ++s) {
    layer.cosnet_.frequencies.push_back(uniform_tensor<Real>({cfg.rank}, cfg.omega_min, cfg.omega_max, rng));
    layer.cosnet_.phases.push_back(normal_tensor<Real>({cfg.rank}, cfg.phase_init_std, rng));
  }
  const double xavier = std::sqrt(6.0 / (r + r));
  for (std::size_t s = 0; s < mixing_matrix_count(cfg.activation); ++s) {
    layer.cosnet_.mixing.push_back(uniform_tensor<Real>({cfg.rank, cfg.rank}, -xavier, xavier, rng));
  }
  layer.config_ = cfg;
  return layer;
}

template <typename Real>
NobleLinear<Real> NobleLinear<Real>::plain(std::size_t d_in, std::size_t d_out, double init_scale, Rng& rng) {
  if (d_in == 0 || d_out == 0) throw std::invalid_argument("NobleLinear::plain: extents must be positive");
  NobleLinear layer;
  layer.weight_ = normal_tensor<Real>({d_in, d_out}, init_scale / std::sqrt(static_cast<double>(d_in)), rng);
  layer.bias_ = Tensor<Real>::zeros({d_out}, true);
  return layer;
}

template <typename Real>
Tensor<Real> NobleLinear<Real>::bottleneck(const Tensor<Real>& x) const {
  if (!config_) throw std::logic_error("NobleLinear::bottleneck: layer has no branch");
  auto h = ops::matmul(x, down_);
  switch (config_->activation) {
    case ActivationKind::identity: return h;
    case ActivationKind::tanh: return ops::tanh(h);
    case ActivationKind::leaky_relu: return ops::leaky_relu(h);
    case ActivationKind::gelu: return ops::gelu(h);
    default: return cosnet_apply(cosnet_, h, cosine_stage_count(config_->activation));
  }
}

template <typename Real>
Tensor<Real> NobleLinear<Real>::branch_forward(const Tensor<Real>& x) const {
  return ops::matmul(bottleneck(x), up_);
}

template <typename Real>
Tensor<Real> NobleLinear<Real>::forward(const Tensor<Real>& x) const {
  if (x.rank() != 2 || x.dim(1) != d_in()) {
    throw ShapeError("NobleLinear: input " + shape_to_string(x.shape()) + " does not match d_in " +
                     std::to_string(d_in()));
  }
  auto main = ops::add(ops::matmul(x, weight_), bias_);
  if (!config_) return main;
  return ops::add(main, branch_forward(x));
}

template <typename Real>
void NobleLinear<Real>::collect_parameters(const std::string& prefix, ParameterList<Real>& out) const {
  out.push_back({prefix + ".weight", RoleTag::main_weight, 1.0, weight_});
  out.push_back({prefix + ".bias", RoleTag::bias_or_gain, 1.0, bias_});
  if (!config_) return;
  const auto rule = config_->lr_rule();
  auto add = [&](std::string name, RoleTag tag, const Tensor<Real>& t) {
    out.push_back({prefix + "." + name, tag, lr_multiplier(tag, rule), t});
  };
  add("down", RoleTag::w_down, down_);
  add("up", RoleTag::w_up, up_);
  for (std::size_t s = 0; s < cosnet_.frequencies.size(); ++s) {
    add("freq" + std::to_string(s), RoleTag::frequency, cosnet_.frequencies[s]);
    add("phase" + std::to_string(s), RoleTag::phase, cosnet_.phases[s]);
  }
  for (std::size_t s = 0; s < cosnet_.mixing.size(); ++s) {
    add("mix" + std::to_string(s), RoleTag::mixing_M, cosnet_.mixing[s]);
  }
}

template <typename Real>
std::size_t NobleLinear<Real>::branch_param_count() const {
  if (!config_) return 0;
  std::size_t n = down_.numel() + up_.numel();
  for (const auto& t : cosnet_.frequencies) n += t.numel();
  for (const auto& t : cosnet_.phases) n += t.numel();
  for (const auto& t : cosnet_.mixing) n += t.numel();
  return n;
}

template Tensor<float> cosnet_apply(const CosNetParams<float>&, const Tensor<float>&, std::size_t);
template Tensor<double> cosnet_apply(const CosNetParams<double>&, const Tensor<double>&, std::size_t);
template class NobleLinear<float>;
template class NobleLinear<double>;

}  // namespace noble
