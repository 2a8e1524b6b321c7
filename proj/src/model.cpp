#include "noble/model.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "noble/ops.hpp"

namespace noble {

std::size_t default_ffn_hidden(std::size_t width) {
  const std::size_t raw = (8 * width + 2) / 3;  // ceil(8d/3)
  return (raw + 63) / 64 * 64;
}

void TransformerConfig::validate() const {
  if (width == 0 || n_heads == 0 || vocab_size == 0 || seq_len == 0) {
    throw std::invalid_argument("TransformerConfig: width, heads, vocab and seq_len must be positive");
  }
  if (width % n_heads != 0) {
    throw std::invalid_argument("TransformerConfig: width " + std::to_string(width) + " not divisible by " +
                                std::to_string(n_heads) + " heads");
  }
  if (head_dim() % 2 != 0) throw std::invalid_argument("TransformerConfig: head_dim must be even for RoPE");
  if (resolved_ffn_hidden() % 64 != 0) {
    throw std::invalid_argument("TransformerConfig: ffn_hidden must be a multiple of 64");
  }
  if (noble) {
    NobleConfig probe = *noble;
    probe.d_in = width;
    probe.d_out = width;
    probe.validate();
  }
}

namespace {

// (d_in, d_out) of the seven block projections.
std::vector<std::pair<std::size_t, std::size_t>> block_projection_shapes(const TransformerConfig& cfg) {
  const std::size_t d = cfg.width, f = cfg.resolved_ffn_hidden();
  return {{d, d}, {d, d}, {d, d}, {d, d}, {d, f}, {d, f}, {f, d}};
}

NobleConfig branch_for(const NobleConfig& tmpl, std::size_t d_in, std::size_t d_out) {
  NobleConfig cfg = tmpl;
  cfg.d_in = d_in;
  cfg.d_out = d_out;
  return cfg;
}

template <typename Real>
NobleLinear<Real> make_projection(const std::optional<NobleConfig>& noble, double plain_scale, std::size_t d_in,
                                  std::size_t d_out, Rng& rng) {
  if (noble) return NobleLinear<Real>::init(branch_for(*noble, d_in, d_out), rng);
  return NobleLinear<Real>::plain(d_in, d_out, plain_scale, rng);
}

template <typename Real>
Tensor<Real> normal(Shape shape, double stddev, Rng& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<Real> values(shape_numel(shape));
  for (auto& v : values) v = static_cast<Real>(dist(rng));
  return Tensor<Real>::from(std::move(shape), std::move(values), true);
}

template <typename Real>
void add_counts(const NobleLinear<Real>& layer, ParamCounts& counts) {
  counts.base += layer.main_param_count();
  counts.branch += layer.branch_param_count();
}

}  // namespace

ParamCounts count_params(const TransformerConfig& cfg, bool include_embeddings) {
  cfg.validate();
  ParamCounts counts;
  for (const auto& [d_in, d_out] : block_projection_shapes(cfg)) {
    counts.base += d_in * d_out + d_out;
    if (cfg.noble) counts.branch += branch_param_count(branch_for(*cfg.noble, d_in, d_out));
  }
  counts.base += 2 * cfg.width;  // norm gains
  counts.base *= cfg.depth;
  counts.branch *= cfg.depth;
  counts.base += cfg.width;  // final norm
  if (include_embeddings) {
    counts.base += cfg.vocab_size * cfg.width;
    if (!cfg.tie_embeddings) counts.base += cfg.width * cfg.vocab_size + cfg.vocab_size;
  }
  return counts;
}

template <typename Real>
Transformer<Real> Transformer<Real>::init(const TransformerConfig& cfg, Rng& rng) {
  cfg.validate();
  Transformer model;
  model.cfg_ = cfg;
  model.embed_ = normal<Real>({cfg.vocab_size, cfg.width}, cfg.embed_init_std, rng);
  for (std::size_t l = 0; l < cfg.depth; ++l) {
    const auto shapes = block_projection_shapes(cfg);
    auto proj = [&](std::size_t i) {
      return make_projection<Real>(cfg.noble, cfg.main_init_scale, shapes[i].first, shapes[i].second, rng);
    };
    Block<Real> block{proj(0), proj(1), proj(2), proj(3), proj(4), proj(5), proj(6),
                      Tensor<Real>::full({cfg.width}, Real(1), true), Tensor<Real>::full({cfg.width}, Real(1), true)};
    model.blocks_.push_back(std::move(block));
  }
  model.final_norm_ = Tensor<Real>::full({cfg.width}, Real(1), true);
  if (!cfg.tie_embeddings) {
    // plain() scales by 1/sqrt(d_in); undo that to get embed_init_std.
    model.head_ = NobleLinear<Real>::plain(cfg.width, cfg.vocab_size,
                                           cfg.embed_init_std * std::sqrt(static_cast<double>(cfg.width)), rng);
  }
  return model;
}

template <typename Real>
Tensor<Real> Transformer<Real>::forward(std::span<const int> token_ids, std::size_t batch, std::size_t seq) const {
  if (token_ids.size() != batch * seq) {
    throw ShapeError("Transformer::forward: " + std::to_string(token_ids.size()) + " ids for batch " +
                     std::to_string(batch) + " x seq " + std::to_string(seq));
  }
  if (seq > cfg_.seq_len) {
    throw std::invalid_argument("Transformer::forward: sequence length " + std::to_string(seq) +
                                " exceeds configured " + std::to_string(cfg_.seq_len));
  }
  const std::size_t d = cfg_.width, heads = cfg_.n_heads, hd = cfg_.head_dim();
  auto to_heads = [&](const Tensor<Real>& t) { return ops::swap_axes_12(ops::reshape(t, {batch, seq, heads, hd})); };
  auto from_heads = [&](const Tensor<Real>& t) { return ops::reshape(ops::swap_axes_12(t), {batch * seq, d}); };

  auto x = ops::embedding(embed_, token_ids);
  for (const auto& block : blocks_) {
    auto h = ops::rmsnorm(x, block.attn_norm);
    auto q = ops::rope_apply(to_heads(block.q.forward(h)));
    auto k = ops::rope_apply(to_heads(block.k.forward(h)));
    auto v = to_heads(block.v.forward(h));
    auto attn = from_heads(ops::causal_attention(q, k, v));
    x = ops::add(x, block.o.forward(attn));

    h = ops::rmsnorm(x, block.ffn_norm);
    auto gated = ops::mul(ops::gelu(block.gate.forward(h)), block.value.forward(h));
    x = ops::add(x, block.out.forward(gated));
  }
  x = ops::rmsnorm(x, final_norm_);
  auto logits = cfg_.tie_embeddings ? ops::matmul(x, ops::transpose(embed_)) : head_.forward(x);
  return ops::reshape(logits, {batch, seq, cfg_.vocab_size});
}

template <typename Real>
Tensor<Real> Transformer<Real>::loss(std::span<const int> token_ids, std::span<const int> targets,
                                     std::size_t batch, std::size_t seq) const {
  return ops::softmax_cross_entropy(forward(token_ids, batch, seq), targets);
}

template <typename Real>
ParameterList<Real> Transformer<Real>::parameters() const {
  ParameterList<Real> params;
  params.push_back({"embed", RoleTag::embedding, 1.0, embed_});
  for (std::size_t l = 0; l < blocks_.size(); ++l) {
    const auto& b = blocks_[l];
    const std::string p = "blocks." + std::to_string(l) + ".";
    params.push_back({p + "attn_norm", RoleTag::bias_or_gain, 1.0, b.attn_norm});
    b.q.collect_parameters(p + "attn.q", params);
    b.k.collect_parameters(p + "attn.k", params);
    b.v.collect_parameters(p + "attn.v", params);
    b.o.collect_parameters(p + "attn.o", params);
    params.push_back({p + "ffn_norm", RoleTag::bias_or_gain, 1.0, b.ffn_norm});
    b.gate.collect_parameters(p + "ffn.gate", params);
    b.value.collect_parameters(p + "ffn.value", params);
    b.out.collect_parameters(p + "ffn.out", params);
  }
  params.push_back({"final_norm", RoleTag::bias_or_gain, 1.0, final_norm_});
  if (!cfg_.tie_embeddings) head_.collect_parameters("head", params);
  return params;
}

template <typename Real>
ParamCounts Transformer<Real>::count_params(bool include_embeddings) const {
  ParamCounts counts;
  for (const auto& b : blocks_) {
    for (const auto* layer : {&b.q, &b.k, &b.v, &b.o, &b.gate, &b.value, &b.out}) add_counts(*layer, counts);
    counts.base += b.attn_norm.numel() + b.ffn_norm.numel();
  }
  counts.base += final_norm_.numel();
  if (include_embeddings) {
    counts.base += embed_.numel();
    if (!cfg_.tie_embeddings) add_counts(head_, counts);
  }
  return counts;
}

void RegressionNetConfig::validate() const {
  if (input_dim == 0 || width == 0) throw std::invalid_argument("RegressionNetConfig: extents must be positive");
  if (noble) {
    if (hidden_layers == 0) throw std::invalid_argument("RegressionNetConfig: branches need hidden layers");
    branch_for(*noble, width, width).validate();
  }
}

ParamCounts count_params(const RegressionNetConfig& cfg) {
  cfg.validate();
  ParamCounts counts;
  counts.base = cfg.input_dim * cfg.width + cfg.width + cfg.hidden_layers * (cfg.width * cfg.width + cfg.width) +
                cfg.width + 1;
  if (cfg.noble) counts.branch = cfg.hidden_layers * branch_param_count(branch_for(*cfg.noble, cfg.width, cfg.width));
  return counts;
}

template <typename Real>
RegressionNet<Real> RegressionNet<Real>::init(const RegressionNetConfig& cfg, Rng& rng) {
  cfg.validate();
  RegressionNet net;
  net.cfg_ = cfg;
  net.input_ = NobleLinear<Real>::plain(cfg.input_dim, cfg.width, cfg.main_init_scale, rng);
  for (std::size_t l = 0; l < cfg.hidden_layers; ++l) {
    net.hidden_.push_back(make_projection<Real>(cfg.noble, cfg.main_init_scale, cfg.width, cfg.width, rng));
  }
  net.output_ = NobleLinear<Real>::plain(cfg.width, 1, cfg.main_init_scale, rng);
  return net;
}

template <typename Real>
Tensor<Real> RegressionNet<Real>::forward(const Tensor<Real>& x) const {
  auto h = ops::gelu(input_.forward(x));
  for (const auto& layer : hidden_) h = ops::gelu(layer.forward(h));
  return output_.forward(h);
}

template <typename Real>
ParameterList<Real> RegressionNet<Real>::parameters() const {
  ParameterList<Real> params;
  input_.collect_parameters("input", params);
  for (std::size_t l = 0; l < hidden_.size(); ++l) hidden_[l].collect_parameters("hidden." + std::to_string(l), params);
  output_.collect_parameters("output", params);
  return params;
}

template <typename Real>
ParamCounts RegressionNet<Real>::count_params() const {
  ParamCounts counts;
  add_counts(input_, counts);
  for (const auto& layer : hidden_) add_counts(layer, counts);
  add_counts(output_, counts);
  return counts;
}

template class Transformer<float>;
template class Transformer<double>;
template class RegressionNet<float>;
template class RegressionNet<double>;

}  // namespace noble
