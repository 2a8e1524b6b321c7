#pragma once

// Decoder-only transformer: RMSNorm, RoPE, causal attention, GeGLU FFN.
// With `noble` set, all seven block projections (Q, K, V, O, gate, value,
// out) carry a branch; embeddings, output head and norm gains never do.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "noble/noble_linear.hpp"
#include "noble/optim.hpp"
#include "noble/rng.hpp"
#include "noble/tensor.hpp"

namespace noble {

/// ceil(8d/3) rounded up to a multiple of 64.
std::size_t default_ffn_hidden(std::size_t width);

struct TransformerConfig {
  std::size_t depth = 2;
  std::size_t width = 64;
  std::size_t n_heads = 4;
  std::size_t vocab_size = 16;
  std::size_t seq_len = 32;
  std::size_t ffn_hidden = 0;  // 0 selects default_ffn_hidden(width)
  /// Branch template; d_in / d_out are filled per projection.
  std::optional<NobleConfig> noble;
  bool tie_embeddings = false;
  double main_init_scale = 1.0;  // block projections without a branch
  double embed_init_std = 0.02;  // token table and output head

  std::size_t resolved_ffn_hidden() const { return ffn_hidden ? ffn_hidden : default_ffn_hidden(width); }
  std::size_t head_dim() const { return width / n_heads; }
  void validate() const;
};

struct ParamCounts {
  std::size_t base = 0;    // everything outside the branches
  std::size_t branch = 0;  // W_down, W_up, frequencies, phases, mixing
  std::size_t total() const { return base + branch; }
  /// branch / base in percent
  double overhead_pct() const {
    return base ? 100.0 * static_cast<double>(branch) / static_cast<double>(base) : 0.0;
  }
};

/// Closed-form counts; does not allocate a model.
ParamCounts count_params(const TransformerConfig& cfg, bool include_embeddings);

template <typename Real>
struct Block {
  NobleLinear<Real> q, k, v, o;
  NobleLinear<Real> gate, value, out;
  Tensor<Real> attn_norm;
  Tensor<Real> ffn_norm;
};

template <typename Real>
class Transformer {
 public:
  static Transformer init(const TransformerConfig& cfg, Rng& rng);

  /// token_ids holds batch * seq ids, row-major. Returns logits [batch, seq, vocab].
  Tensor<Real> forward(std::span<const int> token_ids, std::size_t batch, std::size_t seq) const;
  /// Mean next-token cross-entropy of `targets` (same layout as token_ids).
  Tensor<Real> loss(std::span<const int> token_ids, std::span<const int> targets, std::size_t batch,
                    std::size_t seq) const;

  const TransformerConfig& config() const { return cfg_; }
  std::vector<Block<Real>>& blocks() { return blocks_; }
  const std::vector<Block<Real>>& blocks() const { return blocks_; }
  Tensor<Real>& embedding() { return embed_; }
  NobleLinear<Real>& head() { return head_; }
  Tensor<Real>& final_norm() { return final_norm_; }

  ParameterList<Real> parameters() const;
  ParamCounts count_params(bool include_embeddings) const;

 private:
  TransformerConfig cfg_;
  Tensor<Real> embed_;
  std::vector<Block<Real>> blocks_;
  Tensor<Real> final_norm_;
  NobleLinear<Real> head_;  // unused when embeddings are tied
};

/// Pointwise net for the spectral regression task: input projection, a
/// stack of width x width hidden layers (branch-carrying when `noble` is
/// set), GELU between layers, scalar output.
struct RegressionNetConfig {
  std::size_t input_dim = 1;
  std::size_t width = 64;
  std::size_t hidden_layers = 2;
  std::optional<NobleConfig> noble;
  double main_init_scale = 1.0;

  void validate() const;
};

ParamCounts count_params(const RegressionNetConfig& cfg);

template <typename Real>
class RegressionNet {
 public:
  static RegressionNet init(const RegressionNetConfig& cfg, Rng& rng);

  /// x: [n, input_dim] -> [n, 1]
  Tensor<Real> forward(const Tensor<Real>& x) const;

  const RegressionNetConfig& config() const { return cfg_; }
  std::vector<NobleLinear<Real>>& hidden() { return hidden_; }
  ParameterList<Real> parameters() const;
  ParamCounts count_params() const;

 private:
  RegressionNetConfig cfg_;
  NobleLinear<Real> input_;
  std::vector<NobleLinear<Real>> hidden_;
  NobleLinear<Real> output_;
};

}  // namespace noble
