#pragma once

// Differentiable operations on Tensor. Each op computes its forward result
// eagerly and, when a tape is active and an input requires a gradient,
// records the matching backward rule.
//
// Broadcasting is limited to leading dimensions: in binary ops the second
// operand's shape must equal the first's or be a suffix of it.

#include <cstddef>
#include <span>
#include <string_view>

#include "noble/tensor.hpp"

namespace noble::ops {

inline constexpr double kLeakyReluSlope = 0.01;
inline constexpr double kRmsNormEps = 1e-6;
inline constexpr double kRopeBase = 10000.0;

template <typename Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real>
Tensor<Real> transpose(const Tensor<Real>& a);

template <typename Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b);
template <typename Real>
Tensor<Real> scale(const Tensor<Real>& a, Real factor);

template <typename Real>
Tensor<Real> tanh(const Tensor<Real>& x);
template <typename Real>
Tensor<Real> leaky_relu(const Tensor<Real>& x, Real slope = Real(kLeakyReluSlope));
// tanh approximation: 0.5x(1 + tanh(sqrt(2/pi)(x + 0.044715x^3)))
template <typename Real>
Tensor<Real> gelu(const Tensor<Real>& x);

/// cos(freq * x + phase), with freq and phase broadcast along the last axis.
template <typename Real>
Tensor<Real> cosine_map(const Tensor<Real>& x, const Tensor<Real>& freq, const Tensor<Real>& phase);

template <typename Real>
Tensor<Real> sum(const Tensor<Real>& x);
template <typename Real>
Tensor<Real> mean(const Tensor<Real>& x);

/// Mean negative log-likelihood of `targets` under softmax(logits) taken over
/// the last axis. One target per row.
template <typename Real>
Tensor<Real> softmax_cross_entropy(const Tensor<Real>& logits, std::span<const int> targets);

/// mean((pred - target)^2); `target` is treated as a constant.
template <typename Real>
Tensor<Real> mse_loss(const Tensor<Real>& pred, const Tensor<Real>& target);

template <typename Real>
Tensor<Real> rmsnorm(const Tensor<Real>& x, const Tensor<Real>& gain, Real eps = Real(kRmsNormEps));

/// Rows of `table` selected by `ids`; result shape [ids.size(), d].
template <typename Real>
Tensor<Real> embedding(const Tensor<Real>& table, std::span<const int> ids);

template <typename Real>
Tensor<Real> reshape(const Tensor<Real>& x, Shape shape);
/// [a, b, c, d] -> [a, c, b, d]
template <typename Real>
Tensor<Real> swap_axes_12(const Tensor<Real>& x);

/// Rotary embedding on [batch, heads, seq, head_dim]; token i sits at
/// position offset + i.
template <typename Real>
Tensor<Real> rope_apply(const Tensor<Real>& x, std::size_t position_offset = 0, double base = kRopeBase);

/// softmax(q k^T / sqrt(head_dim) + causal mask) v on [batch, heads, seq, head_dim].
template <typename Real>
Tensor<Real> causal_attention(const Tensor<Real>& q, const Tensor<Real>& k, const Tensor<Real>& v);

/// Escape hatch for ops defined outside this file (tests use it for fault
/// injection). `backward` is recorded as-is when tracking is on.
template <typename Real>
void record_custom(std::string_view name, Tensor<Real>& out, std::initializer_list<Tensor<Real>> inputs,
                   std::function<void()> backward);

}  // namespace noble::ops
