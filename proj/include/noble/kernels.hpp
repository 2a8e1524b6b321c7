#pragma once

// Compute kernels behind the tensor ops.
//
// `reference` holds plain serial loops kept as the test oracle. `parallel`
// holds the OpenMP versions used by the ops. Every output element of a
// parallel kernel is accumulated by one thread in a fixed order, so results
// do not depend on the thread count.

#include <cstddef>
#include <span>

namespace noble::kernels {

/// Shapes for batched causal attention over [groups, seq, head_dim] blocks,
/// where groups = batch * heads.
struct AttentionDims {
  std::size_t groups = 0;
  std::size_t seq = 0;
  std::size_t head_dim = 0;
};

namespace reference {

// c[m,n] (+)= a[m,k] * b[k,n]
template <typename Real>
void gemm_nn(std::span<const Real> a, std::span<const Real> b, std::span<Real> c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate);
// c[k,n] (+)= a[m,k]^T * g[m,n]
template <typename Real>
void gemm_tn(std::span<const Real> a, std::span<const Real> g, std::span<Real> c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate);
// c[m,k] (+)= g[m,n] * b[k,n]^T
template <typename Real>
void gemm_nt(std::span<const Real> g, std::span<const Real> b, std::span<Real> c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate);

template <typename Real>
void attention_forward(std::span<const Real> q, std::span<const Real> k, std::span<const Real> v,
                       std::span<Real> out, std::span<Real> probs, AttentionDims dims);
// Accumulates into dq, dk, dv.
template <typename Real>
void attention_backward(std::span<const Real> q, std::span<const Real> k, std::span<const Real> v,
                        std::span<const Real> probs, std::span<const Real> dout, std::span<Real> dq,
                        std::span<Real> dk, std::span<Real> dv, AttentionDims dims);

}  // namespace reference

namespace parallel {

template <typename Real>
void gemm_nn(std::span<const Real> a, std::span<const Real> b, std::span<Real> c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate);
template <typename Real>
void gemm_tn(std::span<const Real> a, std::span<const Real> g, std::span<Real> c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate);
template <typename Real>
void gemm_nt(std::span<const Real> g, std::span<const Real> b, std::span<Real> c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate);

template <typename Real>
void attention_forward(std::span<const Real> q, std::span<const Real> k, std::span<const Real> v,
                       std::span<Real> out, std::span<Real> probs, AttentionDims dims);
template <typename Real>
void attention_backward(std::span<const Real> q, std::span<const Real> k, std::span<const Real> v,
                        std::span<const Real> probs, std::span<const Real> dout, std::span<Real> dq,
                        std::span<Real> dk, std::span<Real> dv, AttentionDims dims);

}  // namespace parallel

/// Number of OpenMP threads the parallel kernels will use (1 without OpenMP).
int max_threads();

}  // namespace noble::kernels
