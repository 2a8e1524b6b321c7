#include "noble/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace noble::kernels {

namespace {
// Below this many multiply-adds a kernel stays on the calling thread.
constexpr std::size_t kParallelWork = 1u << 15;
}  // namespace

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace reference {

template <typename Real>
void gemm_nn(std::span<const Real> a, std::span<const Real> b, std::span<Real> c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      Real sum = 0;
      for (std::size_t p = 0; p < k; ++p) sum += a[i * k + p] * b[p * n + j];
      c[i * n + j] = accumulate ? c[i * n + j] + sum : sum;
    }
  }
}

template <typename Real>
void gemm_tn(std::span<const Real> a, std::span<const Real> g, std::span<Real> c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate) {
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t j = 0; j < n; ++j) {
      Real sum = 0;
      for (std::size_t i = 0; i < m; ++i) sum += a[i * k + p] * g[i * n + j];
      c[p * n + j] = accumulate ? c[p * n + j] + sum : sum;
    }
  }
}

template <typename Real>
void gemm_nt(std::span<const Real> g, std::span<const Real> b, std::span<Real> c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      Real sum = 0;
      for (std::size_t j = 0; j < n; ++j) sum += g[i * n + j] * b[p * n + j];
      c[i * k + p] = accumulate ? c[i * k + p] + sum : sum;
    }
  }
}

template <typename Real>
void attention_forward(std::span<const Real> q, std::span<const Real> k, std::span<const Real> v,
                       std::span<Real> out, std::span<Real> probs, AttentionDims dims) {
  const auto [groups, seq, hd] = dims;
  const Real scale = Real(1) / std::sqrt(static_cast<Real>(hd));
  for (std::size_t g = 0; g < groups; ++g) {
    const std::size_t base = g * seq * hd;
    for (std::size_t i = 0; i < seq; ++i) {
      Real* p = &probs[(g * seq + i) * seq];
      Real max_score = -std::numeric_limits<Real>::infinity();
      for (std::size_t j = 0; j < seq; ++j) {
        if (j > i) {
          p[j] = 0;
          continue;
        }
        Real s = 0;
        for (std::size_t d = 0; d < hd; ++d) s += q[base + i * hd + d] * k[base + j * hd + d];
        p[j] = s * scale;
        max_score = std::max(max_score, p[j]);
      }
      Real total = 0;
      for (std::size_t j = 0; j <= i; ++j) {
        p[j] = std::exp(p[j] - max_score);
        total += p[j];
      }
      for (std::size_t j = 0; j <= i; ++j) p[j] /= total;
      for (std::size_t d = 0; d < hd; ++d) {
        Real acc = 0;
        for (std::size_t j = 0; j <= i; ++j) acc += p[j] * v[base + j * hd + d];
        out[base + i * hd + d] = acc;
      }
    }
  }
}

template <typename Real>
void attention_backward(std::span<const Real> q, std::span<const Real> k, std::span<const Real> v,
                        std::span<const Real> probs, std::span<const Real> dout, std::span<Real> dq,
                        std::span<Real> dk, std::span<Real> dv, AttentionDims dims) {
  const auto [groups, seq, hd] = dims;
  const Real scale = Real(1) / std::sqrt(static_cast<Real>(hd));
  std::vector<Real> dp(seq);
  for (std::size_t g = 0; g < groups; ++g) {
    const std::size_t base = g * seq * hd;
    for (std::size_t i = 0; i < seq; ++i) {
      const Real* p = &probs[(g * seq + i) * seq];
      Real dot = 0;
      for (std::size_t j = 0; j <= i; ++j) {
        Real s = 0;
        for (std::size_t d = 0; d < hd; ++d) s += dout[base + i * hd + d] * v[base + j * hd + d];
        dp[j] = s;
        dot += s * p[j];
      }
      for (std::size_t j = 0; j <= i; ++j) {
        const Real ds = p[j] * (dp[j] - dot) * scale;
        for (std::size_t d = 0; d < hd; ++d) {
          dq[base + i * hd + d] += ds * k[base + j * hd + d];
          dk[base + j * hd + d] += ds * q[base + i * hd + d];
          dv[base + j * hd + d] += p[j] * dout[base + i * hd + d];
        }
      }
    }
  }
}

}  // namespace reference

namespace parallel {

template <typename Real>
void gemm_nn(std::span<const Real> a, std::span<const Real> b, std::span<Real> c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate) {
  const bool go_parallel = m * n * k > kParallelWork;
#pragma omp parallel if (go_parallel)
  {
    std::vector<Real> row(n);
#pragma omp for schedule(static)
    for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(m); ++ii) {
      const auto i = static_cast<std::size_t>(ii);
      std::fill(row.begin(), row.end(), Real(0));
      for (std::size_t p = 0; p < k; ++p) {
        const Real aip = a[i * k + p];
        const Real* brow = &b[p * n];
        for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
      }
      Real* crow = &c[i * n];
      if (accumulate) {
        for (std::size_t j = 0; j < n; ++j) crow[j] += row[j];
      } else {
        std::copy(row.begin(), row.end(), crow);
      }
    }
  }
}

template <typename Real>
void gemm_tn(std::span<const Real> a, std::span<const Real> g, std::span<Real> c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate) {
  const bool go_parallel = m * n * k > kParallelWork;
#pragma omp parallel if (go_parallel)
  {
    std::vector<Real> row(n);
#pragma omp for schedule(static)
    for (std::ptrdiff_t pp = 0; pp < static_cast<std::ptrdiff_t>(k); ++pp) {
      const auto p = static_cast<std::size_t>(pp);
      std::fill(row.begin(), row.end(), Real(0));
      for (std::size_t i = 0; i < m; ++i) {
        const Real aip = a[i * k + p];
        const Real* grow = &g[i * n];
        for (std::size_t j = 0; j < n; ++j) row[j] += aip * grow[j];
      }
      Real* crow = &c[p * n];
      if (accumulate) {
        for (std::size_t j = 0; j < n; ++j) crow[j] += row[j];
      } else {
        std::copy(row.begin(), row.end(), crow);
      }
    }
  }
}

template <typename Real>
void gemm_nt(std::span<const Real> g, std::span<const Real> b, std::span<Real> c, std::size_t m, std::size_t k,
             std::size_t n, bool accumulate) {
  const bool go_parallel = m * n * k > kParallelWork;
#pragma omp parallel for schedule(static) if (go_parallel)
  for (std::ptrdiff_t ii = 0; ii < static_cast<std::ptrdiff_t>(m); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const Real* grow = &g[i * n];
    for (std::size_t p = 0; p < k; ++p) {
      const Real* brow = &b[p * n];
      Real sum = 0;
      for (std::size_t j = 0; j < n; ++j) sum += grow[j] * brow[j];
      c[i * k + p] = accumulate ? c[i * k + p] + sum : sum;
    }
  }
}

template <typename Real>
void attention_forward(std::span<const Real> q, std::span<const Real> k, std::span<const Real> v,
                       std::span<Real> out, std::span<Real> probs, AttentionDims dims) {
  const auto [groups, seq, hd] = dims;
  const Real scale = Real(1) / std::sqrt(static_cast<Real>(hd));
  const bool go_parallel = groups * seq * seq * hd > kParallelWork;
#pragma omp parallel for schedule(static) if (go_parallel)
  for (std::ptrdiff_t gg = 0; gg < static_cast<std::ptrdiff_t>(groups); ++gg) {
    const auto g = static_cast<std::size_t>(gg);
    const Real* qg = &q[g * seq * hd];
    const Real* kg = &k[g * seq * hd];
    const Real* vg = &v[g * seq * hd];
    Real* og = &out[g * seq * hd];
    for (std::size_t i = 0; i < seq; ++i) {
      Real* p = &probs[(g * seq + i) * seq];
      Real max_score = -std::numeric_limits<Real>::infinity();
      for (std::size_t j = 0; j <= i; ++j) {
        Real s = 0;
        for (std::size_t d = 0; d < hd; ++d) s += qg[i * hd + d] * kg[j * hd + d];
        p[j] = s * scale;
        max_score = std::max(max_score, p[j]);
      }
      std::fill(p + i + 1, p + seq, Real(0));
      Real total = 0;
      for (std::size_t j = 0; j <= i; ++j) {
        p[j] = std::exp(p[j] - max_score);
        total += p[j];
      }
      for (std::size_t j = 0; j <= i; ++j) p[j] /= total;
      Real* orow = &og[i * hd];
      std::fill(orow, orow + hd, Real(0));
      for (std::size_t j = 0; j <= i; ++j) {
        const Real pj = p[j];
        for (std::size_t d = 0; d < hd; ++d) orow[d] += pj * vg[j * hd + d];
      }
    }
  }
}

template <typename Real>
void attention_backward(std::span<const Real> q, std::span<const Real> k, std::span<const Real> v,
                        std::span<const Real> probs, std::span<const Real> dout, std::span<Real> dq,
                        std::span<Real> dk, std::span<Real> dv, AttentionDims dims) {
  const auto [groups, seq, hd] = dims;
  const Real scale = Real(1) / std::sqrt(static_cast<Real>(hd));
  const bool go_parallel = groups * seq * seq * hd > kParallelWork;
#pragma omp parallel if (go_parallel)
  {
    std::vector<Real> dscore(seq);
#pragma omp for schedule(static)
    for (std::ptrdiff_t gg = 0; gg < static_cast<std::ptrdiff_t>(groups); ++gg) {
      const auto g = static_cast<std::size_t>(gg);
      const std::size_t base = g * seq * hd;
      for (std::size_t i = 0; i < seq; ++i) {
        const Real* p = &probs[(g * seq + i) * seq];
        const Real* go = &dout[base + i * hd];
        Real dot = 0;
        for (std::size_t j = 0; j <= i; ++j) {
          Real s = 0;
          for (std::size_t d = 0; d < hd; ++d) s += go[d] * v[base + j * hd + d];
          dscore[j] = s;
          dot += s * p[j];
        }
        Real* dqi = &dq[base + i * hd];
        const Real* qi = &q[base + i * hd];
        for (std::size_t j = 0; j <= i; ++j) {
          const Real ds = p[j] * (dscore[j] - dot) * scale;
          const Real* kj = &k[base + j * hd];
          Real* dkj = &dk[base + j * hd];
          Real* dvj = &dv[base + j * hd];
          for (std::size_t d = 0; d < hd; ++d) {
            dqi[d] += ds * kj[d];
            dkj[d] += ds * qi[d];
            dvj[d] += p[j] * go[d];
          }
        }
      }
    }
  }
}

}  // namespace parallel

#define NOBLE_INSTANTIATE_KERNELS(NS, Real)                                                                    \
  template void NS::gemm_nn<Real>(std::span<const Real>, std::span<const Real>, std::span<Real>, std::size_t, \
                                  std::size_t, std::size_t, bool);                                            \
  template void NS::gemm_tn<Real>(std::span<const Real>, std::span<const Real>, std::span<Real>, std::size_t, \
                                  std::size_t, std::size_t, bool);                                            \
  template void NS::gemm_nt<Real>(std::span<const Real>, std::span<const Real>, std::span<Real>, std::size_t, \
                                  std::size_t, std::size_t, bool);                                            \
  template void NS::attention_forward<Real>(std::span<const Real>, std::span<const Real>,                     \
                                            std::span<const Real>, std::span<Real>, std::span<Real>,          \
                                            AttentionDims);                                                   \
  template void NS::attention_backward<Real>(std::span<const Real>, std::span<const Real>,                    \
                                             std::span<const Real>, std::span<const Real>,                    \
                                             std::span<const Real>, std::span<Real>, std::span<Real>,         \
                                             std::span<Real>, AttentionDims);

NOBLE_INSTANTIATE_KERNELS(reference, float)
NOBLE_INSTANTIATE_KERNELS(reference, double)
NOBLE_INSTANTIATE_KERNELS(parallel, float)
NOBLE_INSTANTIATE_KERNELS(parallel, double)

#undef NOBLE_INSTANTIATE_KERNELS

}  // namespace noble::kernels
