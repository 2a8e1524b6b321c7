#include "noble/ops.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <numbers>
#include <string>
#include <vector>

#include "noble/kernels.hpp"

namespace noble::ops {

namespace {

template <typename Real>
bool tracking(std::initializer_list<const Tensor<Real>*> inputs) {
  if (Tape<Real>::current() == nullptr) return false;
  return std::any_of(inputs.begin(), inputs.end(), [](const Tensor<Real>* t) { return t->requires_grad(); });
}

template <typename Real>
void record(std::string_view name, Tensor<Real>& out, bool track, std::function<void()> backward) {
  if (!track) return;
  out.set_requires_grad(true);
  Tape<Real>::current()->record(name, std::move(backward));
}

void require_defined(bool defined, std::string_view op) {
  if (!defined) throw ShapeError(std::string(op) + ": undefined tensor");
}

// Second operand must match the first's shape or be a suffix of it.
void check_broadcast(const Shape& a, const Shape& b, std::string_view op) {
  bool ok = b.size() <= a.size();
  for (std::size_t i = 0; ok && i < b.size(); ++i) ok = a[a.size() - b.size() + i] == b[i];
  if (!ok) {
    throw ShapeError(std::string(op) + ": cannot broadcast " + shape_to_string(b) + " onto " + shape_to_string(a));
  }
}

enum class Binary { add, sub, mul };

template <typename Real>
Tensor<Real> binary(const Tensor<Real>& a, const Tensor<Real>& b, Binary kind, std::string_view name) {
  require_defined(a.defined() && b.defined(), name);
  check_broadcast(a.shape(), b.shape(), name);
  auto out = Tensor<Real>::zeros(a.shape());
  const std::size_t n = a.numel();
  const std::size_t period = b.numel();
  auto ad = a.data();
  auto bd = b.data();
  auto od = out.data();
  for (std::size_t i = 0; i < n; ++i) {
    const Real bv = bd[i % period];
    switch (kind) {
      case Binary::add: od[i] = ad[i] + bv; break;
      case Binary::sub: od[i] = ad[i] - bv; break;
      case Binary::mul: od[i] = ad[i] * bv; break;
    }
  }
  FlopCounter::add(n);
  record(name, out, tracking({&a, &b}), [a = a, b = b, out, kind, n, period]() mutable {
    if (!out.has_grad()) return;
    auto g = out.grad();
    if (a.requires_grad()) {
      auto ga = a.ensure_grad();
      if (kind == Binary::mul) {
        auto bd = b.data();
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * bd[i % period];
      } else {
        for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
      }
    }
    if (b.requires_grad()) {
      auto gb = b.ensure_grad();
      if (kind == Binary::mul) {
        auto ad = a.data();
        for (std::size_t i = 0; i < n; ++i) gb[i % period] += g[i] * ad[i];
      } else {
        const Real sign = kind == Binary::sub ? Real(-1) : Real(1);
        for (std::size_t i = 0; i < n; ++i) gb[i % period] += sign * g[i];
      }
    }
    FlopCounter::add(2 * n);
  });
  return out;
}

// Elementwise map with derivative computed from the input value.
template <typename Real, typename Fwd, typename Deriv>
Tensor<Real> unary(const Tensor<Real>& x, std::string_view name, Fwd fwd, Deriv deriv, std::uint64_t cost) {
  require_defined(x.defined(), name);
  auto out = Tensor<Real>::zeros(x.shape());
  auto xd = x.data();
  auto od = out.data();
  for (std::size_t i = 0; i < xd.size(); ++i) od[i] = fwd(xd[i]);
  FlopCounter::add(cost * xd.size());
  record(name, out, tracking({&x}), [x = x, out, deriv, cost]() mutable {
    if (!out.has_grad()) return;
    auto g = out.grad();
    auto gx = x.ensure_grad();
    auto xd = x.data();
    for (std::size_t i = 0; i < xd.size(); ++i) gx[i] += g[i] * deriv(xd[i]);
    FlopCounter::add(cost * xd.size());
  });
  return out;
}

}  // namespace

template <typename Real>
Tensor<Real> matmul(const Tensor<Real>& a, const Tensor<Real>& b) {
  require_defined(a.defined() && b.defined(), "matmul");
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw ShapeError("matmul: incompatible shapes " + shape_to_string(a.shape()) + " and " +
                     shape_to_string(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  auto out = Tensor<Real>::zeros({m, n});
  kernels::parallel::gemm_nn<Real>(a.data(), b.data(), out.data(), m, k, n, false);
  FlopCounter::add(2 * m * k * n);
  record("matmul", out, tracking({&a, &b}), [a = a, b = b, out, m, k = k, n]() mutable {
    if (!out.has_grad()) return;
    auto g = out.grad();
    // a.grad += g b^T ; b.grad += a^T g
    if (a.requires_grad()) kernels::parallel::gemm_nt<Real>(g, b.data(), a.ensure_grad(), m, k, n, true);
    if (b.requires_grad()) kernels::parallel::gemm_tn<Real>(a.data(), g, b.ensure_grad(), m, k, n, true);
    FlopCounter::add(4 * m * k * n);
  });
  return out;
}

template <typename Real>
Tensor<Real> transpose(const Tensor<Real>& a) {
  require_defined(a.defined(), "transpose");
  if (a.rank() != 2) throw ShapeError("transpose: expected rank 2, got " + shape_to_string(a.shape()));
  const std::size_t rows = a.dim(0), cols = a.dim(1);
  auto out = Tensor<Real>::zeros({cols, rows});
  auto ad = a.data();
  auto od = out.data();
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) od[j * rows + i] = ad[i * cols + j];
  record("transpose", out, tracking({&a}), [a = a, out, rows, cols]() mutable {
    if (!out.has_grad()) return;
    auto g = out.grad();
    auto ga = a.ensure_grad();
    for (std::size_t i = 0; i < rows; ++i)
      for (std::size_t j = 0; j < cols; ++j) ga[i * cols + j] += g[j * rows + i];
  });
  return out;
}

template <typename Real>
Tensor<Real> add(const Tensor<Real>& a, const Tensor<Real>& b) {
  return binary(a, b, Binary::add, "add");
}

template <typename Real>
Tensor<Real> sub(const Tensor<Real>& a, const Tensor<Real>& b) {
  return binary(a, b, Binary::sub, "sub");
}

template <typename Real>
Tensor<Real> mul(const Tensor<Real>& a, const Tensor<Real>& b) {
  return binary(a, b, Binary::mul, "mul");
}

template <typename Real>
Tensor<Real> scale(const Tensor<Real>& a, Real factor) {
  return unary(
      a, "scale", [factor](Real x) { return factor * x; }, [factor](Real) { return factor; }, 1);
}

template <typename Real>
Tensor<Real> tanh(const Tensor<Real>& x) {
  return unary(
      x, "tanh", [](Real v) { return std::tanh(v); },
      [](Real v) {
        const Real t = std::tanh(v);
        return Real(1) - t * t;
      },
      8);
}

template <typename Real>
Tensor<Real> leaky_relu(const Tensor<Real>& x, Real slope) {
  return unary(
      x, "leaky_relu", [slope](Real v) { return v > 0 ? v : slope * v; },
      [slope](Real v) { return v > 0 ? Real(1) : slope; }, 1);
}

template <typename Real>
Tensor<Real> gelu(const Tensor<Real>& x) {
  constexpr Real c = static_cast<Real>(0.7978845608028654);  // sqrt(2/pi)
  constexpr Real k = static_cast<Real>(0.044715);
  return unary(
      x, "gelu",
      [](Real v) { return Real(0.5) * v * (Real(1) + std::tanh(c * (v + k * v * v * v))); },
      [](Real v) {
        const Real u = c * (v + k * v * v * v);
        const Real t = std::tanh(u);
        const Real du = c * (Real(1) + Real(3) * k * v * v);
        return Real(0.5) * (Real(1) + t) + Real(0.5) * v * (Real(1) - t * t) * du;
      },
      10);
}

template <typename Real>
Tensor<Real> cosine_map(const Tensor<Real>& x, const Tensor<Real>& freq, const Tensor<Real>& phase) {
  require_defined(x.defined() && freq.defined() && phase.defined(), "cosine_map");
  const std::size_t width = x.shape().back();
  if (freq.numel() != width || phase.numel() != width) {
    throw ShapeError("cosine_map: frequency/phase length " + std::to_string(freq.numel()) + "/" +
                     std::to_string(phase.numel()) + " does not match last extent " + std::to_string(width) +
                     " of " + shape_to_string(x.shape()));
  }
  auto out = Tensor<Real>::zeros(x.shape());
  auto xd = x.data();
  auto fd = freq.data();
  auto pd = phase.data();
  auto od = out.data();
  const std::size_t n = xd.size();
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % width;
    od[i] = std::cos(fd[c] * xd[i] + pd[c]);
  }
  FlopCounter::add(10 * n);
  record("cosine_map", out, tracking({&x, &freq, &phase}), [x = x, freq = freq, phase = phase, out, n, width]() mutable {
    if (!out.has_grad()) return;
    auto g = out.grad();
    auto xd = x.data();
    auto fd = freq.data();
    auto pd = phase.data();
    std::span<Real> gx, gf, gp;
    if (x.requires_grad()) gx = x.ensure_grad();
    if (freq.requires_grad()) gf = freq.ensure_grad();
    if (phase.requires_grad()) gp = phase.ensure_grad();
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t c = i % width;
      const Real ds = -std::sin(fd[c] * xd[i] + pd[c]) * g[i];
      if (!gx.empty()) gx[i] += ds * fd[c];
      if (!gf.empty()) gf[c] += ds * xd[i];
      if (!gp.empty()) gp[c] += ds;
    }
    FlopCounter::add(14 * n);
  });
  return out;
}

template <typename Real>
Tensor<Real> sum(const Tensor<Real>& x) {
  require_defined(x.defined(), "sum");
  Real total = 0;
  for (Real v : x.data()) total += v;
  auto out = Tensor<Real>::scalar(total);
  record("sum", out, tracking({&x}), [x = x, out]() mutable {
    if (!out.has_grad()) return;
    const Real g = out.grad()[0];
    for (auto& gx : x.ensure_grad()) gx += g;
  });
  return out;
}

template <typename Real>
Tensor<Real> mean(const Tensor<Real>& x) {
  require_defined(x.defined(), "mean");
  return scale(sum(x), Real(1) / static_cast<Real>(x.numel()));
}

template <typename Real>
Tensor<Real> softmax_cross_entropy(const Tensor<Real>& logits, std::span<const int> targets) {
  require_defined(logits.defined(), "softmax_cross_entropy");
  const std::size_t vocab = logits.shape().back();
  const std::size_t rows = logits.numel() / vocab;
  if (targets.size() != rows) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(targets.size()) + " targets for " +
                     std::to_string(rows) + " rows of " + shape_to_string(logits.shape()));
  }
  for (std::size_t r = 0; r < rows; ++r) {
    if (targets[r] < 0 || static_cast<std::size_t>(targets[r]) >= vocab) {
      throw std::out_of_range("softmax_cross_entropy: target " + std::to_string(targets[r]) + " at index " +
                              std::to_string(r) + " outside [0, " + std::to_string(vocab) + ")");
    }
  }
  auto ld = logits.data();
  auto probs = std::make_shared<std::vector<Real>>(logits.numel());
  double total = 0;
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* row = &ld[r * vocab];
    Real* p = &(*probs)[r * vocab];
    const Real mx = *std::max_element(row, row + vocab);
    double z = 0;
    for (std::size_t j = 0; j < vocab; ++j) {
      p[j] = std::exp(row[j] - mx);
      z += p[j];
    }
    for (std::size_t j = 0; j < vocab; ++j) p[j] = static_cast<Real>(p[j] / z);
    // log-sum-exp form keeps the loss finite when the target prob underflows
    total += std::log(z) - static_cast<double>(row[targets[r]] - mx);
  }
  FlopCounter::add(12 * logits.numel());
  auto out = Tensor<Real>::scalar(static_cast<Real>(total / static_cast<double>(rows)));
  std::vector<int> target_copy(targets.begin(), targets.end());
  record("softmax_cross_entropy", out, tracking({&logits}),
         [logits = logits, out, probs, target_copy = std::move(target_copy), rows, vocab]() mutable {
           if (!out.has_grad()) return;
           const Real g = out.grad()[0] / static_cast<Real>(rows);
           auto gl = logits.ensure_grad();
           for (std::size_t r = 0; r < rows; ++r) {
             for (std::size_t j = 0; j < vocab; ++j) {
               const Real onehot = static_cast<std::size_t>(target_copy[r]) == j ? Real(1) : Real(0);
               gl[r * vocab + j] += g * ((*probs)[r * vocab + j] - onehot);
             }
           }
           FlopCounter::add(3 * rows * vocab);
         });
  return out;
}

template <typename Real>
Tensor<Real> mse_loss(const Tensor<Real>& pred, const Tensor<Real>& target) {
  require_defined(pred.defined() && target.defined(), "mse_loss");
  if (pred.numel() != target.numel()) {
    throw ShapeError("mse_loss: " + shape_to_string(pred.shape()) + " vs " + shape_to_string(target.shape()));
  }
  auto pd = pred.data();
  auto td = target.data();
  const std::size_t n = pd.size();
  double total = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(pd[i]) - static_cast<double>(td[i]);
    total += d * d;
  }
  FlopCounter::add(3 * n);
  auto out = Tensor<Real>::scalar(static_cast<Real>(total / static_cast<double>(n)));
  record("mse_loss", out, tracking({&pred}), [pred = pred, target = target, out, n]() mutable {
    if (!out.has_grad()) return;
    const Real g = out.grad()[0] * Real(2) / static_cast<Real>(n);
    auto gp = pred.ensure_grad();
    auto pd = pred.data();
    auto td = target.data();
    for (std::size_t i = 0; i < n; ++i) gp[i] += g * (pd[i] - td[i]);
  });
  return out;
}

template <typename Real>
Tensor<Real> rmsnorm(const Tensor<Real>& x, const Tensor<Real>& gain, Real eps) {
  require_defined(x.defined() && gain.defined(), "rmsnorm");
  const std::size_t d = x.shape().back();
  if (gain.numel() != d) {
    throw ShapeError("rmsnorm: gain length " + std::to_string(gain.numel()) + " vs feature extent " +
                     std::to_string(d));
  }
  const std::size_t rows = x.numel() / d;
  auto out = Tensor<Real>::zeros(x.shape());
  auto inv = std::make_shared<std::vector<Real>>(rows);
  auto xd = x.data();
  auto gd = gain.data();
  auto od = out.data();
  for (std::size_t r = 0; r < rows; ++r) {
    Real ss = 0;
    for (std::size_t j = 0; j < d; ++j) ss += xd[r * d + j] * xd[r * d + j];
    const Real s = Real(1) / std::sqrt(ss / static_cast<Real>(d) + eps);
    (*inv)[r] = s;
    for (std::size_t j = 0; j < d; ++j) od[r * d + j] = xd[r * d + j] * s * gd[j];
  }
  FlopCounter::add(4 * x.numel());
  record("rmsnorm", out, tracking({&x, &gain}), [x = x, gain = gain, out, inv, rows, d]() mutable {
    if (!out.has_grad()) return;
    auto g = out.grad();
    auto xd = x.data();
    auto gd = gain.data();
    std::span<Real> gx, gg;
    if (x.requires_grad()) gx = x.ensure_grad();
    if (gain.requires_grad()) gg = gain.ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const Real s = (*inv)[r];
      Real dot = 0;  // sum_j gain_j * g_j * x_j
      for (std::size_t j = 0; j < d; ++j) {
        const std::size_t idx = r * d + j;
        dot += gd[j] * g[idx] * xd[idx];
        if (!gg.empty()) gg[j] += g[idx] * xd[idx] * s;
      }
      if (!gx.empty()) {
        const Real coef = s * s * s * dot / static_cast<Real>(d);
        for (std::size_t j = 0; j < d; ++j) {
          const std::size_t idx = r * d + j;
          gx[idx] += s * gd[j] * g[idx] - xd[idx] * coef;
        }
      }
    }
    FlopCounter::add(8 * rows * d);
  });
  return out;
}

template <typename Real>
Tensor<Real> embedding(const Tensor<Real>& table, std::span<const int> ids) {
  require_defined(table.defined(), "embedding");
  if (table.rank() != 2) throw ShapeError("embedding: table must be rank 2, got " + shape_to_string(table.shape()));
  const std::size_t vocab = table.dim(0), d = table.dim(1);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw std::out_of_range("embedding: token id " + std::to_string(ids[i]) + " at index " + std::to_string(i) +
                              " outside [0, " + std::to_string(vocab) + ")");
    }
  }
  auto out = Tensor<Real>::zeros({ids.size(), d});
  auto td = table.data();
  auto od = out.data();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::copy_n(&td[static_cast<std::size_t>(ids[i]) * d], d, &od[i * d]);
  }
  std::vector<int> id_copy(ids.begin(), ids.end());
  record("embedding", out, tracking({&table}), [table = table, out, id_copy = std::move(id_copy), d]() mutable {
    if (!out.has_grad()) return;
    auto g = out.grad();
    auto gt = table.ensure_grad();
    for (std::size_t i = 0; i < id_copy.size(); ++i) {
      const std::size_t row = static_cast<std::size_t>(id_copy[i]) * d;
      for (std::size_t j = 0; j < d; ++j) gt[row + j] += g[i * d + j];
    }
  });
  return out;
}

template <typename Real>
Tensor<Real> reshape(const Tensor<Real>& x, Shape shape) {
  require_defined(x.defined(), "reshape");
  if (shape_numel(shape) != x.numel()) {
    throw ShapeError("reshape: " + shape_to_string(x.shape()) + " -> " + shape_to_string(shape));
  }
  auto out = Tensor<Real>::from(std::move(shape), std::vector<Real>(x.data().begin(), x.data().end()));
  record("reshape", out, tracking({&x}), [x = x, out]() mutable {
    if (!out.has_grad()) return;
    auto g = out.grad();
    auto gx = x.ensure_grad();
    for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
  });
  return out;
}

template <typename Real>
Tensor<Real> swap_axes_12(const Tensor<Real>& x) {
  require_defined(x.defined(), "swap_axes_12");
  if (x.rank() != 4) throw ShapeError("swap_axes_12: expected rank 4, got " + shape_to_string(x.shape()));
  const std::size_t a = x.dim(0), b = x.dim(1), c = x.dim(2), d = x.dim(3);
  auto out = Tensor<Real>::zeros({a, c, b, d});
  auto xd = x.data();
  auto od = out.data();
  auto src = [=](std::size_t i, std::size_t j, std::size_t k) { return ((i * b + j) * c + k) * d; };
  auto dst = [=](std::size_t i, std::size_t j, std::size_t k) { return ((i * c + k) * b + j) * d; };
  for (std::size_t i = 0; i < a; ++i)
    for (std::size_t j = 0; j < b; ++j)
      for (std::size_t k = 0; k < c; ++k) std::copy_n(&xd[src(i, j, k)], d, &od[dst(i, j, k)]);
  record("swap_axes_12", out, tracking({&x}), [x = x, out, a = a, b = b, c, d, src, dst]() mutable {
    if (!out.has_grad()) return;
    auto g = out.grad();
    auto gx = x.ensure_grad();
    for (std::size_t i = 0; i < a; ++i)
      for (std::size_t j = 0; j < b; ++j)
        for (std::size_t k = 0; k < c; ++k)
          for (std::size_t e = 0; e < d; ++e) gx[src(i, j, k) + e] += g[dst(i, j, k) + e];
  });
  return out;
}

template <typename Real>
Tensor<Real> rope_apply(const Tensor<Real>& x, std::size_t position_offset, double base) {
  require_defined(x.defined(), "rope_apply");
  if (x.rank() != 4) throw ShapeError("rope_apply: expected [batch, heads, seq, head_dim], got " +
                                      shape_to_string(x.shape()));
  const std::size_t seq = x.dim(2), hd = x.dim(3);
  if (hd % 2 != 0) throw ShapeError("rope_apply: head_dim must be even, got " + std::to_string(hd));
  const std::size_t half = hd / 2;
  // cos/sin table per (position, pair)
  auto table = std::make_shared<std::vector<Real>>(seq * hd);
  for (std::size_t t = 0; t < seq; ++t) {
    for (std::size_t i = 0; i < half; ++i) {
      const double theta = std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(hd));
      const double angle = static_cast<double>(position_offset + t) * theta;
      (*table)[t * hd + 2 * i] = static_cast<Real>(std::cos(angle));
      (*table)[t * hd + 2 * i + 1] = static_cast<Real>(std::sin(angle));
    }
  }
  auto out = Tensor<Real>::zeros(x.shape());
  auto xd = x.data();
  auto od = out.data();
  const std::size_t rows = x.numel() / hd;
  for (std::size_t r = 0; r < rows; ++r) {
    const Real* cs = &(*table)[(r % seq) * hd];
    for (std::size_t i = 0; i < half; ++i) {
      const std::size_t idx = r * hd + 2 * i;
      const Real c = cs[2 * i], s = cs[2 * i + 1];
      od[idx] = xd[idx] * c - xd[idx + 1] * s;
      od[idx + 1] = xd[idx] * s + xd[idx + 1] * c;
    }
  }
  FlopCounter::add(3 * x.numel());
  record("rope_apply", out, tracking({&x}), [x = x, out, table = table, rows, seq, hd, half]() mutable {
    if (!out.has_grad()) return;
    auto g = out.grad();
    auto gx = x.ensure_grad();
    for (std::size_t r = 0; r < rows; ++r) {
      const Real* cs = &(*table)[(r % seq) * hd];
      for (std::size_t i = 0; i < half; ++i) {
        const std::size_t idx = r * hd + 2 * i;
        const Real c = cs[2 * i], s = cs[2 * i + 1];
        gx[idx] += g[idx] * c + g[idx + 1] * s;
        gx[idx + 1] += -g[idx] * s + g[idx + 1] * c;
      }
    }
  });
  return out;
}

template <typename Real>
Tensor<Real> causal_attention(const Tensor<Real>& q, const Tensor<Real>& k, const Tensor<Real>& v) {
  require_defined(q.defined() && k.defined() && v.defined(), "causal_attention");
  if (q.rank() != 4 || q.shape() != k.shape() || q.shape() != v.shape()) {
    throw ShapeError("causal_attention: q/k/v must share a [batch, heads, seq, head_dim] shape, got " +
                     shape_to_string(q.shape()) + ", " + shape_to_string(k.shape()) + ", " +
                     shape_to_string(v.shape()));
  }
  const kernels::AttentionDims dims{q.dim(0) * q.dim(1), q.dim(2), q.dim(3)};
  auto out = Tensor<Real>::zeros(q.shape());
  auto probs = std::make_shared<std::vector<Real>>(dims.groups * dims.seq * dims.seq);
  kernels::parallel::attention_forward<Real>(q.data(), k.data(), v.data(), out.data(), *probs, dims);
  const std::uint64_t work = dims.groups * dims.seq * dims.seq * dims.head_dim;
  FlopCounter::add(2 * work);
  record("causal_attention", out, tracking({&q, &k, &v}), [q = q, k = k, v = v, out, probs, dims, work]() mutable {
    if (!out.has_grad()) return;
    // The kernel writes all three gradients; unused ones land in scratch.
    std::vector<Real> scratch_q, scratch_k, scratch_v;
    auto target = [](Tensor<Real>& t, std::vector<Real>& scratch) -> std::span<Real> {
      if (t.requires_grad()) return t.ensure_grad();
      scratch.assign(t.numel(), Real(0));
      return scratch;
    };
    auto gq = target(q, scratch_q);
    auto gk = target(k, scratch_k);
    auto gv = target(v, scratch_v);
    kernels::parallel::attention_backward<Real>(q.data(), k.data(), v.data(), *probs, out.grad(), gq, gk, gv, dims);
    FlopCounter::add(4 * work);
  });
  return out;
}

template <typename Real>
void record_custom(std::string_view name, Tensor<Real>& out, std::initializer_list<Tensor<Real>> inputs,
                   std::function<void()> backward) {
  if (Tape<Real>::current() == nullptr) return;
  const bool any = std::any_of(inputs.begin(), inputs.end(), [](const Tensor<Real>& t) { return t.requires_grad(); });
  record(name, out, any, std::move(backward));
}

#define NOBLE_INSTANTIATE_OPS(Real)                                                                           \
  template Tensor<Real> matmul(const Tensor<Real>&, const Tensor<Real>&);                                     \
  template Tensor<Real> transpose(const Tensor<Real>&);                                                       \
  template Tensor<Real> add(const Tensor<Real>&, const Tensor<Real>&);                                        \
  template Tensor<Real> sub(const Tensor<Real>&, const Tensor<Real>&);                                        \
  template Tensor<Real> mul(const Tensor<Real>&, const Tensor<Real>&);                                        \
  template Tensor<Real> scale(const Tensor<Real>&, Real);                                                     \
  template Tensor<Real> tanh(const Tensor<Real>&);                                                            \
  template Tensor<Real> leaky_relu(const Tensor<Real>&, Real);                                                \
  template Tensor<Real> gelu(const Tensor<Real>&);                                                            \
  template Tensor<Real> cosine_map(const Tensor<Real>&, const Tensor<Real>&, const Tensor<Real>&);            \
  template Tensor<Real> sum(const Tensor<Real>&);                                                             \
  template Tensor<Real> mean(const Tensor<Real>&);                                                            \
  template Tensor<Real> softmax_cross_entropy(const Tensor<Real>&, std::span<const int>);                     \
  template Tensor<Real> mse_loss(const Tensor<Real>&, const Tensor<Real>&);                                   \
  template Tensor<Real> rmsnorm(const Tensor<Real>&, const Tensor<Real>&, Real);                              \
  template Tensor<Real> embedding(const Tensor<Real>&, std::span<const int>);                                 \
  template Tensor<Real> reshape(const Tensor<Real>&, Shape);                                                  \
  template Tensor<Real> swap_axes_12(const Tensor<Real>&);                                                    \
  template Tensor<Real> rope_apply(const Tensor<Real>&, std::size_t, double);                                 \
  template Tensor<Real> causal_attention(const Tensor<Real>&, const Tensor<Real>&, const Tensor<Real>&);      \
  template void record_custom(std::string_view, Tensor<Real>&, std::initializer_list<Tensor<Real>>,           \
                              std::function<void()>);

NOBLE_INSTANTIATE_OPS(float)
NOBLE_INSTANTIATE_OPS(double)

#undef NOBLE_INSTANTIATE_OPS

}  // namespace noble::ops
