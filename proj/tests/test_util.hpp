#pragma once

#include <random>
#include <vector>

#include "noble/rng.hpp"
#include "noble/tensor.hpp"

namespace noble::testutil {

template <typename Real = double>
Tensor<Real> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0, bool requires_grad = true) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<Real> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<Real>(dist(rng));
  return Tensor<Real>::from(std::move(shape), std::move(v), requires_grad);
}

template <typename Real>
std::vector<Real> to_vector(const Tensor<Real>& t) {
  return {t.data().begin(), t.data().end()};
}

template <typename Real>
double max_abs_diff(std::span<const Real> a, std::span<const Real> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

// Runs fn under a fresh tape and backpropagates the scalar it returns.
template <typename Real, typename Fn>
Tensor<Real> backprop(Fn fn) {
  Tape<Real> tape;
  TapeScope<Real> scope(tape);
  Tensor<Real> loss = fn();
  tape.backward(loss);
  return loss;
}

}  // namespace noble::testutil
