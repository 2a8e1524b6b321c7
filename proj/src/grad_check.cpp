#include "noble/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace noble {

GradCheckResult grad_check(const std::function<Tensor<double>()>& loss_fn, std::vector<Tensor<double>> params,
                           double eps) {
  if (!(eps > 0.0 && eps <= 1e-3)) throw std::invalid_argument("grad_check: eps must lie in (0, 1e-3]");

  std::vector<std::vector<double>> analytic;
  {
    for (auto& p : params) p.clear_grad();
    Tape<double> tape;
    TapeScope<double> scope(tape);
    auto loss = loss_fn();
    if (!std::isfinite(loss.item())) throw GradCheckError("grad_check: loss is not finite at the base point", 0, 0);
    tape.backward(loss);
    for (auto& p : params) {
      if (p.has_grad()) {
        analytic.emplace_back(p.grad().begin(), p.grad().end());
      } else {
        analytic.emplace_back(p.numel(), 0.0);
      }
    }
  }

  // Forward-only evaluations below: no tape is active.
  auto evaluate = [&](std::size_t pi, std::size_t ei) {
    const double value = loss_fn().item();
    if (!std::isfinite(value)) {
      throw GradCheckError("grad_check: non-finite loss when perturbing parameter " + std::to_string(pi) +
                               " entry " + std::to_string(ei),
                           pi, ei);
    }
    return value;
  };

  GradCheckResult result;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    auto data = params[pi].data();
    for (std::size_t ei = 0; ei < data.size(); ++ei) {
      const double saved = data[ei];
      data[ei] = saved + eps;
      const double plus = evaluate(pi, ei);
      data[ei] = saved - eps;
      const double minus = evaluate(pi, ei);
      data[ei] = saved;
      const double numeric = (plus - minus) / (2.0 * eps);
      const double err = std::abs(analytic[pi][ei] - numeric) / std::max(1.0, std::abs(numeric));
      if (err > result.max_rel_error) {
        result.max_rel_error = err;
        result.worst_param = pi;
        result.worst_entry = ei;
      }
      ++result.entries_checked;
    }
  }
  return result;
}

}  // namespace noble
