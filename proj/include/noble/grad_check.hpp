#pragma once

#include <cstddef>
#include <functional>
#include <stdexcept>
#include <vector>

#include "noble/tensor.hpp"

namespace noble {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t worst_param = 0;  // index into the params list
  std::size_t worst_entry = 0;  // flat index inside that parameter
  std::size_t entries_checked = 0;
};

class GradCheckError : public std::runtime_error {
 public:
  GradCheckError(const std::string& what, std::size_t param, std::size_t entry)
      : std::runtime_error(what), param_index(param), entry_index(entry) {}
  std::size_t param_index;
  std::size_t entry_index;
};

inline constexpr double kDefaultGradCheckEps = 1e-5;

/// Compares tape gradients of `loss_fn` against central differences
/// (f(t + eps) - f(t - eps)) / (2 eps) for every entry of every parameter.
/// Error per entry is |analytic - numeric| / max(1, |numeric|).
///
/// Runs in check precision only. `loss_fn` must rebuild the graph from the
/// current parameter values on every call.
GradCheckResult grad_check(const std::function<Tensor<double>()>& loss_fn, std::vector<Tensor<double>> params,
                           double eps = kDefaultGradCheckEps);

}  // namespace noble
