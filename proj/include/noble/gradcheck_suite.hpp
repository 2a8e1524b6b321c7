#pragma once

// Fixed set of finite-difference checks run by `noble-lab gradcheck` and the
// acceptance binary.

#include <string>
#include <string_view>
#include <vector>

#include "noble/grad_check.hpp"

namespace noble {

enum class GradCheckModule { all, noble, model };

GradCheckModule parse_gradcheck_module(std::string_view name);

inline constexpr double kLayerGradTolerance = 1e-6;
inline constexpr double kModelGradTolerance = 1e-5;

struct GradCheckCase {
  std::string name;
  GradCheckResult result;
  double tolerance = 0.0;
  std::string worst_param_name;
  bool passed() const { return result.max_rel_error <= tolerance; }
};

/// noble: every activation kind at ranks 2, 4, 8 on an 8 -> 10 layer.
/// model: depth-2, width-16 transformer, with and without branches.
std::vector<GradCheckCase> run_gradcheck_suite(GradCheckModule module);

}  // namespace noble
