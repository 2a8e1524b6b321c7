#pragma once

// Eval-curve bookkeeping and the efficiency ratios derived from it.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace noble {

struct MetricRow {
  std::size_t step = 0;
  double train_loss = 0.0;   // mean over the steps since the previous row
  double eval_loss = 0.0;
  double wallclock_s = 0.0;  // cumulative
};

struct MetricLog {
  std::vector<MetricRow> rows;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::string version;

  /// Steps strictly increasing, losses and clock finite.
  void validate() const;
  bool empty() const { return rows.empty(); }
  std::size_t total_steps() const { return rows.empty() ? 0 : rows.back().step; }
  double final_eval_loss() const;
};

/// Where an eval curve first drops to a target, interpolated linearly
/// between adjacent eval points.
struct Crossing {
  double step = 0.0;
  double wallclock_s = 0.0;
};

/// Throws std::invalid_argument on an empty log or a NaN loss / target.
std::optional<Crossing> crossing(const MetricLog& log, double target);
std::optional<double> steps_to_reach(const MetricLog& log, double target);

/// Baseline steps to the target over the variant's steps to the target.
/// The baseline's own crossing is used as numerator, so a log compared with
/// itself gives exactly 1.
std::optional<double> step_speedup(const MetricLog& baseline, const MetricLog& variant, double target);

/// Same ratio in cumulative wallclock.
std::optional<double> wallclock_speedup(const MetricLog& baseline, const MetricLog& variant, double target);

/// Constant-step-time eval curve whose loss falls linearly from `start_loss`
/// at the first eval to `end_loss` at `total_steps`. Used to replay published
/// step speedups / step-time overheads through wallclock_speedup.
MetricLog synthetic_linear_log(std::size_t total_steps, std::size_t eval_every, double step_time_s,
                               double start_loss, double end_loss);

double median(std::vector<double> values);

}  // namespace noble
