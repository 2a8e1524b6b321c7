#include "noble/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace noble {

void MetricLog::validate() const {
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto& r = rows[i];
    if (i > 0 && r.step <= rows[i - 1].step) {
      throw std::invalid_argument("MetricLog: step " + std::to_string(r.step) + " does not follow " +
                                  std::to_string(rows[i - 1].step));
    }
    if (!std::isfinite(r.train_loss) || !std::isfinite(r.eval_loss) || !std::isfinite(r.wallclock_s)) {
      throw std::invalid_argument("MetricLog: non-finite value at step " + std::to_string(r.step));
    }
  }
}

double MetricLog::final_eval_loss() const {
  if (rows.empty()) throw std::invalid_argument("MetricLog: empty log has no final loss");
  return rows.back().eval_loss;
}

std::optional<Crossing> crossing(const MetricLog& log, double target) {
  if (log.rows.empty()) throw std::invalid_argument("steps_to_reach: empty log");
  if (std::isnan(target)) throw std::invalid_argument("steps_to_reach: NaN target");
  for (const auto& r : log.rows) {
    if (std::isnan(r.eval_loss)) {
      throw std::invalid_argument("steps_to_reach: NaN eval loss at step " + std::to_string(r.step));
    }
  }
  const auto& first = log.rows.front();
  if (first.eval_loss <= target) return Crossing{static_cast<double>(first.step), first.wallclock_s};
  for (std::size_t i = 1; i < log.rows.size(); ++i) {
    const auto& a = log.rows[i - 1];
    const auto& b = log.rows[i];
    if (b.eval_loss > target) continue;
    // a.eval_loss > target >= b.eval_loss
    const double frac = (a.eval_loss - target) / (a.eval_loss - b.eval_loss);
    const double step = static_cast<double>(a.step) + frac * static_cast<double>(b.step - a.step);
    const double clock = a.wallclock_s + frac * (b.wallclock_s - a.wallclock_s);
    return Crossing{step, clock};
  }
  return std::nullopt;
}

std::optional<double> steps_to_reach(const MetricLog& log, double target) {
  auto c = crossing(log, target);
  if (!c) return std::nullopt;
  return c->step;
}

std::optional<double> step_speedup(const MetricLog& baseline, const MetricLog& variant, double target) {
  const auto b = crossing(baseline, target);
  const auto v = crossing(variant, target);
  if (!b || !v || v->step <= 0.0) return std::nullopt;
  return b->step / v->step;
}

std::optional<double> wallclock_speedup(const MetricLog& baseline, const MetricLog& variant, double target) {
  const auto b = crossing(baseline, target);
  const auto v = crossing(variant, target);
  if (!b || !v || v->wallclock_s <= 0.0) return std::nullopt;
  return b->wallclock_s / v->wallclock_s;
}

MetricLog synthetic_linear_log(std::size_t total_steps, std::size_t eval_every, double step_time_s,
                               double start_loss, double end_loss) {
  if (eval_every == 0 || total_steps < eval_every) {
    throw std::invalid_argument("synthetic_linear_log: need at least one eval point");
  }
  MetricLog log;
  const double first = static_cast<double>(eval_every);
  const double span = static_cast<double>(total_steps) - first;
  for (std::size_t s = eval_every; s <= total_steps; s += eval_every) {
    const double frac = span > 0.0 ? (static_cast<double>(s) - first) / span : 1.0;
    const double loss = start_loss + frac * (end_loss - start_loss);
    log.rows.push_back({s, loss, loss, step_time_s * static_cast<double>(s)});
  }
  if (log.rows.back().step != total_steps) {
    const double t = static_cast<double>(total_steps);
    log.rows.push_back({total_steps, end_loss, end_loss, step_time_s * t});
  }
  return log;
}

double median(std::vector<double> values) {
  if (values.empty()) throw std::invalid_argument("median of no values");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

}  // namespace noble
