#pragma once

// Training runs, the activation / rank grid and report files.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "noble/config.hpp"
#include "noble/metrics.hpp"
#include "noble/model.hpp"

namespace noble {

inline constexpr const char* kVersion = "noble-lab 0.1.0";

/// What differs between runs of one experiment: the branch (none for the
/// baseline) and whether mixup is on.
struct Variant {
  std::optional<NobleConfig> noble;
  bool mixup = false;

  std::string activation_name() const;  // "baseline" without a branch
  std::size_t rank() const { return noble ? noble->rank : 0; }
  /// e.g. baseline-s1, cosnet_2layer-r16-s3, mixup-gelu-r8-s2
  std::string run_id(std::uint64_t seed) const;
  bool is_baseline() const { return !noble.has_value(); }
};

Variant baseline_variant(const RunConfig& cfg);
Variant noble_variant(const RunConfig& cfg, ActivationKind kind, std::size_t rank);

struct RunResult {
  std::string run_id;
  Variant variant;
  std::uint64_t seed = 0;
  MetricLog log;
  ParamCounts counts;
  double modeled_step_s = 0.0;   // mean over all steps
  double measured_step_s = 0.0;  // trimmed mean, first steps excluded
  bool failed = false;
  std::string error;
};

/// Steps excluded from the measured step-time mean, and the fraction
/// trimmed from each tail of the rest.
inline constexpr std::size_t kTimingSkipSteps = 50;
inline constexpr double kTimingTrim = 0.1;

double trimmed_mean_step_time(const std::vector<double>& step_seconds);

/// Parameter counts of the model a variant would build, from closed forms.
ParamCounts variant_param_counts(const RunConfig& cfg, const Variant& variant);

/// One training run. Divergence (non-finite loss or gradient) is reported in
/// the result, not thrown. Checkpoints go under checkpoint_dir when set.
RunResult train_run(const RunConfig& cfg, const Variant& variant, std::uint64_t seed,
                    const std::optional<std::filesystem::path>& checkpoint_dir = std::nullopt);

struct SpeedupRow {
  std::string run_id;
  std::string activation;
  std::size_t rank = 0;
  std::uint64_t seed = 0;
  bool mixup = false;
  std::optional<double> final_eval_loss;
  std::optional<double> steps_to_reach;
  std::optional<double> step_speedup;
  std::optional<double> wallclock_speedup;
  double param_overhead_pct = 0.0;
};

/// Median over the seeds that finished.
struct SummaryRow {
  std::string variant;  // run id without the seed suffix
  std::string activation;
  std::size_t rank = 0;
  std::size_t seeds_ok = 0;
  std::size_t seeds_total = 0;
  std::optional<double> median_final_eval_loss;
  std::optional<double> median_step_speedup;
  std::optional<double> median_wallclock_speedup;
  double param_overhead_pct = 0.0;
};

struct Report {
  std::vector<RunResult> runs;
  std::vector<SpeedupRow> rows;
  std::vector<SummaryRow> summary;

  bool all_ok() const;
  const SummaryRow* find_summary(const std::string& variant) const;
  /// Appends another report's runs and rows and recomputes the summary.
  void merge(const Report& other);
};

/// Compares every run against the baseline of its seed (and mixup setting).
std::vector<SpeedupRow> speedup_rows(const std::vector<RunResult>& runs);
std::vector<SummaryRow> summarize(const std::vector<SpeedupRow>& rows);

using ProgressFn = std::function<void(const RunResult&)>;

/// Baseline once per seed, then every (activation, rank) cell per seed.
Report run_ablation_grid(const RunConfig& cfg, const std::vector<ActivationKind>& grid,
                         const std::vector<std::size_t>& ranks, const ProgressFn& progress = {});

/// Baseline plus the configured branch (if enabled) per seed.
Report run_train(const RunConfig& cfg, const ProgressFn& progress = {});

inline constexpr const char* kMetricsHeader = "step,split,loss,wallclock_s,seed,run_id";
inline constexpr const char* kSpeedupHeader =
    "run_id,activation,rank,final_eval_loss,steps_to_reach,step_speedup,wallclock_speedup,param_overhead_pct";
inline constexpr const char* kSummaryHeader =
    "variant,activation,rank,seeds_ok,seeds_total,median_final_eval_loss,median_step_speedup,"
    "median_wallclock_speedup,param_overhead_pct";
inline constexpr const char* kTimingHeader = "run_id,seed,modeled_step_s,measured_step_s";

std::string format_metrics_csv(const std::vector<RunResult>& runs);
std::string format_speedup_csv(const std::vector<SpeedupRow>& rows);
std::string format_summary_csv(const std::vector<SummaryRow>& rows);

/// metrics.csv, speedup.csv, summary.csv, timing.csv and config.snapshot,
/// each written to a temporary file and renamed into place.
void emit_reports(const Report& report, const RunConfig& cfg, const std::filesystem::path& dir);

/// Rebuilds run logs from a metrics.csv; speedup rows come out with the
/// overhead column taken from speedup.csv next to it when present.
Report load_report(const std::filesystem::path& dir);

void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace noble
