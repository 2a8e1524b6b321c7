#include <gtest/gtest.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "noble/config.hpp"
#include "noble/experiment.hpp"
#include "noble/metrics.hpp"

using namespace noble;
namespace fs = std::filesystem;

namespace {

MetricLog log_of(std::vector<std::pair<std::size_t, double>> points, double step_time = 1.0) {
  MetricLog log;
  for (auto [s, l] : points) log.rows.push_back({s, l, l, step_time * static_cast<double>(s)});
  return log;
}

fs::path scratch(const std::string& name) {
  auto dir = fs::temp_directory_path() / ("noble_harness_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string first_line(const std::string& text) { return text.substr(0, text.find('\n')); }

RunConfig quick_config(std::vector<std::uint64_t> seeds = {1, 2}) {
  auto cfg = parse_run_config(R"(
[run]
name = quick
seeds = 1
eval_every = 25
[optim]
total_steps = 100
warmup = 10
batch_size = 16
[regression]
width = 16
[noble]
rank = 4
)");
  cfg.seeds = std::move(seeds);
  return cfg;
}

int run_cli(const std::string& args, const fs::path& output_root) {
  const std::string cmd = std::string(kOutputRootEnv) + "=" + output_root.string() + " " + NOBLE_LAB_BINARY + " " +
                          args + " > " + (output_root / "cli.log").string() + " 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(StepsToReach, InterpolatesBetweenEvalPoints) {
  EXPECT_DOUBLE_EQ(*steps_to_reach(log_of({{100, 3.0}, {200, 2.8}}), 2.9), 150.0);
}

TEST(StepsToReach, TargetAboveFirstPoint) {
  EXPECT_DOUBLE_EQ(*steps_to_reach(log_of({{100, 3.0}, {200, 2.8}}), 3.5), 100.0);
}

TEST(StepsToReach, NotReached) {
  EXPECT_FALSE(steps_to_reach(log_of({{100, 3.0}, {200, 2.8}}), 2.0).has_value());
}

TEST(StepsToReach, NaNRejected) {
  EXPECT_THROW(steps_to_reach(log_of({{100, 3.0}, {200, NAN}}), 2.9), std::invalid_argument);
  EXPECT_THROW(steps_to_reach(log_of({{100, 3.0}}), NAN), std::invalid_argument);
  EXPECT_THROW(steps_to_reach(MetricLog{}, 1.0), std::invalid_argument);
}

TEST(StepsToReach, MonotoneInTarget) {
  const auto log = log_of({{10, 5.0}, {20, 4.1}, {30, 4.3}, {40, 3.2}, {50, 3.3}, {60, 2.5}});
  double previous = 0.0;
  for (double target = 5.2; target > 2.5; target -= 0.05) {
    const auto s = steps_to_reach(log, target);
    ASSERT_TRUE(s.has_value());
    EXPECT_GE(*s, previous) << target;
    previous = *s;
  }
}

TEST(StepSpeedup, HeadlineStepCounts) {
  const auto baseline = synthetic_linear_log(249000, 1000, 1.0, 4.0, 3.0);
  const auto variant = synthetic_linear_log(169000, 1000, 1.0, 4.0, 3.0);
  const auto s = step_speedup(baseline, variant, baseline.final_eval_loss());
  ASSERT_TRUE(s.has_value());
  EXPECT_NEAR(*s, 1.47, 0.005);
  EXPECT_DOUBLE_EQ(*step_speedup(baseline, baseline, baseline.final_eval_loss()), 1.0);
}

TEST(WallclockSpeedup, IdenticalLogs) {
  const auto log = log_of({{100, 3.0}, {200, 2.8}, {300, 2.7}}, 0.37);
  EXPECT_DOUBLE_EQ(*wallclock_speedup(log, log, log.final_eval_loss()), 1.0);
}

TEST(WallclockSpeedup, SlowerStepsFewerSteps) {
  const auto baseline = synthetic_linear_log(1000, 1, 1.0, 4.0, 3.0);
  // variant at 1.1 s/step crosses 3.0 at step 1000 / 1.26
  const double cross = 1000.0 / 1.26;
  const double end = 4.0 - 999.0 / (cross - 1.0);
  const auto variant = synthetic_linear_log(1000, 1, 1.1, 4.0, end);
  EXPECT_NEAR(*step_speedup(baseline, variant, 3.0), 1.26, 1e-9);
  EXPECT_NEAR(*wallclock_speedup(baseline, variant, 3.0), 1.26 / 1.10, 1e-9);
  EXPECT_NEAR(*wallclock_speedup(baseline, variant, 3.0), 1.145, 0.001);
}

TEST(WallclockSpeedup, PublishedRankSixtyFourRow) {
  const auto baseline = synthetic_linear_log(250000, 1000, 1.0, 4.0, 3.0);
  const auto variant = synthetic_linear_log(250000, 1000, 1.076, 4.0, 3.0 - (1.0 / (250000.0 / 1.26 - 1000.0)) *
                                                                                 (250000.0 - 250000.0 / 1.26));
  const auto w = wallclock_speedup(baseline, variant, 3.0);
  ASSERT_TRUE(w.has_value());
  EXPECT_NEAR(*w, 1.17, 0.005);
}

TEST(WallclockSpeedup, NotReachedGivesNoRatio) {
  const auto baseline = log_of({{100, 3.0}, {200, 2.0}});
  const auto variant = log_of({{100, 3.0}, {200, 2.5}});
  EXPECT_FALSE(wallclock_speedup(baseline, variant, 2.0).has_value());
  EXPECT_FALSE(step_speedup(baseline, variant, 2.0).has_value());
}

TEST(MetricLog, Validation) {
  EXPECT_THROW(log_of({{100, 3.0}, {100, 2.8}}).validate(), std::invalid_argument);
  EXPECT_THROW(log_of({{100, INFINITY}}).validate(), std::invalid_argument);
  EXPECT_NO_THROW(log_of({{100, 3.0}, {200, 2.8}}).validate());
}

TEST(SyntheticLog, ShapeAndEndpoints) {
  const auto log = synthetic_linear_log(250, 100, 0.5, 4.0, 3.0);
  ASSERT_EQ(log.rows.size(), 3u);
  EXPECT_EQ(log.rows.back().step, 250u);
  EXPECT_DOUBLE_EQ(log.rows.front().eval_loss, 4.0);
  EXPECT_DOUBLE_EQ(log.rows.back().eval_loss, 3.0);
  EXPECT_DOUBLE_EQ(log.rows.back().wallclock_s, 125.0);
}

TEST(Median, OddAndEven) {
  EXPECT_EQ(median({3.0, 1.0, 2.0}), 2.0);
  EXPECT_EQ(median({4.0, 1.0, 2.0, 3.0}), 2.5);
  EXPECT_THROW(median({}), std::invalid_argument);
}

TEST(TrimmedMean, SkipsWarmupAndTails) {
  std::vector<double> t(50, 100.0);  // excluded warm-up steps
  for (int i = 0; i < 10; ++i) t.push_back(1.0 + i);
  t[55] = 1000.0;  // tail outlier, trimmed
  EXPECT_DOUBLE_EQ(trimmed_mean_step_time(t), (2 + 3 + 4 + 5 + 7 + 8 + 9 + 10) / 8.0);
}

TEST(RunConfig, EmptyFileGivesDefaults) {
  const auto cfg = parse_run_config("");
  EXPECT_EQ(cfg.name, "smoke");
  EXPECT_EQ(cfg.task, TaskKind::spectral);
  EXPECT_EQ(cfg.seeds, (std::vector<std::uint64_t>{1, 2, 3}));
  EXPECT_EQ(cfg.optim.total_steps, 600u);
  EXPECT_EQ(cfg.optim.beta2, 0.98);
  EXPECT_EQ(cfg.noble.activation, ActivationKind::cosnet_2layer);
  EXPECT_NO_THROW(cfg.validate());
}

TEST(RunConfig, ParsesSectionsAndComments) {
  const auto cfg = parse_run_config(R"(
# comment
[run]
name = lm
task = markov_lm
seeds = 4, 5
clock = measured
[optim]
base_lr = 1e-3
total_steps = 400
warmup = 40
[model]
width = 32
n_heads = 4
[noble]
activation = gelu
rank = 8
[corpus]
order = 0
[sweep]
ranks = 2,4
activations = tanh,cosine_1layer
)");
  EXPECT_EQ(cfg.name, "lm");
  EXPECT_EQ(cfg.task, TaskKind::markov_lm);
  EXPECT_EQ(cfg.seeds, (std::vector<std::uint64_t>{4, 5}));
  EXPECT_EQ(cfg.clock, ClockKind::measured);
  EXPECT_EQ(cfg.optim.base_lr, 1e-3);
  EXPECT_EQ(cfg.transformer.width, 32u);
  EXPECT_EQ(cfg.noble.activation, ActivationKind::gelu);
  EXPECT_EQ(cfg.noble.rank, 8u);
  EXPECT_EQ(cfg.corpus.order, 0u);
  EXPECT_EQ(cfg.sweep_ranks, (std::vector<std::size_t>{2, 4}));
  EXPECT_EQ(cfg.sweep_activations, (std::vector<ActivationKind>{ActivationKind::tanh, ActivationKind::cosine_1layer}));
}

TEST(RunConfig, RejectsBadInput) {
  EXPECT_THROW(parse_run_config("[run]\nnmae = x\n"), ConfigError);
  EXPECT_THROW(parse_run_config("[extra]\nkey = 1\n"), ConfigError);
  EXPECT_THROW(parse_run_config("[optim]\ntotal_steps = many\n"), ConfigError);
  EXPECT_THROW(parse_run_config("[run]\ntask = vision\n"), ConfigError);
  EXPECT_THROW(parse_run_config("[noble]\nactivation = swish\n"), ConfigError);
}

TEST(RunConfig, Invariants) {
  EXPECT_THROW(parse_run_config("[optim]\ntotal_steps = 100\nwarmup = 100\n").validate(), ConfigError);
  EXPECT_THROW(parse_run_config("[run]\neval_every = 70\n").validate(), ConfigError);
  EXPECT_THROW(parse_run_config("[run]\nseeds =\n").validate(), ConfigError);
}

TEST(RunConfig, SnapshotRoundTrip) {
  const auto cfg = quick_config({7, 8});
  const auto snap = config_snapshot(cfg);
  const auto again = parse_run_config(snap);
  EXPECT_EQ(config_snapshot(again), snap);
  EXPECT_EQ(config_hash(again), config_hash(cfg));
  EXPECT_EQ(config_hash(cfg).size(), 16u);
  auto changed = cfg;
  changed.optim.base_lr *= 2;
  EXPECT_NE(config_hash(changed), config_hash(cfg));
}

TEST(RunConfig, OutputRootEnvironmentOverride) {
  auto cfg = quick_config();
  cfg.output_root = "some/root";
  unsetenv(kOutputRootEnv);
  EXPECT_EQ(cfg.run_dir(), fs::path("some/root") / "quick");
  setenv(kOutputRootEnv, "/tmp/elsewhere", 1);
  EXPECT_EQ(cfg.run_dir(), fs::path("/tmp/elsewhere") / "quick");
  unsetenv(kOutputRootEnv);
}

TEST(RunConfig, ShippedConfigsLoad) {
  for (const auto& entry : fs::directory_iterator(NOBLE_CONFIG_DIR)) {
    if (entry.path().extension() != ".ini") continue;
    EXPECT_NO_THROW(load_run_config(entry.path()).validate()) << entry.path();
  }
  EXPECT_THROW(load_run_config("/nonexistent/x.ini"), ConfigError);
}

TEST(Variant, RunIds) {
  const auto cfg = quick_config();
  EXPECT_EQ(baseline_variant(cfg).run_id(1), "baseline-s1");
  EXPECT_EQ(noble_variant(cfg, ActivationKind::cosnet_2layer, 16).run_id(3), "cosnet_2layer-r16-s3");
  auto m = noble_variant(cfg, ActivationKind::gelu, 8);
  m.mixup = true;
  EXPECT_EQ(m.run_id(2), "mixup-gelu-r8-s2");
}

TEST(Reports, CsvHeadersMatchSchema) {
  EXPECT_EQ(first_line(format_metrics_csv({})), "step,split,loss,wallclock_s,seed,run_id");
  EXPECT_EQ(first_line(format_speedup_csv({})),
            "run_id,activation,rank,final_eval_loss,steps_to_reach,step_speedup,wallclock_speedup,param_overhead_pct");
  EXPECT_EQ(first_line(format_summary_csv({})), kSummaryHeader);
}

TEST(Grid, RowCountAndBaselineSelfSpeedup) {
  const auto cfg = quick_config({1, 2});
  const auto report =
      run_ablation_grid(cfg, {ActivationKind::identity, ActivationKind::gelu}, {2, 4});
  EXPECT_TRUE(report.all_ok());
  EXPECT_EQ(report.rows.size(), 2u * 2u * 2u + 2u);
  const auto csv = format_speedup_csv(report.rows);
  EXPECT_EQ(static_cast<std::size_t>(std::count(csv.begin(), csv.end(), '\n')), 1u + report.rows.size());
  for (const auto& row : report.rows) {
    if (row.activation == "baseline") {
      ASSERT_TRUE(row.step_speedup.has_value());
      EXPECT_EQ(*row.step_speedup, 1.0);
      EXPECT_EQ(*row.wallclock_speedup, 1.0);
      EXPECT_EQ(row.param_overhead_pct, 0.0);
    }
  }
  EXPECT_NE(csv.find("\nbaseline-s1,baseline,0,"), std::string::npos);
  EXPECT_NE(csv.find(",1.0000,1.0000,0.0000\n"), std::string::npos);
  EXPECT_EQ(report.summary.size(), 5u);
}

TEST(Grid, EmptyGridIsBaselineOnly) {
  const auto report = run_ablation_grid(quick_config({1, 2}), {}, {4});
  ASSERT_EQ(report.rows.size(), 2u);
  for (const auto& row : report.rows) EXPECT_EQ(row.activation, "baseline");
}

TEST(Grid, RejectsInvalidCellsBeforeRunning) {
  int runs = 0;
  EXPECT_THROW(run_ablation_grid(quick_config({1}), {ActivationKind::gelu}, {64},
                                 [&](const RunResult&) { ++runs; }),
               std::invalid_argument);
  EXPECT_EQ(runs, 0);
}

TEST(Grid, IdentityBranchMatchesBaselineWithinSeedNoise) {
  const auto cfg = quick_config({1, 2, 3, 4, 5});
  const auto report = run_ablation_grid(cfg, {ActivationKind::identity}, {4});
  std::vector<double> base;
  for (const auto& row : report.rows)
    if (row.activation == "baseline") base.push_back(*row.final_eval_loss);
  double mean = 0.0;
  for (double v : base) mean += v;
  mean /= static_cast<double>(base.size());
  double var = 0.0;
  for (double v : base) var += (v - mean) * (v - mean);
  const double std = std::sqrt(var / static_cast<double>(base.size() - 1));
  const auto* b = report.find_summary("baseline");
  const auto* id = report.find_summary("identity-r4");
  ASSERT_TRUE(b && id);
  EXPECT_LE(std::abs(*id->median_final_eval_loss - *b->median_final_eval_loss), 3.0 * std);
}

TEST(Grid, DivergentRunIsIsolated) {
  auto cfg = quick_config({1, 2});
  auto diverging = noble_variant(cfg, ActivationKind::cosnet_2layer, 2);
  diverging.noble->lr_power = 40.0;  // W_up multiplier (16/2)^80
  Report report;
  for (auto seed : cfg.seeds) {
    report.runs.push_back(train_run(cfg, baseline_variant(cfg), seed));
    report.runs.push_back(train_run(cfg, diverging, seed));
  }
  report.rows = speedup_rows(report.runs);
  report.summary = summarize(report.rows);
  EXPECT_FALSE(report.all_ok());
  for (const auto& run : report.runs) {
    if (run.variant.is_baseline()) {
      EXPECT_FALSE(run.failed);
    } else {
      EXPECT_TRUE(run.failed);
      EXPECT_NE(run.error.find("non-finite"), std::string::npos) << run.error;
    }
  }
  const auto* b = report.find_summary("baseline");
  ASSERT_NE(b, nullptr);
  EXPECT_EQ(b->seeds_ok, 2u);
  EXPECT_TRUE(b->median_final_eval_loss.has_value());
  const auto* d = report.find_summary("cosnet_2layer-r2");
  ASSERT_NE(d, nullptr);
  EXPECT_EQ(d->seeds_ok, 0u);
  EXPECT_FALSE(d->median_final_eval_loss.has_value());
  const auto csv = format_speedup_csv(report.rows);
  EXPECT_NE(csv.find("cosnet_2layer-r2-s1,cosnet_2layer,2,NA,NA,NA,NA,"), std::string::npos) << csv;
}

TEST(Overhead, ReportedPercentMatchesModelCounts) {
  const auto cfg = quick_config({1});
  const auto variant = noble_variant(cfg, ActivationKind::cosnet_2layer, 4);
  const auto run = train_run(cfg, variant, 1);
  auto reg = cfg.regression;
  reg.noble = variant.noble;
  Rng rng(1);
  const auto net = RegressionNet<float>::init(reg, rng);
  EXPECT_EQ(run.counts.branch, net.count_params().branch);
  EXPECT_EQ(run.counts.base, net.count_params().base);
  const auto rows = speedup_rows({train_run(cfg, baseline_variant(cfg), 1), run});
  EXPECT_DOUBLE_EQ(rows[1].param_overhead_pct, net.count_params().overhead_pct());
}

TEST(Reports, EmitWritesAllFilesAtomically) {
  const auto dir = scratch("emit");
  const auto cfg = quick_config({1});
  const auto report = run_train(cfg);
  emit_reports(report, cfg, dir);
  for (const char* f : {"metrics.csv", "speedup.csv", "summary.csv", "timing.csv", "config.snapshot"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
  }
  for (const auto& e : fs::directory_iterator(dir)) EXPECT_EQ(e.path().extension() == ".tmp", false) << e.path();
  EXPECT_EQ(slurp(dir / "config.snapshot"), config_snapshot(cfg));
  EXPECT_EQ(first_line(slurp(dir / "metrics.csv")), kMetricsHeader);
  EXPECT_EQ(first_line(slurp(dir / "timing.csv")), kTimingHeader);
}

TEST(Reports, UnwritablePathNamesThePath) {
  const auto dir = scratch("blocked");
  {
    std::ofstream(dir / "file") << "x";
  }
  const auto cfg = quick_config({1});
  Report empty;
  try {
    emit_reports(empty, cfg, dir / "file" / "sub");
    FAIL() << "expected an error";
  } catch (const std::runtime_error& e) {
    EXPECT_NE(std::string(e.what()).find((dir / "file").string()), std::string::npos) << e.what();
  }
}

TEST(Reports, LoadReportRoundTrip) {
  const auto dir = scratch("load");
  const auto cfg = quick_config({1, 2});
  const auto report = run_ablation_grid(cfg, {ActivationKind::tanh}, {2});
  emit_reports(report, cfg, dir);
  const auto loaded = load_report(dir);
  EXPECT_EQ(loaded.runs.size(), report.runs.size());
  EXPECT_EQ(format_speedup_csv(loaded.rows), format_speedup_csv(report.rows));
  EXPECT_EQ(format_summary_csv(loaded.summary), format_summary_csv(report.summary));
}

TEST(Determinism, MetricsCsvBytesRepeat) {
  const auto cfg = quick_config({1, 2});
  const auto a = run_train(cfg);
  const auto b = run_train(cfg);
  EXPECT_EQ(format_metrics_csv(a.runs), format_metrics_csv(b.runs));
  EXPECT_GT(format_metrics_csv(a.runs).size(), 200u);
}

TEST(Determinism, MarkovLmRunRepeats) {
  auto cfg = parse_run_config(R"(
[run]
task = markov_lm
seeds = 3
eval_every = 10
[optim]
total_steps = 20
warmup = 2
batch_size = 4
[model]
depth = 1
width = 16
n_heads = 2
seq_len = 8
[corpus]
train_chars = 5000
eval_chars = 1000
eval_batches = 2
[noble]
rank = 4
)");
  const auto a = run_train(cfg);
  const auto b = run_train(cfg);
  ASSERT_TRUE(a.all_ok()) << a.runs[0].error << a.runs[1].error;
  EXPECT_EQ(format_metrics_csv(a.runs), format_metrics_csv(b.runs));
}

TEST(Checkpoints, WrittenWhenRequested) {
  const auto dir = scratch("ckpt");
  const auto cfg = quick_config({1});
  const auto run = train_run(cfg, noble_variant(cfg, ActivationKind::cosnet_2layer, 4), 1, dir);
  ASSERT_FALSE(run.failed) << run.error;
  EXPECT_TRUE(fs::exists(dir / "cosnet_2layer-r4-s1.ckpt"));
  EXPECT_TRUE(fs::exists(dir / "cosnet_2layer-r4-s1.params"));
  EXPECT_TRUE(fs::exists(dir / "cosnet_2layer-r4-s1.params.manifest"));
}

TEST(Cli, GradcheckNoble) {
  const auto root = scratch("cli_grad");
  EXPECT_EQ(run_cli("gradcheck --module noble", root), 0) << slurp(root / "cli.log");
  EXPECT_NE(slurp(root / "cli.log").find("cosnet_2layer"), std::string::npos);
  EXPECT_NE(run_cli("gradcheck --module optim", root), 0);
}

TEST(Cli, TrainThenReport) {
  const auto root = scratch("cli_train");
  const std::string config = std::string(NOBLE_CONFIG_DIR) + "/smoke.ini";
  ASSERT_EQ(run_cli("train " + config, root), 0) << slurp(root / "cli.log");
  const auto metrics = slurp(root / "smoke" / "metrics.csv");
  EXPECT_EQ(first_line(metrics), kMetricsHeader);
  ASSERT_EQ(run_cli("train " + config, root), 0);
  EXPECT_EQ(slurp(root / "smoke" / "metrics.csv"), metrics);
  const auto speedup = slurp(root / "smoke" / "speedup.csv");
  fs::remove(root / "smoke" / "summary.csv");
  EXPECT_EQ(run_cli("report " + (root / "smoke").string(), root), 0) << slurp(root / "cli.log");
  EXPECT_EQ(slurp(root / "smoke" / "speedup.csv"), speedup);
  EXPECT_TRUE(fs::exists(root / "smoke" / "summary.csv"));
}

TEST(Cli, AblateWritesGrid) {
  const auto root = scratch("cli_ablate");
  const std::string config = std::string(NOBLE_CONFIG_DIR) + "/smoke.ini";
  ASSERT_EQ(run_cli("ablate " + config + " --activations tanh,gelu --ranks 2,4", root), 0) << slurp(root / "cli.log");
  const auto csv = slurp(root / "smoke" / "speedup.csv");
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 1 + 2 * 2 * 1 + 1);
  ASSERT_EQ(run_cli("sweep-rank " + config + " --ranks 2", root), 0) << slurp(root / "cli.log");
}

TEST(Cli, ErrorsGiveNonZeroExit) {
  const auto root = scratch("cli_err");
  EXPECT_NE(run_cli("train /nonexistent.ini", root), 0);
  EXPECT_NE(run_cli("frobnicate", root), 0);
  EXPECT_NE(run_cli("report " + (root / "missing").string(), root), 0);
}
