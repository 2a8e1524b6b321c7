#include <CLI11.hpp>

#include <cstdio>
#include <iostream>

#include "noble/config.hpp"
#include "noble/experiment.hpp"
#include "noble/gradcheck_suite.hpp"

using namespace noble;

namespace {

void print_run(const RunResult& r) {
  if (r.failed) {
    std::printf("%-32s FAILED: %s\n", r.run_id.c_str(), r.error.c_str());
  } else {
    std::printf("%-32s final eval %.6g  params +%.2f%%\n", r.run_id.c_str(), r.log.final_eval_loss(),
                r.counts.overhead_pct());
  }
  std::fflush(stdout);
}

void print_summary(const Report& report) {
  std::printf("\n%-28s %8s %12s %10s %10s %10s\n", "variant", "seeds", "median_loss", "step_x", "wall_x", "params%");
  auto show = [](const std::optional<double>& v, int digits, bool significant = false) {
    char buf[32];
    if (!v) return std::string("NA");
    std::snprintf(buf, sizeof buf, significant ? "%.*g" : "%.*f", digits, *v);
    return std::string(buf);
  };
  for (const auto& s : report.summary) {
    std::printf("%-28s %4zu/%-3zu %12s %10s %10s %10.2f\n", s.variant.c_str(), s.seeds_ok, s.seeds_total,
                show(s.median_final_eval_loss, 6, true).c_str(), show(s.median_step_speedup, 3).c_str(),
                show(s.median_wallclock_speedup, 3).c_str(), s.param_overhead_pct);
  }
}

int finish(const Report& report, const RunConfig& cfg) {
  const auto dir = cfg.run_dir();
  emit_reports(report, cfg, dir);
  print_summary(report);
  std::printf("\nreports written to %s\n", dir.string().c_str());
  if (!report.all_ok()) {
    std::fprintf(stderr, "one or more runs failed\n");
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Low-rank nonlinear branch experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::string activations, ranks;
  std::string module = "all";
  std::string report_dir;

  auto* train = app.add_subcommand("train", "Train the baseline and the configured branch for every seed");
  train->add_option("config", config_path, "Run configuration file")->required();

  auto* ablate = app.add_subcommand("ablate", "Run the activation x rank grid");
  ablate->add_option("config", config_path, "Run configuration file")->required();
  ablate->add_option("--activations", activations, "Comma-separated activation kinds (default: [sweep] activations)");
  ablate->add_option("--ranks", ranks, "Comma-separated ranks (default: [sweep] ranks)");

  auto* sweep = app.add_subcommand("sweep-rank", "Run the configured activation at every [sweep] rank");
  sweep->add_option("config", config_path, "Run configuration file")->required();
  sweep->add_option("--ranks", ranks, "Comma-separated ranks (default: [sweep] ranks)");

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  gradcheck->add_option("--module", module, "all, noble or model")->check(CLI::IsMember({"all", "noble", "model"}));

  auto* report = app.add_subcommand("report", "Recompute speedups from a run directory");
  report->add_option("dir", report_dir, "Directory holding metrics.csv")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*gradcheck) {
      bool ok = true;
      for (const auto& c : run_gradcheck_suite(parse_gradcheck_module(module))) {
        std::printf("%-40s max_rel_err %.3e  tol %.0e  worst %-28s %s\n", c.name.c_str(), c.result.max_rel_error,
                    c.tolerance, c.worst_param_name.c_str(), c.passed() ? "ok" : "FAIL");
        ok = ok && c.passed();
      }
      return ok ? 0 : 1;
    }
    if (*report) {
      const auto r = load_report(report_dir);
      write_file_atomic(std::filesystem::path(report_dir) / "speedup.csv", format_speedup_csv(r.rows));
      write_file_atomic(std::filesystem::path(report_dir) / "summary.csv", format_summary_csv(r.summary));
      print_summary(r);
      return r.all_ok() ? 0 : 1;
    }

    auto cfg = load_run_config(config_path);
    if (*train) return finish(run_train(cfg, print_run), cfg);
    if (*ablate) {
      const auto grid = activations.empty() ? cfg.sweep_activations : parse_activation_list(activations);
      const auto rs = ranks.empty() ? cfg.sweep_ranks : parse_size_list(ranks);
      return finish(run_ablation_grid(cfg, grid, rs, print_run), cfg);
    }
    if (*sweep) {
      const auto rs = ranks.empty() ? cfg.sweep_ranks : parse_size_list(ranks);
      return finish(run_ablation_grid(cfg, {cfg.noble.activation}, rs, print_run), cfg);
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
