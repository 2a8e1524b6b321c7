#include "noble/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <random>
#include <sstream>

#include "noble/ops.hpp"
#include "noble/optim.hpp"
#include "noble/rng.hpp"
#include "noble/serialize.hpp"
#include "noble/tasks.hpp"

namespace noble {

namespace {

constexpr std::uint64_t kSaltInit = 101;
constexpr std::uint64_t kSaltData = 102;
constexpr std::uint64_t kSaltMixup = 103;
constexpr std::uint64_t kSaltEvalWindows = 104;

class NonFiniteLoss : public std::runtime_error {
 public:
  explicit NonFiniteLoss(std::size_t step)
      : std::runtime_error("non-finite training loss at step " + std::to_string(step)) {}
};

AdamWOptions adam_options(const OptimSettings& o) {
  AdamWOptions a;
  a.lr = o.base_lr;
  a.beta1 = o.beta1;
  a.beta2 = o.beta2;
  a.eps = o.eps;
  a.weight_decay = o.weight_decay;
  a.warmup_steps = o.warmup;
  a.total_steps = o.total_steps;
  return a;
}

// Shared loop: step_loss(step) builds the loss for a 0-based step under the
// active tape, eval() returns the eval loss with no tape.
template <typename StepLoss, typename Eval>
void train_loop(const RunConfig& cfg, const ParameterList<float>& params, StepLoss step_loss, Eval eval,
                RunResult& res, const std::optional<std::filesystem::path>& checkpoint_dir) {
  AdamW<float> opt(params, adam_options(cfg.optim));
  std::vector<double> measured;
  measured.reserve(cfg.optim.total_steps);
  double modeled_total = 0.0, measured_total = 0.0, interval_loss = 0.0;
  std::size_t interval_steps = 0;

  for (std::size_t step = 1; step <= cfg.optim.total_steps; ++step) {
    const auto flops0 = FlopCounter::value();
    const auto t0 = std::chrono::steady_clock::now();
    double loss_value = 0.0;
    {
      Tape<float> tape;
      TapeScope<float> scope(tape);
      auto loss = step_loss(step - 1);
      loss_value = static_cast<double>(loss.item());
      if (!std::isfinite(loss_value)) throw NonFiniteLoss(step);
      tape.backward(loss);
    }
    opt.step();
    opt.zero_grad();
    const double dt = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    measured.push_back(dt);
    measured_total += dt;
    modeled_total += static_cast<double>(FlopCounter::value() - flops0) * kModeledSecondsPerFlop;
    interval_loss += loss_value;
    ++interval_steps;

    if (step % cfg.eval_every == 0) {
      const double eval_loss = eval();
      if (!std::isfinite(eval_loss)) throw NonFiniteLoss(step);
      const double clock = cfg.clock == ClockKind::modeled ? modeled_total : measured_total;
      res.log.rows.push_back({step, interval_loss / static_cast<double>(interval_steps), eval_loss, clock});
      interval_loss = 0.0;
      interval_steps = 0;
    }
  }
  res.modeled_step_s = modeled_total / static_cast<double>(cfg.optim.total_steps);
  res.measured_step_s = trimmed_mean_step_time(measured);
  if (checkpoint_dir) {
    std::filesystem::create_directories(*checkpoint_dir);
    save_checkpoint(*checkpoint_dir / (res.run_id + ".ckpt"), opt);
    save_parameters(*checkpoint_dir / (res.run_id + ".params"), opt.parameters());
  }
}

void train_markov_lm(const RunConfig& cfg, const Variant& variant, std::uint64_t seed, RunResult& res,
                     const std::optional<std::filesystem::path>& checkpoint_dir) {
  const auto corpus = gen_char_corpus(cfg.corpus, cfg.corpus_seed);
  auto mcfg = cfg.transformer;
  mcfg.vocab_size = cfg.corpus.vocab_size;
  mcfg.noble = variant.noble;
  Rng rng(mix_seed(seed, kSaltInit));
  const auto model = Transformer<float>::init(mcfg, rng);
  const std::size_t B = cfg.optim.batch_size, T = mcfg.seq_len;
  const std::uint64_t data_seed = mix_seed(seed, kSaltData);

  std::vector<TokenBatch> eval_set;
  for (std::size_t i = 0; i < cfg.eval_batches; ++i) {
    eval_set.push_back(sample_token_batch(corpus, Split::eval, B, T, mix_seed(cfg.corpus_seed, kSaltEvalWindows), i));
  }
  auto step_loss = [&](std::size_t step) {
    const auto batch = sample_token_batch(corpus, Split::train, B, T, data_seed, step);
    return model.loss(batch.inputs, batch.targets, B, T);
  };
  auto eval = [&]() {
    double total = 0.0;
    for (const auto& b : eval_set) total += static_cast<double>(model.loss(b.inputs, b.targets, B, T).item());
    return total / static_cast<double>(eval_set.size());
  };
  train_loop(cfg, model.parameters(), step_loss, eval, res, checkpoint_dir);
}

Tensor<float> inputs_tensor(const RegressionBatch& b) {
  return Tensor<float>::from({b.n, b.input_dim}, std::vector<float>(b.inputs.begin(), b.inputs.end()));
}

Tensor<float> targets_tensor(const RegressionBatch& b) {
  return Tensor<float>::from({b.n, 1}, std::vector<float>(b.targets.begin(), b.targets.end()));
}

double beta_sample(double alpha, Rng& rng) {
  std::gamma_distribution<double> g(alpha, 1.0);
  const double x = g(rng), y = g(rng);
  return x + y > 0.0 ? x / (x + y) : 0.5;
}

void train_spectral(const RunConfig& cfg, const Variant& variant, std::uint64_t seed, RunResult& res,
                    const std::optional<std::filesystem::path>& checkpoint_dir) {
  const auto target = make_spectral_target(cfg.spectral, cfg.target_seed);
  auto ncfg = cfg.regression;
  ncfg.input_dim = cfg.spectral.input_dim;
  ncfg.noble = variant.noble;
  Rng rng(mix_seed(seed, kSaltInit));
  const auto net = RegressionNet<float>::init(ncfg, rng);
  const std::uint64_t data_seed = mix_seed(seed, kSaltData);

  const auto eval_batch = gen_spectral_batch(target, cfg.eval_points, eval_set_seed(cfg.target_seed));
  const auto eval_x = inputs_tensor(eval_batch);
  const auto eval_y = targets_tensor(eval_batch);

  auto step_loss = [&](std::size_t step) {
    auto batch = gen_spectral_batch(target, cfg.optim.batch_size, train_batch_seed(data_seed, step));
    if (variant.mixup) {
      Rng mrng(mix_seed(mix_seed(seed, kSaltMixup), step));
      const double lambda = beta_sample(cfg.mixup_alpha, mrng);
      batch = mixup_blend(batch, shuffled(batch, mrng()), lambda);
    }
    return ops::mse_loss(net.forward(inputs_tensor(batch)), targets_tensor(batch));
  };
  auto eval = [&]() { return static_cast<double>(ops::mse_loss(net.forward(eval_x), eval_y).item()); };
  train_loop(cfg, net.parameters(), step_loss, eval, res, checkpoint_dir);
}

std::string fmt(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::string fmt(const std::optional<double>& v, int digits) { return v ? fmt(*v, digits) : "NA"; }

// Losses span several decades across tasks; keep significant digits.
std::string fmt_loss(const std::optional<double>& v) {
  if (!v) return "NA";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", *v);
  return buf;
}

// Shortest text that parses back to the same double; metrics.csv is the
// source `report` recomputes from.
std::string fmt_exact(double v) {
  char buf[64];
  for (int precision = 9; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof buf, "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

std::string strip_seed(const std::string& run_id) {
  const auto pos = run_id.rfind("-s");
  return pos == std::string::npos ? run_id : run_id.substr(0, pos);
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path, const std::string& header) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != header) {
    throw std::runtime_error(path.string() + ": header does not match '" + header + "'");
  }
  std::vector<std::vector<std::string>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(std::move(cells));
  }
  return rows;
}

// Inverse of Variant::run_id.
Variant parse_variant(const std::string& run_id) {
  Variant v;
  std::string rest = strip_seed(run_id);
  if (rest.rfind("mixup-", 0) == 0) {
    v.mixup = true;
    rest = rest.substr(6);
  }
  if (rest == "baseline") return v;
  const auto pos = rest.rfind("-r");
  if (pos == std::string::npos) throw std::runtime_error("unrecognized run id " + run_id);
  NobleConfig n;
  n.activation = parse_activation(rest.substr(0, pos));
  n.rank = std::stoull(rest.substr(pos + 2));
  v.noble = n;
  return v;
}

}  // namespace

std::string Variant::activation_name() const {
  return noble ? std::string(to_string(noble->activation)) : std::string("baseline");
}

std::string Variant::run_id(std::uint64_t seed) const {
  std::string id = mixup ? "mixup-" : "";
  id += activation_name();
  if (noble) id += "-r" + std::to_string(noble->rank);
  return id + "-s" + std::to_string(seed);
}

Variant baseline_variant(const RunConfig& cfg) { return Variant{std::nullopt, cfg.mixup}; }

Variant noble_variant(const RunConfig& cfg, ActivationKind kind, std::size_t rank) {
  NobleConfig n = cfg.noble;
  n.activation = kind;
  n.rank = rank;
  return Variant{n, cfg.mixup};
}

double trimmed_mean_step_time(const std::vector<double>& step_seconds) {
  if (step_seconds.empty()) return 0.0;
  std::vector<double> kept;
  if (step_seconds.size() > kTimingSkipSteps) {
    kept.assign(step_seconds.begin() + kTimingSkipSteps, step_seconds.end());
  } else {
    kept = step_seconds;
  }
  std::sort(kept.begin(), kept.end());
  const auto cut = static_cast<std::size_t>(std::floor(kTimingTrim * static_cast<double>(kept.size())));
  double total = 0.0;
  for (std::size_t i = cut; i < kept.size() - cut; ++i) total += kept[i];
  return total / static_cast<double>(kept.size() - 2 * cut);
}

ParamCounts variant_param_counts(const RunConfig& cfg, const Variant& variant) {
  if (cfg.task == TaskKind::markov_lm) {
    auto m = cfg.transformer;
    m.vocab_size = cfg.corpus.vocab_size;
    m.noble = variant.noble;
    return count_params(m, true);
  }
  auto r = cfg.regression;
  r.input_dim = cfg.spectral.input_dim;
  r.noble = variant.noble;
  return count_params(r);
}

RunResult train_run(const RunConfig& cfg, const Variant& variant, std::uint64_t seed,
                    const std::optional<std::filesystem::path>& checkpoint_dir) {
  RunResult res;
  res.run_id = variant.run_id(seed);
  res.variant = variant;
  res.seed = seed;
  res.log.seed = seed;
  res.log.config_hash = config_hash(cfg);
  res.log.version = kVersion;
  try {
    res.counts = variant_param_counts(cfg, variant);
    if (cfg.task == TaskKind::markov_lm) {
      train_markov_lm(cfg, variant, seed, res, checkpoint_dir);
    } else {
      train_spectral(cfg, variant, seed, res, checkpoint_dir);
    }
    res.log.validate();
  } catch (const std::exception& e) {
    res.failed = true;
    res.error = e.what();
  }
  return res;
}

bool Report::all_ok() const {
  return std::none_of(runs.begin(), runs.end(), [](const RunResult& r) { return r.failed; });
}

const SummaryRow* Report::find_summary(const std::string& variant) const {
  for (const auto& s : summary) {
    if (s.variant == variant) return &s;
  }
  return nullptr;
}

void Report::merge(const Report& other) {
  runs.insert(runs.end(), other.runs.begin(), other.runs.end());
  rows.insert(rows.end(), other.rows.begin(), other.rows.end());
  summary = summarize(rows);
}

std::vector<SpeedupRow> speedup_rows(const std::vector<RunResult>& runs) {
  std::vector<SpeedupRow> rows;
  for (const auto& run : runs) {
    SpeedupRow row;
    row.run_id = run.run_id;
    row.activation = run.variant.activation_name();
    row.rank = run.variant.rank();
    row.seed = run.seed;
    row.mixup = run.variant.mixup;
    row.param_overhead_pct = run.counts.overhead_pct();
    if (!run.failed && !run.log.empty()) row.final_eval_loss = run.log.final_eval_loss();

    const RunResult* base = nullptr;
    for (const auto& cand : runs) {
      if (cand.variant.is_baseline() && cand.seed == run.seed && cand.variant.mixup == run.variant.mixup) {
        base = &cand;
        break;
      }
    }
    if (base && !base->failed && !base->log.empty() && row.final_eval_loss) {
      const double target = base->log.final_eval_loss();
      row.steps_to_reach = steps_to_reach(run.log, target);
      row.step_speedup = step_speedup(base->log, run.log, target);
      row.wallclock_speedup = wallclock_speedup(base->log, run.log, target);
    }
    rows.push_back(row);
  }
  return rows;
}

std::vector<SummaryRow> summarize(const std::vector<SpeedupRow>& rows) {
  std::vector<SummaryRow> out;
  std::map<std::string, std::size_t> index;
  std::vector<std::vector<const SpeedupRow*>> members;
  for (const auto& r : rows) {
    const auto key = strip_seed(r.run_id);
    auto [it, inserted] = index.emplace(key, out.size());
    if (inserted) {
      SummaryRow s;
      s.variant = key;
      s.activation = r.activation;
      s.rank = r.rank;
      s.param_overhead_pct = r.param_overhead_pct;
      out.push_back(s);
      members.emplace_back();
    }
    members[it->second].push_back(&r);
  }
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::vector<double> loss, step, wall;
    for (const auto* r : members[i]) {
      if (r->final_eval_loss) loss.push_back(*r->final_eval_loss);
      if (r->step_speedup) step.push_back(*r->step_speedup);
      if (r->wallclock_speedup) wall.push_back(*r->wallclock_speedup);
    }
    out[i].seeds_total = members[i].size();
    out[i].seeds_ok = loss.size();
    if (!loss.empty()) out[i].median_final_eval_loss = median(loss);
    if (!step.empty()) out[i].median_step_speedup = median(step);
    if (!wall.empty()) out[i].median_wallclock_speedup = median(wall);
  }
  return out;
}

Report run_ablation_grid(const RunConfig& cfg, const std::vector<ActivationKind>& grid,
                         const std::vector<std::size_t>& ranks, const ProgressFn& progress) {
  cfg.validate();
  std::vector<Variant> variants{baseline_variant(cfg)};
  for (auto kind : grid) {
    for (auto rank : ranks) variants.push_back(noble_variant(cfg, kind, rank));
  }
  // fail fast on a cell that can never be built, before any training
  for (const auto& v : variants) variant_param_counts(cfg, v);

  std::optional<std::filesystem::path> ckpt;
  if (cfg.save_checkpoints) ckpt = cfg.run_dir() / "checkpoints";
  Report report;
  for (auto seed : cfg.seeds) {
    for (const auto& v : variants) {
      report.runs.push_back(train_run(cfg, v, seed, ckpt));
      if (progress) progress(report.runs.back());
    }
  }
  report.rows = speedup_rows(report.runs);
  report.summary = summarize(report.rows);
  return report;
}

Report run_train(const RunConfig& cfg, const ProgressFn& progress) {
  if (!cfg.noble_enabled) return run_ablation_grid(cfg, {}, {}, progress);
  return run_ablation_grid(cfg, {cfg.noble.activation}, {cfg.noble.rank}, progress);
}

std::string format_metrics_csv(const std::vector<RunResult>& runs) {
  std::string out = std::string(kMetricsHeader) + "\n";
  for (const auto& run : runs) {
    for (const auto& r : run.log.rows) {
      const auto tail = "," + fmt_exact(r.wallclock_s) + "," + std::to_string(run.seed) + "," + run.run_id + "\n";
      out += std::to_string(r.step) + ",train," + fmt_exact(r.train_loss) + tail;
      out += std::to_string(r.step) + ",eval," + fmt_exact(r.eval_loss) + tail;
    }
  }
  return out;
}

std::string format_speedup_csv(const std::vector<SpeedupRow>& rows) {
  std::string out = std::string(kSpeedupHeader) + "\n";
  for (const auto& r : rows) {
    out += r.run_id + "," + r.activation + "," + std::to_string(r.rank) + "," + fmt_loss(r.final_eval_loss) + "," +
           fmt(r.steps_to_reach, 2) + "," + fmt(r.step_speedup, 4) + "," + fmt(r.wallclock_speedup, 4) + "," +
           fmt(r.param_overhead_pct, 4) + "\n";
  }
  return out;
}

std::string format_summary_csv(const std::vector<SummaryRow>& rows) {
  std::string out = std::string(kSummaryHeader) + "\n";
  for (const auto& r : rows) {
    out += r.variant + "," + r.activation + "," + std::to_string(r.rank) + "," + std::to_string(r.seeds_ok) + "," +
           std::to_string(r.seeds_total) + "," + fmt_loss(r.median_final_eval_loss) + "," +
           fmt(r.median_step_speedup, 4) + "," + fmt(r.median_wallclock_speedup, 4) + "," +
           fmt(r.param_overhead_pct, 4) + "\n";
  }
  return out;
}

void write_file_atomic(const std::filesystem::path& path, const std::string& contents) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  if (ec) throw std::runtime_error("cannot create directory " + path.parent_path().string() + ": " + ec.message());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out << contents;
    out.flush();
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw std::runtime_error("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

void emit_reports(const Report& report, const RunConfig& cfg, const std::filesystem::path& dir) {
  write_file_atomic(dir / "metrics.csv", format_metrics_csv(report.runs));
  write_file_atomic(dir / "speedup.csv", format_speedup_csv(report.rows));
  write_file_atomic(dir / "summary.csv", format_summary_csv(report.summary));
  std::string timing = std::string(kTimingHeader) + "\n";
  for (const auto& r : report.runs) {
    timing += r.run_id + "," + std::to_string(r.seed) + "," + fmt(r.modeled_step_s, 9) + "," +
              fmt(r.measured_step_s, 9) + "\n";
  }
  write_file_atomic(dir / "timing.csv", timing);
  write_file_atomic(dir / "config.snapshot", config_snapshot(cfg));
}

Report load_report(const std::filesystem::path& dir) {
  Report report;
  std::map<std::string, std::size_t> index;
  for (const auto& cells : read_csv(dir / "metrics.csv", kMetricsHeader)) {
    if (cells.size() != 6) throw std::runtime_error("metrics.csv: expected 6 columns");
    const auto& id = cells[5];
    auto [it, inserted] = index.emplace(id, report.runs.size());
    if (inserted) {
      RunResult r;
      r.run_id = id;
      r.variant = parse_variant(id);
      r.seed = std::stoull(cells[4]);
      r.log.seed = r.seed;
      report.runs.push_back(std::move(r));
    }
    auto& log = report.runs[it->second].log;
    const std::size_t step = std::stoull(cells[0]);
    if (log.rows.empty() || log.rows.back().step != step) log.rows.push_back({step, 0.0, 0.0, 0.0});
    auto& row = log.rows.back();
    row.wallclock_s = std::stod(cells[3]);
    if (cells[1] == "train") {
      row.train_loss = std::stod(cells[2]);
    } else if (cells[1] == "eval") {
      row.eval_loss = std::stod(cells[2]);
    } else {
      throw std::runtime_error("metrics.csv: unknown split " + cells[1]);
    }
  }
  for (auto& r : report.runs) r.log.validate();
  report.rows = speedup_rows(report.runs);

  std::map<std::string, std::vector<std::string>> previous;
  if (std::filesystem::exists(dir / "speedup.csv")) {
    for (auto& cells : read_csv(dir / "speedup.csv", kSpeedupHeader)) previous[cells.at(0)] = cells;
  }
  for (auto& row : report.rows) {
    auto it = previous.find(row.run_id);
    if (it != previous.end()) {
      row.param_overhead_pct = std::stod(it->second.at(7));
      // failed runs keep their marker
      if (it->second.at(3) == "NA") row.final_eval_loss.reset();
    }
  }
  report.summary = summarize(report.rows);
  return report;
}

}  // namespace noble
