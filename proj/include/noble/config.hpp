#pragma once

// Run configuration. The file format is INI-style: `[section]` headers and
// `key = value` lines, `;` or `#` comments. Every key has a default, so an
// empty file runs the smoke experiment.
//
//   [run]        name, task (spectral | markov_lm), seeds (comma list),
//                output_root, eval_every, clock (modeled | measured),
//                save_checkpoints
//   [optim]      base_lr, warmup, total_steps, batch_size, weight_decay,
//                beta1, beta2, eps
//   [model]      depth, width, n_heads, seq_len, ffn_hidden, tie_embeddings,
//                main_init_scale, embed_init_std          (markov_lm)
//   [regression] width, hidden_layers, main_init_scale    (spectral)
//   [noble]      enabled, activation, rank, up_init_scale, main_init_scale,
//                lr_power, mixing_lr_power, omega_min, omega_max,
//                phase_init_std, freq_lr_mult, phase_lr_mult
//   [corpus]     vocab_size, order, concentration, train_chars, eval_chars,
//                seed, eval_batches
//   [spectral]   input_dim, low_terms, high_terms, low_max_frequency,
//                high_min_frequency, high_max_frequency, residual_amplitude,
//                noise_std, seed, eval_points, mixup, mixup_alpha
//   [sweep]      ranks (comma list), activations (comma list)

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "noble/model.hpp"
#include "noble/noble_linear.hpp"
#include "noble/tasks.hpp"

namespace noble {

enum class TaskKind { spectral, markov_lm };
enum class ClockKind { modeled, measured };

std::string_view to_string(TaskKind kind);
std::string_view to_string(ClockKind kind);

/// Environment variable that replaces [run] output_root.
inline constexpr const char* kOutputRootEnv = "NOBLE_OUTPUT_ROOT";

/// Modeled clock: seconds charged per counted floating point operation.
inline constexpr double kModeledSecondsPerFlop = 1e-9;

struct OptimSettings {
  double base_lr = 3e-3;
  std::size_t warmup = 30;
  std::size_t total_steps = 600;
  std::size_t batch_size = 64;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-8;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::string name = "smoke";
  TaskKind task = TaskKind::spectral;
  std::vector<std::uint64_t> seeds{1, 2, 3};
  std::filesystem::path output_root = "runs";
  std::size_t eval_every = 50;
  ClockKind clock = ClockKind::modeled;
  bool save_checkpoints = false;

  OptimSettings optim;
  TransformerConfig transformer;   // noble field is filled per variant
  RegressionNetConfig regression;  // noble field is filled per variant

  bool noble_enabled = true;
  NobleConfig noble;  // d_in / d_out are filled per projection

  CorpusSpec corpus;
  std::uint64_t corpus_seed = 1234;
  std::size_t eval_batches = 8;

  SpectralSpec spectral;
  std::uint64_t target_seed = 1234;
  std::size_t eval_points = 1024;
  bool mixup = false;
  double mixup_alpha = 0.4;

  std::vector<std::size_t> sweep_ranks{4, 8, 16, 32};
  std::vector<ActivationKind> sweep_activations{ActivationKind::identity,      ActivationKind::tanh,
                                                ActivationKind::leaky_relu,    ActivationKind::gelu,
                                                ActivationKind::cosine_1layer, ActivationKind::cosnet_2layer};

  /// total_steps > warmup, eval_every divides total_steps, at least one seed,
  /// and the model / task specs validate.
  void validate() const;
  /// output_root (or the environment override) joined with name.
  std::filesystem::path run_dir() const;
};

RunConfig parse_run_config(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Resolved configuration in the input format, keys in fixed order.
std::string config_snapshot(const RunConfig& cfg);
/// FNV-1a of the snapshot, 16 hex digits.
std::string config_hash(const RunConfig& cfg);

std::vector<std::size_t> parse_size_list(const std::string& text);
std::vector<ActivationKind> parse_activation_list(const std::string& text);

}  // namespace noble
