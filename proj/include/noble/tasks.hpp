#pragma once

// Seeded synthetic data: a character-level Markov corpus for language
// modeling and a spectral regression target made of a smooth part plus a
// small high-frequency residual. Every generator is a pure function of its
// spec and seed.

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace noble {

struct CorpusSpec {
  std::size_t vocab_size = 16;  // <= 256
  std::size_t order = 2;        // 0 = i.i.d. draws, 2 = depends on the previous two symbols
  double concentration = 0.1;   // Dirichlet concentration of each transition row (order 2)
  std::size_t train_chars = 200000;
  std::size_t eval_chars = 20000;

  void validate() const;
};

struct CharCorpus {
  CorpusSpec spec;
  std::uint64_t seed = 0;
  std::vector<std::uint8_t> train;
  std::vector<std::uint8_t> eval;
  /// Entropy rate of the generating source in nats per symbol.
  double entropy_rate = 0.0;

  std::uint64_t hash() const;
};

/// Builds the source from (spec, seed), samples one stream and splits it:
/// the first train_chars symbols train, the next eval_chars evaluate.
CharCorpus gen_char_corpus(const CorpusSpec& spec, std::uint64_t seed);

/// Entropy rate (nats) of an order-2 chain given row-major transition
/// probabilities P[(a * V + b) * V + c] = p(c | a, b).
double order2_entropy_rate(const std::vector<double>& transitions, std::size_t vocab);

struct TokenBatch {
  std::size_t batch = 0;
  std::size_t seq = 0;
  std::vector<int> inputs;   // batch * seq
  std::vector<int> targets;  // inputs shifted by one
  std::size_t step = 0;
};

enum class Split { train, eval };

/// Windows drawn uniformly from one split; a pure function of (seed, step).
TokenBatch sample_token_batch(const CharCorpus& corpus, Split split, std::size_t batch, std::size_t seq,
                              std::uint64_t seed, std::size_t step);

struct SinusoidTerm {
  std::vector<double> direction;  // length input_dim
  double frequency = 1.0;         // cycles per unit along direction
  double amplitude = 0.0;
  double phase = 0.0;

  double evaluate(const double* x) const;
};

struct SpectralTarget {
  std::size_t input_dim = 1;
  std::vector<double> linear;         // smooth: linear coefficients
  double quadratic = 0.0;             // smooth: quadratic * |x|^2
  std::vector<SinusoidTerm> smooth;   // smooth: low-frequency terms
  std::vector<SinusoidTerm> residual; // high-frequency terms, amplitude <= 0.2 each
  double noise_std = 0.0;

  double smooth_part(const double* x) const;
  double residual_part(const double* x) const;
  double value(const double* x) const { return smooth_part(x) + residual_part(x); }
  void validate() const;
};

struct SpectralSpec {
  std::size_t input_dim = 1;
  std::size_t low_terms = 2;
  std::size_t high_terms = 3;
  double low_max_frequency = 0.5;
  double high_min_frequency = 3.0;
  double high_max_frequency = 6.0;
  double residual_amplitude = 0.15;
  double noise_std = 0.0;
};

inline constexpr double kMaxResidualAmplitude = 0.2;

/// Draws a concrete target from the spec.
SpectralTarget make_spectral_target(const SpectralSpec& spec, std::uint64_t seed);

struct RegressionBatch {
  std::size_t n = 0;
  std::size_t input_dim = 0;
  std::vector<double> inputs;   // n * input_dim, uniform on [-1, 1]
  std::vector<double> targets;  // n
  std::size_t step = 0;
};

/// targets = smooth(x) + residual(x) + N(0, noise_std^2)
RegressionBatch gen_spectral_batch(const SpectralTarget& target, std::size_t n, std::uint64_t seed);

/// lambda * a + (1 - lambda) * b on inputs and targets.
RegressionBatch mixup_blend(const RegressionBatch& a, const RegressionBatch& b, double lambda);

/// Mixup partner: the batch with its rows permuted by `seed`.
RegressionBatch shuffled(const RegressionBatch& batch, std::uint64_t seed);

/// Errors of predictions against the full target and its two components.
struct SpectralDiagnostics {
  double mse_full = 0.0;
  double mse_vs_smooth = 0.0;
  /// Fraction of residual variance explained by (prediction - smooth).
  double residual_explained = 0.0;
};

SpectralDiagnostics spectral_diagnostics(const SpectralTarget& target, const RegressionBatch& batch,
                                         const std::vector<double>& predictions);

/// Seeds for training batches and the eval set come from disjoint salts.
std::uint64_t train_batch_seed(std::uint64_t seed, std::size_t step);
std::uint64_t eval_set_seed(std::uint64_t seed);

}  // namespace noble
