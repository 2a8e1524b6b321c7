#include "noble/tasks.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

#include "noble/rng.hpp"

namespace noble {

namespace {

constexpr std::uint64_t kSaltSource = 11;
constexpr std::uint64_t kSaltStream = 12;
constexpr std::uint64_t kSaltTrain = 21;
constexpr std::uint64_t kSaltEval = 22;
constexpr std::uint64_t kSaltTokenTrain = 31;
constexpr std::uint64_t kSaltTokenEval = 32;

std::vector<double> dirichlet_row(std::size_t n, double concentration, Rng& rng) {
  std::gamma_distribution<double> gamma(concentration, 1.0);
  std::vector<double> row(n);
  double total = 0.0;
  for (auto& v : row) {
    v = gamma(rng);
    total += v;
  }
  if (total <= 0.0) {
    // every draw underflowed; fall back to a point mass
    std::fill(row.begin(), row.end(), 0.0);
    row[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)] = 1.0;
    return row;
  }
  for (auto& v : row) v /= total;
  return row;
}

std::size_t sample_categorical(const double* probs, std::size_t n, Rng& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  double cum = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    cum += probs[i];
    if (u < cum) return i;
  }
  return n - 1;
}

}  // namespace

void CorpusSpec::validate() const {
  if (vocab_size < 2 || vocab_size > 256) throw std::invalid_argument("CorpusSpec: vocab_size must be in [2, 256]");
  if (order != 0 && order != 2) throw std::invalid_argument("CorpusSpec: order must be 0 or 2");
  if (order == 2 && !(concentration > 0.0)) throw std::invalid_argument("CorpusSpec: concentration must be positive");
  if (train_chars == 0 || eval_chars == 0) throw std::invalid_argument("CorpusSpec: empty source");
}

std::uint64_t CharCorpus::hash() const {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a
  auto feed = [&h](const std::vector<std::uint8_t>& bytes) {
    for (auto b : bytes) {
      h ^= b;
      h *= 1099511628211ull;
    }
  };
  feed(train);
  feed(eval);
  return h;
}

double order2_entropy_rate(const std::vector<double>& transitions, std::size_t vocab) {
  const std::size_t pairs = vocab * vocab;
  if (transitions.size() != pairs * vocab) throw std::invalid_argument("order2_entropy_rate: table size mismatch");
  std::vector<double> pi(pairs, 1.0 / static_cast<double>(pairs)), next(pairs);
  for (int iter = 0; iter < 100000; ++iter) {
    std::fill(next.begin(), next.end(), 0.0);
    for (std::size_t ab = 0; ab < pairs; ++ab) {
      const std::size_t b = ab % vocab;
      for (std::size_t c = 0; c < vocab; ++c) next[b * vocab + c] += pi[ab] * transitions[ab * vocab + c];
    }
    // Lazy step (average with the previous iterate) avoids oscillation on periodic chains.
    double delta = 0.0;
    for (std::size_t i = 0; i < pairs; ++i) {
      const double lazy = 0.5 * (pi[i] + next[i]);
      delta += std::abs(lazy - pi[i]);
      pi[i] = lazy;
    }
    if (delta < 1e-15) break;
  }
  double rate = 0.0;
  for (std::size_t ab = 0; ab < pairs; ++ab) {
    double h = 0.0;
    for (std::size_t c = 0; c < vocab; ++c) {
      const double p = transitions[ab * vocab + c];
      if (p > 0.0) h -= p * std::log(p);
    }
    rate += pi[ab] * h;
  }
  return rate;
}

CharCorpus gen_char_corpus(const CorpusSpec& spec, std::uint64_t seed) {
  spec.validate();
  const std::size_t v = spec.vocab_size;
  CharCorpus corpus;
  corpus.spec = spec;
  corpus.seed = seed;
  Rng stream_rng(mix_seed(seed, kSaltStream));
  const std::size_t total = spec.train_chars + spec.eval_chars;
  std::vector<std::uint8_t> stream(total);
  std::uniform_int_distribution<std::size_t> uniform(0, v - 1);

  if (spec.order == 0) {
    for (auto& s : stream) s = static_cast<std::uint8_t>(uniform(stream_rng));
    corpus.entropy_rate = std::log(static_cast<double>(v));
  } else {
    Rng source_rng(mix_seed(seed, kSaltSource));
    std::vector<double> table;
    table.reserve(v * v * v);
    for (std::size_t ab = 0; ab < v * v; ++ab) {
      auto row = dirichlet_row(v, spec.concentration, source_rng);
      table.insert(table.end(), row.begin(), row.end());
    }
    corpus.entropy_rate = order2_entropy_rate(table, v);
    std::size_t a = uniform(stream_rng), b = uniform(stream_rng);
    for (auto& s : stream) {
      const std::size_t c = sample_categorical(&table[(a * v + b) * v], v, stream_rng);
      s = static_cast<std::uint8_t>(c);
      a = b;
      b = c;
    }
  }
  corpus.train.assign(stream.begin(), stream.begin() + static_cast<std::ptrdiff_t>(spec.train_chars));
  corpus.eval.assign(stream.begin() + static_cast<std::ptrdiff_t>(spec.train_chars), stream.end());
  return corpus;
}

TokenBatch sample_token_batch(const CharCorpus& corpus, Split split, std::size_t batch, std::size_t seq,
                              std::uint64_t seed, std::size_t step) {
  const auto& source = split == Split::train ? corpus.train : corpus.eval;
  if (source.size() < seq + 1) {
    throw std::invalid_argument("sample_token_batch: split holds " + std::to_string(source.size()) +
                                " symbols, window needs " + std::to_string(seq + 1));
  }
  Rng rng(mix_seed(mix_seed(seed, split == Split::train ? kSaltTokenTrain : kSaltTokenEval), step));
  std::uniform_int_distribution<std::size_t> start_dist(0, source.size() - seq - 1);
  TokenBatch out{batch, seq, {}, {}, step};
  out.inputs.reserve(batch * seq);
  out.targets.reserve(batch * seq);
  for (std::size_t b = 0; b < batch; ++b) {
    const std::size_t start = start_dist(rng);
    for (std::size_t t = 0; t < seq; ++t) {
      out.inputs.push_back(source[start + t]);
      out.targets.push_back(source[start + t + 1]);
    }
  }
  return out;
}

double SinusoidTerm::evaluate(const double* x) const {
  double proj = 0.0;
  for (std::size_t i = 0; i < direction.size(); ++i) proj += direction[i] * x[i];
  return amplitude * std::sin(2.0 * std::numbers::pi * frequency * proj + phase);
}

double SpectralTarget::smooth_part(const double* x) const {
  double value = 0.0, norm2 = 0.0;
  for (std::size_t i = 0; i < input_dim; ++i) {
    if (i < linear.size()) value += linear[i] * x[i];
    norm2 += x[i] * x[i];
  }
  value += quadratic * norm2;
  for (const auto& term : smooth) value += term.evaluate(x);
  return value;
}

double SpectralTarget::residual_part(const double* x) const {
  double value = 0.0;
  for (const auto& term : residual) value += term.evaluate(x);
  return value;
}

void SpectralTarget::validate() const {
  if (input_dim == 0) throw std::invalid_argument("SpectralTarget: input_dim must be positive");
  for (const auto* terms : {&smooth, &residual}) {
    for (const auto& t : *terms) {
      if (t.direction.size() != input_dim) throw std::invalid_argument("SpectralTarget: term direction size mismatch");
    }
  }
  for (const auto& t : residual) {
    if (std::abs(t.amplitude) > kMaxResidualAmplitude) {
      throw std::invalid_argument("SpectralTarget: residual amplitude above " + std::to_string(kMaxResidualAmplitude));
    }
  }
  if (noise_std < 0.0) throw std::invalid_argument("SpectralTarget: noise_std must be non-negative");
}

SpectralTarget make_spectral_target(const SpectralSpec& spec, std::uint64_t seed) {
  if (spec.residual_amplitude > kMaxResidualAmplitude) {
    throw std::invalid_argument("make_spectral_target: residual_amplitude above " +
                                std::to_string(kMaxResidualAmplitude));
  }
  Rng rng(mix_seed(seed, kSaltSource));
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto direction = [&]() {
    std::vector<double> d(spec.input_dim);
    double norm = 0.0;
    while (norm < 1e-12) {
      norm = 0.0;
      for (auto& v : d) {
        v = normal(rng);
        norm += v * v;
      }
    }
    norm = std::sqrt(norm);
    for (auto& v : d) v /= norm;
    return d;
  };
  auto term = [&](double f_lo, double f_hi, double amplitude) {
    SinusoidTerm t;
    t.direction = direction();
    t.frequency = f_lo + (f_hi - f_lo) * unit(rng);
    t.amplitude = amplitude;
    t.phase = 2.0 * std::numbers::pi * unit(rng);
    return t;
  };

  SpectralTarget target;
  target.input_dim = spec.input_dim;
  target.noise_std = spec.noise_std;
  target.linear.resize(spec.input_dim);
  for (auto& c : target.linear) c = 0.5 * normal(rng);
  target.quadratic = 0.5 * normal(rng);
  for (std::size_t i = 0; i < spec.low_terms; ++i) {
    target.smooth.push_back(term(0.1, spec.low_max_frequency, 0.5 + 0.5 * unit(rng)));
  }
  for (std::size_t i = 0; i < spec.high_terms; ++i) {
    target.residual.push_back(term(spec.high_min_frequency, spec.high_max_frequency, spec.residual_amplitude));
  }
  target.validate();
  return target;
}

RegressionBatch gen_spectral_batch(const SpectralTarget& target, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("gen_spectral_batch: n must be at least 1");
  Rng rng(seed);
  std::uniform_real_distribution<double> coord(-1.0, 1.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  RegressionBatch batch{n, target.input_dim, std::vector<double>(n * target.input_dim), std::vector<double>(n), 0};
  for (std::size_t i = 0; i < n; ++i) {
    double* x = &batch.inputs[i * target.input_dim];
    for (std::size_t j = 0; j < target.input_dim; ++j) x[j] = coord(rng);
    double y = target.value(x);
    if (target.noise_std > 0.0) y += target.noise_std * noise(rng);
    batch.targets[i] = y;
  }
  return batch;
}

RegressionBatch mixup_blend(const RegressionBatch& a, const RegressionBatch& b, double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw std::invalid_argument("mixup_blend: lambda must lie in [0, 1]");
  if (a.n != b.n || a.input_dim != b.input_dim || a.inputs.size() != b.inputs.size() ||
      a.targets.size() != b.targets.size()) {
    throw std::invalid_argument("mixup_blend: batch shapes differ (" + std::to_string(a.n) + "x" +
                                std::to_string(a.input_dim) + " vs " + std::to_string(b.n) + "x" +
                                std::to_string(b.input_dim) + ")");
  }
  RegressionBatch out = a;
  // lambda == 1 and lambda == 0 reproduce a / b exactly.
  auto blend = [lambda](double x, double y) {
    if (lambda == 1.0) return x;
    if (lambda == 0.0) return y;
    return lambda * x + (1.0 - lambda) * y;
  };
  for (std::size_t i = 0; i < out.inputs.size(); ++i) out.inputs[i] = blend(a.inputs[i], b.inputs[i]);
  for (std::size_t i = 0; i < out.targets.size(); ++i) out.targets[i] = blend(a.targets[i], b.targets[i]);
  return out;
}

RegressionBatch shuffled(const RegressionBatch& batch, std::uint64_t seed) {
  std::vector<std::size_t> order(batch.n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  RegressionBatch out = batch;
  for (std::size_t i = 0; i < batch.n; ++i) {
    std::copy_n(&batch.inputs[order[i] * batch.input_dim], batch.input_dim, &out.inputs[i * batch.input_dim]);
    out.targets[i] = batch.targets[order[i]];
  }
  return out;
}

SpectralDiagnostics spectral_diagnostics(const SpectralTarget& target, const RegressionBatch& batch,
                                         const std::vector<double>& predictions) {
  if (predictions.size() != batch.n) throw std::invalid_argument("spectral_diagnostics: prediction count mismatch");
  SpectralDiagnostics diag;
  double res_mean = 0.0;
  std::vector<double> smooth(batch.n), residual(batch.n);
  for (std::size_t i = 0; i < batch.n; ++i) {
    const double* x = &batch.inputs[i * batch.input_dim];
    smooth[i] = target.smooth_part(x);
    residual[i] = target.residual_part(x);
    res_mean += residual[i];
  }
  res_mean /= static_cast<double>(batch.n);
  double res_var = 0.0, res_err = 0.0;
  for (std::size_t i = 0; i < batch.n; ++i) {
    const double full = smooth[i] + residual[i];
    diag.mse_full += (predictions[i] - full) * (predictions[i] - full);
    diag.mse_vs_smooth += (predictions[i] - smooth[i]) * (predictions[i] - smooth[i]);
    const double fitted_residual = predictions[i] - smooth[i];
    res_err += (fitted_residual - residual[i]) * (fitted_residual - residual[i]);
    res_var += (residual[i] - res_mean) * (residual[i] - res_mean);
  }
  const double n = static_cast<double>(batch.n);
  diag.mse_full /= n;
  diag.mse_vs_smooth /= n;
  diag.residual_explained = res_var > 0.0 ? 1.0 - res_err / res_var : 0.0;
  return diag;
}

std::uint64_t train_batch_seed(std::uint64_t seed, std::size_t step) {
  return mix_seed(mix_seed(seed, kSaltTrain), step);
}

std::uint64_t eval_set_seed(std::uint64_t seed) { return mix_seed(mix_seed(seed, kSaltEval), 0); }

}  // namespace noble
