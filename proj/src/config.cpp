#include "noble/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

namespace noble {

namespace pt = boost::property_tree;

std::string_view to_string(TaskKind kind) { return kind == TaskKind::spectral ? "spectral" : "markov_lm"; }
std::string_view to_string(ClockKind kind) { return kind == ClockKind::modeled ? "modeled" : "measured"; }

namespace {

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) parts.push_back(item);
  }
  return parts;
}

class Reader {
 public:
  explicit Reader(const pt::ptree& tree) : tree_(tree) {
    for (const auto& [section, body] : tree_) {
      if (body.empty() && !body.data().empty()) throw ConfigError("key outside a section: " + section);
      for (const auto& [key, _] : body) all_.insert(section + "." + key);
    }
  }

  std::optional<std::string> raw(const std::string& section, const std::string& key) {
    const std::string path = section + "." + key;
    seen_.insert(path);
    auto v = tree_.get_optional<std::string>(pt::ptree::path_type(path, '.'));
    if (!v) return std::nullopt;
    return trim(*v);
  }

  void read(const std::string& s, const std::string& k, std::string& out) {
    if (auto v = raw(s, k)) out = *v;
  }
  void read(const std::string& s, const std::string& k, std::size_t& out) {
    if (auto v = raw(s, k)) out = to_size(*v, s + "." + k);
  }
  void read(const std::string& s, const std::string& k, std::uint64_t& out, int) {
    if (auto v = raw(s, k)) out = to_size(*v, s + "." + k);
  }
  void read(const std::string& s, const std::string& k, double& out) {
    if (auto v = raw(s, k)) {
      try {
        std::size_t used = 0;
        out = std::stod(*v, &used);
        if (used != v->size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw ConfigError(s + "." + k + ": expected a number, got '" + *v + "'");
      }
    }
  }
  void read(const std::string& s, const std::string& k, bool& out) {
    if (auto v = raw(s, k)) {
      if (*v == "true" || *v == "1" || *v == "yes" || *v == "on") {
        out = true;
      } else if (*v == "false" || *v == "0" || *v == "no" || *v == "off") {
        out = false;
      } else {
        throw ConfigError(s + "." + k + ": expected a boolean, got '" + *v + "'");
      }
    }
  }

  void reject_unknown() const {
    for (const auto& path : all_) {
      if (!seen_.count(path)) throw ConfigError("unknown config key: " + path);
    }
  }

  static std::size_t to_size(const std::string& v, const std::string& where) {
    try {
      std::size_t used = 0;
      if (!v.empty() && v[0] == '-') throw std::invalid_argument("negative");
      const auto n = std::stoull(v, &used);
      if (used != v.size()) throw std::invalid_argument("trailing");
      return n;
    } catch (const std::exception&) {
      throw ConfigError(where + ": expected a non-negative integer, got '" + v + "'");
    }
  }

 private:
  const pt::ptree& tree_;
  std::set<std::string> all_;
  std::set<std::string> seen_;
};

// Fixed-format number printing for the snapshot.
std::string num(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

template <typename T>
std::string join(const std::vector<T>& values) {
  std::string s;
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (i) s += ",";
    if constexpr (std::is_same_v<T, ActivationKind>) {
      s += to_string(values[i]);
    } else {
      s += std::to_string(values[i]);
    }
  }
  return s;
}

}  // namespace

std::vector<std::size_t> parse_size_list(const std::string& text) {
  std::vector<std::size_t> out;
  for (const auto& p : split_list(text)) out.push_back(Reader::to_size(p, "list"));
  return out;
}

std::vector<ActivationKind> parse_activation_list(const std::string& text) {
  std::vector<ActivationKind> out;
  for (const auto& p : split_list(text)) out.push_back(parse_activation(p));
  return out;
}

void RunConfig::validate() const {
  if (name.empty() || name.find('/') != std::string::npos) throw ConfigError("run.name must be a plain file name");
  if (seeds.empty()) throw ConfigError("run.seeds: at least one seed is required");
  if (optim.total_steps <= optim.warmup) {
    throw ConfigError("optim.total_steps (" + std::to_string(optim.total_steps) + ") must exceed optim.warmup (" +
                      std::to_string(optim.warmup) + ")");
  }
  if (eval_every == 0 || optim.total_steps % eval_every != 0) {
    throw ConfigError("run.eval_every (" + std::to_string(eval_every) + ") must divide optim.total_steps (" +
                      std::to_string(optim.total_steps) + ")");
  }
  if (optim.batch_size == 0) throw ConfigError("optim.batch_size must be positive");
  if (!(optim.base_lr > 0.0)) throw ConfigError("optim.base_lr must be positive");
  if (optim.weight_decay < 0.0) throw ConfigError("optim.weight_decay must be non-negative");
  if (mixup && !(mixup_alpha > 0.0)) throw ConfigError("spectral.mixup_alpha must be positive");
  try {
    if (task == TaskKind::markov_lm) {
      corpus.validate();
      auto t = transformer;
      t.vocab_size = corpus.vocab_size;
      if (noble_enabled) t.noble = noble;
      t.validate();
      if (eval_batches == 0) throw std::invalid_argument("corpus.eval_batches must be positive");
      if (corpus.eval_chars <= t.seq_len) throw std::invalid_argument("corpus.eval_chars must exceed seq_len");
    } else {
      auto r = regression;
      r.input_dim = spectral.input_dim;
      if (noble_enabled) r.noble = noble;
      r.validate();
      make_spectral_target(spectral, target_seed).validate();
      if (eval_points == 0) throw std::invalid_argument("spectral.eval_points must be positive");
    }
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

std::filesystem::path RunConfig::run_dir() const {
  if (const char* root = std::getenv(kOutputRootEnv); root && *root) return std::filesystem::path(root) / name;
  return output_root / name;
}

RunConfig parse_run_config(const std::string& text) {
  // ini_parser only knows ';' comments
  std::stringstream cleaned;
  {
    std::stringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
      const auto t = trim(line);
      cleaned << (t.rfind('#', 0) == 0 ? std::string() : line) << '\n';
    }
  }
  pt::ptree tree;
  try {
    pt::read_ini(cleaned, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config syntax error: " + e.message() + " (line " + std::to_string(e.line()) + ")");
  }

  RunConfig c;
  Reader r(tree);
  std::string s;

  r.read("run", "name", c.name);
  s = std::string(to_string(c.task));
  r.read("run", "task", s);
  if (s == "spectral") {
    c.task = TaskKind::spectral;
  } else if (s == "markov_lm") {
    c.task = TaskKind::markov_lm;
  } else {
    throw ConfigError("run.task: unknown task '" + s + "'");
  }
  if (auto v = r.raw("run", "seeds")) {
    c.seeds.clear();
    for (auto n : parse_size_list(*v)) c.seeds.push_back(n);
  }
  if (auto v = r.raw("run", "output_root")) c.output_root = *v;
  r.read("run", "eval_every", c.eval_every);
  s = std::string(to_string(c.clock));
  r.read("run", "clock", s);
  if (s == "modeled") {
    c.clock = ClockKind::modeled;
  } else if (s == "measured") {
    c.clock = ClockKind::measured;
  } else {
    throw ConfigError("run.clock: expected modeled or measured, got '" + s + "'");
  }
  r.read("run", "save_checkpoints", c.save_checkpoints);

  auto& o = c.optim;
  r.read("optim", "base_lr", o.base_lr);
  r.read("optim", "warmup", o.warmup);
  r.read("optim", "total_steps", o.total_steps);
  r.read("optim", "batch_size", o.batch_size);
  r.read("optim", "weight_decay", o.weight_decay);
  r.read("optim", "beta1", o.beta1);
  r.read("optim", "beta2", o.beta2);
  r.read("optim", "eps", o.eps);

  auto& t = c.transformer;
  r.read("model", "depth", t.depth);
  r.read("model", "width", t.width);
  r.read("model", "n_heads", t.n_heads);
  r.read("model", "seq_len", t.seq_len);
  r.read("model", "ffn_hidden", t.ffn_hidden);
  r.read("model", "tie_embeddings", t.tie_embeddings);
  r.read("model", "main_init_scale", t.main_init_scale);
  r.read("model", "embed_init_std", t.embed_init_std);

  auto& g = c.regression;
  r.read("regression", "width", g.width);
  r.read("regression", "hidden_layers", g.hidden_layers);
  r.read("regression", "main_init_scale", g.main_init_scale);

  auto& n = c.noble;
  r.read("noble", "enabled", c.noble_enabled);
  if (auto v = r.raw("noble", "activation")) {
    try {
      n.activation = parse_activation(*v);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("noble.activation: ") + e.what());
    }
  }
  r.read("noble", "rank", n.rank);
  r.read("noble", "up_init_scale", n.up_init_scale);
  r.read("noble", "main_init_scale", n.main_init_scale);
  r.read("noble", "lr_power", n.lr_power);
  r.read("noble", "mixing_lr_power", n.mixing_lr_power);
  r.read("noble", "omega_min", n.omega_min);
  r.read("noble", "omega_max", n.omega_max);
  r.read("noble", "phase_init_std", n.phase_init_std);
  r.read("noble", "freq_lr_mult", n.freq_lr_mult);
  r.read("noble", "phase_lr_mult", n.phase_lr_mult);

  auto& cs = c.corpus;
  r.read("corpus", "vocab_size", cs.vocab_size);
  r.read("corpus", "order", cs.order);
  r.read("corpus", "concentration", cs.concentration);
  r.read("corpus", "train_chars", cs.train_chars);
  r.read("corpus", "eval_chars", cs.eval_chars);
  r.read("corpus", "seed", c.corpus_seed, 0);
  r.read("corpus", "eval_batches", c.eval_batches);

  auto& sp = c.spectral;
  r.read("spectral", "input_dim", sp.input_dim);
  r.read("spectral", "low_terms", sp.low_terms);
  r.read("spectral", "high_terms", sp.high_terms);
  r.read("spectral", "low_max_frequency", sp.low_max_frequency);
  r.read("spectral", "high_min_frequency", sp.high_min_frequency);
  r.read("spectral", "high_max_frequency", sp.high_max_frequency);
  r.read("spectral", "residual_amplitude", sp.residual_amplitude);
  r.read("spectral", "noise_std", sp.noise_std);
  r.read("spectral", "seed", c.target_seed, 0);
  r.read("spectral", "eval_points", c.eval_points);
  r.read("spectral", "mixup", c.mixup);
  r.read("spectral", "mixup_alpha", c.mixup_alpha);

  if (auto v = r.raw("sweep", "ranks")) c.sweep_ranks = parse_size_list(*v);
  if (auto v = r.raw("sweep", "activations")) {
    try {
      c.sweep_activations = parse_activation_list(*v);
    } catch (const std::exception& e) {
      throw ConfigError(std::string("sweep.activations: ") + e.what());
    }
  }

  r.reject_unknown();
  c.transformer.vocab_size = c.corpus.vocab_size;
  c.regression.input_dim = c.spectral.input_dim;
  c.validate();
  return c;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config(ss.str());
}

std::string config_snapshot(const RunConfig& c) {
  std::ostringstream os;
  std::vector<std::size_t> seeds(c.seeds.begin(), c.seeds.end());
  os << "[run]\n"
     << "name = " << c.name << "\n"
     << "task = " << to_string(c.task) << "\n"
     << "seeds = " << join(seeds) << "\n"
     << "output_root = " << c.output_root.string() << "\n"
     << "eval_every = " << c.eval_every << "\n"
     << "clock = " << to_string(c.clock) << "\n"
     << "save_checkpoints = " << (c.save_checkpoints ? "true" : "false") << "\n\n";
  const auto& o = c.optim;
  os << "[optim]\n"
     << "base_lr = " << num(o.base_lr) << "\n"
     << "warmup = " << o.warmup << "\n"
     << "total_steps = " << o.total_steps << "\n"
     << "batch_size = " << o.batch_size << "\n"
     << "weight_decay = " << num(o.weight_decay) << "\n"
     << "beta1 = " << num(o.beta1) << "\n"
     << "beta2 = " << num(o.beta2) << "\n"
     << "eps = " << num(o.eps) << "\n\n";
  const auto& t = c.transformer;
  os << "[model]\n"
     << "depth = " << t.depth << "\n"
     << "width = " << t.width << "\n"
     << "n_heads = " << t.n_heads << "\n"
     << "seq_len = " << t.seq_len << "\n"
     << "ffn_hidden = " << t.ffn_hidden << "\n"
     << "tie_embeddings = " << (t.tie_embeddings ? "true" : "false") << "\n"
     << "main_init_scale = " << num(t.main_init_scale) << "\n"
     << "embed_init_std = " << num(t.embed_init_std) << "\n\n";
  const auto& g = c.regression;
  os << "[regression]\n"
     << "width = " << g.width << "\n"
     << "hidden_layers = " << g.hidden_layers << "\n"
     << "main_init_scale = " << num(g.main_init_scale) << "\n\n";
  const auto& n = c.noble;
  os << "[noble]\n"
     << "enabled = " << (c.noble_enabled ? "true" : "false") << "\n"
     << "activation = " << to_string(n.activation) << "\n"
     << "rank = " << n.rank << "\n"
     << "up_init_scale = " << num(n.up_init_scale) << "\n"
     << "main_init_scale = " << num(n.main_init_scale) << "\n"
     << "lr_power = " << num(n.lr_power) << "\n"
     << "mixing_lr_power = " << num(n.mixing_lr_power) << "\n"
     << "omega_min = " << num(n.omega_min) << "\n"
     << "omega_max = " << num(n.omega_max) << "\n"
     << "phase_init_std = " << num(n.phase_init_std) << "\n"
     << "freq_lr_mult = " << num(n.freq_lr_mult) << "\n"
     << "phase_lr_mult = " << num(n.phase_lr_mult) << "\n\n";
  const auto& cs = c.corpus;
  os << "[corpus]\n"
     << "vocab_size = " << cs.vocab_size << "\n"
     << "order = " << cs.order << "\n"
     << "concentration = " << num(cs.concentration) << "\n"
     << "train_chars = " << cs.train_chars << "\n"
     << "eval_chars = " << cs.eval_chars << "\n"
     << "seed = " << c.corpus_seed << "\n"
     << "eval_batches = " << c.eval_batches << "\n\n";
  const auto& sp = c.spectral;
  os << "[spectral]\n"
     << "input_dim = " << sp.input_dim << "\n"
     << "low_terms = " << sp.low_terms << "\n"
     << "high_terms = " << sp.high_terms << "\n"
     << "low_max_frequency = " << num(sp.low_max_frequency) << "\n"
     << "high_min_frequency = " << num(sp.high_min_frequency) << "\n"
     << "high_max_frequency = " << num(sp.high_max_frequency) << "\n"
     << "residual_amplitude = " << num(sp.residual_amplitude) << "\n"
     << "noise_std = " << num(sp.noise_std) << "\n"
     << "seed = " << c.target_seed << "\n"
     << "eval_points = " << c.eval_points << "\n"
     << "mixup = " << (c.mixup ? "true" : "false") << "\n"
     << "mixup_alpha = " << num(c.mixup_alpha) << "\n\n";
  os << "[sweep]\n"
     << "ranks = " << join(c.sweep_ranks) << "\n"
     << "activations = " << join(c.sweep_activations) << "\n";
  return os.str();
}

std::string config_hash(const RunConfig& cfg) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : config_snapshot(cfg)) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

}  // namespace noble
