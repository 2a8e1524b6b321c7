#include "noble/gradcheck_suite.hpp"

#include <random>
#include <stdexcept>

#include "noble/model.hpp"
#include "noble/noble_linear.hpp"
#include "noble/ops.hpp"
#include "noble/rng.hpp"

namespace noble {

namespace {

constexpr ActivationKind kAllKinds[] = {ActivationKind::identity,      ActivationKind::tanh,
                                        ActivationKind::leaky_relu,    ActivationKind::gelu,
                                        ActivationKind::cosine_1layer, ActivationKind::cosnet_2layer,
                                        ActivationKind::cosnet_3layer};

Tensor<double> uniform(Shape shape, double lo, double hi, Rng& rng) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor<double>::from(std::move(shape), std::move(v));
}

GradCheckCase check(std::string name, const ParameterList<double>& params, double tolerance,
                    const std::function<Tensor<double>()>& loss) {
  std::vector<Tensor<double>> tensors;
  for (const auto& p : params) tensors.push_back(p.tensor);
  GradCheckCase c{std::move(name), grad_check(loss, tensors), tolerance, {}};
  if (!params.empty()) c.worst_param_name = params[c.result.worst_param].name;
  return c;
}

GradCheckCase layer_case(ActivationKind kind, std::size_t rank) {
  NobleConfig cfg;
  cfg.d_in = 8;
  cfg.d_out = 10;
  cfg.rank = rank;
  cfg.activation = kind;
  cfg.up_init_scale = 1.0;  // make the branch carry real signal
  Rng rng(mix_seed(rank, static_cast<std::uint64_t>(kind)));
  const auto layer = NobleLinear<double>::init(cfg, rng);
  const auto x = uniform({4, cfg.d_in}, -1.0, 1.0, rng);
  const auto probe = uniform({4, cfg.d_out}, -1.0, 1.0, rng);
  ParameterList<double> params;
  layer.collect_parameters("layer", params);
  return check("noble." + std::string(to_string(kind)) + ".r" + std::to_string(rank), params, kLayerGradTolerance,
               [&] { return ops::sum(ops::mul(layer.forward(x), probe)); });
}

GradCheckCase model_case(bool with_branch) {
  TransformerConfig cfg;
  cfg.depth = 2;
  cfg.width = 16;
  cfg.n_heads = 2;
  cfg.vocab_size = 13;
  cfg.seq_len = 8;
  cfg.embed_init_std = 0.5;
  if (with_branch) {
    NobleConfig n;
    n.rank = 4;
    n.activation = ActivationKind::cosnet_2layer;
    n.up_init_scale = 1.0;
    cfg.noble = n;
  }
  Rng rng(with_branch ? 7 : 8);
  const auto model = Transformer<double>::init(cfg, rng);
  const std::size_t batch = 2, seq = cfg.seq_len;
  std::uniform_int_distribution<int> tok(0, static_cast<int>(cfg.vocab_size) - 1);
  std::vector<int> ids(batch * seq), targets(batch * seq);
  for (auto& t : ids) t = tok(rng);
  for (auto& t : targets) t = tok(rng);
  return check(with_branch ? "model.transformer.cosnet_2layer" : "model.transformer.baseline", model.parameters(),
               kModelGradTolerance, [&] { return model.loss(ids, targets, batch, seq); });
}

}  // namespace

GradCheckModule parse_gradcheck_module(std::string_view name) {
  if (name == "all") return GradCheckModule::all;
  if (name == "noble") return GradCheckModule::noble;
  if (name == "model") return GradCheckModule::model;
  throw std::invalid_argument("unknown gradcheck module '" + std::string(name) + "' (all, noble, model)");
}

std::vector<GradCheckCase> run_gradcheck_suite(GradCheckModule module) {
  std::vector<GradCheckCase> cases;
  if (module != GradCheckModule::model) {
    for (auto kind : kAllKinds) {
      for (std::size_t rank : {2, 4, 8}) cases.push_back(layer_case(kind, rank));
    }
  }
  if (module != GradCheckModule::noble) {
    cases.push_back(model_case(false));
    cases.push_back(model_case(true));
  }
  return cases;
}

}  // namespace noble
