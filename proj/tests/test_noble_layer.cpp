#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "noble/grad_check.hpp"
#include "noble/noble_linear.hpp"
#include "noble/ops.hpp"
#include "test_util.hpp"

using namespace noble;
using noble::testutil::backprop;
using noble::testutil::random_tensor;

namespace {

const ActivationKind kKinds[] = {ActivationKind::identity,      ActivationKind::tanh,
                                 ActivationKind::leaky_relu,    ActivationKind::gelu,
                                 ActivationKind::cosine_1layer, ActivationKind::cosnet_2layer,
                                 ActivationKind::cosnet_3layer};

NobleConfig make_cfg(std::size_t d_in, std::size_t d_out, std::size_t rank, ActivationKind kind) {
  NobleConfig c;
  c.d_in = d_in;
  c.d_out = d_out;
  c.rank = rank;
  c.activation = kind;
  return c;
}

template <typename Real>
double sample_std(std::span<const Real> v, double mean = 0.0) {
  double s = 0.0;
  for (auto x : v) s += (double(x) - mean) * (double(x) - mean);
  return std::sqrt(s / static_cast<double>(v.size()));
}

template <typename Real>
double frob(std::span<const Real> v) {
  double s = 0.0;
  for (auto x : v) s += double(x) * double(x);
  return std::sqrt(s);
}

}  // namespace

TEST(ActivationKind, NamesRoundTrip) {
  for (auto k : kKinds) EXPECT_EQ(parse_activation(to_string(k)), k);
  EXPECT_THROW(parse_activation("relu6"), std::invalid_argument);
}

TEST(ActivationKind, MixingMatrixCounts) {
  EXPECT_EQ(mixing_matrix_count(ActivationKind::cosnet_2layer), 1u);
  EXPECT_EQ(mixing_matrix_count(ActivationKind::cosnet_3layer), 2u);
  EXPECT_EQ(mixing_matrix_count(ActivationKind::cosine_1layer), 0u);
  EXPECT_EQ(mixing_matrix_count(ActivationKind::gelu), 0u);
  EXPECT_EQ(cosine_stage_count(ActivationKind::cosnet_3layer), 3u);
  EXPECT_EQ(cosine_stage_count(ActivationKind::tanh), 0u);
}

TEST(NobleConfig, Validation) {
  EXPECT_NO_THROW(make_cfg(8, 4, 4, ActivationKind::gelu).validate());
  EXPECT_THROW(make_cfg(8, 4, 5, ActivationKind::gelu).validate(), std::invalid_argument);
  EXPECT_THROW(make_cfg(8, 4, 0, ActivationKind::gelu).validate(), std::invalid_argument);
  auto c = make_cfg(8, 8, 2, ActivationKind::cosnet_2layer);
  c.omega_min = 1.3;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = make_cfg(8, 8, 2, ActivationKind::cosnet_2layer);
  c.omega_min = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = make_cfg(8, 8, 2, ActivationKind::cosnet_2layer);
  c.phase_lr_mult = -1.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(NobleConfig, Defaults) {
  NobleConfig c;
  EXPECT_EQ(c.up_init_scale, 0.01);
  EXPECT_EQ(c.main_init_scale, 0.5);
  EXPECT_EQ(c.lr_power, 0.3);
  EXPECT_EQ(c.mixing_lr_power, 0.45);
  EXPECT_EQ(c.omega_min, 0.8);
  EXPECT_EQ(c.omega_max, 1.2);
  EXPECT_EQ(c.phase_init_std, 0.1);
  EXPECT_EQ(c.freq_lr_mult, 3.0);
  EXPECT_EQ(c.phase_lr_mult, 5.0);
}

TEST(NobleInit, RejectsOversizedRank) {
  Rng rng(1);
  EXPECT_THROW(NobleLinear<float>::init(make_cfg(16, 8, 9, ActivationKind::tanh), rng), std::invalid_argument);
}

TEST(NobleInit, UpProjectionStd) {
  Rng rng(2);
  const auto layer = NobleLinear<float>::init(make_cfg(1024, 1024, 64, ActivationKind::cosnet_2layer), rng);
  ASSERT_EQ(layer.up().shape(), (Shape{64, 1024}));
  EXPECT_NEAR(sample_std<float>(layer.up().data()), 0.00125, 0.000125);
}

TEST(NobleInit, MainWeightIsHalfKaiming) {
  Rng rng(3);
  const auto layer = NobleLinear<float>::init(make_cfg(1024, 256, 64, ActivationKind::cosnet_2layer), rng);
  EXPECT_NEAR(sample_std<float>(layer.weight().data()), 0.015625, 0.0015625);
  for (float b : layer.bias().data()) EXPECT_EQ(b, 0.0f);
  // W_down ~ N(0, 1/d_in)
  EXPECT_NEAR(sample_std<float>(layer.down().data()), 1.0 / 32.0, 0.1 / 32.0);
}

TEST(NobleInit, CosineParameters) {
  Rng rng(4);
  auto layer = NobleLinear<double>::init(make_cfg(256, 256, 128, ActivationKind::cosnet_3layer), rng);
  auto& cn = layer.cosnet();
  ASSERT_EQ(cn.frequencies.size(), 3u);
  ASSERT_EQ(cn.phases.size(), 3u);
  ASSERT_EQ(cn.mixing.size(), 2u);
  for (const auto& w : cn.frequencies) {
    EXPECT_EQ(w.shape(), (Shape{128}));
    for (double v : w.data()) {
      EXPECT_GE(v, 0.8);
      EXPECT_LE(v, 1.2);
    }
  }
  std::vector<double> phases;
  for (const auto& p : cn.phases) phases.insert(phases.end(), p.data().begin(), p.data().end());
  EXPECT_NEAR(sample_std(std::span<const double>(phases)), 0.1, 0.015);
  const double bound = std::sqrt(6.0 / 256.0);
  for (const auto& m : cn.mixing) {
    EXPECT_EQ(m.shape(), (Shape{128, 128}));
    double max_abs = 0.0;
    for (double v : m.data()) max_abs = std::max(max_abs, std::abs(v));
    EXPECT_LE(max_abs, bound);
    EXPECT_GT(max_abs, 0.95 * bound);
  }
}

TEST(NobleInit, ShapesAndGradFlags) {
  Rng rng(5);
  for (auto kind : kKinds) {
    const auto layer = NobleLinear<float>::init(make_cfg(12, 10, 4, kind), rng);
    EXPECT_EQ(layer.weight().shape(), (Shape{12, 10}));
    EXPECT_EQ(layer.bias().shape(), (Shape{10}));
    EXPECT_EQ(layer.down().shape(), (Shape{12, 4}));
    EXPECT_EQ(layer.up().shape(), (Shape{4, 10}));
    ParameterList<float> params;
    layer.collect_parameters("p", params);
    std::set<std::string> names;
    for (const auto& p : params) {
      EXPECT_TRUE(p.tensor.requires_grad()) << p.name;
      names.insert(p.name);
    }
    EXPECT_EQ(names.size(), params.size());
    EXPECT_EQ(params.size(), 4 + 2 * cosine_stage_count(kind) + mixing_matrix_count(kind));
  }
}

TEST(NobleInit, SameSeedSameLayer) {
  Rng a(77), b(77);
  const auto la = NobleLinear<float>::init(make_cfg(16, 16, 8, ActivationKind::cosnet_2layer), a);
  const auto lb = NobleLinear<float>::init(make_cfg(16, 16, 8, ActivationKind::cosnet_2layer), b);
  ParameterList<float> pa, pb;
  la.collect_parameters("x", pa);
  lb.collect_parameters("x", pb);
  for (std::size_t i = 0; i < pa.size(); ++i) {
    EXPECT_TRUE(std::equal(pa[i].tensor.data().begin(), pa[i].tensor.data().end(), pb[i].tensor.data().begin()));
  }
}

TEST(NobleInit, LearningRateMultipliersAttached) {
  Rng rng(6);
  const auto layer = NobleLinear<double>::init(make_cfg(1024, 1024, 64, ActivationKind::cosnet_2layer), rng);
  ParameterList<double> params;
  layer.collect_parameters("l", params);
  for (const auto& p : params) {
    switch (p.tag) {
      case RoleTag::w_up: EXPECT_NEAR(p.lr_mult, std::pow(16.0, 0.6), 1e-12); break;
      case RoleTag::mixing_M: EXPECT_NEAR(p.lr_mult, std::pow(16.0, 0.45), 1e-12); break;
      case RoleTag::frequency: EXPECT_EQ(p.lr_mult, 3.0); break;
      case RoleTag::phase: EXPECT_EQ(p.lr_mult, 5.0); break;
      default: EXPECT_EQ(p.lr_mult, 1.0) << p.name;
    }
  }
}

template <typename Real>
void expect_zero_branch_is_plain() {
  Rng rng(9);
  for (auto kind : kKinds) {
    auto layer = NobleLinear<Real>::init(make_cfg(7, 5, 3, kind), rng);
    for (auto& v : layer.up().data()) v = 0;
    layer.bias().data()[1] = Real(0.25);
    const auto x = random_tensor<Real>({4, 7}, rng, -2, 2, false);
    const auto y = layer.forward(x);
    const auto plain = ops::add(ops::matmul(x, layer.weight()), layer.bias());
    for (std::size_t i = 0; i < y.numel(); ++i) EXPECT_EQ(y.data()[i], plain.data()[i]) << to_string(kind);
  }
}

TEST(NobleForward, ZeroUpProjectionIsExactlyPlain) {
  expect_zero_branch_is_plain<float>();
  expect_zero_branch_is_plain<double>();
}

TEST(NobleForward, IdentityFusesIntoMainWeight) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng rng(seed);
    auto cfg = make_cfg(9, 6, 3, ActivationKind::identity);
    cfg.up_init_scale = 1.0;
    const auto layer = NobleLinear<float>::init(cfg, rng);
    const auto x = random_tensor<float>({5, 9}, rng, -1, 1, false);
    const auto fused_w = ops::add(layer.weight(), ops::matmul(layer.down(), layer.up()));
    const auto fused = ops::add(ops::matmul(x, fused_w), layer.bias());
    EXPECT_LE(testutil::max_abs_diff<float>(layer.forward(x).data(), fused.data()), 1e-5);
  }
}

TEST(NobleForward, CosNetScalarExample) {
  Rng rng(1);
  auto layer = NobleLinear<double>::init(make_cfg(3, 4, 2, ActivationKind::cosnet_2layer), rng);
  for (auto& v : layer.weight().data()) v = 0;
  for (auto& v : layer.up().data()) v = 1;
  auto& cn = layer.cosnet();
  for (auto& w : cn.frequencies)
    for (auto& v : w.data()) v = 1;
  for (auto& p : cn.phases)
    for (auto& v : p.data()) v = 0;
  auto m = cn.mixing[0].data();
  m[0] = 1, m[1] = 0, m[2] = 0, m[3] = 1;
  const auto y = layer.forward(Tensor<double>::zeros({2, 3}));
  for (double v : y.data()) EXPECT_NEAR(v, 2.0 * std::cos(1.0), 1e-15);
  EXPECT_NEAR(y.data()[0], 1.0806, 1e-4);
}

TEST(NobleForward, ShapeMismatchRejected) {
  Rng rng(2);
  const auto layer = NobleLinear<float>::init(make_cfg(6, 4, 2, ActivationKind::gelu), rng);
  EXPECT_THROW(layer.forward(Tensor<float>::zeros({3, 5})), ShapeError);
}

TEST(NobleForward, BranchIsNegligibleAtInit) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const auto layer = NobleLinear<float>::init(make_cfg(256, 256, 64, ActivationKind::cosnet_2layer), rng);
    std::normal_distribution<float> n(0.0f, 1.0f);
    std::vector<float> xv(32 * 256);
    for (auto& v : xv) v = n(rng);
    const auto x = Tensor<float>::from({32, 256}, xv);
    const double ratio = frob<float>(layer.branch_forward(x).data()) / frob<float>(ops::matmul(x, layer.weight()).data());
    EXPECT_LE(ratio, 0.05) << "seed " << seed;
  }
}

TEST(NobleBackward, EveryParameterGetsGradient) {
  Rng rng(12);
  for (auto kind : kKinds) {
    auto cfg = make_cfg(8, 6, 4, kind);
    cfg.up_init_scale = 1.0;
    const auto layer = NobleLinear<double>::init(cfg, rng);
    const auto x = random_tensor<double>({5, 8}, rng, -1, 1, false);
    const auto probe = random_tensor<double>({5, 6}, rng, -1, 1, false);
    backprop<double>([&] { return ops::sum(ops::mul(layer.forward(x), probe)); });
    ParameterList<double> params;
    layer.collect_parameters("l", params);
    for (const auto& p : params) {
      ASSERT_TRUE(p.tensor.has_grad()) << p.name;
      double norm = 0.0;
      for (double g : p.tensor.grad()) norm += std::abs(g);
      EXPECT_GT(norm, 0.0) << to_string(kind) << " " << p.name;
    }
  }
}

TEST(NobleBackward, FullLayerGradCheck) {
  for (auto kind : kKinds) {
    auto cfg = make_cfg(6, 5, 3, kind);
    cfg.up_init_scale = 1.0;
    Rng rng(static_cast<std::uint64_t>(kind) + 40);
    const auto layer = NobleLinear<double>::init(cfg, rng);
    const auto x = random_tensor<double>({4, 6}, rng, -1, 1, false);
    const auto probe = random_tensor<double>({4, 5}, rng, -1, 1, false);
    ParameterList<double> params;
    layer.collect_parameters("l", params);
    std::vector<Tensor<double>> tensors;
    for (auto& p : params) tensors.push_back(p.tensor);
    const auto r = grad_check([&] { return ops::sum(ops::mul(layer.forward(x), probe)); }, tensors);
    EXPECT_LE(r.max_rel_error, 1e-6) << to_string(kind) << " worst " << params[r.worst_param].name;
  }
}

TEST(CosNetApply, Examples) {
  CosNetParams<double> p;
  p.frequencies = {Tensor<double>::full({3}, 1.0), Tensor<double>::full({3}, 1.0)};
  p.phases = {Tensor<double>::zeros({3}), Tensor<double>::zeros({3})};
  p.mixing = {Tensor<double>::from({3, 3}, {1, 0, 0, 0, 1, 0, 0, 0, 1})};
  const auto h = Tensor<double>::zeros({2, 3});
  const auto one = cosnet_apply(p, h, 1);
  const auto two = cosnet_apply(p, h, 2);
  for (double v : one.data()) EXPECT_EQ(v, 1.0);
  for (double v : two.data()) EXPECT_NEAR(v, 0.5403, 1e-4);
  EXPECT_THROW(cosnet_apply(p, h, 3), std::invalid_argument);
}

TEST(CosNetApply, MixingActsOnEachRow) {
  CosNetParams<double> p;
  p.frequencies = {Tensor<double>::full({2}, 1.0), Tensor<double>::full({2}, 1.0)};
  p.phases = {Tensor<double>::zeros({2}), Tensor<double>::zeros({2})};
  p.mixing = {Tensor<double>::from({2, 2}, {1, 2, 3, 4})};
  const auto h = Tensor<double>::from({1, 2}, {0.3, -0.8});
  const double c0 = std::cos(0.3), c1 = std::cos(-0.8);
  // M . c
  const auto y = cosnet_apply(p, h, 2);
  EXPECT_NEAR(y.data()[0], std::cos(1 * c0 + 2 * c1), 1e-15);
  EXPECT_NEAR(y.data()[1], std::cos(3 * c0 + 4 * c1), 1e-15);
}

TEST(CosNetApply, OutputsStayInUnitInterval) {
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t r = 1 + trial % 6;
    const std::size_t depth = 1 + trial % 3;
    CosNetParams<double> p;
    for (std::size_t s = 0; s < depth; ++s) {
      p.frequencies.push_back(random_tensor<double>({r}, rng, -50, 50, false));
      p.phases.push_back(random_tensor<double>({r}, rng, -10, 10, false));
      if (s + 1 < depth) p.mixing.push_back(random_tensor<double>({r, r}, rng, -100, 100, false));
    }
    const auto h = random_tensor<double>({4, r}, rng, -1e4, 1e4, false);
    const auto y = cosnet_apply(p, h, depth);
    for (double v : y.data()) {
      EXPECT_GE(v, -1.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(BranchParamCount, ClosedForm) {
  EXPECT_EQ(branch_param_count(make_cfg(1024, 1024, 64, ActivationKind::cosnet_2layer)), 135424u);
  EXPECT_EQ(branch_param_count(make_cfg(2, 2, 1, ActivationKind::identity)), 4u);
  for (std::size_t r : {1u, 4u, 16u}) {
    const auto id = branch_param_count(make_cfg(32, 48, r, ActivationKind::identity));
    EXPECT_EQ(branch_param_count(make_cfg(32, 48, r, ActivationKind::cosine_1layer)), id + 2 * r);
    EXPECT_EQ(branch_param_count(make_cfg(32, 48, r, ActivationKind::cosnet_3layer)), id + 2 * r * r + 6 * r);
    EXPECT_EQ(branch_param_count(make_cfg(32, 48, r, ActivationKind::gelu)), id);
  }
}

TEST(BranchParamCount, MatchesAllocatedLayer) {
  Rng rng(3);
  for (auto kind : kKinds) {
    const auto cfg = make_cfg(20, 12, 5, kind);
    const auto layer = NobleLinear<float>::init(cfg, rng);
    EXPECT_EQ(layer.branch_param_count(), branch_param_count(cfg));
    EXPECT_EQ(layer.main_param_count(), 20u * 12u + 12u);
  }
}
