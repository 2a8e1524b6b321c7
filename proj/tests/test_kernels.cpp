#include <gtest/gtest.h>

#include <omp.h>

#include <random>
#include <vector>

#include "noble/kernels.hpp"
#include "noble/rng.hpp"

using namespace noble;
namespace ref = noble::kernels::reference;
namespace par = noble::kernels::parallel;

namespace {

template <typename Real>
std::vector<Real> random_vec(std::size_t n, Rng& rng) {
  std::uniform_real_distribution<double> d(-1.0, 1.0);
  std::vector<Real> v(n);
  for (auto& x : v) x = static_cast<Real>(d(rng));
  return v;
}

struct GemmShape {
  std::size_t m, k, n;
};

// Small shapes run serially; the large ones cross the parallel threshold.
const GemmShape kShapes[] = {{1, 1, 1}, {3, 5, 2}, {17, 9, 33}, {64, 64, 64}, {128, 96, 80}, {256, 32, 300}};

class ThreadCounts : public ::testing::TestWithParam<int> {
 protected:
  void SetUp() override {
    saved_ = omp_get_max_threads();
    omp_set_num_threads(GetParam());
  }
  void TearDown() override { omp_set_num_threads(saved_); }
  int saved_ = 1;
};

}  // namespace

TEST_P(ThreadCounts, GemmMatchesReferenceBitForBit) {
  Rng rng(42);
  for (const auto& s : kShapes) {
    for (bool acc : {false, true}) {
      const auto a = random_vec<float>(s.m * s.k, rng);
      const auto b = random_vec<float>(s.k * s.n, rng);
      const auto g = random_vec<float>(s.m * s.n, rng);
      const auto init_mn = random_vec<float>(s.m * s.n, rng);
      const auto init_kn = random_vec<float>(s.k * s.n, rng);
      const auto init_mk = random_vec<float>(s.m * s.k, rng);

      auto c1 = init_mn, c2 = init_mn;
      ref::gemm_nn<float>(a, b, c1, s.m, s.k, s.n, acc);
      par::gemm_nn<float>(a, b, c2, s.m, s.k, s.n, acc);
      EXPECT_EQ(c1, c2) << "nn " << s.m << "x" << s.k << "x" << s.n;

      auto d1 = init_kn, d2 = init_kn;
      ref::gemm_tn<float>(a, g, d1, s.m, s.k, s.n, acc);
      par::gemm_tn<float>(a, g, d2, s.m, s.k, s.n, acc);
      EXPECT_EQ(d1, d2) << "tn " << s.m << "x" << s.k << "x" << s.n;

      auto e1 = init_mk, e2 = init_mk;
      ref::gemm_nt<float>(g, b, e1, s.m, s.k, s.n, acc);
      par::gemm_nt<float>(g, b, e2, s.m, s.k, s.n, acc);
      EXPECT_EQ(e1, e2) << "nt " << s.m << "x" << s.k << "x" << s.n;
    }
  }
}

TEST_P(ThreadCounts, AttentionMatchesReferenceBitForBit) {
  Rng rng(7);
  for (kernels::AttentionDims dims : {kernels::AttentionDims{1, 1, 2}, kernels::AttentionDims{3, 5, 4},
                                      kernels::AttentionDims{16, 64, 16}, kernels::AttentionDims{8, 128, 32}}) {
    const std::size_t n = dims.groups * dims.seq * dims.head_dim;
    const std::size_t np = dims.groups * dims.seq * dims.seq;
    const auto q = random_vec<double>(n, rng), k = random_vec<double>(n, rng), v = random_vec<double>(n, rng);
    const auto dout = random_vec<double>(n, rng);
    std::vector<double> o1(n), o2(n), p1(np), p2(np);
    ref::attention_forward<double>(q, k, v, o1, p1, dims);
    par::attention_forward<double>(q, k, v, o2, p2, dims);
    EXPECT_EQ(o1, o2);
    EXPECT_EQ(p1, p2);

    std::vector<double> dq1(n), dk1(n), dv1(n), dq2(n), dk2(n), dv2(n);
    ref::attention_backward<double>(q, k, v, p1, dout, dq1, dk1, dv1, dims);
    par::attention_backward<double>(q, k, v, p2, dout, dq2, dk2, dv2, dims);
    EXPECT_EQ(dq1, dq2);
    EXPECT_EQ(dk1, dk2);
    EXPECT_EQ(dv1, dv2);
  }
}

INSTANTIATE_TEST_SUITE_P(Kernels, ThreadCounts, ::testing::Values(1, 2, 4));

TEST(ReferenceKernels, GemmSmallExample) {
  const std::vector<double> a{1, 2, 3, 4}, b{5, 6, 7, 8};
  std::vector<double> c(4, 0.0);
  ref::gemm_nn<double>(a, b, c, 2, 2, 2, false);
  EXPECT_EQ(c, (std::vector<double>{19, 22, 43, 50}));
  // a^T b
  ref::gemm_tn<double>(a, b, c, 2, 2, 2, false);
  EXPECT_EQ(c, (std::vector<double>{26, 30, 38, 44}));
  // a b^T
  ref::gemm_nt<double>(a, b, c, 2, 2, 2, false);
  EXPECT_EQ(c, (std::vector<double>{17, 23, 39, 53}));
  ref::gemm_nt<double>(a, b, c, 2, 2, 2, true);
  EXPECT_EQ(c, (std::vector<double>{34, 46, 78, 106}));
}

TEST(ReferenceKernels, AttentionRowsAreCausalDistributions) {
  Rng rng(3);
  const kernels::AttentionDims dims{2, 6, 4};
  const std::size_t n = dims.groups * dims.seq * dims.head_dim;
  const auto q = random_vec<double>(n, rng), k = random_vec<double>(n, rng), v = random_vec<double>(n, rng);
  std::vector<double> out(n), probs(dims.groups * dims.seq * dims.seq);
  ref::attention_forward<double>(q, k, v, out, probs, dims);
  for (std::size_t g = 0; g < dims.groups; ++g) {
    for (std::size_t i = 0; i < dims.seq; ++i) {
      double total = 0.0;
      for (std::size_t j = 0; j < dims.seq; ++j) {
        const double p = probs[(g * dims.seq + i) * dims.seq + j];
        if (j > i) EXPECT_EQ(p, 0.0);
        total += p;
      }
      EXPECT_NEAR(total, 1.0, 1e-12);
    }
  }
}

TEST(ReferenceKernels, ThreadQuery) { EXPECT_GE(kernels::max_threads(), 1); }
