#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "../fixtures.hpp"
#include "reef/cka.hpp"
#include "reef/transforms.hpp"

using reef::ActivationMatrix;
using reef::KernelSpec;
using reef::Matrix;
using reef::Permutation;

namespace {

ActivationMatrix random_activation(std::size_t m, std::size_t p, std::uint64_t seed) {
  reef::Rng rng(seed);
  return ActivationMatrix("victim", 0, fixtures::random_matrix(m, p, rng));
}

TEST(Permutation, RejectsNonBijection) {
  EXPECT_THROW(Permutation({0, 0, 1}), reef::Error);
  EXPECT_THROW(Permutation({0, 3}), reef::Error);
  EXPECT_NO_THROW(Permutation({2, 0, 1}));
}

TEST(PermuteColumns, IdentityLeavesMatrix) {
  const auto x = random_activation(5, 4, 1);
  EXPECT_EQ(reef::permute_columns(x, Permutation::identity(4)).data(), x.data());
}

TEST(PermuteColumns, Swap) {
  EXPECT_EQ(reef::permute_columns(Matrix{{1, 2}, {3, 4}}, Permutation({1, 0})), (Matrix{{2, 1}, {4, 3}}));
}

TEST(PermuteColumns, SeededAndInvariantUnderCka) {
  const auto x = random_activation(30, 12, 2);
  const auto a = reef::permute_columns(x, std::nullopt, 99);
  const auto b = reef::permute_columns(x, std::nullopt, 99);
  EXPECT_EQ(a, b);
  EXPECT_NE(a.data(), x.data());
  EXPECT_NEAR(reef::cka(x, a, KernelSpec::linear()), 1.0, 1e-9);
  EXPECT_NE(a.model_id(), x.model_id());
}

TEST(PermuteColumns, Errors) {
  const auto x = random_activation(5, 4, 3);
  EXPECT_THROW(reef::permute_columns(x, Permutation::identity(3)), reef::Error);
  EXPECT_THROW(reef::permute_columns(x, std::nullopt, std::nullopt), reef::Error);
}

TEST(PermuteColumns, InverseRestores) {
  reef::Rng rng(4);
  for (int t = 0; t < 10; ++t) {
    const Matrix x = fixtures::random_matrix(4, 1 + rng.below(20), rng);
    const auto p = Permutation::random(x.cols(), rng.next());
    EXPECT_EQ(reef::permute_columns(reef::permute_columns(x, p), p.inverse()), x);
  }
}

TEST(ScaleMatrix, UnitFactorAndInvariance) {
  const auto x = random_activation(25, 7, 5);
  EXPECT_EQ(reef::scale_matrix(x, 1.0).data(), x.data());
  EXPECT_NEAR(reef::cka(x, reef::scale_matrix(x, 0.8), KernelSpec::linear()), 1.0, 1e-9);
  EXPECT_THROW(reef::scale_matrix(x, -1.0), reef::Error);
  EXPECT_THROW(reef::scale_matrix(x, 0.0), reef::Error);
}

TEST(SubsampleColumns, FullRatioIsIdentity) {
  const auto x = random_activation(5, 10, 6);
  EXPECT_EQ(reef::subsample_columns(x, 1.0, 1).data(), x.data());
}

TEST(SubsampleColumns, HalfKeepsOriginalColumnsInOrder) {
  Matrix x(3, 10);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 10; ++j) x(i, j) = static_cast<double>(10 * i + j);
  const auto out = reef::subsample_columns(ActivationMatrix("v", 0, x), 0.5, 7);
  ASSERT_EQ(out.p(), 5u);
  double prev = -1.0;
  for (std::size_t j = 0; j < 5; ++j) {
    const double v = out.data()(0, j);
    EXPECT_GT(v, prev);
    prev = v;
    for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(out.data()(i, j), v + 10.0 * static_cast<double>(i));
  }
}

TEST(SubsampleColumns, RatioBounds) {
  const auto x = random_activation(5, 10, 8);
  EXPECT_THROW(reef::subsample_columns(x, 0.0, 1), reef::Error);
  EXPECT_THROW(reef::subsample_columns(x, 1.5, 1), reef::Error);
  EXPECT_EQ(reef::subsample_columns(x, 0.01, 1).p(), 1u);
}

TEST(SubsampleColumns, SubsetPropertyRandom) {
  reef::Rng rng(9);
  for (int t = 0; t < 20; ++t) {
    const std::size_t p = 1 + rng.below(50);
    const double r = 0.01 + 0.99 * rng.uniform();
    const auto cols = reef::sample_columns(p, r, rng.next());
    EXPECT_EQ(cols.size(), std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(r * p))));
    EXPECT_TRUE(std::is_sorted(cols.begin(), cols.end()));
    EXPECT_EQ(std::adjacent_find(cols.begin(), cols.end()), cols.end());
    for (auto c : cols) EXPECT_LT(c, p);
  }
}

TEST(SubsampleColumns, PrunedVictimKeepsHighCka) {
  const auto fam = reef::gen_family(fixtures::pruning_config(fixtures::kFamilySeeds[0]));
  for (const auto& layer : fam.victim) {
    const auto pruned = reef::subsample_columns(layer, 0.1, 17);
    EXPECT_EQ(pruned.p(), 51u);
    EXPECT_GE(reef::cka(layer, pruned, KernelSpec::linear()), 0.8);
  }
}

TEST(AddNoise, ZeroTauIsBitExact) {
  Matrix x{{-0.0, 1.0}, {2.0, -3.5}};
  const auto a = ActivationMatrix("v", 0, x);
  const auto out = reef::add_noise(a, 0.0, 3);
  EXPECT_EQ(std::signbit(out.data()(0, 0)), true);
  EXPECT_EQ(out, a);
}

TEST(AddNoise, MonotoneDegradation) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto x = random_activation(40, 8, 100 + seed);
    const double small = reef::cka(x, reef::add_noise(x, 0.1, seed), KernelSpec::linear());
    const double large = reef::cka(x, reef::add_noise(x, 1.0, seed), KernelSpec::linear());
    EXPECT_GE(small, large) << "seed " << seed;
  }
}

TEST(AddNoise, SeedsDiffer) {
  const auto x = random_activation(10, 3, 11);
  const auto a = reef::add_noise(x, 0.1, 1);
  const auto b = reef::add_noise(x, 0.1, 2);
  EXPECT_NE(a.data(), b.data());
  EXPECT_TRUE(reef::all_finite(a.data()));
  EXPECT_TRUE(reef::all_finite(b.data()));
  EXPECT_THROW(reef::add_noise(x, -0.1, 1), reef::Error);
}

TEST(TransformProperties, PermuteAndScaleLeaveCkaFixed) {
  reef::Rng rng(12);
  for (int t = 0; t < 20; ++t) {
    const auto x = random_activation(3 + rng.below(25), 1 + rng.below(20), rng.next());
    const auto y = random_activation(x.m(), 1 + rng.below(20), rng.next());
    for (const auto& k : {KernelSpec::linear(), KernelSpec::rbf()}) {
      const double base = reef::cka(x, y, k);
      const auto xt = reef::scale_matrix(reef::permute_columns(x, std::nullopt, rng.next()), 0.05 + rng.uniform());
      EXPECT_NEAR(reef::cka(xt, y, k), base, 1e-8);
    }
  }
}

}  // namespace
