#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "../fixtures.hpp"
#include "reef/baselines.hpp"
#include "reef/transforms.hpp"

namespace fs = std::filesystem;
using reef::Matrix;
using reef::WeightBundle;

namespace {

WeightBundle random_bundle(std::uint64_t seed, std::size_t rows = 64, std::size_t cols = 64) {
  reef::Rng rng(seed);
  WeightBundle b;
  b.model_id = "m" + std::to_string(seed);
  b.matrices = {fixtures::random_matrix(rows, cols, rng), fixtures::random_matrix(1, cols, rng)};
  b.last_pair = std::make_pair(fixtures::random_matrix(32, 64, rng), fixtures::random_matrix(32, 64, rng));
  return b;
}

WeightBundle permuted_columns(const WeightBundle& a, std::uint64_t seed) {
  WeightBundle b = a;
  for (std::size_t i = 0; i < b.matrices.size(); ++i)
    b.matrices[i] =
        reef::permute_columns(a.matrices[i], reef::Permutation::random(a.matrices[i].cols(), reef::mix_seed(seed, i)));
  return b;
}

TEST(Pcs, SelfIsOne) {
  const auto a = random_bundle(1);
  EXPECT_NEAR(reef::pcs(a, a).value, 1.0, 1e-12);
  EXPECT_FALSE(reef::pcs(a, a).flag);
}

TEST(Pcs, ScaleInvariant) {
  const auto a = random_bundle(2);
  WeightBundle b = a;
  for (auto& m : b.matrices) m = reef::scale_matrix(m, 0.8);
  EXPECT_NEAR(reef::pcs(a, b).value, 1.0, 1e-9);
}

TEST(Pcs, ColumnPermutationDestroysSimilarity) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto a = random_bundle(100 + seed);
    EXPECT_LE(std::abs(reef::pcs(a, permuted_columns(a, seed)).value), 0.1) << seed;
  }
}

TEST(Pcs, ShapeIncompatibleIsFlaggedZero) {
  const auto a = random_bundle(3);
  auto b = a;
  b.matrices[0] = reef::select_columns(a.matrices[0], reef::sample_columns(64, 0.5, 1));
  const auto s = reef::pcs(a, b);
  EXPECT_EQ(s.value, 0.0);
  EXPECT_EQ(s.flag, "shape-incompatible");
}

TEST(Ics, SelfIsOneAndCoupledPermutationCancels) {
  const auto a = random_bundle(4);
  EXPECT_NEAR(reef::ics(a, a).value, 1.0, 1e-12);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    WeightBundle b = a;
    const auto p = reef::Permutation::random(64, seed);
    b.last_pair = std::make_pair(reef::permute_columns(a.last_pair->first, p),
                                 reef::permute_columns(a.last_pair->second, p));
    EXPECT_NEAR(reef::ics(a, b).value, 1.0, 1e-9);
  }
}

TEST(Ics, IndependentBundlesAreDissimilar) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    EXPECT_LE(std::abs(reef::ics(random_bundle(200 + seed), random_bundle(300 + seed)).value), 0.15);
  }
}

TEST(Ics, PermutingOneFactorBreaksInvariance) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto a = random_bundle(400 + seed);
    WeightBundle b = a;
    b.last_pair->first = reef::permute_columns(a.last_pair->first, reef::Permutation::random(64, seed));
    EXPECT_LT(reef::ics(a, b).value, 0.5);
  }
}

TEST(Ics, ShapeMismatchAndMissingPair) {
  const auto a = random_bundle(5);
  WeightBundle b = a;
  reef::Rng rng(9);
  b.last_pair = std::make_pair(fixtures::random_matrix(16, 64, rng), fixtures::random_matrix(32, 64, rng));
  EXPECT_EQ(reef::ics(a, b).flag, "shape-incompatible");
  WeightBundle none = a;
  none.last_pair.reset();
  EXPECT_THROW(reef::ics(a, none), reef::Error);
  WeightBundle bad = a;
  bad.last_pair->second = fixtures::random_matrix(32, 63, rng);
  EXPECT_THROW(reef::ics(a, bad), reef::Error);
}

TEST(Logits, SelfNoiseAndVocab) {
  reef::Rng rng(6);
  const reef::LogitsMatrix a{"a", fixtures::random_matrix(20, 100, rng)};
  EXPECT_NEAR(reef::logits_similarity(a, a).value, 1.0, 1e-12);
  // Noise seeds stay clear of 6: a noise stream equal to the data stream
  // would only rescale the rows.
  for (std::uint64_t seed = 100; seed < 110; ++seed) {
    const reef::LogitsMatrix b{"b", reef::add_noise(a.values, 0.05, seed)};
    const double v = reef::logits_similarity(a, b).value;
    EXPECT_GT(v, 0.9);
    EXPECT_LT(v, 1.0);
  }
  const reef::LogitsMatrix wide{"w", fixtures::random_matrix(20, 120, rng)};
  const auto s = reef::logits_similarity(a, wide);
  EXPECT_EQ(s.value, 0.0);
  EXPECT_EQ(s.flag, "vocab-incompatible");
  const reef::LogitsMatrix shorter{"s", fixtures::random_matrix(19, 100, rng)};
  EXPECT_THROW(reef::logits_similarity(a, shorter), reef::IncomparableError);
}

TEST(BaselineProperties, ValuesInRange) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto a = random_bundle(500 + seed);
    const auto b = random_bundle(600 + seed);
    for (double v : {reef::pcs(a, b).value, reef::ics(a, b).value}) {
      EXPECT_GE(v, -1.0);
      EXPECT_LE(v, 1.0);
    }
  }
}

TEST(BaselineManifest, LoadsBundleFromContainerFiles) {
  const fs::path dir = fs::temp_directory_path() / "reef_manifest_test";
  fs::create_directories(dir);
  const auto a = random_bundle(7);
  reef::write_tensor(dir / "w0.reef", {"m", "", 0, a.matrices[0]});
  reef::write_tensor(dir / "b0.reef", {"m", "", 0, a.matrices[1]});
  reef::write_tensor(dir / "la.reef", {"m", "", 0, a.last_pair->first});
  reef::write_tensor(dir / "lb.reef", {"m", "", 0, a.last_pair->second});
  std::ofstream(dir / "bundle.txt") << "# weights\nmodel_id=m7\nmatrix=w0.reef\nmatrix=b0.reef\nlast_a=la.reef\nlast_b=lb.reef\n";
  const auto loaded = reef::load_weight_bundle(dir / "bundle.txt");
  EXPECT_EQ(loaded.model_id, "m7");
  ASSERT_EQ(loaded.matrices.size(), 2u);
  EXPECT_EQ(loaded.matrices[1].rows(), 1u);
  EXPECT_NEAR(reef::pcs(loaded, a).value, 1.0, 1e-6);
  EXPECT_NEAR(reef::ics(loaded, a).value, 1.0, 1e-6);
  std::ofstream(dir / "bad.txt") << "weights=w0.reef\n";
  EXPECT_THROW(reef::load_weight_bundle(dir / "bad.txt"), reef::Error);
  fs::remove_all(dir);
}

}  // namespace
