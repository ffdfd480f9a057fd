#include <gtest/gtest.h>

#include <filesystem>
#include <set>

#include "../fixtures.hpp"
#include "reef/probe.hpp"
#include "reef/synth.hpp"
#include "reef/transforms.hpp"

using reef::ActivationMatrix;
using reef::Matrix;
using reef::ProbeArch;
using reef::TrainingMeta;

namespace {

ActivationMatrix gaussian_blob(std::size_t n, std::size_t p, double center, std::uint64_t seed, double spread = 1.0) {
  reef::Rng rng(seed);
  Matrix x(n, p);
  for (double& v : x.values()) v = center + spread * rng.normal();
  return ActivationMatrix("blob", 0, x);
}

TEST(BuildProbeDataset, FourToOneSplit) {
  const auto pos = gaussian_blob(80, 4, 1.0, 1);
  const auto neg = gaussian_blob(80, 4, -1.0, 2);
  const auto d = reef::build_probe_dataset(pos, neg, {4, 1}, 3);
  EXPECT_EQ(d.train_x.rows(), 128u);
  EXPECT_EQ(d.test_x.rows(), 32u);
  const auto positives = [](const std::vector<int>& y) { return std::count(y.begin(), y.end(), 1); };
  EXPECT_NEAR(static_cast<double>(positives(d.train_y)), 64.0, 1.0);
  EXPECT_NEAR(static_cast<double>(positives(d.test_y)), 16.0, 1.0);
  std::set<std::size_t> seen(d.train_index.begin(), d.train_index.end());
  for (auto i : d.test_index) EXPECT_FALSE(seen.count(i));
  // label agrees with source row
  for (std::size_t r = 0; r < d.train_index.size(); ++r) EXPECT_EQ(d.train_y[r], d.train_index[r] < 80 ? 1 : 0);
}

TEST(BuildProbeDataset, DimensionMismatch) {
  EXPECT_THROW(reef::build_probe_dataset(gaussian_blob(4, 16, 0, 1), gaussian_blob(4, 8, 0, 2), {4, 1}, 0),
               reef::Error);
}

TEST(BuildProbeDataset, Deterministic) {
  const auto pos = gaussian_blob(30, 3, 1.0, 1);
  const auto neg = gaussian_blob(30, 3, -1.0, 2);
  const auto a = reef::build_probe_dataset(pos, neg, {4, 1}, 9);
  const auto b = reef::build_probe_dataset(pos, neg, {4, 1}, 9);
  EXPECT_EQ(a.train_index, b.train_index);
  EXPECT_EQ(a.test_x, b.test_x);
}

TEST(TrainProbe, SeparableBlobs) {
  const auto pos = gaussian_blob(100, 2, 2.0, 1, 0.3);
  const auto neg = gaussian_blob(100, 2, -2.0, 2, 0.3);
  const auto d = reef::build_probe_dataset(pos, neg, {4, 1}, 0);
  for (auto arch : {ProbeArch::Linear, ProbeArch::Mlp}) {
    const auto model = reef::train_probe(d, arch, TrainingMeta{.seed = 1});
    EXPECT_GE(reef::eval_probe(model, d.train_x, d.train_y), 0.99);
    EXPECT_GE(reef::eval_probe(model, d.test_x, d.test_y), 0.99);
  }
}

TEST(TrainProbe, ShuffledLabelsAreChance) {
  const auto pos = gaussian_blob(200, 8, 0.0, 1);
  const auto neg = gaussian_blob(200, 8, 0.0, 2);
  const auto d = reef::build_probe_dataset(pos, neg, {4, 1}, 5);
  const auto model = reef::train_probe(d, ProbeArch::Linear, TrainingMeta{.seed = 2});
  const double acc = reef::eval_probe(model, d.test_x, d.test_y);
  EXPECT_GE(acc, 0.35);
  EXPECT_LE(acc, 0.65);
}

TEST(TrainProbe, DeterministicParameters) {
  const auto d = reef::build_probe_dataset(gaussian_blob(40, 5, 1, 1), gaussian_blob(40, 5, -1, 2), {4, 1}, 0);
  for (auto arch : {ProbeArch::Linear, ProbeArch::Mlp}) {
    EXPECT_EQ(reef::train_probe(d, arch, TrainingMeta{.seed = 3}), reef::train_probe(d, arch, TrainingMeta{.seed = 3}));
  }
}

TEST(TrainProbe, LossNeverRisesAndDivergenceIsReported) {
  const auto d = reef::build_probe_dataset(gaussian_blob(40, 5, 0.2, 1), gaussian_blob(40, 5, -0.2, 2), {4, 1}, 0);
  // A huge step overshoots: training halts rather than accepting a worse loss.
  const auto model = reef::train_probe(d, ProbeArch::Linear, TrainingMeta{.seed = 1, .epochs = 200, .learning_rate = 50.0});
  EXPECT_LT(model.meta.epochs_run, 200u);
  const auto big = reef::build_probe_dataset(gaussian_blob(20, 3, 1e300, 1, 1e299), gaussian_blob(20, 3, -1e300, 2, 1e299),
                                             {4, 1}, 0);
  try {
    reef::train_probe(big, ProbeArch::Linear, TrainingMeta{.seed = 1, .epochs = 10, .learning_rate = 1.0});
    FAIL() << "expected divergence";
  } catch (const reef::Error& e) {
    EXPECT_NE(std::string(e.what()).find("epoch"), std::string::npos);
  }
}

TEST(EvalProbe, InputDimMismatch) {
  const auto d = reef::build_probe_dataset(gaussian_blob(10, 4096, 1, 1), gaussian_blob(10, 4096, -1, 2), {4, 1}, 0);
  const auto model = reef::train_probe(d, ProbeArch::Linear, TrainingMeta{.seed = 1, .epochs = 5});
  const auto narrow = gaussian_blob(4, 2048, 0, 3);
  try {
    reef::eval_probe(model, narrow, {1, 0, 1, 0});
    FAIL();
  } catch (const reef::Error& e) {
    EXPECT_NE(std::string(e.what()).find("input-dim mismatch"), std::string::npos);
  }
}

TEST(EvalProbe, ScoresInUnitInterval) {
  const auto d = reef::build_probe_dataset(gaussian_blob(30, 6, 1, 1), gaussian_blob(30, 6, -1, 2), {4, 1}, 0);
  const auto model = reef::train_probe(d, ProbeArch::Mlp, TrainingMeta{.seed = 4});
  reef::Rng rng(5);
  for (int t = 0; t < 100; ++t) {
    std::vector<double> x(6);
    for (double& v : x) v = 100.0 * rng.normal();
    const double s = reef::probe_score(model, x);
    EXPECT_GE(s, 0.0);
    EXPECT_LE(s, 1.0);
  }
}

TEST(ProbeTransfer, DerivedHighUnrelatedChancePermutedDrops) {
  const auto fam = reef::gen_family(fixtures::probe_config(fixtures::kFamilySeeds[0]));
  const auto [vp, vn] = reef::split_by_label(fam.victim[1], fam.labels);
  const auto [dp, dn] = reef::split_by_label(fam.derived[1], fam.labels);
  const auto [up, un] = reef::split_by_label(fam.unrelated[1], fam.labels);
  const auto split = reef::build_probe_dataset(vp, vn, {4, 1}, 1);
  const auto model = reef::train_probe(split, ProbeArch::Linear, TrainingMeta{.seed = 1});
  const auto derived = reef::apply_split(split, dp, dn);
  const auto unrelated = reef::apply_split(split, up, un);
  EXPECT_GE(reef::eval_probe(model, derived.test_x, derived.test_y), 0.75);
  const double u = reef::eval_probe(model, unrelated.test_x, unrelated.test_y);
  EXPECT_GE(u, 0.40);
  EXPECT_LE(u, 0.60);
  const auto perm = reef::Permutation::random(derived.test_x.cols(), fixtures::kProbePermutationSeed);
  EXPECT_LT(reef::eval_probe(model, reef::permute_columns(derived.test_x, perm), derived.test_y), 0.6);
}

TEST(ProbeFile, RoundTripBothArchitectures) {
  const auto dir = std::filesystem::temp_directory_path();
  const auto d = reef::build_probe_dataset(gaussian_blob(30, 6, 1, 1), gaussian_blob(30, 6, -1, 2), {4, 1}, 0);
  for (auto arch : {ProbeArch::Linear, ProbeArch::Mlp}) {
    const auto model = reef::train_probe(d, arch, TrainingMeta{.seed = 7, .epochs = 50, .learning_rate = 0.02});
    const auto path = dir / "reef_probe_rt.reef";
    reef::save_probe(model, path);
    const auto loaded = reef::load_probe(path);
    EXPECT_EQ(loaded.arch, arch);
    EXPECT_EQ(loaded.input_dim, 6u);
    EXPECT_EQ(loaded.meta.epochs, 50u);
    EXPECT_EQ(loaded.meta.learning_rate, 0.02);
    EXPECT_EQ(loaded.meta.epochs_run, model.meta.epochs_run);
    EXPECT_EQ(reef::eval_probe(loaded, d.test_x, d.test_y), reef::eval_probe(model, d.test_x, d.test_y));
    std::filesystem::remove(path);
  }
}

}  // namespace
