#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <sstream>

#include "cips/gradcheck.hpp"
#include "cips/training.hpp"
#include "test_util.hpp"

using namespace cips;
using cips::test::randn;

namespace {

const double kLn2 = std::numbers::ln2;

std::vector<double> snapshot(const std::vector<Tensor>& params) {
  std::vector<double> out;
  for (const auto& p : params) out.insert(out.end(), p.data().begin(), p.data().end());
  return out;
}

struct Toy {
  GeneratorConfig gen_config = GeneratorConfig::desk();
  Dataset data = make_synthetic_dataset(DatasetKind::synthetic_solid, 64, 16, 3);
  DiscriminatorConfig disc_config;
};

TrainConfig small_config() {
  TrainConfig tc;
  tc.seed = 11;
  tc.batch_size = 2;
  tc.r1_every = 2;
  return tc;
}

}  // namespace

TEST(Loss, GeneratorLossAtZeroIsLn2) {
  EXPECT_NEAR(g_loss(Tensor::zeros({4, 1})).item(), kLn2, 1e-15);
}

TEST(Loss, GeneratorLossSaturatingTail) {
  EXPECT_LT(g_loss(Tensor::full({3, 1}, 40.0)).item(), 1e-15);
  EXPECT_TRUE(std::isfinite(g_loss(Tensor::full({3, 1}, -800.0)).item()));
}

TEST(Loss, GeneratorLossGradientMatchesFiniteDifferences) {
  Tensor logits = randn({16, 1}, 1, 3.0, true);
  const auto report = finite_diff_check([&] { return g_loss(logits); }, {logits}, 1e-6, 1e-6);
  EXPECT_TRUE(report.passed) << report.max_rel_error;
}

TEST(Loss, DiscriminatorLossAtZeroIsTwoLn2) {
  EXPECT_NEAR(d_loss(Tensor::zeros({4, 1}), Tensor::zeros({4, 1})).item(), 2 * kLn2, 1e-15);
}

TEST(Loss, SeparatedLogitsGiveNearZeroLoss) {
  EXPECT_LT(d_loss(Tensor::full({4, 1}, 20.0), Tensor::full({4, 1}, -20.0)).item(), 1e-8);
}

TEST(Loss, SwapWithNegationIsSymmetric) {
  const Tensor r = randn({8, 1}, 2, 2.0), f = randn({8, 1}, 3, 2.0);
  EXPECT_NEAR(d_loss(r, f).item(), d_loss(scale(f, -1.0), scale(r, -1.0)).item(), 1e-14);
}

TEST(Loss, DiscriminatorLossGradient) {
  Tensor r = randn({6, 1}, 4, 2.0, true), f = randn({6, 1}, 5, 2.0, true);
  const auto report = finite_diff_check([&] { return d_loss(r, f); }, {r, f}, 1e-6, 1e-6);
  EXPECT_TRUE(report.passed) << report.max_rel_error;
}

TEST(R1, LinearCriticClosedForm) {
  const std::size_t batch = 3, d = 2 * 2 * 3;
  const double gamma = 10.0;
  Tensor a = randn({d, 1}, 6, 1.0, true);
  Critic linear = [&](const Tensor& x) { return matmul(reshape(x, {batch, d}), a); };
  const Tensor penalty = r1_penalty(linear, randn({batch * 4, 3}, 7), batch, gamma);
  double norm2 = 0.0;
  for (double v : a.data()) norm2 += v * v;
  EXPECT_NEAR(penalty.item(), gamma / 2 * norm2, 1e-10);
  const Tensor ga = second_order_grad(penalty).get(a);
  for (std::size_t i = 0; i < d; ++i) EXPECT_NEAR(ga.at(i), gamma * a.at(i), 1e-10);
  EXPECT_NEAR(r1_penalty(linear, randn({batch * 4, 3}, 8), batch, gamma).item(), penalty.item(), 1e-10);
}

TEST(R1, ConstantCriticIsZero) {
  const std::size_t batch = 2;
  Tensor c = Tensor::full({batch, 1}, 0.5);
  c.set_requires_grad(true);
  Critic constant = [&](const Tensor&) { return c; };
  EXPECT_EQ(r1_penalty(constant, randn({batch * 4, 3}, 9), batch, 10.0).item(), 0.0);
}

TEST(R1, QuadraticCriticMatchesFiniteDifferences) {
  const std::size_t batch = 2, d = 2 * 2 * 3;
  Tensor M = randn({d, 3}, 10, 0.5, true);
  Critic quad = [&](const Tensor& x) {
    return reshape(sum(square(matmul(reshape(x, {batch, d}), M)), 1), {batch, 1});
  };
  const Tensor real = randn({batch * 4, 3}, 11);
  const auto report = finite_diff_check([&] { return r1_penalty(quad, real, batch, 10.0); }, {M}, 1e-5, 1e-4);
  EXPECT_TRUE(report.passed) << report.max_rel_error;
}

TEST(R1, RequiresGradientRecording) {
  const std::size_t batch = 1, d = 12;
  Tensor a = randn({d, 1}, 12, 1.0, true);
  Critic linear = [&](const Tensor& x) { return matmul(reshape(x, {batch, d}), a); };
  NoGradGuard guard;
  EXPECT_THROW(r1_penalty(linear, randn({4, 3}, 13), batch, 10.0), GradError);
}

TEST(Dataset, SolidImagesAreConstant) {
  const Dataset ds = make_synthetic_dataset(DatasetKind::synthetic_solid, 20, 8, 1);
  ASSERT_EQ(ds.images.size(), 20u);
  for (const auto& img : ds.images)
    for (std::size_t p = 0; p < 64; ++p)
      for (std::size_t c = 0; c < 3; ++c) {
        EXPECT_EQ(img.pixels[p * 3 + c], img.pixels[c]);
        EXPECT_LE(std::abs(img.pixels[c]), 0.8);
      }
}

TEST(Dataset, SolidMeanNearZero) {
  const Dataset ds = make_synthetic_dataset(DatasetKind::synthetic_solid, 10000, 2, 2);
  for (double m : ds.channel_mean()) EXPECT_LT(std::abs(m), 0.05);
}

TEST(Dataset, SameSeedSameBytes) {
  const Dataset a = make_synthetic_dataset(DatasetKind::synthetic_gradient, 10, 8, 3);
  const Dataset b = make_synthetic_dataset(DatasetKind::synthetic_gradient, 10, 8, 3);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(a.images[i], b.images[i]);
  const Dataset c = make_synthetic_dataset(DatasetKind::synthetic_gradient, 10, 8, 4);
  EXPECT_NE(a.images[0], c.images[0]);
}

TEST(Dataset, GradientImagesVary) {
  const Dataset ds = make_synthetic_dataset(DatasetKind::synthetic_gradient, 4, 8, 5);
  for (const auto& img : ds.images) EXPECT_NE(img.pixels.front(), img.pixels.back());
}

TEST(Dataset, UnknownKindThrows) {
  EXPECT_EQ(parse_dataset_kind("synthetic-solid"), DatasetKind::synthetic_solid);
  EXPECT_THROW(parse_dataset_kind("imagenet"), std::invalid_argument);
}

TEST(Patches, FullSizePatchIsTheImage) {
  const Dataset ds = make_synthetic_dataset(DatasetKind::synthetic_gradient, 3, 8, 6);
  std::vector<const Image*> imgs{&ds.images[0], &ds.images[1], &ds.images[2]};
  std::mt19937_64 rng(1);
  const PatchBatch pb = patch_train_batch(imgs, 8, {1}, rng);
  EXPECT_TRUE(test::bit_equal(pb.real, images_to_rows(imgs)));
  for (const auto& s : pb.specs) EXPECT_EQ(s.u + s.v, 0u);
}

TEST(Patches, RealPatchIsDilatedSlice) {
  const Dataset ds = make_synthetic_dataset(DatasetKind::synthetic_gradient, 4, 16, 7);
  std::vector<const Image*> imgs{&ds.images[0], &ds.images[1], &ds.images[2], &ds.images[3]};
  std::mt19937_64 rng(2);
  const PatchBatch pb = patch_train_batch(imgs, 8, {1, 2}, rng);
  ASSERT_EQ(pb.specs.size(), 4u);
  for (std::size_t b = 0; b < 4; ++b) {
    const PatchSpec& s = pb.specs[b];
    for (std::size_t j = 0; j < 8; ++j)
      for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t c = 0; c < 3; ++c) {
          const std::size_t row = b * 64 + j * 8 + i;
          ASSERT_EQ(pb.real.at(row * 3 + c), imgs[b]->at(s.v + j * s.stride, s.u + i * s.stride, c));
        }
  }
}

TEST(Patches, InvalidSizeThrows) {
  const Dataset ds = make_synthetic_dataset(DatasetKind::synthetic_solid, 1, 8, 8);
  std::vector<const Image*> imgs{&ds.images[0]};
  std::mt19937_64 rng(3);
  EXPECT_THROW(patch_train_batch(imgs, 9, {1}, rng), std::invalid_argument);
  EXPECT_THROW(patch_train_batch(imgs, 5, {2}, rng), std::invalid_argument);
}

TEST(Trainer, ZeroLearningRateLeavesParameters) {
  Toy toy;
  Generator gen(toy.gen_config, 1);
  Discriminator disc(toy.disc_config, 2);
  const auto g0 = snapshot(gen.parameters()), d0 = snapshot(disc.parameters());
  TrainConfig tc = small_config();
  tc.lr = 0.0;
  Trainer trainer(gen, disc, toy.data, tc);
  const auto metrics = trainer.run(3);
  ASSERT_EQ(metrics.size(), 3u);
  EXPECT_EQ(snapshot(gen.parameters()), g0);
  EXPECT_EQ(snapshot(disc.parameters()), d0);
  for (const auto& m : metrics) {
    EXPECT_TRUE(std::isfinite(m.d_loss));
    EXPECT_GT(m.g_grad_norm, 0.0);
  }
  EXPECT_TRUE(metrics[0].r1_applied);
}

TEST(Trainer, SameSeedSameMetricStream) {
  Toy toy;
  auto run = [&] {
    Generator gen(toy.gen_config, 1);
    Discriminator disc(toy.disc_config, 2);
    Trainer trainer(gen, disc, toy.data, small_config());
    auto m = trainer.run(4);
    return std::make_pair(m, snapshot(gen.parameters()));
  };
  const auto a = run(), b = run();
  EXPECT_EQ(a.first, b.first);
  EXPECT_EQ(a.second, b.second);
}

TEST(Trainer, PatchModeSynthesisesQuarterOfThePixels) {
  Toy toy;
  auto pixels = [&](bool patch) {
    Generator gen(toy.gen_config, 1);
    DiscriminatorConfig dc = toy.disc_config;
    dc.resolution = patch ? 8 : 16;
    Discriminator disc(dc, 2);
    TrainConfig tc = small_config();
    tc.patch_enabled = patch;
    Trainer trainer(gen, disc, toy.data, tc);
    return trainer.step().synthesized_pixels;
  };
  // One fake batch for the D update and one for the G update.
  EXPECT_EQ(pixels(false), 2u * 2u * 256u);
  EXPECT_EQ(pixels(true), 2u * 2u * 64u);
}

TEST(Trainer, NonFiniteLossAborts) {
  Toy toy;
  Generator gen(toy.gen_config, 1);
  Discriminator disc(toy.disc_config, 2);
  // An RGB bias feeds the loss directly; a poisoned style scale is rejected earlier.
  for (auto& p : gen.named_parameters())
    if (p.name.starts_with("rgb.") && p.name.ends_with(".bias") && p.name.find("style") == std::string::npos)
      p.tensor.mutable_data()[0] = std::nan("");
  Trainer trainer(gen, disc, toy.data, small_config());
  EXPECT_THROW(trainer.step(), NonFiniteLossError);
}

TEST(Trainer, MetricsSerialiseAsNdjson) {
  Toy toy;
  Generator gen(toy.gen_config, 1);
  Discriminator disc(toy.disc_config, 2);
  Trainer trainer(gen, disc, toy.data, small_config());
  std::ostringstream os;
  trainer.run(2, &os);
  std::istringstream is(os.str());
  std::string line;
  std::size_t n = 0;
  while (std::getline(is, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j["step"], n);
    EXPECT_TRUE(j.contains("d_loss") && j.contains("g_loss") && j.contains("r1"));
    ++n;
  }
  EXPECT_EQ(n, 2u);
}

TEST(Trainer, DiscriminatorLossSettlesNearEquilibrium) {
  // Frozen from a seeded run: the late-run mean sits within 0.05 of 2 ln 2.
  Toy toy;
  Generator gen(toy.gen_config, 1);
  Discriminator disc(toy.disc_config, 2);
  TrainConfig tc;
  tc.seed = 4;
  tc.batch_size = 8;
  Trainer trainer(gen, disc, toy.data, tc);
  const auto metrics = trainer.run(300);
  double late = 0.0;
  for (std::size_t i = 250; i < 300; ++i) late += metrics[i].d_loss / 50.0;
  EXPECT_NEAR(late, 2 * kLn2, 0.05);
}
