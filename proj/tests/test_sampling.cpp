#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "cips/sampling.hpp"
#include "test_util.hpp"

using namespace cips;

namespace {

std::vector<std::pair<double, double>> coords(const CoordGrid& g) {
  std::vector<std::pair<double, double>> out;
  for (const auto& p : g.points) out.emplace_back(p.x, p.y);
  return out;
}

using PairVec = std::vector<std::pair<double, double>>;

}  // namespace

TEST(FullGrid, RowMajorOrder) {
  EXPECT_EQ(coords(full_grid(2, 2)), (PairVec{{0, 0}, {1, 0}, {0, 1}, {1, 1}}));
  EXPECT_EQ(full_grid(7, 9).size(), 63u);
  EXPECT_THROW(full_grid(1, 5), std::invalid_argument);
}

TEST(PatchGrid, FullPatchIsFullGrid) {
  EXPECT_EQ(coords(patch_grid(PatchSpec{0, 0, 8, 1}, 8, 8)), coords(full_grid(8, 8)));
}

TEST(PatchGrid, DilatedInstance) {
  EXPECT_EQ(coords(patch_grid(PatchSpec{1, 0, 2, 2}, 8, 8)), (PairVec{{1, 0}, {3, 0}, {1, 2}, {3, 2}}));
}

TEST(PatchGrid, BoundsViolationThrows) {
  EXPECT_THROW(patch_grid(PatchSpec{5, 0, 4, 1}, 8, 8), std::out_of_range);
  EXPECT_THROW(patch_grid(PatchSpec{0, 0, 4, 3}, 8, 8), std::out_of_range);
  EXPECT_NO_THROW(patch_grid(PatchSpec{4, 4, 4, 1}, 8, 8));
}

TEST(Foveated, FullFractionIsFullGrid) {
  const CoordGrid g = foveated_sample(FoveaSpec::centered(16, 16, 1.0, 3), 16, 16);
  const auto got = coords(g), want = coords(full_grid(16, 16));
  EXPECT_EQ(std::set(got.begin(), got.end()), std::set(want.begin(), want.end()));
  EXPECT_EQ(got.size(), want.size());
}

TEST(Foveated, ExactUniqueBudget) {
  const CoordGrid g = foveated_sample(FoveaSpec::centered(64, 64, 0.05, 1), 64, 64);
  const auto pts = coords(g);
  EXPECT_EQ(pts.size(), 205u);
  EXPECT_EQ(std::set(pts.begin(), pts.end()).size(), 205u);
  EXPECT_EQ(foveated_budget(0.05, 64, 64), 205u);
  EXPECT_THROW(foveated_sample(FoveaSpec::centered(8, 8, 0.0, 1), 8, 8), std::invalid_argument);
}

TEST(Foveated, DeterministicGivenSeed) {
  const FoveaSpec spec = FoveaSpec::centered(32, 32, 0.3, 9);
  EXPECT_EQ(coords(foveated_sample(spec, 32, 32)), coords(foveated_sample(spec, 32, 32)));
}

TEST(Foveated, DenserNearGazeThanUniform) {
  // Monte-Carlo comparison against the uniform oracle: the share of pixels
  // inside radius 0.4 * size around the centre.
  const std::size_t side = 64;
  const double cx = double(side - 1) / 2.0, radius = 0.4 * double(side);
  auto inside = [&](double x, double y) { return std::hypot(x - cx, y - cx) < radius; };
  double uniform = 0.0;
  for (std::size_t y = 0; y < side; ++y)
    for (std::size_t x = 0; x < side; ++x) uniform += inside(double(x), double(y));
  uniform /= double(side * side);
  double foveated = 0.0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    const CoordGrid g = foveated_sample(FoveaSpec::centered(side, side, 0.1, seed), side, side);
    double hits = 0.0;
    for (const auto& p : g.points) hits += inside(p.x, p.y);
    foveated += hits / double(g.size()) / 100.0;
  }
  EXPECT_GT(foveated, uniform);
}

TEST(Fill, AllSampledIsIdentity) {
  std::vector<SparsePixel> px;
  Image ref(5, 6);
  for (std::size_t y = 0; y < 5; ++y)
    for (std::size_t x = 0; x < 6; ++x) {
      const std::array<double, 3> c{0.1 * double(x), -0.2 * double(y), 0.05 * double(x * y)};
      px.push_back({double(x), double(y), c});
      for (std::size_t k = 0; k < 3; ++k) ref.at(y, x, k) = c[k];
    }
  EXPECT_EQ(fill_missing(px, 5, 6), ref);
}

TEST(Fill, ConstantSamplesGiveConstantImage) {
  std::vector<SparsePixel> px{{0, 0, {0.3, -0.4, 0.5}}, {7, 1, {0.3, -0.4, 0.5}},
                              {3, 5, {0.3, -0.4, 0.5}}, {6, 7, {0.3, -0.4, 0.5}}};
  const Image img = fill_missing(px, 8, 8);
  for (std::size_t y = 0; y < 8; ++y)
    for (std::size_t x = 0; x < 8; ++x) {
      EXPECT_NEAR(img.at(y, x, 0), 0.3, 1e-15);
      EXPECT_NEAR(img.at(y, x, 1), -0.4, 1e-15);
      EXPECT_NEAR(img.at(y, x, 2), 0.5, 1e-15);
    }
}

TEST(Fill, LinearRampOnHalfThePixels) {
  const std::size_t side = 32;
  auto ramp = [&](double x, double y) { return (x + 2.0 * y) / double(3 * (side - 1)); };
  const CoordGrid g = foveated_sample(FoveaSpec::centered(side, side, 0.5, 4), side, side);
  std::vector<SparsePixel> px;
  for (const auto& p : g.points) px.push_back({p.x, p.y, {ramp(p.x, p.y), 0.0, 0.0}});
  const Image img = fill_missing(px, side, side);
  double worst = 0.0;
  for (std::size_t y = 0; y < side; ++y)
    for (std::size_t x = 0; x < side; ++x) worst = std::max(worst, std::abs(img.at(y, x, 0) - ramp(double(x), double(y))));
  EXPECT_LT(worst, 0.1);  // ramp range is 1
}

TEST(Fill, NeedsFourSamples) {
  std::vector<SparsePixel> px{{0, 0, {}}, {1, 1, {}}, {2, 2, {}}};
  EXPECT_THROW(fill_missing(px, 4, 4), std::invalid_argument);
}

TEST(DenseGrid, NativeResolutionIsFullGrid) {
  EXPECT_EQ(coords(dense_grid(6, 8, 6, 8)), coords(full_grid(6, 8)));
}

TEST(DenseGrid, CornersNormaliseToUnitSquare) {
  const CoordGrid g = dense_grid(64, 64, 16, 16);
  EXPECT_EQ(g.height, 64u);
  const auto first = g.points.front(), last = g.points.back();
  EXPECT_EQ(normalize_coords(first.x, first.y, g.height, g.width), std::make_pair(-1.0, -1.0));
  EXPECT_EQ(normalize_coords(last.x, last.y, g.height, g.width), std::make_pair(1.0, 1.0));
}

TEST(Lanczos, FactorOneIsIdentity) {
  Image img(5, 7);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = std::sin(double(i));
  const Image up = lanczos_upsample(img, 1);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) EXPECT_NEAR(up.pixels[i], img.pixels[i], 1e-12);
}

TEST(Lanczos, ConstantStaysConstant) {
  const Image up = lanczos_upsample(Image(6, 6, 0.37), 3);
  ASSERT_EQ(up.height, 18u);
  for (double v : up.pixels) EXPECT_NEAR(v, 0.37, 1e-12);
}

TEST(Lanczos, DeltaMatchesClosedFormKernel) {
  auto L = [](double t) {
    if (t == 0.0) return 1.0;
    if (std::abs(t) >= 3.0) return 0.0;
    const double pt = M_PI * t;
    return 3.0 * std::sin(pt) * std::sin(pt / 3.0) / (pt * pt);
  };
  auto norm = [&](double s) {
    double acc = 0.0;
    for (double k = std::floor(s) - 2; k <= std::floor(s) + 3; ++k) acc += L(s - k);
    return acc;
  };
  const std::size_t side = 16, factor = 2, y0 = 8, x0 = 7;
  Image delta(side, side);
  delta.at(y0, x0, 0) = 1.0;
  const Image up = lanczos_upsample(delta, factor);
  for (std::size_t oy = 0; oy < side * factor; ++oy)
    for (std::size_t ox = 0; ox < side * factor; ++ox) {
      const double sy = (double(oy) + 0.5) / double(factor) - 0.5;
      const double sx = (double(ox) + 0.5) / double(factor) - 0.5;
      const double want = L(sy - double(y0)) * L(sx - double(x0)) / (norm(sy) * norm(sx));
      ASSERT_NEAR(up.at(oy, ox, 0), want, 1e-12) << oy << "," << ox;
    }
  EXPECT_NEAR(lanczos_kernel(0.0), 1.0, 0.0);
  EXPECT_EQ(lanczos_kernel(3.0), 0.0);
}

TEST(CylinderCrop, WrapsAcrossTheSeam) {
  const std::size_t W = 40;
  const CoordGrid g = cylinder_crop(W, 8, 4, 1, std::int64_t(W) - 1, 2);
  ASSERT_EQ(g.size(), 4u);
  std::vector<double> cols;
  for (const auto& p : g.points) cols.push_back(wrap_azimuth(p.x, W));
  EXPECT_EQ(cols, (std::vector<double>{double(W - 1), 0, 1, 2}));
  EXPECT_EQ(g.kind, GridKind::cylindrical);
  EXPECT_THROW(cylinder_crop(W, 8, 4, 4, 0, 5), std::out_of_range);
}

TEST(CylinderCrop, ShiftByCircumference) {
  const std::size_t W = 40;
  const CoordGrid a = cylinder_crop(W, 8, 6, 8, 13, 0), b = cylinder_crop(W, 8, 6, 8, 13 + 2 * std::int64_t(W), 0);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(wrap_azimuth(a.points[i].x, W), wrap_azimuth(b.points[i].x, W));
    EXPECT_EQ(a.points[i].y, b.points[i].y);
  }
}

TEST(BlendAlpha, HorizontalEndpoints) {
  const auto a = blend_alpha_field(4, 9, BlendMode::horizontal_linear);
  for (std::size_t y = 0; y < 4; ++y) {
    EXPECT_EQ(a[y * 9], 0.0);
    EXPECT_EQ(a[y * 9 + 8], 1.0);
  }
}

TEST(BlendAlpha, RadialZeroRadius) {
  const auto a = blend_alpha_field(5, 5, BlendMode::radial, BlendParams{2, 2, 0});
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a[i], i == 12 ? 0.0 : 1.0);
}

TEST(BlendAlpha, PointsAgreeWithField) {
  const BlendParams bp{3.5, 2.0, 4.0};
  const auto field = blend_alpha_field(6, 8, BlendMode::radial, bp);
  const auto pts = blend_alpha_points(full_grid(6, 8), BlendMode::radial, bp);
  EXPECT_EQ(field, pts);
}

TEST(SparseJson, RoundTripAndLayout) {
  const std::vector<SparsePixel> px{{1, 2, {0.1, 0.2, 0.3}}, {3, 0, {-1, 0, 1}}};
  const auto j = sparse_to_json(px, 4, 5);
  EXPECT_EQ(j["height"], 4);
  EXPECT_EQ(j["width"], 5);
  EXPECT_EQ(j["kind"], "cartesian");
  EXPECT_EQ(j["pixels"].size(), 2u);
  std::size_t h = 0, w = 0;
  const auto back = sparse_from_json(j, &h, &w);
  EXPECT_EQ(h, 4u);
  EXPECT_EQ(w, 5u);
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].rgb, px[1].rgb);
  EXPECT_EQ(back[0].x, 1.0);
}
