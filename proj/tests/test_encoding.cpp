#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "cips/encoding.hpp"
#include "cips/gradcheck.hpp"
#include "cips/sampling.hpp"
#include "test_util.hpp"

using namespace cips;
using cips::test::randn;

namespace {

CoordGrid points(GridKind kind, std::size_t h, std::size_t w, std::vector<Point> pts) {
  return CoordGrid{kind, h, w, std::move(pts)};
}

}  // namespace

TEST(Normalize, CornersAndOddMidpoint) {
  EXPECT_EQ(normalize_coords(0, 0, 256, 256), std::make_pair(-1.0, -1.0));
  EXPECT_EQ(normalize_coords(255, 255, 256, 256), std::make_pair(1.0, 1.0));
  const auto [x, y] = normalize_coords(128, 0, 256, 257);
  EXPECT_EQ(x, 0.0);
  EXPECT_EQ(y, -1.0);
}

TEST(Normalize, DegenerateExtentThrows) {
  EXPECT_THROW(normalize_coords(0, 0, 1, 5), std::invalid_argument);
  EXPECT_THROW(normalize_coords(0, 0, 5, 1), std::invalid_argument);
}

TEST(Fourier, ZeroMatrixGivesZeroFeatures) {
  const FourierFeatureMap map{Tensor::zeros({2, 7})};
  const Tensor f = fourier_encode(full_grid(4, 5), map);
  for (double v : f.data()) EXPECT_EQ(v, 0.0);
}

TEST(Fourier, SingleColumnQuarterTurn) {
  const FourierFeatureMap map{Tensor::from({2, 1}, {std::numbers::pi / 2, 0.0})};
  // x' = 1 at the right edge of a width-5 grid.
  const Tensor f = fourier_encode(points(GridKind::cartesian, 4, 5, {{4, 1}}), map);
  EXPECT_EQ(f.at(0), 1.0);
}

TEST(Fourier, CylindricalSeamIsPeriodic) {
  const FourierFeatureMap map{randn({3, 16}, 1, 3.0)};
  const std::size_t W = 40;
  const Tensor f = fourier_encode(points(GridKind::cylindrical, 8, W, {{0, 3}, {double(W), 3}}), map);
  EXPECT_TRUE(test::bit_equal(slice(f, 0, 0, 1), slice(f, 0, 1, 2)));
}

TEST(Fourier, OutputInSineRangeAndShapeChecked) {
  const FourierFeatureMap map{randn({2, 32}, 2, 10.0)};
  for (const Tensor t = fourier_encode(full_grid(8, 8), map); double v : t.data()) {
    EXPECT_LE(std::abs(v), 1.0);
  }
  EXPECT_THROW(fourier_encode(points(GridKind::cylindrical, 8, 8, {{0, 0}}), map), ShapeError);
}

TEST(Embeddings, IntegerLookupIsExact) {
  const CoordEmbeddingTable table{randn({6 * 7, 4}, 3), 6, 7, false};
  const Tensor e = embed_lookup(points(GridKind::cartesian, 6, 7, {{3, 5}}), table);
  EXPECT_TRUE(test::bit_equal(e, gather_rows(table.table, {5 * 7 + 3})));
}

TEST(Embeddings, HalfPointIsBilinearMidpoint) {
  const CoordEmbeddingTable table{randn({6 * 7, 4}, 3), 6, 7, false};
  const Tensor e = embed_lookup(points(GridKind::cartesian, 6, 7, {{3.5, 5}}), table);
  const Tensor a = gather_rows(table.table, {5 * 7 + 3}), b = gather_rows(table.table, {5 * 7 + 4});
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(e.at(i), 0.5 * (a.at(i) + b.at(i)), 1e-15);
}

TEST(Embeddings, CylindricalWrap) {
  const std::size_t W = 7;
  const CoordEmbeddingTable table{randn({6 * W, 4}, 3), 6, W, true};
  const Tensor e = embed_lookup(points(GridKind::cylindrical, 6, W, {{double(W) + 2, 1}}), table);
  EXPECT_TRUE(test::bit_equal(e, gather_rows(table.table, {1 * std::int64_t(W) + 2})));
}

TEST(Embeddings, OutOfDomainThrows) {
  const CoordEmbeddingTable flat{randn({6 * 7, 4}, 3), 6, 7, false};
  EXPECT_THROW(embed_lookup(points(GridKind::cartesian, 6, 7, {{7, 0}}), flat), std::out_of_range);
  EXPECT_THROW(embed_lookup(points(GridKind::cartesian, 6, 7, {{0, 6}}), flat), std::out_of_range);
  const CoordEmbeddingTable wrap{randn({6 * 7, 4}, 3), 6, 7, true};
  EXPECT_THROW(embed_lookup(points(GridKind::cylindrical, 6, 7, {{0, -1}}), wrap), std::out_of_range);
}

TEST(Encode, ConcatenationAndZeroFlags) {
  const FourierFeatureMap map{randn({2, 5}, 4, 3.0)};
  const CoordEmbeddingTable table{randn({4 * 4, 3}, 5), 4, 4, false};
  const CoordGrid g = full_grid(4, 4);
  const Tensor fo = fourier_encode(g, map), co = embed_lookup(g, table);
  const Tensor both = encode(g, &map, &table);
  EXPECT_TRUE(test::bit_equal(both, concat({fo, co}, 1)));

  const Tensor no_co = encode(g, &map, &table, {.zero_fourier = false, .zero_embeddings = true});
  EXPECT_TRUE(test::bit_equal(slice(no_co, 1, 0, 5), fo));
  for (const Tensor t = slice(no_co, 1, 5, 8); double v : t.data()) EXPECT_EQ(v, 0.0);

  const Tensor no_fo = encode(g, &map, &table, {.zero_fourier = true, .zero_embeddings = false});
  for (const Tensor t = slice(no_fo, 1, 0, 5); double v : t.data()) EXPECT_EQ(v, 0.0);
  EXPECT_TRUE(test::bit_equal(slice(no_fo, 1, 5, 8), co));
}

TEST(Encode, BothBranchesAbsentThrows) {
  EXPECT_THROW(encode(full_grid(4, 4), nullptr, nullptr), std::invalid_argument);
}

TEST(Encode, GradientFlowsToBothBranches) {
  FourierFeatureMap map{randn({2, 5}, 6, 2.0, true)};
  CoordEmbeddingTable table{randn({4 * 4, 3}, 7, 1.0, true), 4, 4, false};
  const CoordGrid g = dense_grid(7, 7, 4, 4);
  const Tensor proj = randn({7 * 7, 8}, 8);
  auto build = [&] { return sum(mul(encode(g, &map, &table), proj)); };
  const auto report = finite_diff_check(build, {map.weight, table.table}, 1e-5, 1e-4);
  EXPECT_TRUE(report.passed) << report.max_rel_error;
}
