#pragma once

#include <cstddef>
#include <utility>
#include <vector>

#include "cips/tensor.hpp"

namespace cips {

enum class GridKind { cartesian, cylindrical };

struct Point {
  double x = 0.0;
  double y = 0.0;
};

/// Ordered pixel coordinates plus the extents they are normalized against.
/// For cylindrical grids `width` is the full circumference and x wraps.
struct CoordGrid {
  GridKind kind = GridKind::cartesian;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<Point> points;

  std::size_t size() const { return points.size(); }
  /// Sub-grid keeping the given point indices, in that order.
  CoordGrid subset(const std::vector<std::size_t>& indices) const;
};

/// Learnable B_fo: rows are raw-coordinate channels (2 Cartesian, 3 cylindrical).
struct FourierFeatureMap {
  Tensor weight;  // (channels, n)

  std::size_t channels() const { return weight.dim(0); }
  std::size_t features() const { return weight.dim(1); }
};

/// One learnable vector per integer pixel position, stored row-major
/// (row index y * width + x).
struct CoordEmbeddingTable {
  Tensor table;  // (height * width, dim)
  std::size_t height = 0;
  std::size_t width = 0;
  bool wrap_x = false;

  std::size_t dim() const { return table.dim(1); }
};

/// Branch-zeroing switches used to inspect what each encoding contributes.
struct EncoderFlags {
  bool zero_fourier = false;
  bool zero_embeddings = false;
};

/// Maps pixel coordinates onto [-1, 1]^2 (corners land exactly on +-1).
std::pair<double, double> normalize_coords(double x, double y, std::size_t height,
                                           std::size_t width);

/// x reduced into [0, width) for periodic grids.
double wrap_azimuth(double x, std::size_t width);

/// Per-point raw input of the Fourier layer: (x', y') or (cos t, sin t, y').
Tensor raw_coordinates(const CoordGrid& grid);

/// sin(raw * B_fo), one row per point.
Tensor fourier_encode(const CoordGrid& grid, const FourierFeatureMap& map);

/// Bilinear lookup into the table; integer coordinates return stored rows exactly.
/// Grids whose extents differ from the table are rescaled onto it.
Tensor embed_lookup(const CoordGrid& grid, const CoordEmbeddingTable& table);

/// concat[e_fo, e_co]. A null map or table drops that branch entirely; the
/// zero flags keep the width but replace the branch with zeros.
Tensor encode(const CoordGrid& grid, const FourierFeatureMap* map,
              const CoordEmbeddingTable* table, EncoderFlags flags = {});

}  // namespace cips
