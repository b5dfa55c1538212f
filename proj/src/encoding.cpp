#include "cips/encoding.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace cips {

CoordGrid CoordGrid::subset(const std::vector<std::size_t>& indices) const {
  CoordGrid out{kind, height, width, {}};
  out.points.reserve(indices.size());
  for (auto i : indices) out.points.push_back(points.at(i));
  return out;
}

std::pair<double, double> normalize_coords(double x, double y, std::size_t height,
                                           std::size_t width) {
  if (height < 2 || width < 2) {
    throw std::invalid_argument("normalize_coords: degenerate extent " + std::to_string(height) +
                                "x" + std::to_string(width) + " (both sides must be >= 2)");
  }
  const double xn = 2.0 * x / static_cast<double>(width - 1) - 1.0;
  const double yn = 2.0 * y / static_cast<double>(height - 1) - 1.0;
  return {xn, yn};
}

double wrap_azimuth(double x, std::size_t width) {
  const double w = static_cast<double>(width);
  double r = std::fmod(x, w);
  if (r < 0.0) r += w;
  if (r >= w) r -= w;
  return r;
}

Tensor raw_coordinates(const CoordGrid& grid) {
  const std::size_t channels = grid.kind == GridKind::cartesian ? 2 : 3;
  std::vector<double> raw(grid.size() * channels);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto& p = grid.points[i];
    auto [xn, yn] = normalize_coords(p.x, p.y, grid.height, grid.width);
    if (grid.kind == GridKind::cartesian) {
      raw[i * 2] = xn;
      raw[i * 2 + 1] = yn;
    } else {
      const double theta =
          2.0 * std::numbers::pi * wrap_azimuth(p.x, grid.width) / static_cast<double>(grid.width);
      raw[i * 3] = std::cos(theta);
      raw[i * 3 + 1] = std::sin(theta);
      raw[i * 3 + 2] = yn;
    }
  }
  return Tensor::from({grid.size(), channels}, std::move(raw));
}

Tensor fourier_encode(const CoordGrid& grid, const FourierFeatureMap& map) {
  const std::size_t expected = grid.kind == GridKind::cartesian ? 2 : 3;
  if (map.weight.rank() != 2 || map.channels() != expected) {
    throw ShapeError("fourier_encode: " +
                     std::string(grid.kind == GridKind::cartesian ? "cartesian" : "cylindrical") +
                     " grid needs a " + std::to_string(expected) + "-row map, got " +
                     to_string(map.weight.shape()));
  }
  return sin(matmul(raw_coordinates(grid), map.weight));
}

Tensor embed_lookup(const CoordGrid& grid, const CoordEmbeddingTable& table) {
  const std::size_t th = table.height, tw = table.width;
  if (table.table.rank() != 2 || table.table.dim(0) != th * tw) {
    throw ShapeError("embed_lookup: table of shape " + to_string(table.table.shape()) +
                     " does not hold " + std::to_string(th) + "x" + std::to_string(tw) + " rows");
  }
  const bool periodic = grid.kind == GridKind::cylindrical;
  if (periodic != table.wrap_x) {
    throw std::invalid_argument("embed_lookup: grid kind does not match table wrap mode");
  }

  auto plan = std::make_shared<GatherPlan>();
  plan->taps = 4;
  plan->index.resize(grid.size() * 4);
  plan->weight.resize(grid.size() * 4);

  for (std::size_t i = 0; i < grid.size(); ++i) {
    const auto& p = grid.points[i];
    if (!(p.y >= 0.0 && p.y <= static_cast<double>(grid.height - 1))) {
      throw std::out_of_range("embed_lookup: y=" + std::to_string(p.y) + " outside [0, " +
                              std::to_string(grid.height - 1) + "]");
    }
    double ty = grid.height == th ? p.y
                                  : p.y * static_cast<double>(th - 1) /
                                        static_cast<double>(grid.height - 1);
    double tx = 0.0;
    if (periodic) {
      const double xw = wrap_azimuth(p.x, grid.width);
      tx = grid.width == tw ? xw
                            : wrap_azimuth(xw * static_cast<double>(tw) /
                                               static_cast<double>(grid.width),
                                           tw);
    } else {
      if (!(p.x >= 0.0 && p.x <= static_cast<double>(grid.width - 1))) {
        throw std::out_of_range("embed_lookup: x=" + std::to_string(p.x) + " outside [0, " +
                                std::to_string(grid.width - 1) + "]");
      }
      tx = grid.width == tw ? p.x
                            : p.x * static_cast<double>(tw - 1) /
                                  static_cast<double>(grid.width - 1);
    }

    const double fx0 = std::floor(tx), fy0 = std::floor(ty);
    const double fx = tx - fx0, fy = ty - fy0;
    const auto x0 = static_cast<std::int64_t>(fx0);
    const auto y0 = static_cast<std::int64_t>(fy0);
    std::int64_t x1 = x0 + 1;
    std::int64_t y1 = y0 + 1;
    if (periodic) {
      x1 %= static_cast<std::int64_t>(tw);
    } else if (x1 >= static_cast<std::int64_t>(tw)) {
      x1 = -1;
    }
    if (y1 >= static_cast<std::int64_t>(th)) y1 = -1;

    auto row = [tw](std::int64_t x, std::int64_t y) -> std::int64_t {
      return (x < 0 || y < 0) ? -1 : y * static_cast<std::int64_t>(tw) + x;
    };
    std::int64_t* idx = plan->index.data() + i * 4;
    double* w = plan->weight.data() + i * 4;
    idx[0] = row(x0, y0);
    w[0] = (1.0 - fx) * (1.0 - fy);
    idx[1] = row(x1, y0);
    w[1] = fx * (1.0 - fy);
    idx[2] = row(x0, y1);
    w[2] = (1.0 - fx) * fy;
    idx[3] = row(x1, y1);
    w[3] = fx * fy;
  }
  return weighted_gather(table.table, std::move(plan));
}

Tensor encode(const CoordGrid& grid, const FourierFeatureMap* map,
              const CoordEmbeddingTable* table, EncoderFlags flags) {
  if (map == nullptr && table == nullptr) {
    throw std::invalid_argument("encode: both encoding branches are disabled");
  }
  std::vector<Tensor> parts;
  if (map != nullptr) {
    parts.push_back(flags.zero_fourier ? Tensor::zeros({grid.size(), map->features()})
                                       : fourier_encode(grid, *map));
  }
  if (table != nullptr) {
    parts.push_back(flags.zero_embeddings ? Tensor::zeros({grid.size(), table->dim()})
                                          : embed_lookup(grid, *table));
  }
  return parts.size() == 1 ? parts.front() : concat(parts, 1);
}

}  // namespace cips
