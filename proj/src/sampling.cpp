#include "cips/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <tuple>

namespace cips {

CoordGrid full_grid(std::size_t height, std::size_t width) {
  if (height < 2 || width < 2) {
    throw std::invalid_argument("full_grid: degenerate extent " + std::to_string(height) + "x" +
                                std::to_string(width));
  }
  CoordGrid g{GridKind::cartesian, height, width, {}};
  g.points.reserve(height * width);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x) g.points.push_back({double(x), double(y)});
  return g;
}

void validate_patch(const PatchSpec& spec, std::size_t height, std::size_t width) {
  if (spec.size == 0 || spec.stride == 0) {
    throw std::out_of_range("patch: size and stride must be positive");
  }
  const std::size_t span = (spec.size - 1) * spec.stride;
  if (span >= width || span >= height || spec.u >= width - span || spec.v >= height - span) {
    throw std::out_of_range("patch: K=" + std::to_string(spec.size) +
                            " sigma=" + std::to_string(spec.stride) + " at (" +
                            std::to_string(spec.u) + ", " + std::to_string(spec.v) +
                            ") does not fit in " + std::to_string(height) + "x" +
                            std::to_string(width));
  }
}

CoordGrid patch_grid(const PatchSpec& spec, std::size_t height, std::size_t width) {
  validate_patch(spec, height, width);
  CoordGrid g{GridKind::cartesian, height, width, {}};
  g.points.reserve(spec.size * spec.size);
  for (std::size_t j = 0; j < spec.size; ++j)
    for (std::size_t i = 0; i < spec.size; ++i)
      g.points.push_back(
          {double(spec.u + i * spec.stride), double(spec.v + j * spec.stride)});
  return g;
}

FoveaSpec FoveaSpec::centered(std::size_t height, std::size_t width, double fraction,
                              std::uint64_t seed) {
  return {(static_cast<double>(width) - 1.0) / 2.0, (static_cast<double>(height) - 1.0) / 2.0,
          0.4 * static_cast<double>(std::min(height, width)), fraction, seed};
}

std::size_t foveated_budget(double fraction, std::size_t height, std::size_t width) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("foveated_sample: fraction must lie in (0, 1], got " +
                                std::to_string(fraction));
  }
  const std::size_t total = height * width;
  const auto budget = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(total)));
  return std::min(budget, total);
}

CoordGrid foveated_sample(const FoveaSpec& spec, std::size_t height, std::size_t width) {
  const std::size_t budget = foveated_budget(spec.fraction, height, width);
  const std::size_t total = height * width;
  CoordGrid g{GridKind::cartesian, height, width, {}};
  g.points.reserve(budget);
  std::vector<char> taken(total, 0);
  std::mt19937_64 rng(spec.seed);

  if (spec.sigma > 0.0) {
    std::normal_distribution<double> nx(spec.cx, spec.sigma), ny(spec.cy, spec.sigma);
    const std::size_t stall = 10 * total;
    for (std::size_t attempt = 0; attempt < stall && g.points.size() < budget; ++attempt) {
      const double x = std::round(nx(rng));
      const double y = std::round(ny(rng));
      if (x < 0 || y < 0 || x >= double(width) || y >= double(height)) continue;
      const auto idx = static_cast<std::size_t>(y) * width + static_cast<std::size_t>(x);
      if (taken[idx]) continue;
      taken[idx] = 1;
      g.points.push_back({x, y});
    }
  }
  if (g.points.size() < budget) {
    std::vector<std::size_t> rest;
    for (std::size_t i = 0; i < total; ++i)
      if (!taken[i]) rest.push_back(i);
    std::shuffle(rest.begin(), rest.end(), rng);
    for (std::size_t i = 0; g.points.size() < budget; ++i) {
      g.points.push_back({double(rest[i] % width), double(rest[i] / width)});
    }
  }
  return g;
}

nlohmann::json sparse_to_json(const std::vector<SparsePixel>& pixels, std::size_t height,
                              std::size_t width, GridKind kind) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& p : pixels) {
    arr.push_back({{"x", p.x}, {"y", p.y}, {"rgb", {p.rgb[0], p.rgb[1], p.rgb[2]}}});
  }
  return {{"height", height},
          {"width", width},
          {"kind", kind == GridKind::cartesian ? "cartesian" : "cylindrical"},
          {"pixels", std::move(arr)}};
}

std::vector<SparsePixel> sparse_from_json(const nlohmann::json& j, std::size_t* height,
                                          std::size_t* width) {
  if (height) *height = j.at("height").get<std::size_t>();
  if (width) *width = j.at("width").get<std::size_t>();
  std::vector<SparsePixel> out;
  for (const auto& p : j.at("pixels")) {
    SparsePixel s;
    s.x = p.at("x").get<double>();
    s.y = p.at("y").get<double>();
    const auto& c = p.at("rgb");
    for (std::size_t k = 0; k < 3; ++k) s.rgb[k] = c.at(k).get<double>();
    out.push_back(s);
  }
  return out;
}

Image fill_missing(const std::vector<SparsePixel>& samples, std::size_t height,
                   std::size_t width) {
  if (samples.size() < 4) {
    throw std::invalid_argument("fill_missing: need at least 4 samples, got " +
                                std::to_string(samples.size()));
  }
  Image out(height, width);
  std::vector<std::int64_t> owner(height * width, -1);
  for (std::size_t s = 0; s < samples.size(); ++s) {
    const double x = samples[s].x, y = samples[s].y;
    if (x < 0 || y < 0 || x >= double(width) || y >= double(height) || x != std::floor(x) ||
        y != std::floor(y)) {
      throw std::out_of_range("fill_missing: sample (" + std::to_string(x) + ", " +
                              std::to_string(y) + ") is not an in-bounds pixel");
    }
    const auto idx = static_cast<std::size_t>(y) * width + static_cast<std::size_t>(x);
    if (owner[idx] < 0) owner[idx] = static_cast<std::int64_t>(s);
  }

  // (squared distance, row-major index, sample)
  using Candidate = std::tuple<std::int64_t, std::size_t, std::int64_t>;
  const auto H = static_cast<std::int64_t>(height), W = static_cast<std::int64_t>(width);
  std::vector<Candidate> best;
  for (std::int64_t py = 0; py < H; ++py) {
    for (std::int64_t px = 0; px < W; ++px) {
      const auto here = static_cast<std::size_t>(py * W + px);
      if (owner[here] >= 0) {
        for (std::size_t c = 0; c < 3; ++c) out.pixels[here * 3 + c] = samples[owner[here]].rgb[c];
        continue;
      }
      best.clear();
      auto consider = [&](std::int64_t x, std::int64_t y) {
        if (x < 0 || y < 0 || x >= W || y >= H) return;
        const auto idx = static_cast<std::size_t>(y * W + x);
        if (owner[idx] < 0) return;
        const std::int64_t d2 = (x - px) * (x - px) + (y - py) * (y - py);
        best.emplace_back(d2, idx, owner[idx]);
        std::sort(best.begin(), best.end());
        if (best.size() > 4) best.pop_back();
      };
      // Chebyshev rings; a ring of radius r holds nothing closer than r.
      for (std::int64_t r = 1; r < std::max(H, W); ++r) {
        if (best.size() == 4 && r * r > std::get<0>(best.back())) break;
        for (std::int64_t x = px - r; x <= px + r; ++x) {
          consider(x, py - r);
          consider(x, py + r);
        }
        for (std::int64_t y = py - r + 1; y <= py + r - 1; ++y) {
          consider(px - r, y);
          consider(px + r, y);
        }
      }
      double wsum = 0.0;
      std::array<double, 3> acc{};
      for (const auto& [d2, idx, s] : best) {
        const double w = 1.0 / static_cast<double>(d2);
        wsum += w;
        for (std::size_t c = 0; c < 3; ++c) acc[c] += w * samples[s].rgb[c];
      }
      for (std::size_t c = 0; c < 3; ++c) out.pixels[here * 3 + c] = acc[c] / wsum;
    }
  }
  return out;
}

CoordGrid dense_grid(std::size_t out_height, std::size_t out_width, std::size_t height,
                     std::size_t width) {
  if (out_height < height || out_width < width) {
    throw std::invalid_argument("dense_grid: output " + std::to_string(out_height) + "x" +
                                std::to_string(out_width) + " is smaller than the model's " +
                                std::to_string(height) + "x" + std::to_string(width));
  }
  return full_grid(out_height, out_width);
}

double lanczos_kernel(double t, int a) {
  if (t == 0.0) return 1.0;
  const double at = std::abs(t);
  if (at >= a) return 0.0;
  const double pt = M_PI * t;
  return a * std::sin(pt) * std::sin(pt / a) / (pt * pt);
}

namespace {

// One separable pass along x (axis 1) or y (axis 0).
Image lanczos_pass(const Image& in, std::size_t factor, bool along_x) {
  const int a = 3;
  const std::size_t src_len = along_x ? in.width : in.height;
  const std::size_t dst_len = src_len * factor;
  Image out(along_x ? in.height : dst_len, along_x ? dst_len : in.width);
  std::vector<double> w(2 * a);
  std::vector<std::size_t> idx(2 * a);
  for (std::size_t o = 0; o < dst_len; ++o) {
    const double src = (static_cast<double>(o) + 0.5) / static_cast<double>(factor) - 0.5;
    const auto base = static_cast<std::int64_t>(std::floor(src));
    double wsum = 0.0;
    for (int t = 0; t < 2 * a; ++t) {
      const std::int64_t i = base - a + 1 + t;
      w[t] = lanczos_kernel(src - static_cast<double>(i), a);
      idx[t] = static_cast<std::size_t>(std::clamp<std::int64_t>(i, 0, std::int64_t(src_len) - 1));
      wsum += w[t];
    }
    for (auto& v : w) v /= wsum;
    const std::size_t other = along_x ? in.height : in.width;
    for (std::size_t k = 0; k < other; ++k) {
      for (std::size_t c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (int t = 0; t < 2 * a; ++t) {
          acc += w[t] * (along_x ? in.at(k, idx[t], c) : in.at(idx[t], k, c));
        }
        if (along_x) {
          out.at(k, o, c) = acc;
        } else {
          out.at(o, k, c) = acc;
        }
      }
    }
  }
  return out;
}

}  // namespace

Image lanczos_upsample(const Image& image, std::size_t factor) {
  if (factor == 0) throw std::invalid_argument("lanczos_upsample: factor must be >= 1");
  return lanczos_pass(lanczos_pass(image, factor, true), factor, false);
}

CoordGrid cylinder_crop(std::size_t pan_width, std::size_t height, std::size_t crop_w,
                        std::size_t crop_h, std::int64_t x0, std::size_t y0) {
  if (pan_width < 2 || height < 2) {
    throw std::invalid_argument("cylinder_crop: degenerate panorama extent");
  }
  if (crop_h == 0 || crop_w == 0 || y0 + crop_h > height) {
    throw std::out_of_range("cylinder_crop: rows [" + std::to_string(y0) + ", " +
                            std::to_string(y0 + crop_h) + ") exceed panorama height " +
                            std::to_string(height));
  }
  const auto W = static_cast<std::int64_t>(pan_width);
  CoordGrid g{GridKind::cylindrical, height, pan_width, {}};
  g.points.reserve(crop_w * crop_h);
  for (std::size_t j = 0; j < crop_h; ++j) {
    for (std::size_t i = 0; i < crop_w; ++i) {
      std::int64_t x = (x0 + static_cast<std::int64_t>(i)) % W;
      if (x < 0) x += W;
      g.points.push_back({double(x), double(y0 + j)});
    }
  }
  return g;
}

namespace {

double blend_alpha(double x, double y, std::size_t width, BlendMode mode, const BlendParams& p) {
  if (mode == BlendMode::horizontal_linear) return x / static_cast<double>(width - 1);
  const double d = std::hypot(x - p.cx, y - p.cy);
  return p.radius <= 0.0 ? (d > 0.0 ? 1.0 : 0.0) : std::min(1.0, d / p.radius);
}

}  // namespace

std::vector<double> blend_alpha_field(std::size_t height, std::size_t width, BlendMode mode,
                                      const BlendParams& params) {
  if (height == 0 || width < 2) throw std::invalid_argument("blend_alpha_field: invalid shape");
  std::vector<double> alpha(height * width);
  for (std::size_t y = 0; y < height; ++y)
    for (std::size_t x = 0; x < width; ++x)
      alpha[y * width + x] = blend_alpha(double(x), double(y), width, mode, params);
  return alpha;
}

std::vector<double> blend_alpha_points(const CoordGrid& grid, BlendMode mode,
                                       const BlendParams& params) {
  if (grid.width < 2) throw std::invalid_argument("blend_alpha_points: invalid shape");
  std::vector<double> alpha(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    alpha[i] = std::clamp(blend_alpha(grid.points[i].x, grid.points[i].y, grid.width, mode, params),
                          0.0, 1.0);
  }
  return alpha;
}

}  // namespace cips
