#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "cips/encoding.hpp"
#include "cips/image.hpp"

namespace cips {

/// Row-major integer grid: (0,0), (1,0), ..., (W-1,0), (0,1), ...
CoordGrid full_grid(std::size_t height, std::size_t width);

/// Dilated K x K patch with corner (u, v) and stride sigma.
struct PatchSpec {
  std::size_t u = 0;
  std::size_t v = 0;
  std::size_t size = 1;
  std::size_t stride = 1;
};

/// Throws std::out_of_range unless 0 <= u < W-(K-1)sigma and 0 <= v < H-(K-1)sigma.
void validate_patch(const PatchSpec& spec, std::size_t height, std::size_t width);

/// Points (u + i*sigma, v + j*sigma) in mgrid(K, K) order, normalised against (H, W).
CoordGrid patch_grid(const PatchSpec& spec, std::size_t height, std::size_t width);

struct FoveaSpec {
  double cx = 0.0;
  double cy = 0.0;
  double sigma = 0.0;
  double fraction = 1.0;
  std::uint64_t seed = 0;

  /// Centred gaze with sigma = 0.4 * min(H, W).
  static FoveaSpec centered(std::size_t height, std::size_t width, double fraction,
                            std::uint64_t seed);
};

/// ceil(fraction * H * W).
std::size_t foveated_budget(double fraction, std::size_t height, std::size_t width);

/// Exactly foveated_budget() unique in-bounds integer pixels, drawn from a
/// rounded Gaussian around the gaze. Out-of-bounds and repeated draws are
/// rejected; after 10*H*W attempts the rest of the budget is filled uniformly
/// from the unsampled pixels. Points keep their draw order.
CoordGrid foveated_sample(const FoveaSpec& spec, std::size_t height, std::size_t width);

struct SparsePixel {
  double x = 0.0;
  double y = 0.0;
  std::array<double, 3> rgb{};
};

/// Sparse pixel set with its domain, as exchanged with the explorer UI:
/// {"height":H,"width":W,"kind":"cartesian","pixels":[{"x":..,"y":..,"rgb":[r,g,b]}]}.
nlohmann::json sparse_to_json(const std::vector<SparsePixel>& pixels, std::size_t height,
                              std::size_t width, GridKind kind = GridKind::cartesian);
std::vector<SparsePixel> sparse_from_json(const nlohmann::json& j, std::size_t* height,
                                          std::size_t* width);

/// Dense image from scattered samples. Sampled pixels pass through untouched;
/// every other pixel is the inverse-square-distance mean of its 4 nearest
/// samples (ties broken by lowest row-major index). Needs >= 4 samples.
Image fill_missing(const std::vector<SparsePixel>& samples, std::size_t height,
                   std::size_t width);

/// Integer grid at the output resolution; normalisation uses the output
/// extents, so embedding lookups land between table entries.
CoordGrid dense_grid(std::size_t out_height, std::size_t out_width, std::size_t height,
                     std::size_t width);

/// Lanczos window of radius `a`.
double lanczos_kernel(double t, int a = 3);

/// Separable Lanczos-3 resampling by an integer factor with clamped edges.
/// Output pixel o samples source position (o + 0.5) / factor - 0.5 with
/// weights normalised to sum to one.
Image lanczos_upsample(const Image& image, std::size_t factor);

/// crop_h x crop_w window of a cylindrical domain (H, W_pan); x0 wraps.
CoordGrid cylinder_crop(std::size_t pan_width, std::size_t height, std::size_t crop_w,
                        std::size_t crop_h, std::int64_t x0, std::size_t y0);

enum class BlendMode { horizontal_linear, radial };

struct BlendParams {
  double cx = 0.0;
  double cy = 0.0;
  double radius = 0.0;
};

/// Row-major alpha in [0, 1]. Horizontal: x / (W-1). Radial: distance from
/// (cx, cy) over radius, saturating at 1 (radius 0 gives 1 off-centre).
std::vector<double> blend_alpha_field(std::size_t height, std::size_t width, BlendMode mode,
                                      const BlendParams& params = {});

/// The same field evaluated at each grid point against the grid's (H, W).
std::vector<double> blend_alpha_points(const CoordGrid& grid, BlendMode mode,
                                       const BlendParams& params = {});

}  // namespace cips
