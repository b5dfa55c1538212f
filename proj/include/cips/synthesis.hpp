#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "cips/generator.hpp"
#include "cips/image.hpp"
#include "cips/sampling.hpp"

namespace cips {

/// Full integer grid of the model's domain (H x W, or H x W_pan when cylindrical).
CoordGrid model_grid(const GeneratorConfig& config);

/// w = M(z) for the latent drawn from `seed`.
StyleVector style_from_seed(const Generator& gen, std::uint64_t seed);

/// Full-domain image. All CLI and service image paths go through here.
Image synthesize_image(const Generator& gen, const std::vector<StyleVector>& block_styles,
                       unsigned threads = 1);
Image synthesize_image(const Generator& gen, std::uint64_t seed, unsigned threads = 1);

Image layer_style_mix(const Generator& gen, const StyleVector& wa, const StyleVector& wb,
                      const std::optional<BlockRange>& range, unsigned threads = 1);

/// Per-pixel style w = (1 - alpha) wA + alpha wB over the full domain.
Image blend_image(const Generator& gen, const StyleVector& wa, const StyleVector& wb,
                  const std::vector<double>& alpha, unsigned threads = 1);

/// Per-point blended styles over an arbitrary grid, shape (points, 3).
Tensor blend_points(const Generator& gen, const CoordGrid& grid, const StyleVector& wa,
                    const StyleVector& wb, const std::vector<double>& alpha, unsigned threads = 1);

/// Synthesises only the points of `grid` and returns them as sparse pixels.
std::vector<SparsePixel> synthesize_sparse(const Generator& gen, const CoordGrid& grid,
                                           const std::vector<StyleVector>& block_styles,
                                           unsigned threads = 1);

/// Image of an arbitrary rectangular grid laid out row-major (patches, crops, dense grids).
Image synthesize_grid_image(const Generator& gen, const CoordGrid& grid, std::size_t rows,
                            std::size_t cols, const std::vector<StyleVector>& block_styles,
                            unsigned threads = 1);

}  // namespace cips
