#include "cips/synthesis.hpp"

#include <map>
#include <stdexcept>
#include <string>

namespace cips {

CoordGrid model_grid(const GeneratorConfig& config) {
  CoordGrid g = full_grid(config.height, config.domain_width());
  g.kind = config.grid_kind();
  return g;
}

StyleVector style_from_seed(const Generator& gen, std::uint64_t seed) {
  NoGradGuard no_grad;
  return gen.map_latent(sample_latent(seed, gen.config().latent_dim));
}

Image synthesize_image(const Generator& gen, const std::vector<StyleVector>& block_styles,
                       unsigned threads) {
  const auto& cfg = gen.config();
  return image_from_rows(gen.render(model_grid(cfg), block_styles, {}, threads), cfg.height,
                         cfg.domain_width());
}

Image synthesize_image(const Generator& gen, std::uint64_t seed, unsigned threads) {
  return synthesize_image(gen, gen.repeat_style(style_from_seed(gen, seed)), threads);
}

Image layer_style_mix(const Generator& gen, const StyleVector& wa, const StyleVector& wb,
                      const std::optional<BlockRange>& range, unsigned threads) {
  return synthesize_image(gen, mixed_block_styles(gen, wa, wb, range), threads);
}

Tensor blend_points(const Generator& gen, const CoordGrid& grid, const StyleVector& wa,
                    const StyleVector& wb, const std::vector<double>& alpha, unsigned threads) {
  if (alpha.size() != grid.size()) {
    throw std::invalid_argument("blend: alpha field has " + std::to_string(alpha.size()) +
                                " entries for " + std::to_string(grid.size()) + " pixels");
  }
  NoGradGuard no_grad;
  std::vector<StyleVector> field;
  field.reserve(alpha.size());
  // Equal alphas share one style tensor so they are grouped into one pass.
  std::map<double, StyleVector> cache;
  for (double a : alpha) {
    auto it = cache.find(a);
    if (it == cache.end()) {
      it = cache.emplace(a, a == 0.0 ? wa : a == 1.0 ? wb : lerp_style(wa, wb, a)).first;
    }
    field.push_back(it->second);
  }
  return pixelwise_style_synthesize(gen, grid, field, {}, threads);
}

Image blend_image(const Generator& gen, const StyleVector& wa, const StyleVector& wb,
                  const std::vector<double>& alpha, unsigned threads) {
  const auto& cfg = gen.config();
  return image_from_rows(blend_points(gen, model_grid(cfg), wa, wb, alpha, threads), cfg.height,
                         cfg.domain_width());
}

std::vector<SparsePixel> synthesize_sparse(const Generator& gen, const CoordGrid& grid,
                                           const std::vector<StyleVector>& block_styles,
                                           unsigned threads) {
  const Tensor rgb = gen.render(grid, block_styles, {}, threads);
  auto v = rgb.data();
  std::vector<SparsePixel> out(grid.size());
  for (std::size_t i = 0; i < grid.size(); ++i) {
    out[i].x = grid.points[i].x;
    out[i].y = grid.points[i].y;
    for (std::size_t c = 0; c < 3; ++c) out[i].rgb[c] = v[i * 3 + c];
  }
  return out;
}

Image synthesize_grid_image(const Generator& gen, const CoordGrid& grid, std::size_t rows,
                            std::size_t cols, const std::vector<StyleVector>& block_styles,
                            unsigned threads) {
  if (rows * cols != grid.size()) {
    throw std::invalid_argument("grid of " + std::to_string(grid.size()) +
                                " points is not " + std::to_string(rows) + "x" +
                                std::to_string(cols));
  }
  return image_from_rows(gen.render(grid, block_styles, {}, threads), rows, cols);
}

}  // namespace cips
