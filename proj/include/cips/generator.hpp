#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cips/encoding.hpp"
#include "cips/tensor.hpp"

namespace cips {

enum class SkipMode { skips, residual, base };
enum class Activation { leaky, sine };

struct GeneratorConfig {
  std::size_t hidden_dim = 512;
  /// Each block is two ModFC layers (+ an RGB head in skips mode).
  std::size_t n_blocks = 7;
  std::size_t fourier_dim = 512;
  std::size_t embed_dim = 512;
  std::size_t height = 256;
  std::size_t width = 256;
  std::size_t latent_dim = 512;
  std::size_t mapping_depth = 4;
  bool use_fourier = true;
  bool use_embeddings = true;
  SkipMode skip_mode = SkipMode::skips;
  Activation activation = Activation::leaky;
  double eps = 1e-8;
  double leaky_slope = 0.2;
  double fourier_std = 10.0;
  /// Frequency multiplier of the first layer in the sine variant.
  double sine_omega = 30.0;
  bool cylindrical = false;
  /// Panorama circumference; 0 means 4 * height.
  std::size_t pan_width = 0;

  /// 256x256, width 512, 7 blocks.
  static GeneratorConfig paper_default();
  /// 16x16, width 32, 3 blocks.
  static GeneratorConfig desk();

  /// Throws std::invalid_argument naming the offending field.
  void validate() const;
  GridKind grid_kind() const { return cylindrical ? GridKind::cylindrical : GridKind::cartesian; }
  /// Azimuthal extent of the synthesis domain (pan width when cylindrical).
  std::size_t domain_width() const;
  std::size_t encoding_dim() const;

  nlohmann::json to_json() const;
  static GeneratorConfig from_json(const nlohmann::json& j);
  bool operator==(const GeneratorConfig&) const = default;
};

/// Applies a named architecture variant: default, base, ne, no-fourier, residual, sine.
GeneratorConfig with_variant(GeneratorConfig cfg, const std::string& variant);

const char* to_string(SkipMode m);
const char* to_string(Activation a);

struct StyleVector {
  Tensor w;  // (latent_dim)
};

struct DenseLayer {
  Tensor weight;  // (out, in)
  Tensor bias;    // (out)
};

Tensor dense_forward(const DenseLayer& layer, const Tensor& x);

/// psi = B_hat * phi + b with B_hat the style-modulated (and optionally
/// demodulated) weight. A = (style_weight, style_bias) maps w to column scales.
struct ModFCLayer {
  Tensor weight;        // B, (m, n)
  Tensor bias;          // b, (m)
  Tensor style_weight;  // A, (latent_dim, n)
  Tensor style_bias;    // (n)
  bool demodulate = true;
  double eps = 1e-8;
};

/// s = A(w), shape (n).
Tensor style_scales(const ModFCLayer& layer, const StyleVector& style);

/// B_hat[i][j] = s[j] B[i][j] / sqrt(eps + sum_k (s[k] B[i][k])^2); without
/// demodulation just s[j] B[i][j]. Throws std::domain_error on non-finite s.
Tensor modulate_weights(const Tensor& weight, const Tensor& scales, bool demodulate, double eps);

/// One output row per input row; rows never interact.
Tensor modfc_forward(const ModFCLayer& layer, const Tensor& phi, const StyleVector& style);

struct ParamCounts {
  std::size_t mapping = 0;
  std::size_t fourier = 0;
  std::size_t embeddings = 0;
  std::size_t backbone = 0;
  std::size_t rgb = 0;

  std::size_t total() const { return mapping + fourier + embeddings + backbone + rgb; }
  nlohmann::json to_json() const;
};

struct NamedParam {
  std::string name;
  Tensor tensor;
};

/// Inclusive 1-based block range for layer-wise style mixing.
struct BlockRange {
  std::size_t first = 1;
  std::size_t last = 1;
};

class Generator {
 public:
  Generator(GeneratorConfig config, std::uint64_t seed);

  const GeneratorConfig& config() const { return config_; }
  std::uint64_t init_seed() const { return init_seed_; }

  /// w = M(z). With mapping_depth 0, w == z.
  StyleVector map_latent(const Tensor& z) const;
  /// Rows of `z` mapped in one pass, shape (batch, latent_dim).
  Tensor map_latent_batch(const Tensor& z) const;

  /// Encoding followed by the unmodulated input projection; style-independent.
  Tensor input_features(const CoordGrid& grid, EncoderFlags flags = {}) const;

  /// Modulated part of the network. `block_styles` holds one style per block.
  /// When `block_rgb` is non-null it receives each block's RGB contribution
  /// (skips mode) or the single head output (other modes).
  Tensor backbone(const Tensor& features, const std::vector<StyleVector>& block_styles,
                  std::vector<Tensor>* block_rgb = nullptr) const;

  /// Per-point colours in [-1, 1] (unclamped), shape (points, 3).
  Tensor synthesize_pixels(const CoordGrid& grid, const StyleVector& style,
                           EncoderFlags flags = {}) const;
  Tensor synthesize_styles(const CoordGrid& grid, const std::vector<StyleVector>& block_styles,
                           EncoderFlags flags = {}) const;

  /// Inference without graph recording, fanned out over `threads` workers.
  /// The result does not depend on the thread count.
  Tensor render(const CoordGrid& grid, const std::vector<StyleVector>& block_styles,
                EncoderFlags flags = {}, unsigned threads = 1) const;

  std::vector<StyleVector> repeat_style(const StyleVector& style) const;

  const FourierFeatureMap* fourier() const { return fourier_ ? &*fourier_ : nullptr; }
  const CoordEmbeddingTable* embeddings() const { return embeddings_ ? &*embeddings_ : nullptr; }

  /// Stable parameter order; names encode the owning component.
  std::vector<NamedParam> named_parameters() const;
  std::vector<Tensor> parameters() const;
  ParamCounts count_params() const;

  /// Mutable access for tests and diagnostics.
  struct Block {
    ModFCLayer fc1;
    ModFCLayer fc2;
    std::optional<ModFCLayer> rgb;
  };
  std::vector<Block>& blocks() { return blocks_; }
  const std::vector<Block>& blocks() const { return blocks_; }
  std::optional<ModFCLayer>& final_rgb() { return final_rgb_; }
  const std::vector<DenseLayer>& mapping() const { return mapping_; }
  const DenseLayer& input_layer() const { return input_layer_; }

 private:
  Tensor activate(const Tensor& x, bool first_layer) const;

  GeneratorConfig config_;
  std::uint64_t init_seed_ = 0;
  std::vector<DenseLayer> mapping_;
  std::optional<FourierFeatureMap> fourier_;
  std::optional<CoordEmbeddingTable> embeddings_;
  DenseLayer input_layer_;
  std::vector<Block> blocks_;
  std::optional<ModFCLayer> final_rgb_;
};

/// Standard normal latent drawn from a seeded mt19937_64.
Tensor sample_latent(std::uint64_t seed, std::size_t dim);

/// Mean of M(z) over `samples` latents drawn from `seed`.
StyleVector mean_style(const Generator& gen, std::size_t samples, std::uint64_t seed);

/// Per-point styles; pixels sharing bit-identical styles are evaluated
/// together, so a constant field reproduces synthesize_pixels exactly.
Tensor pixelwise_style_synthesize(const Generator& gen, const CoordGrid& grid,
                                  const std::vector<StyleVector>& field, EncoderFlags flags = {},
                                  unsigned threads = 1);

/// (1 - alpha) * a + alpha * b; alpha 0 and 1 reproduce the endpoints exactly.
StyleVector lerp_style(const StyleVector& a, const StyleVector& b, double alpha);

/// Blocks inside `range` use wB, the rest wA. No range means wA throughout.
std::vector<StyleVector> mixed_block_styles(const Generator& gen, const StyleVector& wa,
                                            const StyleVector& wb,
                                            const std::optional<BlockRange>& range);

}  // namespace cips
