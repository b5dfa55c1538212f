#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <array>
#include <functional>
#include <memory>
#include <stdexcept>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "cips/generator.hpp"
#include "cips/image.hpp"
#include "cips/optim.hpp"
#include "cips/sampling.hpp"

namespace cips {

/// mean softplus(-logit).
Tensor g_loss(const Tensor& fake_logits);
/// mean softplus(-real) + mean softplus(fake).
Tensor d_loss(const Tensor& real_logits, const Tensor& fake_logits);

/// Maps a batch of images stored as pixel rows (batch * H * W, 3) to logits (batch, 1).
using Critic = std::function<Tensor(const Tensor&)>;

/// (gamma / 2) * mean over the batch of |grad_x D(x)|^2, differentiable with
/// respect to the critic's parameters. Throws GradError when D is evaluated
/// with gradient recording disabled.
Tensor r1_penalty(const Critic& critic, const Tensor& real, std::size_t batch, double gamma);

enum class DiscKind { mlp, small_conv };

struct DiscriminatorConfig {
  DiscKind kind = DiscKind::small_conv;
  /// Input side length (K in patch mode).
  std::size_t resolution = 16;
  /// Channel width of the conv stages.
  std::size_t width = 32;
  std::size_t stages = 3;
  bool residual = false;
  /// Hidden widths of the MLP kind.
  std::vector<std::size_t> mlp_widths{64, 64};
  double leaky_slope = 0.2;

  void validate() const;
  nlohmann::json to_json() const;
};

class Discriminator {
 public:
  Discriminator(DiscriminatorConfig config, std::uint64_t seed);

  const DiscriminatorConfig& config() const { return config_; }
  /// rows: (batch * R * R, 3) in row-major pixel order per image.
  Tensor forward(const Tensor& rows, std::size_t batch) const;
  Critic critic(std::size_t batch) const;

  std::vector<NamedParam> named_parameters() const;
  std::vector<Tensor> parameters() const;

 private:
  struct Conv {
    Tensor weight;  // (taps * in, out)
    Tensor bias;    // (out)
  };
  Tensor conv(const Conv& layer, const Tensor& x, std::size_t batch, std::size_t side,
              std::size_t stride, std::size_t kernel) const;

  DiscriminatorConfig config_;
  Conv from_rgb_;
  std::vector<Conv> convs_;
  std::vector<Conv> skips_;
  std::vector<DenseLayer> dense_;
};

/// Gather plan for a k x k convolution with zero padding k/2 over `batch`
/// images of side `side`; output rows are (batch, out_y, out_x, tap).
std::shared_ptr<const GatherPlan> conv_plan(std::size_t batch, std::size_t side,
                                            std::size_t stride, std::size_t kernel);

enum class DatasetKind { synthetic_solid, synthetic_gradient, image_folder };

struct Dataset {
  DatasetKind kind = DatasetKind::synthetic_solid;
  std::size_t resolution = 0;
  std::vector<Image> images;

  std::array<double, 3> channel_mean() const;
};

DatasetKind parse_dataset_kind(const std::string& name);
const char* to_string(DatasetKind kind);

/// solid: constant images with channels uniform in [-0.8, 0.8]; gradient:
/// linear ramps between two such colours along a random direction.
Dataset make_synthetic_dataset(DatasetKind kind, std::size_t n, std::size_t resolution,
                               std::uint64_t seed);
/// Every PNG in `dir` (sorted by name), centre-cropped and resized.
Dataset load_image_folder(const std::filesystem::path& dir, std::size_t resolution);

/// Stacks images into (n * H * W, 3) pixel rows.
Tensor images_to_rows(const std::vector<const Image*>& images);

struct PatchBatch {
  Tensor real;  // (batch * K * K, 3)
  std::vector<PatchSpec> specs;
};

/// One dilated K x K patch per image with sigma drawn uniformly from `strides`
/// and a uniformly placed corner. Throws std::invalid_argument when K or a
/// stride cannot fit the images.
PatchBatch patch_train_batch(const std::vector<const Image*>& images, std::size_t k,
                             const std::vector<std::size_t>& strides, std::mt19937_64& rng);

/// Pixels of a dilated patch in patch_grid order.
Tensor extract_patch(const Image& image, const PatchSpec& spec);

struct TrainConfig {
  double lr = 2e-3;
  double beta1 = 0.0;
  double beta2 = 0.99;
  double eps = 1e-8;
  double r1_gamma = 10.0;
  std::size_t r1_every = 16;
  std::size_t batch_size = 8;
  std::size_t steps = 1000;
  bool patch_enabled = false;
  std::size_t patch_size = 8;
  std::vector<std::size_t> patch_strides{1, 2};
  std::uint64_t seed = 0;
  /// Learning-rate multiplier for the mapping network.
  double mapping_lr_mult = 1.0;

  void validate() const;
  nlohmann::json to_json() const;
};

struct StepMetrics {
  std::size_t step = 0;
  double d_loss = 0.0;
  double g_loss = 0.0;
  /// Unscaled penalty on steps where R1 ran, 0 otherwise.
  double r1 = 0.0;
  bool r1_applied = false;
  double d_grad_norm = 0.0;
  double g_grad_norm = 0.0;
  /// Points the generator evaluated during this step.
  std::size_t synthesized_pixels = 0;

  nlohmann::json to_json() const;
  bool operator==(const StepMetrics&) const = default;
};

class NonFiniteLossError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Owns the optimiser state and the only RNG of a training run.
class Trainer {
 public:
  Trainer(Generator& gen, Discriminator& disc, const Dataset& data, TrainConfig config);

  /// One discriminator update (with lazy R1) followed by one generator update.
  StepMetrics step();
  /// Runs `steps` steps, streaming NDJSON records to `metrics` when given.
  std::vector<StepMetrics> run(std::size_t steps, std::ostream* metrics = nullptr);

  std::size_t steps_done() const { return step_; }

 private:
  struct FakeBatch {
    Tensor rows;
    std::size_t pixels = 0;
  };
  FakeBatch synthesize_fakes(bool record);
  std::vector<const Image*> sample_reals();

  Generator& gen_;
  Discriminator& disc_;
  const Dataset& data_;
  TrainConfig config_;
  std::mt19937_64 rng_;
  std::vector<Tensor> d_params_;
  std::vector<Tensor> g_mapping_params_;
  std::vector<Tensor> g_other_params_;
  AdamState d_opt_;
  AdamState g_map_opt_;
  AdamState g_opt_;
  std::size_t step_ = 0;
};

}  // namespace cips
