#include "cips/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>
#include <stdexcept>

namespace cips {

Tensor g_loss(const Tensor& fake_logits) { return mean(softplus(neg(fake_logits))); }

Tensor d_loss(const Tensor& real_logits, const Tensor& fake_logits) {
  return add(mean(softplus(neg(real_logits))), mean(softplus(fake_logits)));
}

Tensor r1_penalty(const Critic& critic, const Tensor& real, std::size_t batch, double gamma) {
  if (batch == 0) throw std::invalid_argument("r1_penalty: empty batch");
  if (!grad_mode_enabled()) {
    throw GradError("r1_penalty: discriminator evaluated with gradient recording disabled");
  }
  Tensor x = real.detach().set_requires_grad(true);
  Tensor out = sum(critic(x));
  if (!out.requires_grad()) return Tensor::scalar(0.0);
  const Tensor gx = grad(out, {x}, {.create_graph = true, .allow_unused = true}).front();
  return scale(sum(square(gx)), gamma / 2.0 / static_cast<double>(batch));
}

// ---------------------------------------------------------------------------
// Discriminator
// ---------------------------------------------------------------------------

void DiscriminatorConfig::validate() const {
  if (resolution < 2) throw std::invalid_argument("discriminator: resolution must be >= 2");
  if (kind == DiscKind::small_conv) {
    if (width == 0 || stages == 0) {
      throw std::invalid_argument("discriminator: width and stages must be positive");
    }
  } else if (mlp_widths.empty()) {
    throw std::invalid_argument("discriminator: mlp needs at least one hidden layer");
  }
}

nlohmann::json DiscriminatorConfig::to_json() const {
  return {{"kind", kind == DiscKind::mlp ? "mlp" : "small-conv"},
          {"resolution", resolution},
          {"width", width},
          {"stages", stages},
          {"residual", residual},
          {"mlp_widths", mlp_widths},
          {"leaky_slope", leaky_slope}};
}

namespace {

Tensor randn(Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = stddev * dist(rng);
  return Tensor::from(std::move(shape), std::move(v)).set_requires_grad(true);
}

Tensor zeros_param(std::size_t n) { return Tensor::zeros({n}).set_requires_grad(true); }

DenseLayer dense(std::size_t in, std::size_t out, std::mt19937_64& rng) {
  return {randn({out, in}, 1.0 / std::sqrt(double(in)), rng), zeros_param(out)};
}

std::size_t out_side(std::size_t side, std::size_t stride) { return (side - 1) / stride + 1; }

}  // namespace

std::shared_ptr<const GatherPlan> conv_plan(std::size_t batch, std::size_t side,
                                            std::size_t stride, std::size_t kernel) {
  auto plan = std::make_shared<GatherPlan>();
  const std::size_t os = out_side(side, stride);
  const std::size_t taps = kernel * kernel;
  const auto pad = static_cast<std::int64_t>(kernel / 2);
  const auto s = static_cast<std::int64_t>(side);
  plan->taps = 1;
  plan->index.reserve(batch * os * os * taps);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t oy = 0; oy < os; ++oy)
      for (std::size_t ox = 0; ox < os; ++ox)
        for (std::size_t ky = 0; ky < kernel; ++ky)
          for (std::size_t kx = 0; kx < kernel; ++kx) {
            const auto y = static_cast<std::int64_t>(oy * stride + ky) - pad;
            const auto x = static_cast<std::int64_t>(ox * stride + kx) - pad;
            const bool inside = y >= 0 && y < s && x >= 0 && x < s;
            plan->index.push_back(inside ? static_cast<std::int64_t>(b) * s * s + y * s + x : -1);
          }
  plan->weight.assign(plan->index.size(), 1.0);
  return plan;
}

Discriminator::Discriminator(DiscriminatorConfig config, std::uint64_t seed)
    : config_(std::move(config)) {
  config_.validate();
  std::mt19937_64 rng(seed);
  const std::size_t r = config_.resolution;
  if (config_.kind == DiscKind::mlp) {
    std::size_t in = r * r * 3;
    for (auto w : config_.mlp_widths) {
      dense_.push_back(dense(in, w, rng));
      in = w;
    }
    dense_.push_back(dense(in, 1, rng));
    return;
  }
  const std::size_t w = config_.width;
  from_rgb_ = {randn({3, w}, 1.0 / std::sqrt(3.0), rng), zeros_param(w)};
  std::size_t side = r;
  for (std::size_t s = 0; s < config_.stages; ++s) {
    convs_.push_back({randn({9 * w, w}, 1.0 / std::sqrt(9.0 * double(w)), rng), zeros_param(w)});
    if (config_.residual) {
      skips_.push_back({randn({w, w}, 1.0 / std::sqrt(double(w)), rng), zeros_param(w)});
    }
    side = out_side(side, 2);
  }
  dense_.push_back(dense(side * side * w, w, rng));
  dense_.push_back(dense(w, 1, rng));
}

Tensor Discriminator::conv(const Conv& layer, const Tensor& x, std::size_t batch,
                           std::size_t side, std::size_t stride, std::size_t kernel) const {
  const std::size_t os = out_side(side, stride);
  const std::size_t channels = x.dim(1);
  Tensor cols = kernel == 1 && stride == 1 ? x : weighted_gather(x, conv_plan(batch, side, stride, kernel));
  cols = reshape(cols, {batch * os * os, kernel * kernel * channels});
  return add(matmul(cols, layer.weight), layer.bias);
}

Tensor Discriminator::forward(const Tensor& rows, std::size_t batch) const {
  const std::size_t r = config_.resolution;
  if (rows.rank() != 2 || rows.dim(1) != 3 || rows.dim(0) != batch * r * r) {
    throw ShapeError("discriminator: expected (" + std::to_string(batch * r * r) + ", 3) rows, got " +
                     to_string(rows.shape()));
  }
  const double slope = config_.leaky_slope;
  Tensor h;
  if (config_.kind == DiscKind::mlp) {
    h = reshape(rows, {batch, r * r * 3});
  } else {
    h = leaky_relu(conv(from_rgb_, rows, batch, r, 1, 1), slope);
    std::size_t side = r;
    for (std::size_t s = 0; s < convs_.size(); ++s) {
      Tensor y = leaky_relu(conv(convs_[s], h, batch, side, 2, 3), slope);
      if (config_.residual) {
        y = scale(add(y, conv(skips_[s], h, batch, side, 2, 1)), 1.0 / std::numbers::sqrt2);
      }
      h = y;
      side = out_side(side, 2);
    }
    h = reshape(h, {batch, side * side * config_.width});
  }
  for (std::size_t i = 0; i + 1 < dense_.size(); ++i) {
    h = leaky_relu(dense_forward(dense_[i], h), slope);
  }
  return dense_forward(dense_.back(), h);
}

Critic Discriminator::critic(std::size_t batch) const {
  return [this, batch](const Tensor& x) { return forward(x, batch); };
}

std::vector<NamedParam> Discriminator::named_parameters() const {
  std::vector<NamedParam> out;
  if (from_rgb_.weight.defined()) {
    out.push_back({"from_rgb.weight", from_rgb_.weight});
    out.push_back({"from_rgb.bias", from_rgb_.bias});
  }
  for (std::size_t i = 0; i < convs_.size(); ++i) {
    out.push_back({"conv." + std::to_string(i) + ".weight", convs_[i].weight});
    out.push_back({"conv." + std::to_string(i) + ".bias", convs_[i].bias});
  }
  for (std::size_t i = 0; i < skips_.size(); ++i) {
    out.push_back({"skip." + std::to_string(i) + ".weight", skips_[i].weight});
    out.push_back({"skip." + std::to_string(i) + ".bias", skips_[i].bias});
  }
  for (std::size_t i = 0; i < dense_.size(); ++i) {
    out.push_back({"dense." + std::to_string(i) + ".weight", dense_[i].weight});
    out.push_back({"dense." + std::to_string(i) + ".bias", dense_[i].bias});
  }
  return out;
}

std::vector<Tensor> Discriminator::parameters() const {
  std::vector<Tensor> out;
  for (auto& p : named_parameters()) out.push_back(p.tensor);
  return out;
}

// ---------------------------------------------------------------------------
// Data
// ---------------------------------------------------------------------------

std::array<double, 3> Dataset::channel_mean() const {
  std::array<double, 3> acc{0.0, 0.0, 0.0};
  std::size_t count = 0;
  for (const auto& img : images) {
    for (std::size_t i = 0; i < img.height * img.width; ++i)
      for (std::size_t c = 0; c < 3; ++c) acc[c] += img.pixels[i * 3 + c];
    count += img.height * img.width;
  }
  for (auto& v : acc) v /= static_cast<double>(std::max<std::size_t>(count, 1));
  return acc;
}

DatasetKind parse_dataset_kind(const std::string& name) {
  if (name == "synthetic-solid" || name == "solid") return DatasetKind::synthetic_solid;
  if (name == "synthetic-gradient" || name == "gradient") return DatasetKind::synthetic_gradient;
  if (name == "image-folder") return DatasetKind::image_folder;
  throw std::invalid_argument("unknown dataset kind '" + name + "'");
}

const char* to_string(DatasetKind kind) {
  switch (kind) {
    case DatasetKind::synthetic_solid:
      return "synthetic-solid";
    case DatasetKind::synthetic_gradient:
      return "synthetic-gradient";
    case DatasetKind::image_folder:
      return "image-folder";
  }
  return "?";
}

Dataset make_synthetic_dataset(DatasetKind kind, std::size_t n, std::size_t resolution,
                               std::uint64_t seed) {
  if (kind == DatasetKind::image_folder) {
    throw std::invalid_argument("make_synthetic_dataset: image-folder is not synthetic");
  }
  if (resolution < 2) throw std::invalid_argument("make_synthetic_dataset: resolution < 2");
  Dataset ds{kind, resolution, {}};
  ds.images.reserve(n);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> color(-0.8, 0.8);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  const double span = static_cast<double>(resolution - 1);
  for (std::size_t i = 0; i < n; ++i) {
    std::array<double, 3> a{}, b{};
    for (auto& v : a) v = color(rng);
    Image img(resolution, resolution);
    if (kind == DatasetKind::synthetic_solid) {
      for (std::size_t p = 0; p < resolution * resolution; ++p)
        for (std::size_t c = 0; c < 3; ++c) img.pixels[p * 3 + c] = a[c];
    } else {
      for (auto& v : b) v = color(rng);
      const double theta = angle(rng);
      const double dx = std::cos(theta), dy = std::sin(theta);
      // Projection onto the ramp direction, rescaled so the corners span [0, 1].
      const double lo = -0.5 * (std::abs(dx) + std::abs(dy));
      const double hi = -lo;
      for (std::size_t y = 0; y < resolution; ++y)
        for (std::size_t x = 0; x < resolution; ++x) {
          const double p = (double(x) / span - 0.5) * dx + (double(y) / span - 0.5) * dy;
          const double t = (p - lo) / (hi - lo);
          for (std::size_t c = 0; c < 3; ++c) img.at(y, x, c) = (1.0 - t) * a[c] + t * b[c];
        }
    }
    ds.images.push_back(std::move(img));
  }
  return ds;
}

Dataset load_image_folder(const std::filesystem::path& dir, std::size_t resolution) {
  std::vector<std::filesystem::path> files;
  for (const auto& entry : std::filesystem::directory_iterator(dir)) {
    auto ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (entry.is_regular_file() && ext == ".png") files.push_back(entry.path());
  }
  if (files.empty()) throw std::invalid_argument("image folder " + dir.string() + " has no PNG files");
  std::sort(files.begin(), files.end());
  Dataset ds{DatasetKind::image_folder, resolution, {}};
  for (const auto& f : files) ds.images.push_back(center_crop_resize(read_png(f), resolution));
  return ds;
}

Tensor images_to_rows(const std::vector<const Image*>& images) {
  std::size_t total = 0;
  for (const auto* img : images) total += img->height * img->width;
  std::vector<double> v;
  v.reserve(total * 3);
  for (const auto* img : images) v.insert(v.end(), img->pixels.begin(), img->pixels.end());
  return Tensor::from({total, 3}, std::move(v));
}

namespace {

void check_patch_rule(std::size_t resolution, std::size_t k, const std::vector<std::size_t>& strides) {
  if (k == 0 || k > resolution) {
    throw std::invalid_argument("patch: K=" + std::to_string(k) + " must lie in [1, " +
                                std::to_string(resolution) + "]");
  }
  if (strides.empty()) throw std::invalid_argument("patch: no strides configured");
  for (auto s : strides) {
    if (s == 0 || (k - 1) * s >= resolution) {
      throw std::invalid_argument("patch: K=" + std::to_string(k) + " with sigma=" +
                                  std::to_string(s) + " does not fit resolution " +
                                  std::to_string(resolution));
    }
  }
}

PatchSpec random_patch(std::size_t resolution, std::size_t k, const std::vector<std::size_t>& strides,
                       std::mt19937_64& rng) {
  PatchSpec spec;
  spec.size = k;
  spec.stride = strides[std::uniform_int_distribution<std::size_t>(0, strides.size() - 1)(rng)];
  const std::size_t room = resolution - (k - 1) * spec.stride;
  std::uniform_int_distribution<std::size_t> corner(0, room - 1);
  spec.u = corner(rng);
  spec.v = corner(rng);
  return spec;
}

double grad_norm(const std::vector<Tensor>& grads) {
  double acc = 0.0;
  for (const auto& g : grads)
    for (double v : g.data()) acc += v * v;
  return std::sqrt(acc);
}

}  // namespace

Tensor extract_patch(const Image& image, const PatchSpec& spec) {
  validate_patch(spec, image.height, image.width);
  std::vector<double> v;
  v.reserve(spec.size * spec.size * 3);
  for (std::size_t j = 0; j < spec.size; ++j)
    for (std::size_t i = 0; i < spec.size; ++i)
      for (std::size_t c = 0; c < 3; ++c)
        v.push_back(image.at(spec.v + j * spec.stride, spec.u + i * spec.stride, c));
  return Tensor::from({spec.size * spec.size, 3}, std::move(v));
}

PatchBatch patch_train_batch(const std::vector<const Image*>& images, std::size_t k,
                             const std::vector<std::size_t>& strides, std::mt19937_64& rng) {
  PatchBatch out;
  std::vector<Tensor> parts;
  for (const auto* img : images) {
    if (img->height != img->width) throw std::invalid_argument("patch: images must be square");
    check_patch_rule(img->height, k, strides);
    out.specs.push_back(random_patch(img->height, k, strides, rng));
    parts.push_back(extract_patch(*img, out.specs.back()));
  }
  out.real = parts.empty() ? Tensor::zeros({0, 3}) : concat(parts, 0);
  return out;
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

void TrainConfig::validate() const {
  if (!(lr >= 0.0)) throw std::invalid_argument("train.lr must be non-negative");
  if (batch_size == 0) throw std::invalid_argument("train.batch_size must be positive");
  if (r1_every == 0) throw std::invalid_argument("train.r1_every must be positive");
  if (!(r1_gamma >= 0.0)) throw std::invalid_argument("train.r1_gamma must be non-negative");
}

nlohmann::json TrainConfig::to_json() const {
  return {{"lr", lr},
          {"beta1", beta1},
          {"beta2", beta2},
          {"eps", eps},
          {"r1_gamma", r1_gamma},
          {"r1_every", r1_every},
          {"batch_size", batch_size},
          {"steps", steps},
          {"patch", {{"enabled", patch_enabled}, {"k", patch_size}, {"strides", patch_strides}}},
          {"seed", seed},
          {"mapping_lr_mult", mapping_lr_mult}};
}

nlohmann::json StepMetrics::to_json() const {
  return {{"step", step},
          {"d_loss", d_loss},
          {"g_loss", g_loss},
          {"r1", r1},
          {"r1_applied", r1_applied},
          {"d_grad_norm", d_grad_norm},
          {"g_grad_norm", g_grad_norm},
          {"synthesized_pixels", synthesized_pixels}};
}

Trainer::Trainer(Generator& gen, Discriminator& disc, const Dataset& data, TrainConfig config)
    : gen_(gen), disc_(disc), data_(data), config_(std::move(config)), rng_(config_.seed) {
  config_.validate();
  if (data_.images.empty()) throw std::invalid_argument("trainer: empty dataset");
  const auto& gc = gen_.config();
  if (gc.cylindrical) throw std::invalid_argument("trainer: cylindrical generators are not trained");
  if (data_.resolution != gc.height || gc.height != gc.width) {
    throw std::invalid_argument("trainer: dataset resolution " + std::to_string(data_.resolution) +
                                " does not match generator " + std::to_string(gc.height) + "x" +
                                std::to_string(gc.width));
  }
  const std::size_t d_res = config_.patch_enabled ? config_.patch_size : gc.height;
  if (config_.patch_enabled) check_patch_rule(gc.height, config_.patch_size, config_.patch_strides);
  if (disc_.config().resolution != d_res) {
    throw std::invalid_argument("trainer: discriminator expects " +
                                std::to_string(disc_.config().resolution) + "px inputs, batches are " +
                                std::to_string(d_res) + "px");
  }
  for (auto& p : gen_.named_parameters()) {
    (p.name.rfind("mapping.", 0) == 0 ? g_mapping_params_ : g_other_params_).push_back(p.tensor);
  }
  d_params_ = disc_.parameters();
  d_opt_ = AdamState::for_params(d_params_, config_.lr, config_.beta1, config_.beta2, config_.eps);
  g_map_opt_ = AdamState::for_params(g_mapping_params_, config_.lr * config_.mapping_lr_mult,
                                     config_.beta1, config_.beta2, config_.eps);
  g_opt_ = AdamState::for_params(g_other_params_, config_.lr, config_.beta1, config_.beta2,
                                 config_.eps);
}

std::vector<const Image*> Trainer::sample_reals() {
  std::uniform_int_distribution<std::size_t> pick(0, data_.images.size() - 1);
  std::vector<const Image*> out;
  for (std::size_t i = 0; i < config_.batch_size; ++i) out.push_back(&data_.images[pick(rng_)]);
  return out;
}

Trainer::FakeBatch Trainer::synthesize_fakes(bool record) {
  const auto& gc = gen_.config();
  GradModeGuard mode(record);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> z(config_.batch_size * gc.latent_dim);
  for (auto& v : z) v = normal(rng_);
  const Tensor w = gen_.map_latent_batch(Tensor::from({config_.batch_size, gc.latent_dim}, std::move(z)));

  FakeBatch out;
  std::vector<Tensor> parts;
  Tensor shared;
  if (!config_.patch_enabled) shared = gen_.input_features(full_grid(gc.height, gc.width));
  for (std::size_t b = 0; b < config_.batch_size; ++b) {
    const StyleVector style{reshape(slice(w, 0, b, b + 1), {gc.latent_dim})};
    Tensor features = shared;
    if (config_.patch_enabled) {
      const PatchSpec spec = random_patch(gc.height, config_.patch_size, config_.patch_strides, rng_);
      features = gen_.input_features(patch_grid(spec, gc.height, gc.width));
    }
    parts.push_back(gen_.backbone(features, gen_.repeat_style(style)));
    out.pixels += features.dim(0);
  }
  out.rows = concat(parts, 0);
  return out;
}

StepMetrics Trainer::step() {
  StepMetrics m;
  m.step = step_;
  const std::size_t batch = config_.batch_size;

  // Discriminator update.
  {
    const auto reals = sample_reals();
    const Tensor real = config_.patch_enabled
                            ? patch_train_batch(reals, config_.patch_size, config_.patch_strides, rng_).real
                            : images_to_rows(reals);
    const FakeBatch fake = synthesize_fakes(false);
    m.synthesized_pixels += fake.pixels;
    Tensor loss = d_loss(disc_.forward(real, batch), disc_.forward(fake.rows, batch));
    m.d_loss = loss.item();
    Tensor total = loss;
    if (step_ % config_.r1_every == 0) {
      const Tensor r1 = r1_penalty(disc_.critic(batch), real, batch, config_.r1_gamma);
      m.r1 = r1.item();
      m.r1_applied = true;
      total = add(total, scale(r1, static_cast<double>(config_.r1_every)));
    }
    if (!std::isfinite(m.d_loss) || !std::isfinite(m.r1)) {
      throw NonFiniteLossError("step " + std::to_string(step_) + ": discriminator loss " +
                               std::to_string(m.d_loss) + ", r1 " + std::to_string(m.r1));
    }
    const auto grads = grad(total, d_params_);
    m.d_grad_norm = grad_norm(grads);
    adam_step(d_params_, grads, d_opt_);
  }

  // Generator update.
  {
    const FakeBatch fake = synthesize_fakes(true);
    m.synthesized_pixels += fake.pixels;
    const Tensor loss = g_loss(disc_.forward(fake.rows, batch));
    m.g_loss = loss.item();
    if (!std::isfinite(m.g_loss)) {
      throw NonFiniteLossError("step " + std::to_string(step_) + ": generator loss " +
                               std::to_string(m.g_loss));
    }
    std::vector<Tensor> wrt = g_mapping_params_;
    wrt.insert(wrt.end(), g_other_params_.begin(), g_other_params_.end());
    const auto grads = grad(loss, wrt);
    m.g_grad_norm = grad_norm(grads);
    const std::vector<Tensor> map_grads(grads.begin(),
                                        grads.begin() + static_cast<std::ptrdiff_t>(g_mapping_params_.size()));
    const std::vector<Tensor> other_grads(grads.begin() + static_cast<std::ptrdiff_t>(g_mapping_params_.size()),
                                          grads.end());
    if (!g_mapping_params_.empty()) adam_step(g_mapping_params_, map_grads, g_map_opt_);
    adam_step(g_other_params_, other_grads, g_opt_);
  }
  ++step_;
  return m;
}

std::vector<StepMetrics> Trainer::run(std::size_t steps, std::ostream* metrics) {
  std::vector<StepMetrics> out;
  out.reserve(steps);
  for (std::size_t i = 0; i < steps; ++i) {
    out.push_back(step());
    if (metrics != nullptr) *metrics << out.back().to_json().dump() << '\n';
  }
  return out;
}

}  // namespace cips
