#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "cips/analysis.hpp"
#include "cips/checkpoint.hpp"
#include "cips/config.hpp"
#include "cips/generator.hpp"
#include "cips/image.hpp"
#include "cips/sampling.hpp"
#include "cips/service.hpp"
#include "cips/synthesis.hpp"
#include "cips/tensor_io.hpp"
#include "cips/training.hpp"
#include "cips/verify.hpp"

namespace fs = std::filesystem;
using namespace cips;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitVerify = 3;

/// Bad input from the command line: missing files, malformed configs, bad values.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ModelFlags {
  std::string ckpt;
  std::string config;
  std::uint64_t model_seed = 0;

  void add(CLI::App* cmd) {
    cmd->add_option("--ckpt", ckpt, "Checkpoint to load");
    cmd->add_option("--config", config, "Preset (desk, paper-default, desk:<variant>) or TOML path when no checkpoint is given");
    cmd->add_option("--model-seed", model_seed, "Initialisation seed for an untrained --config model");
  }

  Generator load() const {
    if (!ckpt.empty()) {
      if (!fs::exists(ckpt)) throw UsageError("checkpoint not found: " + ckpt);
      return load_checkpoint(ckpt);
    }
    if (config.empty()) throw UsageError("one of --ckpt or --config is required");
    const RunConfig rc = resolve_config(config);
    return Generator(rc.model, model_seed);
  }
};

unsigned default_threads() { return std::max(1u, std::thread::hardware_concurrency()); }

void add_threads(CLI::App* cmd, unsigned& threads) {
  cmd->add_option("--threads", threads, "Worker threads (outputs do not depend on this)")
      ->check(CLI::PositiveNumber);
}

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

BlendMode parse_blend_mode(const std::string& s) {
  if (s == "horizontal-linear") return BlendMode::horizontal_linear;
  if (s == "radial") return BlendMode::radial;
  throw UsageError("unknown blend mode: " + s);
}

std::string component_table(const std::vector<std::pair<std::string, ParamCounts>>& columns) {
  std::ostringstream out;
  out << std::left << std::setw(12) << "component";
  for (const auto& c : columns) out << std::right << std::setw(14) << c.first;
  out << '\n';
  auto row = [&](const char* name, std::size_t ParamCounts::*field) {
    out << std::left << std::setw(12) << name;
    for (const auto& c : columns) out << std::right << std::setw(14) << c.second.*field;
    out << '\n';
  };
  row("mapping", &ParamCounts::mapping);
  row("fourier", &ParamCounts::fourier);
  row("embeddings", &ParamCounts::embeddings);
  row("backbone", &ParamCounts::backbone);
  row("rgb", &ParamCounts::rgb);
  out << std::left << std::setw(12) << "total";
  for (const auto& c : columns) out << std::right << std::setw(14) << c.second.total();
  out << '\n';
  return out.str();
}

Dataset build_dataset(const RunConfig& rc) {
  if (rc.data.kind == DatasetKind::image_folder) {
    if (rc.data.folder.empty()) throw UsageError("data.folder is required for image-folder");
    if (!fs::is_directory(rc.data.folder)) throw UsageError("data.folder not found: " + rc.data.folder.string());
    return load_image_folder(rc.data.folder, rc.model.height);
  }
  return make_synthetic_dataset(rc.data.kind, rc.data.count, rc.model.height, rc.data.seed);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conditionally-independent pixel synthesis toolkit"};
  app.require_subcommand(1);
  unsigned threads = default_threads();

  // train
  auto* train = app.add_subcommand("train", "Adversarial training run");
  std::string train_config, train_out = "model.ckpt", train_metrics;
  std::optional<std::size_t> train_steps;
  std::optional<std::uint64_t> train_seed;
  train->add_option("--config", train_config, "Run config (preset or TOML path)")->required();
  train->add_option("--out", train_out, "Checkpoint written at the end");
  train->add_option("--metrics", train_metrics, "NDJSON metrics file (default stdout)");
  train->add_option("--steps", train_steps, "Override train.steps");
  train->add_option("--seed", train_seed, "Override train.seed");

  // sample
  auto* sample = app.add_subcommand("sample", "Synthesise the full image for one seed");
  ModelFlags sample_model;
  std::uint64_t sample_seed = 0;
  std::string sample_out = "sample.png";
  sample_model.add(sample);
  sample->add_option("--seed", sample_seed, "Latent seed");
  sample->add_option("--out", sample_out, "Output PNG");
  add_threads(sample, threads);

  // foveate
  auto* foveate = app.add_subcommand("foveate", "Foveated sampling followed by fill");
  ModelFlags fov_model;
  std::uint64_t fov_seed = 0, fov_gaze_seed = 0;
  double fov_fraction = 0.25;
  std::optional<double> fov_cx, fov_cy, fov_sigma;
  std::string fov_out = "foveated.png", fov_sparse;
  fov_model.add(foveate);
  foveate->add_option("--seed", fov_seed, "Latent seed");
  foveate->add_option("--fraction", fov_fraction, "Fraction of pixels synthesised")->check(CLI::Range(0.0, 1.0));
  foveate->add_option("--gaze-seed", fov_gaze_seed, "Seed of the point sampler");
  foveate->add_option("--cx", fov_cx, "Gaze x (default centre)");
  foveate->add_option("--cy", fov_cy, "Gaze y (default centre)");
  foveate->add_option("--sigma", fov_sigma, "Gaze spread in pixels");
  foveate->add_option("--out", fov_out, "Filled PNG");
  foveate->add_option("--sparse-out", fov_sparse, "Sparse pixels as JSON");
  add_threads(foveate, threads);

  // upsample
  auto* upsample = app.add_subcommand("upsample", "Dense-grid synthesis next to Lanczos upsampling");
  ModelFlags up_model;
  std::uint64_t up_seed = 0;
  std::size_t up_factor = 2;
  std::string up_out = "upsample.png";
  up_model.add(upsample);
  upsample->add_option("--seed", up_seed, "Latent seed");
  upsample->add_option("--factor", up_factor, "Integer upsampling factor")->check(CLI::PositiveNumber);
  upsample->add_option("--out", up_out, "Side-by-side PNG (dense | lanczos)");
  add_threads(upsample, threads);

  // panorama
  auto* panorama = app.add_subcommand("panorama", "Cylindrical panorama and a sweep of crops");
  ModelFlags pan_model;
  std::uint64_t pan_seed = 0;
  std::size_t pan_crop = 0, pan_frames = 8, pan_width = 0;
  std::string pan_out = "panorama.png", pan_sweep;
  pan_model.add(panorama);
  panorama->add_option("--seed", pan_seed, "Latent seed");
  panorama->add_option("--pan-width", pan_width, "Circumference for an untrained --config model (default 4H)");
  panorama->add_option("--crop-width", pan_crop, "Crop width of the sweep (default H)");
  panorama->add_option("--frames", pan_frames, "Crops in the sweep")->check(CLI::PositiveNumber);
  panorama->add_option("--out", pan_out, "Full panorama PNG");
  panorama->add_option("--sweep-out", pan_sweep, "Strip of crops sweeping one full turn");
  add_threads(panorama, threads);

  // blend
  auto* blend = app.add_subcommand("blend", "Per-pixel blend of two styles");
  ModelFlags blend_model;
  std::uint64_t blend_a = 0, blend_b = 1;
  std::string blend_mode = "horizontal-linear", blend_out = "blend.png";
  std::optional<double> blend_cx, blend_cy, blend_radius;
  blend_model.add(blend);
  blend->add_option("--seed-a", blend_a, "Seed of style A");
  blend->add_option("--seed-b", blend_b, "Seed of style B");
  blend->add_option("--mode", blend_mode, "horizontal-linear or radial");
  blend->add_option("--cx", blend_cx, "Radial centre x");
  blend->add_option("--cy", blend_cy, "Radial centre y");
  blend->add_option("--radius", blend_radius, "Radial radius");
  blend->add_option("--out", blend_out, "Output PNG");
  add_threads(blend, threads);

  // mix
  auto* mix = app.add_subcommand("mix", "Layer-wise style mixing");
  ModelFlags mix_model;
  std::uint64_t mix_a = 0, mix_b = 1;
  std::size_t mix_first = 1;
  std::optional<std::size_t> mix_last;
  std::string mix_out = "mix.png";
  mix_model.add(mix);
  mix->add_option("--seed-a", mix_a, "Seed of style A");
  mix->add_option("--seed-b", mix_b, "Seed of style B (used inside the block range)");
  mix->add_option("--first", mix_first, "First block taking style B (1-based)");
  mix->add_option("--last", mix_last, "Last block taking style B (default: last block)");
  mix->add_option("--out", mix_out, "Output PNG");
  add_threads(mix, threads);

  // interpolate
  auto* interp = app.add_subcommand("interpolate", "Latent interpolation strip");
  ModelFlags interp_model;
  std::uint64_t interp_a = 0, interp_b = 1;
  std::size_t interp_steps = 8;
  std::string interp_space = "w", interp_out = "interpolate.png";
  interp_model.add(interp);
  interp->add_option("--seed-a", interp_a, "Start seed");
  interp->add_option("--seed-b", interp_b, "End seed");
  interp->add_option("--steps", interp_steps, "Frames including endpoints");
  interp->add_option("--space", interp_space, "z or w")->check(CLI::IsMember({"z", "w"}));
  interp->add_option("--out", interp_out, "Strip PNG");
  add_threads(interp, threads);

  // spectrum
  auto* spectrum = app.add_subcommand("spectrum", "Average magnitude spectrum and azimuthal profile");
  ModelFlags spec_model;
  std::uint64_t spec_seed = 0;
  std::size_t spec_count = 64;
  std::string spec_real, spec_prefix = "spectrum";
  spec_model.add(spectrum);
  spectrum->add_option("--seed", spec_seed, "First latent seed");
  spectrum->add_option("--count", spec_count, "Generated images")->check(CLI::PositiveNumber);
  spectrum->add_option("--real", spec_real, "Folder of real PNGs for a paired profile");
  spectrum->add_option("--out-prefix", spec_prefix, "Writes <prefix>.png, <prefix>.ctnsr and <prefix>.csv");
  add_threads(spectrum, threads);

  // pca-embed
  auto* pca_cmd = app.add_subcommand("pca-embed", "PCA of the coordinate embedding table");
  ModelFlags pca_model;
  std::size_t pca_k = 3;
  std::string pca_out = "pca.png", pca_tensor;
  pca_model.add(pca_cmd);
  pca_cmd->add_option("-k,--components", pca_k, "Components kept")->check(CLI::PositiveNumber);
  pca_cmd->add_option("--out", pca_out, "RGB image of the first three components");
  pca_cmd->add_option("--projections-out", pca_tensor, "Projections as a CTNSR01 tensor (H*W, k)");

  // params
  auto* params = app.add_subcommand("params", "Parameter counts per component");
  std::string params_config = "paper-default";
  bool params_variants = false, params_json = false;
  params->add_option("--config", params_config, "Preset or TOML path");
  params->add_flag("--variants", params_variants, "Also count the base and NE variants");
  params->add_flag("--json", params_json, "Print JSON instead of a table");

  // verify
  auto* verify = app.add_subcommand("verify", "Run the acceptance checks");
  std::vector<std::string> verify_only;
  std::string verify_workdir;
  std::size_t verify_steps = VerifyOptions{}.toy_steps;
  verify->add_option("--only", verify_only, "Check ids, e.g. P1 P5")->delimiter(',');
  verify->add_option("--workdir", verify_workdir, "Scratch directory (default: a temp dir)");
  verify->add_option("--toy-steps", verify_steps, "Training steps of the toy run")->check(CLI::Range(1, 5000));
  add_threads(verify, threads);

  // serve
  auto* serve = app.add_subcommand("serve", "HTTP inference service");
  std::string serve_ckpt, serve_addr, serve_ui;
  ServiceOptions serve_opts;
  serve->add_option("--ckpt", serve_ckpt, "Checkpoint (default $CIPS_CKPT)");
  serve->add_option("--addr", serve_addr, "host:port (default $CIPS_ADDR or 127.0.0.1:8080)");
  serve->add_option("--ui-dir", serve_ui, "Static assets served under /ui (default ./ui when present)");
  serve->add_option("--workers", serve_opts.workers, "Concurrent synthesis workers")->check(CLI::PositiveNumber);
  serve->add_option("--queue-depth", serve_opts.queue_depth, "Waiting requests before 503");
  serve->add_option("--pixel-cap", serve_opts.pixel_cap, "Largest point count per request")->check(CLI::PositiveNumber);
  serve->add_option("--threads", serve_opts.threads_per_request, "Threads per request")->check(CLI::PositiveNumber);

  // info
  auto* info = app.add_subcommand("info", "Checkpoint metadata");
  std::string info_ckpt;
  info->add_option("ckpt,--ckpt", info_ckpt, "Checkpoint")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*train) {
      RunConfig rc = resolve_config(train_config);
      if (train_steps) rc.train.steps = *train_steps;
      if (train_seed) rc.train.seed = *train_seed;
      rc.train.validate();
      const Dataset data = build_dataset(rc);
      Generator gen(rc.model, rc.model_seed);
      Discriminator disc(rc.disc, rc.train.seed + 1);
      Trainer trainer(gen, disc, data, rc.train);
      std::ofstream file;
      std::ostream* metrics = &std::cout;
      if (!train_metrics.empty()) {
        ensure_parent(train_metrics);
        file.open(train_metrics);
        if (!file) throw UsageError("cannot write " + train_metrics);
        metrics = &file;
      }
      trainer.run(rc.train.steps, metrics);
      ensure_parent(train_out);
      save_checkpoint(train_out, gen);
      std::cerr << "trained " << rc.train.steps << " steps on " << data.images.size() << " images; wrote "
                << train_out << '\n';
    } else if (*sample) {
      const Generator gen = sample_model.load();
      ensure_parent(sample_out);
      write_bytes(sample_out, sample_png_bytes(gen, sample_seed, threads));
      std::cerr << "wrote " << sample_out << '\n';
    } else if (*foveate) {
      const Generator gen = fov_model.load();
      const auto& cfg = gen.config();
      const std::size_t H = cfg.height, W = cfg.domain_width();
      FoveaSpec spec = FoveaSpec::centered(H, W, fov_fraction, fov_gaze_seed);
      if (fov_cx) spec.cx = *fov_cx;
      if (fov_cy) spec.cy = *fov_cy;
      if (fov_sigma) spec.sigma = *fov_sigma;
      const CoordGrid grid = foveated_sample(spec, H, W);
      const auto styles = gen.repeat_style(style_from_seed(gen, fov_seed));
      const auto pixels = synthesize_sparse(gen, grid, styles, threads);
      std::cerr << "synthesized " << pixels.size() << " of " << H * W << " pixels (budget "
                << foveated_budget(fov_fraction, H, W) << ")\n";
      if (!fov_sparse.empty()) {
        ensure_parent(fov_sparse);
        std::ofstream(fov_sparse) << sparse_to_json(pixels, H, W, cfg.grid_kind()).dump() << '\n';
      }
      ensure_parent(fov_out);
      write_png(fov_out, fill_missing(pixels, H, W));
      std::cerr << "wrote " << fov_out << '\n';
    } else if (*upsample) {
      const Generator gen = up_model.load();
      const auto& cfg = gen.config();
      const auto styles = gen.repeat_style(style_from_seed(gen, up_seed));
      const std::size_t oh = cfg.height * up_factor, ow = cfg.width * up_factor;
      CoordGrid grid = dense_grid(oh, ow, cfg.height, cfg.width);
      grid.kind = cfg.grid_kind();
      const Image dense = synthesize_grid_image(gen, grid, oh, ow, styles, threads);
      const Image lanczos = lanczos_upsample(synthesize_image(gen, styles, threads), up_factor);
      ensure_parent(up_out);
      write_png(up_out, hstack({dense, lanczos}, 2));
      std::cerr << "wrote " << up_out << " (" << oh << "x" << ow << " dense | lanczos)\n";
    } else if (*panorama) {
      std::optional<Generator> loaded;
      if (pan_model.ckpt.empty() && !pan_model.config.empty()) {
        RunConfig rc = resolve_config(pan_model.config);
        rc.model.cylindrical = true;
        if (pan_width) rc.model.pan_width = pan_width;
        loaded.emplace(rc.model, pan_model.model_seed);
      } else {
        loaded.emplace(pan_model.load());
      }
      const Generator& gen = *loaded;
      const auto& cfg = gen.config();
      if (!cfg.cylindrical) throw UsageError("checkpoint is not a cylindrical model");
      const std::size_t H = cfg.height, W = cfg.domain_width();
      const auto styles = gen.repeat_style(style_from_seed(gen, pan_seed));
      ensure_parent(pan_out);
      write_png(pan_out, synthesize_image(gen, styles, threads));
      std::cerr << "wrote " << pan_out << " (" << H << "x" << W << ")\n";
      if (!pan_sweep.empty()) {
        const std::size_t cw = pan_crop ? pan_crop : H;
        std::vector<Image> frames;
        for (std::size_t f = 0; f < pan_frames; ++f) {
          const auto x0 = static_cast<std::int64_t>(f * W / pan_frames);
          frames.push_back(synthesize_grid_image(gen, cylinder_crop(W, H, cw, H, x0, 0), H, cw, styles, threads));
        }
        ensure_parent(pan_sweep);
        write_png(pan_sweep, hstack(frames, 1));
        std::cerr << "wrote " << pan_sweep << '\n';
      }
    } else if (*blend) {
      const Generator gen = blend_model.load();
      const auto& cfg = gen.config();
      const std::size_t H = cfg.height, W = cfg.domain_width();
      BlendParams bp;
      bp.cx = blend_cx.value_or(double(W - 1) / 2.0);
      bp.cy = blend_cy.value_or(double(H - 1) / 2.0);
      bp.radius = blend_radius.value_or(double(std::min(H, W)) / 2.0);
      const auto alpha = blend_alpha_field(H, W, parse_blend_mode(blend_mode), bp);
      ensure_parent(blend_out);
      write_png(blend_out, blend_image(gen, style_from_seed(gen, blend_a), style_from_seed(gen, blend_b), alpha, threads));
      std::cerr << "wrote " << blend_out << '\n';
    } else if (*mix) {
      const Generator gen = mix_model.load();
      const BlockRange range{mix_first, mix_last.value_or(gen.config().n_blocks)};
      ensure_parent(mix_out);
      write_png(mix_out, layer_style_mix(gen, style_from_seed(gen, mix_a), style_from_seed(gen, mix_b), range, threads));
      std::cerr << "wrote " << mix_out << " (blocks " << range.first << ".." << range.last << " from seed "
                << mix_b << ")\n";
    } else if (*interp) {
      const Generator gen = interp_model.load();
      const std::size_t dim = gen.config().latent_dim;
      const auto frames = latent_lerp(gen, sample_latent(interp_a, dim), sample_latent(interp_b, dim), interp_steps,
                                      interp_space == "z" ? LerpSpace::z : LerpSpace::w, threads);
      ensure_parent(interp_out);
      write_png(interp_out, hstack(frames, 1));
      std::cerr << "wrote " << interp_out << " (" << frames.size() << " frames)\n";
    } else if (*spectrum) {
      const Generator gen = spec_model.load();
      std::vector<Image> images;
      for (std::size_t i = 0; i < spec_count; ++i) images.push_back(synthesize_image(gen, spec_seed + i, threads));
      const SpectrumMap magnitude = magnitude_spectrum_avg(images);
      const AIProfile generated = azimuthal_integration(power_spectrum_avg(images));
      const fs::path prefix(spec_prefix);
      ensure_parent(prefix);
      write_png(prefix.string() + ".png", heatmap(magnitude.values, magnitude.height, magnitude.width));
      save_tensor(prefix.string() + ".ctnsr", Tensor::from({magnitude.height, magnitude.width}, magnitude.values),
                  DType::f64, "magnitude_spectrum");
      std::ofstream csv(prefix.string() + ".csv");
      if (!spec_real.empty()) {
        if (!fs::is_directory(spec_real)) throw UsageError("folder not found: " + spec_real);
        const Dataset real = load_image_folder(spec_real, gen.config().height);
        const auto& ri = real.images;
        if (ri.empty()) throw UsageError("no PNG files in " + spec_real);
        if (ri.front().width != images.front().width) throw UsageError("real images must be square at model height");
        write_profile_csv(csv, azimuthal_integration(power_spectrum_avg(ri)), generated);
      } else {
        write_profile_csv(csv, generated);
      }
      std::cerr << "wrote " << spec_prefix << ".{png,ctnsr,csv} from " << images.size() << " images\n";
    } else if (*pca_cmd) {
      const Generator gen = pca_model.load();
      const CoordEmbeddingTable* table = gen.embeddings();
      if (!table) throw UsageError("model has no coordinate embeddings");
      const PcaResult res = pca_embeddings(*table, pca_k);
      for (const auto& w : res.warnings) std::cerr << "warning: " << w << '\n';
      for (std::size_t i = 0; i < res.k(); ++i) {
        std::cout << "component " << i + 1 << " variance " << res.explained_variance[i] << " ("
                  << 100.0 * res.explained_variance[i] / res.total_variance << "%)\n";
      }
      ensure_parent(pca_out);
      write_png(pca_out, pca_image(res, table->height, table->width));
      if (!pca_tensor.empty()) {
        ensure_parent(pca_tensor);
        save_tensor(pca_tensor, Tensor::from({table->height * table->width, res.k()}, res.projections), DType::f64,
                    "pca_projections");
      }
      std::cerr << "wrote " << pca_out << '\n';
    } else if (*params) {
      const RunConfig rc = resolve_config(params_config);
      std::vector<std::pair<std::string, ParamCounts>> columns;
      columns.emplace_back("model", Generator(rc.model, 0).count_params());
      if (params_variants) {
        columns.emplace_back("base", Generator(with_variant(rc.model, "base"), 0).count_params());
        columns.emplace_back("ne", Generator(with_variant(rc.model, "ne"), 0).count_params());
      }
      if (params_json) {
        nlohmann::json j;
        for (const auto& c : columns) {
          j[c.first] = c.second.to_json();
          j[c.first]["total"] = c.second.total();
        }
        std::cout << j.dump(2) << '\n';
      } else {
        std::cout << component_table(columns);
      }
    } else if (*verify) {
      VerifyOptions opt;
      opt.toy_steps = verify_steps;
      opt.threads = threads;
      opt.workdir = verify_workdir.empty() ? fs::temp_directory_path() / ("cips-verify-" + std::to_string(::getpid()))
                                           : fs::path(verify_workdir);
      std::error_code ec;
      opt.cli = fs::read_symlink("/proc/self/exe", ec);
      if (ec) opt.cli.clear();
      for (const auto& id : verify_only) {
        const auto& all = acceptance_checks();
        if (std::none_of(all.begin(), all.end(), [&](const CheckInfo& c) { return c.id == id; })) {
          throw UsageError("unknown check: " + id);
        }
      }
      bool ok = true;
      run_checks(verify_only, opt, [&](const CheckResult& r) {
        ok = ok && r.passed;
        std::cout << (r.passed ? "PASS " : "FAIL ") << r.id << " " << r.title << " (" << std::fixed
                  << std::setprecision(1) << r.seconds << "s) " << std::defaultfloat << std::setprecision(6)
                  << r.detail << std::endl;
      });
      if (verify_workdir.empty()) fs::remove_all(opt.workdir, ec);
      return ok ? 0 : kExitVerify;
    } else if (*serve) {
      if (serve_ckpt.empty()) {
        if (const char* env = std::getenv("CIPS_CKPT")) serve_ckpt = env;
      }
      if (serve_ui.empty() && fs::is_directory("ui")) serve_ui = "ui";
      serve_opts.ui_dir = serve_ui;
      Service service(serve_opts);
      if (!serve_ckpt.empty()) {
        if (!fs::exists(serve_ckpt)) throw UsageError("checkpoint not found: " + serve_ckpt);
        service.load_checkpoint(serve_ckpt);
      }
      const auto [host, port] = parse_listen_address(serve_addr);
      std::cerr << "serving on http://" << host << ":" << port
                << (serve_ckpt.empty() ? " (no model loaded)" : " model " + serve_ckpt) << '\n';
      if (!run_server(service, host, port)) {
        std::cerr << "error: cannot listen on " << host << ":" << port << '\n';
        return 1;
      }
    } else if (*info) {
      if (!fs::exists(info_ckpt)) throw UsageError("checkpoint not found: " + info_ckpt);
      const CheckpointInfo ci = checkpoint_info(info_ckpt);
      const Generator gen = load_checkpoint(info_ckpt);
      nlohmann::json j = {{"version", ci.version},   {"config", ci.config.to_json()},
                          {"config_hash", ci.config_hash}, {"seed", ci.seed},
                          {"parameters", ci.parameter_names.size()}};
      j["counts"] = gen.count_params().to_json();
      j["counts"]["total"] = gen.count_params().total();
      std::cout << j.dump(2) << '\n';
    }
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const CheckpointError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::out_of_range& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
