#include "cips/config.hpp"

#include <set>
#include <fstream>
#include <sstream>

#define TOML_EXCEPTIONS 1
#include <tomlplusplus/toml.hpp>

namespace cips {

namespace {

class Table {
 public:
  Table(const toml::table* t, std::string name) : t_(t), name_(std::move(name)) {}

  ~Table() = default;

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    if (t_ == nullptr) return;
    const toml::node* node = t_->get(key);
    if (node == nullptr) return;
    if constexpr (std::is_same_v<T, bool>) {
      auto v = node->value<bool>();
      if (!v || !node->is_boolean()) fail(key, "expected a boolean");
      out = *v;
    } else if constexpr (std::is_floating_point_v<T>) {
      auto v = node->value<double>();
      if (!v) fail(key, "expected a number");
      out = *v;
    } else if constexpr (std::is_integral_v<T>) {
      auto v = node->value<std::int64_t>();
      if (!v || !node->is_integer()) fail(key, "expected an integer");
      if (*v < 0) fail(key, "must be non-negative");
      out = static_cast<T>(*v);
    } else {
      auto v = node->value<std::string>();
      if (!v) fail(key, "expected a string");
      out = *v;
    }
  }

  void read_list(const char* key, std::vector<std::size_t>& out) {
    seen_.insert(key);
    if (t_ == nullptr) return;
    const toml::node* node = t_->get(key);
    if (node == nullptr) return;
    const auto* arr = node->as_array();
    if (arr == nullptr) fail(key, "expected an array of integers");
    out.clear();
    for (const auto& el : *arr) {
      auto v = el.value<std::int64_t>();
      if (!v || *v < 0) fail(key, "expected an array of non-negative integers");
      out.push_back(static_cast<std::size_t>(*v));
    }
  }

  void reject_unknown() const {
    if (t_ == nullptr) return;
    for (const auto& [k, v] : *t_) {
      if (!seen_.count(std::string(k.str()))) {
        throw ConfigError("unknown key '" + std::string(k.str()) + "' in [" + name_ + "]");
      }
    }
  }

  [[noreturn]] void fail(const char* key, const std::string& why) const {
    throw ConfigError("[" + name_ + "]." + key + ": " + why);
  }

 private:
  const toml::table* t_;
  std::string name_;
  std::set<std::string> seen_;
};

GeneratorConfig preset(const std::string& name) {
  if (name == "desk") return GeneratorConfig::desk();
  if (name == "paper-default" || name == "paper_default") return GeneratorConfig::paper_default();
  throw ConfigError("unknown model preset '" + name + "'");
}

}  // namespace

RunConfig parse_run_config(const std::string& toml_text, const std::string& source) {
  toml::table root;
  try {
    root = toml::parse(toml_text, source);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << e;
    throw ConfigError("malformed config: " + os.str());
  }
  for (const auto& [k, v] : root) {
    const std::string key(k.str());
    if (key != "model" && key != "train" && key != "data" && key != "discriminator") {
      throw ConfigError("unknown section [" + key + "] in " + source);
    }
    if (!v.is_table()) throw ConfigError("'" + key + "' must be a table");
  }

  RunConfig rc;
  try {
    Table m(root["model"].as_table(), "model");
    std::string preset_name = "desk";
    m.read("preset", preset_name);
    rc.model = preset(preset_name);
    std::string variant;
    m.read("variant", variant);
    if (!variant.empty()) rc.model = with_variant(rc.model, variant);
    auto& g = rc.model;
    m.read("hidden_dim", g.hidden_dim);
    m.read("n_blocks", g.n_blocks);
    m.read("fourier_dim", g.fourier_dim);
    m.read("embed_dim", g.embed_dim);
    m.read("height", g.height);
    m.read("width", g.width);
    m.read("latent_dim", g.latent_dim);
    m.read("mapping_depth", g.mapping_depth);
    m.read("use_fourier", g.use_fourier);
    m.read("use_embeddings", g.use_embeddings);
    std::string skip = to_string(g.skip_mode), act = to_string(g.activation);
    m.read("skip_mode", skip);
    m.read("activation", act);
    g.skip_mode = skip == "skips" ? SkipMode::skips
                : skip == "residual" ? SkipMode::residual
                : skip == "base" ? SkipMode::base
                : throw ConfigError("[model].skip_mode: unknown value '" + skip + "'");
    g.activation = act == "leaky" ? Activation::leaky
                 : act == "sine" ? Activation::sine
                 : throw ConfigError("[model].activation: unknown value '" + act + "'");
    m.read("eps", g.eps);
    m.read("leaky_slope", g.leaky_slope);
    m.read("fourier_std", g.fourier_std);
    m.read("sine_omega", g.sine_omega);
    m.read("cylindrical", g.cylindrical);
    m.read("pan_width", g.pan_width);
    m.read("seed", rc.model_seed);
    m.reject_unknown();
    g.validate();

    Table t(root["train"].as_table(), "train");
    auto& tc = rc.train;
    t.read("lr", tc.lr);
    t.read("beta1", tc.beta1);
    t.read("beta2", tc.beta2);
    t.read("eps", tc.eps);
    t.read("r1_gamma", tc.r1_gamma);
    t.read("r1_every", tc.r1_every);
    t.read("batch_size", tc.batch_size);
    t.read("steps", tc.steps);
    t.read("patch", tc.patch_enabled);
    t.read("patch_size", tc.patch_size);
    t.read_list("patch_strides", tc.patch_strides);
    t.read("seed", tc.seed);
    t.read("mapping_lr_mult", tc.mapping_lr_mult);
    t.reject_unknown();
    tc.validate();

    Table d(root["data"].as_table(), "data");
    std::string kind = to_string(rc.data.kind), folder;
    d.read("kind", kind);
    rc.data.kind = parse_dataset_kind(kind);
    d.read("count", rc.data.count);
    d.read("seed", rc.data.seed);
    d.read("folder", folder);
    rc.data.folder = folder;
    d.reject_unknown();
    if (rc.data.kind == DatasetKind::image_folder && folder.empty()) {
      throw ConfigError("[data].folder is required for image-folder datasets");
    }

    Table dt(root["discriminator"].as_table(), "discriminator");
    auto& dc = rc.disc;
    std::string dkind = dc.kind == DiscKind::mlp ? "mlp" : "small-conv";
    dt.read("kind", dkind);
    if (dkind == "mlp") {
      dc.kind = DiscKind::mlp;
    } else if (dkind == "small-conv") {
      dc.kind = DiscKind::small_conv;
    } else {
      throw ConfigError("[discriminator].kind: unknown value '" + dkind + "'");
    }
    dt.read("width", dc.width);
    dt.read("stages", dc.stages);
    dt.read("residual", dc.residual);
    dt.read_list("mlp_widths", dc.mlp_widths);
    dt.read("leaky_slope", dc.leaky_slope);
    dt.reject_unknown();
    dc.resolution = tc.patch_enabled ? tc.patch_size : g.height;
    dc.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return rc;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str(), path.string());
}

RunConfig resolve_config(const std::string& name_or_path) {
  const auto colon = name_or_path.find(':');
  const std::string base = name_or_path.substr(0, colon);
  if (base == "desk" || base == "paper-default") {
    RunConfig rc;
    rc.model = preset(base);
    try {
      if (colon != std::string::npos) rc.model = with_variant(rc.model, name_or_path.substr(colon + 1));
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    rc.disc.resolution = rc.model.height;
    return rc;
  }
  return load_run_config(name_or_path);
}

}  // namespace cips
