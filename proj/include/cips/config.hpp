#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>

#include "cips/generator.hpp"
#include "cips/training.hpp"

namespace cips {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DataConfig {
  DatasetKind kind = DatasetKind::synthetic_solid;
  std::size_t count = 1000;
  std::uint64_t seed = 0;
  std::filesystem::path folder;
};

/// A training/synthesis run: [model], [train], [data] and optional
/// [discriminator] tables. `model.preset` ("desk" or "paper-default") seeds
/// the model fields before explicit keys override them.
struct RunConfig {
  GeneratorConfig model = GeneratorConfig::desk();
  std::uint64_t model_seed = 0;
  TrainConfig train;
  DataConfig data;
  DiscriminatorConfig disc;
};

/// Throws ConfigError on syntax errors, unknown keys or invalid values.
RunConfig parse_run_config(const std::string& toml_text, const std::string& source = "<string>");
RunConfig load_run_config(const std::filesystem::path& path);

/// Named preset ("desk", "paper-default"), a variant applied on top of it
/// ("desk:ne"), or a TOML file path.
RunConfig resolve_config(const std::string& name_or_path);

}  // namespace cips
