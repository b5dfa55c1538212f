#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>

#include "cips/generator.hpp"

namespace cips {

/// Checkpoint layout:
///
///   8 bytes  magic "CIPSCKPT"
///   u32 LE   format version
///   u32 LE   JSON block length, then the JSON block
///            {"config":{...},"config_hash":"...","parameters":[...],"seed":N}
///   padding  to a 64-byte boundary
///   one CTNSR01 record per parameter, in Generator::named_parameters() order
inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  enum class Kind { io, bad_magic, version_mismatch, truncated, config_hash_mismatch, config_mismatch };

  CheckpointError(Kind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct CheckpointInfo {
  std::uint32_t version = 0;
  GeneratorConfig config;
  std::string config_hash;
  std::uint64_t seed = 0;
  std::vector<std::string> parameter_names;
};

/// FNV-1a over the canonical JSON dump of the config, as 16 hex digits.
std::string config_hash(const GeneratorConfig& config);

void write_checkpoint(std::ostream& out, const Generator& gen);
void save_checkpoint(const std::filesystem::path& path, const Generator& gen);

CheckpointInfo read_checkpoint_info(std::istream& in);
CheckpointInfo checkpoint_info(const std::filesystem::path& path);

Generator read_checkpoint(std::istream& in);
Generator load_checkpoint(const std::filesystem::path& path);

/// Loads parameters into an existing generator. A config or shape mismatch
/// throws config_mismatch naming the first offending field or parameter.
void load_checkpoint_into(Generator& gen, const std::filesystem::path& path);

}  // namespace cips
