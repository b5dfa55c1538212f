#include "cips/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "cips/tensor_io.hpp"

namespace cips {

namespace {

constexpr char kMagic[8] = {'C', 'I', 'P', 'S', 'C', 'K', 'P', 'T'};

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

CheckpointError truncated(const std::string& what) {
  return CheckpointError(CheckpointError::Kind::truncated, "checkpoint truncated: " + what);
}

void copy_into(Generator& gen, std::istream& in, const CheckpointInfo& info) {
  auto params = gen.named_parameters();
  if (params.size() != info.parameter_names.size()) {
    throw CheckpointError(CheckpointError::Kind::config_mismatch,
                          "checkpoint holds " + std::to_string(info.parameter_names.size()) +
                              " parameters, generator has " + std::to_string(params.size()));
  }
  for (auto& p : params) {
    NamedTensor record;
    try {
      record = read_tensor(in);
    } catch (const TensorFormatError& e) {
      throw truncated(std::string("parameter '") + p.name + "': " + e.what());
    }
    if (record.name != p.name) {
      throw CheckpointError(CheckpointError::Kind::config_mismatch,
                            "component mismatch: checkpoint has '" + record.name +
                                "' where generator expects '" + p.name + "'");
    }
    if (record.tensor.shape() != p.tensor.shape()) {
      throw CheckpointError(CheckpointError::Kind::config_mismatch,
                            "component '" + p.name + "' has shape " +
                                to_string(record.tensor.shape()) + " in checkpoint but " +
                                to_string(p.tensor.shape()) + " in generator");
    }
    auto dst = p.tensor.mutable_data();
    auto src = record.tensor.data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
}

}  // namespace

std::string config_hash(const GeneratorConfig& config) {
  const std::string text = config.to_json().dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return hex64(h);
}

void write_checkpoint(std::ostream& out, const Generator& gen) {
  const auto params = gen.named_parameters();
  nlohmann::json names = nlohmann::json::array();
  for (const auto& p : params) names.push_back(p.name);
  const nlohmann::json header = {{"config", gen.config().to_json()},
                                 {"config_hash", config_hash(gen.config())},
                                 {"parameters", names},
                                 {"seed", gen.init_seed()}};
  const std::string text = header.dump();
  out.write(kMagic, sizeof(kMagic));
  write_u32(out, kCheckpointVersion);
  write_u32(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  write_padding(out, 64);
  for (const auto& p : params) write_tensor(out, p.tensor, DType::f64, p.name);
  if (!out) throw CheckpointError(CheckpointError::Kind::io, "checkpoint write failed");
}

void save_checkpoint(const std::filesystem::path& path, const Generator& gen) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw CheckpointError(CheckpointError::Kind::io, "cannot open " + path.string());
  }
  write_checkpoint(out, gen);
}

CheckpointInfo read_checkpoint_info(std::istream& in) {
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (in.gcount() != static_cast<std::streamsize>(sizeof(magic))) throw truncated("magic");
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw CheckpointError(CheckpointError::Kind::bad_magic, "not a CIPS checkpoint (bad magic)");
  }
  CheckpointInfo info;
  std::string text;
  try {
    info.version = read_u32(in, "checkpoint version");
    if (info.version != kCheckpointVersion) {
      throw CheckpointError(CheckpointError::Kind::version_mismatch,
                            "checkpoint version " + std::to_string(info.version) +
                                " is not supported (expected " +
                                std::to_string(kCheckpointVersion) + ")");
    }
    const auto len = read_u32(in, "checkpoint header length");
    text.resize(len);
    in.read(text.data(), len);
    if (in.gcount() != static_cast<std::streamsize>(len)) throw truncated("header");
    skip_padding(in, 64, "checkpoint header padding");
  } catch (const TensorFormatError& e) {
    throw truncated(e.what());
  }

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
    info.config = GeneratorConfig::from_json(header.at("config"));
    info.config_hash = header.at("config_hash").get<std::string>();
    info.seed = header.at("seed").get<std::uint64_t>();
    info.parameter_names = header.at("parameters").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw CheckpointError(CheckpointError::Kind::truncated,
                          std::string("malformed checkpoint header: ") + e.what());
  }
  if (config_hash(info.config) != info.config_hash) {
    throw CheckpointError(CheckpointError::Kind::config_hash_mismatch,
                          "checkpoint config hash " + info.config_hash +
                              " does not match its config (" + config_hash(info.config) + ")");
  }
  return info;
}

CheckpointInfo checkpoint_info(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Kind::io, "cannot open " + path.string());
  return read_checkpoint_info(in);
}

Generator read_checkpoint(std::istream& in) {
  const auto info = read_checkpoint_info(in);
  Generator gen(info.config, info.seed);
  copy_into(gen, in, info);
  return gen;
}

Generator load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Kind::io, "cannot open " + path.string());
  return read_checkpoint(in);
}

void load_checkpoint_into(Generator& gen, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError(CheckpointError::Kind::io, "cannot open " + path.string());
  const auto info = read_checkpoint_info(in);
  const auto have = gen.config().to_json();
  const auto want = info.config.to_json();
  for (auto it = want.begin(); it != want.end(); ++it) {
    if (!have.contains(it.key()) || have.at(it.key()) != it.value()) {
      throw CheckpointError(CheckpointError::Kind::config_mismatch,
                            "config field '" + it.key() + "' differs: checkpoint " +
                                it.value().dump() + ", generator " +
                                (have.contains(it.key()) ? have.at(it.key()).dump() : "<absent>"));
    }
  }
  copy_into(gen, in, info);
}

}  // namespace cips
