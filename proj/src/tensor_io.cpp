#include "cips/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <vector>

#include <nlohmann/json.hpp>

namespace cips {

namespace {

constexpr std::size_t kAlign = 64;

std::size_t padding_for(std::streamoff pos, std::size_t alignment) {
  const auto rem = static_cast<std::size_t>(pos) % alignment;
  return rem == 0 ? 0 : alignment - rem;
}

void read_exact(std::istream& in, char* dst, std::size_t n, const char* what) {
  in.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw TensorFormatError(std::string("truncated input while reading ") + what);
  }
}

const char* dtype_name(DType d) { return d == DType::f64 ? "f64" : "f32"; }

}  // namespace

void write_u32(std::ostream& out, std::uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xFF);
  out.write(b, 4);
}

std::uint32_t read_u32(std::istream& in, const char* what) {
  unsigned char b[4];
  read_exact(in, reinterpret_cast<char*>(b), 4, what);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_padding(std::ostream& out, std::size_t alignment) {
  const auto pad = padding_for(out.tellp(), alignment);
  static const char zeros[kAlign] = {};
  out.write(zeros, static_cast<std::streamsize>(pad));
}

void skip_padding(std::istream& in, std::size_t alignment, const char* what) {
  const auto pad = padding_for(in.tellg(), alignment);
  char buf[kAlign];
  read_exact(in, buf, pad, what);
}

void write_tensor(std::ostream& out, const Tensor& t, DType dtype, const std::string& name) {
  nlohmann::json header = {{"byte_order", "little"},
                           {"dtype", dtype_name(dtype)},
                           {"name", name},
                           {"shape", t.shape()}};
  std::string text = header.dump();
  const auto start = out.tellp();
  const std::size_t fixed = sizeof(kTensorMagic) + 4;
  text.append(padding_for(start + static_cast<std::streamoff>(fixed + text.size()), kAlign), ' ');

  out.write(kTensorMagic, sizeof(kTensorMagic));
  write_u32(out, static_cast<std::uint32_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));

  auto values = t.data();
  if (dtype == DType::f64) {
    std::vector<char> bytes(values.size() * 8);
    for (std::size_t i = 0; i < values.size(); ++i) {
      const auto bits = std::bit_cast<std::uint64_t>(values[i]);
      for (int k = 0; k < 8; ++k) bytes[i * 8 + k] = static_cast<char>((bits >> (8 * k)) & 0xFF);
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  } else {
    std::vector<char> bytes(values.size() * 4);
    for (std::size_t i = 0; i < values.size(); ++i) {
      const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(values[i]));
      for (int k = 0; k < 4; ++k) bytes[i * 4 + k] = static_cast<char>((bits >> (8 * k)) & 0xFF);
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  write_padding(out, kAlign);
  if (!out) throw TensorFormatError("write_tensor: stream error");
}

NamedTensor read_tensor(std::istream& in) {
  char magic[sizeof(kTensorMagic)];
  read_exact(in, magic, sizeof(magic), "tensor magic");
  if (std::memcmp(magic, kTensorMagic, sizeof(magic)) != 0) {
    throw TensorFormatError("bad tensor magic (expected CTNSR01)");
  }
  const auto header_len = read_u32(in, "tensor header length");
  std::string text(header_len, '\0');
  read_exact(in, text.data(), header_len, "tensor header");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw TensorFormatError(std::string("malformed tensor header: ") + e.what());
  }
  if (header.value("byte_order", "") != "little") {
    throw TensorFormatError("unsupported byte order in tensor header");
  }
  NamedTensor result;
  result.name = header.value("name", "");
  const std::string dtype = header.value("dtype", "");
  if (dtype == "f64") {
    result.dtype = DType::f64;
  } else if (dtype == "f32") {
    result.dtype = DType::f32;
  } else {
    throw TensorFormatError("unsupported dtype '" + dtype + "'");
  }
  const Shape shape = header.at("shape").get<Shape>();
  const std::size_t n = shape_numel(shape);
  const std::size_t width = result.dtype == DType::f64 ? 8 : 4;
  std::vector<unsigned char> bytes(n * width);
  read_exact(in, reinterpret_cast<char*>(bytes.data()), bytes.size(), "tensor payload");
  std::vector<double> values(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (width == 8) {
      std::uint64_t bits = 0;
      for (int k = 0; k < 8; ++k) bits |= static_cast<std::uint64_t>(bytes[i * 8 + k]) << (8 * k);
      values[i] = std::bit_cast<double>(bits);
    } else {
      std::uint32_t bits = 0;
      for (int k = 0; k < 4; ++k) bits |= static_cast<std::uint32_t>(bytes[i * 4 + k]) << (8 * k);
      values[i] = static_cast<double>(std::bit_cast<float>(bits));
    }
  }
  skip_padding(in, kAlign, "tensor payload padding");
  result.tensor = Tensor::from(shape, std::move(values));
  return result;
}

void save_tensor(const std::filesystem::path& path, const Tensor& t, DType dtype,
                 const std::string& name) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw TensorFormatError("cannot open " + path.string() + " for writing");
  write_tensor(out, t, dtype, name);
}

NamedTensor load_tensor(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TensorFormatError("cannot open " + path.string());
  return read_tensor(in);
}

}  // namespace cips
