#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>

#include "cips/tensor.hpp"

namespace cips {

/// Raw tensor interchange ("CTNSR01"):
///
///   8 bytes   magic "CTNSR01\0"
///   u32 LE    header length
///   header    JSON {"byte_order":"little","dtype":"f64"|"f32","name":...,"shape":[...]},
///             space-padded so the payload starts on a 64-byte boundary
///   payload   row-major little-endian scalars, zero-padded to a multiple of 64 bytes
///
/// Alignment is measured from the start of the enclosing stream, so records can
/// be concatenated (checkpoints do this).
enum class DType { f64, f32 };

class TensorFormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedTensor {
  std::string name;
  DType dtype = DType::f64;
  Tensor tensor;
};

inline constexpr char kTensorMagic[8] = {'C', 'T', 'N', 'S', 'R', '0', '1', '\0'};

void write_tensor(std::ostream& out, const Tensor& t, DType dtype = DType::f64,
                  const std::string& name = "");
NamedTensor read_tensor(std::istream& in);

void save_tensor(const std::filesystem::path& path, const Tensor& t, DType dtype = DType::f64,
                 const std::string& name = "");
NamedTensor load_tensor(const std::filesystem::path& path);

// Little-endian primitives shared with the checkpoint format.
void write_u32(std::ostream& out, std::uint32_t v);
std::uint32_t read_u32(std::istream& in, const char* what);
void write_padding(std::ostream& out, std::size_t alignment);
void skip_padding(std::istream& in, std::size_t alignment, const char* what);

}  // namespace cips
