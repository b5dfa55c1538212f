#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "cips/tensor.hpp"

namespace cips {

/// Interleaved RGB image. Values use the internal [-1, 1] colour range; PNG
/// export clamps and maps them to [0, 1] before quantising.
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), pixels(h * w * 3, fill) {}

  double& at(std::size_t y, std::size_t x, std::size_t c) { return pixels[(y * width + x) * 3 + c]; }
  double at(std::size_t y, std::size_t x, std::size_t c) const {
    return pixels[(y * width + x) * 3 + c];
  }
  bool operator==(const Image&) const = default;
};

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// (H*W, 3) row-major pixel rows -> image.
Image image_from_rows(const Tensor& rgb, std::size_t height, std::size_t width);
Tensor image_to_rows(const Image& image);

std::uint8_t to_byte(double value);
double from_byte(std::uint8_t value);

std::vector<std::uint8_t> encode_png(const Image& image);
Image decode_png(const std::vector<std::uint8_t>& bytes);
void write_png(const std::filesystem::path& path, const Image& image);
Image read_png(const std::filesystem::path& path);
void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes);

/// Largest centred square, box-filtered down (or bilinearly up) to `size`.
Image center_crop_resize(const Image& image, std::size_t size);

/// Images placed left to right (heights must match), separated by `gap` black columns.
Image hstack(const std::vector<Image>& images, std::size_t gap = 0);

/// Min-max normalised single-channel map rendered as a grey image.
Image heatmap(const std::vector<double>& values, std::size_t height, std::size_t width);

}  // namespace cips
