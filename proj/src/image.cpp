#include "cips/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

namespace cips {

Image image_from_rows(const Tensor& rgb, std::size_t height, std::size_t width) {
  if (rgb.rank() != 2 || rgb.dim(1) != 3 || rgb.dim(0) != height * width) {
    throw ShapeError("image_from_rows: rows " + to_string(rgb.shape()) + " do not form a " +
                     std::to_string(height) + "x" + std::to_string(width) + " RGB image");
  }
  Image img;
  img.height = height;
  img.width = width;
  img.pixels = rgb.to_vector();
  return img;
}

Tensor image_to_rows(const Image& image) {
  return Tensor::from({image.height * image.width, 3}, image.pixels);
}

std::uint8_t to_byte(double value) {
  const double v = std::clamp((value + 1.0) * 0.5, 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(v * 255.0));
}

double from_byte(std::uint8_t value) { return static_cast<double>(value) / 255.0 * 2.0 - 1.0; }

namespace {

void png_write_to_vector(png_structp png, png_bytep data, png_size_t length) {
  auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + length);
}

void png_flush_noop(png_structp) {}

struct ReadCursor {
  const std::vector<std::uint8_t>* bytes;
  std::size_t offset;
};

void png_read_from_vector(png_structp png, png_bytep data, png_size_t length) {
  auto* cur = static_cast<ReadCursor*>(png_get_io_ptr(png));
  if (cur->offset + length > cur->bytes->size()) png_error(png, "truncated PNG data");
  std::memcpy(data, cur->bytes->data() + cur->offset, length);
  cur->offset += length;
}

void png_warning_ignore(png_structp, png_const_charp) {}

// libpng reports errors by longjmp; these helpers keep every C++ object with a
// destructor outside the frame that calls setjmp.
bool write_png_rows(png_structp png, png_infop info, const Image& image,
                    std::vector<std::uint8_t>* out, std::uint8_t* row) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_set_write_fn(png, out, png_write_to_vector, png_flush_noop);
  png_set_IHDR(png, info, static_cast<png_uint_32>(image.width),
               static_cast<png_uint_32>(image.height), 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
               PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 6);
  png_write_info(png, info);
  for (std::size_t y = 0; y < image.height; ++y) {
    for (std::size_t i = 0; i < image.width * 3; ++i) {
      row[i] = to_byte(image.pixels[y * image.width * 3 + i]);
    }
    png_write_row(png, row);
  }
  png_write_end(png, nullptr);
  return true;
}

bool read_png_header(png_structp png, png_infop info, ReadCursor* cursor, std::size_t* width,
                     std::size_t* height, std::size_t* rowbytes) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_set_read_fn(png, cursor, png_read_from_vector);
  png_read_info(png, info);
  png_set_expand(png);
  png_set_strip_16(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  png_read_update_info(png, info);
  *width = png_get_image_width(png, info);
  *height = png_get_image_height(png, info);
  *rowbytes = png_get_rowbytes(png, info);
  return true;
}

bool read_png_row(png_structp png, std::uint8_t* row) {
  if (setjmp(png_jmpbuf(png))) return false;
  png_read_row(png, row, nullptr);
  return true;
}

}  // namespace

std::vector<std::uint8_t> encode_png(const Image& image) {
  if (image.height == 0 || image.width == 0) throw ImageError("encode_png: empty image");
  std::vector<std::uint8_t> out;
  std::vector<std::uint8_t> row(image.width * 3);
  png_structp png =
      png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_warning_ignore);
  png_infop info = png_create_info_struct(png);
  const bool ok = write_png_rows(png, info, image, &out, row.data());
  png_destroy_write_struct(&png, &info);
  if (!ok) throw ImageError("encode_png: libpng failed");
  return out;
}

Image decode_png(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
    throw ImageError("decode_png: not a PNG stream");
  }
  png_structp png =
      png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_warning_ignore);
  png_infop info = png_create_info_struct(png);
  ReadCursor cursor{&bytes, 0};
  std::size_t width = 0, height = 0, rowbytes = 0;
  bool ok = read_png_header(png, info, &cursor, &width, &height, &rowbytes);
  Image img;
  if (ok) {
    img.width = width;
    img.height = height;
    img.pixels.resize(width * height * 3);
    std::vector<std::uint8_t> row(rowbytes);
    for (std::size_t y = 0; ok && y < height; ++y) {
      ok = read_png_row(png, row.data());
      for (std::size_t i = 0; ok && i < width * 3; ++i) {
        img.pixels[y * width * 3 + i] = from_byte(row[i]);
      }
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  if (!ok) throw ImageError("decode_png: malformed PNG data");
  return img;
}

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ImageError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

void write_png(const std::filesystem::path& path, const Image& image) {
  write_bytes(path, encode_png(image));
}

Image read_png(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ImageError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_png(bytes);
}

Image center_crop_resize(const Image& image, std::size_t size) {
  const std::size_t side = std::min(image.height, image.width);
  if (side == 0 || size == 0) throw ImageError("center_crop_resize: empty image or target");
  const std::size_t y0 = (image.height - side) / 2, x0 = (image.width - side) / 2;
  Image out(size, size);
  const double ratio = static_cast<double>(side) / static_cast<double>(size);
  for (std::size_t y = 0; y < size; ++y) {
    for (std::size_t x = 0; x < size; ++x) {
      for (std::size_t c = 0; c < 3; ++c) {
        double value = 0.0;
        if (ratio >= 1.0) {
          // Box filter over the source footprint.
          const auto ya = static_cast<std::size_t>(std::floor(y * ratio));
          const auto yb = std::max(ya + 1, static_cast<std::size_t>(std::floor((y + 1) * ratio)));
          const auto xa = static_cast<std::size_t>(std::floor(x * ratio));
          const auto xb = std::max(xa + 1, static_cast<std::size_t>(std::floor((x + 1) * ratio)));
          for (std::size_t sy = ya; sy < yb; ++sy)
            for (std::size_t sx = xa; sx < xb; ++sx) value += image.at(y0 + sy, x0 + sx, c);
          value /= static_cast<double>((yb - ya) * (xb - xa));
        } else {
          const double sy = std::clamp((y + 0.5) * ratio - 0.5, 0.0, double(side - 1));
          const double sx = std::clamp((x + 0.5) * ratio - 0.5, 0.0, double(side - 1));
          const auto ya = static_cast<std::size_t>(sy), xa = static_cast<std::size_t>(sx);
          const auto yb = std::min(ya + 1, side - 1), xb = std::min(xa + 1, side - 1);
          const double fy = sy - ya, fx = sx - xa;
          value = (1 - fy) * ((1 - fx) * image.at(y0 + ya, x0 + xa, c) +
                              fx * image.at(y0 + ya, x0 + xb, c)) +
                  fy * ((1 - fx) * image.at(y0 + yb, x0 + xa, c) +
                        fx * image.at(y0 + yb, x0 + xb, c));
        }
        out.at(y, x, c) = value;
      }
    }
  }
  return out;
}

Image hstack(const std::vector<Image>& images, std::size_t gap) {
  if (images.empty()) throw ImageError("hstack: no images");
  const std::size_t h = images.front().height;
  std::size_t w = 0;
  for (const auto& im : images) {
    if (im.height != h) throw ImageError("hstack: heights differ");
    w += im.width;
  }
  w += gap * (images.size() - 1);
  Image out(h, w, -1.0);
  std::size_t x0 = 0;
  for (const auto& im : images) {
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < im.width; ++x)
        for (std::size_t c = 0; c < 3; ++c) out.at(y, x0 + x, c) = im.at(y, x, c);
    x0 += im.width + gap;
  }
  return out;
}

Image heatmap(const std::vector<double>& values, std::size_t height, std::size_t width) {
  if (values.size() != height * width) throw ImageError("heatmap: size mismatch");
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double range = *hi - *lo;
  Image out(height, width);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double t = range > 0 ? (values[i] - *lo) / range : 0.0;
    for (std::size_t c = 0; c < 3; ++c) out.pixels[i * 3 + c] = 2.0 * t - 1.0;
  }
  return out;
}

}  // namespace cips
