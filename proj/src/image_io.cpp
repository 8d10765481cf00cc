#include "lumos/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <memory>

namespace lumos {
namespace {

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

File open(const std::filesystem::path& path, const char* mode) {
  File f(std::fopen(path.c_str(), mode));
  require(f != nullptr, Errc::Io, "cannot open " + path.string());
  return f;
}

}  // namespace

Tensor read_png(const std::filesystem::path& path) {
  File file = open(path, "rb");
  png_byte header[8];
  require(std::fread(header, 1, 8, file.get()) == 8 && png_sig_cmp(header, 0, 8) == 0, Errc::Io,
          path.string() + " is not a PNG file");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  std::vector<png_bytep> rows;
  std::vector<png_byte> pixels;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(Errc::Io, "cannot decode " + path.string());
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);

  const int color = png_get_color_type(png, info);
  int depth = png_get_bit_depth(png, info);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (depth == 16) png_set_swap(png);  // host little-endian samples
  png_read_update_info(png, info);

  const int width = static_cast<int>(png_get_image_width(png, info));
  const int height = static_cast<int>(png_get_image_height(png, info));
  depth = png_get_bit_depth(png, info);
  const std::size_t stride = png_get_rowbytes(png, info);
  pixels.resize(stride * height);
  rows.resize(height);
  for (int y = 0; y < height; ++y) rows[y] = pixels.data() + y * stride;
  png_read_image(png, rows.data());
  png_destroy_read_struct(&png, &info, nullptr);

  Tensor out = image(3, height, width);
  const double max_value = depth == 16 ? 65535.0 : 255.0;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      for (int c = 0; c < 3; ++c) {
        const std::size_t i = static_cast<std::size_t>(x) * 3 + c;
        double v;
        if (depth == 16) {
          std::uint16_t s;
          std::memcpy(&s, rows[y] + 2 * i, 2);
          v = s;
        } else {
          v = rows[y][i];
        }
        out.at(c, y, x) = v / max_value;
      }
    }
  }
  return out;
}

void write_png(const std::filesystem::path& path, const Tensor& img, int bit_depth) {
  require(bit_depth == 8 || bit_depth == 16, Errc::BadConfig, "PNG bit depth must be 8 or 16");
  int channels = 1, height = 0, width = 0;
  if (img.rank() == 2) {
    height = img.dim(0);
    width = img.dim(1);
  } else {
    require(img.rank() == 3 && (img.dim(0) == 1 || img.dim(0) == 3), Errc::ShapeMismatch,
            "write_png expects {3,H,W}, {1,H,W} or {H,W}");
    channels = img.dim(0);
    height = img.dim(1);
    width = img.dim(2);
  }
  const std::size_t plane = static_cast<std::size_t>(height) * width;
  const double max_value = bit_depth == 16 ? 65535.0 : 255.0;
  const int bytes = bit_depth / 8;
  std::vector<png_byte> pixels(plane * channels * bytes);
  for (std::size_t p = 0; p < plane; ++p) {
    for (int c = 0; c < channels; ++c) {
      const auto q = static_cast<unsigned>(std::lround(std::clamp(img[c * plane + p], 0.0, 1.0) * max_value));
      png_byte* dst = pixels.data() + (p * channels + c) * bytes;
      if (bit_depth == 16) {
        dst[0] = static_cast<png_byte>(q >> 8);
        dst[1] = static_cast<png_byte>(q & 0xff);
      } else {
        dst[0] = static_cast<png_byte>(q);
      }
    }
  }

  File file = open(path, "wb");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(Errc::Io, "cannot encode " + path.string());
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, width, height, bit_depth, channels == 3 ? PNG_COLOR_TYPE_RGB : PNG_COLOR_TYPE_GRAY,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  const std::size_t stride = static_cast<std::size_t>(width) * channels * bytes;
  for (int y = 0; y < height; ++y) png_write_row(png, pixels.data() + y * stride);
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

}  // namespace lumos
