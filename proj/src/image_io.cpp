#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>

#include "pah/data.hpp"
#include "pah/errors.hpp"

namespace pah {

namespace {

// Label palette: background black, parts in distinct hues.
constexpr std::array<std::array<std::uint8_t, 3>, 8> kPalette{{{0, 0, 0},
                                                               {230, 25, 75},
                                                               {245, 130, 48},
                                                               {255, 225, 25},
                                                               {60, 180, 75},
                                                               {0, 130, 200},
                                                               {145, 30, 180},
                                                               {240, 50, 230}}};

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

void quantize_to_bytes(Tensor& image) {
  for (double& v : image.mutable_data()) v = to_byte(v) / 255.0;
}

void write_png(const std::filesystem::path& path, const Tensor& image) {
  if (image.rank() != 3 || image.dim(2) != 3) throw DimensionError("write_png: expected [H,W,3]");
  const std::size_t h = image.dim(0), w = image.dim(1);
  std::vector<std::uint8_t> bytes(h * w * 3);
  auto v = image.data();
  for (std::size_t i = 0; i < bytes.size(); ++i) bytes[i] = to_byte(v[i]);

  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(w);
  png.height = static_cast<png_uint_32>(h);
  png.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.c_str(), 0, bytes.data(), 0, nullptr)) {
    throw IoError("write_png: " + path.string() + ": " + png.message);
  }
}

Tensor read_png(const std::filesystem::path& path) {
  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    throw IoError("read_png: " + path.string() + ": " + png.message);
  }
  png.format = PNG_FORMAT_RGB;
  std::vector<std::uint8_t> bytes(PNG_IMAGE_SIZE(png));
  if (!png_image_finish_read(&png, nullptr, bytes.data(), 0, nullptr)) {
    std::string msg = png.message;
    png_image_free(&png);
    throw IoError("read_png: " + path.string() + ": " + msg);
  }
  Tensor out({png.height, png.width, 3});
  auto o = out.mutable_data();
  for (std::size_t i = 0; i < bytes.size(); ++i) o[i] = bytes[i] / 255.0;
  return out;
}

std::pair<std::size_t, std::size_t> png_size(const std::filesystem::path& path) {
  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&png, path.c_str())) {
    throw IoError("png_size: " + path.string() + ": " + png.message);
  }
  std::pair<std::size_t, std::size_t> size{png.width, png.height};
  png_image_free(&png);
  return size;
}

void write_label_png(const std::filesystem::path& path, const std::vector<std::uint8_t>& labels,
                     std::size_t height, std::size_t width, std::size_t scale) {
  if (labels.size() != height * width) throw DimensionError("write_label_png: size mismatch");
  if (scale == 0) throw ContractError("write_label_png: scale must be >= 1");
  const std::size_t oh = height * scale, ow = width * scale;
  std::vector<std::uint8_t> index(oh * ow);
  for (std::size_t i = 0; i < oh; ++i)
    for (std::size_t j = 0; j < ow; ++j) {
      const std::uint8_t l = labels[(i / scale) * width + j / scale];
      if (l >= kPalette.size()) throw ContractError("write_label_png: label exceeds palette");
      index[i * ow + j] = l;
    }
  std::vector<std::uint8_t> colormap;
  for (const auto& c : kPalette) colormap.insert(colormap.end(), c.begin(), c.end());

  png_image png;
  std::memset(&png, 0, sizeof png);
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(ow);
  png.height = static_cast<png_uint_32>(oh);
  png.format = PNG_FORMAT_RGB_COLORMAP;
  png.colormap_entries = kPalette.size();
  if (!png_image_write_to_file(&png, path.c_str(), 0, index.data(), 0, colormap.data())) {
    throw IoError("write_label_png: " + path.string() + ": " + png.message);
  }
}

}  // namespace pah
