#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#include "han/data.hpp"
#include "han/errors.hpp"

namespace han {

GrayImage read_png(const std::filesystem::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.string().c_str())) {
    throw IoError("cannot read PNG " + path.string() + ": " + image.message);
  }
  // libpng converts any colour type / bit depth to 8-bit gray here.
  image.format = PNG_FORMAT_GRAY;
  GrayImage out;
  out.width = image.width;
  out.height = image.height;
  out.pixels.resize(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, out.pixels.data(), 0, nullptr)) {
    png_image_free(&image);
    throw IoError("cannot decode PNG " + path.string() + ": " + image.message);
  }
  return out;
}

void write_png(const std::filesystem::path& path, const GrayImage& img) {
  if (img.pixels.size() != img.width * img.height || img.width == 0 || img.height == 0) {
    throw ShapeError("write_png: pixel buffer does not match " + std::to_string(img.width) + "x" +
                     std::to_string(img.height));
  }
  png_image image;
  std::memset(&image, 0, sizeof image);
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, img.pixels.data(), 0, nullptr)) {
    throw IoError("cannot write PNG " + path.string() + ": " + image.message);
  }
}

std::vector<std::uint8_t> to_bytes(std::span<const Real> values) {
  std::vector<std::uint8_t> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    out[i] = static_cast<std::uint8_t>(std::lround(std::clamp(values[i], 0.0, 1.0) * 255.0));
  }
  return out;
}

GlyphImage load_glyph(const std::filesystem::path& path, std::string id) {
  const GrayImage img = read_png(path);
  if (img.width != kGlyphSize || img.height != kGlyphSize) {
    throw ShapeError("glyph " + path.string() + " is " + std::to_string(img.width) + "x" +
                     std::to_string(img.height) + ", expected 64x64");
  }
  std::vector<Real> v(img.pixels.size());
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = img.pixels[i] / 255.0;
  return GlyphImage::make(std::move(id), std::move(v));
}

void save_glyph(const std::filesystem::path& path, const Tensor& pixels) {
  if (pixels.numel() != kGlyphPixels) {
    throw ShapeError("save_glyph expects 64x64 values, got " + shape_to_string(pixels.shape()));
  }
  write_png(path, GrayImage{kGlyphSize, kGlyphSize, to_bytes(pixels.data())});
}

}  // namespace han
