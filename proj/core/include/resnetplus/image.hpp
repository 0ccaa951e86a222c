#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace rnp {

/// RGB image, rows of interleaved channels (H x W x 3), values in [0,1].
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<float> pixels;

  Image() = default;
  Image(std::size_t w, std::size_t h, float fill = 0.0f) : width(w), height(h), pixels(w * h * 3, fill) {}

  float& at(std::size_t y, std::size_t x, std::size_t c) { return pixels[(y * width + x) * 3 + c]; }
  float at(std::size_t y, std::size_t x, std::size_t c) const { return pixels[(y * width + x) * 3 + c]; }
  bool empty() const { return pixels.empty(); }

  friend bool operator==(const Image&, const Image&) = default;
};

struct ImageInfo {
  std::size_t width = 0;
  std::size_t height = 0;
};

/// Reads dimensions only. Throws FormatError for anything but decodable PNG/JPEG.
ImageInfo probe_image(const std::string& path);
/// Decodes 8-bit PNG (any color type, converted to RGB) or baseline JPEG.
Image decode_image(const std::string& path);
/// Writes an 8-bit RGB PNG (values clamped to [0,1] and rounded).
void encode_png(const std::string& path, const Image& img);

/// Bilinear resampling with half-pixel centers and edge clamping.
Image resize_bilinear(const Image& img, std::size_t width, std::size_t height);
/// Copies the rectangle [x0, x0+w) x [y0, y0+h).
Image crop(const Image& img, std::size_t x0, std::size_t y0, std::size_t w, std::size_t h);

}  // namespace rnp
