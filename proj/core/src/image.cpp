#include "resnetplus/image.hpp"

#include <png.h>
// jpeglib.h needs FILE and size_t declared first.
#include <cstdio>
#include <jpeglib.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstring>
#include <fstream>
#include <iterator>

#include "resnetplus/errors.hpp"

namespace rnp {

namespace {

enum class Kind { kPng, kJpeg };

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open image: " + path);
  return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

Kind sniff(const std::string& bytes, const std::string& path) {
  static const unsigned char png_sig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), png_sig, 8) == 0) return Kind::kPng;
  if (bytes.size() >= 3 && static_cast<unsigned char>(bytes[0]) == 0xFF &&
      static_cast<unsigned char>(bytes[1]) == 0xD8 && static_cast<unsigned char>(bytes[2]) == 0xFF) {
    return Kind::kJpeg;
  }
  throw FormatError("unsupported image format (not PNG or JPEG): " + path);
}

struct JpegError {
  jpeg_error_mgr mgr;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegError*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

// Plain C-style decode; no C++ objects with destructors live across setjmp.
bool jpeg_decode_raw(const std::string& bytes, bool header_only, std::size_t* w, std::size_t* h,
                     std::vector<unsigned char>* rgb, char* message) {
  jpeg_decompress_struct cinfo;
  JpegError err;
  cinfo.err = jpeg_std_error(&err.mgr);
  err.mgr.error_exit = jpeg_error_exit;
  err.message[0] = '\0';
  if (setjmp(err.jump)) {
    jpeg_destroy_decompress(&cinfo);
    std::strncpy(message, err.message, JMSG_LENGTH_MAX);
    return false;
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, reinterpret_cast<const unsigned char*>(bytes.data()),
               static_cast<unsigned long>(bytes.size()));
  jpeg_read_header(&cinfo, TRUE);
  *w = cinfo.image_width;
  *h = cinfo.image_height;
  if (!header_only) {
    cinfo.out_color_space = JCS_RGB;
    jpeg_start_decompress(&cinfo);
    rgb->resize(static_cast<std::size_t>(cinfo.output_width) * cinfo.output_height * 3);
    while (cinfo.output_scanline < cinfo.output_height) {
      unsigned char* row = rgb->data() + static_cast<std::size_t>(cinfo.output_scanline) *
                                              cinfo.output_width * 3;
      jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
  }
  jpeg_destroy_decompress(&cinfo);
  return true;
}

Image from_rgb8(std::size_t w, std::size_t h, const std::vector<unsigned char>& rgb) {
  Image img(w, h);
  for (std::size_t i = 0; i < rgb.size(); ++i) img.pixels[i] = static_cast<float>(rgb[i]) / 255.0f;
  return img;
}

void check_extent(std::size_t w, std::size_t h, const std::string& path) {
  if (w == 0 || h == 0) throw FormatError("degenerate image (zero extent): " + path);
}

}  // namespace

ImageInfo probe_image(const std::string& path) {
  const std::string bytes = read_file(path);
  ImageInfo info;
  if (sniff(bytes, path) == Kind::kPng) {
    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size())) {
      std::string msg = png.message;
      png_image_free(&png);
      throw FormatError("corrupt PNG " + path + ": " + msg);
    }
    info.width = png.width;
    info.height = png.height;
    png_image_free(&png);
  } else {
    char message[JMSG_LENGTH_MAX] = {0};
    if (!jpeg_decode_raw(bytes, true, &info.width, &info.height, nullptr, message)) {
      throw FormatError("corrupt JPEG " + path + ": " + message);
    }
  }
  check_extent(info.width, info.height, path);
  return info;
}

Image decode_image(const std::string& path) {
  const std::string bytes = read_file(path);
  std::vector<unsigned char> rgb;
  std::size_t w = 0, h = 0;
  if (sniff(bytes, path) == Kind::kPng) {
    png_image png;
    std::memset(&png, 0, sizeof(png));
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&png, bytes.data(), bytes.size())) {
      std::string msg = png.message;
      png_image_free(&png);
      throw FormatError("corrupt PNG " + path + ": " + msg);
    }
    // Read with alpha and drop it; letting libpng compose over black would darken the colours.
    png.format = PNG_FORMAT_RGBA;
    w = png.width;
    h = png.height;
    std::vector<unsigned char> rgba(PNG_IMAGE_SIZE(png));
    if (!png_image_finish_read(&png, nullptr, rgba.data(), 0, nullptr)) {
      std::string msg = png.message;
      png_image_free(&png);
      throw FormatError("corrupt PNG " + path + ": " + msg);
    }
    rgb.resize(w * h * 3);
    for (std::size_t i = 0; i < w * h; ++i) {
      for (std::size_t c = 0; c < 3; ++c) rgb[3 * i + c] = rgba[4 * i + c];
    }
  } else {
    char message[JMSG_LENGTH_MAX] = {0};
    if (!jpeg_decode_raw(bytes, false, &w, &h, &rgb, message)) {
      throw FormatError("corrupt JPEG " + path + ": " + message);
    }
  }
  check_extent(w, h, path);
  return from_rgb8(w, h, rgb);
}

void encode_png(const std::string& path, const Image& img) {
  if (img.empty()) throw ArgumentError("encode_png: empty image");
  std::vector<unsigned char> rgb(img.pixels.size());
  for (std::size_t i = 0; i < rgb.size(); ++i) {
    const float v = std::clamp(img.pixels[i], 0.0f, 1.0f);
    rgb[i] = static_cast<unsigned char>(std::lround(v * 255.0f));
  }
  png_image png;
  std::memset(&png, 0, sizeof(png));
  png.version = PNG_IMAGE_VERSION;
  png.width = static_cast<png_uint_32>(img.width);
  png.height = static_cast<png_uint_32>(img.height);
  png.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&png, path.c_str(), 0, rgb.data(), 0, nullptr)) {
    std::string msg = png.message;
    png_image_free(&png);
    throw FormatError("cannot write PNG " + path + ": " + msg);
  }
}

Image resize_bilinear(const Image& img, std::size_t width, std::size_t height) {
  if (img.empty() || width == 0 || height == 0) throw ArgumentError("resize_bilinear: empty extent");
  Image out(width, height);
  const double sx = static_cast<double>(img.width) / static_cast<double>(width);
  const double sy = static_cast<double>(img.height) / static_cast<double>(height);
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = std::clamp((static_cast<double>(y) + 0.5) * sy - 0.5, 0.0,
                                 static_cast<double>(img.height - 1));
    const auto y0 = static_cast<std::size_t>(fy);
    const std::size_t y1 = std::min(y0 + 1, img.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = std::clamp((static_cast<double>(x) + 0.5) * sx - 0.5, 0.0,
                                   static_cast<double>(img.width - 1));
      const auto x0 = static_cast<std::size_t>(fx);
      const std::size_t x1 = std::min(x0 + 1, img.width - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = img.at(y0, x0, c) * (1 - wx) + img.at(y0, x1, c) * wx;
        const double bot = img.at(y1, x0, c) * (1 - wx) + img.at(y1, x1, c) * wx;
        out.at(y, x, c) = static_cast<float>(top * (1 - wy) + bot * wy);
      }
    }
  }
  return out;
}

Image crop(const Image& img, std::size_t x0, std::size_t y0, std::size_t w, std::size_t h) {
  if (w == 0 || h == 0 || x0 + w > img.width || y0 + h > img.height) {
    throw ArgumentError("crop: rectangle outside image");
  }
  Image out(w, h);
  for (std::size_t y = 0; y < h; ++y) {
    std::copy_n(img.pixels.begin() + static_cast<std::ptrdiff_t>(((y0 + y) * img.width + x0) * 3),
                w * 3, out.pixels.begin() + static_cast<std::ptrdiff_t>(y * w * 3));
  }
  return out;
}

}  // namespace rnp
