#pragma once

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "bronchosim/error.hpp"
#include "bronchosim/image.hpp"

namespace bronchosim {

/// Decoded PNG samples, widened to 16 bits. Alpha is dropped.
struct PngData {
  int width = 0;
  int height = 0;
  int channels = 1;   // 1 gray, 3 RGB
  int bit_depth = 8;  // 8 or 16
  std::vector<std::uint16_t> samples;
};

namespace detail {

inline void png_write(const std::string& path, int w, int h, png_uint_32 format, const void* buffer) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(w);
  image.height = static_cast<png_uint_32>(h);
  image.format = format;
  if (!png_image_write_to_file(&image, path.c_str(), 0, buffer, 0, nullptr)) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw IoError(path, "PNG write failed: " + msg);
  }
}

}  // namespace detail

inline void write_png_gray8(const std::string& path, const Image<std::uint8_t>& img) {
  detail::png_write(path, img.width, img.height, PNG_FORMAT_GRAY, img.data.data());
}

inline void write_png_rgb8(const std::string& path, int w, int h, const std::vector<std::uint8_t>& rgb) {
  detail::png_write(path, w, h, PNG_FORMAT_RGB, rgb.data());
}

/// 16-bit grayscale; samples are written unchanged (linear, no gamma).
inline void write_png_gray16(const std::string& path, const Image<std::uint16_t>& img) {
  detail::png_write(path, img.width, img.height, PNG_FORMAT_LINEAR_Y, img.data.data());
}

inline PngData read_png(const std::string& path) {
  png_image image{};
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&image, path.c_str())) {
    const std::string msg = image.message;
    png_image_free(&image);
    if (msg.find("open") != std::string::npos || msg.find("No such") != std::string::npos)
      throw IoError(path, "cannot open PNG: " + msg);
    throw FormatError(path + ": PNG decode failed: " + msg);
  }
  const bool wide = (image.format & PNG_FORMAT_FLAG_LINEAR) != 0;
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  const bool alpha = (image.format & PNG_FORMAT_FLAG_ALPHA) != 0;
  png_uint_32 fmt = 0;
  if (wide) fmt |= PNG_FORMAT_FLAG_LINEAR;
  if (color) fmt |= PNG_FORMAT_FLAG_COLOR;
  if (alpha) fmt |= PNG_FORMAT_FLAG_ALPHA;
  image.format = fmt;
  const int in_ch = (color ? 3 : 1) + (alpha ? 1 : 0);
  const std::size_t count = static_cast<std::size_t>(image.width) * image.height * static_cast<std::size_t>(in_ch);

  PngData out;
  out.width = static_cast<int>(image.width);
  out.height = static_cast<int>(image.height);
  out.channels = color ? 3 : 1;
  out.bit_depth = wide ? 16 : 8;
  std::vector<std::uint16_t> wide_buf;
  std::vector<std::uint8_t> narrow_buf;
  bool ok = false;
  if (wide) {
    wide_buf.resize(count);
    ok = png_image_finish_read(&image, nullptr, wide_buf.data(), 0, nullptr) != 0;
  } else {
    narrow_buf.resize(count);
    ok = png_image_finish_read(&image, nullptr, narrow_buf.data(), 0, nullptr) != 0;
  }
  if (!ok) {
    const std::string msg = image.message;
    png_image_free(&image);
    throw FormatError(path + ": PNG decode failed: " + msg);
  }
  const std::size_t pixels = static_cast<std::size_t>(out.width) * static_cast<std::size_t>(out.height);
  out.samples.reserve(pixels * static_cast<std::size_t>(out.channels));
  for (std::size_t p = 0; p < pixels; ++p)
    for (int c = 0; c < out.channels; ++c) {
      const std::size_t i = p * static_cast<std::size_t>(in_ch) + static_cast<std::size_t>(c);
      out.samples.push_back(wide ? wide_buf[i] : narrow_buf[i]);
    }
  return out;
}

/// Grayscale intensities in [0, 1] as 8-bit samples.
inline Image<std::uint8_t> quantize8(const ImageF& img) {
  Image<std::uint8_t> out(img.width, img.height);
  for (std::size_t i = 0; i < img.size(); ++i) {
    const double v = std::clamp(img[i], 0.0, 1.0);
    out[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  return out;
}

/// Reads a PNG as intensities in [0, 1]; color images go through `to_gray`.
template <class ToGray>
ImageF read_png_intensity(const std::string& path, ToGray to_gray) {
  const PngData d = read_png(path);
  const double full = d.bit_depth == 16 ? 65535.0 : 255.0;
  ImageF out(d.width, d.height);
  for (std::size_t p = 0; p < out.size(); ++p) {
    if (d.channels == 1) {
      out[p] = d.samples[p] / full;
    } else {
      out[p] = to_gray(Rgb{d.samples[3 * p] / full, d.samples[3 * p + 1] / full,
                           d.samples[3 * p + 2] / full});
    }
  }
  return out;
}

}  // namespace bronchosim
