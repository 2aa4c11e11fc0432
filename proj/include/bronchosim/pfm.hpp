#pragma once

// Portable float map (grayscale "Pf"). Rows are stored bottom to top; a
// negative scale marks little-endian payloads. Values go through float.

#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "bronchosim/error.hpp"
#include "bronchosim/image.hpp"

namespace bronchosim {

namespace detail {

inline std::uint32_t byteswap32(std::uint32_t v) {
  return (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
}

inline std::string read_token(const std::string& buf, std::size_t& pos) {
  while (pos < buf.size() && std::isspace(static_cast<unsigned char>(buf[pos]))) ++pos;
  const std::size_t start = pos;
  while (pos < buf.size() && !std::isspace(static_cast<unsigned char>(buf[pos]))) ++pos;
  return buf.substr(start, pos - start);
}

}  // namespace detail

inline std::string encode_pfm(const ImageF& img) {
  std::ostringstream head;
  head << "Pf\n" << img.width << ' ' << img.height << "\n-1.0\n";
  std::string out = head.str();
  const std::size_t offset = out.size();
  out.resize(offset + img.size() * 4);
  char* dst = out.data() + offset;
  for (int y = img.height - 1; y >= 0; --y)
    for (int x = 0; x < img.width; ++x) {
      std::uint32_t bits = std::bit_cast<std::uint32_t>(static_cast<float>(img(x, y)));
      if constexpr (std::endian::native == std::endian::big) bits = detail::byteswap32(bits);
      std::memcpy(dst, &bits, 4);
      dst += 4;
    }
  return out;
}

inline ImageF decode_pfm(const std::string& buf, const std::string& path = "<memory>") {
  std::size_t pos = 0;
  auto fail = [&](const std::string& why) {
    throw FormatError(path + ": " + why + " (byte offset " + std::to_string(pos) + ")");
  };
  const std::string magic = detail::read_token(buf, pos);
  if (magic == "PF") fail("color PFM is not supported");
  if (magic != "Pf") fail("bad PFM magic '" + magic + "'");
  int w = 0, h = 0;
  double scale = 0.0;
  try {
    w = std::stoi(detail::read_token(buf, pos));
    h = std::stoi(detail::read_token(buf, pos));
    scale = std::stod(detail::read_token(buf, pos));
  } catch (const std::exception&) {
    fail("malformed PFM header");
  }
  if (w <= 0 || h <= 0) fail("non-positive PFM dimensions");
  if (scale == 0.0 || !std::isfinite(scale)) fail("invalid PFM scale");
  if (pos >= buf.size() || !std::isspace(static_cast<unsigned char>(buf[pos])))
    fail("missing header terminator");
  ++pos;
  const std::size_t expected = static_cast<std::size_t>(w) * static_cast<std::size_t>(h) * 4;
  const std::size_t actual = buf.size() - pos;
  if (actual < expected)
    fail("truncated payload: expected " + std::to_string(expected) + " bytes, got " +
         std::to_string(actual));
  const bool little = scale < 0.0;
  const bool swap = little != (std::endian::native == std::endian::little);
  ImageF img(w, h);
  const char* src = buf.data() + pos;
  for (int y = h - 1; y >= 0; --y)
    for (int x = 0; x < w; ++x) {
      std::uint32_t bits;
      std::memcpy(&bits, src, 4);
      src += 4;
      if (swap) bits = detail::byteswap32(bits);
      img(x, y) = static_cast<double>(std::bit_cast<float>(bits));
    }
  return img;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(path, "cannot open for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(path, "cannot open for writing");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(path, "write failed");
}

inline void write_pfm(const std::string& path, const ImageF& img) { write_file(path, encode_pfm(img)); }
inline ImageF read_pfm(const std::string& path) { return decode_pfm(read_file(path), path); }

}  // namespace bronchosim
