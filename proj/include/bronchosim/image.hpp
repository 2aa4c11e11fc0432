#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "bronchosim/error.hpp"

namespace bronchosim {

/// Row-major H x W raster; row 0 is the top of the image.
template <class T>
struct Image {
  int width = 0;
  int height = 0;
  std::vector<T> data;

  Image() = default;
  Image(int w, int h, T fill = T{})
      : width(w), height(h), data(static_cast<std::size_t>(w) * static_cast<std::size_t>(h), fill) {}

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
  T& operator()(int x, int y) { return data[index(x, y)]; }
  const T& operator()(int x, int y) const { return data[index(x, y)]; }
  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width) + static_cast<std::size_t>(x);
  }
  bool same_shape(int w, int h) const { return width == w && height == h; }
  template <class U>
  bool same_shape(const Image<U>& o) const {
    return width == o.width && height == o.height;
  }

  friend bool operator==(const Image&, const Image&) = default;
};

using ImageF = Image<double>;
using Mask = Image<std::uint8_t>;  // 0 or 1

struct Rgb {
  double r = 0.0;
  double g = 0.0;
  double b = 0.0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

using ImageRgb = Image<Rgb>;

template <class A, class B>
void require_same_shape(const Image<A>& a, const Image<B>& b, const std::string& what) {
  if (!a.same_shape(b))
    throw InputError(what + ": dimension mismatch " + std::to_string(a.width) + "x" +
                     std::to_string(a.height) + " vs " + std::to_string(b.width) + "x" +
                     std::to_string(b.height));
}

inline std::size_t count_true(const Mask& m) {
  std::size_t n = 0;
  for (auto v : m.data) n += v != 0;
  return n;
}

}  // namespace bronchosim
