#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <optional>
#include <string>

#include "bronchosim/error.hpp"
#include "bronchosim/image.hpp"
#include "bronchosim/png_io.hpp"

namespace bronchosim {

enum class MaskSource { intensity_threshold, external };

inline const char* to_string(MaskSource s) {
  return s == MaskSource::external ? "external" : "intensity_threshold";
}

struct LumenMask {
  Mask mask;
  double threshold_used = 0.0;
  MaskSource source = MaskSource::intensity_threshold;
};

inline constexpr double kDefaultLumenThreshold = 0.15;

inline double luminance(const Rgb& c) { return 0.299 * c.r + 0.587 * c.g + 0.114 * c.b; }

inline ImageF luminance(const ImageRgb& img) {
  ImageF out(img.width, img.height);
  for (std::size_t i = 0; i < img.size(); ++i) out[i] = luminance(img[i]);
  return out;
}

/// mask = gray < t, with t clamped to [0, 1].
inline LumenMask airway_mask(const ImageF& gray, double t) {
  if (std::isnan(t)) throw ParameterError("invalid parameter 'threshold': NaN");
  t = std::clamp(t, 0.0, 1.0);
  LumenMask out;
  out.mask = Mask(gray.width, gray.height);
  out.threshold_used = t;
  for (std::size_t i = 0; i < gray.size(); ++i) out.mask[i] = gray[i] < t ? 1 : 0;
  return out;
}

/// Otsu's threshold on a 256-bin histogram of [0, 1]. Returns the lower edge
/// of the first bin of the bright class, so airway_mask(gray, t) selects the
/// dark class exactly.
inline double otsu_threshold(const ImageF& gray) {
  constexpr int kBins = 256;
  std::array<double, kBins> hist{};
  for (double v : gray.data) {
    const int b = std::clamp(static_cast<int>(std::floor(std::clamp(v, 0.0, 1.0) * kBins)), 0, kBins - 1);
    hist[static_cast<std::size_t>(b)] += 1.0;
  }
  const double total = static_cast<double>(gray.size());
  double sum_all = 0.0;
  for (int b = 0; b < kBins; ++b) sum_all += b * hist[static_cast<std::size_t>(b)];
  double w0 = 0.0, sum0 = 0.0, best = -1.0;
  int split = 1;
  for (int b = 0; b < kBins - 1; ++b) {
    w0 += hist[static_cast<std::size_t>(b)];
    sum0 += b * hist[static_cast<std::size_t>(b)];
    const double w1 = total - w0;
    if (w0 == 0.0 || w1 == 0.0) continue;
    const double m0 = sum0 / w0;
    const double m1 = (sum_all - sum0) / w1;
    const double between = w0 * w1 * (m0 - m1) * (m0 - m1);
    if (between > best) {
      best = between;
      split = b + 1;
    }
  }
  return static_cast<double>(split) / kBins;
}

inline LumenMask otsu_mask(const ImageF& gray) { return airway_mask(gray, otsu_threshold(gray)); }

/// Reads an 8-bit (or 16-bit) PNG mask, nonzero meaning lumen. When an
/// expected size is given, a mismatch raises IngestionError.
inline LumenMask load_external_mask(const std::string& path, std::optional<std::pair<int, int>> expected = {}) {
  const PngData d = read_png(path);
  if (expected && (d.width != expected->first || d.height != expected->second))
    throw IngestionError(path + ": mask is " + std::to_string(d.width) + "x" + std::to_string(d.height) +
                         ", paired image is " + std::to_string(expected->first) + "x" +
                         std::to_string(expected->second));
  LumenMask out;
  out.source = MaskSource::external;
  out.mask = Mask(d.width, d.height);
  for (std::size_t p = 0; p < out.mask.size(); ++p) {
    bool on = false;
    for (int c = 0; c < d.channels; ++c) on = on || d.samples[p * static_cast<std::size_t>(d.channels) + static_cast<std::size_t>(c)] != 0;
    out.mask[p] = on ? 1 : 0;
  }
  return out;
}

inline void write_mask_png(const std::string& path, const Mask& m) {
  Image<std::uint8_t> out(m.width, m.height);
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = m[i] ? 255 : 0;
  write_png_gray8(path, out);
}

}  // namespace bronchosim
