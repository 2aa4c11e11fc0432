#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "bronchosim/error.hpp"
#include "bronchosim/image.hpp"

namespace bronchosim {

/// Loss weights of the full training objective, kept for downstream
/// trainers. Nothing in this library optimizes them.
struct LossWeights {
  static constexpr double adversarial = 5.0;
  static constexpr double cycle = 1.0;
  static constexpr double identity = 1.0;
  static constexpr double airway = 0.5;
};

inline constexpr double kDefaultEpsilon = 1e-7;

// ---------------------------------------------------------------------------
// Airway structure loss

/// ReLU(mean disparity inside the airway mask - mean outside), with epsilon
/// in both denominators.
inline double airway_structure_loss(const ImageF& disparity, const Mask& mask,
                                    double epsilon = kDefaultEpsilon) {
  require_same_shape(disparity, mask, "airway_structure_loss");
  if (!(epsilon > 0.0)) throw ParameterError("invalid parameter 'epsilon': must be > 0");
  double sum_in = 0.0, n_in = 0.0, sum_out = 0.0, n_out = 0.0;
  for (std::size_t i = 0; i < disparity.size(); ++i) {
    const double m = mask[i] ? 1.0 : 0.0;
    sum_in += disparity[i] * m;
    n_in += m;
    sum_out += disparity[i] * (1.0 - m);
    n_out += 1.0 - m;
  }
  const double d_airway = sum_in / (n_in + epsilon);
  const double d_rest = sum_out / (n_out + epsilon);
  return std::max(0.0, d_airway - d_rest);
}

/// Batch value: the mean of per-map losses.
inline double airway_structure_loss(const std::vector<ImageF>& disparity, const std::vector<Mask>& masks,
                                    double epsilon = kDefaultEpsilon) {
  if (disparity.size() != masks.size() || disparity.empty())
    throw InputError("airway_structure_loss: batch sizes differ or are empty");
  double total = 0.0;
  for (std::size_t k = 0; k < disparity.size(); ++k)
    total += airway_structure_loss(disparity[k], masks[k], epsilon);
  return total / static_cast<double>(disparity.size());
}

// ---------------------------------------------------------------------------
// Airway depth structure evaluation

struct AdseParams {
  double epsilon = kDefaultEpsilon;
  double local_threshold = 0.99;      // local_pass: r_in_lumen > this
  double contrast_threshold = -1.00;  // contrast_pass: z < this
  double min_tolerance = 0.0;         // pixels with D <= D_min + tol form the minimum set
  bool sample_sigma = false;          // population standard deviation by default
  bool input_is_depth = false;        // invert depth maps to disparity first
};

struct AdseFrameResult {
  bool skipped = false;
  std::string skip_reason;
  double r_in_lumen = 0.0;
  double z_lumen_outside = 0.0;
  bool local_pass = false;
  bool contrast_pass = false;
  double d_min = 0.0;
  double mean_in = 0.0;
  double mean_out = 0.0;
  double sigma_out = 0.0;
  double tolerance = 0.0;
  std::size_t min_pixels = 0;
  std::size_t lumen_pixels = 0;
};

/// Pixels whose value is within `tol` of the global minimum.
inline Mask minimum_set(const ImageF& map, double tol = 0.0) {
  if (!(tol >= 0.0)) throw ParameterError("invalid parameter 'min_tolerance': must be >= 0");
  Mask out(map.width, map.height);
  if (map.empty()) return out;
  const double lo = *std::min_element(map.data.begin(), map.data.end());
  for (std::size_t i = 0; i < map.size(); ++i) out[i] = map[i] <= lo + tol ? 1 : 0;
  return out;
}

inline ImageF invert_depth(const ImageF& depth) {
  ImageF out(depth.width, depth.height);
  for (std::size_t i = 0; i < depth.size(); ++i) out[i] = 1.0 / depth[i];
  return out;
}

inline AdseFrameResult adse_frame(const ImageF& map, const Mask& lumen, const AdseParams& p = {}) {
  require_same_shape(map, lumen, "adse_frame");
  if (!(p.epsilon > 0.0)) throw ParameterError("invalid parameter 'epsilon': must be > 0");
  AdseFrameResult r;
  r.tolerance = p.min_tolerance;
  const ImageF disparity = p.input_is_depth ? invert_depth(map) : map;
  for (double v : disparity.data)
    if (!std::isfinite(v)) {
      r.skipped = true;
      r.skip_reason = "map contains non-finite values";
      return r;
    }
  const std::size_t n_in = count_true(lumen);
  const std::size_t n_out = lumen.size() - n_in;
  r.lumen_pixels = n_in;
  if (n_in == 0) {
    r.skipped = true;
    r.skip_reason = "lumen mask is empty";
    return r;
  }
  if (n_out < 2) {
    r.skipped = true;
    r.skip_reason = "fewer than 2 pixels outside the lumen";
    return r;
  }
  const Mask at_min = minimum_set(disparity, p.min_tolerance);
  r.d_min = *std::min_element(disparity.data.begin(), disparity.data.end());
  double min_total = 0.0, min_in = 0.0;
  double sum_in = 0.0, sum_out = 0.0;
  for (std::size_t i = 0; i < disparity.size(); ++i) {
    min_total += at_min[i];
    if (lumen[i]) {
      min_in += at_min[i];
      sum_in += disparity[i];
    } else {
      sum_out += disparity[i];
    }
  }
  r.min_pixels = static_cast<std::size_t>(min_total);
  r.r_in_lumen = min_in / (min_total + p.epsilon);
  // The region means carry epsilon in their denominators like every other
  // ratio of the evaluation; the spread uses the plain outside mean.
  r.mean_in = sum_in / (static_cast<double>(n_in) + p.epsilon);
  r.mean_out = sum_out / (static_cast<double>(n_out) + p.epsilon);
  const double plain_out = sum_out / static_cast<double>(n_out);
  double ss = 0.0;
  for (std::size_t i = 0; i < disparity.size(); ++i)
    if (!lumen[i]) ss += (disparity[i] - plain_out) * (disparity[i] - plain_out);
  r.sigma_out = std::sqrt(ss / static_cast<double>(p.sample_sigma ? n_out - 1 : n_out));
  r.z_lumen_outside = (r.mean_in - r.mean_out) / (r.sigma_out + p.epsilon);
  r.local_pass = r.r_in_lumen > p.local_threshold;
  r.contrast_pass = r.z_lumen_outside < p.contrast_threshold;
  return r;
}

// ---------------------------------------------------------------------------
// Classical depth metrics

/// Median of the values at valid pixels (mean of the middle pair for even
/// counts).
inline double masked_median(const ImageF& img, const Mask& valid) {
  std::vector<double> v;
  v.reserve(img.size());
  for (std::size_t i = 0; i < img.size(); ++i)
    if (valid[i]) v.push_back(img[i]);
  if (v.empty()) throw AlignmentError("median_align: no valid pixels");
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lower + upper);
}

struct AlignedPrediction {
  ImageF aligned;
  double scale = 1.0;
};

namespace detail {

/// a * b / c rounded once to nearest-even, computed on exact integer
/// mantissas. The result depends only on the real values, so a / c and
/// (k a) / (k c) give the same answer whenever k a and k c are exact.
inline double mul_div_rn(double a, double b, double c) {
  if (!std::isfinite(a) || !std::isfinite(b) || !std::isfinite(c) || c == 0.0 || a == 0.0 || b == 0.0)
    return a * b / c;
  const bool negative = (std::signbit(a) != std::signbit(b)) != std::signbit(c);
  auto split = [](double x, int& e) {
    const double f = std::frexp(std::fabs(x), &e);
    e -= 53;
    return static_cast<std::uint64_t>(std::ldexp(f, 53));
  };
  int ea = 0, eb = 0, ec = 0;
  const std::uint64_t ma = split(a, ea), mb = split(b, eb), mc = split(c, ec);
  constexpr int kShift = 21;
  const unsigned __int128 num = (static_cast<unsigned __int128>(ma) * mb) << kShift;
  const unsigned __int128 q = num / mc;
  const bool sticky = num % mc != 0;
  int bits = 0;
  for (unsigned __int128 t = q; t; t >>= 1) ++bits;
  int drop = bits - 53;
  std::uint64_t keep = static_cast<std::uint64_t>(q >> drop);
  const unsigned __int128 rest = q & ((static_cast<unsigned __int128>(1) << drop) - 1);
  const unsigned __int128 half = static_cast<unsigned __int128>(1) << (drop - 1);
  if (rest > half || (rest == half && (sticky || (keep & 1)))) ++keep;
  if (keep == (std::uint64_t{1} << 53)) {
    keep >>= 1;
    ++drop;
  }
  const double r = std::ldexp(static_cast<double>(keep), ea + eb - ec - kShift + drop);
  if (!std::isnormal(r)) return a * b / c;
  return negative ? -r : r;
}

}  // namespace detail

/// Rescales pred by median(gt) / median(pred) over valid pixels. Each pixel
/// is the correctly rounded value of pred * median(gt) / median(pred), so
/// pred = gt returns gt unchanged and exact rescalings of pred leave the
/// output bit-identical.
inline AlignedPrediction median_align(const ImageF& pred, const ImageF& gt, const Mask& valid) {
  require_same_shape(pred, gt, "median_align");
  require_same_shape(pred, valid, "median_align");
  const double mp = masked_median(pred, valid);
  const double mg = masked_median(gt, valid);
  if (!(mp > 0.0)) throw AlignmentError("median_align: median of prediction is not positive");
  if (!(mg > 0.0)) throw AlignmentError("median_align: median of ground truth is not positive");
  AlignedPrediction out;
  out.scale = mg / mp;
  out.aligned = ImageF(pred.width, pred.height);
  for (std::size_t i = 0; i < pred.size(); ++i) out.aligned[i] = detail::mul_div_rn(pred[i], mg, mp);
  return out;
}

struct ClassicalResult {
  double abs_rel = 0.0;
  double sq_rel = 0.0;
  double rmse = 0.0;
  double rmse_log = 0.0;
  double delta = 0.0;  // fraction with max(p/g, g/p) < 1.25
  double alignment_scale = 1.0;
  std::size_t valid_pixels = 0;
  std::size_t nonpositive_pixels = 0;  // excluded from rmse_log and delta
};

inline constexpr double kDeltaThreshold = 1.25;

inline ClassicalResult classical_metrics(const ImageF& pred, const ImageF& gt, const Mask& valid,
                                         double alignment_scale = 1.0) {
  require_same_shape(pred, gt, "classical_metrics");
  require_same_shape(pred, valid, "classical_metrics");
  ClassicalResult r;
  r.alignment_scale = alignment_scale;
  double abs_rel = 0.0, sq_rel = 0.0, sq = 0.0, sq_log = 0.0, inside = 0.0;
  std::size_t n = 0, n_pos = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (!valid[i]) continue;
    const double g = gt[i];
    const double q = pred[i];
    if (!(g > 0.0)) throw InputError("classical_metrics: ground truth must be > 0 on valid pixels");
    ++n;
    const double diff = q - g;
    abs_rel += std::abs(diff) / g;
    sq_rel += diff * diff / g;
    sq += diff * diff;
    if (q > 0.0) {
      ++n_pos;
      const double l = std::log(q) - std::log(g);
      sq_log += l * l;
      inside += std::max(q / g, g / q) < kDeltaThreshold ? 1.0 : 0.0;
    }
  }
  if (n == 0) throw InputError("classical_metrics: no valid pixels");
  r.valid_pixels = n;
  r.nonpositive_pixels = n - n_pos;
  r.abs_rel = abs_rel / static_cast<double>(n);
  r.sq_rel = sq_rel / static_cast<double>(n);
  r.rmse = std::sqrt(sq / static_cast<double>(n));
  if (n_pos > 0) {
    r.rmse_log = std::sqrt(sq_log / static_cast<double>(n_pos));
    r.delta = inside / static_cast<double>(n_pos);
  }
  return r;
}

/// Median alignment followed by the classical metrics.
inline ClassicalResult aligned_classical_metrics(const ImageF& pred, const ImageF& gt, const Mask& valid) {
  const AlignedPrediction a = median_align(pred, gt, valid);
  return classical_metrics(a.aligned, gt, valid, a.scale);
}

// ---------------------------------------------------------------------------
// Aggregation

struct FrameMetrics {
  std::string frame_id;
  std::optional<AdseFrameResult> adse;
  std::optional<ClassicalResult> classical;
  std::string skip_reason;  // non-empty when the frame could not be evaluated at all

  bool skipped() const {
    return !skip_reason.empty() || ((!adse || adse->skipped) && !classical);
  }
};

struct ClassicalMeans {
  double abs_rel = 0.0;
  double sq_rel = 0.0;
  double rmse = 0.0;
  double rmse_log = 0.0;
  double delta = 0.0;
};

struct MetricsReport {
  std::vector<FrameMetrics> frames;
  std::size_t frame_count = 0;
  std::size_t adse_frames = 0;       // frames with a non-skipped ADSE result
  std::size_t classical_frames = 0;  // frames with classical metrics
  std::size_t local_passes = 0;
  std::size_t contrast_passes = 0;
  double local_accu = 0.0;  // percent
  double depth_con = 0.0;   // percent
  ClassicalMeans classical;
  std::vector<std::pair<std::string, std::string>> skipped;  // frame id, reason
};

inline MetricsReport aggregate(std::vector<FrameMetrics> frames) {
  MetricsReport r;
  r.frame_count = frames.size();
  for (const auto& f : frames) {
    if (!f.skip_reason.empty()) {
      r.skipped.emplace_back(f.frame_id, f.skip_reason);
      continue;
    }
    if (f.adse) {
      if (f.adse->skipped) {
        r.skipped.emplace_back(f.frame_id, f.adse->skip_reason);
      } else {
        ++r.adse_frames;
        r.local_passes += f.adse->local_pass;
        r.contrast_passes += f.adse->contrast_pass;
      }
    }
    if (f.classical) {
      ++r.classical_frames;
      r.classical.abs_rel += f.classical->abs_rel;
      r.classical.sq_rel += f.classical->sq_rel;
      r.classical.rmse += f.classical->rmse;
      r.classical.rmse_log += f.classical->rmse_log;
      r.classical.delta += f.classical->delta;
    }
  }
  if (r.adse_frames == 0 && r.classical_frames == 0)
    throw AggregationError("aggregate: all " + std::to_string(frames.size()) + " frames were skipped");
  if (r.adse_frames > 0) {
    r.local_accu = 100.0 * static_cast<double>(r.local_passes) / static_cast<double>(r.adse_frames);
    r.depth_con = 100.0 * static_cast<double>(r.contrast_passes) / static_cast<double>(r.adse_frames);
  }
  if (r.classical_frames > 0) {
    const double n = static_cast<double>(r.classical_frames);
    r.classical.abs_rel /= n;
    r.classical.sq_rel /= n;
    r.classical.rmse /= n;
    r.classical.rmse_log /= n;
    r.classical.delta /= n;
  }
  r.frames = std::move(frames);
  return r;
}

}  // namespace bronchosim
