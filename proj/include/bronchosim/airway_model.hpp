#pragma once

// Parametric bronchial-tree sampler.
//
// Geometry conventions (all lengths in mm, angles in degrees at the API):
//  * Segment ids are heap indices: root 0, daughters of i are 2i+1 (a) and
//    2i+2 (b). Generation g holds ids [2^g - 1, 2^(g+1) - 1).
//  * Each segment owns a frame whose origin is the start of its centerline,
//    z the initial tangent, x the lateral direction it bends toward and y the
//    binormal. A daughter's centerline is a circular arc of angle phi that
//    bends toward x, followed by a straight run of the sampled length.
//  * The arc is the bifurcation transition. Its outer (concave) wall has
//    curvature radius r_star = D / (2 sin phi); the centerline therefore bends
//    with radius r_star + D/2. Along the arc the ring radius follows a
//    rescaled logistic from the parent-matching radius to D/2.
//  * The bifurcation frame at the end of a parent is its end tangent rotated
//    about that tangent by the parent's twist. Daughter a bends toward +x of
//    that frame, daughter b toward -x, so the plane x = 0 separates them.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "bronchosim/error.hpp"
#include "bronchosim/geometry.hpp"
#include "bronchosim/rng.hpp"

namespace bronchosim {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double v) const { return v >= lo && v <= hi; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

/// Rescaled logistic used for bifurcation tapering. `operator()` maps [0,1]
/// onto [0,1] exactly at the endpoints and is strictly increasing.
struct SigmoidTaper {
  double steepness = 8.0;
  double midpoint = 0.5;

  double logistic(double t) const { return 1.0 / (1.0 + std::exp(-steepness * (t - midpoint))); }
  double operator()(double t) const {
    const double g0 = logistic(0.0);
    const double g1 = logistic(1.0);
    return (logistic(t) - g0) / (g1 - g0);
  }
  friend bool operator==(const SigmoidTaper&, const SigmoidTaper&) = default;
};

/// Ring radius at normalized transition station t: the parent-matching
/// radius at t = 0, the daughter radius at t = 1.
inline double taper_radius(const SigmoidTaper& taper, double start_radius, double end_radius,
                           double t) {
  if (t <= 0.0) return start_radius;
  if (t >= 1.0) return end_radius;
  return start_radius + (end_radius - start_radius) * taper(t);
}

struct GenerationParams {
  int generations = 6;
  std::vector<double> ld_ratio_per_gen;
  Interval h_range{0.68, 0.88};
  double phi_max = 120.0;
  double length_sigma_factor = 0.3;
  double root_diameter = 18.0;
  std::vector<double> l_mean_per_gen;
  std::uint64_t seed = 0;
  SigmoidTaper taper;
  /// Carinal rounding radius as a fraction of the smaller daughter radius.
  double carina_rounding_factor = 0.25;
  int max_attempts = 256;

  friend bool operator==(const GenerationParams&, const GenerationParams&) = default;
};

/// Weibel-style length-to-diameter ratios by generation (trachea first).
inline double default_ld_ratio(int generation) {
  static constexpr double kTable[] = {6.7, 3.9, 2.3, 2.0, 2.8, 3.1, 3.2, 3.3, 3.3, 3.0};
  constexpr int kSize = static_cast<int>(std::size(kTable));
  return kTable[std::clamp(generation, 0, kSize - 1)];
}

/// Fills per-generation tables from the defaults. Expected lengths are the
/// L/D ratio times the nominal diameter root * mean(h)^g.
inline GenerationParams default_params(int generations, std::uint64_t seed) {
  GenerationParams p;
  p.generations = generations;
  p.seed = seed;
  const double h_mid = 0.5 * (p.h_range.lo + p.h_range.hi);
  for (int g = 0; g < std::max(generations, 0); ++g) {
    p.ld_ratio_per_gen.push_back(default_ld_ratio(g));
    p.l_mean_per_gen.push_back(default_ld_ratio(g) * p.root_diameter * std::pow(h_mid, g));
  }
  return p;
}

/// Recomputes l_mean_per_gen from the L/D table and the current root
/// diameter and h_range.
inline void derive_mean_lengths(GenerationParams& p) {
  const double h_mid = 0.5 * (p.h_range.lo + p.h_range.hi);
  p.l_mean_per_gen.clear();
  for (int g = 0; g < static_cast<int>(p.ld_ratio_per_gen.size()); ++g)
    p.l_mean_per_gen.push_back(p.ld_ratio_per_gen[g] * p.root_diameter * std::pow(h_mid, g));
}

inline void validate(const GenerationParams& p) {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ParameterError("invalid parameter '" + field + "': " + why);
  };
  if (p.generations < 1) fail("generations", "must be >= 1");
  if (p.generations > 16) fail("generations", "must be <= 16");
  if (static_cast<int>(p.ld_ratio_per_gen.size()) != p.generations)
    fail("ld_ratio_per_gen", "length must equal generations");
  if (static_cast<int>(p.l_mean_per_gen.size()) != p.generations)
    fail("l_mean_per_gen", "length must equal generations");
  for (double v : p.ld_ratio_per_gen)
    if (!(v > 0.0)) fail("ld_ratio_per_gen", "entries must be > 0");
  for (double v : p.l_mean_per_gen)
    if (!(v > 0.0)) fail("l_mean_per_gen", "entries must be > 0");
  if (!(p.h_range.lo > 0.0 && p.h_range.hi < 1.0 && p.h_range.lo <= p.h_range.hi))
    fail("h_range", "must satisfy 0 < lo <= hi < 1");
  if (!(p.phi_max > 0.0 && p.phi_max <= 120.0)) fail("phi_max", "must lie in (0, 120] degrees");
  if (!(p.length_sigma_factor > 0.0 && p.length_sigma_factor < 1.0))
    fail("length_sigma_factor", "must lie in (0, 1)");
  if (!(p.root_diameter > 0.0)) fail("root_diameter", "must be > 0");
  if (!(p.taper.steepness > 0.0)) fail("taper.steepness", "must be > 0");
  if (!(p.taper.midpoint >= 0.0 && p.taper.midpoint <= 1.0))
    fail("taper.midpoint", "must lie in [0, 1]");
  if (!(p.carina_rounding_factor >= 0.0 && p.carina_rounding_factor < 1.0))
    fail("carina_rounding_factor", "must lie in [0, 1)");
  if (p.max_attempts < 1) fail("max_attempts", "must be >= 1");
}

struct AirwaySegment {
  int id = 0;
  std::optional<int> parent_id;
  int generation = 0;
  double diameter = 0.0;
  double length = 0.0;  // straight run after the transition arc
  double twist = 0.0;   // rotation of the next branching plane, [0, 360)
  Frame frame;
  double bend_angle = 0.0;    // phi of the transition arc, 0 for the root
  double bend_radius = 0.0;   // centerline radius of the transition arc
  double start_radius = 0.0;  // ring radius where the transition starts

  double radius() const { return 0.5 * diameter; }
  double arc_length() const { return bend_radius * deg_to_rad(bend_angle); }
  double centerline_length() const { return arc_length() + length; }
  friend bool operator==(const AirwaySegment&, const AirwaySegment&) = default;
};

struct BifurcationGeometry {
  int parent_id = 0;
  int daughter_a = 0;
  int daughter_b = 0;
  double phi_a = 0.0;
  double phi_b = 0.0;
  double phi_min = 0.0;
  double r_star_a = 0.0;
  double r_star_b = 0.0;
  // In-plane coordinates: x toward daughter a, y along the parent axis.
  Vec2 carina_center;
  double r_c = 0.0;
  double tilt_a = 0.0;
  double tilt_b = 0.0;
  SigmoidTaper taper;
  Interval sagittal_range_a;
  Interval sagittal_range_b;
  Frame frame;  // origin at the parent end, z the parent end tangent

  friend bool operator==(const BifurcationGeometry&, const BifurcationGeometry&) = default;
};

struct AirwayTree {
  std::vector<AirwaySegment> segments;  // indexed by id
  std::vector<BifurcationGeometry> bifurcations;
  GenerationParams params;

  const AirwaySegment& segment(int id) const { return segments.at(static_cast<std::size_t>(id)); }
  bool is_leaf(int id) const { return 2 * id + 1 >= static_cast<int>(segments.size()); }
  const BifurcationGeometry* bifurcation_at(int parent_id) const {
    for (const auto& b : bifurcations)
      if (b.parent_id == parent_id) return &b;
    return nullptr;
  }
  friend bool operator==(const AirwayTree&, const AirwayTree&) = default;
};

inline int segment_count(int generations) { return (1 << generations) - 1; }

// ---------------------------------------------------------------------------
// Closed-form pieces

/// Outer-wall curvature radius of a daughter transition.
inline double curvature_radius(double d, double phi_deg) {
  if (!(d > 0.0)) throw DomainError("curvature_radius: diameter must be > 0");
  if (!(phi_deg > 0.0)) throw DomainError("curvature_radius: phi must be > 0");
  const double s = std::sin(deg_to_rad(phi_deg));
  if (s < 1e-9) throw DomainError("curvature_radius: sin(phi) below 1e-9");
  return d / (2.0 * s);
}

namespace detail {

// Distance between the distal halves of two daughter axes leaving a common
// point at +phi and -phi about the parent axis.
inline double distal_half_clearance(double phi_deg, double len_a, double len_b) {
  const double p = deg_to_rad(phi_deg);
  const Vec3 da{std::sin(p), 0.0, std::cos(p)};
  const Vec3 db{-std::sin(p), 0.0, std::cos(p)};
  return segment_distance(da * (0.5 * len_a), da * len_a, db * (0.5 * len_b), db * len_b);
}

}  // namespace detail

/// Smallest symmetric branching angle (degrees) at which the distal halves of
/// the daughter axes clear each other by (d_a + d_b) / 2. Monotone in phi on
/// [0, 90], solved by bisection. Returns 90 when even opposite daughters do
/// not clear; callers must then check `branching_clears`.
inline double min_branching_angle(double d_a, double d_b, double len_a, double len_b) {
  const double need = 0.5 * (d_a + d_b);
  auto ok = [&](double phi) { return detail::distal_half_clearance(phi, len_a, len_b) >= need; };
  if (ok(0.0)) return 0.0;
  if (!ok(90.0)) return 90.0;
  double lo = 0.0;
  double hi = 90.0;
  for (int i = 0; i < 80; ++i) {
    const double mid = 0.5 * (lo + hi);
    (ok(mid) ? hi : lo) = mid;
  }
  return hi;
}

inline bool branching_clears(double phi_deg, double d_a, double d_b, double len_a, double len_b) {
  return detail::distal_half_clearance(phi_deg, len_a, len_b) >= 0.5 * (d_a + d_b) - 1e-12;
}

// ---------------------------------------------------------------------------
// Centerline stations

struct Station {
  Vec3 center;
  Vec3 tangent;
  Vec3 lateral;   // ring direction at psi = 90 deg
  Vec3 binormal;  // ring direction at psi = 0
  double radius = 0.0;

  /// Ring point at angle psi (radians) measured from the binormal toward the
  /// lateral axis.
  Vec3 ring_point(double psi) const {
    return center + (lateral * std::sin(psi) + binormal * std::cos(psi)) * radius;
  }
};

/// Station at arc-length u along the segment centerline.
inline Station station(const AirwaySegment& s, const SigmoidTaper& taper, double u) {
  const Frame& f = s.frame;
  Station st;
  st.binormal = f.y;
  const double arc = s.arc_length();
  if (arc > 0.0 && u < arc) {
    const double phi = u / s.bend_radius;
    const double c = std::cos(phi);
    const double sn = std::sin(phi);
    st.center = f.origin + (f.x * (1.0 - c) + f.z * sn) * s.bend_radius;
    st.tangent = f.z * c + f.x * sn;
    st.lateral = f.x * c - f.z * sn;
    st.radius = taper_radius(taper, s.start_radius, s.radius(), u / arc);
    return st;
  }
  const double phi = deg_to_rad(s.bend_angle);
  const double c = std::cos(phi);
  const double sn = std::sin(phi);
  const Vec3 arc_end = f.origin + (f.x * (1.0 - c) + f.z * sn) * s.bend_radius;
  st.tangent = f.z * c + f.x * sn;
  st.lateral = f.x * c - f.z * sn;
  st.center = arc_end + st.tangent * (u - arc);
  st.radius = s.radius();
  return st;
}

/// Frame of the bifurcation at the distal end of `parent`.
inline Frame bifurcation_frame(const AirwaySegment& parent, const SigmoidTaper& taper) {
  const Station end = station(parent, taper, parent.centerline_length());
  const double t = deg_to_rad(parent.twist);
  Frame f;
  f.origin = end.center;
  f.z = end.tangent;
  f.x = normalize(end.lateral * std::cos(t) + end.binormal * std::sin(t));
  f.y = normalize(cross(f.z, f.x));
  return f;
}

/// Places a daughter given the bifurcation frame at its parent's end.
inline void place_daughter(AirwaySegment& d, const Frame& bif, bool side_a, double phi_deg,
                           double parent_radius) {
  d.frame.origin = bif.origin;
  d.frame.z = bif.z;
  d.frame.x = side_a ? bif.x : -bif.x;
  d.frame.y = side_a ? bif.y : -bif.y;
  d.bend_angle = phi_deg;
  const double r_star = curvature_radius(d.diameter, phi_deg);
  d.bend_radius = r_star + d.radius();
  d.start_radius = std::min(parent_radius, 0.9 * d.bend_radius);
}

// ---------------------------------------------------------------------------
// Carinal rounding

namespace detail {

struct WallLine {
  Vec2 point;
  Vec2 dir;
};

// Inner wall of a daughter's straight run, in bifurcation-plane coordinates
// (x toward daughter a, y along the parent axis).
inline WallLine inner_wall(double phi_deg, double diameter, bool side_a) {
  const double p = deg_to_rad(phi_deg);
  const double r = 0.5 * diameter;
  const double rho = curvature_radius(diameter, phi_deg) + r;
  const double sx = side_a ? 1.0 : -1.0;
  const Vec2 arc_end{sx * rho * (1.0 - std::cos(p)), rho * std::sin(p)};
  const Vec2 lateral{sx * std::cos(p), -std::sin(p)};
  return {arc_end - lateral * r, {sx * std::sin(p), std::cos(p)}};
}

inline double point_ray_distance(Vec2 q, Vec2 origin, Vec2 dir) {
  const double t = std::max(0.0, dot(q - origin, dir));
  return length(q - (origin + dir * t));
}

inline double signed_angle_from_down(Vec2 v) {
  // Angle from (0,-1) to v, positive toward +x.
  return rad_to_deg(std::atan2(v.x, -v.y));
}

}  // namespace detail

struct CarinaLayout {
  Vec2 apex;
  Vec2 center;
  double radius = 0.0;
  double sagittal_end = 0.0;  // degrees; the range is [-end, +end]
  double tilt_a = 0.0;
  double tilt_b = 0.0;
  Vec2 bisector{0.0, 1.0};
  bool rounded = false;
};

/// Rounding circle inscribed in the tissue wedge between the daughters'
/// inner walls. Degenerates to radius 0 when the walls do not form a wedge
/// (phi_a + phi_b close to or above 180 degrees).
inline CarinaLayout carina_layout(double phi_a, double phi_b, double d_a, double d_b,
                                  double rounding_factor) {
  using detail::inner_wall;
  const auto wa = inner_wall(phi_a, d_a, true);
  const auto wb = inner_wall(phi_b, d_b, false);
  CarinaLayout out;
  const double denom = cross(wa.dir, wb.dir);
  if (phi_a + phi_b >= 179.0 || std::abs(denom) < 1e-9 || rounding_factor <= 0.0) {
    out.apex = (wa.point + wb.point) * 0.5;
    out.center = out.apex;
    return out;
  }
  const double s = cross(wb.point - wa.point, wb.dir) / denom;
  out.apex = wa.point + wa.dir * s;
  const double half_wedge = 0.5 * deg_to_rad(phi_a + phi_b);
  out.bisector = normalize(wa.dir + wb.dir);
  const double rho = rounding_factor * 0.5 * std::min(d_a, d_b);
  out.center = out.apex + out.bisector * (rho / std::sin(half_wedge));
  out.radius = std::min(detail::point_ray_distance(out.center, out.apex, wa.dir),
                        detail::point_ray_distance(out.center, out.apex, wb.dir));
  out.sagittal_end = 90.0 - rad_to_deg(half_wedge);
  const Vec2 down = out.bisector * -1.0;
  const double base = detail::signed_angle_from_down(down);
  out.tilt_a = base + out.sagittal_end;
  out.tilt_b = base - out.sagittal_end;
  out.rounded = true;
  return out;
}

struct RoundingCircle {
  Vec2 center;
  double radius = 0.0;
  double tilt = 0.0;  // degrees from the parent-ward axis, positive toward a
  Vec2 contact;       // point of the rounded carina profile at this station
};

/// Rounding circle at a sagittal station. The sagittal angle sweeps the
/// rounded carina from daughter b (range low end) to daughter a (high end);
/// the tilt interpolates linearly between tilt_b and tilt_a.
inline RoundingCircle carinal_rounding(const BifurcationGeometry& bif, double sagittal_angle) {
  const double lo = bif.sagittal_range_b.lo;
  const double hi = bif.sagittal_range_a.hi;
  if (!(sagittal_angle >= lo - 1e-12 && sagittal_angle <= hi + 1e-12))
    throw DomainError("carinal_rounding: sagittal angle outside [" + std::to_string(lo) + ", " +
                      std::to_string(hi) + "]");
  RoundingCircle c;
  c.center = bif.carina_center;
  c.radius = bif.r_c;
  const double w = hi > lo ? (sagittal_angle - lo) / (hi - lo) : 0.5;
  c.tilt = bif.tilt_b + (bif.tilt_a - bif.tilt_b) * w;
  const double t = deg_to_rad(c.tilt);
  c.contact = c.center + Vec2{std::sin(t), -std::cos(t)} * c.radius;
  return c;
}

// ---------------------------------------------------------------------------
// Geometric feasibility

struct Capsule {
  Vec3 a;
  Vec3 b;
  double radius = 0.0;
};

/// Conservative capsule cover of a segment's tube.
inline std::vector<Capsule> capsule_chain(const AirwaySegment& s, const SigmoidTaper& taper,
                                          int arc_pieces = 8) {
  std::vector<Capsule> out;
  const double arc = s.arc_length();
  if (arc > 0.0) {
    const double dphi = deg_to_rad(s.bend_angle) / arc_pieces;
    const double sagitta = s.bend_radius * (1.0 - std::cos(0.5 * dphi));
    for (int k = 0; k < arc_pieces; ++k) {
      const double u0 = arc * k / arc_pieces;
      const double u1 = arc * (k + 1) / arc_pieces;
      const Station a = station(s, taper, u0);
      const Station b = station(s, taper, u1 - 1e-12);
      out.push_back({a.center, b.center, std::max(a.radius, b.radius) + sagitta});
    }
  }
  const Station a = station(s, taper, arc);
  const Station b = station(s, taper, s.centerline_length());
  out.push_back({a.center, b.center, s.radius()});
  return out;
}

inline double chain_clearance(const std::vector<Capsule>& p, const std::vector<Capsule>& q) {
  double best = std::numeric_limits<double>::infinity();
  for (const auto& c1 : p)
    for (const auto& c2 : q)
      best = std::min(best, segment_distance(c1.a, c1.b, c2.a, c2.b) - c1.radius - c2.radius);
  return best;
}

/// Transition layout of a daughter: where each inner-wall ring angle crosses
/// the separating plane, and where the whole ring has crossed.
struct TransitionLayout {
  bool feasible = false;
  double full_crossing = 0.0;  // u at which every ring point is past the plane
  double transition_end = 0.0; // u of the last transition ring
};

namespace detail {

// Signed distance of ring point (u, psi) from the plane separating the
// daughters, positive on this daughter's side.
inline double side_distance(const AirwaySegment& s, const SigmoidTaper& taper, double u,
                            double psi) {
  const Station st = station(s, taper, u);
  return dot(st.ring_point(psi) - s.frame.origin, s.frame.x);
}

inline double side_distance_min(const AirwaySegment& s, const SigmoidTaper& taper, double u) {
  const Station st = station(s, taper, u);
  return dot(st.center - s.frame.origin, s.frame.x) - st.radius * std::abs(dot(st.lateral, s.frame.x));
}

inline double scan_step(const AirwaySegment& s) {
  return std::min(s.centerline_length() / 64.0, s.radius() / 12.0);
}

}  // namespace detail

/// First u at which ring angle psi reaches the separating plane. Returns a
/// negative value when it never does within the segment.
inline double crossing_station(const AirwaySegment& s, const SigmoidTaper& taper, double psi) {
  const double total = s.centerline_length();
  const double h = detail::scan_step(s);
  double prev = 0.0;
  if (detail::side_distance(s, taper, 0.0, psi) >= 0.0) return 0.0;
  for (double u = h; u <= total + 0.5 * h; u += h) {
    const double uc = std::min(u, total);
    if (detail::side_distance(s, taper, uc, psi) >= 0.0) {
      double lo = prev;
      double hi = uc;
      for (int i = 0; i < 48; ++i) {
        const double mid = 0.5 * (lo + hi);
        (detail::side_distance(s, taper, mid, psi) >= 0.0 ? hi : lo) = mid;
      }
      return hi;
    }
    prev = uc;
  }
  return -1.0;
}

inline TransitionLayout transition_layout(const AirwaySegment& s, const SigmoidTaper& taper) {
  TransitionLayout out;
  const double total = s.centerline_length();
  const double h = detail::scan_step(s);
  double first = -1.0;
  double prev = 0.0;
  for (double u = h; u <= total + 0.5 * h; u += h) {
    const double uc = std::min(u, total);
    const double g = detail::side_distance_min(s, taper, uc);
    if (g > 0.0 && first < 0.0) {
      double lo = prev;
      double hi = uc;
      for (int i = 0; i < 48; ++i) {
        const double mid = 0.5 * (lo + hi);
        (detail::side_distance_min(s, taper, mid) > 0.0 ? hi : lo) = mid;
      }
      first = hi;
    } else if (g <= 0.0 && first >= 0.0) {
      return out;  // re-crosses: not separable
    }
    prev = uc;
  }
  if (first < 0.0) return out;
  out.full_crossing = first;
  out.transition_end = first + 0.15 * s.radius();
  // Leave room for at least one straight ring interval before the end.
  out.feasible = out.transition_end < total - 0.25 * s.radius();
  return out;
}

/// Every inner-wall ring angle must cross once and stay on its side until
/// the full ring has crossed.
inline bool inner_walls_separable(const AirwaySegment& s, const SigmoidTaper& taper,
                                  double full_crossing, int samples = 24) {
  const double h = detail::scan_step(s);
  for (int k = 1; k < samples; ++k) {
    const double psi = std::numbers::pi + std::numbers::pi * k / samples;
    const double u0 = crossing_station(s, taper, psi);
    if (u0 < 0.0 || u0 > full_crossing + 1e-9) return false;
    for (double u = u0 + h; u < full_crossing; u += h)
      if (detail::side_distance(s, taper, u, psi) <= 0.0) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Carina ridge shared by the two daughters of a bifurcation

/// Ridge parameter s in (0, 1) pairs daughter a's wall angle pi (1 + s) with
/// daughter b's wall angle pi (2 - s); s = 0.5 is the middle of the carina.
struct CarinaRidge {
  double lift = 0.0;     // rise of the ridge middle toward the rounded crest
  double shift_a = 0.0;  // inner-wall start offset toward a's tangent point
  double shift_b = 0.0;
};

inline double ridge_weight(double s) {
  const double w = std::sin(std::numbers::pi * s);
  return w * w;
}

/// Crossing point pair midpoint on the separating plane, in bifurcation
/// coordinates. Requires both walls to cross the plane.
inline Vec3 ridge_base_local(const AirwaySegment& a, const AirwaySegment& b,
                             const SigmoidTaper& taper, const Frame& bif, double s) {
  const double psi_a = std::numbers::pi * (1.0 + s);
  const double psi_b = std::numbers::pi * (2.0 - s);
  const double ua = crossing_station(a, taper, psi_a);
  const double ub = crossing_station(b, taper, psi_b);
  if (ua < 0.0) throw TessellationError(a.id, "inner wall does not cross the separating plane");
  if (ub < 0.0) throw TessellationError(b.id, "inner wall does not cross the separating plane");
  const Vec3 pa = station(a, taper, ua).ring_point(psi_a);
  const Vec3 pb = station(b, taper, ub).ring_point(psi_b);
  Vec3 local = bif.to_local(0.5 * (pa + pb));
  local.x = 0.0;
  return local;
}

inline CarinaRidge carina_ridge(const AirwaySegment& a, const AirwaySegment& b,
                                const SigmoidTaper& taper, const Frame& bif,
                                double rounding_factor) {
  CarinaRidge out;
  const CarinaLayout carina =
      carina_layout(a.bend_angle, b.bend_angle, a.diameter, b.diameter, rounding_factor);
  if (!carina.rounded) return out;
  const double psi_a = 1.5 * std::numbers::pi;
  const Vec3 mid_a = station(a, taper, std::max(0.0, crossing_station(a, taper, psi_a)))
                         .ring_point(psi_a);
  const Vec3 mid_b = station(b, taper, std::max(0.0, crossing_station(b, taper, psi_a)))
                         .ring_point(psi_a);
  const double mid_height = dot(0.5 * (mid_a + mid_b) - bif.origin, bif.z);
  const Vec2 crest = carina.center - carina.bisector * carina.radius;
  out.lift = std::max(0.0, crest.y - mid_height);
  auto contact = [&](double tilt) {
    const double t = deg_to_rad(tilt);
    return carina.center + Vec2{std::sin(t), -std::cos(t)} * carina.radius;
  };
  const Vec3 la = bif.to_local(mid_a);
  const Vec3 lb = bif.to_local(mid_b);
  out.shift_a = length(contact(carina.tilt_a) - Vec2{la.x, la.z});
  out.shift_b = length(contact(carina.tilt_b) - Vec2{lb.x, lb.z});
  return out;
}

inline Vec3 ridge_point(const AirwaySegment& a, const AirwaySegment& b, const SigmoidTaper& taper,
                        const Frame& bif, const CarinaRidge& ridge, double s) {
  Vec3 local = ridge_base_local(a, b, taper, bif, s);
  local.z += ridge.lift * ridge_weight(s);
  return bif.to_world(local);
}

/// First station of a daughter's inner-wall column after carinal rounding.
inline double inner_wall_start(double crossing, double transition_end, double shift, double s) {
  return crossing + std::min(shift * ridge_weight(s), 0.5 * (transition_end - crossing));
}

/// Convex capsule containing the whole transition of one daughter: the
/// parent ring half, the ridge, and the lofted rows up to transition_end.
inline Capsule transition_capsule(const AirwaySegment& d, const AirwaySegment& a,
                                  const AirwaySegment& b, const SigmoidTaper& taper,
                                  const Frame& bif, const CarinaRidge& ridge,
                                  double parent_radius, double transition_end) {
  Capsule c;
  c.a = bif.origin;
  c.b = station(d, taper, transition_end).center;
  auto dist = [&](Vec3 p) { return segment_distance(p, p, c.a, c.b); };
  double r = parent_radius;
  constexpr int kRidge = 24;
  for (int k = 1; k < kRidge; ++k) r = std::max(r, dist(ridge_point(a, b, taper, bif, ridge, double(k) / kRidge)));
  constexpr int kRows = 24;
  constexpr int kCols = 32;
  for (int i = 0; i <= kRows; ++i) {
    const Station st = station(d, taper, transition_end * i / kRows);
    for (int j = 0; j < kCols; ++j) r = std::max(r, dist(st.ring_point(2.0 * std::numbers::pi * j / kCols)));
  }
  c.radius = 1.02 * r;
  return c;
}

// ---------------------------------------------------------------------------
// Sampling

namespace detail {

enum StreamPurpose : std::uint64_t {
  kDiameterStream = 1,
  kLengthStream = 2,
  kTwistStream = 3,
  kAngleStream = 4,
};

inline constexpr int kAnglesPerLengthDraw = 16;

}  // namespace detail

/// Draw from N(mean, (factor * mean)^2) truncated to [0.2 mean, 2 mean] by
/// rejection on the given stream.
inline double sample_length(RandomStream& rng, double mean, double sigma_factor) {
  for (int i = 0; i < 1000; ++i) {
    const double v = rng.normal(mean, sigma_factor * mean);
    if (v >= 0.2 * mean && v <= 2.0 * mean) return v;
  }
  return mean;
}

inline double sample_segment_length(const GenerationParams& p, int id, int generation,
                                    int draw = 0) {
  RandomStream rng(stream_key(p.seed, static_cast<std::uint64_t>(id), detail::kLengthStream,
                              static_cast<std::uint64_t>(draw)));
  return sample_length(rng, p.l_mean_per_gen.at(static_cast<std::size_t>(generation)),
                       p.length_sigma_factor);
}

inline double sample_twist(const GenerationParams& p, int id) {
  RandomStream rng(stream_key(p.seed, static_cast<std::uint64_t>(id), detail::kTwistStream));
  return rng.uniform(0.0, 360.0);
}

inline double sample_diameter_ratio(const GenerationParams& p, int id) {
  RandomStream rng(stream_key(p.seed, static_cast<std::uint64_t>(id), detail::kDiameterStream));
  return rng.uniform(p.h_range.lo, p.h_range.hi);
}

inline double sample_branch_angle(const GenerationParams& p, int id, int attempt, double phi_min) {
  RandomStream rng(stream_key(p.seed, static_cast<std::uint64_t>(id), detail::kAngleStream,
                              static_cast<std::uint64_t>(attempt)));
  return rng.uniform(phi_min, p.phi_max);
}

inline bool adjacent(int i, int j) {
  if (i == j) return true;
  auto parent = [](int k) { return (k - 1) / 2; };
  if (i > 0 && parent(i) == j) return true;
  if (j > 0 && parent(j) == i) return true;
  return i > 0 && j > 0 && parent(i) == parent(j);
}

namespace detail {

// Checks a freshly placed daughter against its parent and all previously
// placed segments. Returns an empty string when acceptable.
inline std::string daughter_conflict(const AirwayTree& tree, const AirwaySegment& d,
                                     const AirwaySegment& parent,
                                     const std::vector<std::vector<Capsule>>& chains,
                                     const std::vector<bool>& placed, bool has_children) {
  const SigmoidTaper& taper = tree.params.taper;
  const TransitionLayout layout = transition_layout(d, taper);
  if (!layout.feasible) return "transition does not clear the separating plane";
  if (!inner_walls_separable(d, taper, layout.full_crossing)) return "inner wall re-crosses";

  const auto chain = capsule_chain(d, taper);
  // Straight run bending back past the parent end plane must stay clear of
  // the parent tube.
  if (d.bend_angle > 90.0) {
    const auto& pc = chains[static_cast<std::size_t>(parent.id)];
    const Capsule straight = chain.back();
    for (const auto& c : pc) {
      const double gap = segment_distance(straight.a, straight.b, c.a, c.b) - straight.radius -
                         c.radius;
      if (gap < 0.05 * d.radius()) return "daughter folds back onto parent";
    }
  }
  // The daughter's transition must end before its distal end plane if it
  // will carry its own bifurcation.
  if (has_children) {
    const Station end = station(d, taper, d.centerline_length());
    const double arc = d.arc_length();
    const int n = 32;
    for (int k = 0; k <= n; ++k) {
      const Station st = station(d, taper, arc * k / n);
      for (int q = 0; q < 16; ++q) {
        const Vec3 p = st.ring_point(2.0 * std::numbers::pi * q / 16);
        if (dot(p - end.center, end.tangent) > -0.05 * d.radius())
          return "transition reaches distal end plane";
      }
    }
  }
  for (std::size_t j = 0; j < placed.size(); ++j) {
    if (!placed[j] || adjacent(static_cast<int>(j), d.id)) continue;
    const double margin = 0.05 * std::min(d.radius(), tree.segments[j].radius());
    if (chain_clearance(chain, chains[j]) < margin)
      return "too close to segment " + std::to_string(j);
  }
  return {};
}

inline std::array<Capsule, 2> transition_capsules(const AirwaySegment& a, const AirwaySegment& b,
                                                  const GenerationParams& params, const Frame& bif,
                                                  double parent_radius) {
  const CarinaRidge ridge = carina_ridge(a, b, params.taper, bif, params.carina_rounding_factor);
  return {transition_capsule(a, a, b, params.taper, bif, ridge, parent_radius,
                             transition_layout(a, params.taper).transition_end),
          transition_capsule(b, a, b, params.taper, bif, ridge, parent_radius,
                             transition_layout(b, params.taper).transition_end)};
}

// The transition hull of each daughter must clear every placed segment that
// is not adjacent to it.
inline std::string transition_conflict(const AirwayTree& tree, const AirwaySegment& a,
                                       const AirwaySegment& b,
                                       const std::array<Capsule, 2>& transitions,
                                       const std::vector<std::vector<Capsule>>& chains,
                                       const std::vector<bool>& placed) {
  for (int side = 0; side < 2; ++side) {
    const AirwaySegment& d = side == 0 ? a : b;
    const std::vector<Capsule> hull{transitions[static_cast<std::size_t>(side)]};
    for (std::size_t j = 0; j < placed.size(); ++j) {
      if (!placed[j] || adjacent(static_cast<int>(j), d.id)) continue;
      const double margin = 0.05 * std::min(d.radius(), tree.segments[j].radius());
      if (chain_clearance(hull, chains[j]) < margin)
        return "transition too close to segment " + std::to_string(j);
    }
  }
  return {};
}

}  // namespace detail

namespace detail {

inline BifurcationGeometry make_bifurcation(const GenerationParams& params, int pid,
                                            const AirwaySegment& a, const AirwaySegment& b,
                                            double phi_min, const Frame& bif) {
  BifurcationGeometry g;
  g.parent_id = pid;
  g.daughter_a = a.id;
  g.daughter_b = b.id;
  g.phi_a = a.bend_angle;
  g.phi_b = b.bend_angle;
  g.phi_min = phi_min;
  g.r_star_a = curvature_radius(a.diameter, a.bend_angle);
  g.r_star_b = curvature_radius(b.diameter, b.bend_angle);
  const CarinaLayout c = carina_layout(a.bend_angle, b.bend_angle, a.diameter, b.diameter,
                                       params.carina_rounding_factor);
  g.carina_center = c.center;
  g.r_c = c.radius;
  g.tilt_a = c.tilt_a;
  g.tilt_b = c.tilt_b;
  g.taper = params.taper;
  g.sagittal_range_a = {0.0, c.sagittal_end};
  g.sagittal_range_b = {-c.sagittal_end, 0.0};
  g.frame = bif;
  return g;
}

inline constexpr int kMaxBacktracks = 64;
inline constexpr int kWindowsPerLevel = 3;

}  // namespace detail

/// Samples a bronchial tree. Deterministic for fixed params (including seed).
///
/// Bifurcations are placed in id order. Each one gets a window of
/// `max_attempts` angle draws (fresh lengths every 16 attempts); when the
/// window is exhausted the bifurcation that created the parent is re-drawn
/// with its next window and everything after it is discarded; after three
/// windows at one level the backtrack moves one generation further up.
inline AirwayTree sample_tree(const GenerationParams& params) {
  validate(params);
  AirwayTree tree;
  tree.params = params;
  const int n = segment_count(params.generations);
  tree.segments.resize(static_cast<std::size_t>(n));
  std::vector<std::vector<Capsule>> chains(static_cast<std::size_t>(n));
  std::vector<bool> placed(static_cast<std::size_t>(n), false);
  std::vector<int> window(static_cast<std::size_t>(n), 0);
  std::vector<BifurcationGeometry> bifs(static_cast<std::size_t>(n));

  AirwaySegment& root = tree.segments[0];
  root.id = 0;
  root.generation = 0;
  root.diameter = params.root_diameter;
  root.length = sample_segment_length(params, 0, 0);
  root.twist = sample_twist(params, 0);
  root.start_radius = root.radius();
  chains[0] = capsule_chain(root, params.taper);
  placed[0] = true;

  int backtracks = 0;
  for (int pid = 0; pid < n; ++pid) {
    const int ia = 2 * pid + 1;
    const int ib = 2 * pid + 2;
    if (ia >= n) break;
    const AirwaySegment& parent = tree.segments[static_cast<std::size_t>(pid)];
    const int gen = parent.generation + 1;
    const bool grandchildren = 2 * ia + 1 < n;

    AirwaySegment a;
    AirwaySegment b;
    for (auto* d : {&a, &b}) {
      d->id = d == &a ? ia : ib;
      d->parent_id = pid;
      d->generation = gen;
      d->diameter = sample_diameter_ratio(params, d->id) * parent.diameter;
      d->twist = sample_twist(params, d->id);
    }
    const Frame bif = bifurcation_frame(parent, params.taper);

    bool done = false;
    std::array<Capsule, 2> transitions;
    std::string last_reason = "no attempt";
    double phi_min = 0.0;
    const int first = window[static_cast<std::size_t>(pid)] * params.max_attempts;
    for (int attempt = first; attempt < first + params.max_attempts && !done; ++attempt) {
      const int draw = attempt / detail::kAnglesPerLengthDraw;
      a.length = sample_segment_length(params, ia, gen, draw);
      b.length = sample_segment_length(params, ib, gen, draw);
      phi_min = min_branching_angle(a.diameter, b.diameter, a.length, b.length);
      if (phi_min > params.phi_max ||
          !branching_clears(phi_min, a.diameter, b.diameter, a.length, b.length)) {
        last_reason = "daughters too short to clear each other";
        attempt = (draw + 1) * detail::kAnglesPerLengthDraw - 1;
        continue;
      }
      const double phi_a = sample_branch_angle(params, ia, attempt, phi_min);
      const double phi_b = sample_branch_angle(params, ib, attempt, phi_min);
      place_daughter(a, bif, true, phi_a, parent.radius());
      place_daughter(b, bif, false, phi_b, parent.radius());
      std::string why = detail::daughter_conflict(tree, a, parent, chains, placed, grandchildren);
      if (why.empty())
        why = detail::daughter_conflict(tree, b, parent, chains, placed, grandchildren);
      if (why.empty()) {
        transitions = detail::transition_capsules(a, b, params, bif, parent.radius());
        why = detail::transition_conflict(tree, a, b, transitions, chains, placed);
      }
      if (!why.empty()) {
        last_reason = why;
        continue;
      }
      done = true;
    }
    if (!done) {
      if (pid == 0 || ++backtracks > detail::kMaxBacktracks)
        throw GenerationError(pid, "no admissible branching after " +
                                       std::to_string(params.max_attempts) +
                                       " attempts (last: " + last_reason + ")");
      int pp = (pid - 1) / 2;
      while (pp > 0 && window[static_cast<std::size_t>(pp)] >= detail::kWindowsPerLevel)
        pp = (pp - 1) / 2;
      ++window[static_cast<std::size_t>(pp)];
      for (int j = 2 * pp + 1; j < n; ++j) {
        placed[static_cast<std::size_t>(j)] = false;
        if (j > pp) window[static_cast<std::size_t>(j)] = 0;
      }
      pid = pp - 1;  // loop increment re-enters at pp
      continue;
    }

    tree.segments[static_cast<std::size_t>(ia)] = a;
    tree.segments[static_cast<std::size_t>(ib)] = b;
    chains[static_cast<std::size_t>(ia)] = capsule_chain(a, params.taper);
    chains[static_cast<std::size_t>(ib)] = capsule_chain(b, params.taper);
    chains[static_cast<std::size_t>(ia)].push_back(transitions[0]);
    chains[static_cast<std::size_t>(ib)].push_back(transitions[1]);
    placed[static_cast<std::size_t>(ia)] = true;
    placed[static_cast<std::size_t>(ib)] = true;
    bifs[static_cast<std::size_t>(pid)] = detail::make_bifurcation(params, pid, a, b, phi_min, bif);
  }
  const int internal = segment_count(params.generations - 1);
  tree.bifurcations.assign(bifs.begin(), bifs.begin() + internal);
  return tree;
}

/// Recomputes frames and derived bifurcation fields from the scalar
/// parameters of every segment (diameter, length, twist, branching angle).
/// Useful for hand-built trees.
inline void relayout(AirwayTree& tree) {
  const auto& p = tree.params;
  const int n = static_cast<int>(tree.segments.size());
  for (int pid = 0; pid < n; ++pid) {
    const int ia = 2 * pid + 1;
    const int ib = 2 * pid + 2;
    if (ib >= n) break;
    const AirwaySegment& parent = tree.segments[static_cast<std::size_t>(pid)];
    AirwaySegment& a = tree.segments[static_cast<std::size_t>(ia)];
    AirwaySegment& b = tree.segments[static_cast<std::size_t>(ib)];
    const Frame bif = bifurcation_frame(parent, p.taper);
    place_daughter(a, bif, true, a.bend_angle, parent.radius());
    place_daughter(b, bif, false, b.bend_angle, parent.radius());
    for (auto& g : tree.bifurcations) {
      if (g.parent_id != pid) continue;
      g.phi_a = a.bend_angle;
      g.phi_b = b.bend_angle;
      g.phi_min = min_branching_angle(a.diameter, b.diameter, a.length, b.length);
      g.r_star_a = curvature_radius(a.diameter, a.bend_angle);
      g.r_star_b = curvature_radius(b.diameter, b.bend_angle);
      const CarinaLayout c = carina_layout(a.bend_angle, b.bend_angle, a.diameter, b.diameter,
                                           p.carina_rounding_factor);
      g.carina_center = c.center;
      g.r_c = c.radius;
      g.tilt_a = c.tilt_a;
      g.tilt_b = c.tilt_b;
      g.sagittal_range_a = {0.0, c.sagittal_end};
      g.sagittal_range_b = {-c.sagittal_end, 0.0};
      g.frame = bif;
    }
  }
}

/// Builds a straight single-segment tree (root only) of given size.
inline AirwayTree single_segment_tree(double diameter, double length) {
  AirwayTree t;
  t.params = default_params(1, 0);
  t.params.root_diameter = diameter;
  t.params.l_mean_per_gen = {length};
  AirwaySegment s;
  s.diameter = diameter;
  s.length = length;
  s.start_radius = 0.5 * diameter;
  t.segments.push_back(s);
  return t;
}

/// Sibling-subtree clearance: the minimum over all pairs of segments that
/// sit on opposite sides of a bifurcation (excluding the two daughters
/// themselves, whose junction is shared) of the axis polyline distance minus
/// (D1 + D2) / 2. The daughters themselves are checked on their distal
/// halves. Non-negative for valid trees.
inline double sibling_clearance(const AirwayTree& tree) {
  const int n = static_cast<int>(tree.segments.size());
  std::vector<std::vector<Capsule>> axis(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    axis[static_cast<std::size_t>(i)] = capsule_chain(tree.segments[static_cast<std::size_t>(i)],
                                                      tree.params.taper, 16);
    for (auto& c : axis[static_cast<std::size_t>(i)]) c.radius = 0.0;
  }
  auto descendants = [n](int root) {
    std::vector<int> out;
    std::vector<int> stack{root};
    while (!stack.empty()) {
      const int k = stack.back();
      stack.pop_back();
      if (k >= n) continue;
      out.push_back(k);
      stack.push_back(2 * k + 1);
      stack.push_back(2 * k + 2);
    }
    return out;
  };
  double worst = std::numeric_limits<double>::infinity();
  for (const auto& bif : tree.bifurcations) {
    const auto& a = tree.segment(bif.daughter_a);
    const auto& b = tree.segment(bif.daughter_b);
    const Station a_end = station(a, tree.params.taper, a.centerline_length());
    const Station b_end = station(b, tree.params.taper, b.centerline_length());
    const Station a_mid = station(a, tree.params.taper, a.arc_length() + 0.5 * a.length);
    const Station b_mid = station(b, tree.params.taper, b.arc_length() + 0.5 * b.length);
    worst = std::min(worst, segment_distance(a_mid.center, a_end.center, b_mid.center, b_end.center) -
                                0.5 * (a.diameter + b.diameter));
    for (int i : descendants(bif.daughter_a))
      for (int j : descendants(bif.daughter_b)) {
        if (i == bif.daughter_a && j == bif.daughter_b) continue;
        const double d = chain_clearance(axis[static_cast<std::size_t>(i)],
                                         axis[static_cast<std::size_t>(j)]);
        worst = std::min(worst, d - 0.5 * (tree.segment(i).diameter + tree.segment(j).diameter));
      }
  }
  return worst;
}

}  // namespace bronchosim
