#pragma once

// Camera paths that march down the centerline of a branch sequence.
//
// A route is a list of segment ids, each a daughter of the previous one.
// The navigable part of a route starts half a radius past the route start
// and ends two radii before the route end, so no pose sits on a capped
// opening or stares into it from point-blank range. Poses are spaced
// `step` apart along the centerline; the last one lands exactly on the end
// of the navigable part, giving ceil(length / step) + 1 poses.

#include <cmath>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "bronchosim/airway_model.hpp"
#include "bronchosim/bvh.hpp"
#include "bronchosim/error.hpp"
#include "bronchosim/geometry.hpp"
#include "bronchosim/mesh.hpp"
#include "bronchosim/rng.hpp"

namespace bronchosim {

/// Bounded random perturbation of each pose. Angles are maxima of uniform
/// draws in [-max, max]; the lateral offset is uniform on a disk whose
/// radius is `max_offset_fraction` times the local lumen radius.
struct JitterParams {
  double max_yaw_deg = 0.0;
  double max_pitch_deg = 0.0;
  double max_roll_deg = 0.0;
  double max_offset_fraction = 0.0;
  std::uint64_t seed = 0;
  int max_attempts = 32;
};

inline void validate(const JitterParams& j) {
  for (auto [name, v] : {std::pair{"max_yaw_deg", j.max_yaw_deg}, {"max_pitch_deg", j.max_pitch_deg}})
    if (!(v >= 0.0 && v <= 90.0))
      throw ParameterError(std::string("invalid parameter '") + name + "': must lie in [0, 90]");
  if (!(j.max_roll_deg >= 0.0 && j.max_roll_deg <= 180.0))
    throw ParameterError("invalid parameter 'max_roll_deg': must lie in [0, 180]");
  if (!(j.max_offset_fraction >= 0.0 && j.max_offset_fraction < 0.9))
    throw ParameterError("invalid parameter 'max_offset_fraction': must lie in [0, 0.9)");
  if (j.max_attempts < 1) throw ParameterError("invalid parameter 'max_attempts': must be >= 1");
}

struct CameraPath {
  std::vector<Frame> poses;
  std::vector<int> target_segment_ids;  // the route
  std::vector<int> pose_segment;        // segment whose centerline each pose follows
  std::vector<double> pose_arclength;   // position along the route centerline, mm
  std::vector<double> local_radius;     // lumen radius at each pose's station, mm
};

inline constexpr double kInteriorFraction = 0.1;
inline constexpr double kRouteStartInset = 0.5;  // in local radii
inline constexpr double kRouteEndInset = 2.0;

/// Validates a route against the tree topology.
inline void check_route(const AirwayTree& tree, const std::vector<int>& route) {
  if (route.empty()) throw RouteError("route is empty");
  const int n = static_cast<int>(tree.segments.size());
  for (std::size_t k = 0; k < route.size(); ++k) {
    const int id = route[k];
    if (id < 0 || id >= n)
      throw RouteError("route names nonexistent segment " + std::to_string(id));
    if (k > 0) {
      const auto& parent = tree.segment(id).parent_id;
      if (!parent || *parent != route[k - 1])
        throw RouteError("segment " + std::to_string(id) + " is not a daughter of segment " +
                         std::to_string(route[k - 1]));
    }
  }
}

/// Random root-to-leaf route.
inline std::vector<int> route_from_seed(const AirwayTree& tree, std::uint64_t seed) {
  RandomStream rng(stream_key(seed, 0, 5));
  std::vector<int> route{0};
  while (!tree.is_leaf(route.back())) route.push_back(2 * route.back() + 1 + (rng.uniform() < 0.5 ? 0 : 1));
  return route;
}

/// Total centerline length of a route.
inline double route_length(const AirwayTree& tree, const std::vector<int>& route) {
  double total = 0.0;
  for (int id : route) total += tree.segment(id).centerline_length();
  return total;
}

namespace detail {

struct RoutePoint {
  int segment = 0;
  Station station;
};

inline RoutePoint route_point(const AirwayTree& tree, const std::vector<int>& route, double s) {
  for (std::size_t k = 0; k < route.size(); ++k) {
    const AirwaySegment& seg = tree.segment(route[k]);
    const double len = seg.centerline_length();
    if (s <= len || k + 1 == route.size())
      return {seg.id, station(seg, tree.params.taper, std::clamp(s, 0.0, len))};
    s -= len;
  }
  return {};
}

inline Vec3 closest_on_triangle(Vec3 p, Vec3 a, Vec3 b, Vec3 c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = dot(ab, ap), d2 = dot(ac, ap);
  if (d1 <= 0.0 && d2 <= 0.0) return a;
  const Vec3 bp = p - b;
  const double d3 = dot(ab, bp), d4 = dot(ac, bp);
  if (d3 >= 0.0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + ab * (d1 / (d1 - d3));
  const Vec3 cp = p - c;
  const double d5 = dot(ab, cp), d6 = dot(ac, cp);
  if (d6 >= 0.0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + ac * (d2 / (d2 - d6));
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0)
    return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

}  // namespace detail

/// True when p lies inside the closed inward-facing surface and at least
/// `clearance` away from every triangle.
inline bool is_interior(const RayAccelerator& accel, Vec3 p, double clearance) {
  const TriangleMesh& m = accel.mesh();
  Aabb box;
  box.expand(p - Vec3{clearance, clearance, clearance});
  box.expand(p + Vec3{clearance, clearance, clearance});
  bool close = false;
  accel.query(box, [&](int t) {
    if (close) return;
    const auto& tri = m.triangles[static_cast<std::size_t>(t)];
    const Vec3 q = detail::closest_on_triangle(p, m.vertices[static_cast<std::size_t>(tri[0])],
                                               m.vertices[static_cast<std::size_t>(tri[1])],
                                               m.vertices[static_cast<std::size_t>(tri[2])]);
    if (distance(p, q) < clearance) close = true;
  });
  if (close) return false;
  // Parity-free inside test: the nearest hit along several directions must
  // be seen from the lumen side of an inward-facing triangle.
  for (Vec3 d : {Vec3{0.267, 0.534, 0.802}, Vec3{-0.577, 0.577, -0.577}, Vec3{0.802, -0.267, -0.534}}) {
    const Vec3 dir = normalize(d);
    const Hit h = accel.intersect({p, dir});
    if (!h.valid() || dot(triangle_normal(m, static_cast<std::size_t>(h.triangle)), dir) >= 0.0)
      return false;
  }
  return true;
}

/// Arclength interval [begin, end] of a route that poses may occupy.
inline std::pair<double, double> navigable_range(const AirwayTree& tree, const std::vector<int>& route) {
  check_route(tree, route);
  const double total = route_length(tree, route);
  const double begin = kRouteStartInset * detail::route_point(tree, route, 0.0).station.radius;
  const double end = total - kRouteEndInset * detail::route_point(tree, route, total).station.radius;
  if (!(end > begin)) throw RouteError("route is shorter than its end insets");
  return {begin, end};
}

/// Builds a camera path along `route` with poses every `step` mm.
inline CameraPath generate_flythrough(const AirwayTree& tree, const RayAccelerator& accel,
                                      const std::vector<int>& route, double step,
                                      const JitterParams& jitter) {
  validate(jitter);
  if (!(step > 0.0)) throw ParameterError("invalid parameter 'step': must be > 0");
  const auto [begin, end] = navigable_range(tree, route);
  const double navigable = end - begin;
  const int intervals = std::max(1, static_cast<int>(std::ceil(navigable / step - 1e-9)));

  CameraPath path;
  path.target_segment_ids = route;
  Vec3 down = detail::route_point(tree, route, begin).station.binormal;
  for (int k = 0; k <= intervals; ++k) {
    const double s = begin + std::min(k * step, navigable);
    const auto rp = detail::route_point(tree, route, s);
    const Station& st = rp.station;
    // Parallel transport of the image-down axis along the centerline.
    down = normalize(down - st.tangent * dot(down, st.tangent));
    const Frame base{st.center, cross(down, st.tangent), down, st.tangent};

    Frame pose = base;
    bool placed = false;
    const bool jittered = jitter.max_yaw_deg > 0.0 || jitter.max_pitch_deg > 0.0 ||
                          jitter.max_roll_deg > 0.0 || jitter.max_offset_fraction > 0.0;
    for (int attempt = 0; jittered && attempt < jitter.max_attempts && !placed; ++attempt) {
      RandomStream rng(stream_key(jitter.seed, static_cast<std::uint64_t>(k), 6,
                                  static_cast<std::uint64_t>(attempt)));
      const double yaw = deg_to_rad(rng.uniform(-jitter.max_yaw_deg, jitter.max_yaw_deg));
      const double pitch = deg_to_rad(rng.uniform(-jitter.max_pitch_deg, jitter.max_pitch_deg));
      const double roll = deg_to_rad(rng.uniform(-jitter.max_roll_deg, jitter.max_roll_deg));
      const double rad = jitter.max_offset_fraction * st.radius * std::sqrt(rng.uniform());
      const double ang = rng.uniform(0.0, 2.0 * std::numbers::pi);
      Frame f = base;
      f.origin = base.origin + base.x * (rad * std::cos(ang)) + base.y * (rad * std::sin(ang));
      auto turn = [&f](Vec3 axis, double a) {
        f.x = rotate(f.x, axis, a);
        f.y = rotate(f.y, axis, a);
        f.z = rotate(f.z, axis, a);
      };
      turn(base.y, yaw);
      turn(f.x, pitch);
      turn(f.z, roll);
      if (is_interior(accel, f.origin, kInteriorFraction * st.radius)) {
        pose = f;
        placed = true;
      }
    }
    if (!placed && !is_interior(accel, base.origin, kInteriorFraction * st.radius))
      throw RouteError("centerline point at " + std::to_string(s) + " mm on segment " +
                       std::to_string(rp.segment) + " is not inside the lumen");
    path.poses.push_back(pose);
    path.pose_segment.push_back(rp.segment);
    path.pose_arclength.push_back(s);
    path.local_radius.push_back(st.radius);
  }
  return path;
}

}  // namespace bronchosim
