#pragma once

#include <cmath>
#include <limits>
#include <string>

#include "bronchosim/bvh.hpp"
#include "bronchosim/error.hpp"
#include "bronchosim/geometry.hpp"
#include "bronchosim/image.hpp"
#include "bronchosim/mesh.hpp"
#include "bronchosim/parallel.hpp"

namespace bronchosim {

/// Pinhole camera. The pose follows the usual computer-vision convention:
/// x points to image right, y to image down, z along the optical axis.
struct Camera {
  int width = 256;
  int height = 256;
  double vertical_fov = 90.0;  // degrees
  Frame pose;
  double near_clip = 0.05;  // mm
};

inline void validate(const Camera& c) {
  if (!(c.vertical_fov >= 10.0 && c.vertical_fov <= 170.0))
    throw ParameterError("invalid parameter 'vertical_fov': must lie in [10, 170] degrees");
  if (c.width < 16 || c.height < 16)
    throw ParameterError("invalid parameter 'resolution': must be at least 16x16");
  if (!(c.near_clip > 0.0)) throw ParameterError("invalid parameter 'near_clip': must be > 0");
}

/// Headlight shading: albedo * max(0, n.v) / (1 + (d / d0)^2), clamped to
/// [0, 1], where d is the distance from the camera to the surface point.
/// Caps close openings where the real airway would continue, so they are
/// matte black by default.
struct ShadingParams {
  double falloff_distance = 6.0;  // d0, mm
  double wall_albedo = 1.0;
  double cap_albedo = 0.0;
  bool smooth_normals = true;
};

inline void validate(const ShadingParams& s) {
  if (!(s.falloff_distance > 0.0))
    throw ParameterError("invalid parameter 'falloff_distance': must be > 0");
  if (!(s.wall_albedo >= 0.0)) throw ParameterError("invalid parameter 'wall_albedo': must be >= 0");
  if (!(s.cap_albedo >= 0.0)) throw ParameterError("invalid parameter 'cap_albedo': must be >= 0");
}

struct FrameSample {
  ImageF image;      // grayscale intensity in [0, 1]
  ImageF depth;      // z-depth along the optical axis, mm
  ImageF disparity;  // 1 / depth
  Mask hit;          // 1 where the primary ray hit the surface
  Frame pose;
  int frame_index = 0;
};

/// Unit direction of the primary ray through the center of pixel (px, py).
inline Vec3 pixel_direction(const Camera& cam, int px, int py) {
  const double t = std::tan(0.5 * deg_to_rad(cam.vertical_fov));
  const double aspect = static_cast<double>(cam.width) / cam.height;
  const double sx = (2.0 * (px + 0.5) / cam.width - 1.0) * t * aspect;
  const double sy = (2.0 * (py + 0.5) / cam.height - 1.0) * t;
  return normalize(cam.pose.z + cam.pose.x * sx + cam.pose.y * sy);
}

namespace detail {

struct PixelResult {
  bool hit = false;
  double depth = 0.0;
  double intensity = 0.0;
};

inline PixelResult shade_pixel(const RayAccelerator& accel, const Camera& cam,
                               const ShadingParams& shading, int px, int py) {
  const Vec3 dir = pixel_direction(cam, px, py);
  const double axial = dot(dir, cam.pose.z);
  const Hit h = accel.intersect({cam.pose.origin, dir}, cam.near_clip / axial);
  PixelResult r;
  if (!h.valid()) return r;
  const TriangleMesh& m = accel.mesh();
  const auto& tri = m.triangles[static_cast<std::size_t>(h.triangle)];
  Vec3 n;
  if (shading.smooth_normals && m.normals.size() == m.vertices.size()) {
    n = m.normals[static_cast<std::size_t>(tri[0])] * (1.0 - h.u - h.v) +
        m.normals[static_cast<std::size_t>(tri[1])] * h.u +
        m.normals[static_cast<std::size_t>(tri[2])] * h.v;
    n = normalize(n);
  } else {
    n = triangle_normal(m, static_cast<std::size_t>(h.triangle));
  }
  const bool cap = !m.triangle_kind.empty() &&
                   m.triangle_kind[static_cast<std::size_t>(h.triangle)] == SurfaceKind::cap;
  const double albedo = cap ? shading.cap_albedo : shading.wall_albedo;
  const double lambert = std::max(0.0, -dot(n, dir));
  const double q = h.t / shading.falloff_distance;
  r.hit = true;
  r.depth = h.t * axial;
  r.intensity = std::clamp(albedo * lambert / (1.0 + q * q), 0.0, 1.0);
  return r;
}

}  // namespace detail

/// Renders one frame with one primary ray per pixel. Throws PlacementError
/// when any primary ray escapes the surface (camera outside the lumen).
inline FrameSample render_frame(const RayAccelerator& accel, const Camera& cam,
                                const ShadingParams& shading, int threads = 1,
                                int frame_index = 0) {
  validate(cam);
  validate(shading);
  FrameSample f;
  f.image = ImageF(cam.width, cam.height);
  f.depth = ImageF(cam.width, cam.height, std::numeric_limits<double>::quiet_NaN());
  f.disparity = ImageF(cam.width, cam.height, std::numeric_limits<double>::quiet_NaN());
  f.hit = Mask(cam.width, cam.height);
  f.pose = cam.pose;
  f.frame_index = frame_index;
  parallel_for(static_cast<std::size_t>(cam.height), threads, [&](std::size_t row) {
    const int py = static_cast<int>(row);
    for (int px = 0; px < cam.width; ++px) {
      const auto r = detail::shade_pixel(accel, cam, shading, px, py);
      if (!r.hit) continue;
      const std::size_t i = f.image.index(px, py);
      f.hit[i] = 1;
      f.depth[i] = r.depth;
      f.disparity[i] = 1.0 / r.depth;
      f.image[i] = r.intensity;
    }
  });
  const std::size_t escaped = f.hit.size() - count_true(f.hit);
  if (escaped > 0)
    throw PlacementError("render_frame " + std::to_string(frame_index) + ": " +
                         std::to_string(escaped) +
                         " primary rays escaped the surface; the camera is not inside the lumen");
  return f;
}

}  // namespace bronchosim
