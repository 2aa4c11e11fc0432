#pragma once

// Tessellation of an AirwayTree into a closed, inward-facing triangle mesh.
//
// Every ring has `ring_segments` (N, even) vertices; vertex j sits at angle
// psi_j = 2 pi j / N measured from the ring binormal toward its lateral axis.
// Straight runs are lofted ring to ring. A bifurcation is stitched as a pair
// of lofts that share a ridge polyline on the plane separating the daughters:
//
//   loop(a) = parent ring half on a's side (N/2 + 1 vertices, both saddle
//             points included) + ridge interior (N/2 - 1 vertices)
//   loop(b) = the other parent half + the same ridge, reversed
//
// and each loop is lofted through `bifurcation_rings` rows to the daughter's
// first full ring. Inner-wall columns start where that wall angle crosses the
// separating plane, so daughter a lies in x >= 0 and b in x <= 0 of the
// bifurcation frame. Root and leaf openings are closed with fans.

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <vector>

#include "bronchosim/airway_model.hpp"
#include "bronchosim/error.hpp"
#include "bronchosim/geometry.hpp"

namespace bronchosim {

enum class SurfaceKind : std::uint8_t { wall = 0, cap = 1 };

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;
  std::vector<Vec3> normals;  // per vertex, unit, into the lumen
  std::vector<SurfaceKind> triangle_kind;
  std::vector<int> triangle_segment;
  // Provenance for verification: owning segment and centerline station of
  // vertices that lie on an analytic ring (NaN otherwise).
  std::vector<int> vertex_segment;
  std::vector<double> vertex_station;

  std::size_t vertex_count() const { return vertices.size(); }
  std::size_t triangle_count() const { return triangles.size(); }
};

struct TessellationParams {
  int ring_segments = 32;
  double rings_per_unit_length = 1.0;
  int bifurcation_rings = 8;
};

inline void validate(const TessellationParams& p) {
  if (p.ring_segments < 8) throw ParameterError("invalid parameter 'ring_segments': must be >= 8");
  if (p.ring_segments % 2 != 0)
    throw ParameterError("invalid parameter 'ring_segments': must be even");
  if (!(p.rings_per_unit_length > 0.0))
    throw ParameterError("invalid parameter 'rings_per_unit_length': must be > 0");
  if (p.bifurcation_rings < 4)
    throw ParameterError("invalid parameter 'bifurcation_rings': must be >= 4");
}

inline Vec3 triangle_normal(const TriangleMesh& m, std::size_t t) {
  const auto& tri = m.triangles[t];
  const Vec3 a = m.vertices[static_cast<std::size_t>(tri[0])];
  const Vec3 b = m.vertices[static_cast<std::size_t>(tri[1])];
  const Vec3 c = m.vertices[static_cast<std::size_t>(tri[2])];
  return cross(b - a, c - a);
}

inline void compute_vertex_normals(TriangleMesh& m) {
  m.normals.assign(m.vertices.size(), Vec3{});
  for (std::size_t t = 0; t < m.triangles.size(); ++t) {
    const Vec3 n = triangle_normal(m, t);  // area weighted
    for (int v : m.triangles[t]) m.normals[static_cast<std::size_t>(v)] += n;
  }
  for (auto& n : m.normals) n = normalize(n);
}

namespace detail {

class MeshBuilder {
 public:
  explicit MeshBuilder(TriangleMesh& mesh) : m_(mesh) {}

  int add_vertex(Vec3 p, int segment, double station) {
    m_.vertices.push_back(p);
    m_.vertex_segment.push_back(segment);
    m_.vertex_station.push_back(station);
    return static_cast<int>(m_.vertices.size()) - 1;
  }

  void add_triangle(int a, int b, int c, int segment, SurfaceKind kind = SurfaceKind::wall) {
    m_.triangles.push_back({a, b, c});
    m_.triangle_kind.push_back(kind);
    m_.triangle_segment.push_back(segment);
  }

  // Loft between two closed rings of equal size, normals toward the axis for
  // rings ordered clockwise about the direction of travel.
  void loft(const std::vector<int>& r0, const std::vector<int>& r1, int segment) {
    const std::size_t n = r0.size();
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t k = (j + 1) % n;
      // Split each quad along its shorter diagonal.
      const double d_kj = length(vertex(r0[k]) - vertex(r1[j]));
      const double d_jk = length(vertex(r0[j]) - vertex(r1[k]));
      if (d_jk < d_kj) {
        add_triangle(r0[j], r0[k], r1[k], segment);
        add_triangle(r0[j], r1[k], r1[j], segment);
      } else {
        add_triangle(r0[j], r0[k], r1[j], segment);
        add_triangle(r0[k], r1[k], r1[j], segment);
      }
    }
  }

  Vec3 vertex(int i) const { return m_.vertices[static_cast<std::size_t>(i)]; }

  void fan(int center, const std::vector<int>& ring, bool facing_forward, int segment) {
    const std::size_t n = ring.size();
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t k = (j + 1) % n;
      if (facing_forward)
        add_triangle(center, ring[k], ring[j], segment, SurfaceKind::cap);
      else
        add_triangle(center, ring[j], ring[k], segment, SurfaceKind::cap);
    }
  }

 private:
  TriangleMesh& m_;
};

inline double ring_angle(int j, int n) { return 2.0 * std::numbers::pi * j / n; }

// Rotation of the next branching plane split into a whole ring-index shift
// and a residual angle that is distributed along the straight run.
struct TwistSplit {
  int shift = 0;
  double residual = 0.0;  // radians
};

inline TwistSplit split_twist(double twist_deg, int n) {
  const double step = 2.0 * std::numbers::pi / n;
  const double t = deg_to_rad(twist_deg);
  TwistSplit s;
  s.shift = static_cast<int>(std::lround(t / step));
  s.residual = t - s.shift * step;
  s.shift = ((s.shift % n) + n) % n;
  return s;
}

inline Vec3 ring_vertex(const AirwaySegment& s, const SigmoidTaper& taper, double u, double psi,
                        double roll = 0.0) {
  return station(s, taper, u).ring_point(psi - roll);
}

}  // namespace detail

/// Tessellates the tree. Throws TessellationError naming the segment when a
/// bifurcation cannot be stitched without crossing the separating plane.
inline TriangleMesh tessellate(const AirwayTree& tree, const TessellationParams& params) {
  validate(params);
  if (tree.segments.empty()) throw InputError("tessellate: empty tree");
  const int n = params.ring_segments;
  const int half = n / 2;
  const int rows = params.bifurcation_rings;
  const SigmoidTaper& taper = tree.params.taper;
  const int count = static_cast<int>(tree.segments.size());

  TriangleMesh mesh;
  detail::MeshBuilder mb(mesh);

  // First full ring (psi order) and its station for each segment.
  std::vector<std::vector<int>> start_ring(static_cast<std::size_t>(count));
  std::vector<double> start_station(static_cast<std::size_t>(count), 0.0);

  // Root start ring and cap.
  {
    const AirwaySegment& root = tree.segments[0];
    auto& ring = start_ring[0];
    for (int j = 0; j < n; ++j)
      ring.push_back(mb.add_vertex(detail::ring_vertex(root, taper, 0.0, detail::ring_angle(j, n)),
                                   0, 0.0));
    const int c = mb.add_vertex(station(root, taper, 0.0).center, 0,
                                std::numeric_limits<double>::quiet_NaN());
    mb.fan(c, ring, true, 0);
  }

  for (int id = 0; id < count; ++id) {
    const AirwaySegment& seg = tree.segments[static_cast<std::size_t>(id)];
    const bool leaf = tree.is_leaf(id);
    const double u0 = start_station[static_cast<std::size_t>(id)];
    const double u1 = seg.centerline_length();
    if (!(u1 > u0)) throw TessellationError(id, "no straight run after the transition");

    const detail::TwistSplit tw =
        leaf ? detail::TwistSplit{} : detail::split_twist(seg.twist, n);
    const int intervals =
        std::max(1, static_cast<int>(std::ceil((u1 - u0) * params.rings_per_unit_length - 1e-9)));
    std::vector<int> prev = start_ring[static_cast<std::size_t>(id)];
    for (int r = 1; r <= intervals; ++r) {
      const double f = static_cast<double>(r) / intervals;
      const double u = u0 + (u1 - u0) * f;
      const double roll = tw.residual * f;
      std::vector<int> ring;
      ring.reserve(static_cast<std::size_t>(n));
      for (int j = 0; j < n; ++j)
        ring.push_back(
            mb.add_vertex(detail::ring_vertex(seg, taper, u, detail::ring_angle(j, n), roll), id, u));
      mb.loft(prev, ring, id);
      prev = std::move(ring);
    }

    if (leaf) {
      const int c = mb.add_vertex(station(seg, taper, u1).center, id,
                                  std::numeric_limits<double>::quiet_NaN());
      mb.fan(c, prev, false, id);
      continue;
    }

    // Parent ring in bifurcation-frame index order.
    std::vector<int> parent_ring(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j)
      parent_ring[static_cast<std::size_t>(j)] = prev[static_cast<std::size_t>(((j - tw.shift) % n + n) % n)];

    const int ia = 2 * id + 1;
    const int ib = 2 * id + 2;
    const AirwaySegment& a = tree.segments[static_cast<std::size_t>(ia)];
    const AirwaySegment& b = tree.segments[static_cast<std::size_t>(ib)];
    const Frame bif = bifurcation_frame(seg, taper);
    const TransitionLayout la = transition_layout(a, taper);
    const TransitionLayout lb = transition_layout(b, taper);
    if (!la.feasible) throw TessellationError(ia, "transition does not clear the separating plane");
    if (!lb.feasible) throw TessellationError(ib, "transition does not clear the separating plane");

    // Inner-wall crossings; ridge vertex k pairs a's column half + k with
    // b's column n - k.
    std::vector<double> cross_a(static_cast<std::size_t>(n), 0.0);
    std::vector<double> cross_b(static_cast<std::size_t>(n), 0.0);
    for (int j = half + 1; j < n; ++j) {
      const double psi = detail::ring_angle(j, n);
      cross_a[static_cast<std::size_t>(j)] = crossing_station(a, taper, psi);
      cross_b[static_cast<std::size_t>(j)] = crossing_station(b, taper, psi);
      if (cross_a[static_cast<std::size_t>(j)] < 0.0 ||
          cross_a[static_cast<std::size_t>(j)] >= la.transition_end)
        throw TessellationError(ia, "inner wall does not cross the separating plane");
      if (cross_b[static_cast<std::size_t>(j)] < 0.0 ||
          cross_b[static_cast<std::size_t>(j)] >= lb.transition_end)
        throw TessellationError(ib, "inner wall does not cross the separating plane");
    }

    // Carinal rounding lifts the ridge toward the rounded crest and moves
    // the inner-wall rows to the rounding tangent points.
    const CarinaRidge carina =
        carina_ridge(a, b, taper, bif, tree.params.carina_rounding_factor);
    std::vector<int> ridge(static_cast<std::size_t>(half), -1);  // ridge[k], k = 1..half-1
    for (int k = 1; k < half; ++k)
      ridge[static_cast<std::size_t>(k)] =
          mb.add_vertex(ridge_point(a, b, taper, bif, carina, static_cast<double>(k) / half), id,
                        std::numeric_limits<double>::quiet_NaN());

    for (int side = 0; side < 2; ++side) {
      const bool is_a = side == 0;
      const AirwaySegment& d = is_a ? a : b;
      const TransitionLayout& lay = is_a ? la : lb;
      const auto& cross = is_a ? cross_a : cross_b;
      const double shift = is_a ? carina.shift_a : carina.shift_b;
      const double u_end = lay.transition_end;

      std::vector<int> row0(static_cast<std::size_t>(n));
      for (int j = 0; j <= half; ++j)
        row0[static_cast<std::size_t>(j)] =
            parent_ring[static_cast<std::size_t>(is_a ? j : (j + half) % n)];
      for (int j = half + 1; j < n; ++j) {
        const int k = is_a ? j - half : n - j;
        row0[static_cast<std::size_t>(j)] = ridge[static_cast<std::size_t>(k)];
      }

      std::vector<double> first(static_cast<std::size_t>(n), 0.0);
      for (int j = half + 1; j < n; ++j) {
        const double ridge_s = static_cast<double>(is_a ? j - half : n - j) / half;
        first[static_cast<std::size_t>(j)] =
            inner_wall_start(cross[static_cast<std::size_t>(j)], u_end, shift, ridge_s);
      }

      std::vector<int> prev_row = row0;
      for (int i = 1; i <= rows; ++i) {
        const double f = static_cast<double>(i) / rows;
        std::vector<int> row(static_cast<std::size_t>(n));
        for (int j = 0; j < n; ++j) {
          const double s0 = first[static_cast<std::size_t>(j)];
          const double u = i == rows ? u_end : s0 + (u_end - s0) * f;
          const double psi = detail::ring_angle(j, n);
          const Vec3 p = detail::ring_vertex(d, taper, u, psi);
          if (dot(p - bif.origin, d.frame.x) <= 0.0)
            throw TessellationError(d.id, "transition row crosses the separating plane");
          row[static_cast<std::size_t>(j)] = mb.add_vertex(p, d.id, u);
        }
        mb.loft(prev_row, row, d.id);
        prev_row = std::move(row);
      }
      start_ring[static_cast<std::size_t>(d.id)] = prev_row;
      start_station[static_cast<std::size_t>(d.id)] = u_end;
    }
  }

  compute_vertex_normals(mesh);
  return mesh;
}

/// Max distance between ring chords and the analytic circle over all
/// cylindrical rings (the sagitta r (1 - cos(pi / N)) for exact rings).
inline double max_radial_chord_error(const AirwayTree& tree, const TriangleMesh& mesh) {
  double worst = 0.0;
  for (std::size_t v = 0; v < mesh.vertices.size(); ++v) {
    const double u = mesh.vertex_station[v];
    if (std::isnan(u)) continue;
    const AirwaySegment& s = tree.segment(mesh.vertex_segment[v]);
    if (u < s.arc_length()) continue;
    const Station st = station(s, tree.params.taper, u);
    // Chord midpoint to the next vertex on the same ring.
    const std::size_t next = (v + 1 < mesh.vertices.size() &&
                              mesh.vertex_segment[v + 1] == mesh.vertex_segment[v] &&
                              mesh.vertex_station[v + 1] == u)
                                 ? v + 1
                                 : v;
    if (next == v) continue;
    const Vec3 mid = 0.5 * (mesh.vertices[v] + mesh.vertices[next]);
    const Vec3 rel = mid - st.center;
    const double radial = length(rel - st.tangent * dot(rel, st.tangent));
    worst = std::max(worst, st.radius - radial);
  }
  return worst;
}

}  // namespace bronchosim
