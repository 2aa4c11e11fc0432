#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "bronchosim/bvh.hpp"
#include "bronchosim/geometry.hpp"
#include "bronchosim/mesh.hpp"
#include "bronchosim/predicates.hpp"

namespace bronchosim {

using Edge = std::pair<int, int>;

struct ValidationReport {
  std::vector<Edge> boundary_edges;     // used by one triangle
  std::vector<Edge> nonmanifold_edges;  // used by more than two
  std::vector<Edge> winding_conflicts;  // directed edge used twice
  std::size_t degenerate_triangles = 0;
  std::vector<std::pair<int, int>> self_intersections;
  long long euler_characteristic = 0;
  double signed_volume = 0.0;

  bool watertight() const { return boundary_edges.empty() && nonmanifold_edges.empty(); }
  bool consistent_winding() const { return winding_conflicts.empty(); }
  // Triangles wind so that normals face the enclosed lumen.
  bool inward_facing() const { return signed_volume < 0.0; }
  bool passes() const {
    return watertight() && consistent_winding() && inward_facing() && degenerate_triangles == 0 &&
           self_intersections.empty();
  }
  std::string summary() const {
    return "boundary_edges=" + std::to_string(boundary_edges.size()) +
           " nonmanifold_edges=" + std::to_string(nonmanifold_edges.size()) +
           " winding_conflicts=" + std::to_string(winding_conflicts.size()) +
           " degenerate=" + std::to_string(degenerate_triangles) +
           " self_intersections=" + std::to_string(self_intersections.size()) +
           " euler=" + std::to_string(euler_characteristic) +
           " inward=" + (inward_facing() ? "yes" : "no");
  }
};

inline constexpr double kDegenerateArea = 1e-12;

namespace detail {

inline std::uint64_t edge_key(int a, int b) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
         static_cast<std::uint32_t>(b);
}

inline int orient_sign(Vec3 a, Vec3 b, Vec3 c, Vec3 d) { return exact::orient3d(a, b, c, d); }
inline int orient2_sign(Vec2 a, Vec2 b, Vec2 c) { return exact::orient2d(a, b, c); }

// Proper crossing of segment pq through the interior of triangle abc.
inline bool segment_crosses_triangle(Vec3 p, Vec3 q, Vec3 a, Vec3 b, Vec3 c) {
  const int fp = exact::orient3d_filtered(a, b, c, p);
  const int fq = exact::orient3d_filtered(a, b, c, q);
  if (fp != exact::kUncertain && fp == fq) return false;
  const int sp = orient_sign(a, b, c, p);
  const int sq = orient_sign(a, b, c, q);
  if (sp == 0 || sq == 0 || sp == sq) return false;
  const int s1 = orient_sign(p, q, a, b);
  const int s2 = orient_sign(p, q, b, c);
  const int s3 = orient_sign(p, q, c, a);
  return s1 != 0 && s1 == s2 && s2 == s3;
}

inline bool strictly_inside(Vec2 p, const std::array<Vec2, 3>& t) {
  const int s1 = orient2_sign(t[0], t[1], p);
  const int s2 = orient2_sign(t[1], t[2], p);
  const int s3 = orient2_sign(t[2], t[0], p);
  return s1 != 0 && s1 == s2 && s2 == s3;
}

inline bool segments_cross_2d(Vec2 p, Vec2 q, Vec2 a, Vec2 b) {
  const int s1 = orient2_sign(p, q, a);
  const int s2 = orient2_sign(p, q, b);
  const int s3 = orient2_sign(a, b, p);
  const int s4 = orient2_sign(a, b, q);
  return s1 * s2 < 0 && s3 * s4 < 0;
}

// Interior overlap of two coplanar triangles, projected along the dominant
// axis of the plane normal. Vertices shared by both are ignored.
inline bool coplanar_overlap(const TriangleMesh& m, const std::array<int, 3>& A,
                             const std::array<int, 3>& B, Vec3 normal) {
  int drop = 0;
  if (std::abs(normal.y) > std::abs(normal[drop])) drop = 1;
  if (std::abs(normal.z) > std::abs(normal[drop])) drop = 2;
  const int i0 = (drop + 1) % 3;
  const int i1 = (drop + 2) % 3;
  auto P = [&](int v) {
    const Vec3 p = m.vertices[static_cast<std::size_t>(v)];
    return Vec2{p[i0], p[i1]};
  };
  const std::array<Vec2, 3> ta{P(A[0]), P(A[1]), P(A[2])};
  const std::array<Vec2, 3> tb{P(B[0]), P(B[1]), P(B[2])};
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (segments_cross_2d(ta[i], ta[(i + 1) % 3], tb[j], tb[(j + 1) % 3])) return true;
  for (int i = 0; i < 3; ++i) {
    if (std::find(B.begin(), B.end(), A[i]) == B.end() && strictly_inside(ta[i], tb)) return true;
    if (std::find(A.begin(), A.end(), B[i]) == A.end() && strictly_inside(tb[i], ta)) return true;
  }
  return false;
}

inline bool triangles_intersect(const TriangleMesh& m, int ti, int tj) {
  const auto& A = m.triangles[static_cast<std::size_t>(ti)];
  const auto& B = m.triangles[static_cast<std::size_t>(tj)];
  int shared = 0;
  for (int x : A)
    for (int y : B) shared += x == y;
  if (shared == 3) return true;
  auto V = [&](int idx) { return m.vertices[static_cast<std::size_t>(idx)]; };
  bool coplanar = true;
  for (int v : B)
    if (exact::orient3d_filtered(V(A[0]), V(A[1]), V(A[2]), V(v)) != exact::kUncertain)
      coplanar = false;
  if (coplanar)
    for (int v : B)
    if (orient_sign(V(A[0]), V(A[1]), V(A[2]), V(v)) != 0) coplanar = false;
  if (coplanar) return coplanar_overlap(m, A, B, cross(V(A[1]) - V(A[0]), V(A[2]) - V(A[0])));
  if (shared == 2) return false;  // non-coplanar neighbors across an edge
  auto edge_hits = [&](const std::array<int, 3>& E, const std::array<int, 3>& T) {
    for (int k = 0; k < 3; ++k) {
      const int p = E[static_cast<std::size_t>(k)];
      const int q = E[static_cast<std::size_t>((k + 1) % 3)];
      if (std::find(T.begin(), T.end(), p) != T.end() ||
          std::find(T.begin(), T.end(), q) != T.end())
        continue;  // edges through a shared vertex meet the other plane only there
      if (segment_crosses_triangle(V(p), V(q), V(T[0]), V(T[1]), V(T[2]))) return true;
    }
    return false;
  };
  return edge_hits(A, B) || edge_hits(B, A);
}

}  // namespace detail

inline ValidationReport validate_mesh(const TriangleMesh& mesh) {
  ValidationReport r;
  std::unordered_map<std::uint64_t, int> directed;
  directed.reserve(mesh.triangles.size() * 3);
  for (const auto& t : mesh.triangles)
    for (int k = 0; k < 3; ++k) ++directed[detail::edge_key(t[k], t[(k + 1) % 3])];

  std::size_t undirected = 0;
  for (const auto& [key, cnt] : directed) {
    const int a = static_cast<int>(key >> 32);
    const int b = static_cast<int>(key & 0xffffffffu);
    if (cnt > 1) r.winding_conflicts.emplace_back(a, b);
    auto it = directed.find(detail::edge_key(b, a));
    const int back = it == directed.end() ? 0 : it->second;
    if (a < b || back == 0) {
      ++undirected;
      const int uses = cnt + back;
      const Edge e{std::min(a, b), std::max(a, b)};
      if (uses == 1) r.boundary_edges.push_back(e);
      else if (uses > 2) r.nonmanifold_edges.push_back(e);
    }
  }
  std::sort(r.boundary_edges.begin(), r.boundary_edges.end());
  std::sort(r.nonmanifold_edges.begin(), r.nonmanifold_edges.end());
  std::sort(r.winding_conflicts.begin(), r.winding_conflicts.end());

  r.euler_characteristic = static_cast<long long>(mesh.vertices.size()) -
                           static_cast<long long>(undirected) +
                           static_cast<long long>(mesh.triangles.size());

  for (std::size_t t = 0; t < mesh.triangles.size(); ++t) {
    const Vec3 n = triangle_normal(mesh, t);
    if (0.5 * length(n) <= kDegenerateArea) ++r.degenerate_triangles;
    r.signed_volume += dot(mesh.vertices[static_cast<std::size_t>(mesh.triangles[t][0])], n) / 6.0;
  }

  if (!mesh.triangles.empty()) {
    const RayAccelerator bvh(mesh);
    for (int i = 0; i < static_cast<int>(mesh.triangles.size()); ++i) {
      bvh.query(bvh.triangle_box(i), [&](int j) {
        if (j > i && detail::triangles_intersect(mesh, i, j)) r.self_intersections.emplace_back(i, j);
      });
    }
    std::sort(r.self_intersections.begin(), r.self_intersections.end());
  }
  return r;
}

}  // namespace bronchosim
