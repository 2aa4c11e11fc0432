#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "bronchosim/error.hpp"
#include "bronchosim/geometry.hpp"
#include "bronchosim/mesh.hpp"

namespace bronchosim {

struct Ray {
  Vec3 origin;
  Vec3 direction;
};

struct Hit {
  int triangle = -1;
  double t = std::numeric_limits<double>::infinity();
  double u = 0.0;  // barycentric weight of vertex 1
  double v = 0.0;  // barycentric weight of vertex 2
  bool valid() const { return triangle >= 0; }
};

struct Aabb {
  Vec3 lo{std::numeric_limits<double>::infinity(), std::numeric_limits<double>::infinity(),
          std::numeric_limits<double>::infinity()};
  Vec3 hi{-std::numeric_limits<double>::infinity(), -std::numeric_limits<double>::infinity(),
          -std::numeric_limits<double>::infinity()};

  void expand(Vec3 p) {
    lo = min(lo, p);
    hi = max(hi, p);
  }
  void expand(const Aabb& b) {
    lo = min(lo, b.lo);
    hi = max(hi, b.hi);
  }
  Vec3 center() const { return 0.5 * (lo + hi); }
  bool overlaps(const Aabb& b) const {
    return lo.x <= b.hi.x && b.lo.x <= hi.x && lo.y <= b.hi.y && b.lo.y <= hi.y &&
           lo.z <= b.hi.z && b.lo.z <= hi.z;
  }
};

/// Watertight ray/triangle intersection (Woop, Benthin and Wald), double
/// precision. Returns the hit distance along `ray.direction` in units of its
/// length when it lies in [t_min, t_max].
inline std::optional<Hit> intersect_triangle(const Ray& ray, Vec3 p0, Vec3 p1, Vec3 p2,
                                             double t_min, double t_max) {
  const Vec3& d = ray.direction;
  int kz = 0;
  if (std::abs(d.y) > std::abs(d[kz])) kz = 1;
  if (std::abs(d.z) > std::abs(d[kz])) kz = 2;
  int kx = (kz + 1) % 3;
  int ky = (kx + 1) % 3;
  if (d[kz] < 0.0) std::swap(kx, ky);
  const double sx = d[kx] / d[kz];
  const double sy = d[ky] / d[kz];
  const double sz = 1.0 / d[kz];

  const Vec3 a = p0 - ray.origin;
  const Vec3 b = p1 - ray.origin;
  const Vec3 c = p2 - ray.origin;
  const double ax = a[kx] - sx * a[kz];
  const double ay = a[ky] - sy * a[kz];
  const double bx = b[kx] - sx * b[kz];
  const double by = b[ky] - sy * b[kz];
  const double cx = c[kx] - sx * c[kz];
  const double cy = c[ky] - sy * c[kz];

  const double u = cx * by - cy * bx;
  const double v = ax * cy - ay * cx;
  const double w = bx * ay - by * ax;
  if ((u < 0.0 || v < 0.0 || w < 0.0) && (u > 0.0 || v > 0.0 || w > 0.0)) return std::nullopt;
  const double det = u + v + w;
  if (det == 0.0) return std::nullopt;
  const double az = sz * a[kz];
  const double bz = sz * b[kz];
  const double cz = sz * c[kz];
  const double t = (u * az + v * bz + w * cz) / det;
  if (!(t >= t_min && t <= t_max)) return std::nullopt;
  Hit h;
  h.t = t;
  h.u = v / det;
  h.v = w / det;
  return h;
}

namespace detail {

inline bool closer(const Hit& a, const Hit& b) {
  return a.t < b.t || (a.t == b.t && a.triangle < b.triangle);
}

// Slab test; returns the entry distance or +inf when the box is missed.
inline double box_entry(const Aabb& box, Vec3 origin, Vec3 inv_dir, double t_min, double t_max) {
  double t0 = t_min;
  double t1 = t_max;
  for (int k = 0; k < 3; ++k) {
    double near = (box.lo[k] - origin[k]) * inv_dir[k];
    double far = (box.hi[k] - origin[k]) * inv_dir[k];
    if (std::isnan(near) || std::isnan(far)) {
      // Ray parallel to the slab and exactly on its boundary.
      if (origin[k] < box.lo[k] || origin[k] > box.hi[k])
        return std::numeric_limits<double>::infinity();
      continue;
    }
    if (near > far) std::swap(near, far);
    // Conservative padding keeps grazing rays from slipping between boxes.
    far *= 1.0 + 4.0 * std::numeric_limits<double>::epsilon();
    t0 = std::max(t0, near);
    t1 = std::min(t1, far);
    if (t0 > t1) return std::numeric_limits<double>::infinity();
  }
  return t0;
}

}  // namespace detail

/// Closest hit by testing every triangle (reference implementation).
inline Hit brute_force_intersect(const TriangleMesh& mesh, const Ray& ray, double t_min = 0.0,
                                 double t_max = std::numeric_limits<double>::infinity()) {
  Hit best;
  for (std::size_t i = 0; i < mesh.triangles.size(); ++i) {
    const auto& tri = mesh.triangles[i];
    auto h = intersect_triangle(ray, mesh.vertices[static_cast<std::size_t>(tri[0])],
                                mesh.vertices[static_cast<std::size_t>(tri[1])],
                                mesh.vertices[static_cast<std::size_t>(tri[2])], t_min, t_max);
    if (!h) continue;
    h->triangle = static_cast<int>(i);
    if (detail::closer(*h, best)) best = *h;
  }
  return best;
}

/// Immutable bounding-volume hierarchy over a triangle mesh.
class RayAccelerator {
 public:
  struct Node {
    Aabb box;
    int left = -1;   // child index, or -1 for a leaf
    int right = -1;
    int first = 0;   // leaf range into the triangle order
    int count = 0;
    bool leaf() const { return left < 0; }
  };

  static constexpr int kLeafSize = 4;

  explicit RayAccelerator(const TriangleMesh& mesh) : mesh_(&mesh) {
    if (mesh.triangles.empty()) throw AcceleratorError("build_accelerator: empty mesh");
    const std::size_t n = mesh.triangles.size();
    boxes_.resize(n);
    centroids_.resize(n);
    order_.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      Aabb b;
      for (int v : mesh.triangles[i]) b.expand(mesh.vertices[static_cast<std::size_t>(v)]);
      boxes_[i] = b;
      centroids_[i] = b.center();
      order_[i] = static_cast<int>(i);
    }
    nodes_.reserve(2 * n / kLeafSize + 2);
    build(0, static_cast<int>(n));
  }

  const TriangleMesh& mesh() const { return *mesh_; }
  const std::vector<Node>& nodes() const { return nodes_; }
  std::size_t leaf_count() const {
    return static_cast<std::size_t>(
        std::count_if(nodes_.begin(), nodes_.end(), [](const Node& nd) { return nd.leaf(); }));
  }

  Hit intersect(const Ray& ray, double t_min = 0.0,
                double t_max = std::numeric_limits<double>::infinity()) const {
    const Vec3 inv{1.0 / ray.direction.x, 1.0 / ray.direction.y, 1.0 / ray.direction.z};
    Hit best;
    std::array<std::pair<int, double>, 128> stack;
    int sp = 0;
    const double root_entry = detail::box_entry(nodes_[0].box, ray.origin, inv, t_min, t_max);
    if (std::isinf(root_entry)) return best;
    stack[sp++] = {0, root_entry};
    while (sp > 0) {
      const auto [ni, entry] = stack[--sp];
      if (entry > best.t) continue;
      const Node& nd = nodes_[static_cast<std::size_t>(ni)];
      if (nd.leaf()) {
        for (int k = nd.first; k < nd.first + nd.count; ++k) {
          const int ti = order_[static_cast<std::size_t>(k)];
          const auto& tri = mesh_->triangles[static_cast<std::size_t>(ti)];
          auto h = intersect_triangle(ray, mesh_->vertices[static_cast<std::size_t>(tri[0])],
                                      mesh_->vertices[static_cast<std::size_t>(tri[1])],
                                      mesh_->vertices[static_cast<std::size_t>(tri[2])], t_min,
                                      std::min(t_max, best.t));
          if (!h) continue;
          h->triangle = ti;
          if (detail::closer(*h, best)) best = *h;
        }
        continue;
      }
      const double tl = detail::box_entry(nodes_[static_cast<std::size_t>(nd.left)].box,
                                          ray.origin, inv, t_min, std::min(t_max, best.t));
      const double tr = detail::box_entry(nodes_[static_cast<std::size_t>(nd.right)].box,
                                          ray.origin, inv, t_min, std::min(t_max, best.t));
      // Push the farther child first so the nearer one is visited next.
      if (tl <= tr) {
        if (!std::isinf(tr)) stack[sp++] = {nd.right, tr};
        if (!std::isinf(tl)) stack[sp++] = {nd.left, tl};
      } else {
        if (!std::isinf(tl)) stack[sp++] = {nd.left, tl};
        if (!std::isinf(tr)) stack[sp++] = {nd.right, tr};
      }
    }
    return best;
  }

  /// Calls f(triangle) for every triangle whose bounding box overlaps `box`.
  template <class F>
  void query(const Aabb& box, F&& f) const {
    std::array<int, 128> stack;
    int sp = 0;
    stack[sp++] = 0;
    while (sp > 0) {
      const Node& nd = nodes_[static_cast<std::size_t>(stack[--sp])];
      if (!nd.box.overlaps(box)) continue;
      if (nd.leaf()) {
        for (int k = nd.first; k < nd.first + nd.count; ++k) {
          const int ti = order_[static_cast<std::size_t>(k)];
          if (boxes_[static_cast<std::size_t>(ti)].overlaps(box)) f(ti);
        }
      } else {
        stack[sp++] = nd.left;
        stack[sp++] = nd.right;
      }
    }
  }

  const Aabb& triangle_box(int t) const { return boxes_[static_cast<std::size_t>(t)]; }

 private:
  int build(int first, int count) {
    const int index = static_cast<int>(nodes_.size());
    nodes_.push_back({});
    Aabb box;
    Aabb cbox;
    for (int k = first; k < first + count; ++k) {
      const int t = order_[static_cast<std::size_t>(k)];
      box.expand(boxes_[static_cast<std::size_t>(t)]);
      cbox.expand(centroids_[static_cast<std::size_t>(t)]);
    }
    nodes_[static_cast<std::size_t>(index)].box = box;
    const Vec3 ext = cbox.hi - cbox.lo;
    int axis = 0;
    if (ext.y > ext[axis]) axis = 1;
    if (ext.z > ext[axis]) axis = 2;
    if (count <= kLeafSize || ext[axis] <= 0.0) {
      nodes_[static_cast<std::size_t>(index)].first = first;
      nodes_[static_cast<std::size_t>(index)].count = count;
      return index;
    }
    const int mid = first + count / 2;
    auto begin = order_.begin() + first;
    std::nth_element(begin, order_.begin() + mid, begin + count, [&](int a, int b) {
      const double ca = centroids_[static_cast<std::size_t>(a)][axis];
      const double cb = centroids_[static_cast<std::size_t>(b)][axis];
      return ca < cb || (ca == cb && a < b);
    });
    const int l = build(first, mid - first);
    const int r = build(mid, first + count - mid);
    nodes_[static_cast<std::size_t>(index)].left = l;
    nodes_[static_cast<std::size_t>(index)].right = r;
    return index;
  }

  const TriangleMesh* mesh_;
  std::vector<Aabb> boxes_;
  std::vector<Vec3> centroids_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
};

inline RayAccelerator build_accelerator(const TriangleMesh& mesh) { return RayAccelerator(mesh); }

}  // namespace bronchosim
