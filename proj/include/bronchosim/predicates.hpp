#pragma once

// Exact orientation predicates for double-precision inputs. A floating-point
// evaluation is accepted when its magnitude clears a forward error bound;
// otherwise the determinant is recomputed exactly with floating-point
// expansions (sums of non-overlapping doubles).

#include <array>
#include <cmath>
#include <limits>

#include "bronchosim/geometry.hpp"

namespace bronchosim::exact {

// Fixed-capacity expansion; components are non-overlapping and ordered by
// increasing magnitude.
struct Expansion {
  std::array<double, 200> v;  // only the first n entries are meaningful
  int n = 0;
};

inline void fast_two_sum(double a, double b, double& x, double& y) {
  x = a + b;
  y = b - (x - a);
}

inline void two_sum(double a, double b, double& x, double& y) {
  x = a + b;
  const double bv = x - a;
  const double av = x - bv;
  y = (a - av) + (b - bv);
}

inline void two_product(double a, double b, double& x, double& y) {
  x = a * b;
  y = std::fma(a, b, -x);
}

inline Expansion diff(double a, double b) {
  Expansion out;
  double x = 0.0;
  double y = 0.0;
  two_sum(a, -b, x, y);
  if (y != 0.0) out.v[static_cast<std::size_t>(out.n++)] = y;
  out.v[static_cast<std::size_t>(out.n++)] = x;
  return out;
}

// Shewchuk's fast expansion sum with zero elimination.
inline Expansion add(const Expansion& e, const Expansion& f) {
  Expansion h;
  const double* ev = e.v.data();
  const double* fv = f.v.data();
  double* hv = h.v.data();
  int ei = 0;
  int fi = 0;
  double enow = ev[0];
  double fnow = fv[0];
  double q = 0.0;
  double qn = 0.0;
  double hh = 0.0;
  if ((fnow > enow) == (fnow > -enow)) {
    q = enow;
    enow = ++ei < e.n ? ev[ei] : 0.0;
  } else {
    q = fnow;
    fnow = ++fi < f.n ? fv[fi] : 0.0;
  }
  if (ei < e.n && fi < f.n) {
    if ((fnow > enow) == (fnow > -enow)) {
      fast_two_sum(enow, q, qn, hh);
      enow = ++ei < e.n ? ev[ei] : 0.0;
    } else {
      fast_two_sum(fnow, q, qn, hh);
      fnow = ++fi < f.n ? fv[fi] : 0.0;
    }
    q = qn;
    if (hh != 0.0) hv[h.n++] = hh;
    while (ei < e.n && fi < f.n) {
      if ((fnow > enow) == (fnow > -enow)) {
        two_sum(q, enow, qn, hh);
        enow = ++ei < e.n ? ev[ei] : 0.0;
      } else {
        two_sum(q, fnow, qn, hh);
        fnow = ++fi < f.n ? fv[fi] : 0.0;
      }
      q = qn;
      if (hh != 0.0) hv[h.n++] = hh;
    }
  }
  while (ei < e.n) {
    two_sum(q, enow, qn, hh);
    enow = ++ei < e.n ? ev[ei] : 0.0;
    q = qn;
    if (hh != 0.0) hv[h.n++] = hh;
  }
  while (fi < f.n) {
    two_sum(q, fnow, qn, hh);
    fnow = ++fi < f.n ? fv[fi] : 0.0;
    q = qn;
    if (hh != 0.0) hv[h.n++] = hh;
  }
  if (q != 0.0 || h.n == 0) hv[h.n++] = q;
  return h;
}

inline Expansion scale(const Expansion& e, double b) {
  Expansion h;
  double q = 0.0;
  double hh = 0.0;
  two_product(e.v[0], b, q, hh);
  if (hh != 0.0) h.v[static_cast<std::size_t>(h.n++)] = hh;
  for (int i = 1; i < e.n; ++i) {
    double p1 = 0.0;
    double p0 = 0.0;
    double sum = 0.0;
    two_product(e.v[static_cast<std::size_t>(i)], b, p1, p0);
    two_sum(q, p0, sum, hh);
    if (hh != 0.0) h.v[static_cast<std::size_t>(h.n++)] = hh;
    fast_two_sum(p1, sum, q, hh);
    if (hh != 0.0) h.v[static_cast<std::size_t>(h.n++)] = hh;
  }
  if (q != 0.0 || h.n == 0) h.v[static_cast<std::size_t>(h.n++)] = q;
  return h;
}

inline Expansion negate(Expansion a) {
  for (int i = 0; i < a.n; ++i) a.v[static_cast<std::size_t>(i)] = -a.v[static_cast<std::size_t>(i)];
  return a;
}

inline Expansion mul(const Expansion& a, const Expansion& b) {
  Expansion out = scale(a, b.v[0]);
  for (int i = 1; i < b.n; ++i) out = add(out, scale(a, b.v[static_cast<std::size_t>(i)]));
  return out;
}

inline int sign(const Expansion& a) {
  const double top = a.v[static_cast<std::size_t>(a.n - 1)];
  return (top > 0.0) - (top < 0.0);
}

inline int orient3d_exact(Vec3 a, Vec3 b, Vec3 c, Vec3 d) {
  const Expansion bx = diff(b.x, a.x), by = diff(b.y, a.y), bz = diff(b.z, a.z);
  const Expansion cx = diff(c.x, a.x), cy = diff(c.y, a.y), cz = diff(c.z, a.z);
  const Expansion dx = diff(d.x, a.x), dy = diff(d.y, a.y), dz = diff(d.z, a.z);
  const Expansion m1 = add(mul(cy, dz), negate(mul(cz, dy)));
  const Expansion m2 = add(mul(cz, dx), negate(mul(cx, dz)));
  const Expansion m3 = add(mul(cx, dy), negate(mul(cy, dx)));
  return sign(add(add(mul(bx, m1), mul(by, m2)), mul(bz, m3)));
}

inline int orient2d_exact(Vec2 a, Vec2 b, Vec2 c) {
  const Expansion bx = diff(b.x, a.x), by = diff(b.y, a.y);
  const Expansion cx = diff(c.x, a.x), cy = diff(c.y, a.y);
  return sign(add(mul(bx, cy), negate(mul(by, cx))));
}

inline constexpr int kUncertain = 2;

/// Sign of det[b - a, c - a, d - a] from the floating-point filter alone, or
/// kUncertain when the filter cannot decide.
inline int orient3d_filtered(Vec3 a, Vec3 b, Vec3 c, Vec3 d) {
  const Vec3 B = b - a, C = c - a, D = d - a;
  const double m1 = C.y * D.z - C.z * D.y;
  const double m2 = C.z * D.x - C.x * D.z;
  const double m3 = C.x * D.y - C.y * D.x;
  const double det = B.x * m1 + B.y * m2 + B.z * m3;
  const double permanent =
      std::abs(B.x) * (std::abs(C.y * D.z) + std::abs(C.z * D.y)) +
      std::abs(B.y) * (std::abs(C.z * D.x) + std::abs(C.x * D.z)) +
      std::abs(B.z) * (std::abs(C.x * D.y) + std::abs(C.y * D.x));
  // Generous bound covering the rounding of the differences as well.
  const double bound = 16.0 * std::numeric_limits<double>::epsilon() * permanent;
  if (det > bound) return 1;
  if (-det > bound) return -1;
  return kUncertain;
}

/// Sign of det[b - a, c - a, d - a]: positive when d lies on the side of
/// plane abc that cross(b - a, c - a) points to.
inline int orient3d(Vec3 a, Vec3 b, Vec3 c, Vec3 d) {
  const int s = orient3d_filtered(a, b, c, d);
  return s != kUncertain ? s : orient3d_exact(a, b, c, d);
}

inline int orient2d(Vec2 a, Vec2 b, Vec2 c) {
  const Vec2 B = b - a, C = c - a;
  const double det = B.x * C.y - B.y * C.x;
  const double bound =
      8.0 * std::numeric_limits<double>::epsilon() * (std::abs(B.x * C.y) + std::abs(B.y * C.x));
  if (det > bound) return 1;
  if (-det > bound) return -1;
  return orient2d_exact(a, b, c);
}

}  // namespace bronchosim::exact
