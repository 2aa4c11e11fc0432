#include <gtest/gtest.h>

#include <cmath>

#include "bronchosim/airway_model.hpp"
#include "bronchosim/bvh.hpp"
#include "bronchosim/flythrough.hpp"
#include "bronchosim/mesh.hpp"

using namespace bronchosim;

namespace {

struct Scene {
  explicit Scene(AirwayTree t) : tree(std::move(t)), mesh(tessellate(tree, TessellationParams{})), accel(mesh) {}
  AirwayTree tree;
  TriangleMesh mesh;
  RayAccelerator accel;
};

double angle_between(Vec3 a, Vec3 b) { return std::acos(std::clamp(dot(normalize(a), normalize(b)), -1.0, 1.0)); }

}  // namespace

TEST(Route, ValidationNamesTheProblem) {
  const AirwayTree t = sample_tree(default_params(3, 1));
  EXPECT_NO_THROW(check_route(t, {0, 1, 3}));
  EXPECT_THROW(check_route(t, {}), RouteError);
  EXPECT_THROW(check_route(t, {0, 99}), RouteError);
  try {
    check_route(t, {0, 1, 5});
    FAIL();
  } catch (const RouteError& e) {
    EXPECT_NE(std::string(e.what()).find("not a daughter"), std::string::npos);
  }
}

TEST(Route, SeededRoutesRunRootToLeaf) {
  const AirwayTree t = sample_tree(default_params(5, 2));
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto r = route_from_seed(t, s);
    ASSERT_EQ(r.size(), 5u);
    EXPECT_EQ(r.front(), 0);
    EXPECT_TRUE(t.is_leaf(r.back()));
    EXPECT_NO_THROW(check_route(t, r));
    EXPECT_EQ(r, route_from_seed(t, s));
  }
}

TEST(Flythrough, UnjitteredPosesAreEvenlySpacedOnTheAxis) {
  const Scene s(single_segment_tree(10.0, 60.0));
  const double step = 4.0;
  const CameraPath p = generate_flythrough(s.tree, s.accel, {0}, step, JitterParams{});
  const auto [begin, end] = navigable_range(s.tree, {0});
  EXPECT_DOUBLE_EQ(begin, 2.5);
  EXPECT_DOUBLE_EQ(end, 50.0);
  ASSERT_EQ(p.poses.size(), static_cast<std::size_t>(std::ceil((end - begin) / step)) + 1);
  for (std::size_t k = 0; k < p.poses.size(); ++k) {
    const Frame& f = p.poses[k];
    EXPECT_NEAR(f.origin.x, 0.0, 1e-12);
    EXPECT_NEAR(f.origin.y, 0.0, 1e-12);
    EXPECT_NEAR(f.origin.z, std::min(begin + step * static_cast<double>(k), end), 1e-12);
    EXPECT_NEAR(dot(f.z, Vec3{0, 0, 1}), 1.0, 1e-12);
    EXPECT_NEAR(length(cross(f.x, f.y) - f.z), 0.0, 1e-12);
  }
}

TEST(Flythrough, PoseCountMatchesNavigableLength) {
  const Scene s(sample_tree(default_params(4, 8)));
  const auto route = route_from_seed(s.tree, 3);
  const auto [begin, end] = navigable_range(s.tree, route);
  for (double step : {0.7, 1.0, 2.5, 9.0}) {
    const CameraPath p = generate_flythrough(s.tree, s.accel, route, step, JitterParams{});
    EXPECT_EQ(p.poses.size(), static_cast<std::size_t>(std::ceil((end - begin) / step)) + 1) << step;
    EXPECT_DOUBLE_EQ(p.pose_arclength.back(), end);
  }
}

TEST(Flythrough, DownAxisIsTransportedWithoutJumps) {
  const Scene s(sample_tree(default_params(5, 12)));
  const CameraPath p = generate_flythrough(s.tree, s.accel, route_from_seed(s.tree, 1), 0.5, JitterParams{});
  for (std::size_t k = 1; k < p.poses.size(); ++k) {
    EXPECT_GT(dot(p.poses[k].y, p.poses[k - 1].y), std::cos(deg_to_rad(10.0))) << k;
    EXPECT_NEAR(dot(p.poses[k].y, p.poses[k].z), 0.0, 1e-12);
  }
}

TEST(Flythrough, JitterIsBoundedDeterministicAndInterior) {
  const Scene s(sample_tree(default_params(5, 30)));
  const auto route = route_from_seed(s.tree, 9);
  const JitterParams j{8.0, 6.0, 45.0, 0.4, 77, 32};
  const CameraPath base = generate_flythrough(s.tree, s.accel, route, 2.0, JitterParams{});
  const CameraPath p = generate_flythrough(s.tree, s.accel, route, 2.0, j);
  const CameraPath again = generate_flythrough(s.tree, s.accel, route, 2.0, j);
  ASSERT_EQ(p.poses.size(), base.poses.size());
  EXPECT_EQ(p.poses, again.poses);
  bool moved = false;
  for (std::size_t k = 0; k < p.poses.size(); ++k) {
    const Frame& f = p.poses[k];
    const Frame& b = base.poses[k];
    const double r = p.local_radius[k];
    EXPECT_LE(distance(f.origin, b.origin), 0.4 * r + 1e-9);
    EXPECT_NEAR(dot(f.origin - b.origin, b.z), 0.0, 1e-9);  // offset stays in the cross-section
    EXPECT_LE(angle_between(f.z, b.z), deg_to_rad(8.0 + 6.0) + 1e-9);
    EXPECT_TRUE(is_interior(s.accel, f.origin, kInteriorFraction * r));
    moved = moved || f.origin != b.origin;
  }
  EXPECT_TRUE(moved);
  JitterParams other = j;
  other.seed = 78;
  EXPECT_NE(generate_flythrough(s.tree, s.accel, route, 2.0, other).poses, p.poses);
}

TEST(Flythrough, ParameterValidation) {
  const Scene s(single_segment_tree(10.0, 30.0));
  EXPECT_THROW(generate_flythrough(s.tree, s.accel, {0}, 0.0, JitterParams{}), ParameterError);
  JitterParams j;
  j.max_offset_fraction = 0.95;
  EXPECT_THROW(generate_flythrough(s.tree, s.accel, {0}, 1.0, j), ParameterError);
  j = JitterParams{};
  j.max_yaw_deg = 91.0;
  EXPECT_THROW(validate(j), ParameterError);
  const Scene tiny(single_segment_tree(10.0, 5.0));
  EXPECT_THROW(generate_flythrough(tiny.tree, tiny.accel, {0}, 1.0, JitterParams{}), RouteError);
}

TEST(Interior, PointsNearOrOutsideTheWallAreRejected) {
  const Scene s(single_segment_tree(10.0, 30.0));
  EXPECT_TRUE(is_interior(s.accel, {0, 0, 15}, 0.5));
  EXPECT_FALSE(is_interior(s.accel, {4.8, 0, 15}, 0.5));
  EXPECT_FALSE(is_interior(s.accel, {20, 0, 15}, 0.5));
  EXPECT_FALSE(is_interior(s.accel, {0, 0, -5}, 0.5));
}

TEST(Interior, ClosestPointOnTriangleMatchesDenseSampling) {
  const Vec3 a{0, 0, 0}, b{2, 0, 0}, c{0, 3, 1};
  for (Vec3 p : {Vec3{1, 1, 5}, Vec3{-1, -1, 0}, Vec3{5, 0, 0}, Vec3{1, -2, 0}, Vec3{0.2, 0.3, -1}}) {
    const Vec3 q = detail::closest_on_triangle(p, a, b, c);
    double best = 1e300;
    for (int i = 0; i <= 400; ++i)
      for (int k = 0; i + k <= 400; ++k) {
        const double u = i / 400.0, v = k / 400.0;
        best = std::min(best, distance(p, a + (b - a) * u + (c - a) * v));
      }
    EXPECT_LE(distance(p, q), best + 1e-12);
    EXPECT_NEAR(distance(p, q), best, 2e-2);
  }
}
