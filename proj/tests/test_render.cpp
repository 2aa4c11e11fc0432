#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "bronchosim/airway_model.hpp"
#include "bronchosim/bvh.hpp"
#include "bronchosim/flythrough.hpp"
#include "bronchosim/mesh.hpp"
#include "bronchosim/render.hpp"

using namespace bronchosim;

namespace {

struct Tube {
  AirwayTree tree = single_segment_tree(10.0, 40.0);
  TriangleMesh mesh = tessellate(tree, TessellationParams{32, 1.0, 8});
  RayAccelerator accel{mesh};
};

Camera axial_camera(double z0, int size = 17, double fov = 60.0) {
  Camera c;
  c.width = size;
  c.height = size;
  c.vertical_fov = fov;
  c.pose = Frame{{0.0, 0.0, z0}, {1.0, 0.0, 0.0}, {0.0, 1.0, 0.0}, {0.0, 0.0, 1.0}};
  return c;
}

}  // namespace

TEST(Camera, Validation) {
  Camera c;
  EXPECT_NO_THROW(validate(c));
  c.vertical_fov = 5.0;
  EXPECT_THROW(validate(c), ParameterError);
  c = Camera{};
  c.width = 8;
  EXPECT_THROW(validate(c), ParameterError);
  c = Camera{};
  c.near_clip = 0.0;
  EXPECT_THROW(validate(c), ParameterError);
  ShadingParams s;
  s.falloff_distance = 0.0;
  EXPECT_THROW(validate(s), ParameterError);
}

TEST(Camera, PixelDirectionsFollowTheFieldOfView) {
  const Camera c = axial_camera(0.0, 17, 60.0);
  const Vec3 center = pixel_direction(c, 8, 8);
  EXPECT_NEAR(center.x, 0.0, 1e-15);
  EXPECT_NEAR(center.y, 0.0, 1e-15);
  EXPECT_NEAR(center.z, 1.0, 1e-15);
  // Row 0 points up (negative y) at the tangent of its pixel-center offset.
  const Vec3 top = pixel_direction(c, 8, 0);
  const double expected = (2.0 * 0.5 / 17.0 - 1.0) * std::tan(deg_to_rad(30.0));
  EXPECT_NEAR(top.y / top.z, expected, 1e-12);
  EXPECT_LT(top.y, 0.0);
  const Vec3 right = pixel_direction(c, 16, 8);
  EXPECT_GT(right.x, 0.0);
  EXPECT_NEAR(right.x / right.z, -expected, 1e-12);
}

TEST(Render, FlatCapDepthEqualsAxialDistance) {
  Tube t;
  const FrameSample f = render_frame(t.accel, axial_camera(10.0), ShadingParams{});
  EXPECT_NEAR(f.depth(8, 8), 30.0, 1e-6);
  // Every pixel that lands on the planar cap has the same z-depth.
  int on_cap = 0;
  for (std::size_t i = 0; i < f.depth.size(); ++i)
    if (std::abs(f.depth[i] - 30.0) < 1e-6) ++on_cap;
  EXPECT_GT(on_cap, 1);
}

TEST(Render, DepthTimesDisparityIsOne) {
  Tube t;
  const FrameSample f = render_frame(t.accel, axial_camera(3.0, 32, 90.0), ShadingParams{});
  for (std::size_t i = 0; i < f.depth.size(); ++i) {
    ASSERT_TRUE(f.hit[i]);
    EXPECT_NEAR(f.depth[i] * f.disparity[i], 1.0, 1e-9);
    EXPECT_GE(f.depth[i], axial_camera(3.0).near_clip);
  }
}

TEST(Render, AxialViewIsPointSymmetric) {
  Tube t;
  const FrameSample f = render_frame(t.accel, axial_camera(5.0, 32, 90.0), ShadingParams{});
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      EXPECT_NEAR(f.depth(x, y), f.depth(31 - x, 31 - y), 1e-9);
      EXPECT_NEAR(f.image(x, y), f.image(31 - x, 31 - y), 1e-9);
    }
}

TEST(Render, ThreadCountDoesNotChangeOutput) {
  Tube t;
  const Camera c = axial_camera(4.0, 48, 90.0);
  const FrameSample a = render_frame(t.accel, c, ShadingParams{}, 1);
  const FrameSample b = render_frame(t.accel, c, ShadingParams{}, 4);
  EXPECT_EQ(a.image, b.image);
  EXPECT_EQ(a.depth, b.depth);
  EXPECT_EQ(a.hit, b.hit);
}

TEST(Render, CameraOutsideTheLumenIsRejected) {
  Tube t;
  EXPECT_THROW(render_frame(t.accel, axial_camera(-50.0), ShadingParams{}), PlacementError);
}

TEST(Render, IntensityFallsWithDepth) {
  Tube t;
  const FrameSample f = render_frame(t.accel, axial_camera(2.0, 64, 90.0), ShadingParams{});
  std::vector<std::size_t> order(f.depth.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return f.depth[a] < f.depth[b]; });
  const std::size_t tenth = order.size() / 10;
  double near_mean = 0.0, far_mean = 0.0;
  for (std::size_t k = 0; k < tenth; ++k) {
    near_mean += f.image[order[k]];
    far_mean += f.image[order[order.size() - 1 - k]];
  }
  EXPECT_GT(near_mean, far_mean);
  // The darkest pixel lies in the deepest quarter of the frame.
  const auto darkest = static_cast<std::size_t>(
      std::min_element(f.image.data.begin(), f.image.data.end()) - f.image.data.begin());
  const auto rank = static_cast<std::size_t>(std::find(order.begin(), order.end(), darkest) - order.begin());
  EXPECT_GE(rank, 3 * order.size() / 4);
}

TEST(Render, CapAlbedoControlsCapBrightness) {
  Tube t;
  ShadingParams lit;
  lit.cap_albedo = 1.0;
  const Camera c = axial_camera(30.0);
  EXPECT_GT(render_frame(t.accel, c, lit).image(8, 8), 0.0);
  EXPECT_EQ(render_frame(t.accel, c, ShadingParams{}).image(8, 8), 0.0);
}

TEST(Render, EveryPoseOfAFlythroughSeesOnlyWalls) {
  const AirwayTree tree = sample_tree(default_params(5, 21));
  const TriangleMesh mesh = tessellate(tree, TessellationParams{});
  const RayAccelerator accel(mesh);
  const auto route = route_from_seed(tree, 4);
  JitterParams j{10.0, 10.0, 180.0, 0.3, 8, 32};
  const CameraPath path = generate_flythrough(tree, accel, route, 5.0, j);
  Camera c;
  c.width = c.height = 32;
  for (const Frame& pose : path.poses) {
    c.pose = pose;
    const FrameSample f = render_frame(accel, c, ShadingParams{});
    EXPECT_EQ(count_true(f.hit), f.hit.size());
  }
}
