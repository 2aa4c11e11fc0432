#include <gtest/gtest.h>

#include <cmath>
#include <cstring>
#include <random>

#include "bronchosim/airway_model.hpp"
#include "bronchosim/dataset.hpp"
#include "bronchosim/mesh.hpp"
#include "bronchosim/mesh_io.hpp"
#include "bronchosim/mesh_validate.hpp"
#include "bronchosim/pfm.hpp"
#include "bronchosim/png_io.hpp"
#include "bronchosim/tree_json.hpp"
#include "test_util.hpp"

using namespace bronchosim;

namespace {

ImageF random_float_map(int w, int h, unsigned seed) {
  std::mt19937 rng(seed);
  std::uniform_real_distribution<float> u(0.01f, 500.0f);
  ImageF img(w, h);
  for (auto& v : img.data) v = u(rng);  // float-representable values
  return img;
}

}  // namespace

TEST(Pfm, HeaderAndRowOrder) {
  ImageF img(2, 2);
  img(0, 0) = 1.0;  // top-left
  img(1, 0) = 2.0;
  img(0, 1) = 3.0;  // bottom-left
  img(1, 1) = 4.0;
  const std::string bytes = encode_pfm(img);
  const std::string header = "Pf\n2 2\n-1.0\n";
  ASSERT_EQ(bytes.substr(0, header.size()), header);
  ASSERT_EQ(bytes.size(), header.size() + 16);
  float first = 0;
  std::memcpy(&first, bytes.data() + header.size(), 4);
  EXPECT_EQ(first, 3.0f);  // rows are stored bottom-up
}

TEST(Pfm, RoundTripIsBitExact) {
  testutil::TempDir dir;
  const ImageF img = random_float_map(37, 23, 5);
  write_pfm(dir.file("a.pfm"), img);
  const ImageF back = read_pfm(dir.file("a.pfm"));
  ASSERT_TRUE(back.same_shape(img));
  for (std::size_t i = 0; i < img.size(); ++i) EXPECT_EQ(std::bit_cast<std::uint64_t>(back[i]), std::bit_cast<std::uint64_t>(img[i]));
  EXPECT_EQ(encode_pfm(back), encode_pfm(img));
}

TEST(Pfm, BigEndianPayloadIsSwapped) {
  std::string bytes = "Pf\n1 1\n1.0\n";
  const float v = 6.5f;
  std::uint32_t u = detail::byteswap32(std::bit_cast<std::uint32_t>(v));
  bytes.append(reinterpret_cast<const char*>(&u), 4);
  EXPECT_EQ(decode_pfm(bytes)(0, 0), 6.5);
}

TEST(Pfm, TruncatedPayloadNamesByteCounts) {
  std::string bytes = encode_pfm(ImageF(4, 3, 1.0));
  bytes.resize(bytes.size() - 5);
  try {
    decode_pfm(bytes, "t.pfm");
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("expected 48 bytes"), std::string::npos) << msg;
    EXPECT_NE(msg.find("got 43"), std::string::npos) << msg;
  }
}

TEST(Pfm, MalformedHeadersAreRejected) {
  EXPECT_THROW(decode_pfm("PF\n1 1\n-1.0\n0000"), FormatError);  // color PFM unsupported
  EXPECT_THROW(decode_pfm("Pf\nx 1\n-1.0\n0000"), FormatError);
  EXPECT_THROW(decode_pfm("Pf\n1 1\n0\n0000"), FormatError);
  EXPECT_THROW(decode_pfm(""), FormatError);
}

TEST(Png, Gray16ConstantAtScaleHundredReadsAsTenMillimetres) {
  testutil::TempDir dir;
  write_png_gray16(dir.file("d.png"), Image<std::uint16_t>(5, 4, 1000));
  const ImageF d = read_depth(dir.file("d.png"), 100.0);
  ASSERT_EQ(d.width, 5);
  ASSERT_EQ(d.height, 4);
  for (double v : d.data) EXPECT_EQ(v, 10.0);
}

TEST(Png, Gray16RoundTripIsExactAtDeclaredQuantization) {
  testutil::TempDir dir;
  std::mt19937 rng(3);
  ImageF depth(31, 17);
  for (auto& v : depth.data) v = std::uniform_int_distribution<int>(0, 65535)(rng) / 100.0;
  write_png_gray16(dir.file("d.png"), encode_depth16(depth, 100.0));
  const ImageF back = read_depth(dir.file("d.png"), 100.0);
  for (std::size_t i = 0; i < depth.size(); ++i) EXPECT_EQ(back[i], depth[i]);
}

TEST(Png, Gray8AndRgbRoundTrip) {
  testutil::TempDir dir;
  Image<std::uint8_t> g(9, 7);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = static_cast<std::uint8_t>(i * 3);
  write_png_gray8(dir.file("g.png"), g);
  const PngData d = read_png(dir.file("g.png"));
  EXPECT_EQ(d.channels, 1);
  EXPECT_EQ(d.bit_depth, 8);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(d.samples[i], g[i]);

  std::vector<std::uint8_t> rgb(2 * 2 * 3);
  for (std::size_t i = 0; i < rgb.size(); ++i) rgb[i] = static_cast<std::uint8_t>(20 * i);
  write_png_rgb8(dir.file("c.png"), 2, 2, rgb);
  const PngData c = read_png(dir.file("c.png"));
  EXPECT_EQ(c.channels, 3);
  for (std::size_t i = 0; i < rgb.size(); ++i) EXPECT_EQ(c.samples[i], rgb[i]);
}

TEST(Png, MissingAndCorruptFiles) {
  testutil::TempDir dir;
  EXPECT_THROW(read_png(dir.file("none.png")), Error);
  write_file(dir.file("bad.png"), "not a png at all");
  EXPECT_THROW(read_png(dir.file("bad.png")), FormatError);
}

TEST(ReadDepth, UnknownExtension) {
  EXPECT_THROW(read_depth("depth.exr"), FormatError);
}

TEST(MeshIo, ObjRoundTripPreservesGeometryAndTopology) {
  const TriangleMesh m = tessellate(sample_tree(default_params(3, 2)), TessellationParams{16, 0.5, 6});
  const TriangleMesh back = decode_obj(encode_obj(m));
  ASSERT_EQ(back.vertices.size(), m.vertices.size());
  ASSERT_EQ(back.triangles, m.triangles);
  for (std::size_t i = 0; i < m.vertices.size(); ++i) EXPECT_EQ(back.vertices[i], m.vertices[i]);
  EXPECT_TRUE(validate_mesh(back).passes());
}

TEST(MeshIo, StlRoundTripWeldsVertices) {
  const TriangleMesh m = tessellate(sample_tree(default_params(2, 9)), TessellationParams{16, 0.5, 6});
  const std::string bytes = encode_stl(m);
  EXPECT_EQ(bytes.size(), 84 + 50 * m.triangles.size());
  const TriangleMesh back = decode_stl(bytes);
  EXPECT_EQ(back.triangles.size(), m.triangles.size());
  EXPECT_EQ(back.vertices.size(), m.vertices.size());
  const ValidationReport v = validate_mesh(back);
  EXPECT_TRUE(v.watertight());
  EXPECT_TRUE(v.consistent_winding());
  EXPECT_EQ(v.euler_characteristic, 2);
}

TEST(MeshIo, ObjNegativeIndicesAndPolygons) {
  const TriangleMesh m = decode_obj("v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf -4 -3 -2 -1\n");
  ASSERT_EQ(m.triangles.size(), 2u);
  EXPECT_EQ(m.triangles[0], (std::array<int, 3>{0, 1, 2}));
  EXPECT_EQ(m.triangles[1], (std::array<int, 3>{0, 2, 3}));
  EXPECT_THROW(decode_obj("v 0 0 0\nf 1 2 3\n"), FormatError);
}

TEST(TreeJson, RoundTripIsExact) {
  const AirwayTree t = sample_tree(default_params(4, 17));
  const Json j = tree_to_json(t);
  const AirwayTree back = tree_from_json(Json::parse(j.dump()));
  EXPECT_EQ(back.params, t.params);
  ASSERT_EQ(back.segments.size(), t.segments.size());
  for (std::size_t i = 0; i < t.segments.size(); ++i) {
    EXPECT_EQ(back.segments[i].length, t.segments[i].length);
    EXPECT_EQ(back.segments[i].diameter, t.segments[i].diameter);
    EXPECT_EQ(back.segments[i].parent_id, t.segments[i].parent_id);
  }
  EXPECT_EQ(back.bifurcations, t.bifurcations);
  EXPECT_EQ(tree_to_json(back).dump(), j.dump());
}

TEST(TreeJson, RejectsForeignDocuments) {
  EXPECT_THROW(tree_from_json(Json{{"format", "other"}}), FormatError);
  Json j = tree_to_json(sample_tree(default_params(2, 1)));
  j["segments"].erase(0);
  EXPECT_THROW(tree_from_json(j), FormatError);
}

TEST(TreeJson, ParamsHashTracksParameters) {
  GenerationParams a = default_params(4, 1);
  GenerationParams b = a;
  EXPECT_EQ(params_hash(a), params_hash(b));
  b.phi_max = 100.0;
  EXPECT_NE(params_hash(a), params_hash(b));
  EXPECT_EQ(fnv1a_hex(""), "cbf29ce484222325");
  EXPECT_EQ(fnv1a_hex("a"), "af63dc4c8601ec8c");
}
