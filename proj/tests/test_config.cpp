#include <gtest/gtest.h>

#include "bronchosim/config.hpp"
#include "test_util.hpp"

using namespace bronchosim;

namespace {

char** env_of(std::vector<std::string>& storage, std::vector<char*>& ptrs) {
  ptrs.clear();
  for (auto& s : storage) ptrs.push_back(s.data());
  ptrs.push_back(nullptr);
  return ptrs.data();
}

}  // namespace

TEST(Config, DefaultsResolveAndValidate) {
  char* empty[] = {nullptr};
  const RunConfig c = resolve_config("", {}, empty);
  EXPECT_EQ(c.tree.generations, 6);
  EXPECT_EQ(c.tree.ld_ratio_per_gen.size(), 6u);
  EXPECT_EQ(c.tree.l_mean_per_gen.size(), 6u);
  EXPECT_EQ(c.camera.width, 256);
  EXPECT_EQ(c.camera.vertical_fov, 90.0);
  EXPECT_EQ(c.shading.falloff_distance, 6.0);
  EXPECT_EQ(c.segmentation.threshold, 0.15);
  EXPECT_EQ(c.evaluate.adse_params.local_threshold, 0.99);
  EXPECT_EQ(c.evaluate.adse_params.contrast_threshold, -1.0);
}

TEST(Config, SerializedConfigReproducesItself) {
  char* empty[] = {nullptr};
  const RunConfig c = resolve_config("", {"tree.generations=4", "camera.vertical_fov=71.3", "run.seed=99",
                                          "loss.maps=[\"a.pfm\", \"b.pfm\"]", "tree.h_range=[0.7, 0.8]"},
                                     empty);
  const std::string text = config_to_toml(c);
  const RunConfig back = config_from_table(parse_toml(text, "resolved"));
  EXPECT_EQ(config_to_toml(back), text);
  EXPECT_EQ(back.tree, c.tree);
  EXPECT_EQ(back.tree.seed, 99u);
  EXPECT_EQ(back.loss.maps, (std::vector<std::string>{"a.pfm", "b.pfm"}));
}

TEST(Config, FileThenEnvironmentThenOverrides) {
  testutil::TempDir dir;
  write_file(dir.file("c.toml"), "[tree]\ngenerations = 3\nphi_max = 100\n[camera]\nwidth = 64\n[run]\nseed = 4\n");
  std::vector<std::string> env{"BRONCHOSIM_CAMERA_WIDTH=96", "BRONCHOSIM_RUN_OUTPUT_DIR=from/env", "OTHER=1"};
  std::vector<char*> ptrs;
  const RunConfig c = resolve_config(dir.file("c.toml"), {"camera.width=128"}, env_of(env, ptrs));
  EXPECT_EQ(c.tree.generations, 3);
  EXPECT_EQ(c.tree.phi_max, 100.0);  // integer in TOML accepted for a real
  EXPECT_EQ(c.camera.width, 128);
  EXPECT_EQ(c.run.output_dir, "from/env");
  EXPECT_EQ(c.tree.seed, 4u);
  const RunConfig no_flag = resolve_config(dir.file("c.toml"), {}, env_of(env, ptrs));
  EXPECT_EQ(no_flag.camera.width, 96);
}

TEST(Config, FullTreeTableIsUsedVerbatim) {
  testutil::TempDir dir;
  write_file(dir.file("airway.toml"),
             "[tree]\ngenerations = 3\nroot_diameter = 16.0\nh_range = [0.7, 0.85]\nphi_max = 110.0\n"
             "length_sigma_factor = 0.2\nld_ratio_per_gen = [5.0, 3.0, 2.5]\nl_mean_per_gen = [80.0, 40.0, 20.0]\n"
             "taper_steepness = 6.0\ntaper_midpoint = 0.4\ncarina_rounding_factor = 0.3\nmax_attempts = 100\n");
  char* empty[] = {nullptr};
  const RunConfig c = resolve_config(dir.file("airway.toml"), {}, empty);
  EXPECT_EQ(c.tree.l_mean_per_gen, (std::vector<double>{80.0, 40.0, 20.0}));
  EXPECT_EQ(c.tree.ld_ratio_per_gen, (std::vector<double>{5.0, 3.0, 2.5}));
  EXPECT_EQ(c.tree.h_range, (Interval{0.7, 0.85}));
  EXPECT_EQ(c.tree.taper.steepness, 6.0);
  const std::string echoed = config_to_toml(c);
  EXPECT_NE(echoed.find("l_mean_per_gen = [ 80.0, 40.0, 20.0 ]"), std::string::npos) << echoed;
  EXPECT_NE(echoed.find("taper_midpoint = 0.40000000000000002"), std::string::npos) << echoed;
}

TEST(Config, ErrorsNameTheSetting) {
  char* empty[] = {nullptr};
  auto message = [&](std::vector<std::string> o) {
    try {
      resolve_config("", o, empty);
    } catch (const Error& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_NE(message({"tree.generations=0"}).find("generations"), std::string::npos);
  EXPECT_NE(message({"tree.bogus=1"}).find("tree.bogus"), std::string::npos);
  EXPECT_NE(message({"camera.width=\"wide\""}).find("camera.width"), std::string::npos);
  EXPECT_NE(message({"segmentation.mode=guess"}).find("segmentation.mode"), std::string::npos);
  EXPECT_NE(message({"evaluate.prediction_convention=inverse"}).find("inverse"), std::string::npos);
  EXPECT_NE(message({"noequals"}).find("section.key=value"), std::string::npos);
  EXPECT_NE(message({"tree.generations=3", "tree.ld_ratio_per_gen=[1.0]"}).find("ld_ratio_per_gen"), std::string::npos);
}

TEST(Config, OverrideValuesParseAsTomlOrFallBackToStrings) {
  toml::table t;
  apply_overrides(t, {"a.n=7", "a.x=0.5", "a.b=true", "a.s=out/dir", "a.v=[1, 2]"});
  EXPECT_EQ(t.at_path("a.n").value<std::int64_t>(), 7);
  EXPECT_EQ(t.at_path("a.x").value<double>(), 0.5);
  EXPECT_EQ(t.at_path("a.b").value<bool>(), true);
  EXPECT_EQ(t.at_path("a.s").value<std::string>(), "out/dir");
  EXPECT_EQ(t.at_path("a.v").as_array()->size(), 2u);
}

TEST(Config, MalformedTomlReportsPosition) {
  testutil::TempDir dir;
  write_file(dir.file("bad.toml"), "[tree]\ngenerations = = 3\n");
  char* empty[] = {nullptr};
  try {
    resolve_config(dir.file("bad.toml"), {}, empty);
    FAIL();
  } catch (const FormatError& e) {
    EXPECT_NE(std::string(e.what()).find(":2:"), std::string::npos) << e.what();
  }
}
