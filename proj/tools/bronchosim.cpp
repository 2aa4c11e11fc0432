#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "bronchosim/config.hpp"
#include "bronchosim/mesh_io.hpp"
#include "bronchosim/mesh_validate.hpp"
#include "bronchosim/pipeline.hpp"
#include "bronchosim/report.hpp"

namespace bs = bronchosim;

namespace {

constexpr int kExitUsage = 1;

struct GlobalOptions {
  std::string config;
  bool json = false;
  std::vector<std::string> sets;
  int threads = -1;
  std::string out;
  std::int64_t seed = -1;
};

/// Named flags translate into `section.key=value` overrides so they layer on
/// top of the config file and the environment.
struct FlagOverrides {
  std::vector<std::string> items;

  template <class T>
  void add(const std::string& key, const T& value) {
    std::ostringstream os;
    if constexpr (std::is_same_v<T, std::string>) {
      os << toml::value<std::string>(value);
    } else if constexpr (std::is_same_v<T, bool>) {
      os << (value ? "true" : "false");
    } else {
      os << value;
    }
    items.push_back(key + "=" + os.str());
  }
};

bs::RunConfig resolve(const GlobalOptions& g, FlagOverrides flags) {
  if (g.threads >= 0) flags.add("run.threads", g.threads);
  if (!g.out.empty()) flags.add("run.output_dir", g.out);
  if (g.seed >= 0) flags.add("run.seed", g.seed);
  std::vector<std::string> all = flags.items;
  all.insert(all.end(), g.sets.begin(), g.sets.end());
  return bs::resolve_config(g.config, all);
}

void emit(const GlobalOptions& g, const bs::Json& j, const std::string& text) {
  if (g.json) {
    std::cout << j.dump(2) << '\n';
  } else {
    std::cout << text;
  }
}

bs::Json validation_json(const bs::ValidationReport& v) {
  return bs::Json{{"passes", v.passes()},
                  {"watertight", v.watertight()},
                  {"consistent_winding", v.consistent_winding()},
                  {"inward_facing", v.inward_facing()},
                  {"boundary_edges", v.boundary_edges.size()},
                  {"nonmanifold_edges", v.nonmanifold_edges.size()},
                  {"winding_conflicts", v.winding_conflicts.size()},
                  {"degenerate_triangles", v.degenerate_triangles},
                  {"self_intersections", v.self_intersections.size()},
                  {"euler_characteristic", v.euler_characteristic},
                  {"signed_volume", v.signed_volume}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Procedural bronchial airway synthesis and depth evaluation"};
  app.require_subcommand(1);
  app.fallthrough();
  GlobalOptions g;
  app.add_option("--config", g.config, "TOML run configuration")->check(CLI::ExistingFile);
  app.add_flag("--json", g.json, "Machine-readable JSON on stdout");
  app.add_option("--threads", g.threads, "Worker threads (0 = all cores)")->check(CLI::NonNegativeNumber);
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--seed", g.seed, "Run seed")->check(CLI::NonNegativeNumber);
  app.add_option("--set", g.sets, "Override any setting: section.key=value")->take_all();

  FlagOverrides flags;

  auto* gen = app.add_subcommand("generate", "Sample an airway tree and write tree JSON and mesh files");
  int generations = 0;
  bool stl = false;
  int ring_segments = 0;
  gen->add_option("--generations", generations, "Number of generations")->check(CLI::Range(1, 16));
  gen->add_flag("--stl", stl, "Also write binary STL");
  gen->add_option("--ring-segments", ring_segments, "Vertices per cross-section ring")->check(CLI::Range(8, 4096));

  auto* ren = app.add_subcommand("render", "Render fly-through frames into a dataset directory");
  int r_generations = 0, trees = 0, paths = 0, frames = 0, width = 0, height = 0;
  double fov = 0.0, falloff = 0.0;
  ren->add_option("--generations", r_generations, "Number of generations")->check(CLI::Range(1, 16));
  ren->add_option("--trees", trees, "Trees to sample")->check(CLI::PositiveNumber);
  ren->add_option("--paths", paths, "Camera paths per tree")->check(CLI::PositiveNumber);
  ren->add_option("--frames", frames, "Frames per path")->check(CLI::Range(2, 1000000));
  ren->add_option("--width", width, "Image width")->check(CLI::Range(16, 16384));
  ren->add_option("--height", height, "Image height")->check(CLI::Range(16, 16384));
  ren->add_option("--fov", fov, "Vertical field of view, degrees")->check(CLI::Range(10.0, 170.0));
  ren->add_option("--falloff", falloff, "Shading falloff distance, mm")->check(CLI::PositiveNumber);

  auto* ev = app.add_subcommand("evaluate", "Score predicted depth or disparity maps");
  std::string pred, gt, pred_conv, gt_conv;
  bool allow_partial = false, no_adse = false, no_classical = false;
  ev->add_option("--pred", pred, "Prediction manifest or directory");
  ev->add_option("--gt", gt, "Ground-truth manifest or directory (defaults to --pred)");
  ev->add_option("--pred-convention", pred_conv, "depth or disparity, for directory layouts")
      ->check(CLI::IsMember({"depth", "disparity"}));
  ev->add_option("--gt-convention", gt_conv, "depth or disparity, for directory layouts")
      ->check(CLI::IsMember({"depth", "disparity"}));
  ev->add_flag("--allow-partial", allow_partial, "Drop incomplete frames instead of rejecting the bundle");
  ev->add_flag("--no-adse", no_adse, "Skip the airway depth structure evaluation");
  ev->add_flag("--no-classical", no_classical, "Skip the classical depth metrics");

  auto* lo = app.add_subcommand("loss", "Airway structure loss over disparity maps and masks");
  std::vector<std::string> loss_maps, loss_masks;
  std::string loss_conv;
  lo->add_option("--map", loss_maps, "Disparity (or depth) map, PFM or 16-bit PNG; repeatable");
  lo->add_option("--mask", loss_masks, "Airway mask PNG matching each --map; repeatable");
  lo->add_option("--convention", loss_conv, "depth or disparity")->check(CLI::IsMember({"depth", "disparity"}));

  auto* vm = app.add_subcommand("validate-mesh", "Check a mesh for watertightness, winding and self-intersections");
  std::string mesh_path;
  vm->add_option("mesh", mesh_path, "OBJ or STL file")->required()->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*gen) {
      if (generations > 0) flags.add("tree.generations", generations);
      if (stl) flags.add("mesh.write_stl", true);
      if (ring_segments > 0) flags.add("mesh.ring_segments", ring_segments);
      const bs::RunConfig c = resolve(g, flags);
      const bs::GenerateResult r = bs::run_generate(c);
      bs::Json j{{"command", "generate"},
                 {"seed", r.tree.params.seed},
                 {"generations", r.tree.params.generations},
                 {"segments", r.tree.segments.size()},
                 {"vertices", r.mesh.vertices.size()},
                 {"triangles", r.mesh.triangles.size()},
                 {"validation", validation_json(r.validation)},
                 {"files", r.files}};
      std::ostringstream os;
      os << "generated " << r.tree.segments.size() << " segments, " << r.mesh.triangles.size()
         << " triangles (mesh " << (r.validation.passes() ? "valid" : "INVALID: " + r.validation.summary()) << ")\n";
      for (const auto& f : r.files) os << "  wrote " << f << '\n';
      emit(g, j, os.str());
      return r.validation.passes() ? 0 : 2;
    }
    if (*ren) {
      if (r_generations > 0) flags.add("tree.generations", r_generations);
      if (trees > 0) flags.add("flythrough.trees", trees);
      if (paths > 0) flags.add("flythrough.paths_per_tree", paths);
      if (frames > 0) flags.add("flythrough.frames_per_path", frames);
      if (width > 0) flags.add("camera.width", width);
      if (height > 0) flags.add("camera.height", height);
      if (fov > 0.0) flags.add("camera.vertical_fov", fov);
      if (falloff > 0.0) flags.add("shading.falloff_distance", falloff);
      const bs::RunConfig c = resolve(g, flags);
      const bs::DatasetManifest m = bs::run_render(c);
      const std::string manifest = (bs::fs::path(c.run.output_dir) / "manifest.json").string();
      emit(g, bs::Json{{"command", "render"}, {"frames", m.frames.size()}, {"manifest", manifest}},
           "rendered " + std::to_string(m.frames.size()) + " frames\n  wrote " + manifest + "\n");
      return 0;
    }
    if (*ev) {
      if (!pred.empty()) flags.add("evaluate.prediction", pred);
      if (!gt.empty()) flags.add("evaluate.ground_truth", gt);
      if (!pred_conv.empty()) flags.add("evaluate.prediction_convention", pred_conv);
      if (!gt_conv.empty()) flags.add("evaluate.ground_truth_convention", gt_conv);
      if (allow_partial) flags.add("evaluate.allow_partial", true);
      if (no_adse) flags.add("evaluate.adse", false);
      if (no_classical) flags.add("evaluate.classical", false);
      const bs::RunConfig c = resolve(g, flags);
      const bs::MetricsReport r = bs::run_evaluate(c);
      bs::Json j = bs::report_to_json(r);
      j["command"] = "evaluate";
      emit(g, j, bs::report_to_table(r));
      return 0;
    }
    if (*lo) {
      FlagOverrides f = flags;
      if (!loss_maps.empty()) {
        toml::array a;
        for (const auto& s : loss_maps) a.push_back(s);
        std::ostringstream os;
        os << a;
        f.items.push_back("loss.maps=" + os.str());
      }
      if (!loss_masks.empty()) {
        toml::array a;
        for (const auto& s : loss_masks) a.push_back(s);
        std::ostringstream os;
        os << a;
        f.items.push_back("loss.masks=" + os.str());
      }
      if (!loss_conv.empty()) f.add("loss.map_convention", loss_conv);
      const bs::RunConfig c = resolve(g, f);
      const bs::LossResult r = bs::run_loss(c);
      char buf[64];
      std::snprintf(buf, sizeof buf, "%.17g\n", r.loss);
      emit(g, bs::Json{{"command", "loss"}, {"loss", r.loss}, {"per_map", r.per_map}}, buf);
      return 0;
    }
    if (*vm) {
      const bs::TriangleMesh m = bs::read_mesh(mesh_path);
      const bs::ValidationReport v = bs::validate_mesh(m);
      bs::Json j = validation_json(v);
      j["command"] = "validate-mesh";
      j["mesh"] = mesh_path;
      emit(g, j, std::string(v.passes() ? "valid" : "INVALID") + ": " + v.summary() + "\n");
      return v.passes() ? 0 : 2;
    }
  } catch (const bs::Error& e) {
    if (g.json) {
      std::cout << bs::Json{{"error", e.what()}, {"exit_code", e.exit_code()}}.dump(2) << '\n';
    }
    std::cerr << "error: " << e.what() << '\n';
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return kExitUsage;
}
