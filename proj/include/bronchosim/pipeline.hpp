#pragma once

// End-to-end runs driven by a RunConfig. Tree t of a run uses seed
// run.seed + t; routes and jitter draw from streams keyed by (seed, tree,
// path), so adding paths or trees never changes the existing ones.

#include <memory>
#include <string>
#include <vector>

#include "bronchosim/config.hpp"
#include "bronchosim/dataset.hpp"
#include "bronchosim/mesh.hpp"
#include "bronchosim/mesh_io.hpp"
#include "bronchosim/mesh_validate.hpp"
#include "bronchosim/metrics.hpp"
#include "bronchosim/report.hpp"

namespace bronchosim {

inline constexpr std::uint64_t kRoutePurpose = 9;
inline constexpr std::uint64_t kJitterPurpose = 10;

inline AirwayTree build_tree(const RunConfig& c, int tree_index = 0) {
  GenerationParams p = c.tree;
  p.seed = static_cast<std::uint64_t>(c.run.seed) + static_cast<std::uint64_t>(tree_index);
  return sample_tree(p);
}

inline JitterParams jitter_for(const RunConfig& c, int tree_index, int path_index) {
  const auto& f = c.flythrough;
  return {f.max_yaw_deg,
          f.max_pitch_deg,
          f.max_roll_deg,
          f.max_offset_fraction,
          stream_key(static_cast<std::uint64_t>(c.run.seed), static_cast<std::uint64_t>(tree_index), kJitterPurpose,
                     static_cast<std::uint64_t>(path_index)),
          f.max_jitter_attempts};
}

inline std::vector<CameraPath> build_paths(const RunConfig& c, const AirwayTree& tree, const RayAccelerator& accel,
                                           int tree_index = 0) {
  std::vector<CameraPath> paths;
  for (int p = 0; p < c.flythrough.paths_per_tree; ++p) {
    const auto route = route_from_seed(
        tree, stream_key(static_cast<std::uint64_t>(c.run.seed), static_cast<std::uint64_t>(tree_index), kRoutePurpose,
                         static_cast<std::uint64_t>(p)));
    double step = c.flythrough.step;
    if (step == 0.0) {
      const auto [begin, end] = navigable_range(tree, route);
      step = (end - begin) / (c.flythrough.frames_per_path - 1);
    }
    paths.push_back(generate_flythrough(tree, accel, route, step, jitter_for(c, tree_index, p)));
  }
  return paths;
}

inline void write_run_config(const RunConfig& c, const std::string& dir) {
  detail::ensure_dir(dir);
  write_file((fs::path(dir) / kRunConfigFile).string(), config_to_toml(c));
}

struct GenerateResult {
  AirwayTree tree;
  TriangleMesh mesh;
  ValidationReport validation;
  std::vector<std::string> files;
};

/// Samples and tessellates one tree and writes tree.json plus the mesh
/// files selected in the config.
inline GenerateResult run_generate(const RunConfig& c) {
  GenerateResult r;
  r.tree = build_tree(c);
  r.mesh = tessellate(r.tree, c.mesh.tessellation);
  r.validation = validate_mesh(r.mesh);
  const fs::path out(c.run.output_dir);
  detail::ensure_dir(out);
  write_json((out / "tree.json").string(), tree_to_json(r.tree));
  r.files.push_back((out / "tree.json").string());
  if (c.mesh.write_obj) {
    write_obj((out / "mesh.obj").string(), r.mesh);
    r.files.push_back((out / "mesh.obj").string());
  }
  if (c.mesh.write_stl) {
    write_stl((out / "mesh.stl").string(), r.mesh);
    r.files.push_back((out / "mesh.stl").string());
  }
  write_run_config(c, c.run.output_dir);
  r.files.push_back((out / kRunConfigFile).string());
  return r;
}

/// Generates every tree of the run, flies its paths and renders the dataset.
inline DatasetManifest run_render(const RunConfig& c) {
  struct Scene {
    AirwayTree tree;
    TriangleMesh mesh;
    std::unique_ptr<RayAccelerator> accel;
  };
  std::vector<Scene> scenes(static_cast<std::size_t>(c.flythrough.trees));
  std::vector<DatasetSource> sources;
  Json trees = Json::array();
  for (int t = 0; t < c.flythrough.trees; ++t) {
    Scene& s = scenes[static_cast<std::size_t>(t)];
    s.tree = build_tree(c, t);
    s.mesh = tessellate(s.tree, c.mesh.tessellation);
    s.accel = std::make_unique<RayAccelerator>(s.mesh);
    sources.push_back({&s.tree, s.accel.get(), build_paths(c, s.tree, *s.accel, t)});
    Json jitters = Json::array();
    for (int p = 0; p < c.flythrough.paths_per_tree; ++p) jitters.push_back(jitter_for(c, t, p).seed);
    trees.push_back(Json{{"tree_seed", s.tree.params.seed}, {"jitter_seeds", jitters}});
  }
  DatasetOptions opt;
  opt.out_dir = c.run.output_dir;
  opt.camera = c.camera;
  opt.shading = c.shading;
  opt.mask_threshold = c.segmentation.threshold;
  opt.otsu_masks = c.segmentation.mode == "otsu";
  opt.write_masks = c.dataset.write_masks;
  opt.write_depth_png = c.dataset.write_depth_png;
  opt.depth_png_scale = c.dataset.depth_png_scale;
  opt.threads = c.run.threads;
  opt.generation = Json{{"run_seed", c.run.seed},
                        {"generation_parameters", c.tree},
                        {"params_hash", params_hash(c.tree)},
                        {"trees", trees},
                        {"run_config", kRunConfigFile}};
  DatasetManifest m = render_dataset(sources, opt);
  write_run_config(c, c.run.output_dir);
  return m;
}

inline EvalBundle load_run_bundle(const RunConfig& c) {
  const auto& e = c.evaluate;
  if (e.prediction.empty()) throw ParameterError("invalid parameter 'evaluate.prediction': required");
  const std::string gt_path = e.ground_truth.empty() ? e.prediction : e.ground_truth;
  const auto pred = frames_from(e.prediction, parse_convention(e.prediction_convention));
  const auto gt = frames_from(gt_path, parse_convention(e.ground_truth_convention));
  return load_eval_bundle(pred, gt, {e.allow_partial, false});
}

/// Evaluates the configured bundle and writes report.json, report.csv,
/// report.txt and the run configuration into run.output_dir.
inline MetricsReport run_evaluate(const RunConfig& c) {
  const EvalBundle b = load_run_bundle(c);
  EvalOptions opt;
  opt.adse = c.evaluate.adse;
  opt.classical = c.evaluate.classical;
  opt.median_alignment = c.evaluate.median_alignment;
  opt.adse_params = c.evaluate.adse_params;
  opt.threads = c.run.threads;
  MetricsReport r = evaluate_bundle(b, opt);
  const fs::path out(c.run.output_dir);
  detail::ensure_dir(out);
  Json j = report_to_json(r);
  Json dropped = Json::array();
  for (const auto& d : b.dropped) dropped.push_back(d);
  j["ingestion_dropped"] = dropped;
  write_json((out / "report.json").string(), j);
  write_file((out / "report.csv").string(), report_to_csv(r));
  write_file((out / "report.txt").string(), report_to_table(r));
  write_run_config(c, c.run.output_dir);
  return r;
}

struct LossResult {
  double loss = 0.0;
  std::vector<double> per_map;
};

/// Airway structure loss over the configured maps and masks.
inline LossResult run_loss(const RunConfig& c) {
  const auto& l = c.loss;
  if (l.maps.empty()) throw ParameterError("invalid parameter 'loss.maps': at least one map is required");
  if (l.maps.size() != l.masks.size())
    throw ParameterError("invalid parameter 'loss.masks': need one mask per map (" + std::to_string(l.maps.size()) +
                         " maps, " + std::to_string(l.masks.size()) + " masks)");
  const MapConvention conv = parse_convention(l.map_convention);
  std::vector<ImageF> maps;
  std::vector<Mask> masks;
  LossResult r;
  for (std::size_t i = 0; i < l.maps.size(); ++i) {
    maps.push_back(to_disparity(read_depth(l.maps[i], c.dataset.depth_png_scale), conv));
    masks.push_back(load_external_mask(l.masks[i], std::pair{maps.back().width, maps.back().height}).mask);
    r.per_map.push_back(airway_structure_loss(maps.back(), masks.back(), l.epsilon));
  }
  r.loss = airway_structure_loss(maps, masks, l.epsilon);
  if (!c.run.output_dir.empty()) {
    const fs::path out(c.run.output_dir);
    detail::ensure_dir(out);
    write_json((out / "loss.json").string(), Json{{"loss", r.loss}, {"per_map", r.per_map}, {"maps", l.maps}});
    write_run_config(c, c.run.output_dir);
  }
  return r;
}

}  // namespace bronchosim
