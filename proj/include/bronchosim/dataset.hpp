#pragma once

// Dataset layout written by render_dataset:
//
//   <out>/manifest.json
//   <out>/trees/tree_<t>.json
//   <out>/poses/tree_<t>_path_<p>.json      route + 4x4 row-major poses
//   <out>/frames/<frame>_image.png          8-bit grayscale
//   <out>/frames/<frame>_depth.pfm          float32 z-depth, mm
//   <out>/frames/<frame>_depth.png          16-bit, mm * depth_png_scale
//   <out>/frames/<frame>_mask.png           8-bit lumen mask (0/255)
//
// Manifest paths are relative to the manifest's directory.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "bronchosim/airway_model.hpp"
#include "bronchosim/bvh.hpp"
#include "bronchosim/error.hpp"
#include "bronchosim/flythrough.hpp"
#include "bronchosim/image.hpp"
#include "bronchosim/metrics.hpp"
#include "bronchosim/parallel.hpp"
#include "bronchosim/pfm.hpp"
#include "bronchosim/png_io.hpp"
#include "bronchosim/render.hpp"
#include "bronchosim/segmentation.hpp"
#include "bronchosim/tree_json.hpp"

namespace bronchosim {

namespace fs = std::filesystem;

enum class MapConvention { depth, disparity };

inline const char* to_string(MapConvention c) { return c == MapConvention::depth ? "depth" : "disparity"; }

inline MapConvention parse_convention(const std::string& s) {
  if (s == "depth") return MapConvention::depth;
  if (s == "disparity") return MapConvention::disparity;
  throw FormatError("unknown map convention '" + s + "' (expected depth or disparity)");
}

inline constexpr const char* kManifestVersion = "1";
inline constexpr double kDefaultDepthPngScale = 100.0;  // units per mm

// ---------------------------------------------------------------------------
// Depth maps

inline Image<std::uint16_t> encode_depth16(const ImageF& depth, double scale) {
  Image<std::uint16_t> out(depth.width, depth.height);
  for (std::size_t i = 0; i < depth.size(); ++i) {
    const double v = depth[i] * scale;
    out[i] = std::isfinite(v) ? static_cast<std::uint16_t>(std::clamp(std::round(v), 0.0, 65535.0)) : 0;
  }
  return out;
}

/// Reads a PFM or 16-bit PNG depth map; PNG samples are divided by `png_scale`.
inline ImageF read_depth(const std::string& path, double png_scale = kDefaultDepthPngScale) {
  const std::string ext = fs::path(path).extension().string();
  if (ext == ".pfm" || ext == ".PFM") return read_pfm(path);
  if (ext == ".png" || ext == ".PNG") {
    if (!(png_scale > 0.0)) throw ParameterError("invalid parameter 'depth_png_scale': must be > 0");
    const PngData d = read_png(path);
    if (d.channels != 1) throw FormatError(path + ": depth PNG must be single-channel");
    ImageF out(d.width, d.height);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = d.samples[i] / png_scale;
    return out;
  }
  throw FormatError(path + ": unknown depth map extension '" + ext + "' (expected .pfm or .png)");
}

inline void write_json(const std::string& path, const Json& j) { write_file(path, j.dump(2) + "\n"); }

inline Json read_json(const std::string& path) {
  const std::string text = read_file(path);
  try {
    return Json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw FormatError(path + ": JSON parse error at byte " + std::to_string(e.byte) + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Manifest

struct ManifestFrame {
  int frame_index = 0;
  int tree_index = 0;
  int path_index = 0;
  int pose_index = 0;
  std::string image_path;
  std::string depth_path;
  std::string depth_png_path;  // optional
  std::string pose_path;
  std::string mask_path;       // optional
  MapConvention convention = MapConvention::depth;
};

struct ManifestTree {
  std::string tree_path;
  std::uint64_t seed = 0;
  std::string params_hash;
  std::vector<std::string> pose_paths;
};

struct DatasetManifest {
  std::string format_version = kManifestVersion;
  std::vector<ManifestFrame> frames;
  std::vector<ManifestTree> trees;
  double depth_png_scale = kDefaultDepthPngScale;
  Json generation = Json::object();  // free-form metadata: seeds, parameters
  fs::path root;                     // directory the relative paths resolve against

  std::string resolve(const std::string& rel) const { return rel.empty() ? rel : (root / rel).string(); }
};

inline Json manifest_to_json(const DatasetManifest& m) {
  Json frames = Json::array();
  for (const auto& f : m.frames) {
    Json j{{"frame_index", f.frame_index},
           {"tree_index", f.tree_index},
           {"path_index", f.path_index},
           {"pose_index", f.pose_index},
           {"image_path", f.image_path},
           {"depth_path", f.depth_path},
           {"disparity_convention", to_string(f.convention)},
           {"pose_path", f.pose_path}};
    if (!f.depth_png_path.empty()) j["depth_png_path"] = f.depth_png_path;
    if (!f.mask_path.empty()) j["mask_path"] = f.mask_path;
    frames.push_back(std::move(j));
  }
  Json trees = Json::array();
  for (const auto& t : m.trees)
    trees.push_back(Json{{"tree_path", t.tree_path},
                         {"seed", t.seed},
                         {"params_hash", t.params_hash},
                         {"pose_paths", t.pose_paths}});
  return Json{{"format_version", m.format_version},
              {"formats",
               {{"image", "png8 grayscale"},
                {"depth", "pfm float32 little-endian, z-depth in mm"},
                {"depth_png", "png16, mm * depth_png_scale"},
                {"depth_png_scale", m.depth_png_scale},
                {"mask", "png8, 255 = lumen"},
                {"pose", "json, 4x4 row-major camera-to-world, x right, y down, z forward"}}},
              {"generation", m.generation},
              {"trees", trees},
              {"frames", frames}};
}

/// Parses a manifest and checks that every referenced file exists.
inline DatasetManifest load_manifest(const std::string& path) {
  const Json j = read_json(path);
  DatasetManifest m;
  m.root = fs::path(path).parent_path();
  try {
    m.format_version = j.at("format_version").get<std::string>();
    if (m.format_version != kManifestVersion)
      throw FormatError(path + ": unsupported manifest format_version '" + m.format_version + "'");
    if (j.contains("formats")) m.depth_png_scale = j["formats"].value("depth_png_scale", m.depth_png_scale);
    m.generation = j.value("generation", Json::object());
    for (const auto& t : j.value("trees", Json::array())) {
      ManifestTree mt;
      mt.tree_path = t.at("tree_path").get<std::string>();
      mt.seed = t.at("seed").get<std::uint64_t>();
      mt.params_hash = t.at("params_hash").get<std::string>();
      mt.pose_paths = t.at("pose_paths").get<std::vector<std::string>>();
      m.trees.push_back(std::move(mt));
    }
    for (const auto& f : j.at("frames")) {
      ManifestFrame mf;
      mf.frame_index = f.at("frame_index").get<int>();
      mf.tree_index = f.value("tree_index", 0);
      mf.path_index = f.value("path_index", 0);
      mf.pose_index = f.value("pose_index", 0);
      mf.image_path = f.value("image_path", std::string{});
      mf.depth_path = f.at("depth_path").get<std::string>();
      mf.depth_png_path = f.value("depth_png_path", std::string{});
      mf.pose_path = f.value("pose_path", std::string{});
      mf.mask_path = f.value("mask_path", std::string{});
      mf.convention = parse_convention(f.value("disparity_convention", std::string("depth")));
      m.frames.push_back(std::move(mf));
    }
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path + ": malformed manifest: " + e.what());
  }
  std::vector<std::string> missing;
  auto check = [&](const std::string& rel, const std::string& what, int frame) {
    if (!rel.empty() && !fs::exists(m.resolve(rel)))
      missing.push_back("frame " + std::to_string(frame) + " " + what + " " + m.resolve(rel));
  };
  for (const auto& f : m.frames) {
    check(f.image_path, "image", f.frame_index);
    check(f.depth_path, "depth", f.frame_index);
    check(f.depth_png_path, "depth_png", f.frame_index);
    check(f.pose_path, "pose", f.frame_index);
    check(f.mask_path, "mask", f.frame_index);
  }
  for (const auto& t : m.trees) check(t.tree_path, "tree", -1);
  if (!missing.empty()) {
    std::string msg = path + ": " + std::to_string(missing.size()) + " referenced files are missing:";
    for (const auto& s : missing) msg += "\n  " + s;
    throw IngestionError(msg);
  }
  return m;
}

// ---------------------------------------------------------------------------
// Rendering a dataset

struct DatasetSource {
  const AirwayTree* tree = nullptr;
  const RayAccelerator* accel = nullptr;
  std::vector<CameraPath> paths;
};

struct DatasetOptions {
  std::string out_dir;
  Camera camera;  // intrinsics; the pose is taken from each path
  ShadingParams shading;
  double mask_threshold = kDefaultLumenThreshold;
  bool otsu_masks = false;
  bool write_masks = true;
  bool write_depth_png = true;
  double depth_png_scale = kDefaultDepthPngScale;
  int threads = 1;
  Json generation = Json::object();
};

namespace detail {

inline std::string frame_stem(int frame) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06d", frame);
  return buf;
}

inline void ensure_dir(const fs::path& p) {
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw IoError(p.string(), "cannot create directory: " + ec.message());
}

inline Json path_to_json(const CameraPath& path) {
  Json poses = Json::array();
  for (const Frame& f : path.poses) poses.push_back(f);
  return Json{{"route", path.target_segment_ids},
              {"pose_segment", path.pose_segment},
              {"pose_arclength", path.pose_arclength},
              {"poses", poses}};
}

}  // namespace detail

/// Renders every pose of every path and writes the files and manifest.
/// Frames are indexed in (tree, path, pose) order; the output does not
/// depend on the thread count.
inline DatasetManifest render_dataset(const std::vector<DatasetSource>& sources, const DatasetOptions& opt) {
  validate(opt.camera);
  validate(opt.shading);
  const fs::path root(opt.out_dir);
  detail::ensure_dir(root / "frames");
  detail::ensure_dir(root / "poses");
  detail::ensure_dir(root / "trees");

  DatasetManifest m;
  m.root = root;
  m.depth_png_scale = opt.depth_png_scale;
  m.generation = opt.generation;

  struct Job {
    std::size_t source;
    std::size_t path;
    std::size_t pose;
  };
  std::vector<Job> jobs;
  for (std::size_t s = 0; s < sources.size(); ++s) {
    const DatasetSource& src = sources[s];
    if (!src.tree || !src.accel) throw InputError("render_dataset: source " + std::to_string(s) + " is incomplete");
    ManifestTree mt;
    mt.tree_path = "trees/tree_" + std::to_string(s) + ".json";
    mt.seed = src.tree->params.seed;
    mt.params_hash = params_hash(src.tree->params);
    write_json(m.resolve(mt.tree_path), tree_to_json(*src.tree));
    for (std::size_t p = 0; p < src.paths.size(); ++p) {
      const std::string pose_path = "poses/tree_" + std::to_string(s) + "_path_" + std::to_string(p) + ".json";
      write_json(m.resolve(pose_path), detail::path_to_json(src.paths[p]));
      mt.pose_paths.push_back(pose_path);
      for (std::size_t k = 0; k < src.paths[p].poses.size(); ++k) {
        ManifestFrame f;
        f.frame_index = static_cast<int>(jobs.size());
        f.tree_index = static_cast<int>(s);
        f.path_index = static_cast<int>(p);
        f.pose_index = static_cast<int>(k);
        const std::string stem = "frames/" + detail::frame_stem(f.frame_index);
        f.image_path = stem + "_image.png";
        f.depth_path = stem + "_depth.pfm";
        if (opt.write_depth_png) f.depth_png_path = stem + "_depth.png";
        if (opt.write_masks) f.mask_path = stem + "_mask.png";
        f.pose_path = pose_path;
        m.frames.push_back(std::move(f));
        jobs.push_back({s, p, k});
      }
    }
    m.trees.push_back(std::move(mt));
  }

  parallel_for(jobs.size(), opt.threads, [&](std::size_t i) {
    const Job& job = jobs[i];
    const DatasetSource& src = sources[job.source];
    Camera cam = opt.camera;
    cam.pose = src.paths[job.path].poses[job.pose];
    const FrameSample fs_ = render_frame(*src.accel, cam, opt.shading, 1, static_cast<int>(i));
    const ManifestFrame& mf = m.frames[i];
    write_png_gray8(m.resolve(mf.image_path), quantize8(fs_.image));
    write_pfm(m.resolve(mf.depth_path), fs_.depth);
    if (opt.write_depth_png) write_png_gray16(m.resolve(mf.depth_png_path), encode_depth16(fs_.depth, opt.depth_png_scale));
    if (opt.write_masks) {
      const LumenMask lm = opt.otsu_masks ? otsu_mask(fs_.image) : airway_mask(fs_.image, opt.mask_threshold);
      write_mask_png(m.resolve(mf.mask_path), lm.mask);
    }
  });
  write_json((root / "manifest.json").string(), manifest_to_json(m));
  return m;
}

// ---------------------------------------------------------------------------
// Evaluation bundles

/// One map of a prediction or ground-truth set.
struct FrameRef {
  std::string id;
  std::string map_path;
  MapConvention convention = MapConvention::depth;
  std::string mask_path;  // optional lumen mask
  double png_scale = kDefaultDepthPngScale;
};

inline std::vector<FrameRef> frames_from_manifest(const std::string& manifest_path) {
  const DatasetManifest m = load_manifest(manifest_path);
  std::vector<FrameRef> out;
  for (const auto& f : m.frames)
    out.push_back({detail::frame_stem(f.frame_index), m.resolve(f.depth_path), f.convention,
                   m.resolve(f.mask_path), m.depth_png_scale});
  return out;
}

/// Directory layout: every *.pfm / *.png in `dir` is a map keyed by its
/// stem; an optional `dir/masks/<stem>.png` supplies the lumen mask.
inline std::vector<FrameRef> frames_from_directory(const std::string& dir, MapConvention convention,
                                                   double png_scale = kDefaultDepthPngScale) {
  if (!fs::is_directory(dir)) throw IoError(dir, "not a directory");
  std::vector<FrameRef> out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (!e.is_regular_file()) continue;
    const std::string ext = e.path().extension().string();
    if (ext != ".pfm" && ext != ".png") continue;
    FrameRef r;
    r.id = e.path().stem().string();
    r.map_path = e.path().string();
    r.convention = convention;
    r.png_scale = png_scale;
    const fs::path mask = fs::path(dir) / "masks" / (r.id + ".png");
    if (fs::exists(mask)) r.mask_path = mask.string();
    out.push_back(std::move(r));
  }
  std::sort(out.begin(), out.end(), [](const FrameRef& a, const FrameRef& b) { return a.id < b.id; });
  return out;
}

/// Manifest file or directory layout, chosen by what `path` is.
inline std::vector<FrameRef> frames_from(const std::string& path, MapConvention dir_convention) {
  if (fs::is_directory(path)) {
    if (fs::exists(fs::path(path) / "manifest.json"))
      return frames_from_manifest((fs::path(path) / "manifest.json").string());
    return frames_from_directory(path, dir_convention);
  }
  return frames_from_manifest(path);
}

struct EvalFrame {
  std::string id;
  ImageF prediction;
  MapConvention prediction_convention = MapConvention::depth;
  ImageF ground_truth;
  MapConvention ground_truth_convention = MapConvention::depth;
  std::optional<Mask> lumen;
  Mask valid;  // finite, positive ground truth and finite prediction
};

struct EvalBundle {
  std::vector<EvalFrame> frames;
  std::vector<std::string> dropped;  // itemized problems of dropped frames (partial bundles)
};

struct BundleOptions {
  bool allow_partial = false;
  bool require_masks = false;
};

inline ImageF to_depth(const ImageF& map, MapConvention c) { return c == MapConvention::depth ? map : invert_depth(map); }
inline ImageF to_disparity(const ImageF& map, MapConvention c) {
  return c == MapConvention::disparity ? map : invert_depth(map);
}

/// Pairs predictions with ground truth by frame id and validates every pair
/// before any metric runs. Lumen masks come from the ground-truth side, or
/// from the prediction side when the ground truth has none. Problems are
/// collected and reported together.
inline EvalBundle load_eval_bundle(const std::vector<FrameRef>& predictions, const std::vector<FrameRef>& ground_truth,
                                   const BundleOptions& opt = {}) {
  std::map<std::string, const FrameRef*> gt_by_id;
  for (const auto& g : ground_truth) gt_by_id[g.id] = &g;
  // Masks are all-or-nothing: once any frame supplies one, a frame
  // without one is a missing pair member.
  bool any_mask = opt.require_masks;
  for (const auto& r : predictions) any_mask = any_mask || !r.mask_path.empty();
  for (const auto& r : ground_truth) any_mask = any_mask || !r.mask_path.empty();
  std::set<std::string> seen;
  EvalBundle b;
  std::vector<std::string> problems;
  for (const auto& p : predictions) {
    seen.insert(p.id);
    const auto it = gt_by_id.find(p.id);
    if (it == gt_by_id.end()) {
      problems.push_back("frame " + p.id + ": no ground truth");
      continue;
    }
    const FrameRef& g = *it->second;
    EvalFrame f;
    f.id = p.id;
    f.prediction = read_depth(p.map_path, p.png_scale);
    f.prediction_convention = p.convention;
    f.ground_truth = read_depth(g.map_path, g.png_scale);
    f.ground_truth_convention = g.convention;
    if (!f.prediction.same_shape(f.ground_truth)) {
      problems.push_back("frame " + p.id + ": prediction " + std::to_string(f.prediction.width) + "x" +
                         std::to_string(f.prediction.height) + " vs ground truth " +
                         std::to_string(f.ground_truth.width) + "x" + std::to_string(f.ground_truth.height));
      continue;
    }
    const std::string mask_path = !g.mask_path.empty() ? g.mask_path : p.mask_path;
    if (!mask_path.empty()) {
      if (!fs::exists(mask_path)) {
        problems.push_back("frame " + p.id + ": mask missing: " + mask_path);
        continue;
      }
      try {
        f.lumen = load_external_mask(mask_path, std::pair{f.ground_truth.width, f.ground_truth.height}).mask;
      } catch (const IngestionError& e) {
        problems.push_back("frame " + p.id + ": " + e.what());
        continue;
      }
    } else if (any_mask) {
      problems.push_back("frame " + p.id + ": no lumen mask");
      continue;
    }
    f.valid = Mask(f.ground_truth.width, f.ground_truth.height);
    for (std::size_t i = 0; i < f.valid.size(); ++i)
      f.valid[i] = std::isfinite(f.ground_truth[i]) && f.ground_truth[i] > 0.0 && std::isfinite(f.prediction[i]);
    b.frames.push_back(std::move(f));
  }
  for (const auto& g : ground_truth)
    if (!seen.count(g.id)) problems.push_back("frame " + g.id + ": no prediction");
  if (!problems.empty() && !opt.allow_partial) {
    std::string msg = "evaluation bundle rejected (" + std::to_string(problems.size()) + " problems):";
    for (const auto& s : problems) msg += "\n  " + s;
    throw IngestionError(msg);
  }
  b.dropped = std::move(problems);
  if (b.frames.empty()) throw IngestionError("evaluation bundle has no usable frames");
  return b;
}

struct EvalOptions {
  bool adse = true;
  bool classical = true;
  bool median_alignment = true;
  AdseParams adse_params;
  int threads = 1;
};

/// Per-frame ADSE on prediction disparity and classical metrics on depth,
/// then aggregation.
inline MetricsReport evaluate_bundle(const EvalBundle& b, const EvalOptions& opt = {}) {
  std::vector<FrameMetrics> frames(b.frames.size());
  parallel_for(b.frames.size(), opt.threads, [&](std::size_t i) {
    const EvalFrame& f = b.frames[i];
    FrameMetrics& out = frames[i];
    out.frame_id = f.id;
    if (opt.adse) {
      if (f.lumen) {
        AdseParams ap = opt.adse_params;
        ap.input_is_depth = false;
        out.adse = adse_frame(to_disparity(f.prediction, f.prediction_convention), *f.lumen, ap);
      } else {
        AdseFrameResult skipped;
        skipped.skipped = true;
        skipped.skip_reason = "no lumen mask";
        out.adse = skipped;
      }
    }
    if (opt.classical) {
      try {
        const ImageF pred = to_depth(f.prediction, f.prediction_convention);
        const ImageF gt = to_depth(f.ground_truth, f.ground_truth_convention);
        out.classical = opt.median_alignment ? aligned_classical_metrics(pred, gt, f.valid)
                                             : classical_metrics(pred, gt, f.valid);
      } catch (const Error& e) {
        if (!out.adse || out.adse->skipped) out.skip_reason = e.what();
      }
    }
  });
  return aggregate(std::move(frames));
}

}  // namespace bronchosim
