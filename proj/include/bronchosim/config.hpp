#pragma once

// RunConfig: every setting of a run, resolved from (lowest to highest
// priority) built-in defaults, a TOML file, BRONCHOSIM_<SECTION>_<KEY>
// environment variables and explicit `section.key=value` overrides.
// The resolved configuration serializes back to TOML; feeding that file to
// a later run reproduces its outputs.

#include <cstdint>
#include <cstdlib>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <toml.hpp>

#include "bronchosim/airway_model.hpp"
#include "bronchosim/dataset.hpp"
#include "bronchosim/error.hpp"
#include "bronchosim/flythrough.hpp"
#include "bronchosim/mesh.hpp"
#include "bronchosim/metrics.hpp"
#include "bronchosim/render.hpp"

extern char** environ;

namespace bronchosim {

inline constexpr const char* kEnvPrefix = "BRONCHOSIM_";
inline constexpr const char* kRunConfigFile = "run_config.toml";

struct RunConfig {
  struct Run {
    std::int64_t seed = 0;
    std::string output_dir = "bronchosim_out";
    int threads = 1;
  } run;

  GenerationParams tree = default_params(6, 0);

  struct MeshOut {
    TessellationParams tessellation;
    bool write_obj = true;
    bool write_stl = false;
  } mesh;

  Camera camera;
  ShadingParams shading;

  struct Flythrough {
    int trees = 1;
    int paths_per_tree = 1;
    int frames_per_path = 100;
    double step = 0.0;  // mm; 0 spaces frames_per_path poses over the route
    double max_yaw_deg = 10.0;
    double max_pitch_deg = 10.0;
    double max_roll_deg = 180.0;
    double max_offset_fraction = 0.3;
    int max_jitter_attempts = 32;
  } flythrough;

  struct Segmentation {
    std::string mode = "threshold";  // or "otsu"
    double threshold = kDefaultLumenThreshold;
  } segmentation;

  struct DatasetOut {
    double depth_png_scale = kDefaultDepthPngScale;
    bool write_depth_png = true;
    bool write_masks = true;
  } dataset;

  struct Evaluate {
    std::string prediction;
    std::string ground_truth;
    std::string prediction_convention = "depth";   // for directory layouts
    std::string ground_truth_convention = "depth";
    bool adse = true;
    bool classical = true;
    bool median_alignment = true;
    bool allow_partial = false;
    AdseParams adse_params;
  } evaluate;

  struct Loss {
    std::vector<std::string> maps;
    std::vector<std::string> masks;
    std::string map_convention = "disparity";
    double epsilon = kDefaultEpsilon;
  } loss;
};

namespace detail {

inline std::string config_key(std::string_view section, std::string_view key) {
  return std::string(section) + "." + std::string(key);
}

/// Reads typed values out of a table and records which keys were consumed,
/// so unknown keys can be reported.
class ConfigReader {
 public:
  explicit ConfigReader(const toml::table& t) : t_(t) {}

  template <class T>
  void get(std::string_view section, std::string_view key, T& out) {
    const std::string name = config_key(section, key);
    used_.insert(name);
    const toml::node* n = t_.at_path(name).node();
    if (!n) return;
    if constexpr (std::is_same_v<T, bool>) {
      if (auto v = n->value_exact<bool>()) {
        out = *v;
        return;
      }
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (auto v = n->value_exact<std::string>()) {
        out = *v;
        return;
      }
    } else if constexpr (std::is_integral_v<T>) {
      if (auto v = n->value_exact<std::int64_t>()) {
        if (*v < std::numeric_limits<T>::min() || *v > std::numeric_limits<T>::max())
          throw ParameterError("invalid parameter '" + name + "': out of range");
        out = static_cast<T>(*v);
        return;
      }
    } else if constexpr (std::is_floating_point_v<T>) {
      if (auto v = n->value<double>()) {
        out = *v;
        return;
      }
    } else if constexpr (std::is_same_v<T, std::vector<double>> || std::is_same_v<T, std::vector<std::string>>) {
      if (const toml::array* a = n->as_array()) {
        T vals;
        bool ok = true;
        for (const auto& e : *a) {
          if constexpr (std::is_same_v<T, std::vector<double>>) {
            auto v = e.value<double>();
            ok = ok && v.has_value();
            if (v) vals.push_back(*v);
          } else {
            auto v = e.value_exact<std::string>();
            ok = ok && v.has_value();
            if (v) vals.push_back(*v);
          }
        }
        if (ok) {
          out = std::move(vals);
          return;
        }
      }
    }
    throw ParameterError("invalid parameter '" + name + "': wrong type");
  }

  bool has(std::string_view section, std::string_view key) const {
    return t_.at_path(config_key(section, key)).node() != nullptr;
  }

  void reject_unknown() const {
    for (const auto& [sec, node] : t_) {
      const toml::table* st = node.as_table();
      if (!st) throw ParameterError("unknown configuration entry '" + std::string(sec.str()) + "'");
      for (const auto& [key, _] : *st) {
        const std::string name = config_key(sec.str(), key.str());
        if (!used_.count(name)) throw ParameterError("unknown configuration entry '" + name + "'");
      }
    }
  }

 private:
  const toml::table& t_;
  std::set<std::string> used_;
};

template <class T>
toml::array to_toml_array(const std::vector<T>& v) {
  toml::array a;
  for (const auto& x : v) a.push_back(x);
  return a;
}

}  // namespace detail

/// Builds a RunConfig from a merged table, filling derived per-generation
/// tables and validating every block.
inline RunConfig config_from_table(const toml::table& t) {
  RunConfig c;
  detail::ConfigReader r(t);
  r.get("run", "seed", c.run.seed);
  r.get("run", "output_dir", c.run.output_dir);
  r.get("run", "threads", c.run.threads);

  GenerationParams& p = c.tree;
  r.get("tree", "generations", p.generations);
  std::vector<double> h{p.h_range.lo, p.h_range.hi};
  r.get("tree", "h_range", h);
  if (h.size() != 2) throw ParameterError("invalid parameter 'tree.h_range': expected [lo, hi]");
  p.h_range = {h[0], h[1]};
  r.get("tree", "phi_max", p.phi_max);
  r.get("tree", "length_sigma_factor", p.length_sigma_factor);
  r.get("tree", "root_diameter", p.root_diameter);
  r.get("tree", "taper_steepness", p.taper.steepness);
  r.get("tree", "taper_midpoint", p.taper.midpoint);
  r.get("tree", "carina_rounding_factor", p.carina_rounding_factor);
  r.get("tree", "max_attempts", p.max_attempts);
  if (p.generations < 1) throw ParameterError("invalid parameter 'generations': must be >= 1");
  if (r.has("tree", "ld_ratio_per_gen")) {
    r.get("tree", "ld_ratio_per_gen", p.ld_ratio_per_gen);
  } else {
    p.ld_ratio_per_gen.clear();
    for (int g = 0; g < p.generations; ++g) p.ld_ratio_per_gen.push_back(default_ld_ratio(g));
  }
  if (r.has("tree", "l_mean_per_gen")) {
    r.get("tree", "l_mean_per_gen", p.l_mean_per_gen);
  } else {
    derive_mean_lengths(p);
  }
  p.seed = static_cast<std::uint64_t>(c.run.seed);

  TessellationParams& m = c.mesh.tessellation;
  r.get("mesh", "ring_segments", m.ring_segments);
  r.get("mesh", "rings_per_unit_length", m.rings_per_unit_length);
  r.get("mesh", "bifurcation_rings", m.bifurcation_rings);
  r.get("mesh", "write_obj", c.mesh.write_obj);
  r.get("mesh", "write_stl", c.mesh.write_stl);

  r.get("camera", "width", c.camera.width);
  r.get("camera", "height", c.camera.height);
  r.get("camera", "vertical_fov", c.camera.vertical_fov);
  r.get("camera", "near_clip", c.camera.near_clip);

  r.get("shading", "falloff_distance", c.shading.falloff_distance);
  r.get("shading", "wall_albedo", c.shading.wall_albedo);
  r.get("shading", "cap_albedo", c.shading.cap_albedo);
  r.get("shading", "smooth_normals", c.shading.smooth_normals);

  auto& f = c.flythrough;
  r.get("flythrough", "trees", f.trees);
  r.get("flythrough", "paths_per_tree", f.paths_per_tree);
  r.get("flythrough", "frames_per_path", f.frames_per_path);
  r.get("flythrough", "step", f.step);
  r.get("flythrough", "max_yaw_deg", f.max_yaw_deg);
  r.get("flythrough", "max_pitch_deg", f.max_pitch_deg);
  r.get("flythrough", "max_roll_deg", f.max_roll_deg);
  r.get("flythrough", "max_offset_fraction", f.max_offset_fraction);
  r.get("flythrough", "max_jitter_attempts", f.max_jitter_attempts);

  r.get("segmentation", "mode", c.segmentation.mode);
  r.get("segmentation", "threshold", c.segmentation.threshold);

  r.get("dataset", "depth_png_scale", c.dataset.depth_png_scale);
  r.get("dataset", "write_depth_png", c.dataset.write_depth_png);
  r.get("dataset", "write_masks", c.dataset.write_masks);

  auto& e = c.evaluate;
  r.get("evaluate", "prediction", e.prediction);
  r.get("evaluate", "ground_truth", e.ground_truth);
  r.get("evaluate", "prediction_convention", e.prediction_convention);
  r.get("evaluate", "ground_truth_convention", e.ground_truth_convention);
  r.get("evaluate", "adse", e.adse);
  r.get("evaluate", "classical", e.classical);
  r.get("evaluate", "median_alignment", e.median_alignment);
  r.get("evaluate", "allow_partial", e.allow_partial);
  r.get("evaluate", "epsilon", e.adse_params.epsilon);
  r.get("evaluate", "local_threshold", e.adse_params.local_threshold);
  r.get("evaluate", "contrast_threshold", e.adse_params.contrast_threshold);
  r.get("evaluate", "min_tolerance", e.adse_params.min_tolerance);
  r.get("evaluate", "sample_sigma", e.adse_params.sample_sigma);

  r.get("loss", "maps", c.loss.maps);
  r.get("loss", "masks", c.loss.masks);
  r.get("loss", "map_convention", c.loss.map_convention);
  r.get("loss", "epsilon", c.loss.epsilon);

  r.reject_unknown();

  if (c.run.seed < 0) throw ParameterError("invalid parameter 'run.seed': must be >= 0");
  if (c.run.threads < 0) throw ParameterError("invalid parameter 'run.threads': must be >= 0");
  validate(c.tree);
  validate(m);
  validate(c.camera);
  validate(c.shading);
  if (f.trees < 1) throw ParameterError("invalid parameter 'flythrough.trees': must be >= 1");
  if (f.paths_per_tree < 1) throw ParameterError("invalid parameter 'flythrough.paths_per_tree': must be >= 1");
  if (f.step < 0.0) throw ParameterError("invalid parameter 'flythrough.step': must be >= 0");
  if (f.step == 0.0 && f.frames_per_path < 2)
    throw ParameterError("invalid parameter 'flythrough.frames_per_path': must be >= 2");
  validate(JitterParams{f.max_yaw_deg, f.max_pitch_deg, f.max_roll_deg, f.max_offset_fraction, 0,
                        f.max_jitter_attempts});
  if (c.segmentation.mode != "threshold" && c.segmentation.mode != "otsu")
    throw ParameterError("invalid parameter 'segmentation.mode': expected threshold or otsu");
  if (!(c.segmentation.threshold >= 0.0 && c.segmentation.threshold <= 1.0))
    throw ParameterError("invalid parameter 'segmentation.threshold': must lie in [0, 1]");
  if (!(c.dataset.depth_png_scale > 0.0))
    throw ParameterError("invalid parameter 'dataset.depth_png_scale': must be > 0");
  parse_convention(e.prediction_convention);
  parse_convention(e.ground_truth_convention);
  parse_convention(c.loss.map_convention);
  if (!(e.adse_params.epsilon > 0.0)) throw ParameterError("invalid parameter 'evaluate.epsilon': must be > 0");
  if (!(c.loss.epsilon > 0.0)) throw ParameterError("invalid parameter 'loss.epsilon': must be > 0");
  return c;
}

inline toml::table config_to_table(const RunConfig& c) {
  using detail::to_toml_array;
  const GenerationParams& p = c.tree;
  const auto& f = c.flythrough;
  const auto& e = c.evaluate;
  return toml::table{
      {"run", toml::table{{"seed", c.run.seed}, {"output_dir", c.run.output_dir}, {"threads", c.run.threads}}},
      {"tree", toml::table{{"generations", p.generations},
                           {"root_diameter", p.root_diameter},
                           {"h_range", toml::array{p.h_range.lo, p.h_range.hi}},
                           {"phi_max", p.phi_max},
                           {"length_sigma_factor", p.length_sigma_factor},
                           {"ld_ratio_per_gen", to_toml_array(p.ld_ratio_per_gen)},
                           {"l_mean_per_gen", to_toml_array(p.l_mean_per_gen)},
                           {"taper_steepness", p.taper.steepness},
                           {"taper_midpoint", p.taper.midpoint},
                           {"carina_rounding_factor", p.carina_rounding_factor},
                           {"max_attempts", p.max_attempts}}},
      {"mesh", toml::table{{"ring_segments", c.mesh.tessellation.ring_segments},
                           {"rings_per_unit_length", c.mesh.tessellation.rings_per_unit_length},
                           {"bifurcation_rings", c.mesh.tessellation.bifurcation_rings},
                           {"write_obj", c.mesh.write_obj},
                           {"write_stl", c.mesh.write_stl}}},
      {"camera", toml::table{{"width", c.camera.width},
                             {"height", c.camera.height},
                             {"vertical_fov", c.camera.vertical_fov},
                             {"near_clip", c.camera.near_clip}}},
      {"shading", toml::table{{"falloff_distance", c.shading.falloff_distance},
                              {"wall_albedo", c.shading.wall_albedo},
                              {"cap_albedo", c.shading.cap_albedo},
                              {"smooth_normals", c.shading.smooth_normals}}},
      {"flythrough", toml::table{{"trees", f.trees},
                                 {"paths_per_tree", f.paths_per_tree},
                                 {"frames_per_path", f.frames_per_path},
                                 {"step", f.step},
                                 {"max_yaw_deg", f.max_yaw_deg},
                                 {"max_pitch_deg", f.max_pitch_deg},
                                 {"max_roll_deg", f.max_roll_deg},
                                 {"max_offset_fraction", f.max_offset_fraction},
                                 {"max_jitter_attempts", f.max_jitter_attempts}}},
      {"segmentation", toml::table{{"mode", c.segmentation.mode}, {"threshold", c.segmentation.threshold}}},
      {"dataset", toml::table{{"depth_png_scale", c.dataset.depth_png_scale},
                              {"write_depth_png", c.dataset.write_depth_png},
                              {"write_masks", c.dataset.write_masks}}},
      {"evaluate", toml::table{{"prediction", e.prediction},
                               {"ground_truth", e.ground_truth},
                               {"prediction_convention", e.prediction_convention},
                               {"ground_truth_convention", e.ground_truth_convention},
                               {"adse", e.adse},
                               {"classical", e.classical},
                               {"median_alignment", e.median_alignment},
                               {"allow_partial", e.allow_partial},
                               {"epsilon", e.adse_params.epsilon},
                               {"local_threshold", e.adse_params.local_threshold},
                               {"contrast_threshold", e.adse_params.contrast_threshold},
                               {"min_tolerance", e.adse_params.min_tolerance},
                               {"sample_sigma", e.adse_params.sample_sigma}}},
      {"loss", toml::table{{"maps", to_toml_array(c.loss.maps)},
                           {"masks", to_toml_array(c.loss.masks)},
                           {"map_convention", c.loss.map_convention},
                           {"epsilon", c.loss.epsilon}}},
  };
}

inline std::string config_to_toml(const RunConfig& c) {
  std::ostringstream os;
  os << config_to_table(c) << '\n';
  return os.str();
}

inline toml::table parse_toml(const std::string& text, const std::string& source) {
  try {
    return toml::parse(text, source);
  } catch (const toml::parse_error& e) {
    std::ostringstream os;
    os << source << ":" << e.source().begin.line << ":" << e.source().begin.column << ": " << e.description();
    throw FormatError(os.str());
  }
}

/// Sets `section.key` from text. The text is read as a TOML value when it
/// parses as one and as a bare string otherwise, so `7`, `0.5`, `true`,
/// `[1, 2]` and `out/dir` all do what one expects.
inline void apply_override(toml::table& t, const std::string& dotted, const std::string& text) {
  const auto dot = dotted.find('.');
  if (dot == std::string::npos || dot == 0 || dot + 1 == dotted.size())
    throw ParameterError("override '" + dotted + "' must have the form section.key");
  const std::string section = dotted.substr(0, dot);
  const std::string key = dotted.substr(dot + 1);
  if (!t.contains(section)) t.insert(section, toml::table{});
  toml::table* st = t[section].as_table();
  if (!st) throw ParameterError("override '" + dotted + "': '" + section + "' is not a section");
  toml::table parsed;
  bool ok = true;
  try {
    parsed = toml::parse("v = " + text);
  } catch (const toml::parse_error&) {
    ok = false;
  }
  if (ok && parsed.contains("v")) {
    st->insert_or_assign(key, *parsed.get("v"));
  } else {
    st->insert_or_assign(key, text);
  }
}

/// Applies `section.key=value` entries in order.
inline void apply_overrides(toml::table& t, const std::vector<std::string>& assignments) {
  for (const auto& a : assignments) {
    const auto eq = a.find('=');
    if (eq == std::string::npos) throw ParameterError("override '" + a + "' must have the form section.key=value");
    apply_override(t, a.substr(0, eq), a.substr(eq + 1));
  }
}

/// Collects BRONCHOSIM_<SECTION>_<KEY>=value pairs as `section.key=value`,
/// sorted for a deterministic application order.
inline std::vector<std::string> environment_overrides(char** env = environ) {
  std::vector<std::string> out;
  const std::string prefix = kEnvPrefix;
  for (char** e = env; e && *e; ++e) {
    const std::string entry = *e;
    if (entry.rfind(prefix, 0) != 0) continue;
    const auto eq = entry.find('=');
    if (eq == std::string::npos) continue;
    std::string name = entry.substr(prefix.size(), eq - prefix.size());
    for (char& ch : name) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    const auto us = name.find('_');
    if (us == std::string::npos) continue;
    name[us] = '.';
    out.push_back(name + "=" + entry.substr(eq + 1));
  }
  std::sort(out.begin(), out.end());
  return out;
}

/// Resolves a configuration: TOML file (optional), then environment, then
/// explicit overrides.
inline RunConfig resolve_config(const std::string& config_path, const std::vector<std::string>& overrides,
                                char** env = environ) {
  toml::table t;
  if (!config_path.empty()) t = parse_toml(read_file(config_path), config_path);
  apply_overrides(t, environment_overrides(env));
  apply_overrides(t, overrides);
  return config_from_table(t);
}

}  // namespace bronchosim
