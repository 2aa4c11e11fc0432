#pragma once

// JSON encodings of trees, parameters and poses. Doubles are written with
// round-trip precision, so decode(encode(x)) == x.

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "bronchosim/airway_model.hpp"
#include "bronchosim/error.hpp"
#include "bronchosim/geometry.hpp"

namespace bronchosim {

using Json = nlohmann::ordered_json;

inline void to_json(Json& j, const Vec2& v) { j = Json::array({v.x, v.y}); }
inline void from_json(const Json& j, Vec2& v) { v = {j.at(0).get<double>(), j.at(1).get<double>()}; }
inline void to_json(Json& j, const Vec3& v) { j = Json::array({v.x, v.y, v.z}); }
inline void from_json(const Json& j, Vec3& v) {
  v = {j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>()};
}

/// Frames are stored as 4x4 row-major homogeneous matrices.
inline void to_json(Json& j, const Frame& f) { j = to_matrix(f); }
inline void from_json(const Json& j, Frame& f) { f = from_matrix(j.get<std::array<double, 16>>()); }

inline void to_json(Json& j, const Interval& i) { j = Json::array({i.lo, i.hi}); }
inline void from_json(const Json& j, Interval& i) { i = {j.at(0).get<double>(), j.at(1).get<double>()}; }

inline void to_json(Json& j, const SigmoidTaper& t) {
  j = Json{{"steepness", t.steepness}, {"midpoint", t.midpoint}};
}
inline void from_json(const Json& j, SigmoidTaper& t) {
  t.steepness = j.value("steepness", t.steepness);
  t.midpoint = j.value("midpoint", t.midpoint);
}

inline void to_json(Json& j, const GenerationParams& p) {
  j = Json{{"generations", p.generations},
           {"ld_ratio_per_gen", p.ld_ratio_per_gen},
           {"h_range", p.h_range},
           {"phi_max", p.phi_max},
           {"length_sigma_factor", p.length_sigma_factor},
           {"root_diameter", p.root_diameter},
           {"l_mean_per_gen", p.l_mean_per_gen},
           {"seed", p.seed},
           {"taper", p.taper},
           {"carina_rounding_factor", p.carina_rounding_factor},
           {"max_attempts", p.max_attempts}};
}
inline void from_json(const Json& j, GenerationParams& p) {
  p.generations = j.at("generations").get<int>();
  p.ld_ratio_per_gen = j.at("ld_ratio_per_gen").get<std::vector<double>>();
  p.h_range = j.at("h_range").get<Interval>();
  p.phi_max = j.at("phi_max").get<double>();
  p.length_sigma_factor = j.at("length_sigma_factor").get<double>();
  p.root_diameter = j.at("root_diameter").get<double>();
  p.l_mean_per_gen = j.at("l_mean_per_gen").get<std::vector<double>>();
  p.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("taper")) p.taper = j.at("taper").get<SigmoidTaper>();
  p.carina_rounding_factor = j.value("carina_rounding_factor", p.carina_rounding_factor);
  p.max_attempts = j.value("max_attempts", p.max_attempts);
}

inline void to_json(Json& j, const AirwaySegment& s) {
  j = Json{{"id", s.id},
           {"parent_id", s.parent_id ? Json(*s.parent_id) : Json(nullptr)},
           {"generation", s.generation},
           {"diameter", s.diameter},
           {"length", s.length},
           {"twist", s.twist},
           {"bend_angle", s.bend_angle},
           {"bend_radius", s.bend_radius},
           {"start_radius", s.start_radius},
           {"frame", s.frame}};
}
inline void from_json(const Json& j, AirwaySegment& s) {
  s.id = j.at("id").get<int>();
  if (j.at("parent_id").is_null()) {
    s.parent_id.reset();
  } else {
    s.parent_id = j.at("parent_id").get<int>();
  }
  s.generation = j.at("generation").get<int>();
  s.diameter = j.at("diameter").get<double>();
  s.length = j.at("length").get<double>();
  s.twist = j.at("twist").get<double>();
  s.bend_angle = j.at("bend_angle").get<double>();
  s.bend_radius = j.at("bend_radius").get<double>();
  s.start_radius = j.at("start_radius").get<double>();
  s.frame = j.at("frame").get<Frame>();
}

inline void to_json(Json& j, const BifurcationGeometry& b) {
  j = Json{{"parent_id", b.parent_id},
           {"daughter_a", b.daughter_a},
           {"daughter_b", b.daughter_b},
           {"phi_a", b.phi_a},
           {"phi_b", b.phi_b},
           {"phi_min", b.phi_min},
           {"r_star_a", b.r_star_a},
           {"r_star_b", b.r_star_b},
           {"carina_center", b.carina_center},
           {"r_c", b.r_c},
           {"tilt_a", b.tilt_a},
           {"tilt_b", b.tilt_b},
           {"taper", b.taper},
           {"sagittal_range_a", b.sagittal_range_a},
           {"sagittal_range_b", b.sagittal_range_b},
           {"frame", b.frame}};
}
inline void from_json(const Json& j, BifurcationGeometry& b) {
  b.parent_id = j.at("parent_id").get<int>();
  b.daughter_a = j.at("daughter_a").get<int>();
  b.daughter_b = j.at("daughter_b").get<int>();
  b.phi_a = j.at("phi_a").get<double>();
  b.phi_b = j.at("phi_b").get<double>();
  b.phi_min = j.at("phi_min").get<double>();
  b.r_star_a = j.at("r_star_a").get<double>();
  b.r_star_b = j.at("r_star_b").get<double>();
  b.carina_center = j.at("carina_center").get<Vec2>();
  b.r_c = j.at("r_c").get<double>();
  b.tilt_a = j.at("tilt_a").get<double>();
  b.tilt_b = j.at("tilt_b").get<double>();
  b.taper = j.at("taper").get<SigmoidTaper>();
  b.sagittal_range_a = j.at("sagittal_range_a").get<Interval>();
  b.sagittal_range_b = j.at("sagittal_range_b").get<Interval>();
  b.frame = j.at("frame").get<Frame>();
}

inline constexpr const char* kTreeFormat = "bronchosim-tree";

inline Json tree_to_json(const AirwayTree& t) {
  return Json{{"format", kTreeFormat},
              {"format_version", "1"},
              {"params", t.params},
              {"segments", t.segments},
              {"bifurcations", t.bifurcations}};
}

inline AirwayTree tree_from_json(const Json& j, const std::string& source = "<json>") {
  try {
    if (j.value("format", std::string{}) != kTreeFormat)
      throw FormatError(source + ": not a bronchosim tree document");
    if (j.value("format_version", std::string{}) != "1")
      throw FormatError(source + ": unsupported tree format_version");
    AirwayTree t;
    t.params = j.at("params").get<GenerationParams>();
    t.segments = j.at("segments").get<std::vector<AirwaySegment>>();
    t.bifurcations = j.at("bifurcations").get<std::vector<BifurcationGeometry>>();
    if (static_cast<int>(t.segments.size()) != segment_count(t.params.generations))
      throw FormatError(source + ": segment count does not match generations");
    for (std::size_t i = 0; i < t.segments.size(); ++i)
      if (t.segments[i].id != static_cast<int>(i)) throw FormatError(source + ": segments out of id order");
    return t;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(source + ": " + e.what());
  }
}

/// FNV-1a 64-bit digest, printed as 16 hex digits.
inline std::string fnv1a_hex(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  static const char* digits = "0123456789abcdef";
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i, h >>= 4) out[static_cast<std::size_t>(i)] = digits[h & 0xf];
  return out;
}

inline std::string params_hash(const GenerationParams& p) { return fnv1a_hex(Json(p).dump()); }

}  // namespace bronchosim
