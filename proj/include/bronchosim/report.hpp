#pragma once

// Serializations of a MetricsReport: JSON, per-frame CSV and a plain-text
// summary table.

#include <cstdio>
#include <sstream>
#include <string>

#include "bronchosim/metrics.hpp"
#include "bronchosim/tree_json.hpp"

namespace bronchosim {

inline Json to_json_value(const AdseFrameResult& a) {
  Json j{{"skipped", a.skipped}};
  if (a.skipped) {
    j["skip_reason"] = a.skip_reason;
    return j;
  }
  j["r_in_lumen"] = a.r_in_lumen;
  j["z_lumen_outside"] = a.z_lumen_outside;
  j["local_pass"] = a.local_pass;
  j["contrast_pass"] = a.contrast_pass;
  j["d_min"] = a.d_min;
  j["mean_in"] = a.mean_in;
  j["mean_out"] = a.mean_out;
  j["sigma_out"] = a.sigma_out;
  j["tolerance"] = a.tolerance;
  j["min_pixels"] = a.min_pixels;
  j["lumen_pixels"] = a.lumen_pixels;
  return j;
}

inline Json to_json_value(const ClassicalResult& c) {
  return Json{{"abs_rel", c.abs_rel},     {"sq_rel", c.sq_rel},
              {"rmse", c.rmse},           {"rmse_log", c.rmse_log},
              {"delta", c.delta},         {"alignment_scale", c.alignment_scale},
              {"valid_pixels", c.valid_pixels}, {"nonpositive_pixels", c.nonpositive_pixels}};
}

inline Json report_to_json(const MetricsReport& r) {
  Json frames = Json::array();
  for (const auto& f : r.frames) {
    Json j{{"frame_id", f.frame_id}};
    if (f.adse) j["adse"] = to_json_value(*f.adse);
    if (f.classical) j["classical"] = to_json_value(*f.classical);
    if (!f.skip_reason.empty()) j["skip_reason"] = f.skip_reason;
    frames.push_back(std::move(j));
  }
  Json skipped = Json::array();
  for (const auto& [id, why] : r.skipped) skipped.push_back(Json{{"frame_id", id}, {"reason", why}});
  Json summary{{"frame_count", r.frame_count},
               {"adse_frames", r.adse_frames},
               {"local_passes", r.local_passes},
               {"contrast_passes", r.contrast_passes},
               {"local_accu", r.local_accu},
               {"depth_con", r.depth_con},
               {"classical_frames", r.classical_frames}};
  if (r.classical_frames > 0)
    summary["classical"] = Json{{"abs_rel", r.classical.abs_rel},
                                {"sq_rel", r.classical.sq_rel},
                                {"rmse", r.classical.rmse},
                                {"rmse_log", r.classical.rmse_log},
                                {"delta", r.classical.delta}};
  return Json{{"summary", summary}, {"skipped", skipped}, {"frames", frames}};
}

namespace detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace detail

/// One row per frame. Empty cells mean "not computed".
inline std::string report_to_csv(const MetricsReport& r) {
  std::ostringstream os;
  os << "frame_id,adse_skipped,r_in_lumen,z_lumen_outside,local_pass,contrast_pass,"
        "abs_rel,sq_rel,rmse,rmse_log,delta,alignment_scale,skip_reason\n";
  for (const auto& f : r.frames) {
    os << detail::csv_field(f.frame_id) << ',';
    std::string reason = f.skip_reason;
    if (f.adse && !f.adse->skipped) {
      os << "0," << detail::fmt_double(f.adse->r_in_lumen) << ',' << detail::fmt_double(f.adse->z_lumen_outside)
         << ',' << int(f.adse->local_pass) << ',' << int(f.adse->contrast_pass) << ',';
    } else {
      os << (f.adse ? "1" : "") << ",,,,,";
      if (f.adse && reason.empty()) reason = f.adse->skip_reason;
    }
    if (f.classical) {
      const auto& c = *f.classical;
      os << detail::fmt_double(c.abs_rel) << ',' << detail::fmt_double(c.sq_rel) << ',' << detail::fmt_double(c.rmse)
         << ',' << detail::fmt_double(c.rmse_log) << ',' << detail::fmt_double(c.delta) << ','
         << detail::fmt_double(c.alignment_scale) << ',';
    } else {
      os << ",,,,,,";
    }
    os << detail::csv_field(reason) << '\n';
  }
  return os.str();
}

inline std::string report_to_table(const MetricsReport& r) {
  std::ostringstream os;
  char line[128];
  auto row = [&](const char* name, const std::string& value) {
    std::snprintf(line, sizeof line, "  %-18s %s\n", name, value.c_str());
    os << line;
  };
  auto num = [](double v, int prec) {
    char b[40];
    std::snprintf(b, sizeof b, "%.*f", prec, v);
    return std::string(b);
  };
  os << "Evaluation summary\n";
  row("frames", std::to_string(r.frame_count));
  row("skipped", std::to_string(r.skipped.size()));
  if (r.adse_frames > 0) {
    row("ADSE frames", std::to_string(r.adse_frames));
    row("LocalAccu (%)", num(r.local_accu, 2) + "  (" + std::to_string(r.local_passes) + " passes)");
    row("DepthCon (%)", num(r.depth_con, 2) + "  (" + std::to_string(r.contrast_passes) + " passes)");
  }
  if (r.classical_frames > 0) {
    row("classical frames", std::to_string(r.classical_frames));
    row("AbsRel", num(r.classical.abs_rel, 4));
    row("SqRel", num(r.classical.sq_rel, 4));
    row("RMSE", num(r.classical.rmse, 4));
    row("RMSE log", num(r.classical.rmse_log, 4));
    row("delta < 1.25", num(r.classical.delta, 4));
  }
  for (const auto& [id, why] : r.skipped) os << "  skipped " << id << ": " << why << '\n';
  return os.str();
}

}  // namespace bronchosim
