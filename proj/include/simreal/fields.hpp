#pragma once

// Field tables shared by dataset manifests and experiment configs. Each
// visit_fields overload calls v(name, field) for every serializable member.

#include <charconv>
#include <cstdio>
#include <string>
#include <vector>

#include "simreal/depthscene.hpp"

namespace simreal::fields {

template <typename V>
void visit_fields(scene::SceneConfig& c, V&& v) {
  v("bottle_radius_min", c.bottle_radius_min);
  v("bottle_radius_max", c.bottle_radius_max);
  v("bottle_radii", c.bottle_radii);
  v("bottle_height_min", c.bottle_height_min);
  v("bottle_height_max", c.bottle_height_max);
  v("workspace_half_width", c.workspace_half_width);
  v("clutter_min", c.clutter_min);
  v("clutter_max", c.clutter_max);
  v("clutter_ring_inner", c.clutter_ring_inner);
  v("clutter_ring_outer", c.clutter_ring_outer);
  v("clutter_size_min", c.clutter_size_min);
  v("clutter_size_max", c.clutter_size_max);
  v("clutter_height_min", c.clutter_height_min);
  v("clutter_height_max", c.clutter_height_max);
  v("hand_offset_half_width", c.hand_offset_half_width);
  v("hand_height_min", c.hand_height_min);
  v("hand_height_max", c.hand_height_max);
  v("cap_radius", c.cap_radius);
  v("max_attempts", c.max_attempts);
}

template <typename V>
void visit_fields(scene::CameraConfig& c, V&& v) {
  v("offset_x", c.offset_x);
  v("offset_y", c.offset_y);
  v("offset_z", c.offset_z);
  v("pitch_deg", c.pitch_deg);
  v("fov_deg", c.fov_deg);
}

template <typename V>
void visit_fields(scene::DomainModel& m, V&& v) {
  v("missing_pixel_prob", m.missing_pixel_prob);
  v("noise_stddev", m.noise_stddev);
  v("depth_bias", m.depth_bias);
  v("shift_x", m.shift_x);
  v("shift_y", m.shift_y);
  v("quantization_step", m.quantization_step);
  v("edge_dropout_width", m.edge_dropout_width);
  v("edge_threshold", m.edge_threshold);
}

inline std::string format_value(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}
inline std::string format_value(int x) { return std::to_string(x); }
inline std::string format_value(bool x) { return x ? "true" : "false"; }
inline std::string format_value(const std::string& x) { return x; }
inline std::string format_value(const std::vector<double>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    out += format_value(xs[i]);
  }
  return out;
}

// Parsers return false on malformed input.
bool parse_value(const std::string& text, double& out);
bool parse_value(const std::string& text, int& out);
bool parse_value(const std::string& text, bool& out);
bool parse_value(const std::string& text, std::string& out);
bool parse_value(const std::string& text, std::vector<double>& out);

// Appends "prefix.name = value" lines.
struct Emitter {
  std::string prefix;
  std::string* out;
  template <typename T>
  void operator()(const char* name, const T& value) const {
    *out += prefix + "." + name + " = " + format_value(value) + "\n";
  }
};

}  // namespace simreal::fields
