#pragma once

#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <Eigen/Geometry>

#include "simreal/common.hpp"

namespace simreal::scene {

// Depth in meters, row-major, 0 marks a missing pixel.
using DepthImage = RowMatrix<double>;

inline constexpr int kImageSize = 64;
// Perturbed depths never drop below this, so 0 unambiguously means missing.
inline constexpr double kDepthFloor = 1e-3;

// Vertical cylinder standing on its base disk.
struct Cylinder {
  Vec3 base;
  double radius = 0.0;
  double height = 0.0;

  Vec3 top_center() const { return base + Vec3(0.0, 0.0, height); }
};

// Axis-aligned box.
struct Box {
  Vec3 center;
  Vec3 half_extents;
};

// Horizontal plane z = height.
struct Plane {
  double height = 0.0;
};

using Primitive = std::variant<Cylinder, Box, Plane>;

struct Scene {
  Cylinder bottle;
  Vec3 opening_position;
  std::vector<Primitive> clutter;
  Plane table;
  bool with_clutter = true;

  Scene without_clutter() const;
};

struct RobotState {
  Vec3 hand_position;
  double cap_radius = 0.015;
};

// Pinhole depth camera mounted on the wrist. `mount` maps camera-frame
// points (x right, y down, z along the optical axis) into the hand frame.
struct Camera {
  Eigen::Isometry3d mount = Eigen::Isometry3d::Identity();
  double vertical_fov = 1.0471975511965976;  // 60 degrees
  int resolution = kImageSize;

  // Camera at `offset` from the hand, optical axis pointing straight down,
  // then pitched by `pitch` radians about the camera x axis (toward +y).
  static Camera looking_down(const Vec3& offset, double pitch, double vertical_fov,
                             int resolution = kImageSize);

  Eigen::Isometry3d world_pose(const RobotState& state) const;
};

// Wrist-mount parameters from which experiment cameras are built.
struct CameraConfig {
  double offset_x = 0.0;
  double offset_y = -0.05;
  double offset_z = 0.18;
  double pitch_deg = 12.0;
  double fov_deg = 60.0;

  Camera build() const;
};

struct DomainModel {
  double missing_pixel_prob = 0.0;
  double noise_stddev = 0.0;
  double depth_bias = 0.0;
  int shift_x = 0;  // columns
  int shift_y = 0;  // rows
  double quantization_step = 0.0;
  int edge_dropout_width = 0;
  // Depth jump between 4-neighbours that counts as an edge.
  double edge_threshold = 0.01;

  static DomainModel identity() { return {}; }
  static DomainModel source_default() {
    DomainModel m;
    m.missing_pixel_prob = 0.10;
    return m;
  }
  // Stand-in for the real sensor: the source dropout plus bias, noise,
  // a 2-column misregistration, 1 mm quantization and edge dropout.
  static DomainModel target_default() {
    DomainModel m;
    m.missing_pixel_prob = 0.10;
    m.noise_stddev = 0.002;
    m.depth_bias = 0.008;
    m.shift_x = 2;
    m.quantization_step = 0.001;
    m.edge_dropout_width = 1;
    return m;
  }
  void validate() const;
};

struct SceneConfig {
  double bottle_radius_min = 0.015;
  double bottle_radius_max = 0.045;
  // When non-empty, bottle radii are drawn from this set instead of the range.
  std::vector<double> bottle_radii;
  double bottle_height_min = 0.10;
  double bottle_height_max = 0.20;
  double workspace_half_width = 0.10;
  int clutter_min = 3;
  int clutter_max = 6;
  double clutter_ring_inner = 0.03;  // clearance from the bottle surface
  double clutter_ring_outer = 0.14;  // max distance of clutter centers from the bottle axis
  double clutter_size_min = 0.015;
  double clutter_size_max = 0.04;
  double clutter_height_min = 0.04;
  double clutter_height_max = 0.22;
  double hand_offset_half_width = 0.05;
  double hand_height_min = 0.01;  // above the opening
  double hand_height_max = 0.05;
  double cap_radius = 0.015;
  int max_attempts = 200;

  void validate() const;
};

std::pair<Scene, RobotState> sample_scene(const SceneConfig& config, Rng& rng);

// Z-buffer depth (distance along the optical axis) of the nearest surface.
DepthImage render_depth(const Scene& scene, const RobotState& state, const Camera& camera);

// Lateral shift, bias, Gaussian noise, quantization, edge dropout, then
// i.i.d. missing-pixel zeroing, in that order.
DepthImage apply_domain(const DepthImage& image, const DomainModel& model, Rng& rng);

// Planar (xy) footprint overlap test used by the clutter sampler.
bool footprints_intersect(const Primitive& a, const Primitive& b);

// True when `p` rests on or above the table plane.
bool rests_on_table(const Primitive& p, const Plane& table);

// Binary PGM (P5, 16-bit big-endian, millimeters).
void write_pgm(const DepthImage& image, const std::string& path);
DepthImage read_pgm(const std::string& path);

}  // namespace simreal::scene
