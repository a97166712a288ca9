#include "simreal/depthscene.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace simreal::scene {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kMinT = 1e-9;

struct Ray {
  Vec3 origin;
  Vec3 dir;
};

double intersect(const Ray& ray, const Plane& plane) {
  if (std::abs(ray.dir.z()) < 1e-15) return kInf;
  const double t = (plane.height - ray.origin.z()) / ray.dir.z();
  return t > kMinT ? t : kInf;
}

double intersect(const Ray& ray, const Cylinder& cyl) {
  double best = kInf;
  const double z0 = cyl.base.z();
  const double z1 = z0 + cyl.height;
  const double ox = ray.origin.x() - cyl.base.x();
  const double oy = ray.origin.y() - cyl.base.y();
  const double dx = ray.dir.x();
  const double dy = ray.dir.y();
  const double r2 = cyl.radius * cyl.radius;

  const double a = dx * dx + dy * dy;
  if (a > 1e-15) {
    const double b = 2.0 * (ox * dx + oy * dy);
    const double c = ox * ox + oy * oy - r2;
    const double disc = b * b - 4.0 * a * c;
    if (disc >= 0.0) {
      const double sq = std::sqrt(disc);
      for (double t : {(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)}) {
        if (t <= kMinT || t >= best) continue;
        const double z = ray.origin.z() + t * ray.dir.z();
        if (z >= z0 && z <= z1) best = t;
      }
    }
  }
  if (std::abs(ray.dir.z()) > 1e-15) {
    for (double zc : {z0, z1}) {
      const double t = (zc - ray.origin.z()) / ray.dir.z();
      if (t <= kMinT || t >= best) continue;
      const double px = ox + t * dx;
      const double py = oy + t * dy;
      if (px * px + py * py <= r2) best = t;
    }
  }
  return best;
}

double intersect(const Ray& ray, const Box& box) {
  double t_near = -kInf;
  double t_far = kInf;
  for (int axis = 0; axis < 3; ++axis) {
    const double lo = box.center[axis] - box.half_extents[axis];
    const double hi = box.center[axis] + box.half_extents[axis];
    const double o = ray.origin[axis];
    const double d = ray.dir[axis];
    if (std::abs(d) < 1e-15) {
      if (o < lo || o > hi) return kInf;
      continue;
    }
    double t0 = (lo - o) / d;
    double t1 = (hi - o) / d;
    if (t0 > t1) std::swap(t0, t1);
    t_near = std::max(t_near, t0);
    t_far = std::min(t_far, t1);
    if (t_near > t_far) return kInf;
  }
  if (t_near > kMinT) return t_near;
  if (t_far > kMinT) return t_far;
  return kInf;
}

double intersect(const Ray& ray, const Primitive& p) {
  return std::visit([&](const auto& shape) { return intersect(ray, shape); }, p);
}

double uniform(Rng& rng, double lo, double hi) {
  if (hi <= lo) return lo;
  return std::uniform_real_distribution<double>(lo, hi)(rng);
}

// Distance from point (px, py) to the closed rectangle of a box footprint.
double distance_to_footprint(const Box& box, double px, double py) {
  const double dx = std::max(std::abs(px - box.center.x()) - box.half_extents.x(), 0.0);
  const double dy = std::max(std::abs(py - box.center.y()) - box.half_extents.y(), 0.0);
  return std::hypot(dx, dy);
}

}  // namespace

Scene Scene::without_clutter() const {
  Scene s = *this;
  s.clutter.clear();
  s.with_clutter = false;
  return s;
}

Camera Camera::looking_down(const Vec3& offset, double pitch, double vertical_fov, int resolution) {
  Camera cam;
  Eigen::Matrix3d down;
  // Columns are camera axes in the hand frame: x -> +X, y -> -Y, z -> -Z.
  down << 1, 0, 0,
          0, -1, 0,
          0, 0, -1;
  cam.mount = Eigen::Isometry3d::Identity();
  cam.mount.linear() = down * Eigen::AngleAxisd(pitch, Vec3::UnitX()).toRotationMatrix();
  cam.mount.translation() = offset;
  cam.vertical_fov = vertical_fov;
  cam.resolution = resolution;
  return cam;
}

Camera CameraConfig::build() const {
  return Camera::looking_down(Vec3(offset_x, offset_y, offset_z), pitch_deg * M_PI / 180.0, fov_deg * M_PI / 180.0);
}

Eigen::Isometry3d Camera::world_pose(const RobotState& state) const {
  Eigen::Isometry3d hand = Eigen::Isometry3d::Identity();
  hand.translation() = state.hand_position;
  return hand * mount;
}

void DomainModel::validate() const {
  if (!(missing_pixel_prob >= 0.0 && missing_pixel_prob <= 1.0))
    throw ConfigError("domain: missing_pixel_prob must lie in [0, 1]");
  if (!(noise_stddev >= 0.0)) throw ConfigError("domain: noise_stddev must be >= 0");
  if (!(quantization_step >= 0.0)) throw ConfigError("domain: quantization_step must be >= 0");
  if (edge_dropout_width < 0) throw ConfigError("domain: edge_dropout_width must be >= 0");
  if (!std::isfinite(depth_bias)) throw ConfigError("domain: depth_bias must be finite");
}

void SceneConfig::validate() const {
  if (bottle_radii.empty()) {
    if (!(bottle_radius_min > 0.0 && bottle_radius_max >= bottle_radius_min))
      throw ConfigError("scene: bottle radius range must satisfy 0 < min <= max");
  } else {
    for (double r : bottle_radii)
      if (!(r > 0.0)) throw ConfigError("scene: bottle radii must be positive");
  }
  if (!(bottle_height_min > 0.0 && bottle_height_max >= bottle_height_min))
    throw ConfigError("scene: bottle height range must satisfy 0 < min <= max");
  if (clutter_min < 0 || clutter_max < clutter_min)
    throw ConfigError("scene: clutter count range must satisfy 0 <= min <= max");
  if (!(clutter_size_min > 0.0 && clutter_size_max >= clutter_size_min))
    throw ConfigError("scene: clutter size range must satisfy 0 < min <= max");
  if (!(clutter_height_min > 0.0 && clutter_height_max >= clutter_height_min))
    throw ConfigError("scene: clutter height range must satisfy 0 < min <= max");
  if (!(hand_offset_half_width >= 0.0)) throw ConfigError("scene: hand_offset_half_width must be >= 0");
  if (!(hand_height_max >= hand_height_min)) throw ConfigError("scene: hand height range is inverted");
  if (max_attempts < 1) throw ConfigError("scene: max_attempts must be >= 1");
}

bool footprints_intersect(const Primitive& a, const Primitive& b) {
  if (std::holds_alternative<Plane>(a) || std::holds_alternative<Plane>(b)) return false;
  if (const auto* ca = std::get_if<Cylinder>(&a)) {
    if (const auto* cb = std::get_if<Cylinder>(&b)) {
      return std::hypot(ca->base.x() - cb->base.x(), ca->base.y() - cb->base.y()) <=
             ca->radius + cb->radius;
    }
    return distance_to_footprint(std::get<Box>(b), ca->base.x(), ca->base.y()) <= ca->radius;
  }
  const auto& ba = std::get<Box>(a);
  if (const auto* cb = std::get_if<Cylinder>(&b))
    return distance_to_footprint(ba, cb->base.x(), cb->base.y()) <= cb->radius;
  const auto& bb = std::get<Box>(b);
  return std::abs(ba.center.x() - bb.center.x()) <= ba.half_extents.x() + bb.half_extents.x() &&
         std::abs(ba.center.y() - bb.center.y()) <= ba.half_extents.y() + bb.half_extents.y();
}

bool rests_on_table(const Primitive& p, const Plane& table) {
  constexpr double tol = 1e-12;
  if (const auto* c = std::get_if<Cylinder>(&p)) return c->base.z() >= table.height - tol;
  if (const auto* b = std::get_if<Box>(&p)) return b->center.z() - b->half_extents.z() >= table.height - tol;
  return true;
}

std::pair<Scene, RobotState> sample_scene(const SceneConfig& config, Rng& rng) {
  config.validate();
  Scene scene;
  scene.table.height = 0.0;

  double radius;
  if (config.bottle_radii.empty()) {
    radius = uniform(rng, config.bottle_radius_min, config.bottle_radius_max);
  } else {
    std::uniform_int_distribution<std::size_t> pick(0, config.bottle_radii.size() - 1);
    radius = config.bottle_radii[pick(rng)];
  }
  const double height = uniform(rng, config.bottle_height_min, config.bottle_height_max);
  const double bx = uniform(rng, -config.workspace_half_width, config.workspace_half_width);
  const double by = uniform(rng, -config.workspace_half_width, config.workspace_half_width);
  scene.bottle = Cylinder{Vec3(bx, by, scene.table.height), radius, height};
  scene.opening_position = scene.bottle.top_center();

  const int count = std::uniform_int_distribution<int>(config.clutter_min, config.clutter_max)(rng);
  scene.with_clutter = count > 0;
  const Primitive bottle_prim = scene.bottle;
  for (int k = 0; k < count; ++k) {
    bool placed = false;
    for (int attempt = 0; attempt < config.max_attempts && !placed; ++attempt) {
      const double size = uniform(rng, config.clutter_size_min, config.clutter_size_max);
      const double h = uniform(rng, config.clutter_height_min, config.clutter_height_max);
      const double angle = uniform(rng, 0.0, 2.0 * M_PI);
      const double inner = radius + size + config.clutter_ring_inner;
      const double dist = uniform(rng, inner, std::max(inner, config.clutter_ring_outer));
      const double cx = bx + dist * std::cos(angle);
      const double cy = by + dist * std::sin(angle);
      const bool is_box = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < 0.4;
      Primitive candidate;
      if (is_box) {
        const double aspect = uniform(rng, 0.6, 1.0);
        candidate = Box{Vec3(cx, cy, scene.table.height + 0.5 * h), Vec3(size, size * aspect, 0.5 * h)};
      } else {
        candidate = Cylinder{Vec3(cx, cy, scene.table.height), size, h};
      }
      if (footprints_intersect(candidate, bottle_prim)) continue;
      bool clear = true;
      for (const auto& other : scene.clutter) {
        if (footprints_intersect(candidate, other)) {
          clear = false;
          break;
        }
      }
      if (!clear) continue;
      scene.clutter.push_back(candidate);
      placed = true;
    }
    if (!placed) {
      throw SamplingError("sample_scene: could not place clutter object " + std::to_string(k) +
                          " without intersecting the bottle or other clutter after " +
                          std::to_string(config.max_attempts) + " attempts");
    }
  }

  RobotState state;
  state.cap_radius = config.cap_radius;
  const double ox = uniform(rng, -config.hand_offset_half_width, config.hand_offset_half_width);
  const double oy = uniform(rng, -config.hand_offset_half_width, config.hand_offset_half_width);
  const double oz = uniform(rng, config.hand_height_min, config.hand_height_max);
  state.hand_position = scene.opening_position + Vec3(ox, oy, oz);
  return {scene, state};
}

DepthImage render_depth(const Scene& scene, const RobotState& state, const Camera& camera) {
  const int n = camera.resolution;
  DepthImage image(n, n);
  const Eigen::Isometry3d pose = camera.world_pose(state);
  const Eigen::Matrix3d rot = pose.linear();
  const double tan_half = std::tan(0.5 * camera.vertical_fov);
  const double half = 0.5 * n;
  Ray ray;
  ray.origin = pose.translation();
  for (int row = 0; row < n; ++row) {
    const double v = (row + 0.5 - half) / half * tan_half;
    for (int col = 0; col < n; ++col) {
      const double u = (col + 0.5 - half) / half * tan_half;
      // Camera-frame direction has unit z, so the ray parameter is z-depth.
      ray.dir = rot * Vec3(u, v, 1.0);
      double t = intersect(ray, scene.table);
      t = std::min(t, intersect(ray, scene.bottle));
      for (const auto& p : scene.clutter) t = std::min(t, intersect(ray, p));
      image(row, col) = std::isfinite(t) ? t : 0.0;
    }
  }
  return image;
}

DepthImage apply_domain(const DepthImage& image, const DomainModel& model, Rng& rng) {
  model.validate();
  const Eigen::Index rows = image.rows();
  const Eigen::Index cols = image.cols();

  DepthImage out = DepthImage::Zero(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) {
      const Eigen::Index sr = r - model.shift_y;
      const Eigen::Index sc = c - model.shift_x;
      if (sr >= 0 && sr < rows && sc >= 0 && sc < cols) out(r, c) = image(sr, sc);
    }
  }
  const DepthImage valid = (out.array() > 0.0).cast<double>();

  if (model.depth_bias != 0.0) out.array() += model.depth_bias * valid.array();

  if (model.noise_stddev > 0.0) {
    std::normal_distribution<double> noise(0.0, model.noise_stddev);
    for (Eigen::Index i = 0; i < out.size(); ++i) {
      const double e = noise(rng);
      if (valid.data()[i] > 0.0) out.data()[i] += e;
    }
  }

  if (model.quantization_step > 0.0) {
    const double q = model.quantization_step;
    out = out.unaryExpr([q](double v) { return q * std::round(v / q); });
  }

  const bool perturbed = model.depth_bias != 0.0 || model.noise_stddev > 0.0 || model.quantization_step > 0.0;
  if (perturbed) {
    for (Eigen::Index i = 0; i < out.size(); ++i)
      if (valid.data()[i] > 0.0) out.data()[i] = std::max(out.data()[i], kDepthFloor);
  }

  if (model.edge_dropout_width > 0) {
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> edge(rows, cols);
    edge.setConstant(false);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        const double d = out(r, c);
        if (d <= 0.0) continue;
        const auto jump = [&](Eigen::Index rr, Eigen::Index cc) {
          if (rr < 0 || rr >= rows || cc < 0 || cc >= cols) return false;
          const double e = out(rr, cc);
          return e > 0.0 && std::abs(e - d) > model.edge_threshold;
        };
        edge(r, c) = jump(r - 1, c) || jump(r + 1, c) || jump(r, c - 1) || jump(r, c + 1);
      }
    }
    const int reach = model.edge_dropout_width - 1;
    DepthImage dropped = out;
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        if (!edge(r, c)) continue;
        for (Eigen::Index rr = std::max<Eigen::Index>(0, r - reach); rr <= std::min(rows - 1, r + reach); ++rr)
          for (Eigen::Index cc = std::max<Eigen::Index>(0, c - reach); cc <= std::min(cols - 1, c + reach); ++cc)
            dropped(rr, cc) = 0.0;
      }
    }
    out = std::move(dropped);
  }

  if (model.missing_pixel_prob > 0.0) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (Eigen::Index i = 0; i < out.size(); ++i)
      if (u(rng) < model.missing_pixel_prob) out.data()[i] = 0.0;
  }
  return out;
}

void write_pgm(const DepthImage& image, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("write_pgm: cannot open " + path);
  f << "P5\n" << image.cols() << ' ' << image.rows() << "\n65535\n";
  for (Eigen::Index i = 0; i < image.size(); ++i) {
    const double mm = std::round(image.data()[i] * 1000.0);
    const auto v = static_cast<std::uint16_t>(std::clamp(mm, 0.0, 65535.0));
    const char bytes[2] = {static_cast<char>(v >> 8), static_cast<char>(v & 0xFF)};
    f.write(bytes, 2);
  }
  if (!f) throw IoError("write_pgm: write failed for " + path);
}

DepthImage read_pgm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("read_pgm: cannot open " + path);
  std::string magic;
  int w = 0, h = 0, maxval = 0;
  f >> magic >> w >> h >> maxval;
  if (magic != "P5" || maxval != 65535 || w <= 0 || h <= 0) throw FormatError("read_pgm: not a 16-bit P5 file");
  f.get();
  DepthImage image(h, w);
  for (Eigen::Index i = 0; i < image.size(); ++i) {
    unsigned char bytes[2];
    if (!f.read(reinterpret_cast<char*>(bytes), 2)) throw TruncatedError("read_pgm: truncated file " + path);
    image.data()[i] = ((bytes[0] << 8) | bytes[1]) / 1000.0;
  }
  return image;
}

}  // namespace simreal::scene
