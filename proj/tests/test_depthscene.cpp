#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "simreal/depthscene.hpp"

using namespace simreal;
using namespace simreal::scene;

namespace {

Camera straight_down() { return CameraConfig{0.0, 0.0, 0.18, 0.0, 60.0}.build(); }

Scene bare_scene(const Vec3& bottle_base, double radius, double height) {
  Scene s;
  s.bottle = Cylinder{bottle_base, radius, height};
  s.opening_position = s.bottle.top_center();
  s.with_clutter = false;
  return s;
}

bool inside(const Primitive& p, const Vec3& x) {
  if (const auto* c = std::get_if<Cylinder>(&p)) {
    const double dx = x.x() - c->base.x(), dy = x.y() - c->base.y();
    return dx * dx + dy * dy <= c->radius * c->radius && x.z() >= c->base.z() && x.z() <= c->base.z() + c->height;
  }
  if (const auto* b = std::get_if<Box>(&p)) return ((x - b->center).cwiseAbs() - b->half_extents).maxCoeff() <= 0.0;
  return x.z() <= std::get<Plane>(p).height;
}

// Fixed-step march along the pixel ray; returns z-depth of the first occupied sample.
double march(const Scene& scene, const RobotState& state, const Camera& cam, int row, int col, double step) {
  const double t = std::tan(cam.vertical_fov / 2);
  const double half = cam.resolution / 2.0;
  const Vec3 dir_cam((col + 0.5 - half) / half * t, (row + 0.5 - half) / half * t, 1.0);
  const auto pose = cam.world_pose(state);
  const Vec3 origin = pose.translation();
  const Vec3 dir = pose.linear() * dir_cam;
  std::vector<Primitive> prims{scene.bottle, scene.table};
  for (const auto& c : scene.clutter) prims.push_back(c);
  for (double z = 0; z < 3.0; z += step) {
    const Vec3 x = origin + z * dir;
    for (const auto& p : prims)
      if (inside(p, x)) return z;
  }
  return 0.0;
}

}  // namespace

TEST_CASE("open table renders constant depth equal to the camera height") {
  const Scene s = bare_scene(Vec3(10, 10, 0), 0.03, 0.1);
  RobotState st;
  st.hand_position = Vec3(0, 0, 0.12);
  const DepthImage img = render_depth(s, st, straight_down());
  CHECK(img.rows() == kImageSize);
  CHECK(img.cols() == kImageSize);
  CHECK((img.array() - 0.30).abs().maxCoeff() < 1e-12);
}

TEST_CASE("bottle top seen from above sits at camera height minus bottle height") {
  const Scene s = bare_scene(Vec3(0, 0, 0), 0.04, 0.1);
  RobotState st;
  st.hand_position = Vec3(0, 0, 0.12);
  const DepthImage img = render_depth(s, st, straight_down());
  CHECK(img(31, 31) == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(img(32, 32) == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(img(0, 0) == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(img(63, 63) == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("box top depth") {
  Scene s = bare_scene(Vec3(10, 10, 0), 0.03, 0.1);
  s.clutter.push_back(Box{Vec3(0, 0, 0.05), Vec3(0.03, 0.03, 0.05)});
  RobotState st;
  st.hand_position = Vec3(0, 0, 0.12);
  const DepthImage img = render_depth(s, st, straight_down());
  CHECK(img(32, 31) == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(img(0, 63) == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("analytic renderer agrees with a ray-marching oracle on sampled scenes") {
  const SceneConfig cfg;
  const Camera cam = CameraConfig{}.build();
  Rng rng(7);
  const double step = 2e-5;
  for (int k = 0; k < 3; ++k) {
    auto [scene, state] = sample_scene(cfg, rng);
    const DepthImage img = render_depth(scene, state, cam);
    for (int row = 0; row < kImageSize; row += 9) {
      for (int col = 0; col < kImageSize; col += 7) {
        const double oracle = march(scene, state, cam, row, col, step);
        CHECK(std::abs(img(row, col) - oracle) <= 2 * step);
      }
    }
  }
}

TEST_CASE("identity domain model leaves the image bit-identical") {
  const SceneConfig cfg;
  Rng rng(3);
  auto [scene, state] = sample_scene(cfg, rng);
  const DepthImage img = render_depth(scene, state, CameraConfig{}.build());
  const DepthImage out = apply_domain(img, DomainModel::identity(), rng);
  CHECK((out.array() == img.array()).all());
}

TEST_CASE("lateral shift moves columns right and fills with missing pixels") {
  DepthImage img(4, 5);
  for (int i = 0; i < img.size(); ++i) img.data()[i] = 0.1 + 0.01 * i;
  DomainModel m;
  m.shift_x = 2;
  m.shift_y = 1;
  Rng rng(1);
  const DepthImage out = apply_domain(img, m, rng);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 5; ++c) CHECK(out(r, c) == ((r >= 1 && c >= 2) ? img(r - 1, c - 2) : 0.0));
}

TEST_CASE("bias applies to valid pixels only and missing pixels stay zero") {
  DepthImage img = DepthImage::Constant(8, 8, 0.25);
  img(2, 3) = 0.0;
  DomainModel m;
  m.depth_bias = 0.01;
  Rng rng(1);
  const DepthImage out = apply_domain(img, m, rng);
  CHECK(out(2, 3) == 0.0);
  CHECK(out(0, 0) == doctest::Approx(0.26).epsilon(1e-14));
}

TEST_CASE("negative bias clamps valid pixels at the depth floor") {
  const DepthImage img = DepthImage::Constant(4, 4, 0.05);
  DomainModel m;
  m.depth_bias = -1.0;
  Rng rng(1);
  const DepthImage out = apply_domain(img, m, rng);
  CHECK((out.array() == kDepthFloor).all());
}

TEST_CASE("quantization rounds onto the step grid") {
  Rng rng(5);
  DepthImage img(16, 16);
  std::uniform_real_distribution<double> u(0.1, 0.5);
  for (int i = 0; i < img.size(); ++i) img.data()[i] = u(rng);
  DomainModel m;
  m.quantization_step = 0.001;
  const DepthImage out = apply_domain(img, m, rng);
  for (int i = 0; i < out.size(); ++i) {
    CHECK(std::abs(out.data()[i] - img.data()[i]) <= 0.0005 + 1e-15);
    CHECK(std::abs(out.data()[i] / 0.001 - std::round(out.data()[i] / 0.001)) < 1e-9);
  }
}

TEST_CASE("additive noise has the configured standard deviation") {
  const DepthImage img = DepthImage::Constant(64, 64, 0.3);
  DomainModel m;
  m.noise_stddev = 0.002;
  Rng rng(11);
  double sum = 0, sq = 0;
  const int reps = 25;
  for (int k = 0; k < reps; ++k) {
    const DepthImage out = apply_domain(img, m, rng);
    sum += (out.array() - 0.3).sum();
    sq += (out.array() - 0.3).square().sum();
  }
  const double n = reps * 64.0 * 64.0;
  const double mean = sum / n;
  const double sd = std::sqrt(sq / n - mean * mean);
  CHECK(std::abs(mean) < 4 * 0.002 / std::sqrt(n));
  CHECK(sd == doctest::Approx(0.002).epsilon(0.02));
}

TEST_CASE("edge dropout removes both sides of a depth discontinuity") {
  DepthImage img = DepthImage::Constant(8, 8, 0.3);
  img.leftCols(4).setConstant(0.2);
  DomainModel m;
  m.edge_dropout_width = 1;
  Rng rng(1);
  const DepthImage out = apply_domain(img, m, rng);
  for (int r = 0; r < 8; ++r) {
    for (int c = 0; c < 8; ++c) {
      const bool edge = c == 3 || c == 4;
      CHECK(out(r, c) == (edge ? 0.0 : img(r, c)));
    }
  }
  m.edge_dropout_width = 2;
  const DepthImage wide = apply_domain(img, m, rng);
  CHECK((wide.middleCols(2, 4).array() == 0.0).all());
  CHECK((wide.leftCols(2).array() == 0.2).all());
  CHECK((wide.rightCols(2).array() == 0.3).all());
}

TEST_CASE("missing-pixel dropout rate matches the probability") {
  const DepthImage img = DepthImage::Constant(64, 64, 0.3);
  DomainModel m;
  m.missing_pixel_prob = 0.10;
  Rng rng(2024);
  long missing = 0, total = 0;
  for (int k = 0; k < 100; ++k) {
    const DepthImage out = apply_domain(img, m, rng);
    missing += (out.array() == 0.0).count();
    total += out.size();
  }
  const double rate = static_cast<double>(missing) / total;
  CHECK(rate >= 0.09);
  CHECK(rate <= 0.11);
  // Binomial standard error at n = 409600 is 4.7e-4.
  CHECK(std::abs(rate - 0.10) < 4 * std::sqrt(0.1 * 0.9 / total));
}

TEST_CASE("domain model validation") {
  DomainModel m;
  m.missing_pixel_prob = 1.5;
  Rng rng(1);
  CHECK_THROWS_AS(apply_domain(DepthImage::Zero(4, 4), m, rng), ConfigError);
  m = DomainModel{};
  m.noise_stddev = -1;
  CHECK_THROWS_AS(m.validate(), ConfigError);
}

TEST_CASE("sampled scenes respect layout constraints") {
  SceneConfig cfg;
  Rng rng(99);
  for (int k = 0; k < 200; ++k) {
    auto [scene, state] = sample_scene(cfg, rng);
    const auto& b = scene.bottle;
    CHECK(b.radius >= cfg.bottle_radius_min);
    CHECK(b.radius <= cfg.bottle_radius_max);
    CHECK(b.height >= cfg.bottle_height_min);
    CHECK(b.height <= cfg.bottle_height_max);
    CHECK(std::abs(b.base.x()) <= cfg.workspace_half_width);
    CHECK(scene.opening_position.isApprox(b.top_center()));
    CHECK(static_cast<int>(scene.clutter.size()) >= cfg.clutter_min);
    CHECK(static_cast<int>(scene.clutter.size()) <= cfg.clutter_max);
    for (std::size_t i = 0; i < scene.clutter.size(); ++i) {
      CHECK(rests_on_table(scene.clutter[i], scene.table));
      CHECK_FALSE(footprints_intersect(scene.clutter[i], Primitive{b}));
      for (std::size_t j = i + 1; j < scene.clutter.size(); ++j)
        CHECK_FALSE(footprints_intersect(scene.clutter[i], scene.clutter[j]));
    }
    const Vec3 off = state.hand_position - scene.opening_position;
    CHECK(std::abs(off.x()) <= cfg.hand_offset_half_width);
    CHECK(std::abs(off.y()) <= cfg.hand_offset_half_width);
    CHECK(off.z() >= cfg.hand_height_min);
    CHECK(off.z() <= cfg.hand_height_max);
  }
}

TEST_CASE("scene sampling is deterministic per seed and honours a radius set") {
  SceneConfig cfg;
  cfg.bottle_radii = {0.02, 0.04};
  Rng a(5), b(5);
  for (int k = 0; k < 20; ++k) {
    auto [sa, ta] = sample_scene(cfg, a);
    auto [sb, tb] = sample_scene(cfg, b);
    CHECK(sa.bottle.radius == sb.bottle.radius);
    CHECK(ta.hand_position == tb.hand_position);
    CHECK((sa.bottle.radius == 0.02 || sa.bottle.radius == 0.04));
  }
}

TEST_CASE("impossible clutter placement raises a sampling error") {
  SceneConfig cfg;
  cfg.clutter_min = cfg.clutter_max = 6;
  cfg.clutter_ring_inner = 0.0;
  cfg.clutter_ring_outer = 0.0;
  cfg.max_attempts = 20;
  Rng rng(1);
  CHECK_THROWS_AS(sample_scene(cfg, rng), SamplingError);
}

TEST_CASE("without_clutter removes clutter only") {
  Rng rng(4);
  auto [scene, state] = sample_scene(SceneConfig{}, rng);
  const Scene bare = scene.without_clutter();
  CHECK(bare.clutter.empty());
  CHECK_FALSE(bare.with_clutter);
  CHECK(bare.bottle.radius == scene.bottle.radius);
}

TEST_CASE("16-bit PGM round trip keeps millimetres") {
  Rng rng(8);
  auto [scene, state] = sample_scene(SceneConfig{}, rng);
  DomainModel m = DomainModel::source_default();
  const DepthImage img = apply_domain(render_depth(scene, state, CameraConfig{}.build()), m, rng);
  const auto path = (std::filesystem::temp_directory_path() / "simreal_pgm_test.pgm").string();
  write_pgm(img, path);
  const DepthImage back = read_pgm(path);
  std::remove(path.c_str());
  REQUIRE(back.rows() == img.rows());
  CHECK((back - img).cwiseAbs().maxCoeff() <= 0.0005 + 1e-12);
  CHECK(((img.array() == 0.0) == (back.array() == 0.0)).all());
}
