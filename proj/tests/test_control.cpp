#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "simreal/control.hpp"

using namespace simreal;
using namespace simreal::control;

namespace {

struct Fixture {
  scene::Scene scene;
  scene::RobotState state;
  scene::DepthImage image;

  explicit Fixture(Vec3 offset) {
    Rng rng(11);
    std::tie(scene, state) = scene::sample_scene(scene::SceneConfig{}, rng);
    state.hand_position = scene.opening_position + offset;
    image = scene::render_depth(scene, state, scene::CameraConfig{}.build());
  }
  Observation obs() const { return Observation{image, state, scene}; }
};

DistanceFn constant(double c) {
  return [c](const Observation&, std::span<const Action> a) { return std::vector<double>(a.size(), c); };
}

Environment clean_env() {
  Environment e;
  e.domain = scene::DomainModel{};
  return e;
}

}  // namespace

TEST_CASE("oracle selection cancels a known offset") {
  const Fixture f(Vec3(0.02, 0.0, 0.05));
  ControllerConfig c;
  Rng rng(1);
  const Selection s = select_action(oracle_distance(), f.obs(), c, rng);
  CHECK(std::hypot(s.action.dx + 0.02, s.action.dy) < 0.005);
  CHECK(s.predicted == doctest::Approx(std::hypot(s.action.dx + 0.02, s.action.dy)).epsilon(1e-12));
}

TEST_CASE("constant predictor picks the first candidate") {
  const Fixture f(Vec3(0.01, 0.01, 0.05));
  ControllerConfig c;
  Rng a(4), b(4);
  const Selection s = select_action(constant(0.3), f.obs(), c, a);
  const auto cands = sample_candidates(c.num_candidates, c.bound, b);
  CHECK(s.index == 0);
  CHECK(s.action == cands[0]);
}

TEST_CASE("a single candidate is returned whatever it predicts") {
  const Fixture f(Vec3(0.01, 0.0, 0.05));
  ControllerConfig c;
  c.num_candidates = 1;
  Rng a(8), b(8);
  const Selection s = select_action(oracle_distance(), f.obs(), c, a);
  CHECK(s.action == sample_candidates(1, c.bound, b)[0]);
}

TEST_CASE("predictor output size is checked") {
  const Fixture f(Vec3(0.01, 0.0, 0.05));
  const DistanceFn short_fn = [](const Observation&, std::span<const Action>) { return std::vector<double>(3, 0.0); };
  Rng rng(2);
  CHECK_THROWS_AS(select_action(short_fn, f.obs(), ControllerConfig{}, rng), ContractError);
}

TEST_CASE("candidates are uniform in the bound square") {
  const double bound = 0.03;
  const int n = 100000;
  Rng rng(12);
  const auto cands = sample_candidates(n, bound, rng);
  double sx = 0, sy = 0, sxx = 0, syy = 0;
  for (const auto& a : cands) {
    REQUIRE(std::abs(a.dx) <= bound);
    REQUIRE(std::abs(a.dy) <= bound);
    sx += a.dx;
    sy += a.dy;
    sxx += a.dx * a.dx;
    syy += a.dy * a.dy;
  }
  // Standard error of the mean of U(-b, b) is b / sqrt(3 n); allow 4 of them.
  const double se = bound / std::sqrt(3.0 * n);
  CHECK(std::abs(sx / n) < 4 * se);
  CHECK(std::abs(sy / n) < 4 * se);
  // Second moment b^2 / 3, whose standard error is b^2 * sqrt(4/45 / n).
  const double se2 = bound * bound * std::sqrt(4.0 / 45.0 / n);
  CHECK(std::abs(sxx / n - bound * bound / 3) < 4 * se2);
  CHECK(std::abs(syy / n - bound * bound / 3) < 4 * se2);
}

TEST_CASE("argmin: invariant under shifts, lowest index on ties") {
  std::vector<double> v{0.3, 0.1, 0.5, 0.1, 0.2};
  CHECK(argmin(v) == 1);
  std::vector<double> shifted = v;
  for (double& x : shifted) x += 7.25;
  CHECK(argmin(shifted) == 1);
  CHECK(argmin(std::vector<double>{2.0}) == 0);
}

TEST_CASE("capping and the success rule") {
  ControllerConfig c;
  CHECK(score_trial(0.05, c).capped_distance == 0.03);
  CHECK_FALSE(score_trial(0.05, c).success);
  CHECK(score_trial(0.02, c).capped_distance == 0.02);
  CHECK(score_trial(0.01, c).success);
  CHECK_FALSE(score_trial(std::nextafter(0.01, 1.0), c).success);
  const auto s = summarize({score_trial(0.0, c), score_trial(0.01, c), score_trial(0.02, c), score_trial(0.5, c)}, c);
  CHECK(s.mean_capped_distance == doctest::Approx(0.015).epsilon(1e-15));
  CHECK(s.success_rate == 0.5);
  CHECK_THROWS_AS(summarize({}, c), ContractError);
}

TEST_CASE("oracle trial: trajectory shape and distance never grows past sampling resolution") {
  ControllerConfig c;
  for (std::uint64_t seed = 0; seed < 8; ++seed) {
    Rng rng(seed);
    const TrialResult r = run_trial(oracle_distance(), clean_env(), c, rng);
    REQUIRE(r.trajectory.size() == static_cast<std::size_t>(c.iterations + 1));
    REQUIRE(r.steps.size() == static_cast<std::size_t>(c.iterations));
    for (std::size_t k = 1; k < r.trajectory.size(); ++k)
      CHECK(r.trajectory[k].z() == doctest::Approx(r.trajectory[k - 1].z() - c.descent).epsilon(1e-14));
    double prev = 1e9;
    for (const auto& s : r.steps) {
      CHECK(s.predicted == doctest::Approx(s.true_distance).epsilon(1e-12));
      // A better candidate may be missing once the hand is within the candidate spacing.
      CHECK(s.true_distance <= std::max(prev, 0.005));
      prev = s.true_distance;
    }
    CHECK(r.raw_distance == doctest::Approx(r.steps.back().true_distance).epsilon(1e-12));
  }
}

TEST_CASE("zero-displacement controller ends at the initial offset") {
  ControllerConfig c;
  c.bound = 1e-12;
  Rng rng(3);
  const TrialResult r = run_trial(constant(0.0), clean_env(), c, rng);
  const Vec3 d0 = r.trajectory.front();
  const Vec3 d1 = r.trajectory.back();
  CHECK(std::abs(d1.x() - d0.x()) < 1e-10);
  CHECK(std::abs(d1.y() - d0.y()) < 1e-10);
  CHECK(d1.z() == doctest::Approx(d0.z() - c.iterations * c.descent).epsilon(1e-14));
  CHECK(r.capped_distance == std::min(r.raw_distance, c.distance_cap));
}

TEST_CASE("tiny offsets with tiny actions always succeed") {
  ControllerConfig c;
  c.bound = 1e-5;
  c.init_half_width = 1e-4;
  c.trials = 6;
  const auto s = evaluate(constant(0.0), clean_env(), c, 4);
  CHECK(s.success_rate == 1.0);
  CHECK(s.mean_capped_distance < 2e-4);
}

TEST_CASE("a controller that flees the goal is fully capped") {
  ControllerConfig c;
  c.trials = 6;
  const DistanceFn flee = [](const Observation& o, std::span<const Action> a) {
    auto d = oracle_distance()(o, a);
    for (double& x : d) x = -x;
    return d;
  };
  const auto s = evaluate(flee, clean_env(), c, 9);
  for (const auto& t : s.trials) REQUIRE(t.raw_distance >= c.distance_cap);
  CHECK(s.mean_capped_distance == 0.03);
  CHECK(s.success_rate == 0.0);
}

TEST_CASE("oracle evaluation succeeds in nearly every cluttered trial") {
  Environment env;
  env.domain = scene::DomainModel::target_default();
  const auto s = evaluate(oracle_distance(), env, ControllerConfig{}, 21);
  CHECK(s.success_rate >= 0.95);
  CHECK(s.mean_capped_distance < 0.005);
}

TEST_CASE("evaluation is deterministic and thread-count independent") {
  ControllerConfig c;
  c.trials = 5;
  c.num_candidates = 200;
  const auto a = evaluate(oracle_distance(), Environment{}, c, 17, 1);
  const auto b = evaluate(oracle_distance(), Environment{}, c, 17, 3);
  CHECK(trajectory_csv(a) == trajectory_csv(b));
  CHECK(a.mean_capped_distance == b.mean_capped_distance);
  const auto other = evaluate(oracle_distance(), Environment{}, c, 18, 1);
  CHECK(trajectory_csv(a) != trajectory_csv(other));
}

TEST_CASE("trajectory CSV has one row per position") {
  ControllerConfig c;
  c.trials = 2;
  c.num_candidates = 50;
  const auto s = evaluate(oracle_distance(), Environment{}, c, 1);
  const std::string csv = trajectory_csv(s);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 1 + 2 * (c.iterations + 1));
  CHECK(csv.rfind("trial,step,x,y,z,predicted,true_distance\n", 0) == 0);
  // Final positions carry no metrics.
  CHECK(csv.find(",,\n") != std::string::npos);
}

TEST_CASE("network predictor agrees with direct prediction") {
  nn::Architecture arch;
  arch.conv1_channels = arch.conv2_channels = arch.conv3_channels = 2;
  arch.dense1 = arch.dense2 = 4;
  Rng rng(6);
  const auto params = nn::init_params(arch, rng);
  const Fixture f(Vec3(0.01, 0.0, 0.05));
  Rng cr(1);
  const auto cands = sample_candidates(7, 0.03, cr);
  CHECK(network_distance(params)(f.obs(), cands) == nn::predict(params, f.image, cands));
}

TEST_CASE("controller config validation") {
  ControllerConfig c;
  c.num_candidates = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ControllerConfig{};
  c.success_threshold = 0.05;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c = ControllerConfig{};
  c.descent = 0.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}
